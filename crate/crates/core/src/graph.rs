//! Clique forests, the clique-expansion operator, and validators for the
//! chordal structures they induce.
//!
//! A [`CliqueForest`] is only ever grown through [`CliqueForest::clique_expand`]
//! (or loaded from an explicit, validated list of cliques). The validators in
//! this module (`is_chordal`, `validate_perfect_sequence`,
//! `is_perfect_elimination_order`) deliberately work from the raw graph or clique
//! list rather than from the forest's own bookkeeping, so they can be used to
//! check it.

use std::collections::BTreeSet;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Internal 0-based vertex index.
pub type VertexId = usize;

/// A sorted set of distinct vertices.
#[derive(Clone, Debug, Default, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct VertexSet(Vec<VertexId>);

/// Maximal complete subset of the graph. Never empty.
pub type Clique = VertexSet;

/// Intersection of two adjacent cliques. May be empty.
pub type Separator = VertexSet;

impl VertexSet {
    pub fn new(members: impl IntoIterator<Item = VertexId>) -> Self {
        let mut v: Vec<VertexId> = members.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        VertexSet(v)
    }

    pub fn empty() -> Self {
        VertexSet(Vec::new())
    }

    pub fn singleton(v: VertexId) -> Self {
        VertexSet(vec![v])
    }

    pub fn members(&self) -> &[VertexId] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, v: VertexId) -> bool {
        self.0.binary_search(&v).is_ok()
    }

    pub fn is_subset_of(&self, other: &VertexSet) -> bool {
        is_sorted_subset(&self.0, &other.0)
    }

    pub fn intersection(&self, other: &VertexSet) -> VertexSet {
        VertexSet(sorted_intersection(&self.0, &other.0))
    }

    pub fn insert(&mut self, v: VertexId) -> bool {
        match self.0.binary_search(&v) {
            Ok(_) => false,
            Err(pos) => {
                self.0.insert(pos, v);
                true
            }
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = VertexId> + '_ {
        self.0.iter().copied()
    }

    pub fn into_vec(self) -> Vec<VertexId> {
        self.0
    }
}

impl From<Vec<VertexId>> for VertexSet {
    fn from(v: Vec<VertexId>) -> Self {
        VertexSet::new(v)
    }
}

impl<const N: usize> From<[VertexId; N]> for VertexSet {
    fn from(v: [VertexId; N]) -> Self {
        VertexSet::new(v)
    }
}

impl fmt::Display for VertexSet {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, v) in self.0.iter().enumerate() {
            if i > 0 {
                write!(f, ",")?;
            }
            write!(f, "{v}")?;
        }
        write!(f, "}}")
    }
}

fn is_sorted_subset(small: &[VertexId], big: &[VertexId]) -> bool {
    let mut it = big.iter();
    'outer: for s in small {
        for b in it.by_ref() {
            if b == s {
                continue 'outer;
            }
            if b > s {
                return false;
            }
        }
        return false;
    }
    true
}

fn sorted_intersection(a: &[VertexId], b: &[VertexId]) -> Vec<VertexId> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() && j < b.len() {
        match a[i].cmp(&b[j]) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                out.push(a[i]);
                i += 1;
                j += 1;
            }
        }
    }
    out
}

/// Edge of the clique forest: `child` hangs off `parent` through `separators[separator]`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct TreeEdge {
    pub parent: usize,
    pub child: usize,
    pub separator: usize,
}

/// Which of the three clique-expansion outcomes happened.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExpansionKind {
    /// Separator was a proper non-empty subset: a new clique `S ∪ {v}` was appended.
    NewClique,
    /// Separator was the whole source clique: it grew in place.
    Extended,
    /// Separator was empty: `{v}` became a new tree root.
    Disconnected,
}

/// Result of a single clique expansion.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Expansion {
    pub kind: ExpansionKind,
    /// Index of the clique that now contains the vertex.
    pub clique: usize,
}

/// A clique forest over `p` vertices, built incrementally.
#[derive(Clone, Debug, PartialEq)]
pub struct CliqueForest {
    p: usize,
    cliques: Vec<Clique>,
    separators: Vec<Separator>,
    tree: Vec<TreeEdge>,
    vertex_order: Vec<VertexId>,
    placed: Vec<bool>,
    labels: Option<Vec<String>>,
}

impl CliqueForest {
    /// An empty forest over `p` isolated vertices.
    pub fn new(p: usize) -> Self {
        CliqueForest {
            p,
            cliques: Vec::new(),
            separators: Vec::new(),
            tree: Vec::new(),
            vertex_order: Vec::new(),
            placed: vec![false; p],
            labels: None,
        }
    }

    /// Builds a forest from an explicit clique list, which must be a perfect sequence.
    ///
    /// When `separators` is `None` they are derived as `C_i ∩ (C_1 ∪ … ∪ C_{i-1})`
    /// for every clique whose intersection with its history is non-empty. Given
    /// separators are trusted once the sequence itself validates; each must be a
    /// subset of some earlier clique and of the clique it attaches.
    pub fn from_cliques(
        p: usize,
        cliques: Vec<Clique>,
        separators: Option<Vec<Separator>>,
    ) -> Result<Self> {
        let mut seen = vec![false; p];
        for (i, c) in cliques.iter().enumerate() {
            if c.is_empty() {
                return Err(Error::InvalidInitialCliques(format!("clique {i} is empty")));
            }
            for v in c.iter() {
                if v >= p {
                    return Err(Error::VertexOutOfRange { vertex: v, p });
                }
            }
        }
        if let Some(i) = perfect_sequence_violation(&cliques) {
            return Err(Error::InvalidInitialCliques(format!(
                "clique {i} breaks the running intersection property"
            )));
        }
        for (i, a) in cliques.iter().enumerate() {
            for (j, b) in cliques.iter().enumerate() {
                if i != j && a.is_subset_of(b) {
                    return Err(Error::InvalidInitialCliques(format!(
                        "clique {i} is contained in clique {j}"
                    )));
                }
            }
        }

        let mut forest = CliqueForest::new(p);
        // Residual vertices of each clique, in clique order, give a reverse
        // perfect elimination order.
        for c in &cliques {
            for v in c.iter() {
                if !seen[v] {
                    seen[v] = true;
                    forest.vertex_order.push(v);
                    forest.placed[v] = true;
                }
            }
        }

        let seps: Vec<(usize, Separator)> = match separators {
            Some(given) => {
                let mut out = Vec::with_capacity(given.len());
                for s in given {
                    // attach each separator to the first clique after the earliest
                    // one containing it that also contains it
                    let child = (1..cliques.len()).find(|&k| {
                        s.is_subset_of(&cliques[k])
                            && (0..k).any(|j| s.is_subset_of(&cliques[j]))
                            && !out.iter().any(|(c, _): &(usize, Separator)| *c == k)
                    });
                    match child {
                        Some(k) => out.push((k, s)),
                        None => {
                            return Err(Error::InvalidInitialCliques(format!(
                                "separator {s} does not join any pair of cliques"
                            )))
                        }
                    }
                }
                out
            }
            None => {
                let mut out = Vec::new();
                let mut history = VertexSet::empty();
                for (k, c) in cliques.iter().enumerate() {
                    let s = c.intersection(&history);
                    if k > 0 && !s.is_empty() {
                        out.push((k, s));
                    }
                    for v in c.iter() {
                        history.insert(v);
                    }
                }
                out
            }
        };

        forest.cliques = cliques;
        for (child, s) in seps {
            let parent = forest
                .cliques
                .iter()
                .position(|c| s.is_subset_of(c))
                .expect("separator checked against earlier cliques");
            let idx = forest.separators.len();
            forest.separators.push(s);
            forest.tree.push(TreeEdge { parent, child, separator: idx });
        }
        Ok(forest)
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn cliques(&self) -> &[Clique] {
        &self.cliques
    }

    pub fn separators(&self) -> &[Separator] {
        &self.separators
    }

    pub fn tree(&self) -> &[TreeEdge] {
        &self.tree
    }

    pub fn vertex_order(&self) -> &[VertexId] {
        &self.vertex_order
    }

    pub fn labels(&self) -> Option<&[String]> {
        self.labels.as_deref()
    }

    pub fn set_labels(&mut self, labels: Option<Vec<String>>) {
        self.labels = labels;
    }

    pub fn is_placed(&self, v: VertexId) -> bool {
        self.placed.get(v).copied().unwrap_or(false)
    }

    pub fn num_placed(&self) -> usize {
        self.vertex_order.len()
    }

    pub fn is_complete(&self) -> bool {
        self.vertex_order.len() == self.p
    }

    /// Vertices not yet in any clique, ascending.
    pub fn outstanding(&self) -> impl Iterator<Item = VertexId> + '_ {
        (0..self.p).filter(move |&v| !self.placed[v])
    }

    /// Attaches the isolated `vertex` to `separator ⊆ cliques[source]`.
    ///
    /// The source index is ignored when the separator is empty, so the first
    /// vertex of an empty forest can be placed with any source.
    pub fn clique_expand(
        &mut self,
        source: usize,
        vertex: VertexId,
        separator: &Separator,
    ) -> Result<Expansion> {
        if vertex >= self.p {
            return Err(Error::VertexOutOfRange { vertex, p: self.p });
        }
        if self.placed[vertex] {
            return Err(Error::VertexNotIsolated(vertex));
        }

        let expansion = if separator.is_empty() {
            self.cliques.push(VertexSet::singleton(vertex));
            Expansion {
                kind: ExpansionKind::Disconnected,
                clique: self.cliques.len() - 1,
            }
        } else {
            let src = self
                .cliques
                .get(source)
                .ok_or(Error::CliqueOutOfRange(source))?;
            if !separator.is_subset_of(src) {
                return Err(Error::InvalidSeparator {
                    clique: source,
                    separator: separator.members().to_vec(),
                });
            }
            if separator.len() == src.len() {
                self.cliques[source].insert(vertex);
                Expansion {
                    kind: ExpansionKind::Extended,
                    clique: source,
                }
            } else {
                let parent = self
                    .cliques
                    .iter()
                    .position(|c| separator.is_subset_of(c))
                    .expect("source clique contains the separator");
                let mut new_clique = separator.clone();
                new_clique.insert(vertex);
                self.cliques.push(new_clique);
                let child = self.cliques.len() - 1;
                self.separators.push(separator.clone());
                self.tree.push(TreeEdge {
                    parent,
                    child,
                    separator: self.separators.len() - 1,
                });
                Expansion {
                    kind: ExpansionKind::NewClique,
                    clique: child,
                }
            }
        };
        self.placed[vertex] = true;
        self.vertex_order.push(vertex);
        Ok(expansion)
    }

    /// Union of the complete graphs on every clique.
    pub fn to_adjacency(&self) -> AdjacencyView {
        let mut g = AdjacencyView::new(self.p);
        for c in &self.cliques {
            let m = c.members();
            for (i, &a) in m.iter().enumerate() {
                for &b in &m[i + 1..] {
                    g.add_edge(a, b);
                }
            }
        }
        g
    }

    /// Reverse of the insertion order: a perfect elimination order of the
    /// induced chordal graph.
    pub fn perfect_elimination_order(&self) -> Result<Vec<VertexId>> {
        if !self.is_complete() {
            return Err(Error::IncompleteForest {
                placed: self.num_placed(),
                p: self.p,
            });
        }
        Ok(self.vertex_order.iter().rev().copied().collect())
    }

    /// Runs every structural check and reports the first violation found.
    pub fn check(&self) -> std::result::Result<(), ForestViolation> {
        for (i, c) in self.cliques.iter().enumerate() {
            if c.is_empty() {
                return Err(ForestViolation::EmptyClique(i));
            }
            if let Some(v) = c.iter().find(|&v| v >= self.p) {
                return Err(ForestViolation::VertexOutOfRange { clique: i, vertex: v });
            }
        }
        for (i, a) in self.cliques.iter().enumerate() {
            for (j, b) in self.cliques.iter().enumerate() {
                if i != j && a.is_subset_of(b) {
                    return Err(ForestViolation::NonMaximalClique { clique: i, within: j });
                }
            }
        }
        if let Some(i) = perfect_sequence_violation(&self.cliques) {
            return Err(ForestViolation::RunningIntersection(i));
        }
        if self.tree.len() != self.separators.len() {
            return Err(ForestViolation::TreeShape(format!(
                "{} tree edges for {} separators",
                self.tree.len(),
                self.separators.len()
            )));
        }
        let mut has_parent = vec![false; self.cliques.len()];
        for (e, edge) in self.tree.iter().enumerate() {
            let n = self.cliques.len();
            if edge.parent >= n || edge.child >= n || edge.separator >= self.separators.len() {
                return Err(ForestViolation::TreeShape(format!("tree edge {e} has a dangling index")));
            }
            if edge.parent >= edge.child {
                return Err(ForestViolation::TreeShape(format!(
                    "tree edge {e}: parent {} does not precede child {}",
                    edge.parent, edge.child
                )));
            }
            if std::mem::replace(&mut has_parent[edge.child], true) {
                return Err(ForestViolation::TreeShape(format!(
                    "clique {} has more than one parent",
                    edge.child
                )));
            }
            let inter = self.cliques[edge.parent].intersection(&self.cliques[edge.child]);
            if inter != self.separators[edge.separator] {
                return Err(ForestViolation::SeparatorMismatch { edge: e });
            }
        }
        // Clique-intersection property: the cliques holding any vertex form a
        // connected subtree.
        for v in 0..self.p {
            let holders = self.cliques.iter().filter(|c| c.contains(v)).count();
            let links = self
                .tree
                .iter()
                .filter(|e| self.cliques[e.parent].contains(v) && self.cliques[e.child].contains(v))
                .count();
            if holders > 0 && links + 1 != holders {
                return Err(ForestViolation::CliqueIntersection(v));
            }
        }
        let mut seen = vec![false; self.p];
        for &v in &self.vertex_order {
            if v >= self.p || std::mem::replace(&mut seen[v], true) {
                return Err(ForestViolation::VertexOrder(format!("vertex {v} repeated or out of range")));
            }
            if !self.cliques.iter().any(|c| c.contains(v)) {
                return Err(ForestViolation::VertexOrder(format!("vertex {v} is in no clique")));
            }
        }
        let covered = (0..self.p).filter(|&v| self.cliques.iter().any(|c| c.contains(v))).count();
        if covered != self.vertex_order.len() {
            return Err(ForestViolation::VertexOrder(
                "vertex order does not list every placed vertex".into(),
            ));
        }
        let adj = self.to_adjacency();
        let order: Vec<VertexId> = self.vertex_order.iter().rev().copied().collect();
        if let Some(v) = first_non_simplicial(&adj, &order) {
            return Err(ForestViolation::NotSimplicial(v));
        }
        if !is_chordal(&adj) {
            return Err(ForestViolation::NotChordal);
        }
        Ok(())
    }

    pub fn to_json(&self) -> ForestJson {
        ForestJson {
            p: self.p,
            cliques: self.cliques.iter().map(|c| c.members().to_vec()).collect(),
            separators: self.separators.iter().map(|s| s.members().to_vec()).collect(),
            tree: self.tree.iter().map(|e| [e.parent, e.child, e.separator]).collect(),
            vertex_order: self.vertex_order.clone(),
            labels: self.labels.clone(),
        }
    }

    /// Rebuilds a forest from its serialized form without running the
    /// structural checks; call [`CliqueForest::check`] to validate.
    pub fn from_json(json: ForestJson) -> Result<Self> {
        let p = json.p;
        let mut placed = vec![false; p];
        for &v in &json.vertex_order {
            if v >= p {
                return Err(Error::VertexOutOfRange { vertex: v, p });
            }
            placed[v] = true;
        }
        if let Some(labels) = &json.labels {
            if labels.len() != p {
                return Err(Error::Parse(format!("{} labels for p = {p}", labels.len())));
            }
        }
        Ok(CliqueForest {
            p,
            cliques: json.cliques.into_iter().map(VertexSet::from).collect(),
            separators: json.separators.into_iter().map(VertexSet::from).collect(),
            tree: json
                .tree
                .into_iter()
                .map(|[parent, child, separator]| TreeEdge { parent, child, separator })
                .collect(),
            vertex_order: json.vertex_order,
            placed,
            labels: json.labels,
        })
    }
}

/// On-disk forest format shared by the CLI subcommands.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ForestJson {
    pub p: usize,
    pub cliques: Vec<Vec<VertexId>>,
    pub separators: Vec<Vec<VertexId>>,
    pub tree: Vec<[usize; 3]>,
    pub vertex_order: Vec<VertexId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub labels: Option<Vec<String>>,
}

/// First structural invariant a forest fails.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ForestViolation {
    EmptyClique(usize),
    VertexOutOfRange { clique: usize, vertex: VertexId },
    NonMaximalClique { clique: usize, within: usize },
    RunningIntersection(usize),
    TreeShape(String),
    SeparatorMismatch { edge: usize },
    CliqueIntersection(VertexId),
    VertexOrder(String),
    NotSimplicial(VertexId),
    NotChordal,
}

impl fmt::Display for ForestViolation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ForestViolation::EmptyClique(i) => write!(f, "clique {i} is empty"),
            ForestViolation::VertexOutOfRange { clique, vertex } => {
                write!(f, "clique {clique} contains out-of-range vertex {vertex}")
            }
            ForestViolation::NonMaximalClique { clique, within } => {
                write!(f, "clique {clique} is not maximal (contained in clique {within})")
            }
            ForestViolation::RunningIntersection(i) => {
                write!(f, "running intersection property fails at clique {i}")
            }
            ForestViolation::TreeShape(msg) => write!(f, "malformed tree: {msg}"),
            ForestViolation::SeparatorMismatch { edge } => {
                write!(f, "separator of tree edge {edge} is not the intersection of its cliques")
            }
            ForestViolation::CliqueIntersection(v) => {
                write!(f, "cliques containing vertex {v} are not connected in the tree")
            }
            ForestViolation::VertexOrder(msg) => write!(f, "bad vertex order: {msg}"),
            ForestViolation::NotSimplicial(v) => {
                write!(f, "vertex {v} is not simplicial at its elimination step")
            }
            ForestViolation::NotChordal => write!(f, "graph is not chordal"),
        }
    }
}

/// Undirected simple graph on `p` vertices.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct AdjacencyView {
    p: usize,
    edges: BTreeSet<(VertexId, VertexId)>,
}

impl AdjacencyView {
    pub fn new(p: usize) -> Self {
        AdjacencyView { p, edges: BTreeSet::new() }
    }

    pub fn from_edges(p: usize, edges: impl IntoIterator<Item = (VertexId, VertexId)>) -> Self {
        let mut g = AdjacencyView::new(p);
        for (a, b) in edges {
            g.add_edge(a, b);
        }
        g
    }

    /// Adds `{a, b}`; self-loops are ignored.
    pub fn add_edge(&mut self, a: VertexId, b: VertexId) {
        assert!(a < self.p && b < self.p, "edge ({a}, {b}) out of range");
        if a != b {
            self.edges.insert((a.min(b), a.max(b)));
        }
    }

    pub fn p(&self) -> usize {
        self.p
    }

    pub fn has_edge(&self, a: VertexId, b: VertexId) -> bool {
        self.edges.contains(&(a.min(b), a.max(b)))
    }

    pub fn num_edges(&self) -> usize {
        self.edges.len()
    }

    pub fn edges(&self) -> impl Iterator<Item = (VertexId, VertexId)> + '_ {
        self.edges.iter().copied()
    }

    /// Sorted neighbour lists.
    pub fn neighbours(&self) -> Vec<Vec<VertexId>> {
        let mut nb = vec![Vec::new(); self.p];
        for &(a, b) in &self.edges {
            nb[a].push(b);
            nb[b].push(a);
        }
        for l in &mut nb {
            l.sort_unstable();
        }
        nb
    }
}

/// Maximum cardinality search order, ties broken by lowest vertex index.
pub fn mcs_order(g: &AdjacencyView) -> Vec<VertexId> {
    let nb = g.neighbours();
    let p = g.p();
    let mut weight = vec![0usize; p];
    let mut visited = vec![false; p];
    let mut order = Vec::with_capacity(p);
    for _ in 0..p {
        let mut best: Option<VertexId> = None;
        for v in 0..p {
            if !visited[v] && best.is_none_or(|b| weight[v] > weight[b]) {
                best = Some(v);
            }
        }
        let v = best.expect("unvisited vertex remains");
        visited[v] = true;
        order.push(v);
        for &u in &nb[v] {
            if !visited[u] {
                weight[u] += 1;
            }
        }
    }
    order
}

/// Chordality test: maximum cardinality search followed by the zero fill-in
/// check on the reversed visiting order.
pub fn is_chordal(g: &AdjacencyView) -> bool {
    let nb = g.neighbours();
    let order = mcs_order(g);
    let mut position = vec![0usize; g.p()];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    // For each vertex, its earlier-visited neighbours minus the latest of them
    // must all be adjacent to that latest one.
    for &v in &order {
        let earlier: Vec<VertexId> =
            nb[v].iter().copied().filter(|&u| position[u] < position[v]).collect();
        let Some(&follower) = earlier.iter().max_by_key(|&&u| position[u]) else {
            continue;
        };
        for &u in &earlier {
            if u != follower && nb[follower].binary_search(&u).is_err() {
                return false;
            }
        }
    }
    true
}

/// First vertex in `order` whose neighbours among the vertices after it are
/// not pairwise adjacent; `None` if `order` is a perfect elimination order.
pub fn first_non_simplicial(g: &AdjacencyView, order: &[VertexId]) -> Option<VertexId> {
    let nb = g.neighbours();
    let mut position = vec![usize::MAX; g.p()];
    for (i, &v) in order.iter().enumerate() {
        position[v] = i;
    }
    for (i, &v) in order.iter().enumerate() {
        let later: Vec<VertexId> = nb[v].iter().copied().filter(|&u| position[u] > i).collect();
        for (k, &a) in later.iter().enumerate() {
            for &b in &later[k + 1..] {
                if !g.has_edge(a, b) {
                    return Some(v);
                }
            }
        }
    }
    None
}

/// True iff every vertex of `order` is simplicial in the subgraph induced by
/// itself and the vertices after it.
pub fn is_perfect_elimination_order(g: &AdjacencyView, order: &[VertexId]) -> bool {
    order.len() == g.p() && first_non_simplicial(g, order).is_none()
}

/// Index of the first clique whose intersection with the union of its
/// predecessors is not contained in a single predecessor.
pub fn perfect_sequence_violation(cliques: &[Clique]) -> Option<usize> {
    let mut history = VertexSet::empty();
    for (i, c) in cliques.iter().enumerate() {
        if i > 0 {
            let inter = c.intersection(&history);
            if !cliques[..i].iter().any(|prev| inter.is_subset_of(prev)) {
                return Some(i);
            }
        }
        for v in c.iter() {
            history.insert(v);
        }
    }
    None
}

/// Running intersection property of the forest's clique insertion order.
pub fn validate_perfect_sequence(forest: &CliqueForest) -> bool {
    perfect_sequence_violation(forest.cliques()).is_none()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fig2_seed() -> CliqueForest {
        // 1-based figure labels shifted down by one: {1,2,3,4} -> {0,1,2,3}
        let mut f = CliqueForest::new(5);
        f.clique_expand(0, 0, &VertexSet::empty()).unwrap();
        for v in 1..4 {
            let sep = f.cliques()[0].clone();
            f.clique_expand(0, v, &sep).unwrap();
        }
        f
    }

    #[test]
    fn expand_general_case_creates_clique_and_separator() {
        let mut f = fig2_seed();
        let e = f.clique_expand(0, 4, &VertexSet::from([0, 1])).unwrap();
        assert_eq!(e.kind, ExpansionKind::NewClique);
        assert_eq!(f.cliques()[1], VertexSet::from([0, 1, 4]));
        assert_eq!(f.separators(), &[VertexSet::from([0, 1])]);
        assert_eq!(f.tree(), &[TreeEdge { parent: 0, child: 1, separator: 0 }]);
        assert!(validate_perfect_sequence(&f));
        assert_eq!(f.perfect_elimination_order().unwrap(), vec![4, 3, 2, 1, 0]);
    }

    #[test]
    fn expand_isolated_case_creates_root() {
        let mut f = fig2_seed();
        let e = f.clique_expand(0, 4, &VertexSet::empty()).unwrap();
        assert_eq!(e.kind, ExpansionKind::Disconnected);
        assert_eq!(f.cliques().len(), 2);
        assert_eq!(f.cliques()[1], VertexSet::singleton(4));
        assert!(f.separators().is_empty());
        assert!(f.tree().is_empty());
    }

    #[test]
    fn expand_full_case_grows_in_place() {
        let mut f = fig2_seed();
        let e = f.clique_expand(0, 4, &VertexSet::from([0, 1, 2, 3])).unwrap();
        assert_eq!(e.kind, ExpansionKind::Extended);
        assert_eq!(f.cliques(), &[VertexSet::from([0, 1, 2, 3, 4])]);
        assert!(f.separators().is_empty());
    }

    #[test]
    fn expand_errors() {
        let mut f = fig2_seed();
        assert!(matches!(
            f.clique_expand(0, 2, &VertexSet::from([0])),
            Err(Error::VertexNotIsolated(2))
        ));
        assert!(matches!(
            f.clique_expand(0, 4, &VertexSet::from([0, 7])),
            Err(Error::InvalidSeparator { .. })
        ));
        assert!(matches!(
            f.clique_expand(3, 4, &VertexSet::from([0])),
            Err(Error::CliqueOutOfRange(3))
        ));
    }

    #[test]
    fn parent_is_earliest_clique_containing_separator() {
        let mut f = CliqueForest::new(5);
        f.clique_expand(0, 0, &VertexSet::empty()).unwrap();
        f.clique_expand(0, 1, &VertexSet::from([0])).unwrap();
        f.clique_expand(0, 2, &VertexSet::from([0])).unwrap(); // {0,2}
        f.clique_expand(1, 3, &VertexSet::from([0])).unwrap(); // source {0,2}
        assert_eq!(f.tree()[1].parent, 0);
        assert_eq!(f.tree()[1].child, 2);
        f.check().unwrap();
    }

    #[test]
    fn adjacency_examples() {
        let f = CliqueForest::from_cliques(3, vec![VertexSet::from([0, 1, 2])], None).unwrap();
        let edges: Vec<_> = f.to_adjacency().edges().collect();
        assert_eq!(edges, vec![(0, 1), (0, 2), (1, 2)]);

        let f = CliqueForest::from_cliques(4, vec![[0, 1].into(), [2, 3].into()], None).unwrap();
        let edges: Vec<_> = f.to_adjacency().edges().collect();
        assert_eq!(edges, vec![(0, 1), (2, 3)]);
        assert!(f.separators().is_empty());

        let f = CliqueForest::from_cliques(4, vec![[0, 1, 2].into(), [1, 2, 3].into()], None).unwrap();
        let g = f.to_adjacency();
        assert_eq!(g.num_edges(), 5);
        assert!(!g.has_edge(0, 3));
    }

    #[test]
    fn chordality_examples() {
        let k5 = AdjacencyView::from_edges(
            5,
            (0..5).flat_map(|a| (a + 1..5).map(move |b| (a, b))),
        );
        assert!(is_chordal(&k5));
        let c4 = AdjacencyView::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0)]);
        assert!(!is_chordal(&c4));
        let c4_chord = AdjacencyView::from_edges(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)]);
        assert!(is_chordal(&c4_chord));
        let c5_one_chord =
            AdjacencyView::from_edges(5, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 0), (0, 2)]);
        assert!(!is_chordal(&c5_one_chord));
        assert!(is_chordal(&AdjacencyView::new(0)));
    }

    #[test]
    fn perfect_sequence_examples() {
        let bad: Vec<Clique> = vec![[1, 2].into(), [3, 4].into(), [1, 3].into()];
        assert_eq!(perfect_sequence_violation(&bad), Some(2));
        assert!(CliqueForest::from_cliques(5, bad, None).is_err());
        let single = CliqueForest::from_cliques(3, vec![[0, 1, 2].into()], None).unwrap();
        assert!(validate_perfect_sequence(&single));
    }

    #[test]
    fn elimination_order_of_single_clique() {
        let f = CliqueForest::from_cliques(3, vec![[0, 1, 2].into()], None).unwrap();
        let order = f.perfect_elimination_order().unwrap();
        assert_eq!(order, vec![2, 1, 0]);
        assert!(is_perfect_elimination_order(&f.to_adjacency(), &order));
    }

    #[test]
    fn elimination_order_requires_complete_forest() {
        let f = CliqueForest::from_cliques(4, vec![[0, 1].into()], None).unwrap();
        assert!(matches!(
            f.perfect_elimination_order(),
            Err(Error::IncompleteForest { placed: 2, p: 4 })
        ));
    }

    #[test]
    fn non_peo_detected() {
        // path 0-1-2: eliminating 1 first leaves 0 and 2 non-adjacent
        let g = AdjacencyView::from_edges(3, [(0, 1), (1, 2)]);
        assert!(!is_perfect_elimination_order(&g, &[1, 0, 2]));
        assert!(is_perfect_elimination_order(&g, &[0, 1, 2]));
    }

    #[test]
    fn check_reports_mutations() {
        let mut json = fig2_seed().to_json();
        json.p = 6;
        json.cliques.push(vec![0, 1, 4]);
        json.separators.push(vec![0, 1]);
        json.tree.push([0, 1, 0]);
        json.vertex_order.push(4);
        json.cliques.push(vec![4, 5]);
        json.separators.push(vec![4]);
        json.tree.push([1, 2, 1]);
        json.vertex_order.push(5);
        assert_eq!(CliqueForest::from_json(json.clone()).unwrap().check(), Ok(()));

        let mut broken = json.clone();
        broken.cliques[2] = vec![2, 4, 5];
        let err = CliqueForest::from_json(broken).unwrap().check().unwrap_err();
        assert_eq!(err, ForestViolation::RunningIntersection(2));

        let mut broken = json;
        broken.separators[1] = vec![5];
        let err = CliqueForest::from_json(broken).unwrap().check().unwrap_err();
        assert_eq!(err, ForestViolation::SeparatorMismatch { edge: 1 });
    }

    #[test]
    fn initial_cliques_with_given_separators() {
        let cliques: Vec<Clique> = vec![[0, 1, 2].into(), [1, 2, 3].into(), [2, 4].into()];
        let seps: Vec<Separator> = vec![[1, 2].into(), [2].into()];
        let f = CliqueForest::from_cliques(5, cliques, Some(seps)).unwrap();
        assert_eq!(f.tree().len(), 2);
        assert_eq!(f.tree()[1], TreeEdge { parent: 0, child: 2, separator: 1 });
        f.check().unwrap();
    }

    #[test]
    fn json_round_trip_is_identity() {
        let mut f = fig2_seed();
        f.clique_expand(0, 4, &VertexSet::from([2, 3])).unwrap();
        f.set_labels(Some((0..5).map(|i| format!("x{i}")).collect()));
        let text = serde_json::to_string(&f.to_json()).unwrap();
        let back = CliqueForest::from_json(serde_json::from_str(&text).unwrap()).unwrap();
        assert_eq!(back, f);
    }
}
