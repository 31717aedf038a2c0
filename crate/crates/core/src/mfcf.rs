//! The greedy clique-forest builder.
//!
//! Starting from a seed clique (or a user-supplied perfect sequence of
//! cliques), every outstanding vertex is attached by the clique expansion
//! with the highest gain until none remain. Gains for every
//! (clique, outstanding vertex) pair are cached in a gain table that is
//! updated incrementally after each expansion.

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{
    GainConfig, GainFunction, GainMode, GaussianGain, Scored, SeparatorBounds, SimilarityGain,
    ValidatedGaussianGain,
};
use crate::gaussian::{sample_correlation, CorrelationMatrix};
use crate::graph::{Clique, CliqueForest, ExpansionKind, Separator, VertexId, VertexSet};

/// Data the structure is learned from.
#[derive(Clone, Debug)]
pub enum SimilarityInput {
    /// `n × p` observations, one row per observation.
    Data(DMatrix<f64>),
    /// `p × p` symmetric similarity or correlation matrix. `n_obs` is the
    /// sample size behind it, needed only by the validated gain.
    Similarity { matrix: DMatrix<f64>, n_obs: Option<usize> },
}

impl SimilarityInput {
    pub fn p(&self) -> usize {
        match self {
            SimilarityInput::Data(d) => d.ncols(),
            SimilarityInput::Similarity { matrix, .. } => matrix.nrows(),
        }
    }

    pub fn n_obs(&self) -> Option<usize> {
        match self {
            SimilarityInput::Data(d) => Some(d.nrows()),
            SimilarityInput::Similarity { n_obs, .. } => *n_obs,
        }
    }

    /// Correlation matrix of the input: the sample correlation for data, the
    /// matrix rescaled to unit diagonal otherwise.
    pub fn correlation(&self) -> Result<CorrelationMatrix> {
        match self {
            SimilarityInput::Data(d) => sample_correlation(d, None),
            SimilarityInput::Similarity { matrix, n_obs } => {
                CorrelationMatrix::from_covariance(matrix, *n_obs)
            }
        }
    }

    /// Weights for the similarity gain: the matrix (or sample correlation)
    /// with its diagonal set to zero.
    pub fn weights(&self) -> Result<DMatrix<f64>> {
        let mut w = match self {
            SimilarityInput::Data(d) => sample_correlation(d, None)?.into_inner(),
            SimilarityInput::Similarity { matrix, .. } => matrix.clone(),
        };
        crate::linalg::check_symmetric(&w)?;
        crate::linalg::symmetrize(&mut w);
        for i in 0..w.nrows() {
            w[(i, i)] = 0.0;
        }
        Ok(w)
    }
}

/// Builds the gain function selected by `cfg` for `input`.
pub fn build_gain(input: &SimilarityInput, cfg: &GainConfig) -> Result<Box<dyn GainFunction>> {
    cfg.validate()?;
    Ok(match cfg.mode {
        GainMode::Similarity => {
            Box::new(SimilarityGain::new(input.weights()?)?.with_threshold(cfg.similarity_threshold))
        }
        GainMode::GaussLoglik => Box::new(GaussianGain::new(input.correlation()?.into_inner())?),
        GainMode::GaussLoglikValidated => {
            let n = input.n_obs().ok_or_else(|| {
                Error::InvalidConfig("validated gain needs the number of observations".into())
            })?;
            Box::new(ValidatedGaussianGain::new(
                input.correlation()?.into_inner(),
                n,
                cfg.p_value,
            )?)
        }
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MfcfConfig {
    pub max_clique_size: usize,
    pub min_clique_size: usize,
    /// Whether a separator may be used by more than one expansion.
    pub reuse_separators: bool,
    pub initial_cliques: Option<Vec<Clique>>,
    pub initial_separators: Option<Vec<Separator>>,
    pub gain: GainConfig,
    /// Reserved for stochastic tie handling; the search itself is deterministic.
    pub seed: u64,
}

impl Default for MfcfConfig {
    fn default() -> Self {
        MfcfConfig {
            max_clique_size: 4,
            min_clique_size: 4,
            reuse_separators: true,
            initial_cliques: None,
            initial_separators: None,
            gain: GainConfig::default(),
            seed: 0,
        }
    }
}

impl MfcfConfig {
    /// Clique sizes fixed to `k` (min = max = k).
    pub fn fixed(k: usize, gain: GainConfig) -> Self {
        MfcfConfig { max_clique_size: k, min_clique_size: k, gain, ..Default::default() }
    }

    /// The planar special case: tetrahedra glued along triangles, each
    /// triangle used once.
    pub fn tmfg(gain: GainConfig) -> Self {
        MfcfConfig { reuse_separators: false, ..MfcfConfig::fixed(4, gain) }
    }

    pub fn with_mode(mut self, mode: GainMode) -> Self {
        self.gain.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.max_clique_size < 2 {
            return Err(Error::InvalidConfig(format!(
                "max_clique_size must be at least 2, got {}",
                self.max_clique_size
            )));
        }
        if self.min_clique_size < 1 || self.min_clique_size > self.max_clique_size {
            return Err(Error::InvalidConfig(format!(
                "min_clique_size must lie in [1, {}], got {}",
                self.max_clique_size, self.min_clique_size
            )));
        }
        self.gain.validate()
    }

    fn bounds(&self, clique_len: usize) -> SeparatorBounds {
        let max = clique_len.min(self.max_clique_size - 1);
        let min = (self.min_clique_size.max(1) - 1).min(max);
        SeparatorBounds { min, max }
    }

    /// Whether an expansion respects the minimum clique size: it either grows
    /// the clique in place or produces a clique of at least the minimum size.
    fn compliant(&self, clique_len: usize, sep_len: usize) -> bool {
        sep_len == clique_len || sep_len + 1 >= self.min_clique_size
    }
}

/// One logged expansion.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpansionRecord {
    pub step: usize,
    pub source_clique: usize,
    /// Clique that contains the vertex after the expansion.
    pub clique: usize,
    pub vertex: VertexId,
    pub separator: Vec<VertexId>,
    pub gain: f64,
    pub kind: ExpansionKind,
}

/// Seed forest plus the ordered expansions applied to it.
#[derive(Clone, Debug, PartialEq)]
pub struct ExpansionLog {
    pub seed: CliqueForest,
    pub steps: Vec<ExpansionRecord>,
}

impl ExpansionLog {
    /// Re-applies the logged expansions to the seed forest.
    pub fn replay(&self) -> Result<CliqueForest> {
        let mut forest = self.seed.clone();
        for r in &self.steps {
            forest.clique_expand(r.source_clique, r.vertex, &VertexSet::new(r.separator.iter().copied()))?;
        }
        Ok(forest)
    }
}

/// Seed clique in insertion order: the strongest pair, grown by full
/// expansions until it has `min_clique_size` members.
fn seed_order(gain: &dyn GainFunction, cfg: &MfcfConfig) -> Vec<VertexId> {
    let p = gain.p();
    if p <= 1 {
        return (0..p).collect();
    }
    if p <= cfg.min_clique_size {
        return (0..p).collect();
    }
    let mut best: Option<(VertexId, VertexId, f64)> = None;
    for a in 0..p {
        for b in a + 1..p {
            let s = gain.pair_score(a, b);
            if best.is_none_or(|(_, _, bs)| s.total_cmp(&bs).is_gt()) {
                best = Some((a, b, s));
            }
        }
    }
    let (a, b, _) = best.expect("p >= 2");
    let mut order = vec![a, b];
    let mut clique = VertexSet::from([a, b]);
    while clique.len() < cfg.min_clique_size {
        let mut pick: Option<(VertexId, f64)> = None;
        for v in (0..p).filter(|v| !clique.contains(*v)) {
            let g = gain.extension_gain(&clique, v);
            if pick.is_none_or(|(_, bg)| g.total_cmp(&bg).is_gt()) {
                pick = Some((v, g));
            }
        }
        let (v, _) = pick.expect("p > clique size");
        clique.insert(v);
        order.push(v);
    }
    order
}

/// Best first clique for `gain` under `cfg`.
pub fn first_clique(gain: &dyn GainFunction, cfg: &MfcfConfig) -> Clique {
    VertexSet::new(seed_order(gain, cfg))
}

fn seed_forest(gain: &dyn GainFunction, cfg: &MfcfConfig) -> Result<CliqueForest> {
    let p = gain.p();
    if let Some(cliques) = &cfg.initial_cliques {
        return CliqueForest::from_cliques(p, cliques.clone(), cfg.initial_separators.clone());
    }
    let mut forest = CliqueForest::new(p);
    for (k, v) in seed_order(gain, cfg).into_iter().enumerate() {
        let sep = if k == 0 { VertexSet::empty() } else { forest.cliques()[0].clone() };
        forest.clique_expand(0, v, &sep)?;
    }
    Ok(forest)
}

/// Cap on the number of same-size subsets tried when the greedy separator has
/// already been used and separators may not be reused.
const MAX_SUBSETS: usize = 20_000;

struct Search<'a> {
    gain: &'a dyn GainFunction,
    cfg: &'a MfcfConfig,
    forest: CliqueForest,
    /// `table[clique][vertex]`, only meaningful for outstanding vertices.
    table: Vec<Vec<Option<Scored>>>,
    retired: Vec<Separator>,
}

impl<'a> Search<'a> {
    fn evaluate(&self, clique: usize, vertex: VertexId) -> Option<Scored> {
        let c = &self.forest.cliques()[clique];
        let bounds = self.cfg.bounds(c.len());
        let best = self.gain.best_expansion(c, vertex, bounds)?;
        if self.is_retired(c, &best.separator) {
            return self.best_unretired(c, vertex, best.separator.len());
        }
        Some(best)
    }

    fn is_retired(&self, clique: &Clique, sep: &Separator) -> bool {
        !self.cfg.reuse_separators
            && !sep.is_empty()
            && sep.len() < clique.len()
            && self.retired.contains(sep)
    }

    fn best_unretired(&self, clique: &Clique, vertex: VertexId, size: usize) -> Option<Scored> {
        let mut best: Option<Scored> = None;
        for (count, subset) in Subsets::new(clique.members(), size).enumerate() {
            if count >= MAX_SUBSETS {
                break;
            }
            let sep = VertexSet::new(subset);
            if self.retired.contains(&sep) {
                continue;
            }
            if let Some(g) = self.gain.separator_gain(sep.members(), vertex) {
                if best.as_ref().is_none_or(|b| g > b.gain) {
                    best = Some(Scored { gain: g, separator: sep });
                }
            }
        }
        best
    }

    fn row(&self, clique: usize) -> Vec<Option<Scored>> {
        let outstanding: Vec<VertexId> = self.forest.outstanding().collect();
        let scored: Vec<(VertexId, Option<Scored>)> = outstanding
            .into_par_iter()
            .map(|v| (v, self.evaluate(clique, v)))
            .collect();
        let mut row = vec![None; self.forest.p()];
        for (v, s) in scored {
            row[v] = s;
        }
        row
    }

    /// Highest-gain entry; ties go to the lowest (clique, vertex). Entries
    /// producing cliques below the minimum size are used only when nothing
    /// else has positive gain.
    fn select(&self) -> Option<(usize, VertexId, Scored)> {
        let mut best_ok: Option<(usize, VertexId, &Scored)> = None;
        let mut best_any: Option<(usize, VertexId, &Scored)> = None;
        for (c, row) in self.table.iter().enumerate() {
            let clique_len = self.forest.cliques()[c].len();
            for v in self.forest.outstanding() {
                let Some(s) = row[v].as_ref() else { continue };
                if !s.gain.is_finite() {
                    continue;
                }
                if best_any.is_none_or(|(_, _, b)| s.gain > b.gain) {
                    best_any = Some((c, v, s));
                }
                if s.gain > 0.0
                    && self.cfg.compliant(clique_len, s.separator.len())
                    && best_ok.is_none_or(|(_, _, b)| s.gain > b.gain)
                {
                    best_ok = Some((c, v, s));
                }
            }
        }
        best_ok.or(best_any).map(|(c, v, s)| (c, v, s.clone()))
    }

    fn run(mut self) -> Result<(CliqueForest, ExpansionLog)> {
        let seed = self.forest.clone();
        self.table = (0..self.forest.cliques().len()).map(|c| self.row(c)).collect();
        let mut steps = Vec::new();
        while !self.forest.is_complete() {
            let (source, vertex, scored) = match self.select() {
                Some(pick) => pick,
                None => {
                    let v = self.forest.outstanding().next().expect("incomplete forest");
                    (0, v, Scored { gain: 0.0, separator: VertexSet::empty() })
                }
            };
            let expansion = self.forest.clique_expand(source, vertex, &scored.separator)?;
            steps.push(ExpansionRecord {
                step: steps.len(),
                source_clique: source,
                clique: expansion.clique,
                vertex,
                separator: scored.separator.members().to_vec(),
                gain: scored.gain,
                kind: expansion.kind,
            });
            if self.forest.is_complete() {
                break;
            }
            for row in &mut self.table {
                row[vertex] = None;
            }
            match expansion.kind {
                ExpansionKind::Extended => {
                    self.table[expansion.clique] = self.row(expansion.clique);
                }
                ExpansionKind::NewClique | ExpansionKind::Disconnected => {
                    let row = self.row(expansion.clique);
                    self.table.push(row);
                }
            }
            if !self.cfg.reuse_separators && expansion.kind == ExpansionKind::NewClique {
                self.retire(scored.separator);
            }
        }
        Ok((self.forest, ExpansionLog { seed, steps }))
    }

    /// Marks `sep` as used and re-scores the entries that had picked it.
    fn retire(&mut self, sep: Separator) {
        self.retired.push(sep.clone());
        let stale: Vec<(usize, VertexId)> = self
            .table
            .iter()
            .enumerate()
            .flat_map(|(c, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(_, e)| e.as_ref().is_some_and(|s| s.separator == sep))
                    .map(move |(v, _)| (c, v))
            })
            .collect();
        let fresh: Vec<Option<Scored>> =
            stale.par_iter().map(|&(c, v)| self.evaluate(c, v)).collect();
        for ((c, v), s) in stale.into_iter().zip(fresh) {
            self.table[c][v] = s;
        }
    }
}

/// Runs the search with an explicit gain function.
pub fn mfcf_with_gain(gain: &dyn GainFunction, cfg: &MfcfConfig) -> Result<(CliqueForest, ExpansionLog)> {
    cfg.validate()?;
    if gain.p() == 0 {
        return Err(Error::InvalidConfig("no variables".into()));
    }
    let forest = seed_forest(gain, cfg)?;
    let search = Search { gain, cfg, forest, table: Vec::new(), retired: Vec::new() };
    search.run()
}

/// Learns a clique forest from `input`.
pub fn mfcf(input: &SimilarityInput, cfg: &MfcfConfig) -> Result<CliqueForest> {
    mfcf_with_report(input, cfg).map(|(f, _)| f)
}

/// As [`mfcf`], also returning the ordered expansion log.
pub fn mfcf_with_report(input: &SimilarityInput, cfg: &MfcfConfig) -> Result<(CliqueForest, ExpansionLog)> {
    cfg.validate()?;
    let gain = build_gain(input, &cfg.gain)?;
    mfcf_with_gain(gain.as_ref(), cfg)
}

/// Lexicographic `k`-subsets of a slice.
struct Subsets<'a> {
    items: &'a [VertexId],
    idx: Vec<usize>,
    done: bool,
}

impl<'a> Subsets<'a> {
    fn new(items: &'a [VertexId], k: usize) -> Self {
        Subsets { items, idx: (0..k).collect(), done: k > items.len() }
    }
}

impl Iterator for Subsets<'_> {
    type Item = Vec<VertexId>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.done {
            return None;
        }
        let out = self.idx.iter().map(|&i| self.items[i]).collect();
        let n = self.items.len();
        let k = self.idx.len();
        let mut i = k;
        loop {
            if i == 0 {
                self.done = true;
                break;
            }
            i -= 1;
            if self.idx[i] < n - k + i {
                self.idx[i] += 1;
                for j in i + 1..k {
                    self.idx[j] = self.idx[j - 1] + 1;
                }
                break;
            }
        }
        Some(out)
    }
}
