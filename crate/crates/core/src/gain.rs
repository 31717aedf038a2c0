//! Gain functions scoring a candidate expansion of a clique by an isolated
//! vertex. Every gain function also picks the separator: the subset of the
//! clique the vertex will be joined to.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::graph::{Clique, Separator, VertexId, VertexSet};
use crate::linalg::{self, PIVOT_TOL};

/// Which gain function drives the search.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Sum of similarity weights inside cliques minus inside separators.
    Similarity,
    /// Gaussian log-likelihood increase.
    #[default]
    GaussLoglik,
    /// Gaussian log-likelihood increase, grown only while each step is significant.
    GaussLoglikValidated,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct GainConfig {
    pub mode: GainMode,
    /// Significance level of the per-step test in validated mode.
    pub p_value: f64,
    /// Similarity mode only: members whose weight to the vertex does not exceed
    /// this value are never put in the separator.
    pub similarity_threshold: Option<f64>,
}

impl Default for GainConfig {
    fn default() -> Self {
        GainConfig {
            mode: GainMode::GaussLoglik,
            p_value: 0.05,
            similarity_threshold: None,
        }
    }
}

impl GainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.p_value > 0.0 && self.p_value < 1.0) {
            return Err(Error::InvalidConfig(format!(
                "p_value must lie in (0, 1), got {}",
                self.p_value
            )));
        }
        Ok(())
    }
}

/// A scored expansion of `source_clique` by `vertex` through `separator`.
#[derive(Clone, Debug, PartialEq)]
pub struct GainResult {
    pub gain: f64,
    pub separator: Separator,
    pub vertex: VertexId,
    pub source_clique: usize,
}

/// Allowed separator sizes for one candidate, inclusive. A separator as large
/// as the clique itself means growing the clique in place.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SeparatorBounds {
    pub min: usize,
    pub max: usize,
}

/// Separator choice and its gain, before it is tied to a clique index.
#[derive(Clone, Debug, PartialEq)]
pub struct Scored {
    pub gain: f64,
    pub separator: Separator,
}

/// A pluggable gain function.
pub trait GainFunction: Sync {
    /// Number of variables.
    fn p(&self) -> usize;

    /// Association between two vertices; the seed clique starts from the
    /// strongest pair.
    fn pair_score(&self, a: VertexId, b: VertexId) -> f64;

    /// Gain of an explicit separator, or `None` when it is not admissible.
    fn separator_gain(&self, separator: &[VertexId], vertex: VertexId) -> Option<f64>;

    /// Best separator inside `clique` for `vertex`, or `None` when no
    /// admissible separator exists.
    fn best_expansion(
        &self,
        clique: &Clique,
        vertex: VertexId,
        bounds: SeparatorBounds,
    ) -> Option<Scored>;

    /// Gain of joining `vertex` to every member of `clique` without validation.
    fn extension_gain(&self, clique: &Clique, vertex: VertexId) -> f64;
}

/// Gain from a symmetric, zero-diagonal similarity matrix.
///
/// Scores use the ordered-pair convention `Score(C) = Σ_{i,j∈C} W_ij`, so every
/// gain is twice the sum of the new edge weights.
#[derive(Clone, Debug)]
pub struct SimilarityGain {
    weights: DMatrix<f64>,
    threshold: Option<f64>,
}

impl SimilarityGain {
    pub fn new(weights: DMatrix<f64>) -> Result<Self> {
        linalg::check_square(&weights, "weight matrix")?;
        if weights.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("weight matrix has non-finite entries".into()));
        }
        let asym = linalg::asymmetry(&weights);
        if asym > 0.0 {
            return Err(Error::NotSymmetric(asym));
        }
        if let Some(i) = (0..weights.nrows()).find(|&i| weights[(i, i)] != 0.0) {
            return Err(Error::NonZeroDiagonal(i));
        }
        Ok(SimilarityGain { weights, threshold: None })
    }

    pub fn with_threshold(mut self, threshold: Option<f64>) -> Self {
        self.threshold = threshold;
        self
    }

    pub fn weights(&self) -> &DMatrix<f64> {
        &self.weights
    }

    /// Ordered-pair score of a vertex set.
    pub fn score(&self, set: &[VertexId]) -> f64 {
        let mut s = 0.0;
        for &i in set {
            for &j in set {
                s += self.weights[(i, j)];
            }
        }
        s
    }
}

impl GainFunction for SimilarityGain {
    fn p(&self) -> usize {
        self.weights.nrows()
    }

    fn pair_score(&self, a: VertexId, b: VertexId) -> f64 {
        self.weights[(a, b)]
    }

    fn separator_gain(&self, separator: &[VertexId], vertex: VertexId) -> Option<f64> {
        if let Some(t) = self.threshold {
            if separator.iter().any(|&i| self.weights[(i, vertex)] <= t) {
                return None;
            }
        }
        Some(2.0 * separator.iter().map(|&i| self.weights[(i, vertex)]).sum::<f64>())
    }

    fn best_expansion(
        &self,
        clique: &Clique,
        vertex: VertexId,
        bounds: SeparatorBounds,
    ) -> Option<Scored> {
        let mut ranked: Vec<VertexId> = clique
            .iter()
            .filter(|&i| self.threshold.is_none_or(|t| self.weights[(i, vertex)] > t))
            .collect();
        // stable: equal weights keep ascending vertex order
        ranked.sort_by(|&a, &b| self.weights[(b, vertex)].total_cmp(&self.weights[(a, vertex)]));

        let hi = bounds.max.min(ranked.len());
        let lo = bounds.min.min(hi);
        let mut prefix = vec![0.0; hi + 1];
        for k in 0..hi {
            prefix[k + 1] = prefix[k] + self.weights[(ranked[k], vertex)];
        }
        let mut best_k = hi;
        for k in (lo..hi).rev() {
            if prefix[k] > prefix[best_k] {
                best_k = k;
            }
        }
        Some(Scored {
            gain: 2.0 * prefix[best_k],
            separator: VertexSet::new(ranked[..best_k].iter().copied()),
        })
    }

    fn extension_gain(&self, clique: &Clique, vertex: VertexId) -> f64 {
        2.0 * clique.iter().map(|i| self.weights[(i, vertex)]).sum::<f64>()
    }
}

/// One greedy step: `member` joined the separator and the vertex's
/// conditional variance given the separator dropped to `cond_var`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct GreedyStep {
    pub member: VertexId,
    pub cond_var: f64,
}

/// Gaussian log-likelihood gain `½(ln|Σ_S| − ln|Σ_{S∪v}|)` on a correlation
/// (or covariance) matrix.
#[derive(Clone, Debug)]
pub struct GaussianGain {
    sigma: DMatrix<f64>,
}

impl GaussianGain {
    pub fn new(sigma: DMatrix<f64>) -> Result<Self> {
        linalg::check_symmetric(&sigma)?;
        if sigma.iter().any(|x| !x.is_finite()) {
            return Err(Error::Parse("covariance matrix has non-finite entries".into()));
        }
        Ok(GaussianGain { sigma })
    }

    pub fn sigma(&self) -> &DMatrix<f64> {
        &self.sigma
    }

    /// Greedy separator growth inside `clique`: each step adds the member that
    /// most reduces the vertex's conditional variance (equivalently, most
    /// increases the log-likelihood). Works on partial covariances, so a path
    /// of length `k` costs `O(k·|clique|²)`.
    ///
    /// Returns `None` if some step would make `Σ_{S∪v}` singular.
    pub fn greedy_path(
        &self,
        clique: &Clique,
        vertex: VertexId,
        max_len: usize,
    ) -> Option<Vec<GreedyStep>> {
        let members = clique.members();
        let c = members.len();
        // index c is the vertex itself
        let idx: Vec<VertexId> = members.iter().copied().chain(std::iter::once(vertex)).collect();
        let mut r = linalg::submatrix(&self.sigma, &idx);
        let mut chosen = vec![false; c];
        let mut path = Vec::with_capacity(max_len.min(c));
        while path.len() < max_len.min(c) {
            let mut best: Option<(usize, f64)> = None;
            for m in 0..c {
                if chosen[m] || r[(m, m)] <= PIVOT_TOL {
                    continue;
                }
                let reduction = r[(c, m)] * r[(c, m)] / r[(m, m)];
                if best.is_none_or(|(_, b)| reduction > b) {
                    best = Some((m, reduction));
                }
            }
            let Some((m, _)) = best else { break };
            let pivot = r[(m, m)];
            let col: Vec<f64> = (0..=c).map(|a| r[(a, m)]).collect();
            for a in 0..=c {
                if a != c && chosen[a] {
                    continue;
                }
                for b in 0..=c {
                    if b != c && chosen[b] {
                        continue;
                    }
                    r[(a, b)] -= col[a] * col[b] / pivot;
                }
            }
            chosen[m] = true;
            let cond_var = r[(c, c)];
            if cond_var <= PIVOT_TOL {
                return None;
            }
            path.push(GreedyStep { member: members[m], cond_var });
        }
        Some(path)
    }

    fn gain_from_cond_var(cond_var: f64) -> f64 {
        -0.5 * cond_var.ln()
    }

    /// Conditional variance of `vertex` before any member is chosen.
    fn marginal_var(&self, vertex: VertexId) -> f64 {
        self.sigma[(vertex, vertex)]
    }
}

impl GainFunction for GaussianGain {
    fn p(&self) -> usize {
        self.sigma.nrows()
    }

    fn pair_score(&self, a: VertexId, b: VertexId) -> f64 {
        self.separator_gain(&[a], b).unwrap_or(f64::NEG_INFINITY)
    }

    fn separator_gain(&self, separator: &[VertexId], vertex: VertexId) -> Option<f64> {
        let mut with_v = separator.to_vec();
        with_v.push(vertex);
        let ld_sep = if separator.is_empty() {
            0.0
        } else {
            logdet_checked(&linalg::submatrix(&self.sigma, separator))?
        };
        let ld_full = logdet_checked(&linalg::submatrix(&self.sigma, &with_v))?;
        Some(0.5 * (ld_sep - ld_full))
    }

    fn best_expansion(
        &self,
        clique: &Clique,
        vertex: VertexId,
        bounds: SeparatorBounds,
    ) -> Option<Scored> {
        let path = self.greedy_path(clique, vertex, bounds.max)?;
        let cond_var = path.last().map_or(self.marginal_var(vertex), |s| s.cond_var);
        Some(Scored {
            gain: Self::gain_from_cond_var(cond_var),
            separator: VertexSet::new(path.iter().map(|s| s.member)),
        })
    }

    fn extension_gain(&self, clique: &Clique, vertex: VertexId) -> f64 {
        self.separator_gain(clique.members(), vertex).unwrap_or(f64::NEG_INFINITY)
    }
}

fn logdet_checked(m: &DMatrix<f64>) -> Option<f64> {
    let chol = linalg::cholesky(m).ok()?;
    let l = chol.l_dirty();
    Some((0..m.nrows()).map(|i| 2.0 * l[(i, i)].ln()).sum())
}

/// Gaussian gain whose separator only grows while each step is significant.
///
/// A step adding one member is accepted when its deviance
/// `2·n·(incremental gain)` exceeds the upper `p_value` quantile of χ² with
/// as many degrees of freedom as the separator has members after the step.
/// If the first member is already rejected the candidate scores zero with an
/// empty separator.
#[derive(Clone, Debug)]
pub struct ValidatedGaussianGain {
    inner: GaussianGain,
    n_obs: f64,
    p_value: f64,
    quantiles: Vec<f64>,
}

impl ValidatedGaussianGain {
    pub fn new(sigma: DMatrix<f64>, n_obs: usize, p_value: f64) -> Result<Self> {
        if n_obs == 0 {
            return Err(Error::InvalidConfig("validated gain needs n_obs > 0".into()));
        }
        if !(p_value > 0.0 && p_value < 1.0) {
            return Err(Error::InvalidConfig(format!("p_value must lie in (0, 1), got {p_value}")));
        }
        let inner = GaussianGain::new(sigma)?;
        let p = inner.p();
        let quantiles = (1..=p.max(1)).map(|df| chi2_quantile(df, p_value)).collect();
        Ok(ValidatedGaussianGain {
            inner,
            n_obs: n_obs as f64,
            p_value,
            quantiles,
        })
    }

    pub fn p_value(&self) -> f64 {
        self.p_value
    }

    fn critical(&self, df: usize) -> f64 {
        self.quantiles
            .get(df - 1)
            .copied()
            .unwrap_or_else(|| chi2_quantile(df, self.p_value))
    }
}

/// Upper-tail χ² quantile: the value exceeded with probability `p_value`.
pub fn chi2_quantile(df: usize, p_value: f64) -> f64 {
    ChiSquared::new(df as f64)
        .expect("df > 0")
        .inverse_cdf(1.0 - p_value)
}

impl GainFunction for ValidatedGaussianGain {
    fn p(&self) -> usize {
        self.inner.p()
    }

    fn pair_score(&self, a: VertexId, b: VertexId) -> f64 {
        self.inner.pair_score(a, b)
    }

    fn separator_gain(&self, separator: &[VertexId], vertex: VertexId) -> Option<f64> {
        let gain = self.inner.separator_gain(separator, vertex)?;
        if separator.is_empty() {
            return Some(0.0);
        }
        (2.0 * self.n_obs * gain > self.critical(separator.len())).then_some(gain)
    }

    fn best_expansion(
        &self,
        clique: &Clique,
        vertex: VertexId,
        bounds: SeparatorBounds,
    ) -> Option<Scored> {
        let path = self.inner.greedy_path(clique, vertex, bounds.max)?;
        let mut prev = self.inner.marginal_var(vertex);
        let mut accepted = 0;
        for (k, step) in path.iter().enumerate() {
            let increment = 0.5 * (prev / step.cond_var).ln();
            if 2.0 * self.n_obs * increment <= self.critical(k + 1) {
                break;
            }
            prev = step.cond_var;
            accepted = k + 1;
        }
        if accepted == 0 {
            return Some(Scored { gain: 0.0, separator: VertexSet::empty() });
        }
        Some(Scored {
            gain: GaussianGain::gain_from_cond_var(prev),
            separator: VertexSet::new(path[..accepted].iter().map(|s| s.member)),
        })
    }

    fn extension_gain(&self, clique: &Clique, vertex: VertexId) -> f64 {
        self.inner.extension_gain(clique, vertex)
    }
}

/// Similarity gain of the `target_sep_size` members of `clique` most similar
/// to `vertex`.
pub fn similarity_gain(
    weights: &DMatrix<f64>,
    clique: &Clique,
    vertex: VertexId,
    target_sep_size: usize,
) -> Result<GainResult> {
    let g = SimilarityGain::new(weights.clone())?;
    let bounds = SeparatorBounds { min: target_sep_size, max: target_sep_size };
    let s = g.best_expansion(clique, vertex, bounds).expect("similarity gain is total");
    Ok(GainResult { gain: s.gain, separator: s.separator, vertex, source_clique: 0 })
}

/// Greedy Gaussian gain with at most `max_clique_size − 1` separator members.
/// `None` marks an invalid candidate (singular submatrix).
pub fn gaussian_gain(
    sigma: &DMatrix<f64>,
    clique: &Clique,
    vertex: VertexId,
    max_clique_size: usize,
) -> Result<Option<GainResult>> {
    let g = GaussianGain::new(sigma.clone())?;
    let bounds = SeparatorBounds { min: 0, max: max_clique_size.saturating_sub(1) };
    Ok(g.best_expansion(clique, vertex, bounds).map(|s| GainResult {
        gain: s.gain,
        separator: s.separator,
        vertex,
        source_clique: 0,
    }))
}

/// Validated Gaussian gain for a sample of `n_obs` observations.
pub fn validated_gaussian_gain(
    sigma: &DMatrix<f64>,
    clique: &Clique,
    vertex: VertexId,
    n_obs: usize,
    max_clique_size: usize,
    p_value: f64,
) -> Result<Option<GainResult>> {
    let g = ValidatedGaussianGain::new(sigma.clone(), n_obs, p_value)?;
    let bounds = SeparatorBounds { min: 0, max: max_clique_size.saturating_sub(1) };
    Ok(g.best_expansion(clique, vertex, bounds).map(|s| GainResult {
        gain: s.gain,
        separator: s.separator,
        vertex,
        source_clique: 0,
    }))
}

/// Likelihood-ratio style discrepancy between two covariance matrices,
/// `ν(ln|Σ₀| − ln|Σ₁| + Tr(Σ₁⁻¹Σ₀) − k)`.
///
/// With `raw` the trailing `−k` is dropped, which makes identical matrices
/// score `νk` instead of zero.
pub fn lrt_statistic(
    sigma0: &DMatrix<f64>,
    sigma1: &DMatrix<f64>,
    nu: f64,
    raw: bool,
) -> Result<f64> {
    if sigma0.shape() != sigma1.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            sigma0.shape(),
            sigma1.shape()
        )));
    }
    if !(nu > 0.0) {
        return Err(Error::InvalidConfig(format!("degrees of freedom must be positive, got {nu}")));
    }
    let k = sigma0.nrows() as f64;
    let ld0 = linalg::logdet(sigma0)?;
    let ld1 = linalg::logdet(sigma1)?;
    let inv1 = linalg::spd_inverse(sigma1)?;
    let tr = linalg::trace_of_product(&inv1, sigma0);
    let centering = if raw { 0.0 } else { k };
    Ok(nu * (ld0 - ld1 + tr - centering))
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn weights4() -> DMatrix<f64> {
        let mut w = DMatrix::zeros(4, 4);
        for (i, x) in [(0, 0.9), (1, 0.5), (2, 0.1)] {
            w[(i, 3)] = x;
            w[(3, i)] = x;
        }
        w
    }

    #[test]
    fn similarity_picks_heaviest_members() {
        let r = similarity_gain(&weights4(), &VertexSet::from([0, 1, 2]), 3, 2).unwrap();
        assert_eq!(r.separator, VertexSet::from([0, 1]));
        assert_abs_diff_eq!(r.gain, 2.8, epsilon = 1e-12);
    }

    #[test]
    fn similarity_zero_weights_break_ties_low() {
        let w = DMatrix::zeros(4, 4);
        let r = similarity_gain(&w, &VertexSet::from([0, 1, 2]), 3, 2).unwrap();
        assert_eq!(r.gain, 0.0);
        assert_eq!(r.separator, VertexSet::from([0, 1]));
    }

    #[test]
    fn similarity_full_expansion() {
        let mut w = DMatrix::zeros(3, 3);
        w[(0, 2)] = 0.3;
        w[(2, 0)] = 0.3;
        w[(1, 2)] = 0.4;
        w[(2, 1)] = 0.4;
        let r = similarity_gain(&w, &VertexSet::from([0, 1]), 2, 2).unwrap();
        assert_eq!(r.separator, VertexSet::from([0, 1]));
        assert_abs_diff_eq!(r.gain, 2.0 * 0.7, epsilon = 1e-12);
    }

    #[test]
    fn similarity_rejects_bad_weights() {
        let mut w = weights4();
        w[(0, 3)] = 0.2;
        assert!(matches!(SimilarityGain::new(w), Err(Error::NotSymmetric(_))));
        let mut w = weights4();
        w[(1, 1)] = 1.0;
        assert!(matches!(SimilarityGain::new(w), Err(Error::NonZeroDiagonal(1))));
    }

    #[test]
    fn similarity_threshold_drops_weak_members() {
        let g = SimilarityGain::new(weights4()).unwrap().with_threshold(Some(0.4));
        let s = g
            .best_expansion(&VertexSet::from([0, 1, 2]), 3, SeparatorBounds { min: 2, max: 3 })
            .unwrap();
        assert_eq!(s.separator, VertexSet::from([0, 1]));
    }

    fn corr2(rho: f64) -> DMatrix<f64> {
        DMatrix::from_row_slice(2, 2, &[1.0, rho, rho, 1.0])
    }

    #[test]
    fn gaussian_single_member_closed_form() {
        let r = gaussian_gain(&corr2(0.5), &VertexSet::from([0]), 1, 4).unwrap().unwrap();
        assert_eq!(r.separator, VertexSet::from([0]));
        assert_abs_diff_eq!(r.gain, -0.5 * 0.75f64.ln(), epsilon = 1e-12);
        assert_abs_diff_eq!(r.gain, 0.143841, epsilon = 1e-6);
    }

    #[test]
    fn gaussian_independent_vertex_has_zero_gain() {
        let mut s = DMatrix::identity(4, 4);
        s[(0, 1)] = 0.4;
        s[(1, 0)] = 0.4;
        let g = GaussianGain::new(s).unwrap();
        let c = VertexSet::from([0, 1, 2]);
        for k in 0..=3 {
            let r = g.best_expansion(&c, 3, SeparatorBounds { min: 0, max: k }).unwrap();
            assert_abs_diff_eq!(r.gain, 0.0, epsilon = 1e-14);
        }
        assert_eq!(g.separator_gain(&[], 3), Some(0.0));
    }

    #[test]
    fn greedy_path_agrees_with_logdet_route() {
        let s = DMatrix::from_row_slice(
            4,
            4,
            &[
                1.0, 0.3, 0.2, 0.6, //
                0.3, 1.0, 0.4, 0.5, //
                0.2, 0.4, 1.0, 0.1, //
                0.6, 0.5, 0.1, 1.0,
            ],
        );
        let g = GaussianGain::new(s).unwrap();
        let c = VertexSet::from([0, 1, 2]);
        let r = g.best_expansion(&c, 3, SeparatorBounds { min: 0, max: 2 }).unwrap();
        let via_logdet = g.separator_gain(r.separator.members(), 3).unwrap();
        assert_abs_diff_eq!(r.gain, via_logdet, epsilon = 1e-12);
        // the strongest single correlation (0.6 with vertex 0) goes in first
        let path = g.greedy_path(&c, 3, 1).unwrap();
        assert_eq!(path[0].member, 0);
    }

    #[test]
    fn gaussian_singular_candidate_is_invalid() {
        let s = DMatrix::from_row_slice(2, 2, &[1.0, 1.0, 1.0, 1.0]);
        assert_eq!(gaussian_gain(&s, &VertexSet::from([0]), 1, 4).unwrap(), None);
    }

    #[test]
    fn validated_accepts_strong_rejects_weak() {
        let r = validated_gaussian_gain(&corr2(0.9), &VertexSet::from([0]), 1, 500, 4, 0.05)
            .unwrap()
            .unwrap();
        assert_eq!(r.separator, VertexSet::from([0]));
        assert_abs_diff_eq!(r.gain, -0.5 * 0.19f64.ln(), epsilon = 1e-12);

        let r = validated_gaussian_gain(&corr2(0.05), &VertexSet::from([0]), 1, 25, 4, 0.05)
            .unwrap()
            .unwrap();
        assert_eq!(r.gain, 0.0);
        assert!(r.separator.is_empty());
    }

    #[test]
    fn chi2_quantile_reference_value() {
        assert_abs_diff_eq!(chi2_quantile(1, 0.05), 3.841459, epsilon = 1e-5);
        assert_abs_diff_eq!(chi2_quantile(3, 0.05), 7.814728, epsilon = 1e-5);
    }

    #[test]
    fn lrt_examples() {
        let m = corr2(0.3);
        assert_abs_diff_eq!(lrt_statistic(&m, &m, 100.0, false).unwrap(), 0.0, epsilon = 1e-10);
        assert_abs_diff_eq!(lrt_statistic(&m, &m, 100.0, true).unwrap(), 200.0, epsilon = 1e-10);

        let u = lrt_statistic(&DMatrix::identity(2, 2), &corr2(0.5), 50.0, false).unwrap();
        let expected = 50.0 * (-(0.75f64).ln() + 2.0 / 0.75 - 2.0);
        assert_abs_diff_eq!(u, expected, epsilon = 1e-9);
        assert_abs_diff_eq!(u, 47.717, epsilon = 1e-3);

        assert!(matches!(
            lrt_statistic(&DMatrix::identity(2, 2), &DMatrix::identity(3, 3), 1.0, false),
            Err(Error::DimensionMismatch(_))
        ));
    }
}
