//! Gaussian machinery: sample correlations, precision matrices assembled over a
//! clique forest, shrinkage targets and likelihood scoring.

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::{CliqueForest, VertexId, VertexSet};
use crate::linalg;

/// Symmetric matrix with unit diagonal and entries in `[-1, 1]`.
#[derive(Clone, Debug, PartialEq)]
pub struct CorrelationMatrix {
    values: DMatrix<f64>,
    n_obs: Option<usize>,
}

impl CorrelationMatrix {
    /// Wraps `values`, checking the correlation invariants (tolerance `1e-9`).
    pub fn new(values: DMatrix<f64>, n_obs: Option<usize>) -> Result<Self> {
        linalg::check_symmetric(&values)?;
        for i in 0..values.nrows() {
            if (values[(i, i)] - 1.0).abs() > 1e-9 {
                return Err(Error::Parse(format!(
                    "correlation matrix diagonal at {i} is {}, expected 1",
                    values[(i, i)]
                )));
            }
        }
        if let Some(x) = values.iter().find(|x| !(x.abs() <= 1.0 + 1e-9)) {
            return Err(Error::Parse(format!("correlation entry {x} outside [-1, 1]")));
        }
        let mut values = values;
        linalg::symmetrize(&mut values);
        for i in 0..values.nrows() {
            values[(i, i)] = 1.0;
        }
        Ok(CorrelationMatrix { values, n_obs })
    }

    /// Rescales a covariance matrix to unit diagonal.
    pub fn from_covariance(cov: &DMatrix<f64>, n_obs: Option<usize>) -> Result<Self> {
        linalg::check_symmetric(cov)?;
        let p = cov.nrows();
        let sd: Vec<f64> = (0..p).map(|i| cov[(i, i)].sqrt()).collect();
        if let Some(i) = sd.iter().position(|s| !(*s > 0.0)) {
            return Err(Error::ZeroVariance { column: i.to_string() });
        }
        let values = DMatrix::from_fn(p, p, |i, j| {
            if i == j {
                1.0
            } else {
                (cov[(i, j)] / (sd[i] * sd[j])).clamp(-1.0, 1.0)
            }
        });
        let mut values = values;
        linalg::symmetrize(&mut values);
        Ok(CorrelationMatrix { values, n_obs })
    }

    pub fn identity(p: usize) -> Self {
        CorrelationMatrix { values: DMatrix::identity(p, p), n_obs: None }
    }

    pub fn values(&self) -> &DMatrix<f64> {
        &self.values
    }

    pub fn into_inner(self) -> DMatrix<f64> {
        self.values
    }

    pub fn n_obs(&self) -> Option<usize> {
        self.n_obs
    }

    pub fn p(&self) -> usize {
        self.values.nrows()
    }
}

/// Pearson correlation of the columns of an `n × p` data matrix.
pub fn sample_correlation(data: &DMatrix<f64>, labels: Option<&[String]>) -> Result<CorrelationMatrix> {
    let (n, p) = data.shape();
    if n < 2 {
        return Err(Error::InvalidConfig(format!("need at least 2 observations, got {n}")));
    }
    let mut centred = data.clone();
    for j in 0..p {
        let col = centred.column(j);
        let mean = col.sum() / n as f64;
        let ss: f64 = col.iter().map(|x| (x - mean) * (x - mean)).sum();
        if !(ss > 0.0) || !ss.is_finite() {
            let column = labels
                .and_then(|l| l.get(j).cloned())
                .unwrap_or_else(|| j.to_string());
            return Err(Error::ZeroVariance { column });
        }
        let scale = ss.sqrt();
        for x in centred.column_mut(j).iter_mut() {
            *x = (*x - mean) / scale;
        }
    }
    let mut values = centred.transpose() * &centred;
    linalg::symmetrize(&mut values);
    for i in 0..p {
        values[(i, i)] = 1.0;
        for j in 0..p {
            values[(i, j)] = values[(i, j)].clamp(-1.0, 1.0);
        }
    }
    Ok(CorrelationMatrix { values, n_obs: Some(n) })
}

/// `(1 − ε)Σ + εI`.
pub fn pre_shrink(sigma: &CorrelationMatrix, epsilon: f64) -> CorrelationMatrix {
    assert!((0.0..1.0).contains(&epsilon), "epsilon must lie in [0, 1)");
    let p = sigma.p();
    let mut values = sigma.values.map(|x| (1.0 - epsilon) * x);
    for i in 0..p {
        values[(i, i)] = 1.0;
    }
    CorrelationMatrix { values, n_obs: sigma.n_obs }
}

/// Adds `sign · block⁻¹` into `j` on the rows and columns in `idx`.
fn scatter_inverse(j: &mut DMatrix<f64>, idx: &[VertexId], block: &DMatrix<f64>, sign: f64) -> Result<()> {
    let inv = linalg::spd_inverse(block)?;
    for (a, &ia) in idx.iter().enumerate() {
        for (b, &ib) in idx.iter().enumerate() {
            j[(ia, ib)] += sign * inv[(a, b)];
        }
    }
    Ok(())
}

/// Sum of clique-block inverses minus separator-block inverses, each padded
/// with zeros to `p × p`. `block` supplies the matrix to invert for a vertex set.
fn assemble_with<F>(p: usize, forest: &CliqueForest, mut block: F) -> Result<DMatrix<f64>>
where
    F: FnMut(&[VertexId]) -> DMatrix<f64>,
{
    let mut j = DMatrix::zeros(p, p);
    for (i, c) in forest.cliques().iter().enumerate() {
        scatter_inverse(&mut j, c.members(), &block(c.members()), 1.0).map_err(|e| {
            Error::NotPositiveDefinite(format!("clique {i} {c}: {e}"))
        })?;
    }
    for (i, s) in forest.separators().iter().enumerate() {
        if s.is_empty() {
            continue;
        }
        scatter_inverse(&mut j, s.members(), &block(s.members()), -1.0).map_err(|e| {
            Error::NotPositiveDefinite(format!("separator {i} {s}: {e}"))
        })?;
    }
    linalg::symmetrize(&mut j);
    Ok(j)
}

fn check_dims(sigma: &DMatrix<f64>, forest: &CliqueForest) -> Result<()> {
    if sigma.nrows() != forest.p() || sigma.ncols() != forest.p() {
        return Err(Error::DimensionMismatch(format!(
            "matrix is {}x{} but the forest has p = {}",
            sigma.nrows(),
            sigma.ncols(),
            forest.p()
        )));
    }
    Ok(())
}

/// Maximum-likelihood precision matrix of the decomposable model given by
/// `forest`: `J = Σ_c [Σ_c⁻¹]^V − Σ_s [Σ_s⁻¹]^V`.
pub fn assemble_precision(sigma: &DMatrix<f64>, forest: &CliqueForest) -> Result<DMatrix<f64>> {
    check_dims(sigma, forest)?;
    assemble_with(forest.p(), forest, |idx| linalg::submatrix(sigma, idx))
}

/// Shrinkage target for the per-clique blocks.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetKind {
    Identity,
    #[default]
    CliqueTree,
}

/// Constant-correlation targets glued together over a clique forest.
#[derive(Clone, Debug, PartialEq)]
pub struct CliqueTreeTarget {
    /// Mean off-diagonal correlation of each clique (0 for singletons).
    pub clique_means: Vec<f64>,
    /// Unit diagonal; entry `(i, j)` is the mean of `clique_means` over the
    /// cliques containing both `i` and `j`, zero when no clique does.
    pub matrix: DMatrix<f64>,
}

impl CliqueTreeTarget {
    pub fn block(&self, idx: &[VertexId]) -> DMatrix<f64> {
        linalg::submatrix(&self.matrix, idx)
    }
}

pub fn clique_tree_target(sigma: &DMatrix<f64>, forest: &CliqueForest) -> Result<CliqueTreeTarget> {
    check_dims(sigma, forest)?;
    let p = forest.p();
    let clique_means: Vec<f64> = forest
        .cliques()
        .iter()
        .map(|c| {
            let m = c.members();
            let mut sum = 0.0;
            let mut count = 0usize;
            for (a, &i) in m.iter().enumerate() {
                for &j in &m[a + 1..] {
                    sum += sigma[(i, j)];
                    count += 1;
                }
            }
            if count == 0 {
                0.0
            } else {
                sum / count as f64
            }
        })
        .collect();
    let mut sums = DMatrix::<f64>::zeros(p, p);
    let mut counts = DMatrix::<f64>::zeros(p, p);
    for (c, &rho) in forest.cliques().iter().zip(&clique_means) {
        for i in c.iter() {
            for j in c.iter() {
                if i != j {
                    sums[(i, j)] += rho;
                    counts[(i, j)] += 1.0;
                }
            }
        }
    }
    let matrix = DMatrix::from_fn(p, p, |i, j| {
        if i == j {
            1.0
        } else if counts[(i, j)] > 0.0 {
            sums[(i, j)] / counts[(i, j)]
        } else {
            0.0
        }
    });
    Ok(CliqueTreeTarget { clique_means, matrix })
}

/// Sparse precision estimate together with the structure and shrinkage that
/// produced it.
#[derive(Clone, Debug)]
pub struct PrecisionEstimate {
    pub j: DMatrix<f64>,
    pub forest: CliqueForest,
    pub theta: f64,
    pub target_kind: TargetKind,
    pub epsilon_pre: f64,
}

/// Tolerance on the smallest eigenvalue of an assembled precision matrix.
pub const ASSEMBLY_EIG_TOL: f64 = -1e-8;

/// Precision matrix from shrunk clique blocks
/// `(1 − θ)Σ̂_c + θT_c`, where `T` is the identity or the clique-tree target.
/// At `θ = 0` this is exactly [`assemble_precision`].
pub fn shrunk_precision(
    sigma: &CorrelationMatrix,
    forest: &CliqueForest,
    theta: f64,
    target_kind: TargetKind,
) -> Result<PrecisionEstimate> {
    if !(0.0..=1.0).contains(&theta) {
        return Err(Error::InvalidConfig(format!("theta must lie in [0, 1], got {theta}")));
    }
    let s = sigma.values();
    check_dims(s, forest)?;
    let j = if theta == 0.0 {
        assemble_precision(s, forest)?
    } else {
        match target_kind {
            TargetKind::Identity => assemble_with(forest.p(), forest, |idx| {
                let mut b = linalg::submatrix(s, idx) * (1.0 - theta);
                for k in 0..idx.len() {
                    b[(k, k)] += theta;
                }
                b
            })?,
            TargetKind::CliqueTree => {
                let target = clique_tree_target(s, forest)?;
                assemble_with(forest.p(), forest, |idx| {
                    linalg::submatrix(s, idx) * (1.0 - theta) + target.block(idx) * theta
                })?
            }
        }
    };
    let min_eig = linalg::min_eigenvalue(&j);
    if min_eig <= ASSEMBLY_EIG_TOL {
        return Err(Error::NotPositiveDefinite(format!(
            "assembled precision has eigenvalue {min_eig:e}"
        )));
    }
    Ok(PrecisionEstimate {
        j,
        forest: forest.clone(),
        theta,
        target_kind,
        epsilon_pre: 0.0,
    })
}

/// Out-of-sample score `(p/2)(ln|J| − Tr(Σ̂·J))`, additive constant omitted.
pub fn gaussian_loglik_score(j: &DMatrix<f64>, sigma_test: &DMatrix<f64>) -> Result<f64> {
    if j.shape() != sigma_test.shape() {
        return Err(Error::DimensionMismatch(format!(
            "{:?} vs {:?}",
            j.shape(),
            sigma_test.shape()
        )));
    }
    let p = j.nrows() as f64;
    let ld = linalg::logdet(j)?;
    Ok(0.5 * p * (ld - linalg::trace_of_product(sigma_test, j)))
}

/// `Σ_c Tr(Σ̂_c Ĵ_c) − Σ_s Tr(Σ̂_s Ĵ_s)` with `Ĵ_x = Σ̂_x⁻¹` the block
/// maximum-likelihood precisions. Equals `p` for any complete forest.
pub fn forest_trace(sigma: &DMatrix<f64>, forest: &CliqueForest) -> Result<f64> {
    check_dims(sigma, forest)?;
    let block_trace = |set: &VertexSet| -> Result<f64> {
        if set.is_empty() {
            return Ok(0.0);
        }
        let b = linalg::submatrix(sigma, set.members());
        Ok(linalg::trace_of_product(&b, &linalg::spd_inverse(&b)?))
    };
    let mut t = 0.0;
    for c in forest.cliques() {
        t += block_trace(c)?;
    }
    for s in forest.separators() {
        t -= block_trace(s)?;
    }
    Ok(t)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::Clique;
    use approx::assert_abs_diff_eq;

    fn corr(p: usize, entries: &[(usize, usize, f64)]) -> CorrelationMatrix {
        let mut m = DMatrix::identity(p, p);
        for &(i, j, x) in entries {
            m[(i, j)] = x;
            m[(j, i)] = x;
        }
        CorrelationMatrix::new(m, None).unwrap()
    }

    #[test]
    fn sample_correlation_identical_and_negated_columns() {
        let data = DMatrix::from_row_slice(4, 3, &[
            1.0, 1.0, -1.0, //
            2.0, 2.0, -2.0, //
            0.5, 0.5, -0.5, //
            3.0, 3.0, -3.0,
        ]);
        let c = sample_correlation(&data, None).unwrap();
        assert_abs_diff_eq!(c.values()[(0, 1)], 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.values()[(0, 2)], -1.0, epsilon = 1e-12);
        assert_eq!(c.values()[(1, 1)], 1.0);
        assert_eq!(c.n_obs(), Some(4));
    }

    #[test]
    fn sample_correlation_zero_variance_names_column() {
        let data = DMatrix::from_row_slice(3, 2, &[1.0, 5.0, 2.0, 5.0, 3.0, 5.0]);
        let labels = vec!["a".to_string(), "flat".to_string()];
        match sample_correlation(&data, Some(&labels)) {
            Err(Error::ZeroVariance { column }) => assert_eq!(column, "flat"),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn pre_shrink_examples() {
        let s = corr(2, &[(0, 1, 0.8)]);
        assert_eq!(pre_shrink(&s, 0.0), s);
        let shrunk = pre_shrink(&s, 0.05);
        assert_abs_diff_eq!(shrunk.values()[(0, 1)], 0.76, epsilon = 1e-12);
        assert_eq!(shrunk.values()[(0, 0)], 1.0);
        let lam = linalg::min_eigenvalue(s.values());
        assert!(linalg::min_eigenvalue(shrunk.values()) >= 0.95 * lam + 0.05 - 1e-12);
    }

    #[test]
    fn assemble_single_pair_is_closed_form_inverse() {
        let rho = 0.4;
        let s = corr(2, &[(0, 1, rho)]);
        let f = CliqueForest::from_cliques(2, vec![[0, 1].into()], None).unwrap();
        let j = assemble_precision(s.values(), &f).unwrap();
        let d = 1.0 - rho * rho;
        assert_abs_diff_eq!(j[(0, 0)], 1.0 / d, epsilon = 1e-12);
        assert_abs_diff_eq!(j[(0, 1)], -rho / d, epsilon = 1e-12);
    }

    #[test]
    fn assemble_singletons_gives_identity() {
        let s = corr(3, &[(0, 1, 0.5), (1, 2, 0.2)]);
        let cliques: Vec<Clique> = (0..3).map(VertexSet::singleton).collect();
        let f = CliqueForest::from_cliques(3, cliques, None).unwrap();
        let j = assemble_precision(s.values(), &f).unwrap();
        assert_abs_diff_eq!(j, DMatrix::identity(3, 3), epsilon = 1e-14);
    }

    #[test]
    fn assemble_chain_matches_on_support() {
        let s = corr(3, &[(0, 1, 0.5), (1, 2, 0.3), (0, 2, 0.4)]);
        let f = CliqueForest::from_cliques(3, vec![[0, 1].into(), [1, 2].into()], None).unwrap();
        let j = assemble_precision(s.values(), &f).unwrap();
        assert_eq!(j[(0, 2)], 0.0);
        let inv = linalg::spd_inverse(&j).unwrap();
        for (a, b) in [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2)] {
            assert_abs_diff_eq!(inv[(a, b)], s.values()[(a, b)], epsilon = 1e-12);
        }
        assert_abs_diff_eq!(linalg::trace_of_product(s.values(), &j), 3.0, epsilon = 1e-12);
    }

    #[test]
    fn assemble_error_names_clique() {
        let s = corr(2, &[(0, 1, 1.0)]);
        let f = CliqueForest::from_cliques(2, vec![[0, 1].into()], None).unwrap();
        let err = assemble_precision(s.values(), &f).unwrap_err().to_string();
        assert!(err.contains("clique 0"), "{err}");
    }

    #[test]
    fn clique_tree_target_examples() {
        let s = corr(3, &[(0, 1, 0.2), (0, 2, 0.4), (1, 2, 0.6)]);
        let f = CliqueForest::from_cliques(3, vec![[0, 1, 2].into()], None).unwrap();
        let t = clique_tree_target(s.values(), &f).unwrap();
        assert_abs_diff_eq!(t.clique_means[0], 0.4, epsilon = 1e-12);
        for (i, j) in [(0, 1), (0, 2), (1, 2)] {
            assert_abs_diff_eq!(t.matrix[(i, j)], 0.4, epsilon = 1e-12);
        }

        let f = CliqueForest::from_cliques(3, vec![[0, 1, 2].into()], None).unwrap();
        let t = clique_tree_target(&DMatrix::identity(3, 3), &f).unwrap();
        assert_eq!(t.matrix, DMatrix::identity(3, 3));
    }

    #[test]
    fn clique_tree_target_averages_shared_pairs() {
        // cliques {0,1,2} (mean 0.2) and {1,2,3} (mean 0.6) share the pair (1,2)
        let s = corr(4, &[
            (0, 1, 0.1), (0, 2, 0.3), (1, 2, 0.2),
            (1, 3, 0.7), (2, 3, 0.9),
        ]);
        let mut m = s.into_inner();
        m[(1, 2)] = 0.2;
        m[(2, 1)] = 0.2;
        let f = CliqueForest::from_cliques(4, vec![[0, 1, 2].into(), [1, 2, 3].into()], None).unwrap();
        let t = clique_tree_target(&m, &f).unwrap();
        assert_abs_diff_eq!(t.clique_means[0], 0.2, epsilon = 1e-12);
        assert_abs_diff_eq!(t.clique_means[1], 0.6, epsilon = 1e-12);
        assert_abs_diff_eq!(t.matrix[(1, 2)], 0.4, epsilon = 1e-12);
        assert_abs_diff_eq!(t.matrix[(0, 1)], 0.2, epsilon = 1e-12);
        assert_eq!(t.matrix[(0, 3)], 0.0);
    }

    #[test]
    fn singleton_clique_target_mean_is_zero() {
        let f = CliqueForest::from_cliques(2, vec![[0].into(), [1].into()], None).unwrap();
        let t = clique_tree_target(&DMatrix::identity(2, 2), &f).unwrap();
        assert_eq!(t.clique_means, vec![0.0, 0.0]);
    }

    #[test]
    fn shrunk_precision_endpoints() {
        let s = corr(3, &[(0, 1, 0.5), (1, 2, 0.3), (0, 2, 0.1)]);
        let f = CliqueForest::from_cliques(3, vec![[0, 1].into(), [1, 2].into()], None).unwrap();
        let ml = assemble_precision(s.values(), &f).unwrap();
        for kind in [TargetKind::Identity, TargetKind::CliqueTree] {
            let e = shrunk_precision(&s, &f, 0.0, kind).unwrap();
            assert!((e.j.clone() - &ml).amax() < 1e-12);
        }
        let e = shrunk_precision(&s, &f, 1.0, TargetKind::Identity).unwrap();
        assert!((e.j - DMatrix::identity(3, 3)).amax() < 1e-12);
        assert!(shrunk_precision(&s, &f, 1.5, TargetKind::Identity).is_err());
    }

    #[test]
    fn loglik_examples() {
        let p = 100;
        let s = DMatrix::identity(p, p);
        let ll = gaussian_loglik_score(&DMatrix::identity(p, p), &s).unwrap();
        assert_abs_diff_eq!(ll, -5000.0, epsilon = 1e-9);

        let s = corr(2, &[(0, 1, 0.3)]);
        let inv = linalg::spd_inverse(s.values()).unwrap();
        let ll = gaussian_loglik_score(&inv, s.values()).unwrap();
        let expected = 1.0 * (linalg::logdet(&inv).unwrap() - 2.0);
        assert_abs_diff_eq!(ll, expected, epsilon = 1e-12);

        let sig = DMatrix::from_element(1, 1, 2.0);
        let at = |x: f64| gaussian_loglik_score(&DMatrix::from_element(1, 1, x), &sig).unwrap();
        assert!(at(0.5) > at(0.45) && at(0.5) > at(0.55));
        assert_abs_diff_eq!(at(0.5), 0.5 * (0.5f64.ln() - 1.0), epsilon = 1e-12);
    }
}
