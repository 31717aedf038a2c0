//! Synthetic benchmark models and a multivariate normal sampler.

use nalgebra::{DMatrix, DVector};
use rand::seq::index::sample;
use rand::Rng as _;
use rand_distr::{Distribution, StandardNormal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gaussian::{assemble_precision, CorrelationMatrix};
use crate::graph::{CliqueForest, VertexSet};
use crate::linalg;
use crate::rng::{self, Rng};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SynthKind {
    /// Sparse precision supported on a random clique forest.
    #[serde(alias = "chordal")]
    ChordalFactor,
    /// Dense covariance with random spectrum and random rotation.
    #[serde(alias = "pd")]
    RandomPd,
    /// Dense correlation from a linear factor model.
    #[serde(alias = "factor")]
    FactorModel,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSpec {
    pub kind: SynthKind,
    pub p: usize,
    pub n: usize,
    pub seed: u64,
    /// Factor model only.
    pub factors: usize,
    /// Random PD only: eigenvalues are drawn uniformly from this interval.
    pub eig_range: (f64, f64),
    /// Chordal only: variance of the per-variable noise term.
    pub noise_var: f64,
    /// Chordal only: clique sizes of the random forest.
    pub forest: ForestParams,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            kind: SynthKind::ChordalFactor,
            p: 100,
            n: 200,
            seed: 0,
            factors: 5,
            eig_range: (0.01, 100.0),
            noise_var: 0.1,
            forest: ForestParams::default(),
        }
    }
}

/// Shape of the random clique forests.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestParams {
    pub max_clique_size: usize,
    /// Probability that a vertex starts a new tree instead of attaching.
    pub disconnect_prob: f64,
}

impl Default for ForestParams {
    fn default() -> Self {
        ForestParams { max_clique_size: 5, disconnect_prob: 0.0 }
    }
}

/// Reference model a benchmark is scored against.
#[derive(Clone, Debug)]
pub struct GroundTruth {
    pub sigma_true: DMatrix<f64>,
    pub j_true: DMatrix<f64>,
    pub forest_true: Option<CliqueForest>,
}

/// Random clique forest grown by clique expansions with uniformly random
/// vertex, clique and separator at every step. Separator sizes are uniform on
/// `[1, |C|]`, capped so no clique exceeds `max_clique_size`.
pub fn random_clique_forest(p: usize, params: ForestParams, rng: &mut Rng) -> CliqueForest {
    assert!(p >= 1, "p must be positive");
    let max_size = params.max_clique_size.max(2);
    let mut forest = CliqueForest::new(p);
    let mut order: Vec<usize> = (0..p).collect();
    for i in (1..p).rev() {
        let j = rng.random_range(0..=i);
        order.swap(i, j);
    }
    forest
        .clique_expand(0, order[0], &VertexSet::empty())
        .expect("first vertex is isolated");
    for &v in &order[1..] {
        if params.disconnect_prob > 0.0 && rng.random_bool(params.disconnect_prob) {
            forest.clique_expand(0, v, &VertexSet::empty()).expect("isolated");
            continue;
        }
        let c = rng.random_range(0..forest.cliques().len());
        let clique = forest.cliques()[c].members().to_vec();
        let hi = clique.len().min(max_size - 1);
        let size = rng.random_range(1..=hi);
        let picked = sample(rng, clique.len(), size);
        let sep = VertexSet::new(picked.iter().map(|k| clique[k]));
        forest.clique_expand(c, v, &sep).expect("valid random expansion");
    }
    forest
}

/// Ground truth whose precision is supported exactly on `forest`.
///
/// Each clique carries an independent unit-variance factor and each variable
/// one independent noise term, so the clique blocks of the covariance are
/// `Var(X_i) = k_i + noise_var` (with `k_i` the number of cliques holding
/// `i`) and `Cov(X_i, X_j) =` number of cliques holding both. The precision
/// is assembled from those blocks over the forest; the sampling covariance is
/// its inverse.
pub fn chordal_precision(forest: &CliqueForest, noise_var: f64) -> Result<GroundTruth> {
    let p = forest.p();
    let mut block_cov = DMatrix::<f64>::zeros(p, p);
    for c in forest.cliques() {
        for i in c.iter() {
            for j in c.iter() {
                block_cov[(i, j)] += 1.0;
            }
        }
    }
    for i in 0..p {
        block_cov[(i, i)] += noise_var;
    }
    let j_true = assemble_precision(&block_cov, forest)?;
    let sigma_true = linalg::spd_inverse(&j_true)?;
    Ok(GroundTruth { sigma_true, j_true, forest_true: Some(forest.clone()) })
}

/// Haar-distributed orthogonal matrix: QR of a standard normal matrix with
/// the signs of `R`'s diagonal folded into `Q`.
pub fn random_orthogonal(p: usize, rng: &mut Rng) -> DMatrix<f64> {
    let g = DMatrix::<f64>::from_fn(p, p, |_, _| StandardNormal.sample(rng));
    let qr = g.qr();
    let r = qr.r();
    let mut q = qr.q();
    for j in 0..p {
        if r[(j, j)] < 0.0 {
            for i in 0..p {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

/// Dense covariance `QΛQᵀ` with eigenvalues uniform on `eig_range`.
pub fn random_pd_matrix(p: usize, eig_range: (f64, f64), rng: &mut Rng) -> Result<GroundTruth> {
    let (lo, hi) = eig_range;
    if !(lo > 0.0 && lo <= hi) {
        return Err(Error::InvalidConfig(format!("bad eigenvalue range [{lo}, {hi}]")));
    }
    let eigs: Vec<f64> = if lo == hi {
        vec![lo; p]
    } else {
        let u = Uniform::new_inclusive(lo, hi).expect("valid range");
        (0..p).map(|_| u.sample(rng)).collect()
    };
    let q = random_orthogonal(p, rng);
    let lambda = DVector::from_vec(eigs.clone());
    let inv_lambda = lambda.map(|x| 1.0 / x);
    let mut sigma_true = &q * DMatrix::from_diagonal(&lambda) * q.transpose();
    let mut j_true = &q * DMatrix::from_diagonal(&inv_lambda) * q.transpose();
    linalg::symmetrize(&mut sigma_true);
    linalg::symmetrize(&mut j_true);
    Ok(GroundTruth { sigma_true, j_true, forest_true: None })
}

/// Correlation of a factor model `X = ΛF + ε` with `f` standard normal
/// factors, standard normal loadings and idiosyncratic variances uniform on
/// `[0.5, 1.5]`.
pub fn factor_model_cov(p: usize, f: usize, rng: &mut Rng) -> Result<GroundTruth> {
    if f == 0 || f >= p {
        return Err(Error::InvalidConfig(format!("need 1 <= factors < p, got {f} for p = {p}")));
    }
    let loadings = DMatrix::<f64>::from_fn(p, f, |_, _| StandardNormal.sample(rng));
    let idio = Uniform::new_inclusive(0.5, 1.5).expect("valid range");
    let omega: Vec<f64> = (0..p).map(|_| idio.sample(rng)).collect();
    let mut cov = &loadings * loadings.transpose();
    for (i, w) in omega.iter().enumerate() {
        cov[(i, i)] += w;
    }
    let sigma_true = CorrelationMatrix::from_covariance(&cov, None)?.into_inner();
    let j_true = linalg::spd_inverse(&sigma_true)?;
    Ok(GroundTruth { sigma_true, j_true, forest_true: None })
}

/// `n` i.i.d. rows from `N(0, Σ)`, drawn as `Z Lᵀ` with `LLᵀ = Σ`.
pub fn mvn_sample(sigma: &DMatrix<f64>, n: usize, rng: &mut Rng) -> Result<DMatrix<f64>> {
    let chol = linalg::cholesky(sigma)?;
    let p = sigma.nrows();
    let mut z = DMatrix::<f64>::zeros(n, p);
    for i in 0..n {
        for j in 0..p {
            z[(i, j)] = StandardNormal.sample(rng);
        }
    }
    Ok(z * chol.l().transpose())
}

/// Ground truth for `spec`, drawn from the model stream of its seed.
pub fn ground_truth(spec: &SynthSpec) -> Result<GroundTruth> {
    if spec.p == 0 {
        return Err(Error::InvalidConfig("p must be positive".into()));
    }
    let mut rng = rng::stream(spec.seed, &[0]);
    match spec.kind {
        SynthKind::ChordalFactor => {
            let forest = random_clique_forest(spec.p, spec.forest, &mut rng);
            chordal_precision(&forest, spec.noise_var)
        }
        SynthKind::RandomPd => random_pd_matrix(spec.p, spec.eig_range, &mut rng),
        SynthKind::FactorModel => factor_model_cov(spec.p, spec.factors, &mut rng),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{is_chordal, validate_perfect_sequence};
    use approx::assert_abs_diff_eq;

    #[test]
    fn single_vertex_forest() {
        let f = random_clique_forest(1, ForestParams::default(), &mut rng::from_seed(1));
        assert_eq!(f.cliques(), &[VertexSet::singleton(0)]);
    }

    #[test]
    fn random_forests_are_valid_and_seeded() {
        for seed in 0..50 {
            let f = random_clique_forest(30, ForestParams::default(), &mut rng::from_seed(seed));
            assert!(f.is_complete());
            assert!(is_chordal(&f.to_adjacency()));
            assert!(validate_perfect_sequence(&f));
            assert!(f.cliques().iter().all(|c| c.len() <= 5));
            f.check().unwrap();
        }
        let a = random_clique_forest(40, ForestParams::default(), &mut rng::from_seed(9));
        let b = random_clique_forest(40, ForestParams::default(), &mut rng::from_seed(9));
        assert_eq!(a, b);
    }

    #[test]
    fn disconnected_cliques_give_block_diagonal_precision() {
        let f = CliqueForest::from_cliques(4, vec![[0, 1].into(), [2, 3].into()], None).unwrap();
        let gt = chordal_precision(&f, 0.1).unwrap();
        for (a, b) in [(0, 2), (0, 3), (1, 2), (1, 3)] {
            assert_eq!(gt.j_true[(a, b)], 0.0);
            assert_abs_diff_eq!(gt.sigma_true[(a, b)], 0.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn chain_precision_has_conditional_independence() {
        let f = CliqueForest::from_cliques(3, vec![[0, 1].into(), [1, 2].into()], None).unwrap();
        let gt = chordal_precision(&f, 0.1).unwrap();
        assert_eq!(gt.j_true[(0, 2)], 0.0);
        // clique blocks of the sampling covariance are the factor covariances
        assert_abs_diff_eq!(gt.sigma_true[(1, 1)], 2.1, epsilon = 1e-10);
        assert_abs_diff_eq!(gt.sigma_true[(0, 0)], 1.1, epsilon = 1e-10);
        assert_abs_diff_eq!(gt.sigma_true[(0, 1)], 1.0, epsilon = 1e-10);
        // partial correlation of X0, X2 given X1
        let inv = linalg::spd_inverse(&gt.sigma_true).unwrap();
        assert_abs_diff_eq!(inv[(0, 2)], 0.0, epsilon = 1e-10);
    }

    #[test]
    fn random_pd_spectrum_and_orthogonality() {
        let mut r = rng::from_seed(3);
        let q = random_orthogonal(12, &mut r);
        assert!((q.transpose() * &q - DMatrix::identity(12, 12)).amax() < 1e-10);

        let mut r = rng::from_seed(4);
        let gt = random_pd_matrix(10, (0.01, 100.0), &mut r).unwrap();
        let ev = linalg::eigenvalues_desc(&gt.sigma_true);
        assert!(ev.iter().all(|&x| (0.01 - 1e-9..=100.0 + 1e-9).contains(&x)));
        assert!((gt.sigma_true.clone() * &gt.j_true - DMatrix::identity(10, 10)).amax() < 1e-8);

        let gt = random_pd_matrix(5, (2.0, 2.0), &mut r).unwrap();
        assert!((gt.sigma_true - DMatrix::identity(5, 5) * 2.0).amax() < 1e-12);
        assert!(random_pd_matrix(5, (0.0, 1.0), &mut r).is_err());
    }

    #[test]
    fn factor_model_structure() {
        let gt = factor_model_cov(20, 1, &mut rng::from_seed(5)).unwrap();
        assert!(linalg::min_eigenvalue(&gt.sigma_true) > 0.0);
        for i in 0..20 {
            assert_abs_diff_eq!(gt.sigma_true[(i, i)], 1.0, epsilon = 1e-12);
        }
        assert!(factor_model_cov(5, 5, &mut rng::from_seed(5)).is_err());
        assert!(factor_model_cov(5, 0, &mut rng::from_seed(5)).is_err());
    }

    #[test]
    fn mvn_shapes_and_determinism() {
        let s = DMatrix::identity(3, 3);
        let one = mvn_sample(&s, 1, &mut rng::from_seed(1)).unwrap();
        assert_eq!(one.shape(), (1, 3));
        let a = mvn_sample(&s, 50, &mut rng::from_seed(2)).unwrap();
        let b = mvn_sample(&s, 50, &mut rng::from_seed(2)).unwrap();
        assert_eq!(a, b);
        let bad = DMatrix::from_element(2, 2, 1.0);
        assert!(mvn_sample(&bad, 3, &mut rng::from_seed(1)).is_err());
    }
}
