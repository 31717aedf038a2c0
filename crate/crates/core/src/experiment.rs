//! Train/validation/test benchmark harness.
//!
//! For every training/validation pair each method selects its
//! hyper-parameters by validation log-likelihood, then the selected model is
//! scored on every test set of that pair. Results are kept per cell and
//! aggregated into means and quartiles.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use nalgebra::DMatrix;
use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::gain::{GainConfig, GainMode};
use crate::gaussian::{
    gaussian_loglik_score, pre_shrink, sample_correlation, shrunk_precision, CorrelationMatrix,
    TargetKind,
};
use crate::graph::CliqueForest;
use crate::io;
use crate::linalg;
use crate::mfcf::{mfcf, MfcfConfig, SimilarityInput};
use crate::rng;
use crate::synth::{self, GroundTruth, SynthSpec};

/// Entries with `|x| <= ZERO_TOL` count as zero.
pub const ZERO_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum MethodKind {
    #[serde(rename = "MFCF_FIX")]
    MfcfFix,
    #[serde(rename = "MFCF_FIX_ID")]
    MfcfFixId,
    #[serde(rename = "MFCF_VAR")]
    MfcfVar,
    #[serde(rename = "MFCF_VAR_ID")]
    MfcfVarId,
    #[serde(rename = "SHRINKAGE")]
    Shrinkage,
    #[serde(rename = "NULL")]
    Null,
    #[serde(rename = "EXTERNAL")]
    External,
}

impl MethodKind {
    pub fn label(self) -> &'static str {
        match self {
            MethodKind::MfcfFix => "MFCF_FIX",
            MethodKind::MfcfFixId => "MFCF_FIX_ID",
            MethodKind::MfcfVar => "MFCF_VAR",
            MethodKind::MfcfVarId => "MFCF_VAR_ID",
            MethodKind::Shrinkage => "SHRINKAGE",
            MethodKind::Null => "NULL",
            MethodKind::External => "EXTERNAL",
        }
    }

    pub fn is_mfcf(self) -> bool {
        matches!(
            self,
            MethodKind::MfcfFix | MethodKind::MfcfFixId | MethodKind::MfcfVar | MethodKind::MfcfVarId
        )
    }

    fn target(self) -> TargetKind {
        match self {
            MethodKind::MfcfFixId | MethodKind::MfcfVarId => TargetKind::Identity,
            _ => TargetKind::CliqueTree,
        }
    }
}

pub fn default_clique_sizes() -> Vec<usize> {
    (2..=20).collect()
}

/// 21 points uniform on `[0, 1]`.
pub fn default_thetas() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSpec {
    pub name: String,
    pub kind: MethodKind,
    #[serde(default = "default_clique_sizes")]
    pub clique_sizes: Vec<usize>,
    #[serde(default = "default_thetas")]
    pub thetas: Vec<f64>,
    /// Significance level of the validated gain (variable clique sizes).
    #[serde(default = "default_p_value")]
    pub p_value: f64,
    /// Precision matrix file for [`MethodKind::External`].
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub external: Option<PathBuf>,
}

fn default_p_value() -> f64 {
    0.05
}

impl MethodSpec {
    pub fn new(kind: MethodKind) -> Self {
        MethodSpec {
            name: kind.label().to_string(),
            kind,
            clique_sizes: default_clique_sizes(),
            thetas: default_thetas(),
            p_value: default_p_value(),
            external: None,
        }
    }

    pub fn external(name: &str, path: impl Into<PathBuf>) -> Self {
        MethodSpec { name: name.to_string(), external: Some(path.into()), ..Self::new(MethodKind::External) }
    }

    /// The six built-in methods with default grids.
    pub fn standard() -> Vec<MethodSpec> {
        use MethodKind::*;
        [MfcfFix, MfcfFixId, MfcfVar, MfcfVarId, Shrinkage, Null].into_iter().map(Self::new).collect()
    }

    fn validate(&self) -> Result<()> {
        if self.kind.is_mfcf() && self.clique_sizes.is_empty() {
            return Err(Error::EmptyGrid("clique sizes"));
        }
        if matches!(self.kind, MethodKind::Shrinkage) || self.kind.is_mfcf() {
            if self.thetas.is_empty() {
                return Err(Error::EmptyGrid("theta"));
            }
            if let Some(t) = self.thetas.iter().find(|t| !(0.0..=1.0).contains(*t)) {
                return Err(Error::InvalidConfig(format!("theta {t} outside [0, 1]")));
            }
        }
        if self.kind == MethodKind::External && self.external.is_none() {
            return Err(Error::InvalidConfig(format!("method {} needs a matrix file", self.name)));
        }
        Ok(())
    }
}

/// Element-wise classification of off-diagonal entries.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Confusion {
    pub tp: usize,
    pub tn: usize,
    pub fp: usize,
    pub fn_: usize,
}

impl Confusion {
    pub fn total(&self) -> usize {
        self.tp + self.tn + self.fp + self.fn_
    }

    pub fn accuracy(&self) -> f64 {
        ratio(self.tp + self.tn, self.total())
    }

    pub fn sensitivity(&self) -> f64 {
        ratio(self.tp, self.tp + self.fn_)
    }

    pub fn specificity(&self) -> f64 {
        ratio(self.tn, self.tn + self.fp)
    }
}

/// `num / den`, with an empty class scoring 1.
fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        1.0
    } else {
        num as f64 / den as f64
    }
}

fn same_shape(a: &DMatrix<f64>, b: &DMatrix<f64>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::DimensionMismatch(format!("{:?} vs {:?}", a.shape(), b.shape())));
    }
    Ok(())
}

pub fn confusion(j_est: &DMatrix<f64>, j_true: &DMatrix<f64>, zero_tol: f64) -> Result<Confusion> {
    same_shape(j_est, j_true)?;
    let mut c = Confusion { tp: 0, tn: 0, fp: 0, fn_: 0 };
    let p = j_true.nrows();
    for i in 0..p {
        for j in i + 1..p {
            let est = j_est[(i, j)].abs() > zero_tol;
            let truth = j_true[(i, j)].abs() > zero_tol;
            match (est, truth) {
                (true, true) => c.tp += 1,
                (false, false) => c.tn += 1,
                (true, false) => c.fp += 1,
                (false, true) => c.fn_ += 1,
            }
        }
    }
    Ok(c)
}

/// `(accuracy, sensitivity, specificity)`.
pub fn confusion_metrics(
    j_est: &DMatrix<f64>,
    j_true: &DMatrix<f64>,
    zero_tol: f64,
) -> Result<(f64, f64, f64)> {
    let c = confusion(j_est, j_true, zero_tol)?;
    Ok((c.accuracy(), c.sensitivity(), c.specificity()))
}

/// Pearson correlation of the two matrices flattened to vectors.
pub fn matrix_correlation(j_est: &DMatrix<f64>, j_true: &DMatrix<f64>) -> Result<f64> {
    same_shape(j_est, j_true)?;
    let n = j_est.len() as f64;
    let ma = j_est.iter().sum::<f64>() / n;
    let mb = j_true.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (a, b) in j_est.iter().zip(j_true.iter()) {
        sab += (a - ma) * (b - mb);
        saa += (a - ma) * (a - ma);
        sbb += (b - mb) * (b - mb);
    }
    if saa == 0.0 || sbb == 0.0 {
        return Err(Error::InvalidConfig("matrix correlation of a constant matrix".into()));
    }
    Ok((sab / (saa * sbb).sqrt()).clamp(-1.0, 1.0))
}

fn spectrum_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn inverted(ev: &[f64]) -> Result<Vec<f64>> {
    if ev.iter().any(|&x| x <= 0.0) {
        return Err(Error::NotPositiveDefinite("zero or negative eigenvalue".into()));
    }
    let mut inv: Vec<f64> = ev.iter().map(|x| 1.0 / x).collect();
    inv.sort_by(|a, b| b.total_cmp(a));
    Ok(inv)
}

/// Euclidean distance between the descending spectra. With `normalized`
/// the distance is divided by that of the identity matrix.
pub fn eig_distance(j_est: &DMatrix<f64>, j_true: &DMatrix<f64>, normalized: bool) -> Result<f64> {
    same_shape(j_est, j_true)?;
    let t = linalg::eigenvalues_desc(j_true);
    let d = spectrum_distance(&linalg::eigenvalues_desc(j_est), &t);
    if !normalized {
        return Ok(d);
    }
    let ones = vec![1.0; t.len()];
    normalize(d, spectrum_distance(&ones, &t))
}

/// As [`eig_distance`] on the reciprocal spectra.
pub fn inv_eig_distance(
    j_est: &DMatrix<f64>,
    j_true: &DMatrix<f64>,
    normalized: bool,
) -> Result<f64> {
    same_shape(j_est, j_true)?;
    let t = inverted(&linalg::eigenvalues_desc(j_true))?;
    let d = spectrum_distance(&inverted(&linalg::eigenvalues_desc(j_est))?, &t);
    if !normalized {
        return Ok(d);
    }
    let ones = vec![1.0; t.len()];
    normalize(d, spectrum_distance(&ones, &t))
}

fn normalize(d: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::InvalidConfig("identity reference distance is zero".into()));
    }
    Ok(d / reference)
}

/// Off-diagonal upper-triangle entries with `|x| > ZERO_TOL`.
pub fn nonzero_count(j: &DMatrix<f64>) -> usize {
    let p = j.nrows();
    (0..p).map(|i| (i + 1..p).filter(|&k| j[(i, k)].abs() > ZERO_TOL).count()).sum()
}

/// A model chosen by [`grid_search`].
#[derive(Clone, Debug)]
pub struct Fitted {
    pub j: DMatrix<f64>,
    pub forest: Option<CliqueForest>,
    pub theta: Option<f64>,
    pub clique_size: Option<usize>,
    pub validation_loglik: f64,
}

fn consider(best: &mut Option<Fitted>, cand: Fitted) {
    if best.as_ref().is_none_or(|b| cand.validation_loglik > b.validation_loglik) {
        *best = Some(cand);
    }
}

/// Hyper-parameter selection by validation log-likelihood. Grid points
/// whose estimate is not positive definite are skipped. Ties keep the
/// earliest grid point.
pub fn grid_search(
    train: &CorrelationMatrix,
    validation: &DMatrix<f64>,
    method: &MethodSpec,
    epsilon: f64,
) -> Result<Fitted> {
    method.validate()?;
    let p = train.p();
    let mut best: Option<Fitted> = None;
    let mut last_err = None;
    match method.kind {
        MethodKind::Null => {
            let j = DMatrix::identity(p, p);
            let validation_loglik = gaussian_loglik_score(&j, validation)?;
            return Ok(Fitted { j, forest: None, theta: None, clique_size: None, validation_loglik });
        }
        MethodKind::External => {
            let path = method.external.as_ref().expect("validated");
            let j = io::read_matrix_csv(path)?.values;
            same_shape(&j, validation)?;
            let validation_loglik = gaussian_loglik_score(&j, validation)?;
            return Ok(Fitted { j, forest: None, theta: None, clique_size: None, validation_loglik });
        }
        MethodKind::Shrinkage => {
            for &theta in &method.thetas {
                let mut s = train.values() * (1.0 - theta);
                for i in 0..p {
                    s[(i, i)] += theta;
                }
                let fit = linalg::spd_inverse(&s).and_then(|j| {
                    let ll = gaussian_loglik_score(&j, validation)?;
                    Ok(Fitted { j, forest: None, theta: Some(theta), clique_size: None, validation_loglik: ll })
                });
                match fit {
                    Ok(f) => consider(&mut best, f),
                    Err(e) => last_err = Some(e),
                }
            }
        }
        kind => {
            let pre = pre_shrink(train, epsilon);
            let input = SimilarityInput::Similarity {
                matrix: pre.values().clone(),
                n_obs: train.n_obs(),
            };
            let mut sizes: Vec<usize> = method.clique_sizes.iter().map(|&k| k.min(p.max(2))).collect();
            sizes.dedup();
            for k in sizes {
                let cfg = mfcf_config(kind, k, method.p_value);
                let forest = match mfcf(&input, &cfg) {
                    Ok(f) => f,
                    Err(e) => {
                        last_err = Some(e);
                        continue;
                    }
                };
                for &theta in &method.thetas {
                    let fit = shrunk_precision(&pre, &forest, theta, kind.target()).and_then(|est| {
                        let ll = gaussian_loglik_score(&est.j, validation)?;
                        Ok(Fitted {
                            j: est.j,
                            forest: Some(forest.clone()),
                            theta: Some(theta),
                            clique_size: Some(k),
                            validation_loglik: ll,
                        })
                    });
                    match fit {
                        Ok(f) => consider(&mut best, f),
                        Err(e) => last_err = Some(e),
                    }
                }
            }
        }
    }
    best.ok_or_else(|| {
        last_err.unwrap_or_else(|| Error::InvalidConfig("no grid point could be fitted".into()))
    })
}

/// Search configuration for an MFCF method at clique size `k`.
pub fn mfcf_config(kind: MethodKind, k: usize, p_value: f64) -> MfcfConfig {
    match kind {
        MethodKind::MfcfVar | MethodKind::MfcfVarId => MfcfConfig {
            max_clique_size: k,
            min_clique_size: 1,
            gain: GainConfig { mode: GainMode::GaussLoglikValidated, p_value, ..Default::default() },
            ..Default::default()
        },
        _ => MfcfConfig::fixed(k, GainConfig { mode: GainMode::GaussLoglik, ..Default::default() }),
    }
}

/// Where the benchmark data comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    Synth(SynthSpec),
    /// Rows of a data CSV, reshuffled per pair: 40% train, 20% validation,
    /// the rest split evenly into the test sets. No ground truth.
    DataFile(PathBuf),
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub source: DataSource,
    /// Training sizes to sweep; defaults to the synthetic spec's `n`.
    #[serde(default)]
    pub n_values: Option<Vec<usize>>,
    /// Rows per test set; defaults to the training size.
    #[serde(default)]
    pub n_test: Option<usize>,
    #[serde(default = "default_pairs")]
    pub pairs: usize,
    #[serde(default = "default_tests")]
    pub tests: usize,
    #[serde(default = "MethodSpec::standard")]
    pub methods: Vec<MethodSpec>,
    /// Pre-shrinkage applied to training correlations before structure
    /// learning.
    #[serde(default = "default_epsilon")]
    pub epsilon: f64,
    /// Divide eigenvalue distances by those of the identity estimate.
    #[serde(default = "default_true")]
    pub normalize_eig: bool,
}

fn default_pairs() -> usize {
    5
}
fn default_tests() -> usize {
    10
}
fn default_epsilon() -> f64 {
    0.05
}
fn default_true() -> bool {
    true
}

impl ExperimentConfig {
    pub fn synth(spec: SynthSpec) -> Self {
        ExperimentConfig {
            source: DataSource::Synth(spec),
            n_values: None,
            n_test: None,
            pairs: default_pairs(),
            tests: default_tests(),
            methods: MethodSpec::standard(),
            epsilon: default_epsilon(),
            normalize_eig: true,
        }
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Ok(serde_json::from_str(&text)?)
    }

    pub fn validate(&self) -> Result<()> {
        if self.pairs == 0 || self.tests == 0 {
            return Err(Error::InvalidConfig("pairs and tests must be positive".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::EmptyGrid("methods"));
        }
        let mut names: Vec<&str> = self.methods.iter().map(|m| m.name.as_str()).collect();
        names.sort_unstable();
        if let Some(w) = names.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::InvalidConfig(format!("duplicate method name {}", w[0])));
        }
        for m in &self.methods {
            m.validate()?;
        }
        if matches!(self.n_values.as_deref(), Some([])) {
            return Err(Error::EmptyGrid("n_values"));
        }
        if !(0.0..1.0).contains(&self.epsilon) {
            return Err(Error::InvalidConfig(format!("epsilon {} outside [0, 1)", self.epsilon)));
        }
        Ok(())
    }
}

/// Scores of one selected model on one test set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricRecord {
    pub loglik: f64,
    pub accuracy: Option<f64>,
    pub sensitivity: Option<f64>,
    pub specificity: Option<f64>,
    pub correlation: Option<f64>,
    pub eig_distance: Option<f64>,
    pub inv_eig_distance: Option<f64>,
    pub nonzero_count: usize,
    pub theta_selected: Option<f64>,
    pub clique_size_selected: Option<usize>,
}

pub const METRICS: [&str; 8] = [
    "loglik",
    "accuracy",
    "sensitivity",
    "specificity",
    "correlation",
    "eig_distance",
    "inv_eig_distance",
    "nonzero_count",
];

impl MetricRecord {
    pub fn get(&self, metric: &str) -> Option<f64> {
        match metric {
            "loglik" => Some(self.loglik),
            "accuracy" => self.accuracy,
            "sensitivity" => self.sensitivity,
            "specificity" => self.specificity,
            "correlation" => self.correlation,
            "eig_distance" => self.eig_distance,
            "inv_eig_distance" => self.inv_eig_distance,
            "nonzero_count" => Some(self.nonzero_count as f64),
            "theta_selected" => self.theta_selected,
            "clique_size_selected" => self.clique_size_selected.map(|k| k as f64),
            _ => None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cell {
    pub n: usize,
    pub method: String,
    pub pair: usize,
    pub test: usize,
    pub result: std::result::Result<MetricRecord, String>,
}

/// Boxplot statistics of one metric.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub count: usize,
    pub mean: f64,
    pub min: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub max: f64,
}

impl Summary {
    /// Statistics of `values`; independent of their order.
    pub fn of(values: &[f64]) -> Option<Summary> {
        if values.is_empty() {
            return None;
        }
        let mut v = values.to_vec();
        v.sort_by(f64::total_cmp);
        let q = |f: f64| {
            let h = f * (v.len() - 1) as f64;
            let lo = h.floor() as usize;
            let hi = h.ceil() as usize;
            v[lo] + (h - lo as f64) * (v[hi] - v[lo])
        };
        Some(Summary {
            count: v.len(),
            mean: v.iter().sum::<f64>() / v.len() as f64,
            min: v[0],
            q1: q(0.25),
            median: q(0.5),
            q3: q(0.75),
            max: v[v.len() - 1],
        })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MethodSummary {
    pub n: usize,
    pub method: String,
    pub failed_cells: usize,
    pub metrics: BTreeMap<String, Summary>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HistogramRow {
    pub n: usize,
    pub method: String,
    pub clique_size: usize,
    pub count: usize,
}

/// The model selected for one training pair.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitRecord {
    pub n: usize,
    pub method: String,
    pub pair: usize,
    pub result: std::result::Result<Selection, String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Selection {
    pub theta: Option<f64>,
    pub clique_size: Option<usize>,
    pub validation_loglik: f64,
    /// Sizes of the forest's cliques in forest order; empty for dense methods.
    pub clique_sizes: Vec<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub fits: Vec<FitRecord>,
    pub cells: Vec<Cell>,
    pub summaries: Vec<MethodSummary>,
    pub clique_histogram: Vec<HistogramRow>,
}

impl ExperimentReport {
    pub fn summary(&self, n: usize, method: &str) -> Option<&MethodSummary> {
        self.summaries.iter().find(|s| s.n == n && s.method == method)
    }

    pub fn mean(&self, n: usize, method: &str, metric: &str) -> Option<f64> {
        self.summary(n, method)?.metrics.get(metric).map(|s| s.mean)
    }

    /// Clique counts by size for one method and training size.
    pub fn histogram(&self, n: usize, method: &str) -> BTreeMap<usize, usize> {
        self.clique_histogram
            .iter()
            .filter(|r| r.n == n && r.method == method)
            .map(|r| (r.clique_size, r.count))
            .collect()
    }
}

/// One training size: ground truth (if any) and all datasets.
struct Datasets {
    truth: Option<DMatrix<f64>>,
    pairs: Vec<(CorrelationMatrix, DMatrix<f64>, Vec<DMatrix<f64>>)>,
}

/// Precision of the correlation-scale truth; support is unchanged.
fn correlation_scale(gt: &GroundTruth) -> DMatrix<f64> {
    let d: Vec<f64> = (0..gt.sigma_true.nrows()).map(|i| gt.sigma_true[(i, i)].sqrt()).collect();
    let mut j = gt.j_true.clone();
    for r in 0..j.nrows() {
        for c in 0..j.ncols() {
            j[(r, c)] *= d[r] * d[c];
        }
    }
    j
}

fn synth_datasets(spec: &SynthSpec, n: usize, cfg: &ExperimentConfig) -> Result<Datasets> {
    let gt = synth::ground_truth(spec)?;
    let n_test = cfg.n_test.unwrap_or(n);
    let draw = |path: &[u64], rows: usize| -> Result<DMatrix<f64>> {
        let mut r = rng::stream(spec.seed, path);
        let x = synth::mvn_sample(&gt.sigma_true, rows, &mut r)?;
        Ok(sample_correlation(&x, None)?.into_inner())
    };
    let pairs = (0..cfg.pairs)
        .into_par_iter()
        .map(|k| {
            let k = k as u64;
            let train = CorrelationMatrix::new(draw(&[1, n as u64, k, 0], n)?, Some(n))?;
            let validation = draw(&[1, n as u64, k, 1], n)?;
            let tests = (0..cfg.tests as u64)
                .map(|t| draw(&[1, n as u64, k, 2, t], n_test))
                .collect::<Result<Vec<_>>>()?;
            Ok((train, validation, tests))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Datasets { truth: Some(correlation_scale(&gt)), pairs })
}

fn file_datasets(path: &Path, seed: u64, cfg: &ExperimentConfig) -> Result<Datasets> {
    let data = io::read_matrix_csv(path)?;
    let x = data.values;
    let rows = x.nrows();
    let n_train = rows * 2 / 5;
    let n_val = rows / 5;
    let per_test = (rows - n_train - n_val) / cfg.tests;
    if n_train < 2 || n_val < 2 || per_test < 2 {
        return Err(Error::InvalidConfig(format!("{rows} rows are too few to split")));
    }
    let corr = |idx: &[usize]| -> Result<CorrelationMatrix> {
        let sub = DMatrix::from_fn(idx.len(), x.ncols(), |i, j| x[(idx[i], j)]);
        sample_correlation(&sub, data.labels.as_deref())
    };
    let mut pairs = Vec::new();
    for k in 0..cfg.pairs as u64 {
        let mut order: Vec<usize> = (0..rows).collect();
        order.shuffle(&mut rng::stream(seed, &[3, k]));
        let train = corr(&order[..n_train])?.values().clone();
        let validation = corr(&order[n_train..n_train + n_val])?.into_inner();
        let rest = &order[n_train + n_val..];
        let tests = (0..cfg.tests)
            .map(|t| corr(&rest[t * per_test..(t + 1) * per_test]).map(|c| c.into_inner()))
            .collect::<Result<Vec<_>>>()?;
        pairs.push((CorrelationMatrix::new(train, Some(n_train))?, validation, tests));
    }
    Ok(Datasets { truth: None, pairs })
}

fn score(
    fit: &Fitted,
    test: &DMatrix<f64>,
    truth: Option<&DMatrix<f64>>,
    sparse_truth: bool,
    normalize_eig: bool,
) -> Result<MetricRecord> {
    let loglik = gaussian_loglik_score(&fit.j, test)?;
    let (mut accuracy, mut sensitivity, mut specificity) = (None, None, None);
    let (mut correlation, mut eig, mut inv_eig) = (None, None, None);
    if let Some(t) = truth {
        if sparse_truth {
            let (a, s, sp) = confusion_metrics(&fit.j, t, ZERO_TOL)?;
            accuracy = Some(a);
            sensitivity = Some(s);
            specificity = Some(sp);
        }
        correlation = Some(matrix_correlation(&fit.j, t)?);
        eig = Some(eig_distance(&fit.j, t, normalize_eig)?);
        inv_eig = Some(inv_eig_distance(&fit.j, t, normalize_eig)?);
    }
    Ok(MetricRecord {
        loglik,
        accuracy,
        sensitivity,
        specificity,
        correlation,
        eig_distance: eig,
        inv_eig_distance: inv_eig,
        nonzero_count: nonzero_count(&fit.j),
        theta_selected: fit.theta,
        clique_size_selected: fit.clique_size,
    })
}

/// Run the whole protocol. Failures of individual fits or scores are
/// recorded in their cells; only configuration and data errors abort.
pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentReport> {
    cfg.validate()?;
    let n_values: Vec<usize> = match (&cfg.n_values, &cfg.source) {
        (Some(v), _) => v.clone(),
        (None, DataSource::Synth(s)) => vec![s.n],
        (None, DataSource::DataFile(_)) => vec![0],
    };
    let mut cells = Vec::new();
    let mut fit_records = Vec::new();
    let mut clique_histogram = Vec::new();
    for &n in &n_values {
        let (data, sparse_truth) = match &cfg.source {
            DataSource::Synth(spec) => {
                if n < 2 {
                    return Err(Error::InvalidConfig(format!("n = {n} is too small")));
                }
                let sparse = spec.kind == synth::SynthKind::ChordalFactor;
                (synth_datasets(spec, n, cfg)?, sparse)
            }
            DataSource::DataFile(path) => (file_datasets(path, 0, cfg)?, false),
        };
        let jobs: Vec<(usize, usize)> = (0..cfg.methods.len())
            .flat_map(|m| (0..cfg.pairs).map(move |k| (m, k)))
            .collect();
        let fits: Vec<std::result::Result<Fitted, String>> = jobs
            .par_iter()
            .map(|&(m, k)| {
                let (train, validation, _) = &data.pairs[k];
                grid_search(train, validation, &cfg.methods[m], cfg.epsilon).map_err(|e| e.to_string())
            })
            .collect();
        for (&(m, k), fit) in jobs.iter().zip(&fits) {
            let method = &cfg.methods[m];
            fit_records.push(FitRecord {
                n,
                method: method.name.clone(),
                pair: k,
                result: fit.as_ref().map_err(Clone::clone).map(|f| Selection {
                    theta: f.theta,
                    clique_size: f.clique_size,
                    validation_loglik: f.validation_loglik,
                    clique_sizes: f
                        .forest
                        .as_ref()
                        .map(|t| t.cliques().iter().map(|c| c.len()).collect())
                        .unwrap_or_default(),
                }),
            });
            for (t, test) in data.pairs[k].2.iter().enumerate() {
                let result = fit.clone().and_then(|f| {
                    score(&f, test, data.truth.as_ref(), sparse_truth, cfg.normalize_eig)
                        .map_err(|e| e.to_string())
                });
                cells.push(Cell { n, method: method.name.clone(), pair: k, test: t, result });
            }
        }
        for method in &cfg.methods {
            if !method.kind.is_mfcf() {
                continue;
            }
            let mut hist: BTreeMap<usize, usize> = BTreeMap::new();
            for (&(m, _), fit) in jobs.iter().zip(&fits) {
                if cfg.methods[m].name != method.name {
                    continue;
                }
                if let Ok(Fitted { forest: Some(f), .. }) = fit {
                    for c in f.cliques() {
                        *hist.entry(c.len()).or_default() += 1;
                    }
                }
            }
            clique_histogram.extend(hist.into_iter().map(|(clique_size, count)| HistogramRow {
                n,
                method: method.name.clone(),
                clique_size,
                count,
            }));
        }
    }
    let summaries = summarize(&cells, &n_values, &cfg.methods);
    Ok(ExperimentReport { fits: fit_records, cells, summaries, clique_histogram })
}

fn summarize(cells: &[Cell], n_values: &[usize], methods: &[MethodSpec]) -> Vec<MethodSummary> {
    let mut out = Vec::new();
    for &n in n_values {
        for m in methods {
            let mine: Vec<&Cell> = cells.iter().filter(|c| c.n == n && c.method == m.name).collect();
            let ok: Vec<&MetricRecord> = mine.iter().filter_map(|c| c.result.as_ref().ok()).collect();
            let mut metrics = BTreeMap::new();
            for name in METRICS.iter().chain(&["theta_selected", "clique_size_selected"]) {
                let vals: Vec<f64> = ok.iter().filter_map(|r| r.get(name)).collect();
                if let Some(s) = Summary::of(&vals) {
                    metrics.insert(name.to_string(), s);
                }
            }
            out.push(MethodSummary {
                n,
                method: m.name.clone(),
                failed_cells: mine.len() - ok.len(),
                metrics,
            });
        }
    }
    out
}

fn csv_value(x: Option<f64>) -> String {
    x.map(io::fmt_f64).unwrap_or_else(|| "n/a".into())
}

/// Long format: one row per cell and metric.
pub fn cells_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("n,method,pair,test,metric,value\n");
    for c in &report.cells {
        let head = format!("{},{},{},{}", c.n, c.method, c.pair, c.test);
        match &c.result {
            Ok(r) => {
                for m in METRICS.iter().chain(&["theta_selected", "clique_size_selected"]) {
                    let _ = writeln!(out, "{head},{m},{}", csv_value(r.get(m)));
                }
            }
            Err(e) => {
                let _ = writeln!(out, "{head},error,\"{}\"", e.replace('"', "'"));
            }
        }
    }
    out
}

pub fn histogram_csv(report: &ExperimentReport) -> String {
    let mut out = String::from("n,method,clique_size,count\n");
    for r in &report.clique_histogram {
        let _ = writeln!(out, "{},{},{},{}", r.n, r.method, r.clique_size, r.count);
    }
    out
}

/// Static boxplot of one metric, one box per (training size, method).
pub fn boxplot_svg(report: &ExperimentReport, metric: &str) -> Option<String> {
    let boxes: Vec<(String, &Summary)> = report
        .summaries
        .iter()
        .filter_map(|s| s.metrics.get(metric).map(|m| (format!("{} n={}", s.method, s.n), m)))
        .collect();
    if boxes.is_empty() {
        return None;
    }
    let lo = boxes.iter().map(|b| b.1.min).fold(f64::INFINITY, f64::min);
    let hi = boxes.iter().map(|b| b.1.max).fold(f64::NEG_INFINITY, f64::max);
    let span = if hi > lo { hi - lo } else { 1.0 };
    let (w, h, top, bottom, step) = (60.0 + 50.0 * boxes.len() as f64, 420.0, 30.0, 300.0, 50.0);
    let y = |v: f64| bottom - (v - lo) / span * (bottom - top);
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" font-family=\"sans-serif\" font-size=\"10\">\n\
         <text x=\"10\" y=\"18\" font-size=\"13\">{metric}</text>\n\
         <text x=\"5\" y=\"{:.1}\">{}</text>\n<text x=\"5\" y=\"{:.1}\">{}</text>\n",
        top + 4.0,
        fmt_short(hi),
        bottom + 4.0,
        fmt_short(lo)
    );
    for (i, (label, b)) in boxes.iter().enumerate() {
        let x = 60.0 + step * i as f64;
        let _ = write!(
            s,
            "<line x1=\"{x:.1}\" y1=\"{:.1}\" x2=\"{x:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n\
             <rect x=\"{:.1}\" y=\"{:.1}\" width=\"30\" height=\"{:.1}\" fill=\"#9ecae1\" stroke=\"black\"/>\n\
             <line x1=\"{:.1}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\" stroke-width=\"2\"/>\n\
             <text transform=\"translate({:.1},{:.1}) rotate(60)\">{label}</text>\n",
            y(b.max),
            y(b.min),
            x - 15.0,
            y(b.q3),
            (y(b.q1) - y(b.q3)).max(0.5),
            x - 15.0,
            y(b.median),
            x + 15.0,
            y(b.median),
            x - 10.0,
            bottom + 12.0,
        );
    }
    s.push_str("</svg>\n");
    Some(s)
}

fn fmt_short(x: f64) -> String {
    format!("{x:.4}")
}

/// Write `cells.csv`, `summary.json`, `cliques_hist.csv` and, with `plot`,
/// one SVG per metric into `dir`.
pub fn write_report(report: &ExperimentReport, dir: impl AsRef<Path>, plot: bool) -> Result<()> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("cells.csv"), cells_csv(report))?;
    let mut summary = serde_json::to_string_pretty(&report.summaries)?;
    summary.push('\n');
    std::fs::write(dir.join("summary.json"), summary)?;
    std::fs::write(dir.join("cliques_hist.csv"), histogram_csv(report))?;
    if plot {
        for m in METRICS {
            if let Some(svg) = boxplot_svg(report, m) {
                std::fs::write(dir.join(format!("{m}.svg")), svg)?;
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn diag(v: &[f64]) -> DMatrix<f64> {
        DMatrix::from_diagonal(&nalgebra::DVector::from_vec(v.to_vec()))
    }

    #[test]
    fn confusion_trivial_cases() {
        let j = DMatrix::from_row_slice(3, 3, &[2.0, -0.5, 0.0, -0.5, 2.0, 0.3, 0.0, 0.3, 2.0]);
        assert_eq!(confusion_metrics(&j, &j, ZERO_TOL).unwrap(), (1.0, 1.0, 1.0));
        let (_, sens, spec) = confusion_metrics(&DMatrix::identity(3, 3), &j, ZERO_TOL).unwrap();
        assert_eq!((sens, spec), (0.0, 1.0));
        assert!(confusion(&DMatrix::identity(2, 2), &j, ZERO_TOL).is_err());
    }

    #[test]
    fn confusion_hand_count() {
        // truth edges (0,1) (1,2) (3,4); estimate edges (0,1) (2,3) (3,4)
        let mut t = DMatrix::identity(5, 5);
        let mut e = DMatrix::identity(5, 5);
        for (a, b) in [(0, 1), (1, 2), (3, 4)] {
            t[(a, b)] = 0.1;
            t[(b, a)] = 0.1;
        }
        for (a, b) in [(0, 1), (2, 3), (3, 4)] {
            e[(a, b)] = -0.2;
            e[(b, a)] = -0.2;
        }
        e[(0, 4)] = 1e-12;
        let c = confusion(&e, &t, ZERO_TOL).unwrap();
        assert_eq!(c, Confusion { tp: 2, tn: 6, fp: 1, fn_: 1 });
        assert_abs_diff_eq!(c.accuracy(), 0.8);
        assert_abs_diff_eq!(c.sensitivity(), 2.0 / 3.0);
        assert_abs_diff_eq!(c.specificity(), 6.0 / 7.0);
    }

    #[test]
    fn correlation_invariances() {
        let j = DMatrix::from_row_slice(2, 2, &[2.0, -0.5, -0.5, 1.0]);
        assert_abs_diff_eq!(matrix_correlation(&j, &j).unwrap(), 1.0, epsilon = 1e-12);
        let affine = j.map(|x| 2.0 * x + 3.0);
        assert_abs_diff_eq!(matrix_correlation(&affine, &j).unwrap(), 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(matrix_correlation(&(-&j), &j).unwrap(), -1.0, epsilon = 1e-12);
        assert!(matrix_correlation(&DMatrix::zeros(2, 2), &j).is_err());
    }

    #[test]
    fn eigen_distances() {
        let t = diag(&[4.0, 1.0]);
        let i = DMatrix::identity(2, 2);
        assert_abs_diff_eq!(eig_distance(&t, &t, false).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(eig_distance(&i, &t, false).unwrap(), 3.0, epsilon = 1e-12);
        assert_abs_diff_eq!(inv_eig_distance(&i, &t, false).unwrap(), 0.75, epsilon = 1e-12);
        assert_eq!(eig_distance(&i, &t, true).unwrap(), 1.0);
        assert_eq!(inv_eig_distance(&i, &t, true).unwrap(), 1.0);
        assert!(inv_eig_distance(&diag(&[1.0, 0.0]), &t, false).is_err());
    }

    #[test]
    fn summary_statistics() {
        let s = Summary::of(&[4.0, 1.0, 3.0, 2.0]).unwrap();
        assert_eq!((s.min, s.max, s.mean, s.median), (1.0, 4.0, 2.5, 2.5));
        assert_eq!((s.q1, s.q3), (1.75, 3.25));
        assert!(Summary::of(&[]).is_none());
    }

    #[test]
    fn null_and_single_point_grids() {
        let train = CorrelationMatrix::new(
            DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]),
            Some(50),
        )
        .unwrap();
        let val = train.values().clone();
        let null = grid_search(&train, &val, &MethodSpec::new(MethodKind::Null), 0.05).unwrap();
        assert_eq!(null.j, DMatrix::identity(2, 2));
        assert_abs_diff_eq!(null.validation_loglik, -2.0);

        let mut m = MethodSpec::new(MethodKind::Shrinkage);
        m.thetas = vec![0.3];
        assert_eq!(grid_search(&train, &val, &m, 0.05).unwrap().theta, Some(0.3));
        m.thetas.clear();
        assert!(matches!(grid_search(&train, &val, &m, 0.05), Err(Error::EmptyGrid(_))));

        let mut m = MethodSpec::new(MethodKind::MfcfFix);
        m.clique_sizes = vec![2];
        m.thetas = vec![0.1];
        let f = grid_search(&train, &val, &m, 0.05).unwrap();
        assert_eq!((f.clique_size, f.theta), (Some(2), Some(0.1)));
    }

    #[test]
    fn shrinkage_is_dense() {
        let j = DMatrix::from_element(4, 4, 0.1) + DMatrix::identity(4, 4);
        assert_eq!(nonzero_count(&j), 6);
        assert_eq!(nonzero_count(&DMatrix::identity(4, 4)), 0);
    }
}
