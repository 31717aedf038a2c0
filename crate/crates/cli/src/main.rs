use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand, ValueEnum};
use mfcf::experiment::{run_experiment, write_report, DataSource, ExperimentConfig, MethodSpec};
use mfcf::gain::{chi2_quantile, lrt_statistic, GainConfig, GainMode};
use mfcf::gaussian::{pre_shrink, sample_correlation, shrunk_precision, CorrelationMatrix, TargetKind};
use mfcf::graph::{is_chordal, validate_perfect_sequence};
use mfcf::mfcf::{mfcf_with_report, MfcfConfig, SimilarityInput};
use mfcf::synth::{self, ForestParams, SynthKind, SynthSpec};
use mfcf::{io, rng, CliqueForest, DMatrix};

/// Sparse Gaussian structure learning with clique forests.
#[derive(Parser, Debug)]
#[command(name = "mfcf", version)]
struct Cli {
    /// Master random seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads (default: all cores). Output does not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Suppress progress messages on stderr.
    #[arg(long, global = true)]
    quiet: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Learn a clique forest from data or a similarity matrix.
    Learn(LearnArgs),
    /// Estimate a sparse precision matrix on a given forest.
    Precision(PrecisionArgs),
    /// Generate synthetic data with a known ground truth.
    Generate(GenerateArgs),
    /// Run a train/validation/test benchmark.
    Benchmark(BenchmarkArgs),
    /// Check the structural invariants of a forest JSON file.
    Validate(ValidateArgs),
    /// Likelihood-ratio statistic between two covariance matrices.
    Lrt(LrtArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum InputKind {
    /// Observations in rows, variables in columns.
    Data,
    /// A p x p correlation or covariance matrix.
    Similarity,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum GainArg {
    Similarity,
    Loglik,
    LoglikVal,
}

impl From<GainArg> for GainMode {
    fn from(g: GainArg) -> Self {
        match g {
            GainArg::Similarity => GainMode::Similarity,
            GainArg::Loglik => GainMode::GaussLoglik,
            GainArg::LoglikVal => GainMode::GaussLoglikValidated,
        }
    }
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Input CSV; a non-numeric first line is read as column labels.
    #[arg(long)]
    input: PathBuf,
    #[arg(long, value_enum, default_value = "data")]
    input_kind: InputKind,
    /// Number of observations behind a similarity input.
    #[arg(long)]
    n_obs: Option<usize>,
    /// Pre-shrinkage of the correlation matrix towards the identity.
    #[arg(long, default_value_t = 0.05)]
    epsilon: f64,
}

#[derive(Args, Debug)]
struct LearnArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, value_enum, default_value = "loglik")]
    gain: GainArg,
    #[arg(long, default_value_t = 4)]
    max_clique_size: usize,
    #[arg(long, default_value_t = 4)]
    min_clique_size: usize,
    /// Use every separator at most once.
    #[arg(long)]
    no_reuse_separators: bool,
    /// Significance level of the validated gain.
    #[arg(long, default_value_t = 0.05)]
    pvalue: f64,
    /// Only similarity edges above this weight contribute to the gain.
    #[arg(long)]
    similarity_threshold: Option<f64>,
    /// Initial forest whose cliques and separators seed the search.
    #[arg(long)]
    seed_cliques: Option<PathBuf>,
    /// Forest JSON output (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    /// Expansion log, one JSON object per line.
    #[arg(long)]
    log: Option<PathBuf>,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum TargetArg {
    Identity,
    CliqueTree,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum MatrixFormat {
    Dense,
    Triplet,
}

#[derive(Args, Debug)]
struct PrecisionArgs {
    #[arg(long)]
    forest: PathBuf,
    #[command(flatten)]
    input: InputArgs,
    /// Shrinkage intensity in [0, 1].
    #[arg(long, default_value_t = 0.0)]
    theta: f64,
    #[arg(long, value_enum, default_value = "clique-tree")]
    target: TargetArg,
    /// Output matrix (default: stdout).
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "dense")]
    format: MatrixFormat,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Chordal,
    Pd,
    Factor,
}

#[derive(Args, Debug)]
struct GenerateArgs {
    #[arg(long, value_enum, default_value = "chordal")]
    kind: KindArg,
    #[arg(long, default_value_t = 100)]
    p: usize,
    #[arg(long, default_value_t = 200)]
    n: usize,
    /// Number of factors (factor model).
    #[arg(long, default_value_t = 5)]
    factors: usize,
    /// Noise variance per variable (chordal model).
    #[arg(long, default_value_t = 0.1)]
    noise_var: f64,
    /// Largest clique of the random forest (chordal model).
    #[arg(long, default_value_t = 5)]
    max_clique_size: usize,
    /// Writes PREFIX.data.csv, PREFIX.sigma.csv, PREFIX.jtrue.csv and
    /// PREFIX.forest.json for the chordal model.
    #[arg(long)]
    out_prefix: PathBuf,
}

#[derive(Args, Debug)]
struct BenchmarkArgs {
    /// Experiment configuration JSON.
    #[arg(long)]
    spec: PathBuf,
    /// Report directory.
    #[arg(long)]
    out: PathBuf,
    /// Precomputed precision matrix scored as an extra method, NAME=J.csv.
    #[arg(long, value_parser = parse_external)]
    external: Vec<(String, PathBuf)>,
    /// Also write SVG boxplots per metric.
    #[arg(long)]
    plot: bool,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// Forest JSON file.
    forest: PathBuf,
}

#[derive(Args, Debug)]
struct LrtArgs {
    #[arg(long)]
    sigma0: PathBuf,
    #[arg(long)]
    sigma1: PathBuf,
    /// Degrees of freedom of sigma1, usually the sample size.
    #[arg(long)]
    nu: f64,
    /// Degrees of freedom of the reference chi-squared distribution.
    #[arg(long)]
    df: Option<usize>,
    #[arg(long, default_value_t = 0.05)]
    pvalue: f64,
    /// Omit the centering term, so identical matrices give nu * k.
    #[arg(long)]
    lrt_raw: bool,
}

fn parse_external(s: &str) -> Result<(String, PathBuf), String> {
    let (name, path) = s.split_once('=').ok_or("expected NAME=PATH")?;
    if name.is_empty() || path.is_empty() {
        return Err("expected NAME=PATH".into());
    }
    Ok((name.to_string(), PathBuf::from(path)))
}

/// Exit status 1: the input was read but is invalid for the task.
/// Exit status 2: the input could not be read or parsed.
struct Failure {
    code: u8,
    err: anyhow::Error,
}

impl From<mfcf::Error> for Failure {
    fn from(e: mfcf::Error) -> Self {
        let code = match e {
            mfcf::Error::Io(_) | mfcf::Error::Json(_) | mfcf::Error::Csv(_) | mfcf::Error::Parse(_) => 2,
            _ => 1,
        };
        Failure { code, err: e.into() }
    }
}

fn domain(err: anyhow::Error) -> Failure {
    Failure { code: 1, err }
}

fn io_failure(err: impl Into<anyhow::Error>, path: &Path) -> Failure {
    Failure { code: 2, err: err.into().context(format!("{}", path.display())) }
}

type CmdResult = Result<(), Failure>;

struct Ctx {
    seed: Option<u64>,
    quiet: bool,
}

impl Ctx {
    fn note(&self, msg: impl AsRef<str>) {
        if !self.quiet {
            eprintln!("{}", msg.as_ref());
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(t) = cli.threads {
        if t == 0 {
            eprintln!("error: --threads must be positive");
            return ExitCode::from(2);
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(t)
            .build_global()
            .expect("thread pool configured once");
    }
    let ctx = Ctx { seed: cli.seed, quiet: cli.quiet };
    let result = match cli.command {
        Command::Learn(a) => learn(&ctx, a),
        Command::Precision(a) => precision(&ctx, a),
        Command::Generate(a) => generate(&ctx, a),
        Command::Benchmark(a) => benchmark(&ctx, a),
        Command::Validate(a) => validate(a),
        Command::Lrt(a) => lrt(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.err);
            ExitCode::from(f.code)
        }
    }
}

fn check_readable(path: &Path) -> CmdResult {
    std::fs::metadata(path).map(|_| ()).map_err(|e| io_failure(e, path))
}

fn read_matrix(path: &Path) -> Result<io::LabelledMatrix, Failure> {
    io::read_matrix_csv(path).map_err(|e| {
        let f = Failure::from(e);
        Failure { code: f.code, err: f.err.context(format!("{}", path.display())) }
    })
}

fn read_forest(path: &Path) -> Result<CliqueForest, Failure> {
    io::read_forest(path).map_err(|e| {
        let f = Failure::from(e);
        Failure { code: f.code, err: f.err.context(format!("{}", path.display())) }
    })
}

/// Correlation (pre-shrunk by `epsilon`) and labels of an input file.
fn load_correlation(a: &InputArgs) -> Result<(CorrelationMatrix, Option<Vec<String>>), Failure> {
    let m = read_matrix(&a.input)?;
    let corr = match a.input_kind {
        InputKind::Data => sample_correlation(&m.values, m.labels.as_deref())?,
        InputKind::Similarity => CorrelationMatrix::from_covariance(&m.values, a.n_obs)?,
    };
    if !(0.0..1.0).contains(&a.epsilon) {
        return Err(domain(anyhow!("--epsilon must lie in [0, 1)")));
    }
    Ok((pre_shrink(&corr, a.epsilon), m.labels))
}

fn write_or_print(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text).map_err(|e| io_failure(e, p)),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn learn(ctx: &Ctx, a: LearnArgs) -> CmdResult {
    check_readable(&a.input.input)?;
    let seed_forest = a.seed_cliques.as_deref().map(read_forest).transpose()?;
    let (corr, labels) = load_correlation(&a.input)?;
    let mode = GainMode::from(a.gain);
    let input = SimilarityInput::Similarity {
        n_obs: corr.n_obs(),
        matrix: corr.into_inner(),
    };
    let mut cfg = MfcfConfig {
        max_clique_size: a.max_clique_size,
        min_clique_size: a.min_clique_size,
        reuse_separators: !a.no_reuse_separators,
        gain: GainConfig { mode, p_value: a.pvalue, similarity_threshold: a.similarity_threshold },
        seed: ctx.seed.unwrap_or(0),
        ..Default::default()
    };
    if let Some(f) = seed_forest {
        cfg.initial_cliques = Some(f.cliques().to_vec());
        cfg.initial_separators = Some(f.separators().to_vec());
    }
    let (mut forest, log) = mfcf_with_report(&input, &cfg)?;
    forest.set_labels(labels);
    ctx.note(format!(
        "learned {} cliques and {} separators on {} variables",
        forest.cliques().len(),
        forest.separators().len(),
        forest.p()
    ));
    write_or_print(a.output.as_deref(), &io::forest_to_string(&forest)?)?;
    if let Some(path) = &a.log {
        io::write_log_jsonl(path, &log).map_err(|e| io_failure(e, path))?;
    }
    Ok(())
}

fn precision(ctx: &Ctx, a: PrecisionArgs) -> CmdResult {
    check_readable(&a.forest)?;
    check_readable(&a.input.input)?;
    let forest = read_forest(&a.forest)?;
    if let Err(v) = forest.check() {
        return Err(domain(anyhow!("invalid forest: {v}")));
    }
    let (corr, labels) = load_correlation(&a.input)?;
    let target = match a.target {
        TargetArg::Identity => TargetKind::Identity,
        TargetArg::CliqueTree => TargetKind::CliqueTree,
    };
    let est = shrunk_precision(&corr, &forest, a.theta, target)?;
    ctx.note(format!("precision on {} variables, theta {}", forest.p(), a.theta));
    let text = match a.format {
        MatrixFormat::Dense => io::format_matrix_csv(&est.j, labels.as_deref()),
        MatrixFormat::Triplet => io::format_triplets(&est.j, mfcf::experiment::ZERO_TOL),
    };
    write_or_print(a.output.as_deref(), &text)
}

fn generate(ctx: &Ctx, a: GenerateArgs) -> CmdResult {
    let kind = match a.kind {
        KindArg::Chordal => SynthKind::ChordalFactor,
        KindArg::Pd => SynthKind::RandomPd,
        KindArg::Factor => SynthKind::FactorModel,
    };
    if a.p == 0 || a.n == 0 {
        return Err(domain(anyhow!("--p and --n must be positive")));
    }
    let spec = SynthSpec {
        kind,
        p: a.p,
        n: a.n,
        seed: ctx.seed.unwrap_or(0),
        factors: a.factors,
        noise_var: a.noise_var,
        forest: ForestParams { max_clique_size: a.max_clique_size, ..Default::default() },
        ..Default::default()
    };
    let gt = synth::ground_truth(&spec)?;
    let data = synth::mvn_sample(&gt.sigma_true, a.n, &mut rng::stream(spec.seed, &[2]))?;
    let path = |ext: &str| {
        let mut s = a.out_prefix.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    let write = |ext: &str, m: &DMatrix<f64>| -> CmdResult {
        let p = path(ext);
        io::write_matrix_csv(&p, m, None).map_err(|e| io_failure(e, &p))
    };
    write(".data.csv", &data)?;
    write(".sigma.csv", &gt.sigma_true)?;
    write(".jtrue.csv", &gt.j_true)?;
    if let Some(f) = &gt.forest_true {
        let p = path(".forest.json");
        io::write_forest(&p, f).map_err(|e| io_failure(e, &p))?;
    }
    ctx.note(format!("wrote {} rows of {} variables", a.n, a.p));
    Ok(())
}

fn benchmark(ctx: &Ctx, a: BenchmarkArgs) -> CmdResult {
    check_readable(&a.spec)?;
    let mut cfg = ExperimentConfig::from_json_file(&a.spec).map_err(|e| {
        let f = Failure::from(e);
        Failure { code: 2, err: f.err.context(format!("{}", a.spec.display())) }
    })?;
    for (name, path) in &a.external {
        check_readable(path)?;
        cfg.methods.push(MethodSpec::external(name, path));
    }
    if let (Some(seed), DataSource::Synth(spec)) = (ctx.seed, &mut cfg.source) {
        spec.seed = seed;
    }
    if let DataSource::DataFile(p) = &cfg.source {
        check_readable(p)?;
    }
    let report = run_experiment(&cfg)?;
    write_report(&report, &a.out, a.plot).map_err(|e| io_failure(e, &a.out))?;
    let failed = report.cells.iter().filter(|c| c.result.is_err()).count();
    ctx.note(format!("{} cells, {failed} failed; report in {}", report.cells.len(), a.out.display()));
    Ok(())
}

fn validate(a: ValidateArgs) -> CmdResult {
    let forest = read_forest(&a.forest)?;
    if let Err(v) = forest.check() {
        return Err(domain(anyhow!("INVALID: {v}")));
    }
    let adj = forest.to_adjacency();
    if !is_chordal(&adj) || !validate_perfect_sequence(&forest) {
        return Err(domain(anyhow!("INVALID: forest graph is not chordal")));
    }
    let peo = forest.perfect_elimination_order()?;
    let sizes: Vec<usize> = forest.cliques().iter().map(|c| c.len()).collect();
    let seps: Vec<usize> = forest.separators().iter().map(|s| s.len()).collect();
    let roots = forest.cliques().len() - forest.tree().len();
    println!("VALID");
    println!("p: {}", forest.p());
    println!("cliques: {}", sizes.len());
    println!(
        "clique sizes: min {} max {} mean {:.3}",
        sizes.iter().min().unwrap_or(&0),
        sizes.iter().max().unwrap_or(&0),
        mean(&sizes)
    );
    println!("separators: {}", seps.len());
    if !seps.is_empty() {
        println!(
            "separator sizes: min {} max {} mean {:.3}",
            seps.iter().min().unwrap_or(&0),
            seps.iter().max().unwrap_or(&0),
            mean(&seps)
        );
    }
    println!("trees: {roots}");
    println!("edges: {}", adj.num_edges());
    println!("elimination order length: {}", peo.len());
    Ok(())
}

fn mean(v: &[usize]) -> f64 {
    if v.is_empty() {
        0.0
    } else {
        v.iter().sum::<usize>() as f64 / v.len() as f64
    }
}

fn lrt(a: LrtArgs) -> CmdResult {
    let s0 = read_matrix(&a.sigma0)?.values;
    let s1 = read_matrix(&a.sigma1)?.values;
    let u = lrt_statistic(&s0, &s1, a.nu, a.lrt_raw)?;
    println!("u = {}", io::fmt_f64(u));
    if let Some(df) = a.df {
        if df == 0 || !(a.pvalue > 0.0 && a.pvalue < 1.0) {
            return Err(domain(anyhow!("--df must be positive and --pvalue in (0, 1)")));
        }
        let q = chi2_quantile(df, a.pvalue);
        let verdict = if u > q { "significant" } else { "not significant" };
        println!("chi2({df}) quantile = {}: {verdict}", io::fmt_f64(q));
    }
    Ok(())
}
