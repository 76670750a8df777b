use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use rfkernel::harness::{
    self, evaluate_csv, export_kernel_figure_data, paper_grid, read_dataset_path, run_grid, write_dataset, write_raw_csv,
    write_summary_csv, write_summary_text, EvalOptions, EvalSplit, FigureOptions, Method, ScenarioConfig, Stat,
};
use rfkernel::kernels::{laplace_kernel_with, rf_kernel, write_kernel, KernelFormat, LaplaceNorm};
use rfkernel::simgen::{bayes_error, simulate, BayesSource, NoiseConvention, Setup, SimOptions, MEDIAN_SAMPLES};
use rfkernel::ssvm::SsvmSolver;
use rfkernel::{Error, Forest, TargetKind, TreeParams};

#[derive(Parser)]
#[command(name = "rfkernel", version, about = "Random forest kernels with kernel ridge regression and survival SVMs")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic data set (CSV plus a JSON sidecar).
    Simulate(SimulateArgs),
    /// Run one scenario or a full results grid.
    Bench(BenchArgs),
    /// Compare the methods on a user-supplied CSV.
    EvalCsv(EvalArgs),
    /// Emit Mantel correlations and kernel-value histograms for labeled data.
    KernelFig(FigArgs),
    /// Write an RF or Laplace kernel matrix to disk.
    ExportKernel(ExportArgs),
    /// Monte Carlo Bayes error rate of the dichotomized benchmarks.
    BayesError(BayesArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum NormArg {
    L1,
    L2,
}

impl From<NormArg> for LaplaceNorm {
    fn from(n: NormArg) -> Self {
        match n {
            NormArg::L1 => LaplaceNorm::L1,
            NormArg::L2 => LaplaceNorm::L2,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum NoiseArg {
    Variance,
    Sd,
}

impl From<NoiseArg> for NoiseConvention {
    fn from(n: NoiseArg) -> Self {
        match n {
            NoiseArg::Variance => NoiseConvention::Variance,
            NoiseArg::Sd => NoiseConvention::StdDev,
        }
    }
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cd,
    Pg,
}

#[derive(Args)]
struct SimulateArgs {
    #[arg(long)]
    setup: Setup,
    #[arg(long, default_value = "continuous")]
    target: TargetKind,
    #[arg(long, default_value_t = 800)]
    n: usize,
    #[arg(long, default_value_t = 20)]
    p: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Target censoring fraction (survival).
    #[arg(long, default_value_t = 0.3)]
    censoring: f64,
    #[arg(long, default_value_t = 1.0)]
    baseline_hazard: f64,
    /// Reading of N(0, s) in the printed noise terms.
    #[arg(long, value_enum, default_value = "variance")]
    noise: NoiseArg,
    /// Explicit noise standard deviation (continuous).
    #[arg(long)]
    noise_sd: Option<f64>,
    /// Output CSV; the sidecar is written next to it with a `.json` extension.
    #[arg(long)]
    out: PathBuf,
}

#[derive(Args)]
struct PipelineArgs {
    /// Comma-separated subset of rf, rf_kernel, laplace.
    #[arg(long, value_delimiter = ',')]
    methods: Option<Vec<Method>>,
    /// Trees per forest.
    #[arg(long)]
    trees: Option<usize>,
    /// Double the forest's minimum terminal node size.
    #[arg(long)]
    node_size_x2: bool,
    #[arg(long)]
    laplace_sigma: Option<f64>,
    #[arg(long, value_enum)]
    laplace_norm: Option<NormArg>,
    /// Survival SVM box bound C.
    #[arg(long)]
    cost: Option<f64>,
    #[arg(long)]
    ssvm_tol: Option<f64>,
    #[arg(long)]
    ssvm_max_iter: Option<usize>,
    #[arg(long, value_enum)]
    ssvm_solver: Option<SolverArg>,
}

impl PipelineArgs {
    fn apply(&self, p: &mut harness::PipelineOptions) {
        if let Some(m) = &self.methods {
            p.methods = m.clone();
        }
        if let Some(t) = self.trees {
            p.n_trees = t;
        }
        if self.node_size_x2 {
            p.node_size_multiplier = 2;
        }
        if let Some(s) = self.laplace_sigma {
            p.laplace_sigma = s;
        }
        if let Some(n) = self.laplace_norm {
            p.laplace_norm = n.into();
        }
        if let Some(c) = self.cost {
            p.ssvm.cost = c;
        }
        if self.ssvm_tol.is_some() {
            p.ssvm.tol = self.ssvm_tol;
        }
        if self.ssvm_max_iter.is_some() {
            p.ssvm.max_iter = self.ssvm_max_iter;
        }
        if let Some(s) = self.ssvm_solver {
            p.ssvm.solver = match s {
                SolverArg::Cd => SsvmSolver::CoordinateDescent,
                SolverArg::Pg => SsvmSolver::ProjectedGradient,
            };
        }
    }
}

#[derive(Args)]
struct BenchArgs {
    /// TOML file with scenario keys; command-line flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    setup: Option<Setup>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    p: Option<usize>,
    #[arg(long)]
    target: Option<TargetKind>,
    #[arg(long)]
    replicates: Option<usize>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    censoring: Option<f64>,
    /// Run all five setups over n in {800, 1600} and p in {20, 40}.
    #[arg(long)]
    grid: bool,
    /// Worker threads (default: all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for summary.csv, summary.txt and raw.csv; without it the
    /// summary CSV goes to standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Default, Serialize, Deserialize)]
#[serde(default)]
struct BenchFile {
    #[serde(flatten)]
    scenario: ScenarioConfig,
    grid: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Training CSV (or the whole data set when --test is absent).
    #[arg(long)]
    train: PathBuf,
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long)]
    target: TargetKind,
    /// Random splits when no test file is given.
    #[arg(long, default_value_t = 5)]
    repeats: usize,
    #[arg(long, default_value_t = 0.75)]
    train_fraction: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    workers: Option<usize>,
    /// Directory for summary.csv and raw.csv; standard output otherwise.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    pipeline: PipelineArgs,
}

#[derive(Args)]
struct FigArgs {
    /// CSV with numeric features and a `label` column.
    #[arg(long)]
    data: PathBuf,
    #[arg(long, value_delimiter = ',', default_value = "0.5,1,2,4")]
    sigmas: Vec<f64>,
    #[arg(long, value_enum, default_value = "l1")]
    laplace_norm: NormArg,
    #[arg(long, default_value_t = 500)]
    trees: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 20)]
    bins: usize,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum KernelArg {
    Rf,
    Laplace,
}

#[derive(Clone, Copy, ValueEnum)]
enum FormatArg {
    Csv,
    Binary,
}

#[derive(Args)]
struct ExportArgs {
    #[arg(long)]
    data: PathBuf,
    #[arg(long)]
    target: TargetKind,
    /// Rows of a cross kernel against the training data.
    #[arg(long)]
    test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "rf")]
    kernel: KernelArg,
    #[arg(long, default_value_t = 1.0)]
    sigma: f64,
    #[arg(long, value_enum, default_value = "l1")]
    laplace_norm: NormArg,
    #[arg(long, default_value_t = 500)]
    trees: usize,
    #[arg(long)]
    node_size_x2: bool,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_enum, default_value = "csv")]
    format: FormatArg,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Clone, Copy, ValueEnum)]
enum SourceArg {
    Outcome,
    Signal,
}

#[derive(Args)]
struct BayesArgs {
    /// One setup; all five when omitted.
    #[arg(long)]
    setup: Option<Setup>,
    #[arg(long, default_value_t = MEDIAN_SAMPLES)]
    samples: usize,
    #[arg(long, value_enum, default_value = "outcome")]
    source: SourceArg,
    #[arg(long, value_enum, default_value = "variance")]
    noise: NoiseArg,
    #[arg(long, default_value_t = 1)]
    seed: u64,
}

enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<io::Error> for CliError {
    fn from(e: io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numeric() => 3,
            CliError::Core(Error::InvalidParameter(_) | Error::InsufficientFeatures { .. } | Error::NonPositiveSigma(_)) => 1,
            CliError::Core(_) => 2,
        }
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) => m.clone(),
            CliError::Core(e) => e.to_string(),
        }
    }
}

type CliResult<T = ()> = Result<T, CliError>;

fn create(path: &Path) -> CliResult<BufWriter<File>> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir)?;
    }
    Ok(BufWriter::new(File::create(path)?))
}

fn with_workers<T: Send>(workers: Option<usize>, f: impl FnOnce() -> T + Send) -> CliResult<T> {
    match workers {
        None => Ok(f()),
        Some(0) => Err(CliError::Usage("--workers must be >= 1".into())),
        Some(w) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(w)
                .build()
                .map_err(|e| CliError::Usage(format!("cannot start {w} workers: {e}")))?;
            Ok(pool.install(f))
        }
    }
}

#[derive(Serialize)]
struct Sidecar<'a> {
    setup: Setup,
    target: TargetKind,
    n: usize,
    p: usize,
    seed: u64,
    options: &'a SimOptions,
    meta: &'a rfkernel::simgen::GenerationMeta,
}

fn cmd_simulate(a: SimulateArgs) -> CliResult {
    let options = SimOptions {
        noise: a.noise.into(),
        noise_sd: a.noise_sd,
        baseline_hazard: a.baseline_hazard,
        censoring: a.censoring,
    };
    let data = simulate(a.setup, a.target, a.n, a.p, a.seed, &options)?;
    let mut w = create(&a.out)?;
    write_dataset(&data.x, &data.target, &mut w)?;
    w.flush()?;
    let sidecar = Sidecar {
        setup: a.setup,
        target: a.target,
        n: a.n,
        p: a.p,
        seed: a.seed,
        options: &options,
        meta: &data.meta,
    };
    let mut s = create(&a.out.with_extension("json"))?;
    serde_json::to_writer_pretty(&mut s, &sidecar).map_err(Error::from)?;
    writeln!(s)?;
    Ok(())
}

fn bench_config(a: &BenchArgs) -> CliResult<(ScenarioConfig, bool)> {
    let file = match &a.config {
        Some(path) => {
            let text = std::fs::read_to_string(path)?;
            toml::from_str::<BenchFile>(&text).map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?
        }
        None => BenchFile::default(),
    };
    let mut c = file.scenario;
    if let Some(s) = a.setup {
        c.setup = s;
    }
    if let Some(n) = a.n {
        c.n = n;
    }
    if let Some(p) = a.p {
        c.p = p;
    }
    if let Some(t) = a.target {
        c.target = t;
    }
    if let Some(r) = a.replicates {
        c.replicates = r;
    }
    if let Some(s) = a.seed {
        c.base_seed = s;
    }
    if let Some(cens) = a.censoring {
        c.simulation.censoring = cens;
    }
    a.pipeline.apply(&mut c.pipeline);
    Ok((c, file.grid || a.grid))
}

fn cmd_bench(a: BenchArgs) -> CliResult {
    let (config, grid) = bench_config(&a)?;
    let configs = if grid { paper_grid(config.target, &config) } else { vec![config] };
    for c in &configs {
        c.validate()?;
    }
    let results = with_workers(a.workers, || run_grid(&configs))??;
    let rows: Vec<_> = results.iter().map(|r| r.summary.clone()).collect();
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_summary_csv(&rows, create(&dir.join("summary.csv"))?)?;
            write_summary_text(&rows, create(&dir.join("summary.txt"))?)?;
            write_raw_csv(&results, create(&dir.join("raw.csv"))?)?;
            write_summary_text(&rows, io::stdout().lock())?;
        }
        None => write_summary_csv(&rows, io::stdout().lock())?,
    }
    Ok(())
}

fn write_eval_summary<W: Write>(records: &[harness::ReplicateRecord], methods: &[Method], metric: &str, w: W) -> CliResult {
    let mut out = csv::Writer::from_writer(w);
    let line = |name: &str, s: Option<Stat>| -> Vec<String> {
        let (mean, sd, count) = s.map_or(("NA".into(), "NA".into(), "0".into()), |s| {
            (format!("{:.6}", s.mean), format!("{:.6}", s.sd), s.count.to_string())
        });
        vec![name.to_string(), metric.to_string(), mean, sd, count]
    };
    out.write_record(["method", "metric", "mean", "sd", "count"]).map_err(Error::from)?;
    for &m in methods {
        let vals: Vec<f64> = records.iter().filter_map(|r| r.value(m)).collect();
        out.write_record(line(m.key(), Stat::from_values(&vals))).map_err(Error::from)?;
    }
    let deltas: Vec<f64> = records
        .iter()
        .filter_map(|r| Some(r.value(Method::RfKernel)? - r.value(Method::Rf)?))
        .collect();
    out.write_record(line("delta_rf", Stat::from_values(&deltas))).map_err(Error::from)?;
    out.flush()?;
    Ok(())
}

fn write_eval_raw<W: Write>(records: &[harness::ReplicateRecord], metric: &str, w: W) -> CliResult {
    let mut out = csv::Writer::from_writer(w);
    out.write_record(["split", "seed", "split_hash", "n_train", "n_test", "method", "metric", "value"])
        .map_err(Error::from)?;
    for r in records {
        for (m, v) in &r.metrics {
            out.write_record([
                r.index.to_string(),
                r.seed.to_string(),
                format!("{:016x}", r.split_hash),
                r.n_train.to_string(),
                r.n_test.to_string(),
                m.key().to_string(),
                metric.to_string(),
                v.map_or_else(String::new, |v| format!("{:.17e}", v.value)),
            ])
            .map_err(Error::from)?;
        }
    }
    out.flush()?;
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> CliResult {
    let train = read_dataset_path(&a.train, a.target)?;
    let test = a.test.as_deref().map(|p| read_dataset_path(p, a.target)).transpose()?;
    let mut options = EvalOptions {
        repeats: a.repeats,
        train_fraction: a.train_fraction,
        seed: a.seed,
        ..EvalOptions::default()
    };
    a.pipeline.apply(&mut options.pipeline);
    let split = match &test {
        Some(t) => EvalSplit::TestSet(t),
        None => EvalSplit::Repeated,
    };
    let records = with_workers(a.workers, || evaluate_csv(&train, split, &options))??;
    let metric = format!("{:?}", harness::metric_for(a.target)).to_lowercase();
    match &a.out {
        Some(dir) => {
            std::fs::create_dir_all(dir)?;
            write_eval_summary(&records, &options.pipeline.methods, &metric, create(&dir.join("summary.csv"))?)?;
            write_eval_raw(&records, &metric, create(&dir.join("raw.csv"))?)?;
        }
        None => write_eval_summary(&records, &options.pipeline.methods, &metric, io::stdout().lock())?,
    }
    Ok(())
}

fn cmd_figure(a: FigArgs) -> CliResult {
    let data = read_dataset_path(&a.data, TargetKind::Class)?;
    let options = FigureOptions {
        sigmas: a.sigmas,
        laplace_norm: a.laplace_norm.into(),
        n_trees: a.trees,
        seed: a.seed,
        bins: a.bins,
    };
    let fig = export_kernel_figure_data(&data, &options)?;
    for path in fig.write_to_dir(&a.out)? {
        println!("{}", path.display());
    }
    Ok(())
}

fn cmd_export(a: ExportArgs) -> CliResult {
    let train = read_dataset_path(&a.data, a.target)?;
    let rows = match &a.test {
        Some(p) => read_dataset_path(p, a.target)?.x,
        None => train.x.clone(),
    };
    let k = match a.kernel {
        KernelArg::Rf => {
            let mut params = TreeParams::default_for(a.target, train.x.ncols());
            if a.node_size_x2 {
                params = params.with_node_size_multiplier(2);
            }
            let forest = Forest::fit(&train.x, &train.target, &params, a.trees, a.seed)?;
            rf_kernel(&forest, &rows, &train.x)?
        }
        KernelArg::Laplace => laplace_kernel_with(&rows, &train.x, a.sigma, a.laplace_norm.into())?,
    };
    let format = match a.format {
        FormatArg::Csv => KernelFormat::Csv,
        FormatArg::Binary => KernelFormat::Binary,
    };
    let mut w = create(&a.out)?;
    write_kernel(&k, format, &mut w)?;
    w.flush()?;
    Ok(())
}

fn cmd_bayes(a: BayesArgs) -> CliResult {
    let setups = a.setup.map_or_else(|| Setup::ALL.to_vec(), |s| vec![s]);
    let source = match a.source {
        SourceArg::Outcome => BayesSource::Outcome,
        SourceArg::Signal => BayesSource::Signal,
    };
    let mut out = io::stdout().lock();
    writeln!(out, "setup,bayes_error")?;
    for s in setups {
        let e = bayes_error(s, a.samples, source, a.noise.into(), a.seed)?;
        writeln!(out, "{},{e:.4}", s.key())?;
    }
    Ok(())
}

fn run(cli: Cli) -> CliResult {
    match cli.command {
        Command::Simulate(a) => cmd_simulate(a),
        Command::Bench(a) => cmd_bench(a),
        Command::EvalCsv(a) => cmd_eval(a),
        Command::KernelFig(a) => cmd_figure(a),
        Command::ExportKernel(a) => cmd_export(a),
        Command::BayesError(a) => cmd_bayes(a),
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}
