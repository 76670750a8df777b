//! Simulation study driver.
//!
//! A [`ScenarioConfig`] names one cell of the benchmark grid. Each replicate
//! simulates a data set, splits it into training and test rows, and scores
//! every requested method on the same test rows. [`run_scenario`] reduces the
//! replicates to a [`SummaryRow`] of `mean (sd)` cells plus the paired
//! difference between the RF-kernel model and the forest.

mod dataset;
mod figure;
mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use log::warn;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, SurvivalData, Target, TargetKind};
use crate::error::{Error, Result};
use crate::forest::{Forest, TreeParams, DEFAULT_TREES};
use crate::kernels::{laplace_kernel_with, rf_kernel, KernelMatrix, LaplaceNorm};
use crate::krr::fit_krr_auto;
use crate::metrics::{accuracy, c_index, mse, MetricKind, MetricValue};
use crate::simgen::{simulate, SimOptions, Setup};
use crate::ssvm::{solve_ssvm, SsvmOptions};

pub use dataset::{evaluate_csv, read_dataset, read_dataset_path, write_dataset, EvalOptions, EvalSplit, LabeledData};
pub use figure::{export_kernel_figure_data, FigureData, FigureOptions, DEFAULT_SIGMAS};
pub use table::{paper_grid, run_grid, write_raw_csv, write_summary_csv, write_summary_text, TABLE_HEADERS};

/// A model compared in the study.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// The forest's own prediction.
    Rf,
    /// KRR or survival SVM on the forest's proximity kernel.
    RfKernel,
    /// The same linear model on a Laplace kernel of the raw features.
    #[serde(alias = "laplace")]
    LaplaceKernel,
}

impl Method {
    pub const ALL: [Method; 3] = [Method::Rf, Method::RfKernel, Method::LaplaceKernel];

    pub fn key(self) -> &'static str {
        match self {
            Method::Rf => "rf",
            Method::RfKernel => "rf_kernel",
            Method::LaplaceKernel => "laplace",
        }
    }

    /// Column header used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Method::Rf => "RF",
            Method::RfKernel => "RF kernel",
            Method::LaplaceKernel => "L kernel",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.key())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().replace('-', "_").as_str() {
            "rf" => Ok(Method::Rf),
            "rf_kernel" | "rfk" | "rfkernel" => Ok(Method::RfKernel),
            "laplace" | "l" | "l_kernel" | "laplace_kernel" => Ok(Method::LaplaceKernel),
            other => Err(Error::InvalidParameter(format!("unknown method '{other}'"))),
        }
    }
}

/// Model settings shared by simulated and user-supplied data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PipelineOptions {
    pub methods: Vec<Method>,
    pub n_trees: usize,
    /// 1 for library defaults, 2 for the doubled minimum node size.
    pub node_size_multiplier: usize,
    pub laplace_sigma: f64,
    pub laplace_norm: LaplaceNorm,
    pub ssvm: SsvmOptions,
}

impl Default for PipelineOptions {
    fn default() -> Self {
        Self {
            methods: Method::ALL.to_vec(),
            n_trees: DEFAULT_TREES,
            node_size_multiplier: 1,
            laplace_sigma: 1.0,
            laplace_norm: LaplaceNorm::L2,
            ssvm: SsvmOptions::default(),
        }
    }
}

impl PipelineOptions {
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::InvalidParameter("at least one method is required".into()));
        }
        if self.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be >= 1".into()));
        }
        if self.node_size_multiplier == 0 {
            return Err(Error::InvalidParameter("node_size_multiplier must be >= 1".into()));
        }
        if !(self.laplace_sigma > 0.0) {
            return Err(Error::NonPositiveSigma(self.laplace_sigma));
        }
        if !(self.ssvm.cost > 0.0) {
            return Err(Error::InvalidParameter(format!("SSVM cost must be > 0, got {}", self.ssvm.cost)));
        }
        Ok(())
    }
}

/// One cell of the simulation grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ScenarioConfig {
    pub setup: Setup,
    pub n: usize,
    pub p: usize,
    pub target: TargetKind,
    pub replicates: usize,
    pub train_fraction: f64,
    pub base_seed: u64,
    #[serde(flatten)]
    pub pipeline: PipelineOptions,
    pub simulation: SimOptions,
}

/// Desk-scale replicate count.
pub const DEFAULT_REPLICATES: usize = 20;

impl Default for ScenarioConfig {
    fn default() -> Self {
        Self {
            setup: Setup::Friedman,
            n: 800,
            p: 20,
            target: TargetKind::Continuous,
            replicates: DEFAULT_REPLICATES,
            train_fraction: 0.75,
            base_seed: 0,
            pipeline: PipelineOptions::default(),
            simulation: SimOptions::default(),
        }
    }
}

impl ScenarioConfig {
    pub fn new(setup: Setup, n: usize, p: usize, target: TargetKind) -> Self {
        Self {
            setup,
            n,
            p,
            target,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("replicates must be >= 1".into()));
        }
        if !(self.train_fraction > 0.0 && self.train_fraction < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "train_fraction must be in (0, 1), got {}",
                self.train_fraction
            )));
        }
        if self.target == TargetKind::Class {
            return Err(Error::InvalidParameter("simulated scenarios use continuous, binary or survival targets".into()));
        }
        if self.p < self.setup.min_features() {
            return Err(Error::InsufficientFeatures {
                setup: self.setup.label(),
                required: self.setup.min_features(),
                got: self.p,
            });
        }
        if self.n < 4 {
            return Err(Error::InvalidParameter(format!("n must be >= 4, got {}", self.n)));
        }
        self.pipeline.validate()
    }

    /// Seed of replicate `index`, independent of which other replicates run.
    pub fn replicate_seed(&self, index: usize) -> u64 {
        self.base_seed ^ splitmix64(index as u64)
    }
}

/// SplitMix64 finalizer, a stable 64-bit mixing function.
pub fn splitmix64(x: u64) -> u64 {
    let mut z = x.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Training and test row indices.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub test: Vec<usize>,
}

impl Split {
    /// Uniformly random split with `round(n * train_fraction)` training rows,
    /// clamped so both parts are non-empty. Both index lists are sorted.
    pub fn random(n: usize, train_fraction: f64, seed: u64) -> Result<Self> {
        if n < 2 {
            return Err(Error::EmptyData(format!("cannot split {n} rows into training and test sets")));
        }
        let n_train = ((n as f64 * train_fraction).round() as usize).clamp(1, n - 1);
        let mut idx: Vec<usize> = (0..n).collect();
        idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        let mut train = idx[..n_train].to_vec();
        let mut test = idx[n_train..].to_vec();
        train.sort_unstable();
        test.sort_unstable();
        Ok(Self { train, test })
    }

    /// FNV-1a digest of both index lists.
    pub fn hash(&self) -> u64 {
        let mut h: u64 = 0xcbf2_9ce4_8422_2325;
        let mut eat = |v: u64| {
            for b in v.to_le_bytes() {
                h ^= u64::from(b);
                h = h.wrapping_mul(0x0000_0100_0000_01b3);
            }
        };
        for &i in &self.train {
            eat(i as u64);
        }
        eat(u64::MAX);
        for &i in &self.test {
            eat(i as u64);
        }
        h
    }
}

/// Metric each target kind is scored with.
pub fn metric_for(kind: TargetKind) -> MetricKind {
    match kind {
        TargetKind::Continuous => MetricKind::Mse,
        TargetKind::Binary | TargetKind::Class => MetricKind::Accuracy,
        TargetKind::Survival => MetricKind::CIndex,
    }
}

/// Scores of all methods on one train/test split.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub seed: u64,
    pub split_hash: u64,
    pub n_train: usize,
    pub n_test: usize,
    /// `None` marks a method that failed on this replicate.
    pub metrics: BTreeMap<Method, Option<MetricValue>>,
}

impl ReplicateRecord {
    pub fn value(&self, method: Method) -> Option<f64> {
        self.metrics.get(&method).copied().flatten().map(|m| m.value)
    }
}

fn negate_if_discordant(train: &SurvivalData, h_train: &[f64], h_test: Vec<f64>) -> Result<Vec<f64>> {
    if c_index(train, h_train)?.value < 0.5 {
        Ok(h_test.into_iter().map(|v| -v).collect())
    } else {
        Ok(h_test)
    }
}

fn kernel_model_score(k_train: &KernelMatrix, k_test: &KernelMatrix, y_train: &Target, y_test: &Target, ssvm: &SsvmOptions) -> Result<MetricValue> {
    match (y_train, y_test) {
        (Target::Continuous(ytr), Target::Continuous(yte)) => {
            let model = fit_krr_auto(k_train, ytr)?;
            mse(yte, &model.predict(k_test)?)
        }
        (Target::Binary(ytr), Target::Binary(yte)) => {
            let y: Vec<f64> = ytr.iter().map(|&l| f64::from(l)).collect();
            let model = fit_krr_auto(k_train, &y)?;
            accuracy(yte, &model.classify(k_test)?)
        }
        (Target::Survival(str_), Target::Survival(ste)) => {
            let model = solve_ssvm(k_train, str_, ssvm)?;
            if !model.converged {
                warn!("survival SVM stopped after {} iterations (KKT {:.3e})", model.iterations, model.kkt);
            }
            let h_train = model.prognostic_index(k_train, str_)?;
            let h_test = model.prognostic_index(k_test, str_)?;
            c_index(ste, &negate_if_discordant(str_, &h_train, h_test)?)
        }
        _ => Err(Error::InvalidParameter(format!(
            "kernel models support continuous, binary and survival targets, got {}",
            y_train.kind()
        ))),
    }
}

fn forest_score(forest: &Forest, x_train: &FeatureMatrix, x_test: &FeatureMatrix, y_train: &Target, y_test: &Target) -> Result<MetricValue> {
    match (y_train, y_test) {
        (Target::Continuous(_), Target::Continuous(yte)) => mse(yte, &forest.predict(x_test)?),
        (Target::Binary(_), Target::Binary(yte)) => accuracy(yte, &forest.predict_labels(x_test)?),
        (Target::Survival(str_), Target::Survival(ste)) => {
            let h_train = forest.predict(x_train)?;
            let h_test = forest.predict(x_test)?;
            c_index(ste, &negate_if_discordant(str_, &h_train, h_test)?)
        }
        _ => Err(Error::InvalidParameter(format!(
            "forest scoring supports continuous, binary and survival targets, got {}",
            y_train.kind()
        ))),
    }
}

fn record_failure(method: Method, result: Result<MetricValue>) -> Option<MetricValue> {
    match result {
        Ok(m) if m.value.is_finite() => Some(m),
        Ok(m) => {
            warn!("{method}: non-finite metric {}", m.value);
            None
        }
        Err(e) => {
            warn!("{method}: {e}");
            None
        }
    }
}

/// Fits every requested method on the training rows and scores it on the
/// test rows. Failures are reported as `None` for the affected methods.
pub fn evaluate_methods(
    x_train: &FeatureMatrix,
    y_train: &Target,
    x_test: &FeatureMatrix,
    y_test: &Target,
    options: &PipelineOptions,
    forest_seed: u64,
) -> Result<BTreeMap<Method, Option<MetricValue>>> {
    options.validate()?;
    if x_train.ncols() != x_test.ncols() {
        return Err(Error::DimensionMismatch {
            expected: x_train.ncols(),
            got: x_test.ncols(),
        });
    }
    let mut out = BTreeMap::new();
    let wants = |m: Method| options.methods.contains(&m);
    if wants(Method::Rf) || wants(Method::RfKernel) {
        let params = TreeParams::default_for(y_train.kind(), x_train.ncols()).with_node_size_multiplier(options.node_size_multiplier);
        match Forest::fit(x_train, y_train, &params, options.n_trees, forest_seed) {
            Ok(forest) => {
                if wants(Method::Rf) {
                    let r = forest_score(&forest, x_train, x_test, y_train, y_test);
                    out.insert(Method::Rf, record_failure(Method::Rf, r));
                }
                if wants(Method::RfKernel) {
                    let r = rf_kernel(&forest, x_train, x_train).and_then(|ktr| {
                        let kte = rf_kernel(&forest, x_test, x_train)?;
                        kernel_model_score(&ktr, &kte, y_train, y_test, &options.ssvm)
                    });
                    out.insert(Method::RfKernel, record_failure(Method::RfKernel, r));
                }
            }
            Err(e) => {
                warn!("forest fit failed: {e}");
                for m in [Method::Rf, Method::RfKernel] {
                    if wants(m) {
                        out.insert(m, None);
                    }
                }
            }
        }
    }
    if wants(Method::LaplaceKernel) {
        let (sigma, norm) = (options.laplace_sigma, options.laplace_norm);
        let r = laplace_kernel_with(x_train, x_train, sigma, norm).and_then(|ktr| {
            let kte = laplace_kernel_with(x_test, x_train, sigma, norm)?;
            kernel_model_score(&ktr, &kte, y_train, y_test, &options.ssvm)
        });
        out.insert(Method::LaplaceKernel, record_failure(Method::LaplaceKernel, r));
    }
    Ok(out)
}

const SPLIT_STREAM: u64 = 0x5b1e_7000_0000_0001;
const FOREST_STREAM: u64 = 0xf0e5_7000_0000_0002;

/// Simulates, splits and scores replicate `index` of a scenario.
pub fn run_replicate(config: &ScenarioConfig, index: usize) -> Result<ReplicateRecord> {
    config.validate()?;
    let seed = config.replicate_seed(index);
    let data = simulate(config.setup, config.target, config.n, config.p, seed, &config.simulation)?;
    let split = Split::random(config.n, config.train_fraction, splitmix64(seed ^ SPLIT_STREAM))?;
    let metrics = evaluate_methods(
        &data.x.select_rows(&split.train),
        &data.target.select(&split.train),
        &data.x.select_rows(&split.test),
        &data.target.select(&split.test),
        &config.pipeline,
        splitmix64(seed ^ FOREST_STREAM),
    )?;
    Ok(ReplicateRecord {
        index,
        seed,
        split_hash: split.hash(),
        n_train: split.train.len(),
        n_test: split.test.len(),
        metrics,
    })
}

/// Mean and sample standard deviation of the successful replicates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Stat {
    pub mean: f64,
    /// 0 when only one value is available.
    pub sd: f64,
    pub count: usize,
}

impl Stat {
    pub fn from_values(values: &[f64]) -> Option<Self> {
        if values.is_empty() {
            return None;
        }
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let sd = if values.len() > 1 {
            (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
        } else {
            0.0
        };
        Some(Self {
            mean,
            sd,
            count: values.len(),
        })
    }

    /// `mean (sd)` to three decimals.
    pub fn cell(&self) -> String {
        format!("{:.3} ({:.3})", self.mean, self.sd)
    }
}

/// One row of a summary table.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SummaryRow {
    pub setup: Setup,
    pub n: usize,
    pub p: usize,
    pub target: TargetKind,
    pub metric: MetricKind,
    pub node_size_multiplier: usize,
    pub replicates: usize,
    pub methods: BTreeMap<Method, Option<Stat>>,
    /// Paired per-replicate differences, RF kernel minus RF.
    pub delta_rf: Option<Stat>,
    /// Set when a single replicate makes every sd zero by convention.
    pub sd_degenerate: bool,
}

impl SummaryRow {
    pub fn stat(&self, method: Method) -> Option<Stat> {
        self.methods.get(&method).copied().flatten()
    }
}

pub fn summarize(config: &ScenarioConfig, records: &[ReplicateRecord]) -> SummaryRow {
    let mut sorted: Vec<&ReplicateRecord> = records.iter().collect();
    sorted.sort_by_key(|r| r.index);
    let methods = config
        .pipeline
        .methods
        .iter()
        .map(|&m| {
            let vals: Vec<f64> = sorted.iter().filter_map(|r| r.value(m)).collect();
            (m, Stat::from_values(&vals))
        })
        .collect();
    let deltas: Vec<f64> = sorted
        .iter()
        .filter_map(|r| Some(r.value(Method::RfKernel)? - r.value(Method::Rf)?))
        .collect();
    SummaryRow {
        setup: config.setup,
        n: config.n,
        p: config.p,
        target: config.target,
        metric: metric_for(config.target),
        node_size_multiplier: config.pipeline.node_size_multiplier,
        replicates: records.len(),
        methods,
        delta_rf: Stat::from_values(&deltas),
        sd_degenerate: records.len() == 1,
    }
}

/// Per-replicate records and their summary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScenarioResult {
    pub config: ScenarioConfig,
    pub records: Vec<ReplicateRecord>,
    pub summary: SummaryRow,
}

/// Runs all replicates of a scenario on the current rayon pool.
pub fn run_scenario(config: &ScenarioConfig) -> Result<ScenarioResult> {
    config.validate()?;
    let records = (0..config.replicates)
        .into_par_iter()
        .map(|i| run_replicate(config, i))
        .collect::<Result<Vec<_>>>()?;
    let summary = summarize(config, &records);
    Ok(ScenarioResult {
        config: config.clone(),
        records,
        summary,
    })
}
