//! Synthetic benchmarks with continuous, binary and survival targets.
//!
//! Five signal functions are provided. Friedman, van der Laan and the two
//! Meier setups draw features i.i.d. Uniform(0, 1); Checkerboard draws
//! multivariate normal features with AR(1) correlation `0.9^|j-k|`. The van
//! der Laan and Meier signals are evaluated on `2 (x - 0.5)`.

use std::f64::consts::PI;
use std::sync::OnceLock;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Open01, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, SurvivalData, Target, TargetKind};
use crate::error::{Error, Result};
use crate::linalg::Cholesky;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Setup {
    Friedman,
    Checkerboard,
    VanDerLaan,
    Meier1,
    Meier2,
}

impl Setup {
    pub const ALL: [Setup; 5] = [
        Setup::Friedman,
        Setup::Checkerboard,
        Setup::VanDerLaan,
        Setup::Meier1,
        Setup::Meier2,
    ];

    /// Display name used in summary tables.
    pub fn label(self) -> &'static str {
        match self {
            Setup::Friedman => "Friedman",
            Setup::Checkerboard => "Checkerboard",
            Setup::VanDerLaan => "van der Laan",
            Setup::Meier1 => "Meier 1",
            Setup::Meier2 => "Meier 2",
        }
    }

    /// Identifier used on the command line and in file names.
    pub fn key(self) -> &'static str {
        match self {
            Setup::Friedman => "friedman",
            Setup::Checkerboard => "checkerboard",
            Setup::VanDerLaan => "van_der_laan",
            Setup::Meier1 => "meier1",
            Setup::Meier2 => "meier2",
        }
    }

    /// Smallest feature count the signal can be evaluated on.
    pub fn min_features(self) -> usize {
        match self {
            Setup::Friedman => 5,
            Setup::Checkerboard => 20,
            Setup::VanDerLaan => 10,
            Setup::Meier1 | Setup::Meier2 => 4,
        }
    }

    /// Nominal noise level as printed: N(0, 1) or N(0, 0.5).
    fn nominal_noise(self) -> f64 {
        match self {
            Setup::Friedman | Setup::Checkerboard => 1.0,
            _ => 0.5,
        }
    }

    /// Noise standard deviation under the given reading of `N(0, s)`.
    pub fn noise_sd(self, convention: NoiseConvention) -> f64 {
        let s = self.nominal_noise();
        match convention {
            NoiseConvention::Variance => s.sqrt(),
            NoiseConvention::StdDev => s,
        }
    }

    fn check_width(self, p: usize) -> Result<()> {
        if p < self.min_features() {
            return Err(Error::InsufficientFeatures {
                setup: self.label(),
                required: self.min_features(),
                got: p,
            });
        }
        Ok(())
    }

    /// Noise-free signal `f(x)` for one feature row.
    pub fn signal(self, x: &[f64]) -> Result<f64> {
        self.check_width(x.len())?;
        Ok(self.signal_unchecked(x))
    }

    #[inline]
    fn signal_unchecked(self, x: &[f64]) -> f64 {
        let t = |j: usize| 2.0 * (x[j] - 0.5);
        match self {
            Setup::Friedman => {
                10.0 * (PI * x[0] * x[1]).sin() + 20.0 * (x[2] - 0.5).powi(2) + 10.0 * x[3] + 5.0 * x[4]
            }
            Setup::Checkerboard => 2.0 * x[4] * x[9] + 2.0 * x[14] * x[19],
            Setup::VanDerLaan => t(0) * t(1) + t(2).powi(2) + t(7) * t(9) - t(5).powi(2),
            Setup::Meier1 => -(2.0 * t(0)).sin() + t(1).powi(2) + t(2) - t(3).exp(),
            Setup::Meier2 => {
                let c4 = (2.0 * PI * t(3)).cos();
                -t(0) + (2.0 * t(1) - 1.0).powi(2) + (2.0 * PI * t(2)).sin() / (2.0 - (2.0 * PI * t(3)).sin())
                    + 2.0 * c4
                    + 4.0 * c4 * c4
            }
        }
    }

    /// Fixed seed of the large sample used for this setup's signal median.
    fn median_seed(self) -> u64 {
        0x5eed_0000 + self as u64
    }
}

impl std::fmt::Display for Setup {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.label())
    }
}

impl std::str::FromStr for Setup {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key: String = s.to_ascii_lowercase().chars().filter(|c| c.is_ascii_alphanumeric()).collect();
        match key.as_str() {
            "friedman" => Ok(Setup::Friedman),
            "checkerboard" => Ok(Setup::Checkerboard),
            "vanderlaan" | "vdl" => Ok(Setup::VanDerLaan),
            "meier1" => Ok(Setup::Meier1),
            "meier2" => Ok(Setup::Meier2),
            _ => Err(Error::InvalidParameter(format!("unknown setup `{s}`"))),
        }
    }
}

/// How `N(0, 0.5)` is read: 0.5 as the variance (default) or as the standard deviation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseConvention {
    #[default]
    Variance,
    StdDev,
}

/// Covariance `0.9^|j-k|` of the Checkerboard features.
pub fn checkerboard_covariance(p: usize) -> Array2<f64> {
    Array2::from_shape_fn((p, p), |(j, k)| 0.9f64.powi((j as i32 - k as i32).abs()))
}

/// Draws an `n x p` feature matrix for `setup`.
pub fn gen_features<R: Rng + ?Sized>(setup: Setup, n: usize, p: usize, rng: &mut R) -> Result<FeatureMatrix> {
    setup.check_width(p)?;
    let values = match setup {
        Setup::Checkerboard => {
            let factor = Cholesky::factor(checkerboard_covariance(p).view(), 0.0)?.lower();
            let mut values = Array2::zeros((n, p));
            let mut z = vec![0.0; p];
            for i in 0..n {
                z.iter_mut().for_each(|v| *v = StandardNormal.sample(rng));
                for j in 0..p {
                    values[[i, j]] = (0..=j).map(|k| factor[[j, k]] * z[k]).sum();
                }
            }
            values
        }
        _ => Array2::from_shape_simple_fn((n, p), || rng.random::<f64>()),
    };
    FeatureMatrix::new(values)
}

fn signals(setup: Setup, x: &FeatureMatrix) -> Result<Vec<f64>> {
    setup.check_width(x.ncols())?;
    Ok(x.values()
        .rows()
        .into_iter()
        .map(|row| match row.as_slice() {
            Some(s) => setup.signal_unchecked(s),
            None => setup.signal_unchecked(&row.to_vec()),
        })
        .collect())
}

fn median(values: &mut [f64]) -> f64 {
    let n = values.len();
    let mid = n / 2;
    let (_, upper, _) = values.select_nth_unstable_by(mid, f64::total_cmp);
    let upper = *upper;
    if n % 2 == 1 {
        upper
    } else {
        let lower = values[..mid].iter().copied().fold(f64::NEG_INFINITY, f64::max);
        0.5 * (lower + upper)
    }
}

/// Number of draws behind each setup's signal median.
pub const MEDIAN_SAMPLES: usize = 1_000_000;

/// Median of `f(X)` for the setup, estimated once from `MEDIAN_SAMPLES`
/// draws with a fixed per-setup seed and cached for the process lifetime.
pub fn signal_median(setup: Setup) -> f64 {
    static CACHE: [OnceLock<f64>; 5] = [const { OnceLock::new() }; 5];
    *CACHE[setup as usize].get_or_init(|| {
        let mut rng = ChaCha8Rng::seed_from_u64(setup.median_seed());
        let x = gen_features(setup, MEDIAN_SAMPLES, setup.min_features(), &mut rng).expect("minimum width");
        let mut f = signals(setup, &x).expect("minimum width");
        median(&mut f)
    })
}

/// Descriptive record stored next to generated data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenerationMeta {
    pub setup: Setup,
    pub target_kind: TargetKind,
    pub noise_sd: Option<f64>,
    /// Median of the signal used to center the logit or log-hazard.
    pub signal_median: Option<f64>,
    pub baseline_hazard: Option<f64>,
    /// Rate of the exponential censoring distribution (0 = no censoring).
    pub censoring_rate_param: Option<f64>,
    /// Fraction of censored rows in the generated sample.
    pub censoring_achieved: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GeneratedData {
    pub x: FeatureMatrix,
    /// Noise-free signal `f(x_i)`.
    pub signal: Vec<f64>,
    pub target: Target,
    pub meta: GenerationMeta,
}

fn meta(setup: Setup, kind: TargetKind) -> GenerationMeta {
    GenerationMeta {
        setup,
        target_kind: kind,
        noise_sd: None,
        signal_median: None,
        baseline_hazard: None,
        censoring_rate_param: None,
        censoring_achieved: None,
    }
}

/// `Y = f(X) + e` with `e ~ N(0, noise_sd^2)`.
pub fn make_continuous<R: Rng + ?Sized>(setup: Setup, x: FeatureMatrix, noise_sd: f64, rng: &mut R) -> Result<GeneratedData> {
    if !(noise_sd >= 0.0) {
        return Err(Error::InvalidParameter(format!("noise sd must be >= 0, got {noise_sd}")));
    }
    let signal = signals(setup, &x)?;
    let y = signal
        .iter()
        .map(|f| {
            let e: f64 = StandardNormal.sample(rng);
            f + noise_sd * e
        })
        .collect();
    Ok(GeneratedData {
        x,
        signal,
        target: Target::Continuous(y),
        meta: GenerationMeta {
            noise_sd: Some(noise_sd),
            ..meta(setup, TargetKind::Continuous)
        },
    })
}

#[inline]
pub fn logistic(z: f64) -> f64 {
    if z >= 0.0 {
        1.0 / (1.0 + (-z).exp())
    } else {
        let e = z.exp();
        e / (1.0 + e)
    }
}

/// Bernoulli labels with `P(+1) = logistic(f(x) - M)`, `M` the setup's signal median.
pub fn make_binary<R: Rng + ?Sized>(setup: Setup, x: FeatureMatrix, rng: &mut R) -> Result<GeneratedData> {
    let signal = signals(setup, &x)?;
    let centre = signal_median(setup);
    let labels = signal
        .iter()
        .map(|f| if rng.random::<f64>() < logistic(f - centre) { 1 } else { -1 })
        .collect();
    Ok(GeneratedData {
        x,
        signal,
        target: Target::Binary(labels),
        meta: GenerationMeta {
            signal_median: Some(centre),
            ..meta(setup, TargetKind::Binary)
        },
    })
}

/// `1 - mean(max(p, 1 - p))` with `p = logistic(score - centre)`.
pub fn bayes_error_from_scores(scores: &[f64], centre: f64) -> f64 {
    let total: f64 = scores
        .iter()
        .map(|s| {
            let p = logistic(s - centre);
            p.max(1.0 - p)
        })
        .sum();
    1.0 - total / scores.len() as f64
}

/// What the class probability is computed from when estimating the Bayes error.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BayesSource {
    /// The continuous outcome `f(X) + e`, centered by its own sample median.
    #[default]
    Outcome,
    /// The noise-free signal `f(X)`, centered by the setup's signal median.
    Signal,
}

/// Monte Carlo Bayes error rate of the dichotomized problem.
pub fn bayes_error(setup: Setup, samples: usize, source: BayesSource, noise: NoiseConvention, seed: u64) -> Result<f64> {
    if samples == 0 {
        return Err(Error::InvalidParameter("need at least one sample".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_features(setup, samples, setup.min_features(), &mut rng)?;
    let mut scores = signals(setup, &x)?;
    let centre = match source {
        BayesSource::Signal => signal_median(setup),
        BayesSource::Outcome => {
            let sd = setup.noise_sd(noise);
            for s in scores.iter_mut() {
                let e: f64 = StandardNormal.sample(&mut rng);
                *s += sd * e;
            }
            median(&mut scores.clone())
        }
    };
    Ok(bayes_error_from_scores(&scores, centre))
}

/// Event times under a constant baseline hazard: `T = -ln(U) / (rate * exp(eta))`.
pub fn survival_times<R: Rng + ?Sized>(log_hazard: &[f64], baseline_rate: f64, rng: &mut R) -> Vec<f64> {
    log_hazard
        .iter()
        .map(|eta| {
            let u: f64 = Open01.sample(rng);
            -u.ln() / (baseline_rate * eta.exp())
        })
        .collect()
}

/// Size of the pilot sample used to calibrate the censoring rate.
pub const CENSORING_PILOT: usize = 100_000;

/// Rate of exponential censoring that censors `target` of the rows of a
/// fresh pilot sample. Returns 0 for `target == 0` (no censoring).
pub fn calibrate_censoring<R: Rng + ?Sized>(setup: Setup, baseline_rate: f64, target: f64, rng: &mut R) -> Result<f64> {
    if !(0.0..1.0).contains(&target) {
        return Err(Error::CensoringUnattainable(target));
    }
    if target == 0.0 {
        return Ok(0.0);
    }
    let x = gen_features(setup, CENSORING_PILOT, setup.min_features(), rng)?;
    let centre = signal_median(setup);
    let eta: Vec<f64> = signals(setup, &x)?.into_iter().map(|f| f - centre).collect();
    let times = survival_times(&eta, baseline_rate, rng);
    let unit: Vec<f64> = (0..CENSORING_PILOT)
        .map(|_| {
            let u: f64 = Open01.sample(rng);
            -u.ln()
        })
        .collect();
    let censored = |rate: f64| {
        times.iter().zip(&unit).filter(|(t, e)| **e / rate < **t).count() as f64 / CENSORING_PILOT as f64
    };

    // The censored fraction increases with the rate; bisect on its logarithm.
    let (mut lo, mut hi) = ((1e-12f64).ln(), (1e12f64).ln());
    if censored(lo.exp()) > target || censored(hi.exp()) < target {
        return Err(Error::CensoringUnattainable(target));
    }
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        let frac = censored(mid.exp());
        if (frac - target).abs() <= 1e-3 {
            return Ok(mid.exp());
        }
        if frac < target {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let rate = (0.5 * (lo + hi)).exp();
    if (censored(rate) - target).abs() <= 0.01 {
        Ok(rate)
    } else {
        Err(Error::CensoringUnattainable(target))
    }
}

/// Cox proportional-hazards outcomes with hazard `rate * exp(f(x) - M)`,
/// censored by independent exponential times calibrated to `target_censoring`.
pub fn make_survival<R: Rng + ?Sized>(
    setup: Setup,
    x: FeatureMatrix,
    rng: &mut R,
    baseline_rate: f64,
    target_censoring: f64,
) -> Result<GeneratedData> {
    if !(baseline_rate > 0.0) || !baseline_rate.is_finite() {
        return Err(Error::InvalidParameter(format!("baseline hazard must be positive, got {baseline_rate}")));
    }
    let signal = signals(setup, &x)?;
    let centre = signal_median(setup);
    let mut pilot_rng = ChaCha8Rng::seed_from_u64(rng.random());
    let rate = calibrate_censoring(setup, baseline_rate, target_censoring, &mut pilot_rng)?;

    let eta: Vec<f64> = signal.iter().map(|f| f - centre).collect();
    let event_times = survival_times(&eta, baseline_rate, rng);
    let mut time = Vec::with_capacity(event_times.len());
    let mut event = Vec::with_capacity(event_times.len());
    for t in event_times {
        let c = if rate > 0.0 {
            let u: f64 = Open01.sample(rng);
            -u.ln() / rate
        } else {
            f64::INFINITY
        };
        if t <= c {
            time.push(t);
            event.push(true);
        } else {
            time.push(c);
            event.push(false);
        }
    }
    let n = time.len().max(1);
    let achieved = event.iter().filter(|&&e| !e).count() as f64 / n as f64;
    Ok(GeneratedData {
        x,
        signal,
        target: Target::Survival(SurvivalData::new(time, event)?),
        meta: GenerationMeta {
            signal_median: Some(centre),
            baseline_hazard: Some(baseline_rate),
            censoring_rate_param: Some(rate),
            censoring_achieved: Some(achieved),
            ..meta(setup, TargetKind::Survival)
        },
    })
}

/// Options for [`simulate`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimOptions {
    pub noise: NoiseConvention,
    /// Overrides the setup's noise standard deviation (continuous targets).
    pub noise_sd: Option<f64>,
    pub baseline_hazard: f64,
    pub censoring: f64,
}

impl Default for SimOptions {
    fn default() -> Self {
        Self {
            noise: NoiseConvention::Variance,
            noise_sd: None,
            baseline_hazard: 1.0,
            censoring: 0.3,
        }
    }
}

/// Features plus a target of the requested kind, all from one seeded stream.
pub fn simulate(setup: Setup, kind: TargetKind, n: usize, p: usize, seed: u64, options: &SimOptions) -> Result<GeneratedData> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x = gen_features(setup, n, p, &mut rng)?;
    match kind {
        TargetKind::Continuous => {
            let sd = options.noise_sd.unwrap_or_else(|| setup.noise_sd(options.noise));
            make_continuous(setup, x, sd, &mut rng)
        }
        TargetKind::Binary => make_binary(setup, x, &mut rng),
        TargetKind::Survival => make_survival(setup, x, &mut rng, options.baseline_hazard, options.censoring),
        TargetKind::Class => Err(Error::InvalidParameter("simulation supports continuous, binary and survival targets".into())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signal_examples() {
        let half = vec![0.5; 20];
        let fr = Setup::Friedman.signal(&half).unwrap();
        assert!((fr - (10.0 / 2f64.sqrt() + 7.5)).abs() < 1e-12);
        assert!((fr - 14.5711).abs() < 1e-4);
        let mut x = vec![0.0; 20];
        for j in [4, 9, 14, 19] {
            x[j] = 1.0;
        }
        assert_eq!(Setup::Checkerboard.signal(&x).unwrap(), 4.0);
        assert!((Setup::Meier2.signal(&half[..4]).unwrap() - 7.0).abs() < 1e-12);
        assert!(matches!(
            Setup::Checkerboard.signal(&half[..10]),
            Err(Error::InsufficientFeatures { required: 20, .. })
        ));
    }

    #[test]
    fn covariance_entries() {
        let s = checkerboard_covariance(20);
        assert!(s.diag().iter().all(|&v| v == 1.0));
        assert!((s[[0, 2]] - 0.81).abs() < 1e-15);
    }

    #[test]
    fn noise_readings() {
        assert_eq!(Setup::Friedman.noise_sd(NoiseConvention::Variance), 1.0);
        assert!((Setup::Meier1.noise_sd(NoiseConvention::Variance) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(Setup::Meier1.noise_sd(NoiseConvention::StdDev), 0.5);
    }

    #[test]
    fn zero_noise_reproduces_signal() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let x = gen_features(Setup::Meier1, 50, 6, &mut rng).unwrap();
        let d = make_continuous(Setup::Meier1, x, 0.0, &mut rng).unwrap();
        match d.target {
            Target::Continuous(y) => assert_eq!(y, d.signal),
            _ => unreachable!(),
        }
    }

    #[test]
    fn logistic_limits() {
        assert_eq!(logistic(0.0), 0.5);
        assert!(logistic(800.0) == 1.0);
        assert!(logistic(-800.0) == 0.0);
        assert_eq!(bayes_error_from_scores(&[2.0, 2.0, 2.0], 2.0), 0.5);
    }

    #[test]
    fn no_censoring_target() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let x = gen_features(Setup::Meier2, 200, 4, &mut rng).unwrap();
        let d = make_survival(Setup::Meier2, x, &mut rng, 1.0, 0.0).unwrap();
        match d.target {
            Target::Survival(s) => assert!(s.event.iter().all(|&e| e)),
            _ => unreachable!(),
        }
        assert_eq!(d.meta.censoring_rate_param, Some(0.0));
    }

    #[test]
    fn rejects_bad_censoring() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        assert!(calibrate_censoring(Setup::Meier1, 1.0, 1.0, &mut rng).is_err());
        assert!(calibrate_censoring(Setup::Meier1, 1.0, -0.1, &mut rng).is_err());
    }

    #[test]
    fn parses_setup_names() {
        for s in Setup::ALL {
            assert_eq!(s.key().parse::<Setup>().unwrap(), s);
            assert_eq!(s.label().parse::<Setup>().unwrap(), s);
        }
    }
}
