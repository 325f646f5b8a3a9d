//! Seeded Monte Carlo estimators for the random-threshold quantizer.
//!
//! Every trial draws from its own ChaCha8 stream keyed by the run seed and
//! selected by the trial index, so a run is a pure function of its
//! configuration. Trials are mapped in parallel, collected in index order and
//! reduced with pairwise summation; the result does not depend on the number
//! of worker threads.

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::closed_form::{
    distortion_random, rate_random, spacing_cdf, spacing_moment, two_step_distortion,
    two_step_distortion_exact, two_step_rate, two_step_rate_exact, TwoStepConfig,
};
use crate::dithered::lattice_thresholds;
use crate::error::{invalid, Result};
use crate::quantizer::ThresholdSet;

/// Random stream for one trial.
pub struct TrialRng(ChaCha8Rng);

impl TrialRng {
    pub fn new(seed: u64, trial: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(trial);
        Self(rng)
    }

    /// Uniform draw on `[0, 1)` from the top 53 bits of one word.
    pub fn unit(&mut self) -> f64 {
        (self.0.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}

/// Runs `trials` independent trials in parallel and returns their outputs in
/// trial order.
pub fn run_trials<T, F>(trials: u64, seed: u64, f: F) -> Vec<T>
where
    T: Send,
    F: Fn(&mut TrialRng) -> T + Sync,
{
    (0..trials)
        .into_par_iter()
        .map(|i| f(&mut TrialRng::new(seed, i)))
        .collect()
}

/// Pairwise sum; fixed association order for a given length.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= 32 {
        return xs.iter().sum();
    }
    let (a, b) = xs.split_at(xs.len() / 2);
    pairwise_sum(a) + pairwise_sum(b)
}

/// Sample mean and standard error of the mean.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Summary {
    pub mean: f64,
    pub std_error: f64,
    pub count: u64,
}

impl Summary {
    /// Shifted two-pass estimate; a constant sample gives its value exactly
    /// and a zero standard error.
    pub fn of(xs: &[f64]) -> Self {
        let n = xs.len();
        assert!(n >= 1, "empty sample");
        let shift = xs[0];
        let centred: Vec<f64> = xs.iter().map(|x| x - shift).collect();
        let offset = pairwise_sum(&centred) / n as f64;
        let mean = shift + offset;
        let std_error = if n < 2 {
            0.0
        } else {
            let sq: Vec<f64> = centred
                .iter()
                .map(|d| (d - offset) * (d - offset))
                .collect();
            (pairwise_sum(&sq) / (n as f64 - 1.0) / n as f64).sqrt()
        };
        Self {
            mean,
            std_error,
            count: n as u64,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    /// Averages the exact conditional metric of each threshold draw.
    RaoBlackwell,
    /// Also samples the source and averages the per-sample loss.
    RawSampling,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialConfig {
    pub cells: u64,
    pub trials: u64,
    pub seed: u64,
    pub mode: Mode,
    pub raw_samples_per_trial: u64,
}

impl TrialConfig {
    pub fn new(cells: u64, trials: u64, seed: u64) -> Result<Self> {
        let cfg = Self {
            cells,
            trials,
            seed,
            mode: Mode::RaoBlackwell,
            raw_samples_per_trial: 1,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn raw(mut self, samples_per_trial: u64) -> Result<Self> {
        self.mode = Mode::RawSampling;
        self.raw_samples_per_trial = samples_per_trial;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        if self.cells == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        if self.trials < 2 {
            return Err(invalid(
                "trials",
                "at least 2 trials are needed for a standard error",
            ));
        }
        if self.raw_samples_per_trial == 0 {
            return Err(invalid("raw_samples_per_trial", "must be positive"));
        }
        Ok(())
    }
}

/// Point estimate with its standard error and the closed-form value it is
/// checked against.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimateReport {
    pub quantity: String,
    pub mean: f64,
    pub std_error: f64,
    pub trials: u64,
    pub seed: u64,
    pub target: Option<f64>,
    pub z_score: Option<f64>,
}

impl EstimateReport {
    pub fn new(
        quantity: impl Into<String>,
        summary: Summary,
        seed: u64,
        target: Option<f64>,
    ) -> Self {
        let z_score = match target {
            Some(t) if summary.std_error > 0.0 => Some((summary.mean - t) / summary.std_error),
            _ => None,
        };
        Self {
            quantity: quantity.into(),
            mean: summary.mean,
            std_error: summary.std_error,
            trials: summary.count,
            seed,
            target,
            z_score,
        }
    }

    /// `|z| <= limit`; with zero spread the estimate must hit the target.
    pub fn within_sigma(&self, limit: f64) -> bool {
        match (self.target, self.z_score) {
            (None, _) => true,
            (Some(_), Some(z)) => z.abs() <= limit,
            (Some(t), None) => (self.mean - t).abs() <= 1e-14 * t.abs().max(1.0),
        }
    }

    pub fn relative_error(&self) -> Option<f64> {
        self.target.map(|t| (self.mean - t).abs() / t.abs())
    }

    pub fn absolute_error(&self) -> Option<f64> {
        self.target.map(|t| (self.mean - t).abs())
    }
}

/// `K - 1` independent uniform thresholds, sorted.
pub fn sample_thresholds(cells: u64, rng: &mut TrialRng) -> ThresholdSet {
    let draws = (1..cells).map(|_| rng.unit()).collect();
    ThresholdSet::from_unit_draws(draws)
}

fn raw_average(
    t: &ThresholdSet,
    n: u64,
    rng: &mut TrialRng,
    loss: impl Fn(&ThresholdSet, f64) -> f64,
) -> f64 {
    let total: f64 = (0..n).map(|_| loss(t, rng.unit())).sum();
    total / n as f64
}

fn squared_error(t: &ThresholdSet, x: f64) -> f64 {
    let cell = t.cell_of(x).expect("unit draw");
    let e = x - cell.midpoint();
    e * e
}

fn self_information(t: &ThresholdSet, x: f64) -> f64 {
    t.self_information(x).expect("unit draw")
}

/// Mean-squared error averaged over thresholds (and the source in raw mode).
pub fn estimate_distortion(cfg: &TrialConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let c = *cfg;
    let values = run_trials(c.trials, c.seed, |rng| {
        let t = sample_thresholds(c.cells, rng);
        match c.mode {
            Mode::RaoBlackwell => t.conditional_mse(),
            Mode::RawSampling => raw_average(&t, c.raw_samples_per_trial, rng, squared_error),
        }
    });
    Ok(EstimateReport::new(
        "distortion",
        Summary::of(&values),
        c.seed,
        Some(distortion_random(c.cells)),
    ))
}

/// Index entropy in bits averaged over thresholds; raw mode averages the
/// self-information `-log2 L` of sampled source values.
pub fn estimate_rate(cfg: &TrialConfig) -> Result<EstimateReport> {
    cfg.validate()?;
    let c = *cfg;
    let values = run_trials(c.trials, c.seed, |rng| {
        let t = sample_thresholds(c.cells, rng);
        match c.mode {
            Mode::RaoBlackwell => t.conditional_entropy(),
            Mode::RawSampling => raw_average(&t, c.raw_samples_per_trial, rng, self_information),
        }
    });
    Ok(EstimateReport::new(
        "rate_bits",
        Summary::of(&values),
        c.seed,
        Some(rate_random(c.cells)),
    ))
}

/// Length of the cell containing one uniform source draw.
pub fn sample_cell_length(cells: u64, rng: &mut TrialRng) -> f64 {
    let t = sample_thresholds(cells, rng);
    t.cell_of(rng.unit()).expect("unit draw").length()
}

/// `E[L^p]` for the length `L` of the cell containing the source sample.
/// Raw mode samples the source; Rao–Blackwell mode uses
/// `E[L^p | thresholds] = sum_k s_k^{p+1}`.
pub fn estimate_spacing_moment(cfg: &TrialConfig, p: u32) -> Result<EstimateReport> {
    cfg.validate()?;
    if p == 0 {
        return Err(invalid("p", "moment order must be positive"));
    }
    let target = spacing_moment(cfg.cells, p)?;
    let c = *cfg;
    let values = run_trials(c.trials, c.seed, |rng| {
        let t = sample_thresholds(c.cells, rng);
        match c.mode {
            Mode::RaoBlackwell => t.spacings().iter().map(|s| s.powi(p as i32 + 1)).sum(),
            Mode::RawSampling => raw_average(&t, c.raw_samples_per_trial, rng, |t, x| {
                t.cell_of(x).expect("unit draw").length().powi(p as i32)
            }),
        }
    });
    Ok(EstimateReport::new(
        format!("spacing_moment_{p}"),
        Summary::of(&values),
        c.seed,
        Some(target),
    ))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub degrees_of_freedom: usize,
    pub critical_value: f64,
    pub level: f64,
    pub bins_requested: usize,
    pub bins_used: usize,
    pub merged: bool,
    pub passed: bool,
}

/// Pearson goodness of fit of `observed` counts against bin probabilities.
/// Adjacent bins are merged left to right until each expected count is at
/// least 5; an undersized tail is folded into the last kept bin.
pub fn chi_square_gof(
    observed: &[u64],
    probabilities: &[f64],
    level: f64,
) -> Result<ChiSquareReport> {
    if observed.len() != probabilities.len() || observed.is_empty() {
        return Err(invalid(
            "bins",
            "observed and expected bins must match and be non-empty",
        ));
    }
    let n: u64 = observed.iter().sum();
    let mut obs = Vec::new();
    let mut exp = Vec::new();
    let (mut o_acc, mut e_acc) = (0u64, 0.0f64);
    for (&o, &p) in observed.iter().zip(probabilities) {
        o_acc += o;
        e_acc += p * n as f64;
        if e_acc >= 5.0 {
            obs.push(o_acc);
            exp.push(e_acc);
            o_acc = 0;
            e_acc = 0.0;
        }
    }
    if e_acc > 0.0 || o_acc > 0 {
        match (obs.last_mut(), exp.last_mut()) {
            (Some(o), Some(e)) => {
                *o += o_acc;
                *e += e_acc;
            }
            _ => {
                obs.push(o_acc);
                exp.push(e_acc);
            }
        }
    }
    if obs.len() < 2 {
        return Err(invalid("bins", "fewer than two bins after merging"));
    }
    let statistic = obs
        .iter()
        .zip(&exp)
        .map(|(&o, &e)| {
            let d = o as f64 - e;
            d * d / e
        })
        .sum();
    let dof = obs.len() - 1;
    let critical_value = ChiSquared::new(dof as f64)
        .map_err(|e| invalid("degrees_of_freedom", e.to_string()))?
        .inverse_cdf(level);
    Ok(ChiSquareReport {
        statistic,
        degrees_of_freedom: dof,
        critical_value,
        level,
        bins_requested: observed.len(),
        bins_used: obs.len(),
        merged: obs.len() != observed.len(),
        passed: statistic <= critical_value,
    })
}

/// Equal-width histogram of sampled cell lengths on `[0, 1]`.
pub fn cell_length_histogram(cfg: &TrialConfig, bins: usize) -> Vec<u64> {
    let c = *cfg;
    let lengths = run_trials(c.trials, c.seed, |rng| sample_cell_length(c.cells, rng));
    let mut counts = vec![0u64; bins];
    for l in lengths {
        let b = ((l * bins as f64) as usize).min(bins - 1);
        counts[b] += 1;
    }
    counts
}

/// Chi-square test of sampled cell lengths against the `K`-cell spacing law
/// at the 0.999 level.
pub fn spacing_histogram_test(cfg: &TrialConfig, bins: usize) -> Result<ChiSquareReport> {
    spacing_histogram_test_against(cfg, bins, cfg.cells)
}

/// As [`spacing_histogram_test`] but with the reference density for
/// `model_cells`, which may differ from the sampled `K`.
pub fn spacing_histogram_test_against(
    cfg: &TrialConfig,
    bins: usize,
    model_cells: u64,
) -> Result<ChiSquareReport> {
    cfg.validate()?;
    if bins < 10 {
        return Err(invalid("bins", "at least 10 bins are required"));
    }
    if cfg.cells < 2 {
        return Err(crate::error::Error::DegenerateSpacing);
    }
    let mut probabilities = Vec::with_capacity(bins);
    let mut prev = 0.0;
    for b in 1..=bins {
        let edge = b as f64 / bins as f64;
        let cdf = spacing_cdf(model_cells, edge)?;
        probabilities.push(cdf - prev);
        prev = cdf;
    }
    let counts = cell_length_histogram(cfg, bins);
    chi_square_gof(&counts, &probabilities, 0.999)
}

/// Largest step still treated as high resolution by the two-step oracle.
pub const HIGH_RESOLUTION_STEP: f64 = 0.1;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TwoStepReport {
    pub delta0: f64,
    pub delta1: f64,
    /// Target is the closed form [`two_step_distortion`].
    pub distortion: EstimateReport,
    /// Target is the closed form [`two_step_rate`].
    pub rate: EstimateReport,
    pub exact_distortion: f64,
    pub exact_rate: f64,
    pub high_resolution_warning: bool,
}

impl TwoStepReport {
    /// Relative distortion error and absolute rate error against the closed forms.
    pub fn agrees(&self, rel_distortion: f64, abs_rate_bits: f64) -> bool {
        self.distortion
            .relative_error()
            .is_some_and(|e| e <= rel_distortion)
            && self
                .rate
                .absolute_error()
                .is_some_and(|e| e <= abs_rate_bits)
    }

    /// Same check against the exact offset-averaged expressions.
    pub fn agrees_exact(&self, rel_distortion: f64, abs_rate_bits: f64) -> bool {
        (self.distortion.mean - self.exact_distortion).abs() / self.exact_distortion
            <= rel_distortion
            && (self.rate.mean - self.exact_rate).abs() <= abs_rate_bits
    }
}

/// Merged partition of `{j delta0}` and `{j delta1 + offset}` on `[0, 1)`.
pub fn two_step_partition(delta0: f64, delta1: f64, offset: f64) -> ThresholdSet {
    let mut t = lattice_thresholds(delta0, 0.0);
    t.extend(lattice_thresholds(delta1, offset / delta1));
    t.sort_by(f64::total_cmp);
    t.dedup();
    ThresholdSet::from_unit_draws(t)
}

/// Exact conditional distortion and entropy of the two-lattice partition,
/// averaged over a uniform offset on `[0, delta1)`.
pub fn two_step_oracle(delta0: f64, delta1: f64, trials: u64, seed: u64) -> Result<TwoStepReport> {
    let config = TwoStepConfig::new(delta0, delta1)?;
    if !delta1.is_finite() || delta1 >= 1.0 {
        return Err(invalid("delta1", "must be below 1 for the oracle"));
    }
    if trials < 2 {
        return Err(invalid(
            "trials",
            "at least 2 trials are needed for a standard error",
        ));
    }
    let pairs = run_trials(trials, seed, |rng| {
        let offset = rng.unit() * delta1;
        let t = two_step_partition(delta0, delta1, offset);
        (t.conditional_mse(), t.conditional_entropy())
    });
    let (d, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    Ok(TwoStepReport {
        delta0,
        delta1,
        distortion: EstimateReport::new(
            "two_step_distortion",
            Summary::of(&d),
            seed,
            Some(two_step_distortion(&config)),
        ),
        rate: EstimateReport::new(
            "two_step_rate_bits",
            Summary::of(&r),
            seed,
            Some(two_step_rate(&config)),
        ),
        exact_distortion: two_step_distortion_exact(&config),
        exact_rate: two_step_rate_exact(&config),
        high_resolution_warning: delta0 > HIGH_RESOLUTION_STEP || delta1 > HIGH_RESOLUTION_STEP,
    })
}
