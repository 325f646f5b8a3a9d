//! Banks of subtractively dithered uniform quantizers sharing one step size.
//!
//! Channel `k` of a [`DitheredBank`] has thresholds `(j + a_k) delta` for all
//! integers `j`. Subtracting the dither before a zero-offset quantizer and
//! adding it back after reconstruction is the same map as quantizing with the
//! shifted thresholds, so the bank is modelled directly on shifted lattices.
//! Jointly the channels quantize with the union of their thresholds (the
//! merged partition); its cells are exactly the joint-index classes.

use std::collections::HashMap;

use serde::Serialize;

use crate::closed_form::{dithered_distortion, dithered_rate, penalty_entropy_constrained};
use crate::error::{invalid, Error, Result};
use crate::montecarlo::{run_trials, EstimateReport, Summary, TrialRng};
use crate::quantizer::{check_unit, ThresholdSet};

/// Steps coarser than this are outside the high-resolution regime.
pub const COARSE_STEP_WARNING: f64 = 0.0625;

/// Points `(j + frac) step` inside the open interval `(0, 1)`, ascending.
pub fn lattice_thresholds(step: f64, frac: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity((1.0 / step) as usize + 1);
    let mut j = 0u64;
    loop {
        let v = (j as f64 + frac) * step;
        if v >= 1.0 {
            return out;
        }
        if v > 0.0 {
            out.push(v);
        }
        j += 1;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DitheredBank {
    delta: f64,
    offsets: Vec<f64>,
}

/// Per-channel cell indices `(i_0, ..., i_{K-1})`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize)]
pub struct JointIndex(pub Vec<i64>);

impl JointIndex {
    pub fn indices(&self) -> &[i64] {
        &self.0
    }
}

impl DitheredBank {
    /// `offsets[0]` must be 0; every offset is a fraction of `delta` in `[0, 1)`.
    pub fn new(delta: f64, offsets: Vec<f64>) -> Result<Self> {
        if !(delta.is_finite() && delta > 0.0 && delta <= 1.0) {
            return Err(invalid("delta", format!("{delta} outside (0, 1]")));
        }
        match offsets.first() {
            None => return Err(invalid("offsets", "at least one channel is required")),
            Some(&a) if a != 0.0 => {
                return Err(invalid("offsets", "channel 0 must have offset 0"));
            }
            _ => {}
        }
        for &a in &offsets {
            if !(0.0..1.0).contains(&a) {
                return Err(invalid("offsets", format!("{a} outside [0, 1)")));
            }
        }
        Ok(Self { delta, offsets })
    }

    /// Channel 0 at offset 0, the others uniform on `[0, 1)`.
    pub fn random(delta: f64, channels: usize, rng: &mut TrialRng) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        let offsets = std::iter::once(0.0)
            .chain((1..channels).map(|_| rng.unit()))
            .collect();
        Self::new(delta, offsets)
    }

    /// Offsets `k / K`; the merged partition is uniform with step `delta / K`.
    pub fn evenly_spaced(delta: f64, channels: usize) -> Result<Self> {
        if channels == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        let offsets = (0..channels).map(|k| k as f64 / channels as f64).collect();
        Self::new(delta, offsets)
    }

    pub fn delta(&self) -> f64 {
        self.delta
    }

    pub fn offsets(&self) -> &[f64] {
        &self.offsets
    }

    pub fn channels(&self) -> usize {
        self.offsets.len()
    }

    /// Threshold `(j + a_k) delta`; cell `i` of channel `k` is
    /// `[threshold(k, i - 1), threshold(k, i))`.
    pub fn threshold(&self, channel: usize, j: i64) -> f64 {
        (j as f64 + self.offsets[channel]) * self.delta
    }

    fn channel_index(&self, channel: usize, x: f64) -> i64 {
        let mut i = (x / self.delta - self.offsets[channel]).floor() as i64 + 1;
        // align with the thresholds as actually computed
        while x < self.threshold(channel, i - 1) {
            i -= 1;
        }
        while x >= self.threshold(channel, i) {
            i += 1;
        }
        i
    }

    /// `i_k = floor(x / delta - a_k) + 1` for every channel.
    pub fn encode_joint(&self, x: f64) -> Result<JointIndex> {
        check_unit(x)?;
        Ok(JointIndex(
            (0..self.channels())
                .map(|k| self.channel_index(k, x))
                .collect(),
        ))
    }

    /// Intersection of the per-channel cells with `[0, 1)`.
    pub fn joint_cell(&self, ji: &JointIndex) -> Result<(f64, f64)> {
        if ji.0.len() != self.channels() {
            return Err(Error::InconsistentJointIndex {
                indices: ji.0.clone(),
            });
        }
        let mut left = 0.0f64;
        let mut right = 1.0f64;
        for (k, &i) in ji.0.iter().enumerate() {
            left = left.max(self.threshold(k, i - 1));
            right = right.min(self.threshold(k, i));
        }
        if left >= right {
            return Err(Error::InconsistentJointIndex {
                indices: ji.0.clone(),
            });
        }
        Ok((left, right))
    }

    /// Midpoint of the joint cell.
    pub fn reconstruct(&self, ji: &JointIndex) -> Result<f64> {
        let (l, r) = self.joint_cell(ji)?;
        Ok(0.5 * (l + r))
    }

    /// Partition of `[0, 1)` induced by channel `k` alone.
    pub fn channel_partition(&self, channel: usize) -> ThresholdSet {
        ThresholdSet::from_unit_draws(lattice_thresholds(self.delta, self.offsets[channel]))
    }

    /// Union of all channel thresholds inside `(0, 1)`, deduplicated.
    pub fn merge_partition(&self) -> ThresholdSet {
        merged_thresholds(self.delta, &self.offsets)
    }

    /// Exact distortion and joint-index entropy for a uniform source on `[0, 1)`.
    pub fn exact_metrics(&self) -> BankMetrics {
        let merged = self.merge_partition();
        BankMetrics {
            distortion: merged.conditional_mse(),
            rate: merged.conditional_entropy(),
        }
    }
}

/// Merged partition for arbitrary offsets, including a nonzero first one.
pub fn merged_thresholds(delta: f64, offsets: &[f64]) -> ThresholdSet {
    let mut t: Vec<f64> = offsets
        .iter()
        .flat_map(|&a| lattice_thresholds(delta, a))
        .collect();
    t.sort_by(f64::total_cmp);
    t.dedup();
    ThresholdSet::from_unit_draws(t)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct BankMetrics {
    pub distortion: f64,
    /// Joint index entropy in bits.
    pub rate: f64,
}

pub fn bank_exact_metrics(bank: &DitheredBank) -> BankMetrics {
    bank.exact_metrics()
}

/// `D / ((1/12) 2^{2h} 2^{-2R})`.
pub fn normalized_penalty(distortion: f64, rate: f64, h_source: f64) -> f64 {
    distortion / ((2.0 * h_source - 2.0 * rate).exp2() / 12.0)
}

/// Offset-averaged metrics of a bank with random offsets, checked against the
/// dithered closed forms for a uniform source (`h = 0`).
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DitheredReport {
    pub channels: u64,
    pub delta: f64,
    pub offset_trials: u64,
    pub seed: u64,
    pub distortion: EstimateReport,
    pub rate: EstimateReport,
    pub penalty: f64,
    pub penalty_predicted: f64,
    pub coarse_step_warning: bool,
}

impl DitheredReport {
    pub fn distortion_relative_error(&self) -> f64 {
        self.distortion.relative_error().unwrap_or(0.0)
    }

    pub fn rate_error_bits(&self) -> f64 {
        self.rate.absolute_error().unwrap_or(0.0)
    }

    pub fn penalty_relative_error(&self) -> f64 {
        (self.penalty - self.penalty_predicted).abs() / self.penalty_predicted
    }
}

pub fn average_random_banks(
    channels: u64,
    delta: f64,
    offset_trials: u64,
    seed: u64,
) -> Result<DitheredReport> {
    if offset_trials < 2 {
        return Err(invalid(
            "offset_trials",
            "at least 2 draws are needed for a standard error",
        ));
    }
    // validates delta and K
    DitheredBank::random(delta, channels as usize, &mut TrialRng::new(seed, 0))?;
    let pairs = run_trials(offset_trials, seed, |rng| {
        let bank = DitheredBank::random(delta, channels as usize, rng).expect("validated");
        let m = bank.exact_metrics();
        (m.distortion, m.rate)
    });
    let (d, r): (Vec<f64>, Vec<f64>) = pairs.into_iter().unzip();
    let distortion = EstimateReport::new(
        "bank_distortion",
        Summary::of(&d),
        seed,
        Some(dithered_distortion(delta, channels)),
    );
    let rate = EstimateReport::new(
        "bank_rate_bits",
        Summary::of(&r),
        seed,
        Some(dithered_rate(delta, channels, 0.0)),
    );
    Ok(DitheredReport {
        channels,
        delta,
        offset_trials,
        seed,
        penalty: normalized_penalty(distortion.mean, rate.mean, 0.0),
        penalty_predicted: penalty_entropy_constrained(channels),
        distortion,
        rate,
        coarse_step_warning: delta > COARSE_STEP_WARNING,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub channels: u64,
    pub penalty: f64,
    pub predicted: f64,
}

/// Empirical entropy-constrained penalty for `K = 1..=k_max` against
/// [`penalty_entropy_constrained`]. Each `K` uses its own derived seed.
pub fn sweep_penalty(
    k_max: u64,
    delta: f64,
    offset_trials: u64,
    seed: u64,
) -> Result<Vec<SweepRow>> {
    if k_max == 0 {
        return Err(invalid("K_max", "must be at least 1"));
    }
    (1..=k_max)
        .map(|k| {
            let r = average_random_banks(k, delta, offset_trials, seed.wrapping_add(k))?;
            Ok(SweepRow {
                channels: k,
                penalty: r.penalty,
                predicted: r.penalty_predicted,
            })
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BijectionReport {
    pub points: usize,
    pub merged_cells_seen: usize,
    pub joint_indices_seen: usize,
    pub mismatches: usize,
}

/// Compares merged-partition cells with joint indices on the grid
/// `x = i / points`; a mismatch is any cell or joint index mapped to two
/// different partners, or a joint cell that differs from the merged cell.
pub fn check_joint_bijection(bank: &DitheredBank, points: usize) -> BijectionReport {
    let merged = bank.merge_partition();
    let mut cell_to_joint: HashMap<usize, JointIndex> = HashMap::new();
    let mut joint_to_cell: HashMap<JointIndex, usize> = HashMap::new();
    let mut mismatches = 0;
    for i in 0..points {
        let x = i as f64 / points as f64;
        let cell = merged.cell_of(x).expect("grid point in [0, 1)");
        let ji = bank.encode_joint(x).expect("grid point in [0, 1)");
        match bank.joint_cell(&ji) {
            Ok((l, r)) if l == cell.left && r == cell.right => {}
            _ => mismatches += 1,
        }
        if *cell_to_joint
            .entry(cell.index)
            .or_insert_with(|| ji.clone())
            != ji
        {
            mismatches += 1;
        }
        if *joint_to_cell.entry(ji).or_insert(cell.index) != cell.index {
            mismatches += 1;
        }
    }
    BijectionReport {
        points,
        merged_cells_seen: cell_to_joint.len(),
        joint_indices_seen: joint_to_cell.len(),
        mismatches,
    }
}
