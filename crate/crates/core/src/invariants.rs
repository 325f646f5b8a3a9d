//! Executable invariant suite covering every module.
//!
//! Each check is identified by a stable id and reports pass/fail with a short
//! detail string. The suite is deterministic for a given seed.

use std::f64::consts::FRAC_PI_4;

use serde::Serialize;

use crate::closed_form::{
    asymptotic_penalty_with, distortion_random, dithered_distortion, dithered_rate,
    harmonic_asymptotic, harmonic_residual_bounds, harmonic_residuals, harmonic_sum, harmonic_with,
    penalty_entropy_constrained, penalty_fixed_rate, q_theta, rate_loss_bound, rate_random,
    spacing_moment, spacing_pdf, two_step_distortion, two_step_rate, Constants, TwoStepConfig,
    HARMONIC_SWITCH,
};
use crate::dithered::{
    average_random_banks, check_joint_bijection, merged_thresholds, DitheredBank,
};
use crate::montecarlo::{
    estimate_distortion, estimate_rate, estimate_spacing_moment, run_trials, sample_thresholds,
    spacing_histogram_test, spacing_histogram_test_against, two_step_oracle, Summary, TrialConfig,
    TrialRng,
};
use crate::quantizer::ThresholdSet;

/// Sigma limit for every z-score check.
pub const Z_LIMIT: f64 = 4.0;

/// Largest `n` for which `H_n - gamma - ln(n + 1/2)` is evaluated directly in
/// double precision; beyond it the bound gap falls below rounding error.
pub const DIRECT_RESIDUAL_LIMIT: u64 = 1_000;

/// Smallest `K` from which the entropy-constrained penalty is within 0.01 of
/// its limit.
pub const HIGH_RATE_FROM: u64 = 600;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Outcome {
    pub id: &'static str,
    pub passed: bool,
    pub detail: String,
}

fn outcome(id: &'static str, result: Result<String, String>) -> Outcome {
    match result {
        Ok(detail) => Outcome {
            id,
            passed: true,
            detail,
        },
        Err(detail) => Outcome {
            id,
            passed: false,
            detail,
        },
    }
}

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

/// `1/(24(n+1)^2) <= H_n - gamma - ln(n + 1/2) <= 1/(24 n^2)` for `n = 1..=n_max`.
///
/// The full range uses the gamma-free residual sequence; for
/// `n <= DIRECT_RESIDUAL_LIMIT` the residual is also formed directly from
/// `H_n` and the supplied `gamma`, which must satisfy the same bounds.
pub fn harmonic_bounds(n_max: u64, constants: &Constants) -> Result<String, String> {
    let residuals = harmonic_residuals(n_max);
    for (i, &r) in residuals.iter().enumerate() {
        let n = i as u64 + 1;
        let (lo, hi) = harmonic_residual_bounds(n);
        ensure(lo <= r && r <= hi, || {
            format!("residual {r:e} outside [{lo:e}, {hi:e}] at n = {n}")
        })?;
    }
    for n in 1..=n_max.min(DIRECT_RESIDUAL_LIMIT) {
        let direct = harmonic_with(n, constants) - constants.euler_gamma - (n as f64 + 0.5).ln();
        let (lo, hi) = harmonic_residual_bounds(n);
        ensure(lo <= direct && direct <= hi, || {
            format!(
                "direct residual {direct:e} outside [{lo:e}, {hi:e}] at n = {n} (gamma = {})",
                constants.euler_gamma
            )
        })?;
    }
    Ok(format!("n = 1..={n_max}"))
}

fn harmonic_switch(constants: &Constants) -> Result<String, String> {
    let mut worst = 0.0f64;
    for n in HARMONIC_SWITCH - 2..=HARMONIC_SWITCH + 2 {
        worst = worst.max((harmonic_sum(n) - harmonic_asymptotic(n, constants)).abs());
    }
    ensure(worst <= 1e-12, || format!("branch gap {worst:e}"))?;
    Ok(format!("max gap {worst:e}"))
}

fn consistency_chain() -> Result<String, String> {
    for k in 1..=64u64 {
        ensure(dithered_distortion(1.0, k) == distortion_random(k), || {
            format!("distortion at K = {k}")
        })?;
        ensure(dithered_rate(1.0, k, 0.0) == rate_random(k), || {
            format!("rate at K = {k}")
        })?;
    }
    for delta in [2f64.powi(-4), 2f64.powi(-7), 0.013] {
        let c = TwoStepConfig::new(delta, delta).map_err(|e| e.to_string())?;
        let d = two_step_distortion(&c);
        let r = two_step_rate(&c);
        ensure(
            (d - dithered_distortion(delta, 2)).abs() <= 1e-14 * d,
            || format!("distortion at delta = {delta}"),
        )?;
        ensure((r - dithered_rate(delta, 2, 0.0)).abs() <= 1e-12, || {
            format!("rate at delta = {delta}")
        })?;
    }
    Ok("dithered and two-step forms reduce to the random-quantizer law".into())
}

fn penalty_monotone(constants: &Constants) -> Result<String, String> {
    let limit = asymptotic_penalty_with(constants);
    let (mut pf, mut pe) = (0.0, 0.0);
    for k in 1..=100_000u64 {
        let f = penalty_fixed_rate(k);
        let e = penalty_entropy_constrained(k);
        ensure(f > pf && f <= 6.0, || {
            format!("fixed-rate penalty {f} at K = {k}")
        })?;
        ensure(e > pe && e <= limit, || {
            format!("entropy-constrained penalty {e} at K = {k} (limit {limit})")
        })?;
        pf = f;
        pe = e;
    }
    for k in (100_001..=1_000_000u64).step_by(997) {
        ensure(penalty_fixed_rate(k) <= 6.0, || {
            format!("fixed-rate penalty above 6 at K = {k}")
        })?;
    }
    Ok("strictly increasing, bounded".into())
}

fn penalty_routes() -> Result<String, String> {
    let mut worst = 0.0f64;
    for k in (1..=2_000u64).chain([10_000, 123_457, 1_000_000]) {
        let via = 12.0 * distortion_random(k) * (2.0 * rate_random(k)).exp2();
        worst = worst.max((via - penalty_entropy_constrained(k)).abs());
    }
    ensure(worst <= 1e-12, || format!("routes differ by {worst:e}"))?;
    Ok(format!("max difference {worst:e}"))
}

fn high_rate_law(constants: &Constants) -> Result<String, String> {
    let limit = asymptotic_penalty_with(constants);
    for k in (HIGH_RATE_FROM..=100_000).chain([1_000_000, 100_000_000]) {
        let gap = (penalty_entropy_constrained(k) - limit).abs();
        ensure(gap <= 0.01, || format!("gap {gap} at K = {k}"))?;
    }
    Ok(format!("K >= {HIGH_RATE_FROM}"))
}

fn constants_check(constants: &Constants) -> Result<String, String> {
    let a = asymptotic_penalty_with(constants);
    ensure((a - 2.576).abs() <= 1e-3, || {
        format!("asymptotic penalty {a}")
    })?;
    let loss = 0.5 * a.log2();
    ensure((loss - 0.683).abs() <= 1e-3, || format!("rate loss {loss}"))?;
    ensure((rate_loss_bound() - 0.683).abs() <= 1e-3, || {
        format!("rate loss {}", rate_loss_bound())
    })?;
    Ok(format!("penalty {a:.6}, rate loss {loss:.6} bits"))
}

fn q_theta_check() -> Result<String, String> {
    let top = q_theta(FRAC_PI_4).map_err(|e| e.to_string())?;
    let k2 = penalty_entropy_constrained(2);
    ensure((top - k2).abs() <= 1e-12, || {
        format!("q(pi/4) = {top}, K = 2 penalty {k2}")
    })?;
    let mut prev = 0.0;
    for i in 1..=100 {
        let q = q_theta(FRAC_PI_4 * i as f64 / 100.0).map_err(|e| e.to_string())?;
        ensure(q >= prev, || format!("q decreases at step {i}"))?;
        prev = q;
    }
    Ok(format!("q(pi/4) = {top}"))
}

fn simpson(f: impl Fn(f64) -> f64, n: usize) -> f64 {
    let h = 1.0 / n as f64;
    let mut s = f(0.0) + f(1.0);
    for i in 1..n {
        s += if i % 2 == 1 { 4.0 } else { 2.0 } * f(i as f64 * h);
    }
    s * h / 3.0
}

fn spacing_law_quadrature() -> Result<String, String> {
    for k in 2..=10u64 {
        let pdf = |l: f64| spacing_pdf(k, l).expect("K >= 2");
        let mass = simpson(pdf, 2000);
        let second = simpson(|l| l * l * pdf(l), 2000);
        let kf = k as f64;
        ensure((mass - 1.0).abs() <= 1e-10, || {
            format!("mass {mass} at K = {k}")
        })?;
        ensure(
            (second - 6.0 / ((kf + 1.0) * (kf + 2.0))).abs() <= 1e-10,
            || format!("second moment {second} at K = {k}"),
        )?;
        let m = spacing_moment(k, 2).map_err(|e| e.to_string())?;
        ensure((m - second).abs() <= 1e-10, || {
            format!("moment formula {m} at K = {k}")
        })?;
    }
    Ok("K = 2..=10".into())
}

fn quantizer_structure(seed: u64) -> Result<String, String> {
    for k in [1usize, 2, 3, 4, 8, 10] {
        let q = ThresholdSet::evenly_spaced(k).map_err(|e| e.to_string())?;
        let kf = k as f64;
        ensure(
            (q.conditional_mse() - 1.0 / (12.0 * kf * kf)).abs() <= 1e-15,
            || format!("even MSE at K = {k}"),
        )?;
    }
    for k in [2usize, 4, 8] {
        let q = ThresholdSet::evenly_spaced(k).map_err(|e| e.to_string())?;
        ensure(
            (q.conditional_entropy() - (k as f64).log2()).abs() <= 1e-12,
            || format!("even entropy at K = {k}"),
        )?;
    }
    for trial in 0..200u64 {
        let mut rng = TrialRng::new(seed, trial);
        let k = 1 + (trial % 17);
        let q = sample_thresholds(k, &mut rng);
        let total: f64 = q.spacings().iter().sum();
        ensure((total - 1.0).abs() <= 1e-12, || {
            format!("spacings sum {total}")
        })?;
        ensure(q.conditional_entropy() <= (k as f64).log2() + 1e-12, || {
            format!("entropy above log2 K at K = {k}")
        })?;
        for i in 0..200 {
            let x = (i as f64 + rng.unit()) / 200.0;
            let c = q.encode(x).map_err(|e| e.to_string())?;
            let cell = q.cell(c).map_err(|e| e.to_string())?;
            let y = q.decode(c).map_err(|e| e.to_string())?;
            ensure(
                cell.contains(x) && (x - y).abs() <= cell.length() / 2.0,
                || format!("round trip at x = {x}"),
            )?;
        }
    }
    Ok("round trip, tiling, entropy bound".into())
}

fn quantizer_plug_in(seed: u64) -> Result<String, String> {
    let mut worst = 0.0f64;
    for set in 0..20u64 {
        let mut rng = TrialRng::new(seed, set);
        let k = 2 + set % 10;
        let q = sample_thresholds(k, &mut rng);
        let errors = run_trials(1_000_000, seed ^ (set + 1).rotate_left(32), |r| {
            let x = r.unit();
            let y = q
                .decode(q.encode(x).expect("unit draw"))
                .expect("valid cell");
            (x - y) * (x - y)
        });
        let s = Summary::of(&errors);
        let z = (s.mean - q.conditional_mse()) / s.std_error;
        worst = worst.max(z.abs());
        ensure(z.abs() <= Z_LIMIT, || format!("set {set}: z = {z:.2}"))?;
    }
    Ok(format!("20 sets, max |z| = {worst:.2}"))
}

fn mc_closed_forms(seed: u64) -> Result<String, String> {
    let mut worst = 0.0f64;
    for k in [2u64, 3, 4, 8, 16] {
        let cfg = TrialConfig::new(k, 100_000, seed).map_err(|e| e.to_string())?;
        for r in [estimate_distortion(&cfg), estimate_rate(&cfg)] {
            let r = r.map_err(|e| e.to_string())?;
            ensure(r.within_sigma(Z_LIMIT), || {
                format!("{} at K = {k}: z = {:?}", r.quantity, r.z_score)
            })?;
            worst = worst.max(r.z_score.unwrap_or(0.0).abs());
        }
    }
    Ok(format!("max |z| = {worst:.2}"))
}

fn mc_spacing(seed: u64) -> Result<String, String> {
    for k in [2u64, 6] {
        let cfg = TrialConfig::new(k, 100_000, seed).map_err(|e| e.to_string())?;
        let chi = spacing_histogram_test(&cfg, 20).map_err(|e| e.to_string())?;
        ensure(chi.passed, || {
            format!(
                "chi-square {} > {} at K = {k}",
                chi.statistic, chi.critical_value
            )
        })?;
        let m = estimate_spacing_moment(&cfg.raw(1).map_err(|e| e.to_string())?, 2)
            .map_err(|e| e.to_string())?;
        ensure(m.within_sigma(Z_LIMIT), || {
            format!("E[L^2] z = {:?} at K = {k}", m.z_score)
        })?;
    }
    let cfg = TrialConfig::new(2, 100_000, seed).map_err(|e| e.to_string())?;
    let wrong = spacing_histogram_test_against(&cfg, 20, 3).map_err(|e| e.to_string())?;
    ensure(!wrong.passed, || {
        "K = 2 sample accepted under the K = 3 law".into()
    })?;
    Ok("K = 2, 6 fit; K = 2 vs K = 3 rejected".into())
}

fn mc_determinism(seed: u64) -> Result<String, String> {
    let run = |threads: usize| {
        let pool = rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .expect("thread pool");
        pool.install(|| {
            let cfg = TrialConfig::new(8, 10_000, seed).expect("valid");
            (
                estimate_distortion(&cfg).expect("valid"),
                estimate_rate(&cfg).expect("valid"),
                average_random_banks(3, 2f64.powi(-6), 500, seed).expect("valid"),
            )
        })
    };
    let a = run(1);
    let b = run(4);
    ensure(a == b, || "reports differ between 1 and 4 threads".into())?;
    Ok("1 vs 4 threads bit-identical".into())
}

fn mc_rao_blackwell(seed: u64) -> Result<String, String> {
    for k in [2u64, 8] {
        let rb = TrialConfig::new(k, 20_000, seed).map_err(|e| e.to_string())?;
        let raw = rb.raw(1).map_err(|e| e.to_string())?;
        let a = estimate_distortion(&rb).map_err(|e| e.to_string())?;
        let b = estimate_distortion(&raw).map_err(|e| e.to_string())?;
        ensure(a.std_error <= b.std_error, || {
            format!("K = {k}: {} > {}", a.std_error, b.std_error)
        })?;
    }
    Ok("K = 2, 8".into())
}

fn mc_two_step(seed: u64) -> Result<String, String> {
    let d0 = 2f64.powi(-7);
    let equal = two_step_oracle(d0, d0, 20_000, seed).map_err(|e| e.to_string())?;
    ensure(equal.agrees(0.01, 0.01), || {
        "equal steps disagree with closed forms".into()
    })?;
    for d1 in [2f64.powi(-6), 0.09] {
        let r = two_step_oracle(d0, d1, 20_000, seed).map_err(|e| e.to_string())?;
        ensure(r.agrees_exact(0.01, 0.01), || {
            format!("delta1 = {d1}: oracle disagrees with offset average")
        })?;
    }
    Ok("equal steps match closed forms; unequal steps match offset averages".into())
}

fn dithered_structure(seed: u64) -> Result<String, String> {
    let bank = DitheredBank::random(2f64.powi(-4), 3, &mut TrialRng::new(seed, 0))
        .map_err(|e| e.to_string())?;
    let b = check_joint_bijection(&bank, 10_000);
    ensure(b.mismatches == 0, || {
        format!("{} bijection mismatches", b.mismatches)
    })?;
    for trial in 1..=50u64 {
        let mut rng = TrialRng::new(seed, trial);
        let k = 1 + (trial % 6) as usize;
        let exp = 4 + (trial % 4) as i32;
        let bank = DitheredBank::random(2f64.powi(-exp), k, &mut rng).map_err(|e| e.to_string())?;
        let merged = bank.merge_partition();
        for i in 0..500 {
            let x = i as f64 / 500.0;
            let cell = merged.cell_of(x).map_err(|e| e.to_string())?;
            let ji = bank.encode_joint(x).map_err(|e| e.to_string())?;
            let jc = bank.joint_cell(&ji).map_err(|e| e.to_string())?;
            ensure(jc == (cell.left, cell.right), || {
                format!("partition mismatch at x = {x}")
            })?;
        }
        let joint = merged.conditional_entropy();
        let sum: f64 = (0..k)
            .map(|c| bank.channel_partition(c).conditional_entropy())
            .sum();
        ensure(joint <= sum + 1e-9, || {
            "joint entropy exceeds the channel sum".into()
        })?;
        let m = bank.exact_metrics();
        let shift = rng.unit();
        let shifted: Vec<f64> = bank.offsets().iter().map(|a| (a + shift).fract()).collect();
        let moved = merged_thresholds(bank.delta(), &shifted);
        let tol = 2.0 * bank.delta();
        ensure(
            (moved.conditional_mse() - m.distortion).abs() <= tol * m.distortion,
            || "shift changes distortion".into(),
        )?;
        ensure(
            (moved.conditional_entropy() - m.rate).abs() <= tol * m.rate,
            || "shift changes rate".into(),
        )?;
        if exp >= 6 {
            let fine = DitheredBank::new(bank.delta() / 2.0, bank.offsets().to_vec())
                .map_err(|e| e.to_string())?;
            let ratio = fine.exact_metrics().distortion / m.distortion;
            ensure((ratio - 0.25).abs() <= 0.0025, || {
                format!("halving step gives ratio {ratio}")
            })?;
        }
    }
    Ok(format!(
        "{} merged cells on the grid, bijective",
        b.merged_cells_seen
    ))
}

fn dithered_averages(seed: u64) -> Result<String, String> {
    let r2 = average_random_banks(2, 2f64.powi(-8), 10_000, seed).map_err(|e| e.to_string())?;
    ensure(r2.distortion_relative_error() <= 0.01, || {
        format!(
            "K = 2 distortion off by {:.4}",
            r2.distortion_relative_error()
        )
    })?;
    ensure(r2.rate_error_bits() <= 0.01, || {
        format!("K = 2 rate off by {:.4} bits", r2.rate_error_bits())
    })?;
    let r16 = average_random_banks(16, 2f64.powi(-8), 10_000, seed).map_err(|e| e.to_string())?;
    ensure(r16.penalty_relative_error() <= 0.02, || {
        format!("K = 16 penalty off by {:.4}", r16.penalty_relative_error())
    })?;
    let even = DitheredBank::evenly_spaced(2f64.powi(-6), 4)
        .map_err(|e| e.to_string())?
        .exact_metrics();
    ensure((even.rate - 8.0).abs() <= 1e-12, || {
        format!("evenly spaced rate {}", even.rate)
    })?;
    Ok(format!(
        "K = 2 penalty {:.5}, K = 16 penalty {:.5}",
        r2.penalty, r16.penalty
    ))
}

type Check<'a> = (&'static str, Box<dyn Fn() -> Result<String, String> + 'a>);

/// Runs every invariant. `constants` lets the suite be exercised against a
/// perturbed constant.
pub fn run_all(seed: u64, constants: &Constants) -> Vec<Outcome> {
    let checks: Vec<Check<'_>> = vec![
        (
            "closed_form.harmonic_bounds",
            Box::new(|| harmonic_bounds(1_000_000, constants)),
        ),
        (
            "closed_form.harmonic_switch",
            Box::new(|| harmonic_switch(constants)),
        ),
        ("closed_form.consistency_chain", Box::new(consistency_chain)),
        (
            "closed_form.penalty_monotone",
            Box::new(|| penalty_monotone(constants)),
        ),
        ("closed_form.penalty_routes", Box::new(penalty_routes)),
        (
            "closed_form.high_rate_law",
            Box::new(|| high_rate_law(constants)),
        ),
        (
            "closed_form.constants",
            Box::new(|| constants_check(constants)),
        ),
        ("closed_form.q_theta", Box::new(q_theta_check)),
        (
            "closed_form.spacing_quadrature",
            Box::new(spacing_law_quadrature),
        ),
        (
            "quantizer.structure",
            Box::new(|| quantizer_structure(seed)),
        ),
        (
            "quantizer.plug_in_agreement",
            Box::new(|| quantizer_plug_in(seed)),
        ),
        ("montecarlo.closed_forms", Box::new(|| mc_closed_forms(seed))),
        ("montecarlo.spacing_law", Box::new(|| mc_spacing(seed))),
        ("montecarlo.determinism", Box::new(|| mc_determinism(seed))),
        (
            "montecarlo.rao_blackwell",
            Box::new(|| mc_rao_blackwell(seed)),
        ),
        ("montecarlo.two_step", Box::new(|| mc_two_step(seed))),
        ("dithered.structure", Box::new(|| dithered_structure(seed))),
        ("dithered.averages", Box::new(|| dithered_averages(seed))),
    ];
    checks.into_iter().map(|(id, f)| outcome(id, f())).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn harmonic_bounds_hold_and_catch_a_wrong_gamma() {
        assert!(harmonic_bounds(1_000_000, &Constants::default()).is_ok());
        let wrong = Constants { euler_gamma: 0.6 };
        let err = harmonic_bounds(1_000_000, &wrong).unwrap_err();
        assert!(err.contains("gamma = 0.6"), "{err}");
    }

    #[test]
    fn high_rate_law_fails_below_threshold() {
        let gap =
            (penalty_entropy_constrained(200) - crate::closed_form::asymptotic_penalty()).abs();
        assert!(gap > 0.01);
        assert!(high_rate_law(&Constants::default()).is_ok());
    }

    #[test]
    fn deterministic_checks_pass() {
        let c = Constants::default();
        for r in [
            harmonic_switch(&c),
            consistency_chain(),
            penalty_routes(),
            constants_check(&c),
            q_theta_check(),
            spacing_law_quadrature(),
            quantizer_structure(1),
        ] {
            assert!(r.is_ok(), "{r:?}");
        }
    }
}
