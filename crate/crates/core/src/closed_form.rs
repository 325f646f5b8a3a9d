//! Closed-form distortion, rate and penalty expressions for randomly
//! designed scalar quantizers.
//!
//! All penalties are normalized against `(1/12) 2^{-2R}`, the distortion of
//! an ideal uniform quantizer operating at the same entropy `R`.

use std::f64::consts::{FRAC_PI_4, LN_2};

use serde::Serialize;

use crate::error::{invalid, Error, Result};

/// Euler–Mascheroni constant.
pub const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Below this index harmonic numbers are summed term by term; at and above it
/// the asymptotic expansion is used.
pub const HARMONIC_SWITCH: u64 = 10_000;

/// Numerical constants the closed forms depend on. Kept as a value so that
/// invariant checks can be run against a perturbed constant.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Constants {
    pub euler_gamma: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self {
            euler_gamma: EULER_GAMMA,
        }
    }
}

/// Harmonic number `H_n = sum_{k=1}^n 1/k`, with `H_0 = 0`.
pub fn harmonic(n: u64) -> f64 {
    harmonic_with(n, &Constants::default())
}

pub fn harmonic_with(n: u64, constants: &Constants) -> f64 {
    if n < HARMONIC_SWITCH {
        harmonic_sum(n)
    } else {
        harmonic_asymptotic(n, constants)
    }
}

/// Direct partial sum, smallest term first.
pub fn harmonic_sum(n: u64) -> f64 {
    (1..=n).rev().map(|k| 1.0 / k as f64).sum()
}

/// `gamma + ln n + 1/(2n) - 1/(12 n^2) + 1/(120 n^4)`.
pub fn harmonic_asymptotic(n: u64, constants: &Constants) -> f64 {
    let x = n as f64;
    let inv2 = 1.0 / (x * x);
    constants.euler_gamma + x.ln() + 0.5 / x - inv2 / 12.0 + inv2 * inv2 / 120.0
}

/// `r_n = H_n - gamma - ln(n + 1/2)` for `n = 1..=n_max`, evaluated without
/// forming `H_n` or `gamma` so that the result keeps full relative precision
/// even where `r_n` is far below the resolution of `H_n`.
///
/// The top value comes from the expansion of `psi(y + 1/2) - ln y` with
/// `y = n + 1/2`; lower values follow from the exact backward step
/// `r_{m-1} = r_m + 2 (atanh(x) - x)`, `x = 1/(2m)`, whose increments are
/// positive series.
pub fn harmonic_residuals(n_max: u64) -> Vec<f64> {
    if n_max == 0 {
        return Vec::new();
    }
    let top = n_max.max(1_000);
    let y = top as f64 + 0.5;
    let y2 = 1.0 / (y * y);
    let mut r =
        y2 * (1.0 / 24.0 - y2 * (7.0 / 960.0 - y2 * (31.0 / 8064.0 - y2 * (127.0 / 30720.0))));
    let mut out = vec![0.0; n_max as usize];
    let mut m = top;
    loop {
        if m <= n_max {
            out[(m - 1) as usize] = r;
        }
        if m == 1 {
            break;
        }
        r += atanh_minus_identity(0.5 / m as f64) * 2.0;
        m -= 1;
    }
    out
}

// atanh(x) - x = x^3/3 + x^5/5 + ... for 0 < x <= 1/2.
fn atanh_minus_identity(x: f64) -> f64 {
    let x2 = x * x;
    let mut power = x * x2;
    let mut sum = 0.0;
    let mut j = 3.0;
    loop {
        let term = power / j;
        sum += term;
        if term <= sum * 1e-18 {
            return sum;
        }
        power *= x2;
        j += 2.0;
    }
}

/// Lower and upper bounds `1/(24(n+1)^2)` and `1/(24 n^2)` on
/// `H_n - gamma - ln(n + 1/2)`.
pub fn harmonic_residual_bounds(n: u64) -> (f64, f64) {
    let x = n as f64;
    (1.0 / (24.0 * (x + 1.0) * (x + 1.0)), 1.0 / (24.0 * x * x))
}

/// Distortion/rate law of a `K`-cell quantizer whose `K - 1` thresholds are
/// drawn independently and uniformly on `[0, 1)`, for a uniform source.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct RandomQuantizerLaw {
    cells: u64,
}

impl RandomQuantizerLaw {
    pub fn new(cells: u64) -> Result<Self> {
        if cells == 0 {
            return Err(invalid("K", "must be at least 1"));
        }
        Ok(Self { cells })
    }

    pub fn cells(&self) -> u64 {
        self.cells
    }

    pub fn distortion(&self) -> f64 {
        distortion_random(self.cells)
    }

    pub fn rate(&self) -> f64 {
        rate_random(self.cells)
    }

    pub fn penalty_fixed_rate(&self) -> f64 {
        penalty_fixed_rate(self.cells)
    }

    pub fn penalty_entropy_constrained(&self) -> f64 {
        penalty_entropy_constrained(self.cells)
    }
}

fn assert_cells(k: u64) {
    assert!(k >= 1, "number of cells must be at least 1");
}

/// Mean-squared error averaged over source and thresholds: `1 / (2(K+1)(K+2))`.
pub fn distortion_random(k: u64) -> f64 {
    assert_cells(k);
    let k = k as f64;
    1.0 / (2.0 * (k + 1.0) * (k + 2.0))
}

/// Expected index entropy in bits: `(H_K - 1) / ln 2`.
pub fn rate_random(k: u64) -> f64 {
    assert_cells(k);
    if k == 1 {
        return 0.0;
    }
    (harmonic(k) - 1.0) / LN_2
}

/// Distortion relative to the optimal `K`-level quantizer, `6K^2 / ((K+1)(K+2))`.
pub fn penalty_fixed_rate(k: u64) -> f64 {
    assert_cells(k);
    let k = k as f64;
    6.0 * k * k / ((k + 1.0) * (k + 2.0))
}

/// `12 D 2^{2R} = 6 exp(2(H_K - 1)) / ((K+1)(K+2))`.
pub fn penalty_entropy_constrained(k: u64) -> f64 {
    assert_cells(k);
    if k == 1 {
        return 1.0;
    }
    let kf = k as f64;
    6.0 * (2.0 * (harmonic(k) - 1.0)).exp() / ((kf + 1.0) * (kf + 2.0))
}

/// Limit of [`penalty_entropy_constrained`] as `K` grows: `6 e^{-2(1-gamma)}`.
pub fn asymptotic_penalty() -> f64 {
    asymptotic_penalty_with(&Constants::default())
}

pub fn asymptotic_penalty_with(constants: &Constants) -> f64 {
    6.0 * (-2.0 * (1.0 - constants.euler_gamma)).exp()
}

/// Coefficient `c` in the high-rate law `D ~ c 2^{-2R}`, `c = e^{-2(1-gamma)} / 2`.
pub fn high_rate_coefficient() -> f64 {
    asymptotic_penalty() / 12.0
}

/// Rate loss in bits per sample implied by the asymptotic penalty,
/// `log2(6 e^{-2(1-gamma)}) / 2`.
pub fn rate_loss_bound() -> f64 {
    0.5 * asymptotic_penalty().log2()
}

fn check_spacing_args(k: u64, len: f64) -> Result<()> {
    if k == 0 {
        return Err(invalid("K", "must be at least 1"));
    }
    if k == 1 {
        return Err(Error::DegenerateSpacing);
    }
    if !(0.0..=1.0).contains(&len) {
        return Err(invalid("length", format!("{len} outside [0, 1]")));
    }
    Ok(())
}

/// Density of the minimum of `K - 1` uniforms, `(K-1)(1-a)^{K-2}`, which is
/// also the law of every spacing.
pub fn spacing_marginal_pdf(k: u64, a: f64) -> Result<f64> {
    check_spacing_args(k, a)?;
    Ok((k - 1) as f64 * (1.0 - a).powi((k - 2) as i32))
}

/// Density of the length of the cell containing a uniform source sample,
/// `K(K-1) l (1-l)^{K-2}`.
pub fn spacing_pdf(k: u64, len: f64) -> Result<f64> {
    check_spacing_args(k, len)?;
    let kf = k as f64;
    Ok(kf * (kf - 1.0) * len * (1.0 - len).powi((k - 2) as i32))
}

/// Distribution function of [`spacing_pdf`]: `1 - (1-l)^{K-1} (1 + (K-1) l)`.
pub fn spacing_cdf(k: u64, len: f64) -> Result<f64> {
    check_spacing_args(k, len)?;
    let m = (k - 1) as f64;
    Ok(1.0 - (1.0 - len).powi((k - 1) as i32) * (1.0 + m * len))
}

/// `E[L^p] = (p+1)! / ((K+1)(K+2)...(K+p))` for the length-biased cell length.
pub fn spacing_moment(k: u64, p: u32) -> Result<f64> {
    check_spacing_args(k, 0.0)?;
    let kf = k as f64;
    Ok((1..=p).fold(1.0, |acc, j| acc * (j as f64 + 1.0) / (kf + j as f64)))
}

/// Distortion of `K` parallel subtractively dithered uniform quantizers of
/// step `delta` with random offsets, `delta^2 / (2(K+1)(K+2))`.
pub fn dithered_distortion(delta: f64, k: u64) -> f64 {
    delta * delta * distortion_random(k)
}

/// Joint index entropy of the same bank for a source with differential
/// entropy `h_source` bits: `h + log2(1/delta) + (H_K - 1)/ln 2`.
pub fn dithered_rate(delta: f64, k: u64, h_source: f64) -> f64 {
    h_source - delta.log2() + rate_random(k)
}

/// Two uniform quantizers with steps `delta0 <= delta1`; the coarser one
/// carries a uniformly random offset on `[0, delta1)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TwoStepConfig {
    pub delta0: f64,
    pub delta1: f64,
    /// Rotation angle when the steps come from a two-component frame.
    pub theta: Option<f64>,
}

impl TwoStepConfig {
    pub fn new(delta0: f64, delta1: f64) -> Result<Self> {
        if !(delta0.is_finite() && delta0 > 0.0) {
            return Err(invalid("delta0", format!("{delta0} must be positive")));
        }
        if delta1.is_nan() || delta1 < delta0 {
            return Err(invalid(
                "delta1",
                format!("{delta1} must be at least delta0 = {delta0}"),
            ));
        }
        Ok(Self {
            delta0,
            delta1,
            theta: None,
        })
    }

    /// Steps `delta/|cos theta|` and `delta/|sin theta|` seen by the source when
    /// `(X cos theta, X sin theta)` is quantized with step `delta` per component.
    pub fn from_rotation(delta: f64, theta: f64) -> Result<Self> {
        check_theta(theta)?;
        if !(delta.is_finite() && delta > 0.0) {
            return Err(invalid("delta", format!("{delta} must be positive")));
        }
        let delta0 = delta / theta.cos().abs();
        // cos and sin of pi/4 differ in the last bit
        let delta1 = (delta / theta.sin().abs()).max(delta0);
        Ok(Self {
            delta0,
            delta1,
            theta: Some(theta),
        })
    }

    pub fn ratio(&self) -> f64 {
        self.delta0 / self.delta1
    }
}

/// `(delta0^2 / 12) (delta1 - 3 delta0 / 4) / (delta1 - delta0 / 2)`.
pub fn two_step_distortion(c: &TwoStepConfig) -> f64 {
    let r = c.ratio();
    c.delta0 * c.delta0 / 12.0 * (1.0 - 0.75 * r) / (1.0 - 0.5 * r)
}

/// `log2(1/delta0) + delta0 / (2 ln 2 (2 delta1 - delta0))`.
pub fn two_step_rate(c: &TwoStepConfig) -> f64 {
    let r = c.ratio();
    -c.delta0.log2() + r / (2.0 - r) / (2.0 * LN_2)
}

/// Expected distortion of the merged two-lattice partition, averaged over the
/// offset: `(delta0^2 / 12) (1 - delta0 / (2 delta1))`.
///
/// Each fine cell receives a coarse threshold with probability
/// `delta0 / delta1`, at a uniform position. This agrees with
/// [`two_step_distortion`] only when `delta0 == delta1` or `delta1 -> inf`.
pub fn two_step_distortion_exact(c: &TwoStepConfig) -> f64 {
    c.delta0 * c.delta0 / 12.0 * (1.0 - 0.5 * c.ratio())
}

/// Expected joint entropy of the merged partition:
/// `log2(1/delta0) + delta0 / (2 ln 2 delta1)`.
pub fn two_step_rate_exact(c: &TwoStepConfig) -> f64 {
    -c.delta0.log2() + c.ratio() / (2.0 * LN_2)
}

fn check_theta(theta: f64) -> Result<()> {
    if theta > 0.0 && theta <= FRAC_PI_4 {
        Ok(())
    } else {
        Err(invalid("theta", format!("{theta} outside (0, pi/4]")))
    }
}

/// Distortion-rate point of the rotated two-component frame.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FramePoint {
    pub theta: f64,
    pub distortion: f64,
    pub rate: f64,
    pub penalty: f64,
}

/// `D_theta = (delta^2 sec^2 theta / 12) (1 - 3/4 tan theta) / (1 - 1/2 tan theta)`.
pub fn frame_distortion(delta: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let t = theta.tan();
    let sec = 1.0 / theta.cos();
    Ok(delta * delta * sec * sec / 12.0 * (1.0 - 0.75 * t) / (1.0 - 0.5 * t))
}

/// `R_theta = log2(1/delta) + log2 cos theta + tan theta / (2 ln 2 (2 - tan theta))`.
pub fn frame_rate(delta: f64, theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let t = theta.tan();
    Ok(-delta.log2() + theta.cos().log2() + t / (2.0 - t) / (2.0 * LN_2))
}

/// Multiplicative distortion penalty of the rotated frame against a single
/// uniform quantizer at the same rate:
/// `((1 - 3/4 tan theta) / (1 - 1/2 tan theta)) exp(tan theta / (2 - tan theta))`.
pub fn q_theta(theta: f64) -> Result<f64> {
    check_theta(theta)?;
    let t = theta.tan();
    Ok((1.0 - 0.75 * t) / (1.0 - 0.5 * t) * (t / (2.0 - t)).exp())
}

pub fn frame_point(delta: f64, theta: f64) -> Result<FramePoint> {
    Ok(FramePoint {
        theta,
        distortion: frame_distortion(delta, theta)?,
        rate: frame_rate(delta, theta)?,
        penalty: q_theta(theta)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};
    use std::f64::consts::E;

    // Composite Simpson rule, test-only oracle for the spacing density.
    fn simpson(f: impl Fn(f64) -> f64, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    #[test]
    fn harmonic_examples() {
        assert_eq!(harmonic(0), 0.0);
        assert_eq!(harmonic(1), 1.0);
        assert_abs_diff_eq!(harmonic(4), 25.0 / 12.0, epsilon = 1e-15);
        assert_abs_diff_eq!(harmonic(8), 2.717_857_142_857_143, epsilon = 1e-15);
        let n = 1000.0f64;
        let base = EULER_GAMMA + (n + 0.5).ln();
        let h = harmonic(1000);
        assert!(h >= base + 1.0 / (24.0 * 1001.0 * 1001.0) - 1e-14);
        assert!(h <= base + 1.0 / (24.0 * 1000.0 * 1000.0) + 1e-14);
        assert_abs_diff_eq!(h, 7.485_470_860_550_345, epsilon = 1e-13);
    }

    #[test]
    fn harmonic_branches_agree_at_switch() {
        let c = Constants::default();
        for n in [HARMONIC_SWITCH - 1, HARMONIC_SWITCH, HARMONIC_SWITCH + 1] {
            assert_abs_diff_eq!(harmonic_sum(n), harmonic_asymptotic(n, &c), epsilon = 1e-12);
        }
        assert_abs_diff_eq!(harmonic(10_000), 9.787_606_036_044_382, epsilon = 1e-13);
        assert_abs_diff_eq!(
            harmonic(100_000_000),
            18.997_896_413_853_898,
            epsilon = 1e-12
        );
    }

    #[test]
    fn harmonic_residuals_match_high_precision_values() {
        let r = harmonic_residuals(1_000_000);
        assert_relative_eq!(r[0], 0.017_319_226_990_302_757, max_relative = 1e-14);
        assert_relative_eq!(r[1], 0.006_493_603_224_312_074, max_relative = 1e-14);
        assert_relative_eq!(r[9], 3.773_319_032_434_205_6e-4, max_relative = 1e-13);
        assert_relative_eq!(r[999], 4.162_502_395_208_197e-8, max_relative = 1e-12);
        assert_relative_eq!(r[999_999], 4.166_662_500_002_396e-14, max_relative = 1e-12);
        assert!(harmonic_residuals(0).is_empty());
        assert_relative_eq!(harmonic_residuals(3)[0], r[0], max_relative = 1e-14);
    }

    #[test]
    fn residuals_agree_with_direct_evaluation_for_small_n() {
        let r = harmonic_residuals(200);
        for n in 1..=200u64 {
            let direct = harmonic(n) - EULER_GAMMA - (n as f64 + 0.5).ln();
            assert_abs_diff_eq!(direct, r[(n - 1) as usize], epsilon = 1e-14);
        }
    }

    #[test]
    fn distortion_examples() {
        assert_abs_diff_eq!(distortion_random(1), 1.0 / 12.0, epsilon = 1e-17);
        assert_abs_diff_eq!(distortion_random(2), 1.0 / 24.0, epsilon = 1e-17);
        assert_abs_diff_eq!(distortion_random(4), 1.0 / 60.0, epsilon = 1e-17);
    }

    #[test]
    fn rate_examples() {
        assert_eq!(rate_random(1), 0.0);
        assert_abs_diff_eq!(rate_random(2), 0.721_347_520_444_481_7, epsilon = 1e-15);
        assert_abs_diff_eq!(rate_random(3), (5.0 / 6.0) / LN_2, epsilon = 1e-15);
        assert_abs_diff_eq!(rate_random(3), 1.202_245_867_407_469_5, epsilon = 1e-12);
    }

    #[test]
    fn penalty_examples() {
        assert_eq!(penalty_fixed_rate(1), 1.0);
        assert_abs_diff_eq!(penalty_fixed_rate(2), 2.0, epsilon = 1e-15);
        // 6 - 18/K + O(K^-2)
        assert_abs_diff_eq!(penalty_fixed_rate(1_000_000), 6.0, epsilon = 2e-5);
        assert!(penalty_fixed_rate(1_000_000) >= 5.999);
        assert_eq!(penalty_entropy_constrained(1), 1.0);
        assert_abs_diff_eq!(penalty_entropy_constrained(2), E / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            penalty_entropy_constrained(1000),
            2.570_738_288_310_645_6,
            epsilon = 1e-10
        );
        assert_abs_diff_eq!(
            penalty_entropy_constrained(16),
            2.292_475_765_159_619,
            epsilon = 1e-12
        );
    }

    #[test]
    fn asymptotic_constants() {
        assert_abs_diff_eq!(asymptotic_penalty(), 2.576, epsilon = 1e-3);
        assert_abs_diff_eq!(
            asymptotic_penalty(),
            2.575_878_907_118_761_6,
            epsilon = 1e-14
        );
        assert_abs_diff_eq!(
            high_rate_coefficient(),
            0.214_656_575_593_230_13,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(rate_loss_bound(), 0.683, epsilon = 1e-3);
        assert_abs_diff_eq!(
            rate_loss_bound(),
            0.5 * 6f64.log2() - (1.0 - EULER_GAMMA) / LN_2,
            epsilon = 1e-15
        );
        assert!(rate_loss_bound() > 0.0);
        let gap = asymptotic_penalty() - penalty_entropy_constrained(100_000);
        assert!(gap > 0.0 && gap < 1e-4);
    }

    #[test]
    fn penalty_definitions_agree() {
        for k in [1u64, 2, 3, 7, 64, 1000, 123_456] {
            let via_rate = 12.0 * distortion_random(k) * 2f64.powf(2.0 * rate_random(k));
            assert_abs_diff_eq!(via_rate, penalty_entropy_constrained(k), epsilon = 1e-12);
        }
    }

    #[test]
    fn penalties_are_monotone_and_bounded() {
        let a = asymptotic_penalty();
        let mut prev_fixed = 0.0;
        let mut prev_entropy = 0.0;
        for k in 1..=100_000u64 {
            let f = penalty_fixed_rate(k);
            let e = penalty_entropy_constrained(k);
            assert!(f > prev_fixed && f <= 6.0, "fixed-rate penalty at K = {k}");
            assert!(
                e > prev_entropy && e < a,
                "entropy-constrained penalty at K = {k}"
            );
            prev_fixed = f;
            prev_entropy = e;
        }
    }

    #[test]
    fn spacing_density_examples() {
        assert_abs_diff_eq!(spacing_pdf(2, 0.5).unwrap(), 1.0, epsilon = 1e-15);
        assert_eq!(spacing_pdf(1, 0.5), Err(Error::DegenerateSpacing));
        assert_eq!(spacing_cdf(1, 0.5), Err(Error::DegenerateSpacing));
        assert!(spacing_pdf(3, 1.5).is_err());
        assert_abs_diff_eq!(spacing_marginal_pdf(3, 0.25).unwrap(), 1.5, epsilon = 1e-15);
    }

    #[test]
    fn spacing_density_integrals_by_quadrature() {
        for k in 2..=10u64 {
            let pdf = |l: f64| spacing_pdf(k, l).unwrap();
            let mass = simpson(pdf, 0.0, 1.0, 2000);
            assert_abs_diff_eq!(mass, 1.0, epsilon = 1e-10);
            let second = simpson(|l| l * l * pdf(l), 0.0, 1.0, 2000);
            let kf = k as f64;
            assert_abs_diff_eq!(second, 6.0 / ((kf + 1.0) * (kf + 2.0)), epsilon = 1e-10);
            for p in 1..=4u32 {
                let m = simpson(|l| l.powi(p as i32) * pdf(l), 0.0, 1.0, 2000);
                assert_abs_diff_eq!(spacing_moment(k, p).unwrap(), m, epsilon = 1e-10);
            }
            for x in [0.05, 0.3, 0.77] {
                let c = simpson(pdf, 0.0, x, 2000);
                assert_abs_diff_eq!(spacing_cdf(k, x).unwrap(), c, epsilon = 1e-10);
            }
            let marginal = simpson(|a| spacing_marginal_pdf(k, a).unwrap(), 0.0, 1.0, 2000);
            assert_abs_diff_eq!(marginal, 1.0, epsilon = 1e-10);
        }
        assert_abs_diff_eq!(spacing_moment(2, 1).unwrap(), 2.0 / 3.0, epsilon = 1e-15);
    }

    #[test]
    fn dithered_examples() {
        for k in [1u64, 2, 5, 16] {
            assert_eq!(dithered_distortion(1.0, k), distortion_random(k));
            assert_eq!(dithered_rate(1.0, k, 0.0), rate_random(k));
        }
        let d = 2f64.powi(-8);
        assert_abs_diff_eq!(
            dithered_distortion(d, 2),
            2f64.powi(-16) / 24.0,
            epsilon = 1e-20
        );
        assert_relative_eq!(
            dithered_distortion(d, 2),
            6.357_828_776_041_667e-7,
            max_relative = 1e-12
        );
        assert_relative_eq!(
            dithered_distortion(d / 2.0, 3),
            dithered_distortion(d, 3) / 4.0
        );
        assert_eq!(dithered_rate(1.0, 1, 0.0), 0.0);
        assert_abs_diff_eq!(
            dithered_rate(d, 2, 0.0),
            8.0 + 0.721_347_520_444_481_7,
            epsilon = 1e-12
        );
        assert_eq!(dithered_rate(d, 1, 0.0), 8.0);
    }

    #[test]
    fn two_step_examples() {
        let d = 0.01;
        let eq = TwoStepConfig::new(d, d).unwrap();
        assert_relative_eq!(two_step_distortion(&eq), d * d / 24.0, max_relative = 1e-14);
        assert_relative_eq!(
            two_step_distortion(&eq),
            dithered_distortion(d, 2),
            max_relative = 1e-14
        );
        assert_abs_diff_eq!(
            two_step_rate(&eq),
            -d.log2() + 1.0 / (2.0 * LN_2),
            epsilon = 1e-13
        );
        assert_abs_diff_eq!(
            two_step_rate(&eq),
            dithered_rate(d, 2, 0.0),
            epsilon = 1e-13
        );

        let far = TwoStepConfig::new(d, 1e6 * d).unwrap();
        assert_relative_eq!(two_step_distortion(&far), d * d / 12.0, max_relative = 1e-6);
        assert_abs_diff_eq!(two_step_rate(&far), -d.log2(), epsilon = 1e-6);

        let c = TwoStepConfig::new(0.01, 0.02).unwrap();
        assert_relative_eq!(
            two_step_distortion(&c),
            1e-4 / 12.0 * (0.0125 / 0.015),
            max_relative = 1e-12
        );
        assert_relative_eq!(two_step_distortion(&c), 6.944_444e-6, max_relative = 1e-6);
        assert_abs_diff_eq!(
            two_step_rate(&c),
            100f64.log2() + (0.01 / 0.03) / (2.0 * LN_2),
            epsilon = 1e-12
        );
        assert_abs_diff_eq!(two_step_rate(&c), 6.884_305, epsilon = 1e-6);
    }

    #[test]
    fn exact_two_step_forms_meet_closed_forms_at_the_ends() {
        let d = 2f64.powi(-7);
        let eq = TwoStepConfig::new(d, d).unwrap();
        assert_relative_eq!(
            two_step_distortion_exact(&eq),
            two_step_distortion(&eq),
            max_relative = 1e-14
        );
        assert_abs_diff_eq!(
            two_step_rate_exact(&eq),
            two_step_rate(&eq),
            epsilon = 1e-13
        );
        let c = TwoStepConfig::new(d, 2.0 * d).unwrap();
        assert_relative_eq!(
            two_step_distortion_exact(&c),
            d * d / 12.0 * 0.75,
            max_relative = 1e-14
        );
    }

    #[test]
    fn two_step_config_validation() {
        assert!(TwoStepConfig::new(0.0, 1.0).is_err());
        assert!(TwoStepConfig::new(0.2, 0.1).is_err());
        assert!(TwoStepConfig::new(f64::NAN, 0.1).is_err());
        let c = TwoStepConfig::from_rotation(0.01, FRAC_PI_4).unwrap();
        assert!(c.delta0 <= c.delta1);
        assert_relative_eq!(c.delta0, 0.01 * 2f64.sqrt(), max_relative = 1e-15);
        assert!(TwoStepConfig::from_rotation(0.01, 1.0).is_err());
        assert!(TwoStepConfig::from_rotation(0.01, 0.0).is_err());
    }

    #[test]
    fn q_theta_examples() {
        assert_abs_diff_eq!(q_theta(1e-9).unwrap(), 1.0, epsilon = 1e-8);
        assert_abs_diff_eq!(q_theta(FRAC_PI_4).unwrap(), E / 2.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            q_theta(FRAC_PI_4 / 2.0).unwrap(),
            1.128_906_749_398_174_6,
            epsilon = 1e-12
        );
        assert!(q_theta(0.0).is_err());
        assert!(q_theta(FRAC_PI_4 + 1e-9).is_err());
        let mut prev = 0.0;
        for i in 1..=100 {
            let q = q_theta(FRAC_PI_4 * i as f64 / 100.0).unwrap();
            assert!(q >= prev);
            prev = q;
        }
        assert_abs_diff_eq!(
            q_theta(FRAC_PI_4).unwrap(),
            penalty_entropy_constrained(2),
            epsilon = 1e-12
        );
    }

    #[test]
    fn frame_forms_match_two_step_forms() {
        let delta = 0.003;
        for theta in [0.1, 0.4, FRAC_PI_4] {
            let c = TwoStepConfig::from_rotation(delta, theta).unwrap();
            assert_relative_eq!(
                frame_distortion(delta, theta).unwrap(),
                two_step_distortion(&c),
                max_relative = 1e-12
            );
            assert_abs_diff_eq!(
                frame_rate(delta, theta).unwrap(),
                two_step_rate(&c),
                epsilon = 1e-12
            );
            let p = frame_point(delta, theta).unwrap();
            let q = 12.0 * p.distortion * 2f64.powf(2.0 * p.rate);
            assert_relative_eq!(q, p.penalty, max_relative = 1e-10);
        }
    }
}
