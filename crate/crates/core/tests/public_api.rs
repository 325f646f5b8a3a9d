use std::f64::consts::{E, FRAC_PI_4, LN_2};

use randquant::closed_form::{self as cf, TwoStepConfig};
use randquant::dithered::{self, DitheredBank};
use randquant::montecarlo::{self as mc, TrialConfig, TrialRng};
use randquant::{Error, ThresholdSet};

fn close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol
}

#[test]
fn quantizer_round_trip_through_public_types() {
    let t = ThresholdSet::new(vec![0.7, 0.2]).unwrap();
    assert_eq!(t.interior(), &[0.2, 0.7]);
    assert_eq!(t.encode(0.2).unwrap(), 2);
    assert_eq!(t.decode(3).unwrap(), 0.85);
    assert!(close(t.conditional_mse(), 0.16 / 12.0, 1e-15));
    assert!(close(t.conditional_entropy(), 1.485475297227334, 1e-12));
    assert!(matches!(
        ThresholdSet::new(vec![1.0]),
        Err(Error::OutOfUnitInterval { .. })
    ));
    assert!(matches!(t.decode(4), Err(Error::CellIndex { .. })));
}

#[test]
fn closed_forms_agree_with_each_other() {
    for k in 1..=50u64 {
        let via_parts = 12.0 * cf::distortion_random(k) * 2f64.powf(2.0 * cf::rate_random(k));
        assert!(
            close(via_parts, cf::penalty_entropy_constrained(k), 1e-12),
            "K = {k}"
        );
        assert!(close(
            cf::dithered_distortion(1.0, k),
            cf::distortion_random(k),
            1e-15
        ));
        assert!(close(
            cf::dithered_rate(1.0, k, 0.0),
            cf::rate_random(k),
            1e-15
        ));
    }
    assert!(close(cf::penalty_entropy_constrained(2), E / 2.0, 1e-12));
    assert!(close(
        cf::q_theta(FRAC_PI_4).unwrap(),
        cf::penalty_entropy_constrained(2),
        1e-12
    ));
    assert!(close(
        cf::rate_loss_bound(),
        0.5 * 6f64.log2() - (1.0 - cf::EULER_GAMMA) / LN_2,
        1e-15
    ));
}

#[test]
fn two_step_forms_at_equal_steps() {
    let c = TwoStepConfig::new(2f64.powi(-7), 2f64.powi(-7)).unwrap();
    let d = 2f64.powi(-14);
    assert!(close(cf::two_step_distortion(&c), d / 24.0, 1e-20));
    assert!(close(cf::two_step_distortion_exact(&c), d / 24.0, 1e-20));
    assert!(close(cf::two_step_rate(&c), 7.0 + 0.5 / LN_2, 1e-12));
    assert!(close(cf::two_step_rate_exact(&c), 7.0 + 0.5 / LN_2, 1e-12));
    assert!(TwoStepConfig::new(0.02, 0.01).is_err());
}

#[test]
fn estimators_hit_their_targets() {
    let cfg = TrialConfig::new(8, 50_000, 3).unwrap();
    for r in [
        mc::estimate_distortion(&cfg).unwrap(),
        mc::estimate_rate(&cfg).unwrap(),
    ] {
        assert!(r.within_sigma(4.0), "{r:?}");
    }
    let one = TrialConfig::new(1, 100, 3).unwrap();
    let d = mc::estimate_distortion(&one).unwrap();
    assert_eq!((d.mean, d.std_error), (1.0 / 12.0, 0.0));
}

#[test]
fn results_do_not_depend_on_thread_count() {
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| {
                let cfg = TrialConfig::new(5, 20_000, 99).unwrap();
                let d = mc::estimate_distortion(&cfg).unwrap();
                let r = mc::estimate_rate(&cfg.raw(2).unwrap()).unwrap();
                let b = dithered::average_random_banks(3, 2f64.powi(-6), 500, 99).unwrap();
                let s = mc::two_step_oracle(0.01, 0.03, 2_000, 99).unwrap();
                [
                    d.mean,
                    d.std_error,
                    r.mean,
                    r.std_error,
                    b.distortion.mean,
                    b.rate.mean,
                    s.distortion.mean,
                    s.rate.mean,
                ]
                .map(f64::to_bits)
            })
    };
    let one = run(1);
    assert_eq!(one, run(3));
    assert_eq!(one, run(8));
}

#[test]
fn dithered_bank_partition_matches_joint_indices() {
    let mut rng = TrialRng::new(1, 0);
    let bank = DitheredBank::random(2f64.powi(-5), 4, &mut rng).unwrap();
    let r = dithered::check_joint_bijection(&bank, 20_000);
    assert_eq!(r.mismatches, 0);
    assert_eq!(r.merged_cells_seen, r.joint_indices_seen);
    let x = 0.123_456;
    let ji = bank.encode_joint(x).unwrap();
    let (lo, hi) = bank.joint_cell(&ji).unwrap();
    assert!(lo <= x && x < hi);
    assert!(close(
        bank.reconstruct(&ji).unwrap(),
        0.5 * (lo + hi),
        1e-15
    ));
}
