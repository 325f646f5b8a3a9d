use std::f64::consts::FRAC_PI_4;

use serde_json::{json, Map, Value};

use randquant::closed_form::{self as cf, Constants, TwoStepConfig};
use randquant::dithered::{self, COARSE_STEP_WARNING};
use randquant::invariants;
use randquant::montecarlo::{self as mc, EstimateReport, TrialConfig};

use crate::args::{FileConfig, McMode, McTarget, Reference};
use crate::output::{Cell, Report, Row};

pub const K_LIMIT: u64 = 100_000_000;
pub const TWO_STEP_REL_TOL: f64 = 0.01;
pub const TWO_STEP_RATE_TOL: f64 = 0.01;
pub const DITHERED_REL_TOL: f64 = 0.01;
pub const DITHERED_RATE_TOL: f64 = 0.01;
pub const DITHERED_PENALTY_TOL: f64 = 0.02;

/// Bad input from the command line or config file; exits with status 2.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

fn usage<T>(msg: impl Into<String>) -> anyhow::Result<T> {
    Err(UsageError(msg.into()).into())
}

/// Resolved parameters, recorded in the manifest under the same keys the
/// config file accepts.
#[derive(Default)]
pub struct Params(Map<String, Value>);

impl Params {
    fn set<T: Into<Value> + Clone>(&mut self, key: &str, v: T) -> T {
        self.0.insert(key.to_owned(), v.clone().into());
        v
    }

    pub fn into_map(self) -> Map<String, Value> {
        self.0
    }
}

fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn table(
    k_min: Option<u64>,
    k_max: Option<u64>,
    cfg: &FileConfig,
    params: &mut Params,
) -> anyhow::Result<Report> {
    let k_min = params.set("k_min", pick(k_min, cfg.k_min, 1));
    let k_max = params.set("k_max", pick(k_max, cfg.k_max, 16.max(k_min)));
    if !(1 <= k_min && k_min <= k_max && k_max <= K_LIMIT) {
        return usage(format!(
            "need 1 <= k-min <= k-max <= {K_LIMIT}, got k-min={k_min} k-max={k_max}"
        ));
    }
    let rows = (k_min..=k_max).map(|k| -> Row {
        vec![
            k.into(),
            cf::distortion_random(k).into(),
            cf::rate_random(k).into(),
            cf::penalty_fixed_rate(k).into(),
            cf::penalty_entropy_constrained(k).into(),
        ]
    });
    Ok(Report::new(
        vec!["K", "D", "R_bits", "penalty_fixed", "penalty_entropy"],
        rows,
    ))
}

pub fn curve(k_max: Option<u64>, cfg: &FileConfig, params: &mut Params) -> anyhow::Result<Report> {
    let k_max = params.set("k_max", pick(k_max, cfg.k_max, 1000));
    if !(1..=K_LIMIT).contains(&k_max) {
        return usage(format!("need 1 <= k-max <= {K_LIMIT}, got {k_max}"));
    }
    let asymptote = cf::asymptotic_penalty();
    let rows = (1..=k_max).map(move |k| -> Row {
        vec![
            k.into(),
            cf::penalty_fixed_rate(k).into(),
            cf::penalty_entropy_constrained(k).into(),
            asymptote.into(),
        ]
    });
    Ok(Report::new(
        vec!["K", "penalty_fixed", "penalty_entropy", "asymptote"],
        rows,
    ))
}

pub struct McArgs {
    pub target: Option<McTarget>,
    pub k: Option<u64>,
    pub trials: Option<u64>,
    pub mode: Option<McMode>,
    pub raw_samples: Option<u64>,
    pub p: Option<u32>,
    pub bins: Option<usize>,
    pub delta0: Option<f64>,
    pub delta1: Option<f64>,
    pub reference: Option<Reference>,
}

const MC_COLUMNS: [&str; 10] = [
    "quantity",
    "reference",
    "K",
    "mean",
    "std_error",
    "target",
    "abs_error",
    "z_score",
    "trials",
    "passed",
];

fn estimate_row(r: &EstimateReport, reference: &str, k: Option<u64>, passed: bool) -> Row {
    vec![
        r.quantity.as_str().into(),
        reference.into(),
        k.map_or(Cell::Empty, Cell::from),
        r.mean.into(),
        r.std_error.into(),
        r.target.into(),
        r.absolute_error().into(),
        r.z_score.into(),
        r.trials.into(),
        passed.into(),
    ]
}

pub fn monte_carlo(
    a: McArgs,
    seed: u64,
    cfg: &FileConfig,
    params: &mut Params,
) -> anyhow::Result<Report> {
    let Some(target) = a.target.or(cfg.target) else {
        return usage("mc needs a target: distortion, rate, spacing or two_step");
    };
    params.set("target", serde_json::to_value(target)?);
    let trials = params.set("trials", pick(a.trials, cfg.trials, 100_000));

    if target == McTarget::TwoStep {
        let delta0 = params.set("delta0", pick(a.delta0, cfg.delta0, 2f64.powi(-7)));
        let delta1 = params.set("delta1", pick(a.delta1, cfg.delta1, 2f64.powi(-6)));
        let reference = pick(a.reference, cfg.reference, Reference::ClosedForm);
        params.set("reference", serde_json::to_value(reference)?);
        return two_step_mc(delta0, delta1, trials, seed, reference);
    }

    let k = params.set("K", pick(a.k, cfg.k, 4));
    let mode = pick(a.mode, cfg.mode, McMode::RaoBlackwell);
    params.set("mode", serde_json::to_value(mode)?);
    let mut tc = TrialConfig::new(k, trials, seed)?;
    if mode == McMode::Raw {
        let n = params.set("raw_samples", pick(a.raw_samples, cfg.raw_samples, 1));
        tc = tc.raw(n)?;
    }

    let mut rows = Vec::new();
    let mut passed = true;
    let mut summary = Map::new();
    let mut push = |r: EstimateReport, rows: &mut Vec<Row>| {
        let ok = r.within_sigma(invariants::Z_LIMIT);
        passed &= ok;
        rows.push(estimate_row(&r, "closed_form", Some(k), ok));
    };
    match target {
        McTarget::Distortion => push(mc::estimate_distortion(&tc)?, &mut rows),
        McTarget::Rate => push(mc::estimate_rate(&tc)?, &mut rows),
        McTarget::Spacing => {
            let p = params.set("p", pick(a.p, cfg.p, 2));
            let bins = params.set("bins", pick(a.bins, cfg.bins, 20));
            push(mc::estimate_spacing_moment(&tc, p)?, &mut rows);
            let chi = mc::spacing_histogram_test(&tc, bins)?;
            passed &= chi.passed;
            rows.push(vec![
                "spacing_chi_square".into(),
                "spacing_density".into(),
                k.into(),
                chi.statistic.into(),
                Cell::Empty,
                chi.critical_value.into(),
                Cell::Empty,
                Cell::Empty,
                trials.into(),
                chi.passed.into(),
            ]);
            summary.insert("chi_square_level".into(), json!(chi.level));
            summary.insert("chi_square_dof".into(), json!(chi.degrees_of_freedom));
            summary.insert("chi_square_bins_used".into(), json!(chi.bins_used));
        }
        McTarget::TwoStep => unreachable!(),
    }
    let mut report = Report::eager(MC_COLUMNS.to_vec(), rows);
    report.passed = passed;
    report.summary = summary;
    Ok(report)
}

fn two_step_mc(
    delta0: f64,
    delta1: f64,
    trials: u64,
    seed: u64,
    reference: Reference,
) -> anyhow::Result<Report> {
    let rep = mc::two_step_oracle(delta0, delta1, trials, seed)?;
    let exact = |r: &EstimateReport, target: f64| {
        EstimateReport::new(
            r.quantity.clone(),
            mc::Summary {
                mean: r.mean,
                std_error: r.std_error,
                count: r.trials,
            },
            seed,
            Some(target),
        )
    };
    let d_exact = exact(&rep.distortion, rep.exact_distortion);
    let r_exact = exact(&rep.rate, rep.exact_rate);

    let d_ok = |r: &EstimateReport| {
        r.relative_error()
            .is_some_and(|e| e.abs() <= TWO_STEP_REL_TOL)
    };
    let r_ok = |r: &EstimateReport| {
        r.absolute_error()
            .is_some_and(|e| e.abs() <= TWO_STEP_RATE_TOL)
    };
    let closed = [d_ok(&rep.distortion), r_ok(&rep.rate)];
    let geometric = [d_ok(&d_exact), r_ok(&r_exact)];
    let rows = vec![
        estimate_row(&rep.distortion, "closed_form", None, closed[0]),
        estimate_row(&rep.rate, "closed_form", None, closed[1]),
        estimate_row(&d_exact, "exact", None, geometric[0]),
        estimate_row(&r_exact, "exact", None, geometric[1]),
    ];
    let mut report = Report::eager(MC_COLUMNS.to_vec(), rows);
    report.passed = match reference {
        Reference::ClosedForm => closed.iter().all(|&b| b),
        Reference::Exact => geometric.iter().all(|&b| b),
    };
    if rep.high_resolution_warning {
        report.notes.push(format!(
            "step above {} leaves the high-resolution regime",
            mc::HIGH_RESOLUTION_STEP
        ));
    }
    Ok(report)
}

pub fn dithered_cmd(
    k: Option<u64>,
    delta: Option<f64>,
    offset_trials: Option<u64>,
    k_max: Option<u64>,
    seed: u64,
    cfg: &FileConfig,
    params: &mut Params,
) -> anyhow::Result<Report> {
    let delta = params.set("delta", pick(delta, cfg.delta, 2f64.powi(-8)));
    let trials = params.set(
        "offset_trials",
        pick(offset_trials, cfg.offset_trials, 10_000),
    );
    let mut notes = Vec::new();
    if delta > COARSE_STEP_WARNING {
        notes.push(format!(
            "delta = {delta} is coarser than {COARSE_STEP_WARNING}; the high-resolution forms may not apply"
        ));
    }

    if let Some(k_max) = k_max.or(cfg.k_max) {
        params.set("k_max", k_max);
        if k_max == 0 {
            return usage("k-max must be at least 1");
        }
        let sweep = dithered::sweep_penalty(k_max, delta, trials, seed)?;
        let rows = sweep
            .into_iter()
            .map(|r| -> Row {
                vec![
                    r.channels.into(),
                    r.penalty.into(),
                    r.predicted.into(),
                    (r.penalty / r.predicted - 1.0).into(),
                ]
            })
            .collect();
        let mut report = Report::eager(vec!["K", "penalty", "predicted", "relative_error"], rows);
        report.notes = notes;
        return Ok(report);
    }

    let k = params.set("K", pick(k, cfg.k, 2));
    let rep = dithered::average_random_banks(k, delta, trials, seed)?;
    let d_err = rep.distortion_relative_error();
    let r_err = rep.rate_error_bits();
    let p_err = rep.penalty_relative_error();
    let checks = [
        d_err.abs() <= DITHERED_REL_TOL,
        r_err.abs() <= DITHERED_RATE_TOL,
        p_err.abs() <= DITHERED_PENALTY_TOL,
    ];
    let row = |q: &str, mean: f64, se: Cell, target: f64, err: f64, tol: f64, ok: bool| -> Row {
        vec![
            q.into(),
            k.into(),
            delta.into(),
            mean.into(),
            se,
            target.into(),
            err.into(),
            tol.into(),
            ok.into(),
        ]
    };
    let rows = vec![
        row(
            "distortion",
            rep.distortion.mean,
            rep.distortion.std_error.into(),
            rep.distortion.target.unwrap_or(f64::NAN),
            d_err,
            DITHERED_REL_TOL,
            checks[0],
        ),
        row(
            "rate_bits",
            rep.rate.mean,
            rep.rate.std_error.into(),
            rep.rate.target.unwrap_or(f64::NAN),
            r_err,
            DITHERED_RATE_TOL,
            checks[1],
        ),
        row(
            "penalty",
            rep.penalty,
            Cell::Empty,
            rep.penalty_predicted,
            p_err,
            DITHERED_PENALTY_TOL,
            checks[2],
        ),
    ];
    let mut report = Report::eager(
        vec![
            "quantity",
            "K",
            "delta",
            "mean",
            "std_error",
            "target",
            "error",
            "tolerance",
            "passed",
        ],
        rows,
    );
    report.passed = checks.iter().all(|&b| b);
    report.notes = notes;
    Ok(report)
}

pub fn two_step(
    delta0: Option<f64>,
    delta1: Option<f64>,
    delta: Option<f64>,
    theta: Option<f64>,
    cfg: &FileConfig,
    params: &mut Params,
) -> anyhow::Result<Report> {
    let theta = theta.or(cfg.theta);
    let config = match theta {
        Some(theta) => {
            if delta0.is_some() || delta1.is_some() {
                return usage("--theta takes --delta, not --delta0/--delta1");
            }
            let delta = params.set("delta", pick(delta, cfg.delta, 2f64.powi(-7)));
            params.set("theta", theta);
            TwoStepConfig::from_rotation(delta, theta)?
        }
        None => {
            let d0 = params.set("delta0", pick(delta0, cfg.delta0, 2f64.powi(-7)));
            let d1 = params.set("delta1", pick(delta1, cfg.delta1, 2f64.powi(-6)));
            TwoStepConfig::new(d0, d1)?
        }
    };
    let row: Row = vec![
        config.delta0.into(),
        config.delta1.into(),
        config.theta.into(),
        cf::two_step_distortion(&config).into(),
        cf::two_step_rate(&config).into(),
        cf::two_step_distortion_exact(&config).into(),
        cf::two_step_rate_exact(&config).into(),
    ];
    Ok(Report::eager(
        vec![
            "delta0",
            "delta1",
            "theta",
            "distortion",
            "rate_bits",
            "distortion_exact",
            "rate_bits_exact",
        ],
        vec![row],
    ))
}

pub fn frame(
    theta_steps: Option<u64>,
    delta: Option<f64>,
    cfg: &FileConfig,
    params: &mut Params,
) -> anyhow::Result<Report> {
    let steps = params.set("theta_steps", pick(theta_steps, cfg.theta_steps, 16));
    let delta = params.set("delta", pick(delta, cfg.delta, 2f64.powi(-7)));
    if steps < 2 {
        return usage(format!("theta-steps must be at least 2, got {steps}"));
    }
    let mut rows = Vec::with_capacity(steps as usize);
    for i in 1..=steps {
        let theta = if i == steps {
            FRAC_PI_4
        } else {
            FRAC_PI_4 * i as f64 / steps as f64
        };
        let p = cf::frame_point(delta, theta)?;
        rows.push(vec![
            p.theta.into(),
            p.distortion.into(),
            p.rate.into(),
            p.penalty.into(),
        ]);
    }
    Ok(Report::eager(vec!["theta", "D", "R_bits", "q"], rows))
}

pub fn check(
    euler_gamma: Option<f64>,
    seed: u64,
    cfg: &FileConfig,
    params: &mut Params,
) -> anyhow::Result<Report> {
    let gamma = params.set(
        "euler_gamma",
        pick(euler_gamma, cfg.euler_gamma, cf::EULER_GAMMA),
    );
    let outcomes = invariants::run_all(seed, &Constants { euler_gamma: gamma });
    let failed: Vec<&str> = outcomes
        .iter()
        .filter(|o| !o.passed)
        .map(|o| o.id)
        .collect();
    let rows = outcomes
        .iter()
        .map(|o| -> Row { vec![o.id.into(), o.passed.into(), o.detail.as_str().into()] })
        .collect();
    let mut report = Report::eager(vec!["invariant", "passed", "detail"], rows);
    report.passed = failed.is_empty();
    report
        .summary
        .insert("passed_count".into(), json!(outcomes.len() - failed.len()));
    report
        .summary
        .insert("failed_count".into(), json!(failed.len()));
    report
        .summary
        .insert("failed".into(), json!(failed.join(" ")));
    Ok(report)
}
