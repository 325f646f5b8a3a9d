mod args;
mod commands;
mod output;

use std::process::ExitCode;

use clap::Parser;

use args::{Cli, Command, FileConfig, Format};
use commands::{McArgs, Params, UsageError};
use output::Manifest;

const EXIT_FAILED: u8 = 1;
const EXIT_USAGE: u8 = 2;

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e:#}");
            if is_usage(&e) {
                ExitCode::from(EXIT_USAGE)
            } else {
                ExitCode::from(EXIT_FAILED)
            }
        }
    }
}

fn is_usage(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<UsageError>().is_some()
            || c.downcast_ref::<randquant::Error>().is_some()
            || c.downcast_ref::<toml::de::Error>().is_some()
    })
}

fn run(cli: Cli) -> anyhow::Result<bool> {
    let cfg = match &cli.config {
        Some(p) => FileConfig::load(p).map_err(|e| UsageError(format!("{e:#}")))?,
        None => FileConfig::default(),
    };
    let command = cli.command;
    let common = command.common().clone();
    let name = command.name();
    let seed = args::resolve_seed(common.seed, &cfg).map_err(|e| UsageError(format!("{e:#}")))?;
    let format = common.format.or(cfg.format).unwrap_or(Format::Csv);
    let output = common.output.clone().or_else(|| cfg.output.clone());

    let mut params = Params::default();
    let report = match command {
        Command::Table { k_min, k_max, .. } => commands::table(k_min, k_max, &cfg, &mut params)?,
        Command::Curve { k_max, .. } => commands::curve(k_max, &cfg, &mut params)?,
        Command::Mc {
            target,
            k,
            trials,
            mode,
            raw_samples,
            p,
            bins,
            delta0,
            delta1,
            reference,
            ..
        } => commands::monte_carlo(
            McArgs {
                target,
                k,
                trials,
                mode,
                raw_samples,
                p,
                bins,
                delta0,
                delta1,
                reference,
            },
            seed,
            &cfg,
            &mut params,
        )?,
        Command::Dithered {
            k,
            delta,
            offset_trials,
            k_max,
            ..
        } => commands::dithered_cmd(k, delta, offset_trials, k_max, seed, &cfg, &mut params)?,
        Command::TwoStep {
            delta0,
            delta1,
            delta,
            theta,
            ..
        } => commands::two_step(delta0, delta1, delta, theta, &cfg, &mut params)?,
        Command::Frame {
            theta_steps, delta, ..
        } => commands::frame(theta_steps, delta, &cfg, &mut params)?,
        Command::Check { euler_gamma, .. } => {
            commands::check(euler_gamma, seed, &cfg, &mut params)?
        }
    };

    for note in &report.notes {
        eprintln!("warning: {note}");
    }
    let passed = report.passed;
    let failed = report.summary.get("failed").cloned();
    let manifest = Manifest {
        command: name,
        parameters: params.into_map(),
        seed,
        version: env!("CARGO_PKG_VERSION"),
        timestamp: chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true),
    };
    output::emit(report, &manifest, format, output.as_deref())?;
    if !passed {
        match failed.as_ref().and_then(|v| v.as_str()) {
            Some(ids) => eprintln!("{name}: failed invariants: {ids}"),
            None => eprintln!("{name}: statistical check failed"),
        }
    }
    Ok(passed)
}
