//! Command-line surface.
//!
//! Exit codes: 0 on success, 2 for configuration or usage errors, 3 for
//! numerical failures.

use std::ffi::OsString;
use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand};

use crate::coupling::{couple, write_diagnostics_csv};
use crate::error::{Error, Result};
use crate::harness::{
    derivative_validation_runs, manifest_path, replication_starts, run_assumption_check, run_experiment,
    run_perturbation_experiment, write_rows_csv, ExperimentConfig, ExperimentKind, ExperimentOutput, RunManifest,
    StartPolicy,
};
use crate::seeds::{purpose_seed, sub_seed, Purpose};
use crate::skorokhod::{simulate, BrownianDriver};

pub const EXIT_OK: i32 = 0;
pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "rbm", version, about = "Reflected Brownian motion experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output file; defaults to the config `output`, else stdout.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for replications.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Check the convergence assumptions for the configured model.
    Check(Common),
    /// Simulate one path and write `step,t,i,X,L` rows.
    Simulate {
        #[command(flatten)]
        common: Common,
        /// Defaults to the last grid time.
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Couple the start with the comparison start (default 0) and write diagnostics.
    Couple {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        horizon: Option<f64>,
    },
    /// Derivative with respect to one start coordinate, by recursion and finite differences.
    Derivative {
        #[command(flatten)]
        common: Common,
        #[arg(long)]
        i0: Option<usize>,
        #[arg(long)]
        eps: Option<f64>,
        #[arg(long = "n-walk")]
        n_walk: Option<usize>,
    },
    /// Run the perturbation experiment.
    Perturb(Common),
    /// Run whatever experiment the config declares.
    Experiment(Common),
}

/// Parses `argv` (including the program name), runs the command and returns the exit code.
pub fn cli_main<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_CONFIG } else { EXIT_OK };
        }
    };
    match run(cli.command) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_numerical() {
        EXIT_NUMERICAL
    } else {
        EXIT_CONFIG
    }
}

fn load(common: &Common) -> Result<(ExperimentConfig, Option<PathBuf>)> {
    let mut cfg = ExperimentConfig::from_path(&common.config)?;
    if let Some(s) = common.seed {
        cfg.seed = s;
    }
    if let Some(w) = common.workers {
        if w == 0 {
            return Err(Error::config("--workers", "at least one worker is required"));
        }
        cfg.workers = Some(w);
    }
    let out = common.out.clone().or_else(|| cfg.output.clone());
    Ok((cfg, out))
}

fn sink(out: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match out {
        Some(p) => {
            if let Some(dir) = p.parent().filter(|d| !d.as_os_str().is_empty()) {
                std::fs::create_dir_all(dir)?;
            }
            Box::new(BufWriter::new(File::create(p)?))
        }
        None => Box::new(BufWriter::new(io::stdout().lock())),
    })
}

fn write_json<T: serde::Serialize>(value: &T, out: Option<&Path>) -> Result<()> {
    let mut w = sink(out)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

/// Writes the manifest next to a file output. Stdout runs get no manifest.
fn write_manifest(
    command: &str,
    cfg: &ExperimentConfig,
    result: &ExperimentOutput,
    out: Option<&Path>,
    started: Instant,
) -> Result<()> {
    for w in &result.warnings {
        eprintln!("warning: {w}");
    }
    let Some(out) = out else {
        return Ok(());
    };
    let mut m = RunManifest::new(command, cfg, result, started.elapsed().as_secs_f64());
    m.outputs.push(out.display().to_string());
    let file = File::create(manifest_path(out))?;
    serde_json::to_writer_pretty(BufWriter::new(file), &m)?;
    Ok(())
}

fn emit(command: &str, cfg: &ExperimentConfig, result: &ExperimentOutput, out: Option<&Path>, t0: Instant) -> Result<()> {
    match &result.report {
        Some(report) if result.rows.is_empty() || cfg.experiment == ExperimentKind::DerivativeValidation => {
            write_json(report, out)?
        }
        _ => {
            let mut w = sink(out)?;
            write_rows_csv(&result.rows, &mut w)?;
            w.flush()?;
        }
    }
    write_manifest(command, cfg, result, out, t0)
}

fn run(command: Command) -> Result<()> {
    let t0 = Instant::now();
    match command {
        Command::Check(common) => {
            let (cfg, out) = load(&common)?;
            let report = run_assumption_check(&cfg)?;
            write_json(&report, out.as_deref())?;
            let result = ExperimentOutput {
                report: Some(serde_json::to_value(&report)?),
                ..Default::default()
            };
            write_manifest("check", &cfg, &result, out.as_deref(), t0)
        }
        Command::Simulate { common, horizon } => {
            let (cfg, out) = load(&common)?;
            let spec = cfg.model.build()?;
            let horizon = positive_horizon(horizon.unwrap_or(cfg.horizon()))?;
            let start = cfg
                .start
                .clone()
                .ok_or_else(|| Error::config("start", "simulate needs a start policy"))?;
            let x = replication_starts(&spec, &cfg, &[start], 0)?.remove(0);
            let seed = purpose_seed(sub_seed(cfg.seed, 0), Purpose::Driver);
            let path = simulate(&spec, &x, horizon, &mut BrownianDriver::new(seed, spec.noise_dim(), cfg.h))?;
            let mut w = sink(out.as_deref())?;
            path.write_csv(&mut w)?;
            w.flush()?;
            write_manifest("simulate", &cfg, &ExperimentOutput::default(), out.as_deref(), t0)
        }
        Command::Couple { common, horizon } => {
            let (cfg, out) = load(&common)?;
            let spec = cfg.model.build()?;
            let horizon = positive_horizon(horizon.unwrap_or(cfg.horizon()))?;
            let start = cfg
                .start
                .clone()
                .ok_or_else(|| Error::config("start", "couple needs a start policy"))?;
            let comparison = cfg.comparison.clone().unwrap_or(StartPolicy::Zero);
            let xs = replication_starts(&spec, &cfg, &[start, comparison], 0)?;
            let seed = purpose_seed(sub_seed(cfg.seed, 0), Purpose::Driver);
            let c = couple(&spec, &xs[0], &xs[1], horizon, cfg.h, seed)?;
            let beta = cfg.resolved_beta(&spec)?;
            let mut w = sink(out.as_deref())?;
            write_diagnostics_csv(&c, beta, cfg.d_prime.unwrap_or(spec.d()), &mut w)?;
            w.flush()?;
            write_manifest("couple", &cfg, &ExperimentOutput::default(), out.as_deref(), t0)
        }
        Command::Derivative {
            common,
            i0,
            eps,
            n_walk,
        } => {
            let (mut cfg, out) = load(&common)?;
            let mut ds = cfg.derivative_settings();
            ds.i0 = i0.unwrap_or(ds.i0);
            ds.eps = eps.unwrap_or(ds.eps);
            ds.n_walk = n_walk.unwrap_or(ds.n_walk);
            cfg.derivative = Some(ds);
            cfg.experiment = ExperimentKind::DerivativeValidation;
            cfg.validate()?;
            let (result, runs) = derivative_validation_runs(&cfg)?;
            let first = &runs[0];
            let doc = serde_json::json!({
                "S": first.s,
                "w0": first.w0,
                "wdp1": first.wdp1,
                "finite_diff": first.finite_diff,
                "exclusionRate": result.report.as_ref().and_then(|r| r.get("exclusion_rate")).cloned(),
                "summary": result.report,
            });
            write_json(&doc, out.as_deref())?;
            write_manifest("derivative", &cfg, &result, out.as_deref(), t0)
        }
        Command::Perturb(common) => {
            let (cfg, out) = load(&common)?;
            let result = run_perturbation_experiment(&cfg)?;
            emit("perturb", &cfg, &result, out.as_deref(), t0)
        }
        Command::Experiment(common) => {
            let (cfg, out) = load(&common)?;
            let result = run_experiment(&cfg)?;
            emit("experiment", &cfg, &result, out.as_deref(), t0)
        }
    }
}

fn positive_horizon(t: f64) -> Result<f64> {
    if t > 0.0 {
        Ok(t)
    } else {
        Err(Error::config("t_grid", "a positive horizon is required (t_grid or --horizon)"))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn usage_errors_exit_2() {
        assert_eq!(cli_main(["rbm", "experiment"]), EXIT_CONFIG);
        assert_eq!(cli_main(["rbm", "nonsense"]), EXIT_CONFIG);
        assert_eq!(cli_main(["rbm", "--help"]), EXIT_OK);
    }

    #[test]
    fn numerical_errors_exit_3() {
        assert_eq!(exit_code(&Error::Numerical("x".into())), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::NotTransient { spectral_radius: 1.0 }), EXIT_NUMERICAL);
        assert_eq!(exit_code(&Error::config("h", "bad")), EXIT_CONFIG);
    }
}
