//! Command-line front end.
//!
//! Exit codes: 0 success, 1 verification failure, 2 usage or configuration
//! error, 3 numerical instability.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde::{Deserialize, Serialize};

use crate::channel2d::FieldRow;
use crate::config::{load_with_overrides, Run1DConfig, Run2DConfig};
use crate::constitutive::FluidParams;
use crate::convexcheck::{run_suite, Suite};
use crate::diagnostics::EnergyRow;
use crate::error::{Error, Result};
use crate::runner::{run_1d, run_2d};
use crate::shear1d::{plug_half_width, steady_oracle, ProfileRow};

pub const EXIT_OK: i32 = 0;
pub const EXIT_VERIFY_FAILED: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_UNSTABLE: i32 = 3;

/// Environment variable capping the worker thread count.
pub const THREADS_ENV: &str = "ASYMBINGHAM_THREADS";

/// Relative slack of the energy inequality accepted by `report`, as a
/// fraction of the energy supplied (initial kinetic plus work).
pub const REPORT_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Parser)]
#[command(name = "asymbingham", version, about = "Asymmetric Bingham fluids: verification suites and channel solvers")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// Configuration file (JSON).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory, created if absent (default `out`; for `report`, the run directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, global = true, default_value_t = 10_000)]
    pub samples: usize,
    #[arg(long, global = true, default_value = "all")]
    pub suite: String,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
    /// Override a configuration entry, e.g. `--set params.tau_star=0.5`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run a convex-analysis verification suite.
    Verify,
    /// Time-step the 1D shear channel.
    Run1d,
    /// Time-step the 2D channel.
    Run2d,
    /// Steady 1D profile computed without time stepping.
    Oracle1d,
    /// Summarize a run directory.
    Report {
        /// Directory containing energy.csv.
        run_dir: PathBuf,
    },
}

/// Parse arguments, run, and return the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    if let Err(e) = configure_threads() {
        eprintln!("error: {e}");
        return EXIT_USAGE;
    }
    match execute(&cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    match e {
        Error::UnstableStep { .. } => EXIT_UNSTABLE,
        Error::PoissonNoConvergence { .. } | Error::NewtonNoConvergence { .. } => EXIT_UNSTABLE,
        _ => EXIT_USAGE,
    }
}

fn configure_threads() -> Result<()> {
    let Ok(v) = std::env::var(THREADS_ENV) else {
        return Ok(());
    };
    let n: usize = v
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config(format!("{THREADS_ENV} must be a positive integer, got '{v}'")))?;
    // A second call in the same process (tests) finds the pool already built.
    let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    Ok(())
}

fn execute(cli: &Cli) -> Result<i32> {
    match &cli.command {
        Command::Verify => cmd_verify(cli),
        Command::Run1d => cmd_run1d(cli),
        Command::Run2d => cmd_run2d(cli),
        Command::Oracle1d => cmd_oracle1d(cli),
        Command::Report { run_dir } => cmd_report(cli, run_dir),
    }
}

impl Cli {
    pub fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("out"))
    }
}

fn read_config<T: serde::de::DeserializeOwned>(cli: &Cli) -> Result<T> {
    let path = cli.config.as_ref().ok_or_else(|| Error::Config("--config is required".into()))?;
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("cannot read {}: {e}", path.display())))?;
    load_with_overrides(&text, &cli.overrides)
}

/// Create `dir` and refuse to clobber any of `files` unless `force`.
fn prepare_outputs(dir: &Path, files: &[String], force: bool) -> Result<()> {
    fs::create_dir_all(dir)?;
    if !force {
        for f in files {
            let p = dir.join(f);
            if p.exists() {
                return Err(Error::Config(format!("{} exists; pass --force to overwrite", p.display())));
            }
        }
    }
    Ok(())
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value)?;
    s.push('\n');
    fs::write(path, s)?;
    Ok(())
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Config(format!("CSV error: {other:?}")),
    }
}

fn write_csv<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(csv_error)?;
    for r in rows {
        w.serialize(r).map_err(csv_error)?;
    }
    w.flush()?;
    Ok(())
}

fn read_csv<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Vec<T>> {
    let mut r = csv::Reader::from_path(path).map_err(csv_error)?;
    r.deserialize().map(|row| row.map_err(csv_error)).collect()
}

fn cmd_verify(cli: &Cli) -> Result<i32> {
    let suite: Suite = cli.suite.parse()?;
    let base = match &cli.config {
        Some(_) => read_config::<FluidParams>(cli)?,
        None => load_with_overrides(&serde_json::to_string(&FluidParams::default())?, &cli.overrides)?,
    };
    if cli.samples == 0 {
        return Err(Error::Config("--samples must be at least 1".into()));
    }
    let file = format!("verify_{}.json", suite.name());
    let out_dir = cli.out_dir();
    prepare_outputs(&out_dir, std::slice::from_ref(&file), cli.force)?;
    let report = run_suite(suite, &base, cli.samples, cli.seed)?;
    write_json(&out_dir.join(&file), &report)?;
    for r in &report.reports {
        if !r.passed() {
            eprintln!("FAIL {}: {} of {} samples violated (worst {:e})", r.check_name, r.violations, r.samples, r.worst_residual);
        }
    }
    println!("{} {}", suite.name(), if report.passed { "pass" } else { "fail" });
    Ok(if report.passed { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

fn cmd_run1d(cli: &Cli) -> Result<i32> {
    let c: Run1DConfig = read_config(cli)?;
    c.validate()?;
    let files = ["profile.csv", "energy.csv", "run.json"].map(String::from);
    let out_dir = cli.out_dir();
    prepare_outputs(&out_dir, &files, cli.force)?;
    let out = run_1d(&c)?;
    write_csv(&out_dir.join("profile.csv"), &out.profiles)?;
    write_csv(&out_dir.join("energy.csv"), &out.energy)?;
    write_json(&out_dir.join("run.json"), &RunRecord { config: &c, summary: &out.summary })?;
    Ok(EXIT_OK)
}

fn field_file(k: usize) -> String {
    format!("fields_{k:04}.csv")
}

fn cmd_run2d(cli: &Cli) -> Result<i32> {
    let c: Run2DConfig = read_config(cli)?;
    c.validate()?;
    let mut files: Vec<String> = (0..c.snapshots).map(field_file).collect();
    files.extend(["energy.csv", "run.json"].map(String::from));
    let out_dir = cli.out_dir();
    prepare_outputs(&out_dir, &files, cli.force)?;
    let out = run_2d(&c)?;
    for (k, snap) in out.snapshots.iter().enumerate() {
        write_csv(&out_dir.join(field_file(k)), snap)?;
    }
    write_csv(&out_dir.join("energy.csv"), &out.energy)?;
    write_json(&out_dir.join("run.json"), &RunRecord { config: &c, summary: &out.summary })?;
    Ok(EXIT_OK)
}

#[derive(Serialize)]
struct RunRecord<'a, C: Serialize> {
    config: &'a C,
    summary: &'a crate::runner::RunSummary,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct OracleRow {
    y: f64,
    u: f64,
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    max_velocity: f64,
    plug_half_width: Option<f64>,
}

fn cmd_oracle1d(cli: &Cli) -> Result<i32> {
    let c: Run1DConfig = read_config(cli)?;
    let files = ["oracle.csv", "oracle.json"].map(String::from);
    let out_dir = cli.out_dir();
    prepare_outputs(&out_dir, &files, cli.force)?;
    let u = steady_oracle(&c.params, c.force, c.h, c.alpha_lo, c.alpha_hi, c.n)?;
    let rows: Vec<OracleRow> =
        u.iter().enumerate().map(|(j, &u)| OracleRow { y: c.h * j as f64 / c.n as f64, u }).collect();
    write_csv(&out_dir.join("oracle.csv"), &rows)?;
    let summary = OracleSummary {
        max_velocity: u.iter().fold(0.0_f64, |m, x| m.max(x.abs())),
        plug_half_width: plug_half_width(&u, c.h, &c.params),
    };
    write_json(&out_dir.join("oracle.json"), &summary)?;
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Report {
    pub rows: usize,
    pub min_residual: f64,
    pub final_residual: f64,
    pub final_kinetic: f64,
    pub final_s_norm_q: f64,
    pub final_gradv_norm_p: f64,
    /// Fraction of plug-flagged points in the last snapshot, if one exists.
    pub plug_fraction: Option<f64>,
    pub tolerance: f64,
    pub accumulators_nonnegative: bool,
    pub accumulators_nondecreasing: bool,
    pub residual_within_tolerance: bool,
    pub energy_inequality: String,
}

/// Evaluate the energy inequality recorded in `energy.csv` rows.
pub fn summarize(rows: &[EnergyRow], plug_fraction: Option<f64>) -> Result<Report> {
    let first = rows.first().ok_or_else(|| Error::Config("energy.csv has no rows".into()))?;
    let last = rows.last().expect("nonempty");
    let k0 = first.kinetic;
    let finite = rows.iter().all(|r| {
        [r.t, r.kinetic, r.dissipation_cum, r.friction_cum, r.residual, r.dissipation_power_cum, r.work_cum]
            .iter()
            .all(|x| x.is_finite())
    });
    let nonneg = finite
        && rows.iter().all(|r| r.kinetic >= 0.0 && r.dissipation_cum >= 0.0 && r.friction_cum >= 0.0 && r.dissipation_power_cum >= 0.0);
    let nondecreasing = rows.windows(2).all(|w| {
        w[1].dissipation_cum >= w[0].dissipation_cum && w[1].friction_cum >= w[0].friction_cum && w[1].t >= w[0].t
    });
    // Recompute rather than trust the stored residual column.
    let residuals: Vec<f64> =
        rows.iter().map(|r| k0 + r.work_cum - (r.kinetic + r.dissipation_cum + r.friction_cum)).collect();
    let min_residual = residuals.iter().fold(f64::INFINITY, |m, &x| m.min(x));
    let supplied = k0 + rows.iter().fold(0.0_f64, |m, r| m.max(r.work_cum.abs()));
    let tolerance = REPORT_TOLERANCE * supplied + 1e-12;
    let within = finite && min_residual >= -tolerance;
    let pass = nonneg && nondecreasing && within;
    Ok(Report {
        rows: rows.len(),
        min_residual,
        final_residual: *residuals.last().expect("nonempty"),
        final_kinetic: last.kinetic,
        final_s_norm_q: last.s_norm_q,
        final_gradv_norm_p: last.gradv_norm_p,
        plug_fraction,
        tolerance,
        accumulators_nonnegative: nonneg,
        accumulators_nondecreasing: nondecreasing,
        residual_within_tolerance: within,
        energy_inequality: if pass { "pass" } else { "fail" }.to_string(),
    })
}

fn last_plug_fraction(dir: &Path) -> Result<Option<f64>> {
    let profile = dir.join("profile.csv");
    if profile.exists() {
        let rows: Vec<ProfileRow> = read_csv(&profile)?;
        let t_last = rows.iter().fold(f64::NEG_INFINITY, |m, r| m.max(r.t));
        let last: Vec<&ProfileRow> = rows.iter().filter(|r| r.t == t_last).collect();
        if last.is_empty() {
            return Ok(None);
        }
        let plug = last.iter().filter(|r| r.plug_flag == 1).count();
        return Ok(Some(plug as f64 / last.len() as f64));
    }
    let mut k = 0;
    while dir.join(field_file(k + 1)).exists() {
        k += 1;
    }
    let fields = dir.join(field_file(k));
    if fields.exists() {
        let rows: Vec<FieldRow> = read_csv(&fields)?;
        if rows.is_empty() {
            return Ok(None);
        }
        let plug = rows.iter().filter(|r| r.plug_flag == 1).count();
        return Ok(Some(plug as f64 / rows.len() as f64));
    }
    Ok(None)
}

fn cmd_report(cli: &Cli, run_dir: &Path) -> Result<i32> {
    let energy = run_dir.join("energy.csv");
    if !energy.is_file() {
        return Err(Error::Config(format!("{} not found", energy.display())));
    }
    let rows: Vec<EnergyRow> = read_csv(&energy)?;
    let report = summarize(&rows, last_plug_fraction(run_dir)?)?;
    let out_dir = cli.out.clone().unwrap_or_else(|| run_dir.to_path_buf());
    let file = "report.json".to_string();
    prepare_outputs(&out_dir, std::slice::from_ref(&file), cli.force)?;
    write_json(&out_dir.join(&file), &report)?;
    println!("{}", serde_json::to_string_pretty(&report)?);
    Ok(if report.energy_inequality == "pass" { EXIT_OK } else { EXIT_VERIFY_FAILED })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: f64, kinetic: f64, diss: f64) -> EnergyRow {
        EnergyRow {
            t,
            kinetic,
            dissipation_cum: diss,
            friction_cum: 0.0,
            residual: 1.0 - kinetic - diss,
            s_norm_q: 0.0,
            gradv_norm_p: 0.0,
            dissipation_power_cum: diss,
            work_cum: 0.0,
        }
    }

    #[test]
    fn summary_flags_tampering() {
        let good = [row(0.0, 1.0, 0.0), row(1.0, 0.5, 0.5)];
        assert_eq!(summarize(&good, None).unwrap().energy_inequality, "pass");
        let negative = [row(0.0, 1.0, 0.0), row(1.0, 0.5, -0.1)];
        let r = summarize(&negative, None).unwrap();
        assert_eq!(r.energy_inequality, "fail");
        assert!(!r.accumulators_nonnegative);
        let created = [row(0.0, 1.0, 0.0), row(1.0, 0.9, 0.5)];
        assert_eq!(summarize(&created, None).unwrap().energy_inequality, "fail");
        assert!(summarize(&[], None).is_err());
    }

    #[test]
    fn usage_errors_exit_two() {
        assert_eq!(main_with_args(["asymbingham", "frobnicate"]), EXIT_USAGE);
        assert_eq!(main_with_args(["asymbingham", "verify", "--suite", "nope"]), EXIT_USAGE);
        assert_eq!(main_with_args(["asymbingham", "verify", "--samples", "0", "--suite", "norms"]), EXIT_USAGE);
        assert_eq!(main_with_args(["asymbingham", "run1d"]), EXIT_USAGE);
    }
}
