//! Command-line front end: `run`, `sweep`, `calibrate` and `validate`.
//!
//! Exit codes: 0 success, 1 simulation failure, 2 usage or validation
//! failure, 3 calibration residual above the ceiling, 4 I/O failure.

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::engine::cpu_series;
use crate::experiment::{run_repetitions, sweep, Cell, ExperimentError};
use crate::metrics::{calibrate, CalibrationBounds, CalibrationTargets};
use crate::model::{validate_scenario, NodeRole, PatternKind, Scenario};
use crate::report::{write_calibration, write_cpu, write_runs, write_summary, SummaryScope};

pub const EXIT_SIMULATION: i32 = 1;
pub const EXIT_VALIDATION: i32 = 2;
pub const EXIT_RESIDUAL: i32 = 3;
pub const EXIT_IO: i32 = 4;

#[derive(Debug, Parser)]
#[command(name = "sfcsim", version, about = "Simulate live migration of a service function chain between edge nodes")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run repetitions of one scenario.
    Run(RunArgs),
    /// Run every (pattern, bandwidth) combination.
    Sweep(SweepArgs),
    /// Fit instance parameters to observed downtime and total-time cells.
    Calibrate(CalibrateArgs),
    /// Check a scenario file and list every violation.
    Validate {
        #[arg(long)]
        scenario: PathBuf,
    },
}

#[derive(Debug, Args)]
struct Common {
    /// Scenario JSON file.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    reps: Option<u32>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// Write one event-log CSV per run.
    #[arg(long)]
    emit_events: bool,
    /// Write source and destination CPU series per run.
    #[arg(long)]
    emit_cpu: bool,
}

#[derive(Debug, Args)]
struct RunArgs {
    #[command(flatten)]
    common: Common,
    #[arg(long)]
    pattern: Option<PatternKind>,
    /// Migration bandwidth limit, e.g. 300KB, 2MB, 2e6 or `full`.
    #[arg(long, value_parser = parse_bandwidth)]
    bandwidth: Option<Bandwidth>,
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[command(flatten)]
    common: Common,
    /// Comma-separated patterns; defaults to the scenario's pattern.
    #[arg(long, value_delimiter = ',')]
    pattern: Vec<PatternKind>,
    /// Comma-separated bandwidth limits.
    #[arg(long, value_delimiter = ',', value_parser = parse_bandwidth, required = true, num_args = 1..)]
    bandwidth: Vec<Bandwidth>,
}

#[derive(Debug, Args)]
struct CalibrateArgs {
    /// Base scenario providing every field that is not fitted.
    #[arg(long)]
    scenario: PathBuf,
    #[arg(long)]
    targets: PathBuf,
    #[arg(long)]
    bounds: PathBuf,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
    /// File name of the fitted scenario inside the output directory.
    #[arg(long, default_value = "calibrated_scenario.json")]
    output: String,
}

/// A bandwidth flag value; `Full` lifts the limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Bandwidth {
    Full,
    Limit(f64),
}

/// Parses `300KB`, `2MB`, `3GB` (powers of 10, bytes per second), plain
/// numbers such as `2000000` or `2e6`, and `full`. A trailing `/s` or `ps`
/// is accepted.
pub fn parse_bandwidth(text: &str) -> Result<Bandwidth, String> {
    let t = text.trim();
    if t.eq_ignore_ascii_case("full") {
        return Ok(Bandwidth::Full);
    }
    let lower = t.to_ascii_lowercase();
    let lower = lower
        .strip_suffix("/s")
        .or_else(|| lower.strip_suffix("ps"))
        .unwrap_or(&lower);
    let (num, scale) = if let Some(n) = lower.strip_suffix("kb") {
        (n, 1e3)
    } else if let Some(n) = lower.strip_suffix("mb") {
        (n, 1e6)
    } else if let Some(n) = lower.strip_suffix("gb") {
        (n, 1e9)
    } else if let Some(n) = lower.strip_suffix('b') {
        (n, 1.0)
    } else {
        (lower, 1.0)
    };
    let value: f64 = num
        .trim()
        .parse()
        .map_err(|_| format!("invalid bandwidth `{text}`"))?;
    let bytes = value * scale;
    if !(bytes.is_finite() && bytes > 0.0) {
        return Err(format!("bandwidth must be > 0, got `{text}`"));
    }
    Ok(Bandwidth::Limit(bytes))
}

struct Failure {
    code: i32,
    message: String,
}

impl Failure {
    fn new(code: i32, message: impl Into<String>) -> Self {
        Self {
            code,
            message: message.into(),
        }
    }
}

type Outcome = Result<(), Failure>;

fn read(path: &Path) -> Result<String, Failure> {
    fs::read_to_string(path).map_err(|e| Failure::new(EXIT_IO, format!("cannot read {}: {e}", path.display())))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, Failure> {
    let text = read(path)?;
    serde_json::from_str(&text).map_err(|e| Failure::new(EXIT_VALIDATION, format!("{}: {e}", path.display())))
}

fn write(path: &Path, bytes: &[u8]) -> Outcome {
    if let Some(dir) = path.parent() {
        fs::create_dir_all(dir)
            .map_err(|e| Failure::new(EXIT_IO, format!("cannot create {}: {e}", dir.display())))?;
    }
    fs::write(path, bytes).map_err(|e| Failure::new(EXIT_IO, format!("cannot write {}: {e}", path.display())))
}

fn csv_bytes(f: impl FnOnce(&mut Vec<u8>) -> Result<(), csv::Error>) -> Result<Vec<u8>, Failure> {
    let mut buf = Vec::new();
    f(&mut buf).map_err(|e| Failure::new(EXIT_IO, e.to_string()))?;
    Ok(buf)
}

fn validated(s: Scenario) -> Result<Scenario, Failure> {
    let violations = validate_scenario(&s);
    if violations.is_empty() {
        return Ok(s);
    }
    let list: Vec<String> = violations.iter().map(|v| format!("  {v}")).collect();
    Err(Failure::new(EXIT_VALIDATION, format!("invalid scenario:\n{}", list.join("\n"))))
}

fn load_scenario(common: &Common) -> Result<Scenario, Failure> {
    let mut s: Scenario = parse_json(&common.scenario)?;
    if let Some(reps) = common.reps {
        s.repetitions = reps;
    }
    if let Some(seed) = common.seed {
        s.base_seed = seed;
    }
    Ok(s)
}

fn experiment_code(e: &ExperimentError) -> i32 {
    match e {
        ExperimentError::Invalid(_) | ExperimentError::Plan(_) => EXIT_VALIDATION,
        _ => EXIT_SIMULATION,
    }
}

fn limit_of(bw: Bandwidth) -> Option<f64> {
    match bw {
        Bandwidth::Full => None,
        Bandwidth::Limit(v) => Some(v),
    }
}

fn emit(common: &Common, cells: &[Cell]) -> Outcome {
    let dir = &common.out_dir;
    write(&dir.join("runs.csv"), &csv_bytes(|b| write_runs(b, cells))?)?;
    if cells.iter().all(|c| c.runs.len() >= 2) {
        write(
            &dir.join("summary.csv"),
            &csv_bytes(|b| write_summary(b, cells, SummaryScope::Instances))?,
        )?;
        write(
            &dir.join("sfc_summary.csv"),
            &csv_bytes(|b| write_summary(b, cells, SummaryScope::Chain))?,
        )?;
    }
    for cell in cells {
        for run in &cell.runs {
            let stem = format!("{}_{}_rep{}", cell.pattern, cell.bandwidth_bytes_per_s, run.rep);
            if common.emit_events {
                write(&dir.join("events").join(format!("{stem}.csv")), run.log.to_csv().as_bytes())?;
            }
            if common.emit_cpu {
                for role in [NodeRole::Source, NodeRole::Destination] {
                    let series = cpu_series(&run.log, role);
                    write(
                        &dir.join("cpu").join(format!("{stem}_{}.csv", role.as_str())),
                        &csv_bytes(|b| write_cpu(b, &series))?,
                    )?;
                }
            }
        }
    }
    Ok(())
}

fn cmd_run(args: RunArgs) -> Outcome {
    let mut s = load_scenario(&args.common)?;
    if let Some(p) = args.pattern {
        s.pattern = p;
    }
    if let Some(bw) = args.bandwidth {
        s.migration_bandwidth_limit_bytes_per_s = limit_of(bw);
    }
    let s = validated(s)?;
    let cell = run_repetitions(&s).map_err(|e| Failure::new(experiment_code(&e), e.to_string()))?;
    emit(&args.common, std::slice::from_ref(&cell))?;
    eprintln!(
        "{} repetition(s) of {} at {} B/s written to {}",
        cell.runs.len(),
        cell.pattern,
        cell.bandwidth_bytes_per_s,
        args.common.out_dir.display()
    );
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> Outcome {
    let s = validated(load_scenario(&args.common)?)?;
    if args.bandwidth.is_empty() {
        return Err(Failure::new(EXIT_VALIDATION, "bandwidth list must not be empty"));
    }
    let capacity = s.link.capacity_bytes_per_s;
    let mut bandwidths = Vec::with_capacity(args.bandwidth.len());
    for bw in &args.bandwidth {
        let v = limit_of(*bw).unwrap_or(capacity);
        if v > capacity {
            return Err(Failure::new(
                EXIT_VALIDATION,
                format!("bandwidth {v} B/s: limit exceeds link capacity"),
            ));
        }
        bandwidths.push(v);
    }
    let patterns = if args.pattern.is_empty() {
        vec![s.pattern]
    } else {
        args.pattern.clone()
    };
    let cells = sweep(&s, &bandwidths, &patterns)
        .map_err(|e| Failure::new(experiment_code(&e.source), e.to_string()))?;
    emit(&args.common, &cells)?;
    eprintln!(
        "{} cell(s) written to {}",
        cells.len(),
        args.common.out_dir.display()
    );
    Ok(())
}

fn cmd_calibrate(args: CalibrateArgs) -> Outcome {
    let base: Scenario = parse_json(&args.scenario)?;
    let targets: CalibrationTargets = parse_json(&args.targets)?;
    let bounds: CalibrationBounds = parse_json(&args.bounds)?;
    let fit = calibrate(&base, &targets, &bounds).map_err(|e| Failure::new(EXIT_VALIDATION, e.to_string()))?;
    let mut json = fit.scenario.to_json();
    json.push('\n');
    write(&args.out_dir.join(&args.output), json.as_bytes())?;
    write(
        &args.out_dir.join("calibration_residuals.csv"),
        &csv_bytes(|b| write_calibration(b, &fit.residuals))?,
    )?;
    eprintln!(
        "max relative error {:.4} (ceiling {}), {} evaluations",
        fit.max_relative_error(),
        fit.residual_ceiling,
        fit.evaluations
    );
    if !fit.within_ceiling() {
        return Err(Failure::new(
            EXIT_RESIDUAL,
            format!(
                "residual {:.4} exceeds ceiling {}",
                fit.max_relative_error(),
                fit.residual_ceiling
            ),
        ));
    }
    Ok(())
}

fn cmd_validate(path: &Path) -> Outcome {
    let s: Scenario = parse_json(path)?;
    validated(s)?;
    println!("{}: ok", path.display());
    Ok(())
}

/// Parses `args` (including the program name) and runs the command.
/// Returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return e.exit_code();
        }
    };
    let outcome = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::Calibrate(a) => cmd_calibrate(a),
        Command::Validate { scenario } => cmd_validate(&scenario),
    };
    match outcome {
        Ok(()) => 0,
        Err(f) => {
            eprintln!("error: {}", f.message);
            f.code
        }
    }
}
