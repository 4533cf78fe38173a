//! Command-line driver: run ensembles, compute oracle rates, analyze
//! emission files.
//!
//! Exit codes: 0 ok, 2 configuration error, 3 numeric failure, 4 analysis
//! failure.

mod manifest;
mod report;

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use shelving::analysis::{ensemble_waiting_times, histogram, write_histogram_csv, WaitingRule};
use shelving::ensemble::{run_ensemble, Engine};
use shelving::oracle::{read_golden, telegraph_oracle, write_golden, OracleError};
use shelving::record::{assemble_records, read_emissions_csv, write_emissions_csv};
use shelving::{Channel, ConfigurationKind};

use manifest::{read_scheme, RunManifest, RunSettings};

/// A failure with the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn config(message: impl Into<String>) -> Self {
        Failure { code: 2, message: message.into() }
    }

    pub fn numeric(message: impl Into<String>) -> Self {
        Failure { code: 3, message: message.into() }
    }

    pub fn analysis(message: impl Into<String>) -> Self {
        Failure { code: 4, message: message.into() }
    }
}

fn io_failure(path: &Path, e: impl std::fmt::Display) -> Failure {
    Failure::config(format!("{}: {e}", path.display()))
}

#[derive(Parser)]
#[command(name = "shelving", version, about = "Simulate intermittent fluorescence of driven three-level atoms")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an ensemble of trajectories and write emissions.csv and manifest.json.
    Run {
        /// key = value file with scheme, trajectories, t_max, seed, engine, out. Flags win.
        #[arg(long)]
        manifest: Option<PathBuf>,
        #[arg(long)]
        scheme: Option<PathBuf>,
        #[arg(long)]
        trajectories: Option<usize>,
        #[arg(long = "t-max")]
        t_max: Option<f64>,
        #[arg(long)]
        seed: Option<u64>,
        /// nrules or mcwf
        #[arg(long)]
        engine: Option<Engine>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Compute fast and slow waiting-time rates of a V scheme and write oracle_<hash>.json.
    Oracle {
        #[arg(long)]
        scheme: PathBuf,
        #[arg(long, default_value = ".")]
        out: PathBuf,
    },
    /// Segment, fit and check an emissions file; writes report.json and histogram.csv.
    Analyze {
        #[arg(long)]
        emissions: PathBuf,
        /// Run manifest; defaults to manifest.json next to the emissions file.
        #[arg(long)]
        manifest: Option<PathBuf>,
        /// Oracle JSON; computed on the fly for V schemes when absent.
        #[arg(long)]
        oracle: Option<PathBuf>,
        /// Defaults to the directory of the emissions file.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Strong-photon gap separating bright from dark periods.
        #[arg(long)]
        gap_threshold: Option<f64>,
        #[arg(long, default_value_t = 50)]
        bins: usize,
        /// Exit with the analysis failure code when a check fails.
        #[arg(long)]
        strict: bool,
    },
}

fn create(path: &Path) -> Result<BufWriter<File>, Failure> {
    File::create(path).map(BufWriter::new).map_err(|e| io_failure(path, e))
}

fn write_json<T: serde::Serialize>(path: &Path, value: &T) -> Result<(), Failure> {
    let text = serde_json::to_string_pretty(value).map_err(|e| io_failure(path, e))?;
    fs::write(path, text + "\n").map_err(|e| io_failure(path, e))
}

fn cmd_run(settings: RunSettings) -> Result<(), Failure> {
    let (manifest, scheme, out) = settings.resolve()?;
    let records = run_ensemble(&scheme, manifest.engine, manifest.trajectories, manifest.t_max, manifest.seed)
        .map_err(|e| Failure::numeric(e.to_string()))?;
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    let path = out.join("emissions.csv");
    write_emissions_csv(create(&path)?, &records).map_err(|e| io_failure(&path, e))?;
    write_json(&out.join("manifest.json"), &manifest)?;
    let photons: usize = records.iter().map(|r| r.len()).sum();
    println!(
        "{} trajectories, {photons} emissions -> {}",
        manifest.trajectories,
        path.display()
    );
    Ok(())
}

fn oracle_failure(e: OracleError) -> Failure {
    match e {
        OracleError::NotV(_) => Failure::config(e.to_string()),
        OracleError::Io(_) | OracleError::Json(_) => Failure::config(e.to_string()),
        OracleError::NoPlateau(_) | OracleError::Indistinguishable { .. } => Failure::numeric(e.to_string()),
    }
}

fn cmd_oracle(scheme: &Path, out: &Path) -> Result<(), Failure> {
    let scheme = read_scheme(scheme)?;
    let params = telegraph_oracle(&scheme).map_err(oracle_failure)?;
    let path = write_golden(out, &scheme, &params).map_err(oracle_failure)?;
    println!(
        "beta1 {} lambda2 {} weight {} -> {}",
        params.beta1,
        params.lambda2,
        params.weight,
        path.display()
    );
    Ok(())
}

fn cmd_analyze(
    emissions: &Path,
    manifest: Option<PathBuf>,
    oracle: Option<PathBuf>,
    out: Option<PathBuf>,
    gap_threshold: Option<f64>,
    bins: usize,
    strict: bool,
) -> Result<(), Failure> {
    let dir = emissions.parent().map_or_else(|| PathBuf::from("."), Path::to_path_buf);
    let manifest = RunManifest::read(&manifest.unwrap_or_else(|| dir.join("manifest.json")))?;
    let scheme = manifest.level_scheme()?;
    let file = File::open(emissions).map_err(|e| io_failure(emissions, e))?;
    let rows = read_emissions_csv(file).map_err(|e| Failure::analysis(format!("{}: {e}", emissions.display())))?;
    if let Some(id) = rows.keys().find(|&&id| id as usize >= manifest.trajectories) {
        return Err(Failure::analysis(format!(
            "trajectory id {id} out of range for {} trajectories",
            manifest.trajectories
        )));
    }
    let records = assemble_records(rows, manifest.trajectories, manifest.t_max);
    if let Some(i) = records.iter().position(|r| !r.is_valid()) {
        return Err(Failure::analysis(format!("trajectory {i} has unsorted or out-of-range times")));
    }
    // A given oracle file must load; one computed here may fail on schemes
    // without separated rates, which only drops the rate checks.
    let (oracle, oracle_skipped) = match oracle {
        Some(path) => (Some(read_golden(&path).map_err(oracle_failure)?), None),
        None if scheme.config == ConfigurationKind::V => match telegraph_oracle(&scheme) {
            Ok(p) => (Some(p), None),
            Err(e) => (None, Some(e.to_string())),
        },
        None => (None, None),
    };
    let threshold = gap_threshold.unwrap_or_else(|| scheme.default_gap_threshold());
    if !(threshold > 0.0) {
        return Err(Failure::config(format!("gap threshold must be positive, got {threshold}")));
    }
    let mut report = report::analyze(&scheme, &records, oracle, threshold)?;
    report.oracle_skipped = oracle_skipped;
    let out = out.unwrap_or(dir);
    fs::create_dir_all(&out).map_err(|e| io_failure(&out, e))?;
    write_json(&out.join("report.json"), &report)?;
    let waits = ensemble_waiting_times(&records, Channel::Strong, WaitingRule::NextOfChannel);
    let hist_path = out.join("histogram.csv");
    write_histogram_csv(create(&hist_path)?, &histogram(&waits, bins)).map_err(|e| io_failure(&hist_path, e))?;
    for c in &report.checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if let Some(reason) = &report.strong_fit_skipped {
        println!("strong fit skipped: {reason}");
    }
    if let Some(reason) = &report.oracle_skipped {
        println!("oracle skipped: {reason}");
    }
    if strict && !report.passed {
        return Err(Failure::analysis("one or more checks failed"));
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run {
            manifest,
            scheme,
            trajectories,
            t_max,
            seed,
            engine,
            out,
        } => {
            let flags = RunSettings {
                scheme,
                trajectories,
                t_max,
                seed,
                engine,
                out,
            };
            manifest
                .map(|path| RunSettings::from_file(&path))
                .transpose()
                .and_then(|file| cmd_run(flags.over(file.unwrap_or_default())))
        }
        Command::Oracle { scheme, out } => cmd_oracle(&scheme, &out),
        Command::Analyze {
            emissions,
            manifest,
            oracle,
            out,
            gap_threshold,
            bins,
            strict,
        } => cmd_analyze(&emissions, manifest, oracle, out, gap_threshold, bins, strict),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}
