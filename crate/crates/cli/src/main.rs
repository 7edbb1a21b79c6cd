//! `spherefit` command-line front end.
//!
//! Exit codes: 0 success, 2 invalid configuration or input, 3 numerical
//! infeasibility, 4 I/O failure.

mod commands;
mod config;
mod manifest;

use std::fmt;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;

#[derive(Parser, Debug)]
#[command(
    name = "spherefit",
    version,
    about = "Spectral-filter fitting of scattered data on the sphere"
)]
struct Cli {
    /// Worker threads for trials and grid fits; outputs do not depend on it.
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Master seed; every random stream is derived from it.
    #[arg(long, global = true)]
    seed: Option<u64>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate a point set as an `x,y,z` CSV.
    GenPoints {
        #[arg(long, value_enum, default_value_t = PointKind::Fibonacci)]
        kind: PointKind,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value = "points.csv")]
        out: PathBuf,
    },
    /// Compute positive quadrature weights for a point file.
    Quadrature {
        #[arg(long)]
        points: PathBuf,
        /// Exactness degree `s`.
        #[arg(long)]
        degree: usize,
        #[arg(long, default_value_t = 1e-18)]
        tol: f64,
        /// D-type constant checked in the sidecar.
        #[arg(long, default_value_t = 5.0)]
        c_star: f64,
        /// With equal weights, only certify the largest exact degree.
        #[arg(long)]
        equal_weights: bool,
        #[arg(long, default_value = "rule.csv")]
        out: PathBuf,
    },
    /// Fit with a fixed filter parameter.
    Fit(RunArgs),
    /// Fit with the Lepskii-selected filter parameter and write the scan trace.
    Lepskii(RunArgs),
    /// Divide-and-conquer fit.
    Dcfit {
        #[command(flatten)]
        run: RunArgs,
        /// Block count `J`; overrides the config's `dc.parts`.
        #[arg(long)]
        parts: Option<usize>,
        /// Filter family; overrides the config's `filter`.
        #[arg(long)]
        filter: Option<String>,
        /// Shared filter parameter; overrides the config's `lambda`.
        #[arg(long)]
        lambda: Option<f64>,
    },
    /// Convergence study from a scenario config.
    Study(RunArgs),
    /// Geometry, quadrature and stability diagnostics.
    Diagnostics(RunArgs),
    /// Tune the Lepskii threshold constant against the oracle on synthetic trials.
    Calibrate {
        #[command(flatten)]
        run: RunArgs,
        #[arg(long, default_value_t = 20)]
        trials: usize,
        /// Agreement means selected error ≤ ratio × best grid error.
        #[arg(long, default_value_t = 3.0)]
        ratio: f64,
    },
    /// Re-run a recorded manifest into a new output directory or file.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

#[derive(clap::Args, Debug)]
struct RunArgs {
    /// JSON config; unknown keys are rejected.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: PathBuf,
}

#[derive(ValueEnum, Serialize, Deserialize, Debug, Clone, Copy, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum PointKind {
    Fibonacci,
    Random,
}

/// A fully resolved invocation, as recorded in manifests.
#[derive(Serialize, Deserialize, Debug, Clone, PartialEq)]
#[serde(tag = "command", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Job {
    GenPoints {
        kind: PointKind,
        n: usize,
    },
    Quadrature {
        points: PathBuf,
        degree: usize,
        tol: f64,
        c_star: f64,
        equal_weights: bool,
    },
    Fit {
        config: config::RunConfig,
    },
    Lepskii {
        config: config::RunConfig,
    },
    Dcfit {
        config: config::RunConfig,
        parts: Option<usize>,
        filter: Option<String>,
        lambda: Option<f64>,
    },
    Study {
        config: spherefit::analysis::ScenarioConfig,
    },
    Diagnostics {
        config: config::RunConfig,
    },
    Calibrate {
        config: config::RunConfig,
        trials: usize,
        ratio: f64,
    },
}

impl Job {
    /// File-producing jobs write to `--out` directly; the rest treat it as a directory.
    fn writes_file(&self) -> bool {
        matches!(self, Job::GenPoints { .. } | Job::Quadrature { .. })
    }
}

#[derive(Debug)]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    pub fn config(message: impl Into<String>) -> Self {
        Self {
            code: 2,
            message: message.into(),
        }
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self {
            code: 4,
            message: message.into(),
        }
    }

    /// Failure while reading an input file.
    pub fn input(path: &Path, err: spherefit::Error) -> Self {
        let base = CliError::from(err);
        Self {
            code: base.code,
            message: format!("{}: {}", path.display(), base.message),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<spherefit::Error> for CliError {
    fn from(err: spherefit::Error) -> Self {
        use spherefit::Error as E;
        let code = match &err {
            E::Io(_) => 4,
            E::Csv(e) if matches!(e.kind(), csv::ErrorKind::Io(_)) => 4,
            E::InfeasibleDegree { .. }
            | E::IllConditioned { .. }
            | E::Divergence(_)
            | E::Numerical(_) => 3,
            _ => 2,
        };
        Self {
            code,
            message: err.to_string(),
        }
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::io(format!("{}: {e}", path.display())))?;
    serde_json::from_str(&text).map_err(|e| CliError::config(format!("{}: {e}", path.display())))
}

fn resolve(command: Command, seed: Option<u64>) -> Result<(Job, PathBuf, u64), CliError> {
    let seed_or_zero = seed.unwrap_or(0);
    Ok(match command {
        Command::GenPoints { kind, n, out } => (Job::GenPoints { kind, n }, out, seed_or_zero),
        Command::Quadrature {
            points,
            degree,
            tol,
            c_star,
            equal_weights,
            out,
        } => (
            Job::Quadrature {
                points,
                degree,
                tol,
                c_star,
                equal_weights,
            },
            out,
            seed_or_zero,
        ),
        Command::Fit(run) => (
            Job::Fit {
                config: read_config(&run.config)?,
            },
            run.out,
            seed_or_zero,
        ),
        Command::Lepskii(run) => (
            Job::Lepskii {
                config: read_config(&run.config)?,
            },
            run.out,
            seed_or_zero,
        ),
        Command::Dcfit {
            run,
            parts,
            filter,
            lambda,
        } => (
            Job::Dcfit {
                config: read_config(&run.config)?,
                parts,
                filter,
                lambda,
            },
            run.out,
            seed_or_zero,
        ),
        Command::Study(run) => {
            let mut config: spherefit::analysis::ScenarioConfig = read_config(&run.config)?;
            if let Some(s) = seed {
                config.seed = s;
            }
            let seed = config.seed;
            (Job::Study { config }, run.out, seed)
        }
        Command::Diagnostics(run) => (
            Job::Diagnostics {
                config: read_config(&run.config)?,
            },
            run.out,
            seed_or_zero,
        ),
        Command::Calibrate { run, trials, ratio } => (
            Job::Calibrate {
                config: read_config(&run.config)?,
                trials,
                ratio,
            },
            run.out,
            seed_or_zero,
        ),
        Command::Replay { manifest, out } => {
            let m: Manifest = read_config(&manifest)?;
            (m.job, out, m.seed)
        }
    })
}

fn execute(cli: Cli) -> Result<(), CliError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .map_err(|e| CliError::config(format!("cannot start {n} threads: {e}")))?;
    }
    let (job, out, seed) = resolve(cli.command, cli.seed)?;
    let outputs = commands::run(&job, seed, &out)?;
    let manifest = Manifest::new(job, seed, outputs);
    manifest.write(&out)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.code)
        }
    }
}
