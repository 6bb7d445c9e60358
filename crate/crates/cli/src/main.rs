//! `crossing-sim`: fit, predict, simulate and evaluate pedestrian crossing
//! decision models from the command line.

mod commands;
mod manifest;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};

/// How a run failed; decides the exit code.
#[derive(Debug)]
pub enum Failure {
    /// Bad input or configuration (exit 2).
    Validation(anyhow::Error),
    /// The numerics failed or did not converge (exit 3).
    Numerical(anyhow::Error),
    /// Anything else, such as an unwritable output path (exit 1).
    Other(anyhow::Error),
}

impl Failure {
    fn exit_code(&self) -> u8 {
        match self {
            Failure::Other(_) => 1,
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn io(path: &Path, e: std::io::Error) -> Self {
        Failure::Other(anyhow::anyhow!("{}: {e}", path.display()))
    }

    pub fn invalid(msg: impl std::fmt::Display) -> Self {
        Failure::Validation(anyhow::anyhow!("{msg}"))
    }
}

impl From<crossing_core::Error> for Failure {
    fn from(e: crossing_core::Error) -> Self {
        if e.is_validation() {
            Failure::Validation(e.into())
        } else {
            Failure::Numerical(e.into())
        }
    }
}

#[derive(Parser)]
#[command(name = "crossing-sim", version, about = "Pedestrian gap acceptance and crossing initiation models")]
struct Cli {
    /// Master random seed; generated and recorded in the manifest when absent.
    #[arg(long, global = true)]
    seed: Option<u64>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum FamilyArg {
    Sw,
    Gauss,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum Switch {
    On,
    Off,
}

#[derive(Clone, Copy, ValueEnum)]
pub enum WidthArg {
    PerTrial,
    ScenarioAverage,
}

#[derive(Subcommand)]
enum Command {
    /// Fit decision and initiation models to a trial CSV.
    Calibrate {
        #[arg(long)]
        trials: PathBuf,
        #[arg(long, value_enum, default_value = "sw")]
        family: FamilyArg,
        #[arg(long = "flow-rules", value_enum, default_value = "on")]
        flow_rules: Switch,
        #[arg(long)]
        out: PathBuf,
        /// Number of optimizer starts.
        #[arg(long, default_value_t = 5)]
        starts: usize,
        /// Iteration cap per optimizer run.
        #[arg(long = "max-iter", default_value_t = 500)]
        max_iter: usize,
        /// Vehicle width used when the cue has to be recomputed.
        #[arg(long = "width-mode", value_enum, default_value = "per-trial")]
        width_mode: WidthArg,
        /// Labels held out for validation, comma separated.
        #[arg(long, value_delimiter = ',')]
        holdout: Vec<String>,
        /// What the hold-out labels name: `condition` (e.g. 30mph_3s) or `scenario`.
        #[arg(long = "split-by", default_value = "condition")]
        split_by: String,
    },
    /// Analytic per-gap probabilities and the crossing-start density of a scenario.
    Predict {
        /// Model JSON or a built-in name such as flow_sw; overrides the scenario's model.
        #[arg(long)]
        params: Option<String>,
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        /// Seconds of density after the last vehicle clears.
        #[arg(long, default_value_t = 10.0)]
        tail: f64,
    },
    /// Run the agent-based crossing simulation.
    Simulate {
        #[arg(long)]
        scenario: PathBuf,
        #[arg(long)]
        agents: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Write per-step positions of every agent.
        #[arg(long)]
        trajectories: bool,
    },
    /// Score model parameters against a trial CSV.
    Evaluate {
        #[arg(long)]
        pred: String,
        #[arg(long)]
        trials: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Draw a synthetic trial CSV from known parameters.
    Synth {
        #[arg(long)]
        params: String,
        /// Design file; the single-gap grid when omitted.
        #[arg(long)]
        design: Option<PathBuf>,
        #[arg(long)]
        n: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Write the numbers behind a plot as CSV or JSON (by extension).
    ExportPlots {
        #[arg(long)]
        kind: String,
        #[arg(long)]
        params: String,
        /// Trial CSV, for gap-acceptance-grid and initiation-means.
        #[arg(long)]
        trials: Option<PathBuf>,
        /// Scenario file, for density-timeline.
        #[arg(long)]
        scenario: Option<PathBuf>,
        #[arg(long, default_value_t = 0.02)]
        dt: f64,
        #[arg(long, default_value_t = 10.0)]
        tail: f64,
        #[arg(long)]
        out: PathBuf,
    },
}

fn init_threads() -> Result<(), Failure> {
    let Ok(raw) = std::env::var("CROSSING_SIM_THREADS") else {
        return Ok(());
    };
    let n: usize = raw
        .trim()
        .parse()
        .ok()
        .filter(|&n| n > 0)
        .ok_or_else(|| Failure::invalid(format!("CROSSING_SIM_THREADS must be a positive integer, got `{raw}`")))?;
    rayon::ThreadPoolBuilder::new()
        .num_threads(n)
        .build_global()
        .map_err(|e| Failure::Other(e.into()))
}

fn run(cli: Cli) -> Result<(), Failure> {
    init_threads()?;
    let seed = manifest::Seed::resolve(cli.seed);
    match cli.command {
        Command::Calibrate {
            trials,
            family,
            flow_rules,
            out,
            starts,
            max_iter,
            width_mode,
            holdout,
            split_by,
        } => commands::calibrate(commands::CalibrateArgs {
            trials,
            family,
            flow_rules: matches!(flow_rules, Switch::On),
            out,
            starts,
            max_iter,
            width_mode,
            holdout,
            split_by,
            seed,
        }),
        Command::Predict {
            params,
            scenario,
            out,
            dt,
            tail,
        } => commands::predict(params.as_deref(), &scenario, &out, dt, tail, seed),
        Command::Simulate {
            scenario,
            agents,
            out,
            trajectories,
        } => commands::simulate(&scenario, agents, &out, trajectories, cli.seed),
        Command::Evaluate { pred, trials, out } => commands::evaluate(&pred, &trials, &out, seed),
        Command::Synth { params, design, n, out } => commands::synth(&params, design.as_deref(), n, &out, seed),
        Command::ExportPlots {
            kind,
            params,
            trials,
            scenario,
            dt,
            tail,
            out,
        } => commands::export_plots(commands::ExportArgs {
            kind,
            params,
            trials,
            scenario,
            dt,
            tail,
            out,
            seed,
        }),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(failure) => {
            let (kind, err) = match &failure {
                Failure::Validation(e) => ("invalid input", e),
                Failure::Numerical(e) => ("numerical failure", e),
                Failure::Other(e) => ("error", e),
            };
            eprintln!("crossing-sim: {kind}: {err:#}");
            ExitCode::from(failure.exit_code())
        }
    }
}
