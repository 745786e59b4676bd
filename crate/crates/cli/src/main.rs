use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use fronthaul::config::ExperimentConfig;
use fronthaul::experiment::{emit_results, run_experiment, ExperimentSpec, Mode, Outcome};
use fronthaul::sim::Scheme;

/// Delay-aware uplink fronthaul allocation experiments.
#[derive(Parser)]
#[command(name = "fronthaul", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// One operating point; calibrates prices when `episode.target_total_capacity_bps` is set.
    Run {
        #[command(flatten)]
        common: Common,
        /// Restrict to these schemes (repeatable).
        #[arg(long = "scheme", value_name = "SCHEME")]
        schemes: Vec<Scheme>,
        /// Write per-slot traces.
        #[arg(long)]
        trace: bool,
    },
    /// Mean delay against the mean arrival rate at a fixed capacity budget.
    SweepArrival {
        #[command(flatten)]
        common: Common,
    },
    /// Mean delay against the total capacity budget at a fixed arrival rate.
    SweepCapacity {
        #[command(flatten)]
        common: Common,
    },
    /// Average cost of each scheme against value iteration on one and two flows.
    OracleGap {
        #[command(flatten)]
        common: Common,
    },
    /// Priority constants of every flow and the physical-to-model units.
    CalibrationReport {
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Args)]
struct Common {
    /// TOML configuration; every key is optional.
    #[arg(short, long, value_name = "PATH")]
    config: Option<PathBuf>,
    /// Override a configuration key, e.g. `--set system.tx_power=20dBm` (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// Output directory, overriding `output.dir`.
    #[arg(short, long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Run seed, overriding `episode.seed`.
    #[arg(long)]
    seed: Option<u64>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, action = clap::ArgAction::Count)]
    verbose: u8,
}

impl Common {
    fn load(&self, extra: &[String]) -> fronthaul::Result<ExperimentConfig> {
        let mut overrides = self.overrides.clone();
        if let Some(seed) = self.seed {
            overrides.push(format!("episode.seed={seed}"));
        }
        if let Some(out) = &self.out {
            overrides.push(format!("output.dir={:?}", out.display().to_string()));
        }
        overrides.extend_from_slice(extra);
        ExperimentConfig::load(self.config.as_deref(), &overrides)
    }
}

fn execute(cli: Cli) -> fronthaul::Result<()> {
    let (mode, common, extra) = match &cli.command {
        Command::Run { common, schemes, trace } => {
            let mut extra = Vec::new();
            if !schemes.is_empty() {
                let names: Vec<String> = schemes.iter().map(|s| format!("{:?}", s.as_str())).collect();
                extra.push(format!("sweep.schemes=[{}]", names.join(", ")));
            }
            if *trace {
                extra.push("output.trace=true".into());
            }
            (Mode::SingleRun, common, extra)
        }
        Command::SweepArrival { common } => (Mode::SweepArrival, common, Vec::new()),
        Command::SweepCapacity { common } => (Mode::SweepCapacity, common, Vec::new()),
        Command::OracleGap { common } => (Mode::OracleGap, common, Vec::new()),
        Command::CalibrationReport { common } => (Mode::UnitReport, common, Vec::new()),
    };
    let level = match common.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let spec = ExperimentSpec::new(mode, common.load(&extra)?)?;
    let outcome = run_experiment(&spec)?;
    if let Outcome::Sweep(s) = &outcome {
        if s.points.is_empty() {
            let reasons: Vec<&str> = s.skipped.iter().map(|p| p.reason.as_str()).collect();
            return Err(fronthaul::Error::Budget(format!("every point was skipped: {}", reasons.join("; "))));
        }
    }
    let dir = PathBuf::from(&spec.config.output.dir);
    for file in emit_results(&outcome, &dir)? {
        println!("{}", file.display());
    }
    Ok(())
}

fn main() -> ExitCode {
    match execute(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error [{}]: {e}", e.category());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
