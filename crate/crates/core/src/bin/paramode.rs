use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use paramode::config::{ConfigError, ScenarioConfig, ScenarioKind};
use paramode::scenario::{run_checked, RunError, RunOptions};

#[derive(Parser)]
#[command(name = "paramode", version, about = "Parametric multimode resonator simulator and fitter")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario configuration (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads for sweeps; defaults to all cores.
    #[arg(long)]
    threads: Option<usize>,
    /// Integration step for time-domain scenarios, in seconds.
    #[arg(long)]
    dt_override: Option<f64>,
}

#[derive(Subcommand)]
enum Command {
    /// Flux dependence of the mode frequencies.
    FluxArch(RunArgs),
    /// Steady-state reflection spectrum.
    Spectrum(RunArgs),
    /// |r_c| over modulation and probe frequency, seen from both modes of a pair.
    SplittingMap(RunArgs),
    /// Spectra over the modulation amplitude, with per-column and scaling fits.
    SplittingSweep(RunArgs),
    /// Pulse absorption and beating in the time domain.
    Beating(RunArgs),
    /// Storage and retrieval over a range of storage times.
    Memory(RunArgs),
    /// Fit a model to measured or synthetic data.
    Fit(RunArgs),
    /// Check a configuration without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

fn report(e: &RunError) -> ExitCode {
    match e {
        RunError::Config(ConfigError::Invalid(v)) => {
            eprintln!("error: invalid configuration");
            for v in v {
                eprintln!("  {v}");
            }
        }
        other => eprintln!("error: {other}"),
    }
    ExitCode::from(e.exit_code() as u8)
}

fn run(kind: ScenarioKind, args: RunArgs) -> ExitCode {
    let cfg = match ScenarioConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => return report(&e.into()),
    };
    let opts = RunOptions { out_dir: args.out, threads: args.threads, dt_override: args.dt_override };
    match run_checked(&cfg, kind, &opts) {
        Ok((dir, manifest)) => {
            for w in &manifest.warnings {
                eprintln!("warning: {w}");
            }
            println!("wrote {} files to {}", manifest.files.len(), dir.display());
            ExitCode::SUCCESS
        }
        Err(e) => report(&e),
    }
}

fn validate(path: PathBuf) -> ExitCode {
    let text = match std::fs::read_to_string(&path) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("error: cannot read {}: {e}", path.display());
            return ExitCode::from(2);
        }
    };
    let base = path.parent().map(PathBuf::from).unwrap_or_default();
    match ScenarioConfig::parse(&text, &base) {
        Ok(cfg) => {
            let text = serde_json::to_string_pretty(&cfg.normalized()).expect("config serializes");
            // a closed pipe is not an error worth reporting
            let _ = writeln!(std::io::stdout(), "OK\n{text}");
            ExitCode::SUCCESS
        }
        Err(e) => report(&e.into()),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::FluxArch(a) => run(ScenarioKind::FluxArch, a),
        Command::Spectrum(a) => run(ScenarioKind::Spectrum, a),
        Command::SplittingMap(a) => run(ScenarioKind::SplittingMap, a),
        Command::SplittingSweep(a) => run(ScenarioKind::SplittingSweep, a),
        Command::Beating(a) => run(ScenarioKind::Beating, a),
        Command::Memory(a) => run(ScenarioKind::Memory, a),
        Command::Fit(a) => run(ScenarioKind::Fit, a),
        Command::Validate { config } => validate(config),
    }
}
