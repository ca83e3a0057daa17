use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use isac_core::{
    default_plot_specs, emit_plots, read_csv, run_sensing, run_trial, sweep, write_csv, IsacError, ScenarioConfig,
    SweepAxis, SweepPlan,
};

/// Semi-passive IRS localization and beamforming simulator.
#[derive(Parser, Debug)]
#[command(name = "isac", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// One localization trial (block 1 only), printed as JSON.
    Sense(Common),
    /// One full protocol trial, printed as JSON.
    Trial(Common),
    /// Monte Carlo sweep over one scenario parameter, written as CSV.
    Sweep(SweepArgs),
    /// Renders a sweep CSV as SVG figures.
    Plot(PlotArgs),
}

#[derive(Args, Debug)]
struct Common {
    /// TOML scenario file. Built-in defaults when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Per-trial seed. Defaults to the first trial seed of the config's master seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: Option<PathBuf>,
    /// Master seed, overriding the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Trials per sweep value, overriding the config.
    #[arg(long)]
    trials: Option<usize>,
    /// rho, tau1, users, m_semi, m_reflect, tau1_over_t1 or t1_over_t.
    #[arg(long, value_parser = parse_axis)]
    axis: Option<SweepAxis>,
    /// Output directory; the dataset is written to `<out>/<axis>.csv`.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Worker threads. Results do not depend on this.
    #[arg(long, default_value_t = default_workers())]
    workers: usize,
}

#[derive(Args, Debug)]
struct PlotArgs {
    /// Dataset written by `sweep`.
    input: PathBuf,
    /// Directory for the SVG files.
    #[arg(long, default_value = "out")]
    out: PathBuf,
    /// Axis name used for the x label.
    #[arg(long, value_parser = parse_axis)]
    axis: Option<SweepAxis>,
}

fn parse_axis(s: &str) -> Result<SweepAxis, String> {
    SweepAxis::parse(s).map_err(|e| e.to_string())
}

fn default_workers() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

fn load(path: Option<&Path>) -> Result<ScenarioConfig, IsacError> {
    match path {
        Some(p) => ScenarioConfig::load(p),
        None => Ok(ScenarioConfig::default()),
    }
}

fn print_json<T: serde::Serialize>(value: &T) -> Result<(), IsacError> {
    let text = serde_json::to_string_pretty(value).map_err(|e| IsacError::Io(e.to_string()))?;
    match writeln!(io::stdout().lock(), "{text}") {
        Err(e) if e.kind() != io::ErrorKind::BrokenPipe => Err(e.into()),
        _ => Ok(()),
    }
}

fn run(cli: Cli) -> Result<(), IsacError> {
    match cli.command {
        Command::Sense(a) => {
            let config = load(a.config.as_deref())?;
            let scenario = config.build()?;
            let seed = a.seed.unwrap_or_else(|| isac_core::trial_seed(config.seed, 0));
            let record = run_sensing(&scenario, seed);
            print_json(&record)?;
            match record.failure {
                Some(f) => Err(IsacError::InvalidInput(f)),
                None => Ok(()),
            }
        }
        Command::Trial(a) => {
            let config = load(a.config.as_deref())?;
            let scenario = config.build()?;
            let seed = a.seed.unwrap_or_else(|| isac_core::trial_seed(config.seed, 0));
            let record = run_trial(&scenario, seed);
            print_json(&record)?;
            match record.failure {
                Some(f) => Err(IsacError::InvalidInput(f)),
                None => Ok(()),
            }
        }
        Command::Sweep(a) => {
            let mut config = load(a.config.as_deref())?;
            if let Some(s) = a.seed {
                config.seed = s;
            }
            let trials = a.trials.unwrap_or(config.trials);
            let plan = SweepPlan::from_config(&config, a.axis, trials, a.workers)?;
            let rows = sweep(&config, &plan)?;
            std::fs::create_dir_all(&a.out)?;
            let path = a.out.join(format!("{}.csv", plan.axis.name()));
            let mut w = BufWriter::new(File::create(&path)?);
            write_csv(&rows, &mut w)?;
            w.flush()?;
            eprintln!("wrote {} rows to {}", rows.len(), path.display());
            Ok(())
        }
        Command::Plot(a) => {
            let rows = read_csv(BufReader::new(File::open(&a.input)?))?;
            let label = a.axis.map_or_else(|| "sweep value".to_string(), |x| x.name().to_string());
            for p in emit_plots(&rows, &default_plot_specs(), &label, &a.out)? {
                eprintln!("wrote {}", p.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let _ = writeln!(io::stderr(), "error: {e}");
            ExitCode::FAILURE
        }
    }
}
