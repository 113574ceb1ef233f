use std::path::PathBuf;
use std::process::ExitCode;

use andcoop_cli::experiments::version_string;
use andcoop_cli::{emit, execute, parse_file, CliError, ExperimentKind, Scenario};
use clap::{Args, Parser, Subcommand};

#[derive(Parser)]
#[command(name = "andcoop", version, about = "URLLC downlink cooperation simulator")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct RunArgs {
    /// Scenario file.
    scenario: PathBuf,
    /// Master seed, overriding [run] seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Cycles per point, overriding [run] cycles.
    #[arg(long)]
    cycles: Option<u64>,
    /// Output directory.
    #[arg(long, default_value = "andcoop-out")]
    out: PathBuf,
    /// Worker threads; defaults to one per core.
    #[arg(long)]
    workers: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment named by [experiment] kind.
    Run(RunArgs),
    /// One Monte Carlo run.
    Single(RunArgs),
    /// Sweep transmit power (or i.i.d. SNR).
    PowerSweep(RunArgs),
    /// Sweep the payload size.
    RateSweep(RunArgs),
    /// Sweep the number of devices.
    PopulationSweep(RunArgs),
    /// Diversity-multiplexing curves.
    Dmt(RunArgs),
    /// Grid search over beta and theta.
    Optimize(RunArgs),
    /// Coverage maps around a wall.
    Coverage(RunArgs),
    /// Sweep the pilot count under imperfect CSI.
    PilotTradeoff(RunArgs),
    /// Print a scenario file with every default filled in.
    Template,
}

fn load(args: &RunArgs, kind: Option<ExperimentKind>) -> Result<Scenario, CliError> {
    let mut sc = parse_file(&args.scenario)?;
    if let Some(k) = kind {
        sc.experiment.kind = k;
    }
    if let Some(s) = args.seed {
        sc.run.seed = s;
    }
    if let Some(c) = args.cycles {
        sc.run.cycles = c;
    }
    Ok(sc)
}

fn dispatch(args: &RunArgs, kind: Option<ExperimentKind>) -> Result<(), CliError> {
    let sc = load(args, kind)?;
    let summary = execute(&sc, &args.out, args.workers)?;
    for row in &summary.rows {
        let outage = row.outage.map_or("-".to_string(), |o| format!("{o:.6e}"));
        eprintln!("{:<28} outage {outage:>13} ({})", row.axis_label(), row.source.tag());
    }
    eprintln!("wrote {} files to {}", summary.files.len(), args.out.display());
    match summary.failures.into_iter().next() {
        None => Ok(()),
        Some(first) => Err(first),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Template => {
            println!("# {}\n", version_string());
            print!("{}", emit(&Scenario::default()));
            Ok(())
        }
        Command::Run(a) => dispatch(a, None),
        Command::Single(a) => dispatch(a, Some(ExperimentKind::Single)),
        Command::PowerSweep(a) => dispatch(a, Some(ExperimentKind::PowerSweep)),
        Command::RateSweep(a) => dispatch(a, Some(ExperimentKind::RateSweep)),
        Command::PopulationSweep(a) => dispatch(a, Some(ExperimentKind::PopulationSweep)),
        Command::Dmt(a) => dispatch(a, Some(ExperimentKind::Dmt)),
        Command::Optimize(a) => dispatch(a, Some(ExperimentKind::Optimize)),
        Command::Coverage(a) => dispatch(a, Some(ExperimentKind::Coverage)),
        Command::PilotTradeoff(a) => dispatch(a, Some(ExperimentKind::PilotTradeoff)),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("andcoop: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
