use std::io;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use offload::cli::{
    cmd_run, cmd_sweep, parse_rates, parse_seeds, parse_strategy_list, resolve_scenario, CliError, RunArgs, SweepArgs,
};

/// Cloud-edge offloading simulator.
#[derive(Parser)]
#[command(name = "offload-sim", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ScenarioArg {
    /// Scenario TOML file; defaults to $OFFLOAD_SCENARIO, then the desk-scale scenario.
    #[arg(long, env = "OFFLOAD_SCENARIO")]
    scenario: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one simulation and write a CSV row.
    Run {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// cloud-edge, greedy, local, edge, cloud or random.
        #[arg(long)]
        strategy: Option<String>,
        #[arg(long)]
        seed: Option<u64>,
        /// Append the row here instead of printing it.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Run a rates × strategies × seeds grid.
    Sweep {
        #[command(flatten)]
        scenario: ScenarioArg,
        /// `start:end:step` or a comma list.
        #[arg(long)]
        rates: Option<String>,
        /// Comma list, or `all`.
        #[arg(long)]
        strategies: Option<String>,
        /// `a..b` or a comma list.
        #[arg(long)]
        seeds: Option<String>,
        /// Detail CSV; the summary goes to `<stem>_summary.csv`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Worker threads (0 = one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
    /// Check a scenario file and exit.
    Validate {
        #[command(flatten)]
        scenario: ScenarioArg,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}

fn execute(command: Command) -> Result<(), CliError> {
    match command {
        Command::Run {
            scenario,
            strategy,
            seed,
            out,
        } => {
            let sc = resolve_scenario(scenario.scenario.as_deref())?;
            let (_, summary) = cmd_run(&sc, &RunArgs { strategy, seed, out }, &mut io::stdout())?;
            eprintln!("{summary}");
        }
        Command::Sweep {
            scenario,
            rates,
            strategies,
            seeds,
            out,
            jobs,
        } => {
            let sc = resolve_scenario(scenario.scenario.as_deref())?;
            let args = SweepArgs {
                rates: rates.as_deref().map(parse_rates).transpose().map_err(CliError::Usage)?,
                strategies: strategies.as_deref().map(parse_strategy_list),
                seeds: seeds.as_deref().map(parse_seeds).transpose().map_err(CliError::Usage)?,
                out,
                jobs,
            };
            let done = cmd_sweep(&sc, &args)?;
            eprintln!(
                "{} runs; detail {}, summary {}",
                done.rows.len(),
                done.detail_path.display(),
                done.summary_path.display()
            );
        }
        Command::Validate { scenario } => {
            let sc = resolve_scenario(scenario.scenario.as_deref())?;
            eprintln!(
                "ok: {} devices, {} edges, {} slots, arrival rate {}",
                sc.config.num_devices, sc.config.num_edges, sc.config.num_slots, sc.config.arrival_rate
            );
        }
    }
    Ok(())
}
