use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use leolat_cli::{stages, CliError, ExperimentConfig};

#[derive(Parser)]
#[command(name = "leolat", version, about = "Satellite vs terrestrial latency experiments for relay overlays")]
struct Cli {
    /// Experiment config file.
    #[arg(long, global = true, default_value = "leolat.conf")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Overrides the output directory.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker threads for `simulate` (default: all cores).
    #[arg(long, global = true)]
    jobs: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build speed models and the constellation snapshot from the inputs.
    Ingest,
    /// Simulate satellite and terrestrial series for every circuit hop.
    Simulate,
    /// Calibrate simulated percentiles against measurements.
    Calibrate,
    /// Evaluate dual-homing with every relay equipped.
    Dualhome,
    /// Evaluate each deployment scenario and size.
    DeployEval,
    /// Visibility of the satellite operator as deployment grows.
    Adversary,
    /// Tail-latency co-occurrence between interfaces.
    Correlate,
    /// Reduction tables and plot data.
    Report,
}

fn run(cli: Cli) -> Result<(), CliError> {
    let cfg = ExperimentConfig::load(&cli.config, cli.seed, cli.out)?;
    log::info!("config hash {} seed {}", cfg.hash(), cfg.seed);
    match cli.command {
        Command::Ingest => println!("{}", stages::ingest(&cfg)?),
        Command::Simulate => println!("{}", stages::simulate(&cfg, cli.jobs)?),
        Command::Calibrate => {
            let used = stages::calibrate(&cfg)?;
            if used.is_empty() {
                println!("no error model; calibrated tables equal the raw ones");
            }
            for (iface, n) in used {
                println!("{iface} error model from {n} series");
            }
        }
        Command::Dualhome => {
            let m = stages::dualhome(&cfg)?;
            println!(
                "circuits reduced: {:.1}%, mean change {}",
                m.fraction_reduced * 100.0,
                m.mean_change_pct.map_or("n/a".into(), |x| format!("{x:.2}%"))
            );
        }
        Command::DeployEval => {
            for f in stages::deploy_eval(&cfg)? {
                println!("{f}");
            }
        }
        Command::Adversary => println!("{} curve points", stages::adversary(&cfg)?),
        Command::Correlate => println!("{} pairs with a defined tail correlation", stages::correlate(&cfg)?),
        Command::Report => stages::report(&cfg)?,
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
