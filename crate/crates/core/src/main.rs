use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fedspectrum::cost::{attack_cost, CostScenarioFile};
use fedspectrum::harness::{emit_report, emit_sweep, load_config, run_experiment, run_seed_sweep};
use fedspectrum::Result;

#[derive(Parser)]
#[command(
    name = "fedspectrum",
    version,
    about = "Poisoning experiments across fake, hybrid and compromised adversaries"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run one seed and write rounds.csv, clean_rounds.csv and summary.json.
    Run {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run every configured seed and write per-seed reports plus a summary.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Print the attack cost of each scenario in a JSON scenario file.
    Cost {
        #[arg(long)]
        config: PathBuf,
    },
}

fn run(cli: Cli) -> Result<()> {
    match cli.command {
        Command::Run { config, seed, out } => {
            let cfg = load_config(&config)?;
            let report = run_experiment(&cfg, seed)?;
            emit_report(&report, &out)?;
            println!(
                "seed {seed}: max accuracy {:.4}, clean {:.4}, impact {:.4}, cost {}",
                report.max_test_accuracy, report.clean_max_test_accuracy, report.attack_impact, report.attack_cost
            );
        }
        Command::Sweep { config, out } => {
            let cfg = load_config(&config)?;
            let sweep = run_seed_sweep(&cfg)?;
            emit_sweep(&sweep, &out)?;
            for s in &sweep.per_seed {
                println!(
                    "seed {}: max accuracy {:.4}, clean {:.4}, impact {:.4}",
                    s.seed, s.max_test_accuracy, s.clean_max_test_accuracy, s.attack_impact
                );
            }
            println!(
                "median impact {:.4} (std {:.4}), median max accuracy {:.4}",
                sweep.attack_impact.median, sweep.attack_impact.std, sweep.max_test_accuracy.median
            );
        }
        Command::Cost { config } => {
            let file: CostScenarioFile = serde_json::from_str(&std::fs::read_to_string(&config)?)?;
            file.params.validate()?;
            println!("{:<24} {:>8} {:>8} {:>12}", "scenario", "m'", "m", "cost");
            for s in &file.scenarios {
                let model = s.model();
                println!(
                    "{:<24} {:>8} {:>8} {:>12}",
                    s.name,
                    model.n_compromised,
                    model.n_malicious(),
                    attack_cost(&model, &file.params)
                );
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
