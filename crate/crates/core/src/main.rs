use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use jumplq::cli::{run_experiment, validate_config, Overrides, SUITES};

/// Monte Carlo and exact checks of maximal inequalities for compensated
/// random-measure integrals.
#[derive(Parser)]
#[command(name = "jumplq", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the suites enabled in a config and write reports.
    Run(RunArgs),
    /// Check a config and list every problem without running it.
    Validate {
        #[arg(long)]
        config: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    /// TOML config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Output directory.
    #[arg(long, env = "JUMPLQ_OUT", default_value = "jumplq-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    replicas: Option<usize>,
    /// Worker threads (0 = all cores).
    #[arg(long)]
    workers: Option<usize>,
    /// Run only the named suites.
    #[arg(long = "suite", num_args = 1.., value_parser = clap::builder::PossibleValuesParser::new(SUITES))]
    suites: Option<Vec<String>>,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match cli.command {
        Command::Validate { config } => match validate_config(&config) {
            Ok(diags) if diags.is_empty() => {
                println!("{}: ok", config.display());
                ExitCode::SUCCESS
            }
            Ok(diags) => {
                for d in &diags {
                    eprintln!("{d}");
                }
                ExitCode::from(2)
            }
            Err(e) => {
                eprintln!("cannot read {}: {e}", config.display());
                ExitCode::from(2)
            }
        },
        Command::Run(args) => {
            let overrides = Overrides {
                seed: args.seed,
                replicas: args.replicas,
                workers: args.workers,
                suites: args.suites,
            };
            match run_experiment(&args.config, &args.out, &overrides) {
                Ok(outcome) => {
                    let failed: Vec<_> = outcome.failures().collect();
                    for f in &failed {
                        eprintln!(
                            "FAIL {} {}: value {} bound {}",
                            f.suite,
                            f.case,
                            f.value.map_or("-".to_string(), |v| v.to_string()),
                            f.bound
                        );
                    }
                    println!(
                        "{} checks, {} failed; reports in {}",
                        outcome.checks.len(),
                        failed.len(),
                        outcome.out_dir.display()
                    );
                    ExitCode::from(outcome.exit_code())
                }
                Err(e) => {
                    eprintln!("{e}");
                    ExitCode::from(e.exit_code())
                }
            }
        }
    }
}
