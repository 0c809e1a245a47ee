use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use tmc_harness::checks::{verify_suite, Fault};
use tmc_harness::config::{Limits, SweepConfig};
use tmc_harness::cost::{run_cost_benchmark, write_cost_csv, DEFAULT_HIDDEN};
use tmc_harness::sweep::{dump_graphs, run_sweep_to_csv};
use tmc_harness::HarnessError;

/// Experiment runner for the TMC marginal-likelihood estimators.
#[derive(Debug, Parser)]
#[command(name = "tmc", version)]
struct Cli {
    /// Worker threads (defaults to the number of CPUs).
    #[arg(long, global = true, env = "TMC_THREADS")]
    threads: Option<usize>,
    /// Base seed: the first sampling seed of sweeps, the network seed of
    /// bench-cost and the check seed of verify.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Print the factor graph of each TMC method to stderr before running.
    #[arg(long, global = true)]
    dump_graph: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run the estimator grids of a config file and write one CSV row per estimate.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        /// Output CSV; overrides `out` in the config.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Allow IWAE sample counts up to one million.
        #[arg(long)]
        large_iwae: bool,
    },
    /// Time TMC on a layered network model for each K and write `K,elapsed_ns`.
    BenchCost {
        /// Latent layer widths, e.g. `8,8,8,8,8`.
        #[arg(long, value_delimiter = ',', required = true)]
        layers: Vec<usize>,
        /// Sample counts per layer.
        #[arg(long = "k", value_delimiter = ',', required = true)]
        ks: Vec<usize>,
        /// Repetitions per K; the median is reported.
        #[arg(long, default_value_t = 5)]
        reps: usize,
        /// Hidden width of the conditional networks.
        #[arg(long, default_value_t = DEFAULT_HIDDEN)]
        hidden: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run the oracle checks and report PASS/FAIL per check.
    Verify {
        /// Only run checks whose name contains this string.
        #[arg(long)]
        filter: Option<String>,
        /// Corrupt one factor's normalisation to confirm the checks notice.
        #[arg(long, hide = true)]
        inject_fault: bool,
    },
}

fn run(cli: Cli) -> Result<bool, HarnessError> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Sweep {
            config,
            out,
            large_iwae,
        } => {
            let cfg = SweepConfig::load(&config, Limits { large_iwae })?;
            let out = out.or_else(|| cfg.out.clone()).ok_or(HarnessError::NoOutput)?;
            if cli.dump_graph {
                for exp in &cfg.experiments {
                    eprint!("{}", dump_graphs(exp, cli.seed)?);
                }
            }
            let records = run_sweep_to_csv(&cfg, cli.seed, &out)?;
            eprintln!("wrote {} records to {}", records.len(), out.display());
            Ok(true)
        }
        Command::BenchCost {
            layers,
            ks,
            reps,
            hidden,
            out,
        } => {
            let records = run_cost_benchmark(&layers, &ks, reps, hidden, cli.seed.unwrap_or(0))?;
            write_cost_csv(&out, &records)?;
            for r in &records {
                eprintln!("K={} median {:.3} ms", r.k, r.elapsed_ns as f64 / 1e6);
            }
            Ok(true)
        }
        Command::Verify { filter, inject_fault } => {
            let fault = if inject_fault { Fault::MisnormalisedFactor } else { Fault::None };
            let results = verify_suite(filter.as_deref(), cli.seed.unwrap_or(0), fault);
            for r in &results {
                println!("{r}");
            }
            let failed = results.iter().filter(|r| !r.passed).count();
            println!("{} checks, {failed} failed", results.len());
            Ok(failed == 0 && !results.is_empty())
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}
