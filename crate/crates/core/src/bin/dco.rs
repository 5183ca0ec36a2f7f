//! Command-line front end: `train`, `sweep`, `compare` and `check`.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use dco_core::config::{load_run_config, SweepSpec};
use dco_core::experiment::{compare_to_file, sweep_to_dir, train_to_dir};
use dco_core::trainer::compute_metrics;
use dco_core::verification::{run_checks, write_results_csv, CheckOptions};

#[derive(Parser)]
#[command(name = "dco", version, about = "Distortion-constrained rate/distortion training")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train one configuration and write run.csv and summary.csv.
    Train {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Override the seed in the config file.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run a sweep and write per-run outputs plus frontier.csv.
    Sweep {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Also write SVG plots of the frontier and multiplier trajectories.
        #[arg(long)]
        plot: bool,
        /// Maximum concurrent runs.
        #[arg(long, default_value_t = 1)]
        jobs: usize,
        /// Repeat the sweep for this many consecutive seeds, one `seed_N`
        /// directory each.
        #[arg(long, default_value_t = 1)]
        seeds: u64,
    },
    /// Align two sweep output directories and write comparison.csv.
    Compare {
        a: PathBuf,
        b: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
    /// Run gradient, oracle, multiplier and convergence checks.
    Check {
        /// Write one CSV row per check.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturb the analytic distortion gradient of a model (negative test).
        #[arg(long, hide = true)]
        corrupt_gradient: Option<String>,
    },
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn run(cli: Cli) -> dco_core::Result<ExitCode> {
    match cli.command {
        Command::Train { config, out, seed } => {
            let mut cfg = load_run_config(&config)?;
            if let Some(s) = seed {
                cfg.seed = s;
            }
            let record = train_to_dir(&cfg, &out)?;
            let m = compute_metrics(&record)?;
            println!(
                "method={} rate={:.6} distortion={:.6} psnr={:.3} multiplier={:.6} diverged={}",
                record.method,
                m.rate,
                m.distortion,
                m.psnr,
                record.final_summary.weight,
                record.flags.diverged
            );
            if let Some(g) = m.gap {
                println!("gap={g:+.5} achieved={}", record.flags.target_achieved.unwrap_or(false));
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Sweep {
            config,
            out,
            seed,
            plot,
            jobs,
            seeds,
        } => {
            let mut spec = SweepSpec::load(&config)?;
            let first = seed.unwrap_or(spec.run_config(0)?.seed);
            for s in first..first + seeds.max(1) {
                spec.set_seed(s);
                let dir = if seeds > 1 { out.join(format!("seed_{s}")) } else { out.clone() };
                let result = sweep_to_dir(&spec, &dir, jobs, plot)?;
                for (p, row) in result.points.iter().zip(result.frontier()) {
                    println!(
                        "{}{:>12} rate={:.5} distortion={:.6} multiplier={:.4} achieved={}",
                        if seeds > 1 { format!("seed={s} ") } else { String::new() },
                        p.label(),
                        row.rate,
                        row.distortion,
                        row.multiplier_final,
                        row.achieved.map(|a| a.to_string()).unwrap_or_else(|| "na".into())
                    );
                }
            }
            Ok(ExitCode::SUCCESS)
        }
        Command::Compare { a, b, out } => {
            let report = compare_to_file(&a, &b, &out)?;
            println!(
                "{} rows, {} pointwise",
                report.rows.len(),
                report.pointwise_rows().count()
            );
            Ok(ExitCode::SUCCESS)
        }
        Command::Check {
            out,
            seed,
            corrupt_gradient,
        } => {
            let options = CheckOptions {
                seed,
                corrupt_gradient,
            };
            let results = run_checks(&options)?;
            let mut failed = 0;
            for r in &results {
                println!("{r}");
                if !r.passed {
                    failed += 1;
                }
            }
            if let Some(path) = out {
                write_results_csv(&path, &results)?;
            }
            println!("{} checks, {} failed", results.len(), failed);
            Ok(if failed == 0 {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            })
        }
    }
}
