use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use grkan_bench::denoise::{run_denoise, DenoiseOptions, DENOISE_STEPS};
use grkan_bench::io::write_atomic;
use grkan_bench::report::PropertyCheck;
use grkan_bench::table1::run_table1;
use grkan_bench::{io, Result};
use grkan_core::denoise::DenoiseDataConfig;
use grkan_core::selftest;
use grkan_core::signal::{generate_signal, SignalConfig};
use grkan_core::train::{EarlyStop, TrainConfig};

/// Exit status when a suite ran but an acceptance property failed.
const EXIT_FAILED: u8 = 1;
/// Exit status when a suite could not run.
const EXIT_ERROR: u8 = 3;

#[derive(Parser)]
#[command(name = "grkan-bench", version, about = "Signal-fitting and denoising benchmarks")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Train the six model families on the synthetic signal.
    Table1 {
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = 300_000)]
        steps: usize,
        /// Stop a run once 10000 steps improve the best loss by less than 1%.
        #[arg(long)]
        early_stop: bool,
        #[arg(long, default_value = "out/table1")]
        out: PathBuf,
    },
    /// Compare ReLU and rational-activated denoisers.
    Denoise {
        #[arg(long, value_delimiter = ',', default_values_t = [2usize])]
        depths: Vec<usize>,
        #[arg(long, default_value_t = 5.0)]
        snr_db: f64,
        #[arg(long, value_delimiter = ',', default_values_t = [0u64, 1, 2])]
        seeds: Vec<u64>,
        #[arg(long, default_value_t = DENOISE_STEPS)]
        steps: usize,
        /// Number of clean signals, split 80/20 into train and held-out.
        #[arg(long, default_value_t = DenoiseDataConfig::default().pairs)]
        pairs: usize,
        #[arg(long, default_value = "out/denoise")]
        out: PathBuf,
    },
    /// Export the synthetic signal as CSV.
    Signal {
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "signal.csv")]
        out: PathBuf,
    },
    /// Run every invariant check.
    Selftest,
}

fn print_checks(checks: &[PropertyCheck]) -> bool {
    for c in checks {
        println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    checks.iter().all(|c| c.passed)
}

fn run(cmd: Command) -> Result<bool> {
    match cmd {
        Command::Table1 {
            seeds,
            steps,
            early_stop,
            out,
        } => {
            let train = TrainConfig {
                steps,
                early_stop: early_stop.then(EarlyStop::default),
                ..TrainConfig::default()
            };
            let report = run_table1(&seeds, &train, &out)?;
            for s in &report.summary {
                let mse = s.median_mse.map(|v| format!("{v:.5}")).unwrap_or_else(|| "diverged".into());
                println!("{:<6} params {:>4}  median mse {mse}", s.method, s.params);
            }
            println!("report written to {}", out.join("report.json").display());
            Ok(print_checks(&report.checks))
        }
        Command::Denoise {
            depths,
            snr_db,
            seeds,
            steps,
            pairs,
            out,
        } => {
            let opts = DenoiseOptions {
                depths,
                seeds,
                data: DenoiseDataConfig {
                    pairs,
                    snr_db,
                    ..DenoiseDataConfig::default()
                },
                train: TrainConfig {
                    steps,
                    ..DenoiseOptions::default().train
                },
            };
            let report = run_denoise(&opts, &out)?;
            println!("noisy input l1 {:.5}", report.noisy_baseline_l1);
            for d in &report.depths {
                for v in &d.variants {
                    let l1 = v.median_held_out_l1.map(|v| format!("{v:.5}")).unwrap_or_else(|| "diverged".into());
                    println!("{:<18} params {:>6}  median held-out l1 {l1}", v.label, v.params);
                }
            }
            println!("report written to {}", out.join("report.json").display());
            Ok(print_checks(&report.checks))
        }
        Command::Signal { seed, out } => {
            let signal = generate_signal(&SignalConfig::with_seed(seed))?;
            let rows = signal.time.iter().zip(&signal.values).map(|(t, v)| [*t, *v]);
            write_atomic(&out, io::csv(&["time_s", "value"], rows).as_bytes())?;
            println!("{} samples written to {}", signal.len(), out.display());
            Ok(true)
        }
        Command::Selftest => {
            let checks: Vec<PropertyCheck> = selftest::run_all()
                .into_iter()
                .map(|c| PropertyCheck::new(c.name, c.passed, c.detail))
                .collect();
            Ok(print_checks(&checks))
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(EXIT_FAILED),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(EXIT_ERROR)
        }
    }
}
