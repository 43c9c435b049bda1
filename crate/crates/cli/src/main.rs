use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand};
use mixred_cli::check::run_checks;
use mixred_cli::codec::{compress, decompress};
use mixred_cli::config::ExperimentConfig;
use mixred_cli::run::{bounds_csv, run_counterexample, run_series, sig};

/// Bayes mixture redundancy experiments.
#[derive(Parser)]
#[command(name = "mixred", version)]
struct Cli {
    /// Worker threads; results do not depend on this.
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Common {
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = ".")]
    out: PathBuf,
}

#[derive(Args)]
struct Codec {
    #[arg(long)]
    config: PathBuf,
    input: PathBuf,
    output: PathBuf,
}

#[derive(Subcommand)]
enum Command {
    /// Redundancy series with bounds and gaps: redundancy.csv, gap_report.json.
    Redundancy(Common),
    /// Bound components over the grid: bound.csv.
    Bound(Common),
    /// Gap report only, also printed to stdout.
    Gap(Common),
    /// `Dₙ − ½ ln(n/2π)` with a divergence flag: counterexample.csv, counterexample.json.
    Counterexample(Common),
    Compress(Codec),
    Decompress(Codec),
    /// Runs the built-in invariant suite.
    Check,
}

/// Exit status for a failed trend or invariant check.
const TREND_FAILURE: u8 = 2;

fn load(c: &Common) -> Result<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(&c.config)?;
    if let Some(seed) = c.seed {
        cfg.seed = seed;
    }
    fs::create_dir_all(&c.out).with_context(|| format!("creating {}", c.out.display()))?;
    Ok(cfg)
}

fn write(dir: &Path, name: &str, text: &str) -> Result<()> {
    let path = dir.join(name);
    fs::write(&path, text).with_context(|| format!("writing {}", path.display()))
}

fn trend_status(failures: &[String]) -> ExitCode {
    for f in failures {
        eprintln!("trend check failed: {f}");
    }
    if failures.is_empty() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(TREND_FAILURE)
    }
}

fn run(cli: Cli) -> Result<ExitCode> {
    if let Some(n) = cli.threads {
        rayon::ThreadPoolBuilder::new().num_threads(n).build_global()?;
    }
    match cli.command {
        Command::Redundancy(c) => {
            let cfg = load(&c)?;
            let s = run_series(&cfg)?;
            write(&c.out, "redundancy.csv", &s.to_csv())?;
            write(&c.out, "gap_report.json", &s.report_json())?;
            Ok(trend_status(&s.trend_failures(&cfg)))
        }
        Command::Gap(c) => {
            let cfg = load(&c)?;
            let s = run_series(&cfg)?;
            let json = s.report_json();
            print!("{json}");
            write(&c.out, "gap_report.json", &json)?;
            Ok(trend_status(&s.trend_failures(&cfg)))
        }
        Command::Bound(c) => {
            let cfg = load(&c)?;
            write(&c.out, "bound.csv", &bounds_csv(&cfg)?)?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Counterexample(c) => {
            let cfg = load(&c)?;
            let s = run_counterexample(&cfg)?;
            write(&c.out, "counterexample.csv", &s.to_csv())?;
            let json = serde_json::json!({
                "flag": s.flag,
                "excess": s.excess.iter().map(|&x| sig(x)).collect::<Vec<_>>(),
            });
            write(
                &c.out,
                "counterexample.json",
                &(serde_json::to_string_pretty(&json)? + "\n"),
            )?;
            println!("{}", serde_json::to_value(s.flag)?.as_str().unwrap_or_default());
            Ok(ExitCode::SUCCESS)
        }
        Command::Compress(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let input = fs::read(&c.input).with_context(|| format!("reading {}", c.input.display()))?;
            let (bytes, stats) = compress(&cfg, &input)?;
            fs::write(&c.output, bytes).with_context(|| format!("writing {}", c.output.display()))?;
            println!("payload_bits {}", stats.payload_bits);
            println!("model_log_loss_bits {:.6}", stats.model_bits);
            Ok(ExitCode::SUCCESS)
        }
        Command::Decompress(c) => {
            let cfg = ExperimentConfig::load(&c.config)?;
            let input = fs::read(&c.input).with_context(|| format!("reading {}", c.input.display()))?;
            let bytes = decompress(&cfg, &input)?;
            fs::write(&c.output, bytes).with_context(|| format!("writing {}", c.output.display()))?;
            Ok(ExitCode::SUCCESS)
        }
        Command::Check => {
            let (lines, ok) = run_checks();
            for l in lines {
                println!("{l}");
            }
            Ok(if ok {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(TREND_FAILURE)
            })
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
