use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use ergofit::cli::{emit_report, run_experiment, Experiment, ExperimentConfig};
use ergofit::Error;

/// Run an ergofit experiment from a JSON configuration.
#[derive(Debug, Parser)]
#[command(name = "ergofit", version)]
struct Args {
    /// Experiment configuration (JSON).
    #[arg(long, required_unless_present = "list_experiments")]
    config: Option<PathBuf>,
    /// Replace the configured seeds with this single seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (overrides `output_dir` in the configuration).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads (defaults to all cores).
    #[arg(long)]
    threads: Option<usize>,
    /// Print the available experiments and exit.
    #[arg(long)]
    list_experiments: bool,
}

const EXIT_VERDICT: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_BUDGET: u8 = 3;

fn main() -> ExitCode {
    let args = match Args::try_parse() {
        Ok(a) => a,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    if args.list_experiments {
        for e in Experiment::ALL {
            println!("{:<24} {}", e.name(), e.description());
        }
        return ExitCode::SUCCESS;
    }
    if let Some(t) = args.threads {
        if t == 0 || rayon::ThreadPoolBuilder::new().num_threads(t).build_global().is_err() {
            eprintln!("error: cannot start a pool of {t} threads");
            return ExitCode::from(EXIT_CONFIG);
        }
    }
    let path = args.config.expect("clap enforces --config");
    let mut cfg = match ExperimentConfig::from_path(&path) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(s) = args.seed {
        cfg.seeds = Some(vec![s]);
    }
    let out = args
        .out
        .or_else(|| cfg.output_dir.clone())
        .unwrap_or_else(|| PathBuf::from("out").join(cfg.experiment.name()));
    let report = match run_experiment(&cfg) {
        Ok(r) => r,
        Err(e @ Error::Config { .. }) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_VERDICT);
        }
    };
    if let Err(e) = emit_report(&report, &out) {
        eprintln!("error: {e}");
        return ExitCode::from(EXIT_VERDICT);
    }
    for v in &report.verdicts {
        println!("{} {}: {} ({})", if v.pass { "PASS" } else { "FAIL" }, v.id, v.criterion, v.detail);
    }
    if let Some(msg) = &report.budget_exceeded {
        eprintln!("budget exceeded: {msg}; partial report written to {}", out.display());
        return ExitCode::from(EXIT_BUDGET);
    }
    println!("report written to {}", out.display());
    if report.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_VERDICT)
    }
}
