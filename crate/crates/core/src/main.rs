use std::fs::File;
use std::io::{self, BufWriter};
use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;

use glasslab::config::ExperimentConfig;
use glasslab::report::{write_rows, Format};
use glasslab::run::execute;

/// Run a glasslab experiment described by a JSON config.
#[derive(Parser, Debug)]
#[command(version, about)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Master seed; overrides the config.
    #[arg(long)]
    seed: Option<u64>,
    /// Worker threads. Falls back to the config, then GLASSLAB_THREADS.
    #[arg(long)]
    threads: Option<usize>,
    /// Output file; stdout if absent from both flag and config.
    #[arg(long)]
    out: Option<PathBuf>,
    /// csv or jsonl.
    #[arg(long)]
    format: Option<Format>,
}

const EXIT_FAIL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

fn threads_from_env() -> Result<Option<usize>, String> {
    match std::env::var("GLASSLAB_THREADS") {
        Ok(v) => v
            .parse::<usize>()
            .ok()
            .filter(|n| *n > 0)
            .map(Some)
            .ok_or_else(|| format!("GLASSLAB_THREADS must be a positive integer, got {v:?}")),
        Err(_) => Ok(None),
    }
}

fn main() -> ExitCode {
    let args = Args::parse();
    let mut config = match ExperimentConfig::load(&args.config) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(seed) = args.seed {
        config.master_seed = seed;
    }
    let threads = match (args.threads, config.threads, threads_from_env()) {
        (Some(0), _, _) => {
            eprintln!("--threads must be positive");
            return ExitCode::from(EXIT_CONFIG);
        }
        (Some(t), _, _) | (None, Some(t), _) => Some(t),
        (None, None, Ok(t)) => t,
        (None, None, Err(msg)) => {
            eprintln!("{msg}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let format = args.format.unwrap_or(config.format);
    let out = args.out.clone().or_else(|| config.output.clone());

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(t) = threads {
        pool = pool.num_threads(t);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cannot start thread pool: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let execution = match pool.install(|| execute(&config)) {
        Ok(x) => x,
        Err(e) => {
            eprintln!("{e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    for note in &execution.notes {
        eprintln!("{note}");
    }
    let written = match &out {
        Some(path) => File::create(path).and_then(|f| write_rows(&execution.rows, format, BufWriter::new(f))),
        None => write_rows(&execution.rows, format, io::stdout().lock()),
    };
    if let Err(e) = written {
        eprintln!("cannot write output: {e}");
        return ExitCode::from(EXIT_FAIL);
    }
    if execution.passed() {
        ExitCode::SUCCESS
    } else {
        ExitCode::from(EXIT_FAIL)
    }
}
