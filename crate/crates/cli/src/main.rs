use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use powerpath_cli::run::{load_config, run, RunError};

/// Power-weighted shortest-path experiments driven by a JSON config.
#[derive(Parser, Debug)]
#[command(name = "powerpath", version)]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Overrides the config output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Worker threads; 0 picks the machine default.
    #[arg(long, default_value_t = 0)]
    threads: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(&cli) {
        Ok(summary) => {
            print!("{summary}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("{}", e.to_json());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}

fn execute(cli: &Cli) -> Result<String, RunError> {
    if cli.threads > 0 {
        rayon::ThreadPoolBuilder::new()
            .num_threads(cli.threads)
            .build_global()
            .map_err(|e| RunError::Runtime(e.to_string()))?;
    }
    let mut cfg = load_config(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(out) = &cli.out {
        cfg.output_dir = out.clone();
    }
    let outcome = run(&cfg)?;
    Ok(format!(
        "{}wrote {}\n",
        outcome.summary,
        outcome.out_dir.display()
    ))
}
