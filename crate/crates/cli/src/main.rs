//! `privcap`: batch runner for the privcap-core experiments.

mod commands;
mod config;
mod fail;
mod output;

use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::Parser;
use serde_json::json;

use config::ExperimentConfig;
use fail::Failure;
use output::Outputs;

#[derive(Parser, Debug)]
#[command(name = "privcap", version, about = "Run a privcap experiment from a JSON config")]
struct Cli {
    /// Experiment config (JSON).
    #[arg(long, value_name = "PATH")]
    config: PathBuf,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory; overrides the config `output`.
    #[arg(long, value_name = "DIR")]
    out: Option<PathBuf>,
    /// Overrides the trial count of simulate, covering and chernoff runs.
    #[arg(long)]
    trials: Option<u64>,
    /// Worker threads; results do not depend on it.
    #[arg(long)]
    threads: Option<usize>,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let first = e.to_string().lines().next().unwrap_or("invalid arguments").to_string();
            eprintln!("{}", Failure::config(first.trim_start_matches("error: ")));
            return ExitCode::from(2);
        }
    };
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("{f}");
            ExitCode::from(f.code.exit_status() as u8)
        }
    }
}

fn run(cli: &Cli) -> Result<(), Failure> {
    let start = Instant::now();
    let mut cfg = ExperimentConfig::load(&cli.config)?;
    if let Some(seed) = cli.seed {
        cfg.seed = seed;
    }
    if let Some(t) = cli.trials {
        commands::override_trials(&mut cfg, t)?;
    }
    let out_dir = cli
        .out
        .clone()
        .or_else(|| cfg.output.clone())
        .ok_or_else(|| Failure::config("no output directory: set `output` or pass --out"))?;
    if let Some(n) = cli.threads {
        if n == 0 {
            return Err(Failure::config("--threads must be at least 1"));
        }
        privcap_core::par::init_threads(n).map_err(Failure::config)?;
    }
    let (per_input, inputs_sha256) = cfg.hash_inputs()?;
    let config_sha256 = cfg.hash(&inputs_sha256);

    let artifacts = commands::run(&cfg)?;
    let mut out = Outputs::default();
    commands::render(artifacts, &cfg, &config_sha256, &mut out);
    let manifest = json!({
        "command": cfg.command,
        "config_sha256": config_sha256,
        "inputs": per_input,
        "inputs_sha256": inputs_sha256,
        "seed": cfg.seed,
        "files": out.names(),
        "versions": {
            "privcap": env!("CARGO_PKG_VERSION"),
            "privcap-core": env!("CARGO_PKG_VERSION"),
        },
        "parallel": privcap_core::par::is_parallel(),
        "threads": cli.threads,
        "wall_time_seconds": start.elapsed().as_secs_f64(),
    });
    out.add("manifest.json", output::to_json(&manifest));
    out.commit(&out_dir)
        .map_err(|e| Failure::output(format!("writing {}: {e}", out_dir.display())))
}
