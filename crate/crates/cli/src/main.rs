use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use cwfsim::{parse_config_with, resolve_out_dir, run, Overrides, Preset, OUT_DIR_ENV};

#[derive(Parser)]
#[command(name = "cwfsim", version, about = "Conditional-wave-function transport experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a config file.
    Run {
        config: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory; defaults to the config value, then $CWFSIM_OUT_DIR.
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long, value_enum)]
        preset: Option<Preset>,
        /// Worker threads for the parallel parts of the run.
        #[arg(long)]
        threads: Option<usize>,
    },
}

fn main() -> ExitCode {
    let Command::Run {
        config,
        seed,
        out,
        preset,
        threads,
    } = Cli::parse().command;

    let text = match std::fs::read_to_string(&config) {
        Ok(t) => t,
        Err(e) => {
            eprintln!("cwfsim: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let overrides = Overrides {
        seed,
        preset,
        output_dir: out,
    };
    let resolved = match parse_config_with(&text, &overrides) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("cwfsim: {}: {e}", config.display());
            return ExitCode::from(2);
        }
    };
    let env = std::env::var(OUT_DIR_ENV).ok();
    let out_dir = resolve_out_dir(&resolved.config, env.as_deref());

    let mut pool = rayon::ThreadPoolBuilder::new();
    if let Some(n) = threads {
        pool = pool.num_threads(n);
    }
    let pool = match pool.build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("cwfsim: thread pool: {e}");
            return ExitCode::from(2);
        }
    };
    match pool.install(|| run(&resolved, &out_dir)) {
        Ok(outcome) => {
            for check in &outcome.manifest.invariants {
                let status = if check.pass { "ok" } else { "FAILED" };
                eprintln!("cwfsim: {:<28} {status:<6} {}", check.name, check.detail);
            }
            eprintln!("cwfsim: wrote {}", outcome.out_dir.display());
            if outcome.passed() {
                ExitCode::SUCCESS
            } else {
                ExitCode::FAILURE
            }
        }
        Err(e) => {
            eprintln!("cwfsim: {e}");
            ExitCode::from(2)
        }
    }
}
