use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use mixdyn_cli::{execute, SubcommandKind};

/// Mixup label noise, random-feature gradient-flow dynamics, teacher-student
/// experiments and Marchenko-Pastur spectra.
#[derive(Debug, Parser)]
#[command(name = "mixdyn", version)]
struct Cli {
    #[arg(value_enum)]
    command: SubcommandKind,
    /// JSON config, or a manifest.json from an earlier run.
    #[arg(long)]
    config: PathBuf,
    /// Overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, default_value = "out")]
    out: PathBuf,
}

fn configure_threads() -> Result<(), String> {
    let Ok(raw) = std::env::var("MIXDYN_THREADS") else {
        return Ok(());
    };
    let threads: usize = raw
        .trim()
        .parse()
        .map_err(|_| format!("MIXDYN_THREADS must be a positive integer, got `{raw}`"))?;
    if threads == 0 {
        return Err("MIXDYN_THREADS must be a positive integer, got `0`".into());
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build_global()
        .map_err(|e| e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Err(msg) = configure_threads() {
        eprintln!("mixdyn: {msg}");
        return ExitCode::from(2);
    }
    match execute(cli.command, &cli.config, cli.seed, &cli.out) {
        Ok(manifest) => {
            for f in &manifest.outputs {
                println!("{}", cli.out.join(f).display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("mixdyn {}: {e}", cli.command.name());
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
