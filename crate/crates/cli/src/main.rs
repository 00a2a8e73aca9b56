use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Result};
use clap::{Parser, Subcommand};
use ddgi_cli::{load_config, run, RunOptions};

#[derive(Parser)]
#[command(
    name = "ddgi",
    version,
    about = "Probe-based diffuse global illumination renderer"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Replay a scene config and write frames plus statistics.
    Render {
        /// Config file, or `builtin:<name>`.
        config: PathBuf,
        #[arg(long)]
        frames: Option<u64>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        dump_atlas: bool,
        #[arg(long)]
        dump_states: bool,
        /// Path-trace a reference every K frames, as `every=K`.
        #[arg(long, value_name = "every=K", value_parser = parse_every)]
        compare_oracle: Option<u64>,
        /// Comma-separated features to turn off.
        #[arg(long, value_delimiter = ',')]
        disable: Vec<String>,
        /// Worker threads (defaults to all cores).
        #[arg(long)]
        threads: Option<usize>,
    },
    /// Print a built-in scene config.
    Show { name: String },
}

fn parse_every(s: &str) -> Result<u64> {
    let k = s
        .strip_prefix("every=")
        .ok_or_else(|| anyhow!("expected every=K"))?;
    let k: u64 = k.parse()?;
    if k == 0 {
        return Err(anyhow!("K must be positive"));
    }
    Ok(k)
}

fn main() -> ExitCode {
    match real_main() {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}

fn real_main() -> Result<ExitCode> {
    match Cli::parse().command {
        Command::Show { name } => {
            let text = ddgi_cli::config::builtin(&name)
                .ok_or_else(|| anyhow!("no built-in scene '{name}'"))?;
            print!("{text}");
            Ok(ExitCode::SUCCESS)
        }
        Command::Render {
            config,
            frames,
            seed,
            out,
            dump_atlas,
            dump_states,
            compare_oracle,
            disable,
            threads,
        } => {
            if let Some(n) = threads {
                rayon::ThreadPoolBuilder::new()
                    .num_threads(n)
                    .build_global()?;
            }
            let loaded = load_config(&config)?;
            let opts = RunOptions {
                frames,
                seed,
                out,
                dump_atlas,
                dump_states,
                compare_every: compare_oracle,
                disable,
            };
            let summary = run(loaded, &opts)?;
            let last = summary.rows.last();
            println!(
                "{} frames -> {} ({} rays last frame)",
                summary.rows.len(),
                summary.out_dir.display(),
                last.map_or(0, |r| r.rays_traced)
            );
            if summary.breaches > 0 {
                eprintln!("{} invariant breaches", summary.breaches);
                return Ok(ExitCode::from(2));
            }
            Ok(ExitCode::SUCCESS)
        }
    }
}
