use anidwr::adapt::RefinementMode;
use anidwr::config::parse_config;
use anidwr::driver::{compare_runs, run};
use clap::{Parser, Subcommand};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "anidwr", version, about = "Anisotropic space-time adaptive finite elements")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the adaptive loop described by a configuration file.
    Solve {
        config: PathBuf,
        /// Output directory (overrides `output_dir`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Number of loops (overrides `max_loops`).
        #[arg(long)]
        loops: Option<usize>,
        /// aniso, iso or uniform (overrides `mode`).
        #[arg(long)]
        mode: Option<String>,
    },
    /// Compare result tables against the first one at matched error.
    Compare {
        #[arg(required = true, num_args = 2..)]
        csv: Vec<PathBuf>,
    },
}

fn threads() -> Result<usize, String> {
    match std::env::var("THREADS") {
        Ok(v) => v
            .trim()
            .parse::<usize>()
            .ok()
            .filter(|&n| n > 0)
            .ok_or_else(|| format!("THREADS must be a positive integer, got `{v}`")),
        Err(_) => Ok(1),
    }
}

fn solve(config: PathBuf, out: Option<PathBuf>, loops: Option<usize>, mode: Option<String>) -> Result<(), String> {
    let text = std::fs::read_to_string(&config).map_err(|e| format!("{}: {e}", config.display()))?;
    let mut cfg = parse_config::<f64>(&text).map_err(|e| format!("{}: {e}", config.display()))?;
    if let Some(dir) = out {
        cfg.output_dir = dir;
    }
    if let Some(n) = loops {
        if n == 0 {
            return Err("--loops must be at least one".into());
        }
        cfg.marking.max_loops = n;
    }
    if let Some(m) = mode {
        cfg.mode = m
            .parse::<RefinementMode>()
            .map_err(|_| format!("unknown mode `{m}` (aniso, iso, uniform)"))?;
    }
    let records = run(&cfg).map_err(|e| e.to_string())?;
    for r in &records {
        let d = &r.report;
        eprintln!(
            "loop {:>2}  N_tot {:>9}  error {}  eta {:+.3e}  ar_max {:.1}  {:.2?}",
            d.loop_index,
            d.n_tot,
            d.error.map_or("-".into(), |e| format!("{e:.3e}")),
            d.eta_tau + d.eta_hx + d.eta_hy,
            d.ar_max,
            r.wall_time
        );
    }
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = threads().and_then(|n| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| e.to_string())
    });
    let result = result.and_then(|_| match cli.command {
        Command::Solve {
            config,
            out,
            loops,
            mode,
        } => solve(config, out, loops, mode),
        Command::Compare { csv } => compare_runs(&csv)
            .map(|s| print!("{}", s.report()))
            .map_err(|e| e.to_string()),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
