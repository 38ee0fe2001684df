use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use log::error;

use se3obs_cli::config::{load_config, parse_observers};
use se3obs_cli::output::{write_json, ErrorRecord};
use se3obs_cli::runner::{simulate, RunError};
use se3obs_core::audit;

/// Exit status for configuration errors.
const EXIT_CONFIG: u8 = 2;
/// Exit status when a run fails or diverges.
const EXIT_RUN: u8 = 3;

#[derive(Parser)]
#[command(name = "se3obs", version, about = "Hybrid pose and velocity-bias observers on SE(3)")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a scenario and write one CSV per observer plus summary.json.
    Simulate {
        #[arg(long)]
        config: PathBuf,
        /// Output directory; overrides `[output] dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Comma-separated subset of S,H,HD1,HD2; overrides `[observers] run`.
        #[arg(long, value_delimiter = ',')]
        observers: Option<Vec<String>>,
        /// Overrides the top-level `seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Run the randomized identity and bound audits and print a table.
    CheckInvariants {
        #[arg(long, default_value_t = 1000)]
        trials: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match Cli::parse().command {
        Command::Simulate {
            config,
            out,
            observers,
            seed,
        } => simulate_cmd(config, out, observers, seed),
        Command::CheckInvariants { trials, seed } => check_cmd(trials, seed),
    }
}

fn simulate_cmd(
    config: PathBuf,
    out: Option<PathBuf>,
    observers: Option<Vec<String>>,
    seed: Option<u64>,
) -> ExitCode {
    let mut loaded = match load_config(&config) {
        Ok(l) => l,
        Err(e) => {
            error!("{e}");
            eprintln!("error: {e}");
            if let Some(dir) = &out {
                let rec = ErrorRecord {
                    kind: e.kind().to_string(),
                    message: e.to_string(),
                    observer: None,
                    t: None,
                    j: None,
                };
                let _ = std::fs::create_dir_all(dir).and_then(|_| write_json(&dir.join("error.json"), &rec));
            }
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    if let Some(list) = observers {
        match parse_observers(&list) {
            Ok(v) => loaded.observers = v,
            Err(m) => {
                eprintln!("error: --observers: {m}");
                return ExitCode::from(EXIT_CONFIG);
            }
        }
    }
    if let Some(s) = seed {
        loaded.scenario.seed = s;
    }
    let out_dir = out.unwrap_or_else(|| loaded.config.output.dir.clone());
    let name = config.display().to_string();
    match simulate(&loaded.scenario, &loaded.observers, &out_dir, &name) {
        Ok(summary) => {
            for o in &summary.observers {
                println!(
                    "{:<4} jumps {:>3}  |g|_I {:.3e}  |b| {:.3e}  {:.2} s  -> {}",
                    o.observer,
                    o.jumps,
                    o.final_dist_gi,
                    o.final_bias_err,
                    o.wall_time_s,
                    out_dir.join(&o.csv).display()
                );
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                RunError::Setup(_) => EXIT_CONFIG,
                _ => EXIT_RUN,
            })
        }
    }
}

fn check_cmd(trials: usize, seed: u64) -> ExitCode {
    if trials == 0 {
        eprintln!("error: --trials must be positive");
        return ExitCode::from(EXIT_CONFIG);
    }
    let checks = audit::run_all(trials, seed);
    for c in &checks {
        println!("{c}");
    }
    let failed = checks.iter().filter(|c| !c.passed()).count();
    println!("{} checks, {failed} failed", checks.len());
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
