use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use pam_cli::commands::{cmd_ballistic, cmd_pareto, cmd_track, cmd_tune, cmd_tune_seeds};
use pam_cli::config::{parse_weights, ExperimentConfig, Overrides};
use pam_cli::CliError;
use pam_core::tuner::LossWeights;

/// Simulated pneumatic-muscle arm: tracking, ballistic, tuning and Pareto runs.
#[derive(Parser, Debug)]
#[command(name = "pamarm", version)]
struct Cli {
    #[command(flatten)]
    common: Common,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Debug)]
struct Common {
    /// Experiment configuration file.
    #[arg(long, global = true, env = "PAMARM_CONFIG", default_value = "configs/experiment.toml")]
    config: PathBuf,
    /// RNG seed, overrides the configuration.
    #[arg(long, global = true, env = "PAMARM_SEED")]
    seed: Option<u64>,
    /// Output directory, overrides the configuration.
    #[arg(long, global = true, env = "PAMARM_OUT")]
    out: Option<PathBuf>,
    /// Tuning iterations per DoF, overrides the configuration.
    #[arg(long, global = true, env = "PAMARM_ITERATIONS")]
    iterations: Option<usize>,
    /// Loss weights `w_pos,w_vel,w_act`, override the configuration.
    #[arg(long, global = true, env = "PAMARM_WEIGHTS", value_parser = parse_weights)]
    weights: Option<LossWeights>,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Closed-loop tracking with the manual parameters.
    Track {
        /// Zero every gain, keeping the co-contraction level.
        #[arg(long)]
        passive: bool,
    },
    /// Antagonist pressure-swap experiment.
    Ballistic,
    /// Sequential per-DoF Bayesian tuning campaign.
    Tune {
        /// Run this many consecutive seeds in parallel, each in its own subdirectory.
        #[arg(long, env = "PAMARM_SEEDS")]
        seeds: Option<usize>,
    },
    /// Pareto-front and co-contraction analysis of a campaign CSV.
    Pareto {
        /// Campaign CSV written by `tune`.
        campaign: PathBuf,
    },
}

fn run(cli: Cli) -> Result<(), CliError> {
    let overrides = Overrides {
        seed: cli.common.seed,
        out_dir: cli.common.out,
        iterations: cli.common.iterations,
        weights: cli.common.weights,
    };
    let cfg = ExperimentConfig::load(&cli.common.config, &overrides)?;
    match cli.command {
        Command::Track { passive } => {
            let s = cmd_track(&cfg, passive)?;
            for (j, r) in s.rmse_deg.iter().enumerate() {
                println!("dof {}: rmse {r:.3} deg", j + 1);
            }
        }
        Command::Ballistic => {
            let r = cmd_ballistic(&cfg)?;
            for (j, (v, a)) in r.peak_joint_speed_deg_s.iter().zip(&r.peak_joint_accel_deg_s2).enumerate() {
                println!("dof {}: peak speed {v:.1} deg/s, peak accel {a:.1} deg/s^2", j + 1);
            }
            println!(
                "task space: peak speed {:.3} m/s, peak accel {:.2} m/s^2",
                r.peak_task_speed_m_s, r.peak_task_accel_m_s2
            );
        }
        Command::Tune { seeds } => {
            let summaries = match seeds {
                Some(n) => cmd_tune_seeds(&cfg, n)?,
                None => vec![cmd_tune(&cfg)?],
            };
            for s in summaries {
                for r in &s.rmse {
                    println!(
                        "dof {}: rmse manual {:.3} deg, optimized {:.3} deg",
                        r.dof, r.manual_deg, r.optimized_deg
                    );
                }
            }
        }
        Command::Pareto { campaign } => {
            let s = cmd_pareto(&cfg, &campaign)?;
            for d in &s.dofs {
                let range = d
                    .p0_range
                    .map_or("none".to_string(), |(lo, hi)| format!("{lo:.2}-{hi:.2}"));
                println!(
                    "dof {}: {} of {} records on the front, near-front p0 {range}",
                    d.dof,
                    d.front_iterations.len(),
                    d.n_records
                );
            }
        }
    }
    println!("outputs written to {}", cfg.out_dir.display());
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
