//! Subcommand implementations. Each writes its files into the configured
//! output directory and returns a summary for the caller.

use std::fs::File;
use std::io::Write;
use std::path::Path;

use pam_core::bayesopt::TraceEntry;
use pam_core::control::DofParams;
use pam_core::tuner::{
    cocontraction_analysis, read_campaign_csv, rmse_deg, rmse_table, track, tune_all, write_campaign_csv, LossRecord,
    RmseRow, TrackTrace,
};
use serde::Serialize;

use crate::ballistic::{run_ballistic, BallisticReport};
use crate::config::ExperimentConfig;
use crate::output::{row, OutDir, Provenance};
use crate::CliError;

fn out_dir(cfg: &ExperimentConfig) -> Result<OutDir, CliError> {
    OutDir::create(
        &cfg.out_dir,
        Provenance {
            config_sha256: cfg.hash(),
            seed: cfg.seed,
        },
    )
}

fn fmt(v: &[f64]) -> impl Iterator<Item = String> + '_ {
    v.iter().map(f64::to_string)
}

fn numbered(prefix: &str, n: usize) -> impl Iterator<Item = String> + '_ {
    (1..=n).map(move |i| format!("{prefix}{i}"))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrackSummary {
    pub passive: bool,
    pub rmse_deg: Vec<f64>,
    /// Largest true joint speed, rad/s.
    pub peak_speed: f64,
}

/// Closed-loop tracking of the `[track]` trajectory with the manual
/// parameters, or with all gains zeroed when `passive`.
pub fn cmd_track(cfg: &ExperimentConfig, passive: bool) -> Result<TrackSummary, CliError> {
    let traj = cfg.track.trajectory.build(&cfg.arm)?;
    let params: Vec<DofParams> = if passive {
        cfg.theta_man.iter().map(|p| DofParams::passive(p.p0)).collect()
    } else {
        cfg.theta_man.clone()
    };
    let trace = track(&cfg.arm, &params, &traj, &cfg.track.track_config())?;
    let m = cfg.arm.n_dofs();
    let summary = TrackSummary {
        passive,
        rmse_deg: (0..m).map(|j| rmse_deg(&trace, &traj, j)).collect::<Result<_, _>>()?,
        peak_speed: trace.peak_speed(),
    };

    let out = out_dir(cfg)?;
    let mut w = out.csv("track_trace.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("q_des", m));
    header.extend(numbered("q", m));
    header.extend(numbered("qd", m));
    header.extend(numbered("u", m));
    row(&mut w, &header)?;
    write_track_rows(&mut w, &trace, &traj.q, traj.dt)?;
    w.flush()?;
    out.json("track_rmse.json", &summary)?;
    Ok(summary)
}

fn write_track_rows<W: Write>(w: &mut W, trace: &TrackTrace, q_des: &[Vec<f64>], dt: f64) -> Result<(), CliError> {
    for (k, des) in q_des.iter().enumerate().take(trace.len()) {
        let mut rec = vec![(k as f64 * dt).to_string()];
        rec.extend(fmt(des));
        rec.extend(fmt(&trace.q[k]));
        rec.extend(fmt(&trace.q_dot[k]));
        rec.extend(fmt(&trace.u[k]));
        row(w, &rec)?;
    }
    Ok(())
}

/// Pressure-swap experiment with joint and task-space peak report.
pub fn cmd_ballistic(cfg: &ExperimentConfig) -> Result<BallisticReport, CliError> {
    let (trace, report) = run_ballistic(&cfg.arm, &cfg.ballistic)?;
    let m = cfg.arm.n_dofs();
    let out = out_dir(cfg)?;
    let mut w = out.csv("ballistic_trace.csv")?;
    let mut header = vec!["t".to_string()];
    header.extend(numbered("q", m));
    header.extend(numbered("qd", m));
    header.extend(numbered("p", 2 * m));
    header.extend(["x", "y", "z", "task_speed", "task_accel"].map(String::from));
    row(&mut w, &header)?;
    for k in 0..trace.t.len() {
        let mut rec = vec![trace.t[k].to_string()];
        rec.extend(fmt(&trace.q[k]));
        rec.extend(fmt(&trace.q_dot[k]));
        rec.extend(fmt(&trace.p[k]));
        rec.extend(fmt(&trace.x[k]));
        rec.extend([trace.task_speed[k].to_string(), trace.task_accel[k].to_string()]);
        row(&mut w, &rec)?;
    }
    w.flush()?;
    out.json("ballistic.json", &report)?;
    if !(report.joint_limits_respected && report.pressures_in_range) {
        return Err(CliError::Sim("ballistic run left the safe joint or pressure range".into()));
    }
    Ok(report)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ThetaEntry {
    pub dof: usize,
    pub manual: DofParams,
    pub optimized: DofParams,
    pub best_loss: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TuneSummary {
    pub iterations: usize,
    pub theta: Vec<ThetaEntry>,
    pub rmse: Vec<RmseRow>,
    /// Running minimum of the scalarized loss per DoF.
    #[serde(skip)]
    pub running_min: Vec<Vec<f64>>,
}

/// Full tuning campaign on the `[tune]` trajectory.
pub fn cmd_tune(cfg: &ExperimentConfig) -> Result<TuneSummary, CliError> {
    let traj = cfg.tune.trajectory.build(&cfg.arm)?;
    let opts = cfg.tune_options();
    let campaign = tune_all(&cfg.arm, &traj, &cfg.weights, &cfg.theta_man, &cfg.theta_lim, &opts)?;
    let rmse = rmse_table(&cfg.arm, &traj, &cfg.theta_man, &campaign.theta_opt, &opts.track)?;
    let summary = TuneSummary {
        iterations: opts.n_it,
        theta: (0..cfg.arm.n_dofs())
            .map(|i| ThetaEntry {
                dof: i + 1,
                manual: campaign.theta_man[i],
                optimized: campaign.theta_opt[i],
                best_loss: campaign.traces[i].last().map_or(f64::NAN, |t| t.running_min),
            })
            .collect(),
        rmse,
        running_min: (0..cfg.arm.n_dofs()).map(|i| campaign.running_min(i)).collect(),
    };

    let out = out_dir(cfg)?;
    let mut w = out.csv("campaign.csv")?;
    let all: Vec<LossRecord> = campaign.history.iter().flatten().cloned().collect();
    write_campaign_csv(&all, &mut w)?;
    w.flush()?;

    let mut w = out.csv("min_trace.csv")?;
    write_min_trace(&mut w, &campaign.traces)?;
    w.flush()?;

    let mut w = out.csv("rmse_table.csv")?;
    row(&mut w, &["dof", "rmse_manual_deg", "rmse_optimized_deg"].map(String::from))?;
    for r in &summary.rmse {
        row(
            &mut w,
            &[r.dof.to_string(), r.manual_deg.to_string(), r.optimized_deg.to_string()],
        )?;
    }
    w.flush()?;
    out.json("theta_opt.json", &summary)?;
    Ok(summary)
}

fn write_min_trace<W: Write>(w: &mut W, traces: &[Vec<TraceEntry>]) -> Result<(), CliError> {
    row(w, &["dof", "iteration", "y", "running_min"].map(String::from))?;
    for (i, trace) in traces.iter().enumerate() {
        for t in trace {
            row(
                w,
                &[
                    (i + 1).to_string(),
                    t.iteration.to_string(),
                    t.y.to_string(),
                    t.running_min.to_string(),
                ],
            )?;
        }
    }
    Ok(())
}

/// Independent campaigns for `n_seeds` consecutive seeds, run on worker
/// threads. Each writes to `<out>/seed_<seed>/`.
pub fn cmd_tune_seeds(cfg: &ExperimentConfig, n_seeds: usize) -> Result<Vec<TuneSummary>, CliError> {
    if n_seeds == 0 {
        return Err(CliError::Usage("--seeds must be at least 1".into()));
    }
    let configs: Vec<ExperimentConfig> = (0..n_seeds as u64)
        .map(|k| {
            let mut c = cfg.clone();
            c.seed = cfg.seed.wrapping_add(k);
            c.out_dir = cfg.out_dir.join(format!("seed_{}", c.seed));
            c
        })
        .collect();
    std::thread::scope(|s| {
        let handles: Vec<_> = configs.iter().map(|c| s.spawn(move || cmd_tune(c))).collect();
        handles
            .into_iter()
            .map(|h| h.join().map_err(|_| CliError::Sim("worker thread panicked".into()))?)
            .collect()
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoDof {
    pub dof: usize,
    pub n_records: usize,
    /// Iterations of the front members.
    pub front_iterations: Vec<usize>,
    pub near_front_iterations: Vec<usize>,
    pub p0_range: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ParetoSummary {
    pub eps_frac: f64,
    pub dofs: Vec<ParetoDof>,
}

/// Pareto and co-contraction analysis of a stored campaign CSV.
pub fn cmd_pareto(cfg: &ExperimentConfig, campaign: &Path) -> Result<ParetoSummary, CliError> {
    let file = File::open(campaign).map_err(|e| CliError::Io(format!("{}: {e}", campaign.display())))?;
    let records = read_campaign_csv(file)?;
    if records.is_empty() {
        return Err(CliError::Usage(format!("{} holds no campaign records", campaign.display())));
    }
    let n_dofs = records.iter().map(|r| r.dof + 1).max().unwrap_or(0);

    let out = out_dir(cfg)?;
    let mut w = out.csv("pareto.csv")?;
    row(
        &mut w,
        &["dof", "iteration", "l_pos", "l_vel", "p0", "on_front", "near_front"].map(String::from),
    )?;
    let mut dofs = vec![];
    for d in 0..n_dofs {
        let recs: Vec<LossRecord> = records.iter().filter(|r| r.dof == d).cloned().collect();
        if recs.is_empty() {
            continue;
        }
        let s = cocontraction_analysis(&recs, cfg.pareto.eps_frac);
        for (r, t) in recs.iter().zip(&s.table) {
            row(
                &mut w,
                &[
                    (d + 1).to_string(),
                    r.iteration.to_string(),
                    t.l_pos.to_string(),
                    t.l_vel.to_string(),
                    t.p0.to_string(),
                    t.on_front.to_string(),
                    t.near_front.to_string(),
                ],
            )?;
        }
        dofs.push(ParetoDof {
            dof: d + 1,
            n_records: recs.len(),
            front_iterations: s.front.iter().map(|&i| recs[i].iteration).collect(),
            near_front_iterations: s.near.iter().map(|&i| recs[i].iteration).collect(),
            p0_range: s.p0_range,
        });
    }
    w.flush()?;
    let summary = ParetoSummary {
        eps_frac: cfg.pareto.eps_frac,
        dofs,
    };
    out.json("pareto.json", &summary)?;
    Ok(summary)
}

