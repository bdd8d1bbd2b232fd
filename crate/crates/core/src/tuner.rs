//! Per-DoF sequential controller tuning, tracking losses and Pareto analysis.

use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::bayesopt::{bo_minimize, BoConfig, BoError, TraceEntry};
use crate::control::{
    control_step, rest_pressures, ControlConfig, ControlError, ControlState, Desired, DofParams, Measured,
    ParamBounds, N_PARAMS, PARAM_NAMES,
};
use crate::plant::{ArmConfig, Encoder, Plant, PlantError};
use crate::trajgen::Trajectory;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum TunerError {
    #[error(transparent)]
    Plant(#[from] PlantError),
    #[error(transparent)]
    Control(#[from] ControlError),
    #[error(transparent)]
    Bo(#[from] BoError),
    #[error("length mismatch: expected {expected}, got {got}")]
    Length { expected: usize, got: usize },
    #[error("invalid argument: {0}")]
    Invalid(String),
    #[error("campaign csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LossWeights {
    pub w_pos: f64,
    pub w_vel: f64,
    pub w_act: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        LossWeights {
            w_pos: 1.0,
            w_vel: 0.05,
            w_act: 1.0,
        }
    }
}

impl LossWeights {
    pub fn validate(&self) -> Result<(), TunerError> {
        let w = [self.w_pos, self.w_vel, self.w_act];
        if w.iter().all(|v| v.is_finite() && *v >= 0.0) && w.iter().any(|v| *v > 0.0) {
            Ok(())
        } else {
            Err(TunerError::Invalid(format!("weights must be non-negative with one positive: {w:?}")))
        }
    }

    /// Scalarized loss. The single definition used everywhere so that
    /// reweighting stored components is bit-exact.
    pub fn total(&self, l_pos: f64, l_vel: f64, l_act: f64) -> f64 {
        self.w_pos * l_pos + self.w_vel * l_vel + self.w_act * l_act
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrackConfig {
    /// Hold time at the start pose before scoring, s.
    pub settle_time: f64,
    pub control: ControlConfig,
}

impl Default for TrackConfig {
    fn default() -> Self {
        TrackConfig {
            settle_time: 1.0,
            control: ControlConfig::default(),
        }
    }
}

/// Executed closed-loop run, one row per trajectory sample.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrackTrace {
    /// Encoder readings.
    pub q: Vec<Vec<f64>>,
    pub q_dot: Vec<Vec<f64>>,
    /// Raw commands.
    pub u: Vec<Vec<f64>>,
    /// Simulator ground truth.
    pub q_true: Vec<Vec<f64>>,
    pub q_dot_true: Vec<Vec<f64>>,
}

impl TrackTrace {
    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    /// Largest true joint speed magnitude over the run, rad/s.
    pub fn peak_speed(&self) -> f64 {
        self.q_dot_true.iter().flatten().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Run the closed loop along `traj`.
///
/// The arm starts at rest in the first trajectory pose with the pressures of
/// a zero command, is held there for `settle_time` and is then scored.
pub fn track(
    arm: &ArmConfig,
    params: &[DofParams],
    traj: &Trajectory,
    cfg: &TrackConfig,
) -> Result<TrackTrace, TunerError> {
    let m = arm.n_dofs();
    if params.len() != m {
        return Err(TunerError::Length { expected: m, got: params.len() });
    }
    if traj.n_dofs() != m {
        return Err(TunerError::Length { expected: m, got: traj.n_dofs() });
    }
    if traj.is_empty() {
        return Err(TunerError::Invalid("empty trajectory".into()));
    }
    if (traj.dt - arm.control_dt).abs() > 1e-12 {
        return Err(TunerError::Invalid(format!(
            "trajectory step {} differs from control period {}",
            traj.dt, arm.control_dt
        )));
    }
    let dt = arm.control_dt;
    let mut plant = Plant::new(arm.clone())?;
    plant.reset(&traj.q[0], &rest_pressures(params, arm))?;
    let mut encoder = Encoder::for_arm(arm);
    let mut state = ControlState::new(m);
    let zeros = vec![0.0; m];

    let settle_steps = (cfg.settle_time / dt).round() as usize;
    for _ in 0..settle_steps {
        let (q, q_dot) = encoder.measure(plant.state());
        let out = control_step(
            params,
            &mut state,
            arm,
            &cfg.control,
            Measured { q: &q, q_dot: &q_dot },
            Desired { q: &traj.q[0], q_dot: &zeros, q_ddot: &zeros },
            dt,
        )?;
        plant.simulate_step(&out.pressures, dt)?;
    }

    let mut trace = TrackTrace::default();
    for k in 0..traj.len() {
        let (q, q_dot) = encoder.measure(plant.state());
        let out = control_step(
            params,
            &mut state,
            arm,
            &cfg.control,
            Measured { q: &q, q_dot: &q_dot },
            Desired { q: &traj.q[k], q_dot: &traj.qd[k], q_ddot: &traj.qdd[k] },
            dt,
        )?;
        trace.q_true.push(plant.state().q.clone());
        trace.q_dot_true.push(plant.state().q_dot.clone());
        trace.q.push(q);
        trace.q_dot.push(q_dot);
        trace.u.push(out.u);
        plant.simulate_step(&out.pressures, dt)?;
    }
    Ok(trace)
}

/// Loss components of one trial on one DoF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub dof: usize,
    pub iteration: usize,
    pub theta: DofParams,
    pub l_pos: f64,
    pub l_vel: f64,
    pub l_act: f64,
    pub l_total: f64,
    pub failed: bool,
}

impl LossRecord {
    pub fn reweight(&self, weights: &LossWeights) -> f64 {
        weights.total(self.l_pos, self.l_vel, self.l_act)
    }
}

/// Summed squared position and velocity errors and summed command excess
/// beyond `[−1, 1]` for DoF `dof`.
pub fn loss_components(trace: &TrackTrace, traj: &Trajectory, dof: usize) -> Result<(f64, f64, f64), TunerError> {
    if trace.len() != traj.len() || trace.u.len() != traj.len() || trace.q_dot.len() != traj.len() {
        return Err(TunerError::Length {
            expected: traj.len(),
            got: trace.len(),
        });
    }
    if dof >= traj.n_dofs() {
        return Err(TunerError::Invalid(format!("dof {dof} out of range")));
    }
    let (mut l_pos, mut l_vel, mut l_act) = (0.0, 0.0, 0.0);
    for k in 0..traj.len() {
        let e = trace.q[k][dof] - traj.q[k][dof];
        let ed = trace.q_dot[k][dof] - traj.qd[k][dof];
        l_pos += e * e;
        l_vel += ed * ed;
        l_act += (trace.u[k][dof].abs() - 1.0).max(0.0);
    }
    Ok((l_pos, l_vel, l_act))
}

pub fn losses(
    trace: &TrackTrace,
    traj: &Trajectory,
    dof: usize,
    theta: DofParams,
    weights: &LossWeights,
) -> Result<LossRecord, TunerError> {
    let (l_pos, l_vel, l_act) = loss_components(trace, traj, dof)?;
    Ok(LossRecord {
        dof,
        iteration: 0,
        theta,
        l_pos,
        l_vel,
        l_act,
        l_total: weights.total(l_pos, l_vel, l_act),
        failed: false,
    })
}

/// Position RMSE of DoF `dof` in degrees.
pub fn rmse_deg(trace: &TrackTrace, traj: &Trajectory, dof: usize) -> Result<f64, TunerError> {
    let (l_pos, _, _) = loss_components(trace, traj, dof)?;
    Ok((l_pos / traj.len() as f64).sqrt().to_degrees())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuneOptions {
    pub n_it: usize,
    pub seed: u64,
    pub n_init: usize,
    pub n_candidates: usize,
    pub n_refine: usize,
    pub refit_every: usize,
    pub log_targets: bool,
    pub track: TrackConfig,
}

impl Default for TuneOptions {
    fn default() -> Self {
        let bo = BoConfig::new(vec![], 200, 0);
        TuneOptions {
            n_it: bo.n_iter,
            seed: bo.seed,
            n_init: bo.n_init,
            n_candidates: bo.n_candidates,
            n_refine: bo.n_refine,
            refit_every: bo.refit_every,
            log_targets: true,
            track: TrackConfig::default(),
        }
    }
}

impl TuneOptions {
    fn bo_config(&self, bounds: &ParamBounds, dof: usize) -> BoConfig {
        BoConfig {
            bounds: bounds.as_pairs().iter().map(|&(lo, hi)| [lo, hi]).collect(),
            n_init: self.n_init,
            n_iter: self.n_it,
            n_candidates: self.n_candidates,
            n_refine: self.n_refine,
            refit_every: self.refit_every,
            log_targets: self.log_targets,
            seed: self.seed.wrapping_add((dof as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TuningCampaign {
    pub theta_man: Vec<DofParams>,
    pub theta_opt: Vec<DofParams>,
    /// Trial records per DoF, in evaluation order.
    pub history: Vec<Vec<LossRecord>>,
    /// Optimizer traces per DoF.
    pub traces: Vec<Vec<TraceEntry>>,
}

impl TuningCampaign {
    /// Running minimum of the recorded scalarized loss for DoF `dof`.
    pub fn running_min(&self, dof: usize) -> Vec<f64> {
        self.traces[dof].iter().map(|t| t.running_min).collect()
    }
}

/// Tune every DoF in order. While DoF `i` is tuned, DoFs after it use the
/// manual parameters and DoFs before it use their optimized parameters.
pub fn tune_all(
    arm: &ArmConfig,
    traj: &Trajectory,
    weights: &LossWeights,
    theta_man: &[DofParams],
    theta_lim: &[ParamBounds],
    opts: &TuneOptions,
) -> Result<TuningCampaign, TunerError> {
    weights.validate()?;
    let m = arm.n_dofs();
    for len in [theta_man.len(), theta_lim.len()] {
        if len != m {
            return Err(TunerError::Length { expected: m, got: len });
        }
    }
    for b in theta_lim {
        b.validate()?;
    }
    if opts.n_it == 0 {
        return Err(TunerError::Invalid("n_it must be at least 1".into()));
    }

    let mut theta_opt: Vec<DofParams> = Vec::with_capacity(m);
    let mut history = Vec::with_capacity(m);
    let mut traces = Vec::with_capacity(m);
    for (i, lim) in theta_lim.iter().enumerate() {
        let mut records: Vec<LossRecord> = Vec::with_capacity(opts.n_it);
        let bo = opts.bo_config(lim, i);
        let result = bo_minimize(
            |x| {
                let iteration = records.len();
                let theta = DofParams::from_slice(x).expect("optimizer dimension matches parameter count");
                let params: Vec<DofParams> = (0..m)
                    .map(|j| match j.cmp(&i) {
                        std::cmp::Ordering::Less => theta_opt[j],
                        std::cmp::Ordering::Equal => theta,
                        std::cmp::Ordering::Greater => theta_man[j],
                    })
                    .collect();
                let outcome = track(arm, &params, traj, &opts.track)
                    .and_then(|trace| losses(&trace, traj, i, theta, weights));
                match outcome {
                    Ok(mut rec) if rec.l_total.is_finite() => {
                        rec.iteration = iteration;
                        let total = rec.l_total;
                        records.push(rec);
                        Some(total)
                    }
                    other => {
                        if let Err(e) = other {
                            log::warn!("dof {i} trial {iteration} failed: {e}");
                        }
                        records.push(LossRecord {
                            dof: i,
                            iteration,
                            theta,
                            l_pos: f64::INFINITY,
                            l_vel: f64::INFINITY,
                            l_act: f64::INFINITY,
                            l_total: f64::INFINITY,
                            failed: true,
                        });
                        None
                    }
                }
            },
            &bo,
        )?;
        // failed trials carry the optimizer's penalty as their recorded total
        for (rec, t) in records.iter_mut().zip(&result.trace) {
            if rec.failed {
                rec.l_total = t.y;
            }
        }
        let best = argmin_record(&records).expect("at least one trial per DoF");
        log::info!("dof {}: best loss {:.6e} at trial {}", i + 1, records[best].l_total, best);
        theta_opt.push(records[best].theta);
        history.push(records);
        traces.push(result.trace);
    }
    Ok(TuningCampaign {
        theta_man: theta_man.to_vec(),
        theta_opt,
        history,
        traces,
    })
}

/// Index of the smallest finite `l_total`, first occurrence on ties.
pub fn argmin_record(records: &[LossRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, r) in records.iter().enumerate() {
        if r.failed {
            continue;
        }
        match best {
            Some(b) if records[b].l_total <= r.l_total => {}
            _ => best = Some(i),
        }
    }
    best.or(if records.is_empty() { None } else { Some(0) })
}

/// Per-DoF RMSE (degrees) of the manual and the optimized parameter sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RmseRow {
    pub dof: usize,
    pub manual_deg: f64,
    pub optimized_deg: f64,
}

pub fn rmse_table(
    arm: &ArmConfig,
    traj: &Trajectory,
    theta_man: &[DofParams],
    theta_opt: &[DofParams],
    cfg: &TrackConfig,
) -> Result<Vec<RmseRow>, TunerError> {
    let man = track(arm, theta_man, traj, cfg)?;
    let opt = track(arm, theta_opt, traj, cfg)?;
    (0..arm.n_dofs())
        .map(|j| {
            Ok(RmseRow {
                dof: j + 1,
                manual_deg: rmse_deg(&man, traj, j)?,
                optimized_deg: rmse_deg(&opt, traj, j)?,
            })
        })
        .collect()
}

/// Columns: `dof, iteration, kp..p0, l_pos, l_vel, l_act, l_total, failed`.
pub fn write_campaign_csv<W: Write>(records: &[LossRecord], w: W) -> Result<(), TunerError> {
    let err = |e: csv::Error| TunerError::Csv(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    let mut header = vec!["dof", "iteration"];
    header.extend(PARAM_NAMES);
    header.extend(["l_pos", "l_vel", "l_act", "l_total", "failed"]);
    wr.write_record(&header).map_err(err)?;
    for r in records {
        let mut rec = vec![(r.dof + 1).to_string(), r.iteration.to_string()];
        rec.extend(r.theta.to_array().iter().map(f64::to_string));
        rec.extend([r.l_pos, r.l_vel, r.l_act, r.l_total].iter().map(f64::to_string));
        rec.push(r.failed.to_string());
        wr.write_record(&rec).map_err(err)?;
    }
    wr.flush().map_err(|e| TunerError::Csv(e.to_string()))
}

pub fn read_campaign_csv<R: Read>(r: R) -> Result<Vec<LossRecord>, TunerError> {
    let err = |e: &dyn std::fmt::Display| TunerError::Csv(e.to_string());
    let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
    let mut out = vec![];
    for rec in rd.records() {
        let rec = rec.map_err(|e| err(&e))?;
        if rec.len() != 2 + N_PARAMS + 5 {
            return Err(TunerError::Csv(format!("expected {} columns, got {}", 2 + N_PARAMS + 5, rec.len())));
        }
        let num = |i: usize| rec[i].parse::<f64>().map_err(|e| err(&e));
        let dof: usize = rec[0].parse().map_err(|e| err(&e))?;
        if dof == 0 {
            return Err(TunerError::Csv("dof numbering starts at 1".into()));
        }
        let theta = (2..2 + N_PARAMS).map(num).collect::<Result<Vec<_>, _>>()?;
        let base = 2 + N_PARAMS;
        out.push(LossRecord {
            dof: dof - 1,
            iteration: rec[1].parse().map_err(|e| err(&e))?,
            theta: DofParams::from_slice(&theta)?,
            l_pos: num(base)?,
            l_vel: num(base + 1)?,
            l_act: num(base + 2)?,
            l_total: num(base + 3)?,
            failed: rec[base + 4].parse().map_err(|e| err(&e))?,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Objective {
    Pos,
    Vel,
    Act,
}

impl Objective {
    pub fn of(&self, r: &LossRecord) -> f64 {
        match self {
            Objective::Pos => r.l_pos,
            Objective::Vel => r.l_vel,
            Objective::Act => r.l_act,
        }
    }
}

/// `a` dominates `b`: no worse in every objective, strictly better in one.
pub fn dominates(a: &[f64], b: &[f64]) -> bool {
    let mut strictly = false;
    for (x, y) in a.iter().zip(b) {
        if x > y {
            return false;
        }
        if x < y {
            strictly = true;
        }
    }
    strictly
}

/// Indices of the non-dominated points, ascending. Points with identical
/// objectives are all kept. Non-finite points are never on the front.
pub fn pareto_indices(points: &[Vec<f64>]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..points.len())
        .filter(|&i| points[i].iter().all(|v| v.is_finite()))
        .collect();
    // a dominating point precedes the points it dominates in this order
    order.sort_by(|&a, &b| {
        points[a]
            .iter()
            .zip(&points[b])
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| o.is_ne())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut front: Vec<usize> = vec![];
    for i in order {
        if !front.iter().any(|&f| dominates(&points[f], &points[i])) {
            front.push(i);
        }
    }
    front.sort_unstable();
    front
}

fn objective_points(records: &[LossRecord], objectives: &[Objective]) -> Vec<Vec<f64>> {
    records
        .iter()
        .map(|r| {
            if r.failed {
                vec![f64::INFINITY; objectives.len()]
            } else {
                objectives.iter().map(|o| o.of(r)).collect()
            }
        })
        .collect()
}

/// Indices of the records on the Pareto front of `objectives`.
pub fn pareto_front(records: &[LossRecord], objectives: &[Objective]) -> Vec<usize> {
    pareto_indices(&objective_points(records, objectives))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocontractionRow {
    pub l_pos: f64,
    pub l_vel: f64,
    pub p0: f64,
    pub on_front: bool,
    pub near_front: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CocontractionSummary {
    pub front: Vec<usize>,
    pub near: Vec<usize>,
    /// Range of `p0` among the near-front records.
    pub p0_range: Option<(f64, f64)>,
    pub table: Vec<CocontractionRow>,
}

/// `p0` spread of records close to the (position, velocity) front.
///
/// A record is close when some front member is at most `ε_k` better on every
/// axis, with `ε_k = eps_frac · span_k` of the front (of the front value when
/// the front has no span on that axis).
pub fn cocontraction_analysis(records: &[LossRecord], eps_frac: f64) -> CocontractionSummary {
    let objectives = [Objective::Pos, Objective::Vel];
    let points = objective_points(records, &objectives);
    let front = pareto_indices(&points);
    let eps: Vec<f64> = (0..objectives.len())
        .map(|k| {
            let (lo, hi) = front.iter().fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &i| {
                (lo.min(points[i][k]), hi.max(points[i][k]))
            });
            if front.is_empty() {
                0.0
            } else if hi > lo {
                eps_frac * (hi - lo)
            } else {
                eps_frac * lo.abs()
            }
        })
        .collect();
    let near: Vec<usize> = (0..points.len())
        .filter(|&i| {
            points[i].iter().all(|v| v.is_finite())
                && front
                    .iter()
                    .any(|&f| points[i].iter().zip(&points[f]).zip(&eps).all(|((r, fv), e)| *r <= fv + e))
        })
        .collect();
    let p0_range = near.iter().map(|&i| records[i].theta.p0).fold(None, |acc, p| match acc {
        None => Some((p, p)),
        Some((lo, hi)) => Some((f64::min(lo, p), f64::max(hi, p))),
    });
    let table = records
        .iter()
        .enumerate()
        .map(|(i, r)| CocontractionRow {
            l_pos: r.l_pos,
            l_vel: r.l_vel,
            p0: r.theta.p0,
            on_front: front.binary_search(&i).is_ok(),
            near_front: near.binary_search(&i).is_ok(),
        })
        .collect();
    CocontractionSummary {
        front,
        near,
        p0_range,
        table,
    }
}
