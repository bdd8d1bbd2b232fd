//! Open-loop pressure-swap experiment.
//!
//! Selected DoFs start with the agonist at minimum and the antagonist at
//! maximum pressure; after the hold phase both desired pressures are swapped,
//! throwing the joints towards the opposite limit.

use pam_core::control::cocontraction_map;
use pam_core::kinematics::KinematicChain;
use pam_core::plant::{ArmConfig, Plant};
use serde::Serialize;

use crate::config::BallisticSection;
use crate::CliError;

#[derive(Debug, Clone, PartialEq, Default)]
pub struct BallisticTrace {
    pub t: Vec<f64>,
    pub q: Vec<Vec<f64>>,
    pub q_dot: Vec<Vec<f64>>,
    pub p: Vec<Vec<f64>>,
    pub x: Vec<[f64; 3]>,
    pub task_speed: Vec<f64>,
    pub task_accel: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BallisticReport {
    pub swapped_dofs: Vec<usize>,
    pub peak_joint_speed_deg_s: Vec<f64>,
    pub peak_joint_accel_deg_s2: Vec<f64>,
    pub peak_task_speed_m_s: f64,
    pub peak_task_accel_m_s2: f64,
    pub joint_limits_respected: bool,
    pub pressures_in_range: bool,
}

impl BallisticReport {
    /// Largest joint speed over all DoFs, rad/s.
    pub fn peak_joint_speed(&self) -> f64 {
        self.peak_joint_speed_deg_s.iter().fold(0.0f64, |m, v| m.max(*v)).to_radians()
    }
}

fn desired_pressures(arm: &ArmConfig, sec: &BallisticSection, swung: bool) -> Vec<f64> {
    arm.dofs
        .iter()
        .enumerate()
        .flat_map(|(j, dof)| {
            if sec.dofs.contains(&(j + 1)) {
                let (a, b) = (&dof.agonist, &dof.antagonist);
                if swung {
                    [a.p_max, b.p_min]
                } else {
                    [a.p_min, b.p_max]
                }
            } else {
                let (pa, pb) = cocontraction_map(0.0, sec.p0, &dof.agonist, &dof.antagonist);
                [pa, pb]
            }
        })
        .collect()
}

pub fn run_ballistic(arm: &ArmConfig, sec: &BallisticSection) -> Result<(BallisticTrace, BallisticReport), CliError> {
    let chain = KinematicChain::new(sec.upper_link, sec.lower_link)
        .map_err(|e| CliError::Config(format!("ballistic: {e}")))?;
    if !(sec.hold_time >= 0.0 && sec.swing_time > 0.0) {
        return Err(CliError::Config("ballistic: phase durations must be positive".into()));
    }
    let m = arm.n_dofs();
    let dt = arm.control_dt;
    let hold = desired_pressures(arm, sec, false);
    let swing = desired_pressures(arm, sec, true);
    let mut plant = Plant::new(arm.clone())?;
    plant.reset(&vec![0.0; m], &hold)?;

    let hold_steps = (sec.hold_time / dt).round() as usize;
    let total = hold_steps + (sec.swing_time / dt).round() as usize;
    let mut trace = BallisticTrace::default();
    let mut record = |plant: &Plant, k: usize| {
        let s = plant.state();
        trace.t.push(k as f64 * dt);
        trace.q.push(s.q.clone());
        trace.q_dot.push(s.q_dot.clone());
        trace.p.push(s.p.clone());
    };
    record(&plant, 0);
    for k in 0..total {
        let desired = if k < hold_steps { &hold } else { &swing };
        plant.simulate_step(desired, dt)?;
        record(&plant, k + 1);
    }

    let task = chain
        .task_profiles(&trace.q, dt)
        .map_err(|e| CliError::Sim(format!("kinematics: {e}")))?;
    trace.x = task.x.clone();
    trace.task_speed = task.speed.clone();
    trace.task_accel = task.accel.clone();

    let n = trace.q.len();
    let mut peak_speed = vec![0.0f64; m];
    let mut peak_accel = vec![0.0f64; m];
    for k in 0..n {
        for j in 0..m {
            peak_speed[j] = peak_speed[j].max(trace.q_dot[k][j].abs());
            if k > 0 {
                let acc = (trace.q_dot[k][j] - trace.q_dot[k - 1][j]) / dt;
                peak_accel[j] = peak_accel[j].max(acc.abs());
            }
        }
    }
    let joint_limits_respected = trace.q.iter().all(|q| {
        q.iter()
            .zip(&arm.dofs)
            .all(|(v, d)| *v >= d.q_limit_lo && *v <= d.q_limit_hi)
    });
    let pressures_in_range = trace
        .p
        .iter()
        .all(|p| p.iter().zip(arm.muscles()).all(|(v, c)| *v >= c.p_min && *v <= c.p_max));
    let report = BallisticReport {
        swapped_dofs: sec.dofs.clone(),
        peak_joint_speed_deg_s: peak_speed.iter().map(|v| v.to_degrees()).collect(),
        peak_joint_accel_deg_s2: peak_accel.iter().map(|v| v.to_degrees()).collect(),
        peak_task_speed_m_s: task.max_speed(),
        peak_task_accel_m_s2: task.max_accel(),
        joint_limits_respected,
        pressures_in_range,
    };
    Ok((trace, report))
}
