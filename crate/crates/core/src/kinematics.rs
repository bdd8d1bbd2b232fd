//! Forward kinematics of the 2+2 rotational chain and task-space profiles.
//!
//! Axis layout (zero pose points straight along the base `z` axis):
//! `q1` yaw about the base `z`, `q2` pitch about `y`, link `L1`, then at the
//! elbow `q4` roll about the link axis followed by `q3` pitch, link `L2`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum KinematicsError {
    #[error("link lengths must be positive")]
    InvalidChain,
    #[error("need at least 3 samples, got {0}")]
    TooShort(usize),
    #[error("expected 4 joint angles, got {0}")]
    Dofs(usize),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KinematicChain {
    /// Base to elbow, m.
    pub upper: f64,
    /// Elbow to end effector, m.
    pub lower: f64,
}

impl Default for KinematicChain {
    fn default() -> Self {
        KinematicChain { upper: 0.3, lower: 0.3 }
    }
}

impl KinematicChain {
    pub fn new(upper: f64, lower: f64) -> Result<Self, KinematicsError> {
        if upper > 0.0 && lower > 0.0 && upper.is_finite() && lower.is_finite() {
            Ok(KinematicChain { upper, lower })
        } else {
            Err(KinematicsError::InvalidChain)
        }
    }

    pub fn reach(&self) -> f64 {
        self.upper + self.lower
    }

    /// End-effector position in the base frame.
    pub fn forward(&self, q: &[f64]) -> Result<[f64; 3], KinematicsError> {
        let &[q1, q2, q3, q4] = q else {
            return Err(KinematicsError::Dofs(q.len()));
        };
        let (s1, c1) = q1.sin_cos();
        let (s2, c2) = q2.sin_cos();
        let (s3, c3) = q3.sin_cos();
        let (s4, c4) = q4.sin_cos();
        // elbow frame: roll then pitch of the forearm, plus the upper link
        let vx = self.lower * s3 * c4;
        let vy = self.lower * s3 * s4;
        let vz = self.upper + self.lower * c3;
        // base pitch, then base yaw
        let ax = c2 * vx + s2 * vz;
        let az = -s2 * vx + c2 * vz;
        Ok([c1 * ax - s1 * vy, s1 * ax + c1 * vy, az])
    }

    /// Task-space positions and speed/acceleration magnitudes of a joint trace.
    pub fn task_profiles(&self, q: &[Vec<f64>], dt: f64) -> Result<TaskProfiles, KinematicsError> {
        if q.len() < 3 {
            return Err(KinematicsError::TooShort(q.len()));
        }
        let x: Vec<[f64; 3]> = q.iter().map(|row| self.forward(row)).collect::<Result<_, _>>()?;
        let n = x.len();
        let norm = |v: [f64; 3]| (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
        let diff = |a: &[f64; 3], b: &[f64; 3], scale: f64| {
            [(a[0] - b[0]) * scale, (a[1] - b[1]) * scale, (a[2] - b[2]) * scale]
        };

        let mut speed = vec![0.0; n];
        let mut accel = vec![0.0; n];
        for k in 1..n - 1 {
            speed[k] = norm(diff(&x[k + 1], &x[k - 1], 0.5 / dt));
            let second = [
                x[k + 1][0] - 2.0 * x[k][0] + x[k - 1][0],
                x[k + 1][1] - 2.0 * x[k][1] + x[k - 1][1],
                x[k + 1][2] - 2.0 * x[k][2] + x[k - 1][2],
            ];
            accel[k] = norm(second) / (dt * dt);
        }
        // one-sided at the ends
        speed[0] = norm(diff(&x[1], &x[0], 1.0 / dt));
        speed[n - 1] = norm(diff(&x[n - 1], &x[n - 2], 1.0 / dt));
        accel[0] = accel[1];
        accel[n - 1] = accel[n - 2];

        Ok(TaskProfiles { dt, x, speed, accel })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TaskProfiles {
    pub dt: f64,
    pub x: Vec<[f64; 3]>,
    pub speed: Vec<f64>,
    pub accel: Vec<f64>,
}

impl TaskProfiles {
    pub fn max_speed(&self) -> f64 {
        self.speed.iter().copied().fold(0.0, f64::max)
    }

    pub fn max_accel(&self) -> f64 {
        self.accel.iter().copied().fold(0.0, f64::max)
    }
}
