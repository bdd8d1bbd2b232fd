//! Reference trajectories sampled at the control rate.
//!
//! Every generator is built from continuous per-DoF [`Profile`]s with analytic
//! first and second derivatives, then sampled on `t_k = k·dt`, `k = 0..=N`.

use std::f64::consts::PI;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::CONTROL_DT;

/// Transition length of rectangular references.
pub const RECT_TRANSITION: f64 = 0.02;
/// Upper bound on the corner-blend half width of truncated ramps.
pub const MAX_CORNER_BLEND: f64 = 0.01;

#[derive(Debug, Error)]
pub enum TrajError {
    #[error("invalid trajectory argument: {0}")]
    InvalidArgument(String),
    #[error("DoF {dof} reference {q} rad at t = {t} s leaves joint limits [{lo}, {hi}]")]
    OutOfLimits {
        dof: usize,
        t: f64,
        q: f64,
        lo: f64,
        hi: f64,
    },
    #[error("trajectory csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("trajectory csv: {0}")]
    Format(String),
}

/// Quintic minimum-jerk move from `q0` at `t0` to `q1` at `t1`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MinJerk {
    pub t0: f64,
    pub t1: f64,
    pub q0: f64,
    pub q1: f64,
}

impl MinJerk {
    fn eval(&self, t: f64) -> (f64, f64, f64) {
        let span = self.t1 - self.t0;
        let d = self.q1 - self.q0;
        if t <= self.t0 {
            return (self.q0, 0.0, 0.0);
        }
        if t >= self.t1 {
            return (self.q1, 0.0, 0.0);
        }
        let s = (t - self.t0) / span;
        let (s2, s3) = (s * s, s * s * s);
        let pos = 10.0 * s3 - 15.0 * s3 * s + 6.0 * s3 * s2;
        let vel = 30.0 * s2 - 60.0 * s3 + 30.0 * s2 * s2;
        let acc = 60.0 * s - 180.0 * s2 + 120.0 * s3;
        (self.q0 + d * pos, d * vel / span, d * acc / (span * span))
    }
}

/// Continuous reference for one DoF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Profile {
    Hold(f64),
    Sine {
        center: f64,
        amplitude: f64,
        freq: f64,
    },
    /// Periodic trapezoid starting at `center` and rising. `ramp_time` is the
    /// time for a full `−A → +A` transition; corners get parabolic blends.
    Trapezoid {
        center: f64,
        amplitude: f64,
        period: f64,
        ramp_time: f64,
        blend: f64,
    },
    /// Consecutive minimum-jerk moves, holding position between and after them.
    Path(Vec<MinJerk>),
}

impl Profile {
    /// `(q, q̇, q̈)` at time `t`.
    pub fn eval(&self, t: f64) -> (f64, f64, f64) {
        match self {
            Profile::Hold(q) => (*q, 0.0, 0.0),
            Profile::Sine {
                center,
                amplitude,
                freq,
            } => {
                let w = 2.0 * PI * freq;
                let (s, c) = (w * t).sin_cos();
                (center + amplitude * s, amplitude * w * c, -amplitude * w * w * s)
            }
            Profile::Trapezoid {
                center,
                amplitude,
                period,
                ramp_time,
                blend,
            } => {
                let (q, qd, qdd) = trapezoid(*amplitude, *period, *ramp_time, *blend, t);
                (center + q, qd, qdd)
            }
            Profile::Path(segs) => {
                let Some(first) = segs.first() else {
                    return (0.0, 0.0, 0.0);
                };
                if t <= first.t0 {
                    return (first.q0, 0.0, 0.0);
                }
                segs.iter()
                    .rev()
                    .find(|s| t >= s.t0)
                    .map(|s| s.eval(t))
                    .unwrap_or((first.q0, 0.0, 0.0))
            }
        }
    }
}

fn trapezoid(a: f64, period: f64, ramp: f64, blend: f64, t: f64) -> (f64, f64, f64) {
    let plateau = 0.5 * (period - 2.0 * ramp);
    let slope = 2.0 * a / ramp;
    let tau = t.rem_euclid(period);
    let corners = [
        (0.5 * ramp, a, slope, 0.0),
        (0.5 * ramp + plateau, a, 0.0, -slope),
        (1.5 * ramp + plateau, -a, -slope, 0.0),
        (1.5 * ramp + 2.0 * plateau, -a, 0.0, slope),
    ];
    for &(tc, qc, s_in, s_out) in &corners {
        if blend > 0.0 && (tau - tc).abs() < blend {
            let x = tau - tc + blend;
            let jump = s_out - s_in;
            return (
                qc + s_in * (tau - tc) + jump * x * x / (4.0 * blend),
                s_in + jump * x / (2.0 * blend),
                jump / (2.0 * blend),
            );
        }
    }
    // piecewise-linear part
    let (c1, c2, c3, c4) = (corners[0].0, corners[1].0, corners[2].0, corners[3].0);
    if tau < c1 {
        (slope * tau, slope, 0.0)
    } else if tau < c2 {
        (a, 0.0, 0.0)
    } else if tau < c3 {
        (a - slope * (tau - c2), -slope, 0.0)
    } else if tau < c4 {
        (-a, 0.0, 0.0)
    } else {
        (-a + slope * (tau - c4), slope, 0.0)
    }
}

/// Sampled reference: `q[k][j]` is DoF `j` at `t = k·dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub dt: f64,
    pub q: Vec<Vec<f64>>,
    pub qd: Vec<Vec<f64>>,
    pub qdd: Vec<Vec<f64>>,
}

impl Trajectory {
    /// Sample `profiles` on `[0, duration]` and check the joint limits.
    pub fn from_profiles(
        profiles: &[Profile],
        duration: f64,
        dt: f64,
        limits: &[(f64, f64)],
    ) -> Result<Self, TrajError> {
        if !(dt > 0.0 && duration >= dt) {
            return Err(TrajError::InvalidArgument(format!(
                "need dt > 0 and duration >= dt (dt = {dt}, duration = {duration})"
            )));
        }
        if profiles.len() != limits.len() {
            return Err(TrajError::InvalidArgument(format!(
                "{} profiles for {} joint limits",
                profiles.len(),
                limits.len()
            )));
        }
        let n = (duration / dt).round() as usize;
        let mut traj = Trajectory {
            dt,
            q: Vec::with_capacity(n + 1),
            qd: Vec::with_capacity(n + 1),
            qdd: Vec::with_capacity(n + 1),
        };
        for k in 0..=n {
            let t = k as f64 * dt;
            let (mut q, mut qd, mut qdd) = (vec![], vec![], vec![]);
            for p in profiles {
                let (a, b, c) = p.eval(t);
                q.push(a);
                qd.push(b);
                qdd.push(c);
            }
            traj.q.push(q);
            traj.qd.push(qd);
            traj.qdd.push(qdd);
        }
        traj.check_limits(limits)?;
        Ok(traj)
    }

    pub fn len(&self) -> usize {
        self.q.len()
    }

    pub fn is_empty(&self) -> bool {
        self.q.is_empty()
    }

    pub fn n_dofs(&self) -> usize {
        self.q.first().map_or(0, Vec::len)
    }

    pub fn time(&self, k: usize) -> f64 {
        k as f64 * self.dt
    }

    pub fn duration(&self) -> f64 {
        self.time(self.len().saturating_sub(1))
    }

    pub fn check_limits(&self, limits: &[(f64, f64)]) -> Result<(), TrajError> {
        for (k, row) in self.q.iter().enumerate() {
            for (j, (&q, &(lo, hi))) in row.iter().zip(limits).enumerate() {
                if !(lo..=hi).contains(&q) {
                    return Err(TrajError::OutOfLimits {
                        dof: j,
                        t: self.time(k),
                        q,
                        lo,
                        hi,
                    });
                }
            }
        }
        Ok(())
    }

    /// Columns `t, q1..qM, qd1..qdM, qdd1..qddM` (SI units).
    pub fn write_csv<W: Write>(&self, w: W) -> Result<(), TrajError> {
        let m = self.n_dofs();
        let mut wr = csv::Writer::from_writer(w);
        let mut header = vec!["t".to_string()];
        for prefix in ["q", "qd", "qdd"] {
            header.extend((1..=m).map(|j| format!("{prefix}{j}")));
        }
        wr.write_record(&header)?;
        for k in 0..self.len() {
            let mut rec = vec![self.time(k).to_string()];
            for part in [&self.q[k], &self.qd[k], &self.qdd[k]] {
                rec.extend(part.iter().map(f64::to_string));
            }
            wr.write_record(&rec)?;
        }
        wr.flush().map_err(csv::Error::from)?;
        Ok(())
    }

    pub fn read_csv<R: Read>(r: R) -> Result<Self, TrajError> {
        let mut rd = csv::ReaderBuilder::new().comment(Some(b'#')).from_reader(r);
        let header = rd.headers()?.clone();
        if header.is_empty() || (header.len() - 1) % 3 != 0 {
            return Err(TrajError::Format(format!("unexpected header {header:?}")));
        }
        let m = (header.len() - 1) / 3;
        let mut traj = Trajectory {
            dt: 0.0,
            q: vec![],
            qd: vec![],
            qdd: vec![],
        };
        let mut times = vec![];
        for rec in rd.records() {
            let rec = rec?;
            let vals = rec
                .iter()
                .map(|s| s.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| TrajError::Format(e.to_string()))?;
            if vals.len() != 3 * m + 1 {
                return Err(TrajError::Format("ragged row".into()));
            }
            times.push(vals[0]);
            traj.q.push(vals[1..=m].to_vec());
            traj.qd.push(vals[m + 1..=2 * m].to_vec());
            traj.qdd.push(vals[2 * m + 1..].to_vec());
        }
        traj.dt = match times.as_slice() {
            [_, t1, ..] => *t1,
            _ => CONTROL_DT,
        };
        Ok(traj)
    }
}

fn check_positive(name: &str, v: f64) -> Result<(), TrajError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(TrajError::InvalidArgument(format!("{name} must be positive, got {v}")))
    }
}

/// `q = A·sin(2πft)` about the zero pose for every DoF.
pub fn sinusoid(
    freq: f64,
    amplitudes: &[f64],
    duration: f64,
    limits: &[(f64, f64)],
) -> Result<Trajectory, TrajError> {
    check_positive("frequency", freq)?;
    let profiles: Vec<Profile> = amplitudes
        .iter()
        .map(|&amplitude| Profile::Sine {
            center: 0.0,
            amplitude,
            freq,
        })
        .collect();
    Trajectory::from_profiles(&profiles, duration, CONTROL_DT, limits)
}

/// Truncated-triangle profile: ramps between `±amplitude`, holding for
/// `plateau_fraction` of each period.
pub fn ramp_profile(amplitude: f64, period: f64, plateau_fraction: f64) -> Result<Profile, TrajError> {
    check_positive("period", period)?;
    if !(0.0 < plateau_fraction && plateau_fraction < 1.0) {
        return Err(TrajError::InvalidArgument(
            "plateau_fraction must lie in (0, 1)".into(),
        ));
    }
    let ramp_time = 0.5 * period * (1.0 - plateau_fraction);
    let plateau = 0.5 * period * plateau_fraction;
    Ok(Profile::Trapezoid {
        center: 0.0,
        amplitude,
        period,
        ramp_time,
        blend: MAX_CORNER_BLEND.min(0.5 * plateau).min(0.5 * ramp_time),
    })
}

/// Square wave between `levels.0` and `levels.1` with short smoothed transitions.
pub fn rect_profile(levels: (f64, f64), period: f64) -> Result<Profile, TrajError> {
    check_positive("period", period)?;
    if period <= 4.0 * RECT_TRANSITION {
        return Err(TrajError::InvalidArgument("period too short for rectangular reference".into()));
    }
    Ok(Profile::Trapezoid {
        center: 0.5 * (levels.0 + levels.1),
        amplitude: 0.5 * (levels.1 - levels.0),
        period,
        ramp_time: RECT_TRANSITION,
        blend: 0.5 * RECT_TRANSITION,
    })
}

pub fn truncated_ramp(
    period: f64,
    amplitudes: &[f64],
    plateau_fraction: f64,
    duration: f64,
    limits: &[(f64, f64)],
) -> Result<Trajectory, TrajError> {
    let profiles = amplitudes
        .iter()
        .map(|&a| ramp_profile(a, period, plateau_fraction))
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::from_profiles(&profiles, duration, CONTROL_DT, limits)
}

pub fn rectangular(
    period: f64,
    levels: &[(f64, f64)],
    duration: f64,
    limits: &[(f64, f64)],
) -> Result<Trajectory, TrajError> {
    let profiles = levels
        .iter()
        .map(|&l| rect_profile(l, period))
        .collect::<Result<Vec<_>, _>>()?;
    Trajectory::from_profiles(&profiles, duration, CONTROL_DT, limits)
}

/// Truncated ramps on every DoF but the last, which gets a rectangular reference.
pub fn ramp_and_rect(
    period: f64,
    amplitudes: &[f64],
    plateau_fraction: f64,
    duration: f64,
    limits: &[(f64, f64)],
) -> Result<Trajectory, TrajError> {
    let Some((&last, rest)) = amplitudes.split_last() else {
        return Err(TrajError::InvalidArgument("no DoFs".into()));
    };
    let mut profiles = rest
        .iter()
        .map(|&a| ramp_profile(a, period, plateau_fraction))
        .collect::<Result<Vec<_>, _>>()?;
    profiles.push(rect_profile((-last, last), period)?);
    Trajectory::from_profiles(&profiles, duration, CONTROL_DT, limits)
}

/// Poses of the hitting reference.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HittingSpec {
    /// Pose reached by the slow approach (rad).
    pub start: Vec<f64>,
    /// Pose at the end of the fast swing (rad).
    pub end: Vec<f64>,
}

impl Default for HittingSpec {
    fn default() -> Self {
        let deg = |v: [f64; 4]| v.iter().map(|d| d.to_radians()).collect();
        HittingSpec {
            start: deg([-10.0, -20.0, -20.0, -10.0]),
            end: deg([10.0, 20.0, 20.0, 10.0]),
        }
    }
}

/// Phase boundaries of the hitting reference (s).
pub const HITTING_PHASES: [f64; 5] = [0.0, 1.0, 3.0, 4.0, 5.0];

/// Hold zero (0–1 s), slow approach (1–3 s), fast swing (3–4 s), return (4–5 s).
pub fn hitting_profiles(spec: &HittingSpec) -> Result<Vec<Profile>, TrajError> {
    if spec.start.len() != spec.end.len() {
        return Err(TrajError::InvalidArgument("start and end poses differ in length".into()));
    }
    let [_, t1, t2, t3, t4] = HITTING_PHASES;
    Ok(spec
        .start
        .iter()
        .zip(&spec.end)
        .map(|(&s, &e)| {
            Profile::Path(vec![
                MinJerk { t0: t1, t1: t2, q0: 0.0, q1: s },
                MinJerk { t0: t2, t1: t3, q0: s, q1: e },
                MinJerk { t0: t3, t1: t4, q0: e, q1: 0.0 },
            ])
        })
        .collect())
}

pub fn hitting_trajectory(spec: &HittingSpec, limits: &[(f64, f64)]) -> Result<Trajectory, TrajError> {
    let profiles = hitting_profiles(spec)?;
    Trajectory::from_profiles(&profiles, HITTING_PHASES[4], CONTROL_DT, limits)
}
