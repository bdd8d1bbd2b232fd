//! Surrogate plant for the antagonistic PAM arm.
//!
//! Every DoF is an independent rotational joint driven by two pneumatic
//! muscles pulling in opposite directions:
//!
//! ```text
//!   desired p ──► first-order lag ──► p ──► Hill force ──► r·(F_a − F_b) ──► I·q̈ = τ
//!                   (τ_p ≈ 83 ms)               ▲                              │
//!                                               └──── contraction V = ±r·q̇ ◄──┘
//! ```
//!
//! Pressures are integrated with explicit Euler at the inner rate (1 kHz) under
//! the 100 Hz control loop. Joint limits are inelastic hard stops.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Control period (100 Hz).
pub const CONTROL_DT: f64 = 0.01;
/// Inner integration step (1 kHz).
pub const INNER_DT: f64 = 0.001;
/// Incremental encoder resolution.
pub const ENCODER_RESOLUTION_DEG: f64 = 0.07;
/// Lag constant for which a 0 → 3 bar step reaches 95 % within 250 ms.
pub const DEFAULT_PRESSURE_TAU: f64 = 0.25 / 3.0;
/// Hard operating cap for any muscle.
pub const MAX_PRESSURE_BAR: f64 = 3.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum PlantError {
    #[error("pressure {pressure} bar outside [{p_min}, {p_max}]")]
    PressureOutOfRange { pressure: f64, p_min: f64, p_max: f64 },
    #[error("invalid plant configuration: {0}")]
    InvalidConfig(String),
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("step {got} s does not match the control period {expected} s")]
    StepMismatch { expected: f64, got: f64 },
    #[error("simulation fault at t = {t} s: non-finite state")]
    Fault { t: f64 },
    #[error("DoF index {0} out of range")]
    DofIndex(usize),
}

/// One pneumatic artificial muscle.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PamConfig {
    /// Minimum (pretension) pressure, bar.
    pub p_min: f64,
    /// Maximum pressure, bar.
    pub p_max: f64,
    /// Maximum isometric force at `p_max`, N.
    pub f0: f64,
    /// Hill force offset `a`, N.
    pub hill_a: f64,
    /// Hill velocity offset `b`, m/s.
    pub hill_b: f64,
    /// Resting muscle length, m.
    pub rest_length: f64,
    /// Moment arm about the joint axis, m.
    pub moment_arm: f64,
    /// Pressure regulation time constant, s.
    pub pressure_tau: f64,
}

impl PamConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        let bad = |msg: &str| Err(PlantError::InvalidConfig(msg.to_string()));
        let all = [
            self.p_min,
            self.p_max,
            self.f0,
            self.hill_a,
            self.hill_b,
            self.rest_length,
            self.moment_arm,
            self.pressure_tau,
        ];
        if all.iter().any(|v| !v.is_finite()) {
            return bad("non-finite muscle parameter");
        }
        if !(0.0 <= self.p_min && self.p_min < self.p_max && self.p_max <= MAX_PRESSURE_BAR) {
            return bad("pressures must satisfy 0 <= p_min < p_max <= 3 bar");
        }
        if self.f0 <= 0.0 || self.hill_a <= 0.0 || self.hill_b <= 0.0 {
            return bad("f0, hill_a and hill_b must be positive");
        }
        if self.moment_arm <= 0.0 || self.pressure_tau <= 0.0 || self.rest_length <= 0.0 {
            return bad("moment_arm, pressure_tau and rest_length must be positive");
        }
        Ok(())
    }

    pub fn clamp_pressure(&self, p: f64) -> f64 {
        p.clamp(self.p_min, self.p_max)
    }

    /// Isometric force available at `pressure` (linear in normalized pressure).
    pub fn isometric_force(&self, pressure: f64) -> f64 {
        self.f0 * (pressure - self.p_min) / (self.p_max - self.p_min)
    }
}

/// Hill force-velocity law `(F + a)(V + b) = b(F0 + a)` with pressure-scaled `F0`.
///
/// `contraction_velocity` is positive while the muscle shortens. Lengthening
/// is treated as isometric, so the result never exceeds the isometric force.
pub fn pam_force(
    cfg: &PamConfig,
    pressure: f64,
    contraction_velocity: f64,
) -> Result<f64, PlantError> {
    if !(cfg.p_min..=cfg.p_max).contains(&pressure) {
        return Err(PlantError::PressureOutOfRange {
            pressure,
            p_min: cfg.p_min,
            p_max: cfg.p_max,
        });
    }
    Ok(hill_force(cfg, pressure, contraction_velocity))
}

fn hill_force(cfg: &PamConfig, pressure: f64, contraction_velocity: f64) -> f64 {
    let f0 = cfg.isometric_force(pressure);
    let v = contraction_velocity.max(0.0);
    let f = cfg.hill_b * (f0 + cfg.hill_a) / (v + cfg.hill_b) - cfg.hill_a;
    f.max(0.0)
}

/// One explicit-Euler step of the first-order pressure lag.
///
/// The target is clamped into the muscle's range first, so the output always
/// stays inside `[p_min, p_max]` for any input.
pub fn step_pressure(cfg: &PamConfig, pressure: f64, desired: f64, dt: f64) -> f64 {
    let target = cfg.clamp_pressure(desired);
    let alpha = (dt / cfg.pressure_tau).min(1.0);
    cfg.clamp_pressure(pressure + alpha * (target - pressure))
}

/// One antagonistic DoF.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DofConfig {
    /// Rotational inertia, kg·m².
    pub inertia: f64,
    /// Viscous joint damping, N·m·s/rad.
    pub damping: f64,
    /// Amplitude of the restoring gravity torque `A·sin(q)`, N·m.
    pub gravity_torque_amp: f64,
    /// Lower joint limit, rad.
    pub q_limit_lo: f64,
    /// Upper joint limit, rad.
    pub q_limit_hi: f64,
    /// Muscle whose pressure drives `q` upwards.
    pub agonist: PamConfig,
    /// Muscle whose pressure drives `q` downwards.
    pub antagonist: PamConfig,
}

impl DofConfig {
    pub fn validate(&self) -> Result<(), PlantError> {
        if !(self.inertia.is_finite() && self.inertia > 0.0) {
            return Err(PlantError::InvalidConfig("inertia must be positive".into()));
        }
        if !(self.damping.is_finite() && self.damping >= 0.0) {
            return Err(PlantError::InvalidConfig("damping must be non-negative".into()));
        }
        if !self.gravity_torque_amp.is_finite() {
            return Err(PlantError::InvalidConfig("gravity torque must be finite".into()));
        }
        if !(self.q_limit_lo.is_finite()
            && self.q_limit_hi.is_finite()
            && self.q_limit_lo < self.q_limit_hi)
        {
            return Err(PlantError::InvalidConfig(
                "joint limits must satisfy q_limit_lo < q_limit_hi".into(),
            ));
        }
        self.agonist.validate()?;
        self.antagonist.validate()
    }
}

/// Net joint torque: muscle pair, viscous damping and gravity.
///
/// Positive agonist excess drives positive `q̇`.
pub fn joint_torque(dof: &DofConfig, q: f64, q_dot: f64, p_a: f64, p_b: f64) -> f64 {
    let f_a = hill_force(&dof.agonist, dof.agonist.clamp_pressure(p_a), dof.agonist.moment_arm * q_dot);
    let f_b = hill_force(
        &dof.antagonist,
        dof.antagonist.clamp_pressure(p_b),
        -dof.antagonist.moment_arm * q_dot,
    );
    dof.agonist.moment_arm * f_a - dof.antagonist.moment_arm * f_b
        - dof.damping * q_dot
        - dof.gravity_torque_amp * q.sin()
}

/// Whole-arm configuration, including timing and sensing.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArmConfig {
    #[serde(default = "default_control_dt")]
    pub control_dt: f64,
    #[serde(default = "default_inner_dt")]
    pub inner_dt: f64,
    #[serde(default = "default_resolution")]
    pub encoder_resolution_deg: f64,
    pub dofs: Vec<DofConfig>,
}

fn default_control_dt() -> f64 {
    CONTROL_DT
}
fn default_inner_dt() -> f64 {
    INNER_DT
}
fn default_resolution() -> f64 {
    ENCODER_RESOLUTION_DEG
}

impl ArmConfig {
    /// Surrogate 4-DoF arm: yaw and pitch at the base, pitch and roll at the
    /// elbow. Forces follow a 1200 N @ 6 bar muscle limited to 3 bar. None of
    /// the rigid-body numbers are measured hardware values.
    pub fn surrogate() -> Self {
        let pam = |rest_length: f64, moment_arm: f64| PamConfig {
            p_min: 0.0,
            p_max: 3.0,
            f0: 600.0,
            hill_a: 150.0,
            hill_b: 0.5,
            rest_length,
            moment_arm,
            pressure_tau: DEFAULT_PRESSURE_TAU,
        };
        let dof = |inertia: f64, damping: f64, gravity: f64, limit_deg: f64, len: f64, arm: f64| {
            DofConfig {
                inertia,
                damping,
                gravity_torque_amp: gravity,
                q_limit_lo: -limit_deg.to_radians(),
                q_limit_hi: limit_deg.to_radians(),
                agonist: pam(len, arm),
                antagonist: pam(len, arm),
            }
        };
        ArmConfig {
            control_dt: CONTROL_DT,
            inner_dt: INNER_DT,
            encoder_resolution_deg: ENCODER_RESOLUTION_DEG,
            dofs: vec![
                dof(0.05, 0.05, 0.0, 90.0, 1.0, 0.01),
                dof(0.05, 0.05, 1.5, 80.0, 0.6, 0.01),
                dof(0.02, 0.03, 0.8, 80.0, 0.6, 0.01),
                dof(0.01, 0.02, 0.0, 80.0, 0.6, 0.008),
            ],
        }
    }

    pub fn n_dofs(&self) -> usize {
        self.dofs.len()
    }

    pub fn validate(&self) -> Result<(), PlantError> {
        if self.dofs.is_empty() {
            return Err(PlantError::InvalidConfig("at least one DoF required".into()));
        }
        if !(self.control_dt > 0.0 && self.inner_dt > 0.0 && self.inner_dt <= self.control_dt) {
            return Err(PlantError::InvalidConfig(
                "need 0 < inner_dt <= control_dt".into(),
            ));
        }
        let ratio = self.control_dt / self.inner_dt;
        if (ratio - ratio.round()).abs() > 1e-9 {
            return Err(PlantError::InvalidConfig(
                "control_dt must be an integer multiple of inner_dt".into(),
            ));
        }
        if self.encoder_resolution_deg.is_nan() || self.encoder_resolution_deg < 0.0 {
            return Err(PlantError::InvalidConfig("encoder resolution must be >= 0".into()));
        }
        self.dofs.iter().try_for_each(DofConfig::validate)
    }

    pub fn inner_steps(&self) -> usize {
        (self.control_dt / self.inner_dt).round() as usize
    }

    /// Muscle configs in state order `[a1, b1, a2, b2, ...]`.
    pub fn muscles(&self) -> impl Iterator<Item = &PamConfig> {
        self.dofs.iter().flat_map(|d| [&d.agonist, &d.antagonist])
    }
}

/// Full arm state. Pressures are ordered `[a1, b1, a2, b2, ...]`.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantState {
    pub q: Vec<f64>,
    pub q_dot: Vec<f64>,
    pub p: Vec<f64>,
    pub t: f64,
}

impl PlantState {
    fn is_finite(&self) -> bool {
        self.q
            .iter()
            .chain(&self.q_dot)
            .chain(&self.p)
            .all(|v| v.is_finite())
    }
}

/// A single simulated arm instance.
#[derive(Debug, Clone)]
pub struct Plant {
    config: ArmConfig,
    state: PlantState,
}

impl Plant {
    /// New plant at rest in `q = 0` with all muscles at `p_min`.
    pub fn new(config: ArmConfig) -> Result<Self, PlantError> {
        config.validate()?;
        let m = config.n_dofs();
        let p = config.muscles().map(|c| c.p_min).collect();
        Ok(Plant {
            state: PlantState {
                q: vec![0.0; m],
                q_dot: vec![0.0; m],
                p,
                t: 0.0,
            },
            config,
        })
    }

    pub fn config(&self) -> &ArmConfig {
        &self.config
    }

    pub fn state(&self) -> &PlantState {
        &self.state
    }

    /// Place the arm at rest in `q` with actual pressures `p`.
    ///
    /// Angles are clamped into the joint limits and pressures into their ranges.
    pub fn reset(&mut self, q: &[f64], p: &[f64]) -> Result<(), PlantError> {
        let m = self.config.n_dofs();
        check_len(m, q.len())?;
        check_len(2 * m, p.len())?;
        for (j, dof) in self.config.dofs.iter().enumerate() {
            self.state.q[j] = q[j].clamp(dof.q_limit_lo, dof.q_limit_hi);
            self.state.q_dot[j] = 0.0;
        }
        for (i, cfg) in self.config.muscles().enumerate() {
            self.state.p[i] = cfg.clamp_pressure(p[i]);
        }
        self.state.t = 0.0;
        Ok(())
    }

    /// Replace the full state; angles and pressures are clamped as in [`Plant::reset`].
    pub fn set_state(&mut self, state: PlantState) -> Result<(), PlantError> {
        let t = state.t;
        let q_dot = state.q_dot.clone();
        check_len(self.config.n_dofs(), q_dot.len())?;
        self.reset(&state.q, &state.p)?;
        if q_dot.iter().any(|v| !v.is_finite()) || !t.is_finite() {
            return Err(PlantError::Fault { t });
        }
        self.state.q_dot = q_dot;
        self.state.t = t;
        Ok(())
    }

    pub fn joint_torque(&self, j: usize) -> Result<f64, PlantError> {
        let dof = self.config.dofs.get(j).ok_or(PlantError::DofIndex(j))?;
        let s = &self.state;
        Ok(joint_torque(dof, s.q[j], s.q_dot[j], s.p[2 * j], s.p[2 * j + 1]))
    }

    /// One inner integration step of length `dt`.
    pub fn step_inner(&mut self, desired: &[f64], dt: f64) -> Result<(), PlantError> {
        check_len(self.state.p.len(), desired.len())?;
        for (j, dof) in self.config.dofs.iter().enumerate() {
            let (q, q_dot) = (self.state.q[j], self.state.q_dot[j]);
            let tau = joint_torque(dof, q, q_dot, self.state.p[2 * j], self.state.p[2 * j + 1]);
            let mut q_next = q + dt * q_dot;
            let mut q_dot_next = q_dot + dt * tau / dof.inertia;
            if q_next <= dof.q_limit_lo {
                q_next = dof.q_limit_lo;
                q_dot_next = q_dot_next.max(0.0);
            } else if q_next >= dof.q_limit_hi {
                q_next = dof.q_limit_hi;
                q_dot_next = q_dot_next.min(0.0);
            }
            self.state.q[j] = q_next;
            self.state.q_dot[j] = q_dot_next;

            let (ia, ib) = (2 * j, 2 * j + 1);
            self.state.p[ia] = step_pressure(&dof.agonist, self.state.p[ia], desired[ia], dt);
            self.state.p[ib] = step_pressure(&dof.antagonist, self.state.p[ib], desired[ib], dt);
        }
        self.state.t += dt;
        if self.state.is_finite() {
            Ok(())
        } else {
            Err(PlantError::Fault { t: self.state.t })
        }
    }

    /// Advance one control period with the desired pressures held constant.
    pub fn simulate_step(&mut self, desired: &[f64], dt: f64) -> Result<&PlantState, PlantError> {
        if (dt - self.config.control_dt).abs() > 1e-12 {
            return Err(PlantError::StepMismatch {
                expected: self.config.control_dt,
                got: dt,
            });
        }
        if desired.iter().any(|p| !p.is_finite()) {
            return Err(PlantError::Fault { t: self.state.t });
        }
        let start = self.state.t;
        let n = self.config.inner_steps();
        for k in 0..n {
            self.step_inner(desired, self.config.inner_dt)?;
            // keep the clock free of accumulated rounding
            self.state.t = start + (k + 1) as f64 * self.config.inner_dt;
        }
        Ok(&self.state)
    }

    pub fn kinetic_energy(&self) -> f64 {
        self.config
            .dofs
            .iter()
            .zip(&self.state.q_dot)
            .map(|(d, w)| 0.5 * d.inertia * w * w)
            .sum()
    }
}

fn check_len(expected: usize, got: usize) -> Result<(), PlantError> {
    if expected == got {
        Ok(())
    } else {
        Err(PlantError::Length { expected, got })
    }
}

/// Quantizing encoder with backward-difference velocity at the control rate.
#[derive(Debug, Clone)]
pub struct Encoder {
    resolution: f64,
    period: f64,
    prev: Option<Vec<f64>>,
}

impl Encoder {
    pub fn new(resolution_rad: f64, period: f64) -> Self {
        Encoder {
            resolution: resolution_rad,
            period,
            prev: None,
        }
    }

    pub fn for_arm(config: &ArmConfig) -> Self {
        Self::new(config.encoder_resolution_deg.to_radians(), config.control_dt)
    }

    pub fn quantize(&self, q: f64) -> f64 {
        if self.resolution > 0.0 {
            (q / self.resolution).round() * self.resolution
        } else {
            q
        }
    }

    /// Forget the velocity history; the next reading reports zero velocity.
    pub fn reset(&mut self) {
        self.prev = None;
    }

    /// Measured `(q, q̇)` for the current state.
    pub fn measure(&mut self, state: &PlantState) -> (Vec<f64>, Vec<f64>) {
        let q: Vec<f64> = state.q.iter().map(|&v| self.quantize(v)).collect();
        let q_dot = match &self.prev {
            Some(prev) => q
                .iter()
                .zip(prev)
                .map(|(now, before)| (now - before) / self.period)
                .collect(),
            None => vec![0.0; q.len()],
        };
        self.prev = Some(q.clone());
        (q, q_dot)
    }
}
