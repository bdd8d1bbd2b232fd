//! Cascaded PID + feedforward control and the co-contraction pressure map.
//!
//! The scalar command `u` of each DoF is split into two desired pressures so
//! that `u = ±1` always spans the same fraction of the allowed pressure range,
//! independent of the co-contraction level `p0`.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::plant::{ArmConfig, PamConfig};

/// Number of tuned parameters per DoF.
pub const N_PARAMS: usize = 7;

/// Parameter names in vector order.
pub const PARAM_NAMES: [&str; N_PARAMS] = ["kp", "kd", "ki", "kpos", "kvel", "kacc", "p0"];

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ControlError {
    #[error("expected {expected} values, got {got}")]
    Length { expected: usize, got: usize },
    #[error("parameter {name} = {value} outside [{lo}, {hi}]")]
    OutOfBounds {
        name: &'static str,
        value: f64,
        lo: f64,
        hi: f64,
    },
    #[error("invalid bounds for {0}: need lo < hi")]
    InvalidBounds(&'static str),
}

/// Controller parameters of one DoF.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DofParams {
    pub kp: f64,
    pub kd: f64,
    pub ki: f64,
    pub kpos: f64,
    pub kvel: f64,
    pub kacc: f64,
    /// Co-contraction level in `[0, 1]`.
    pub p0: f64,
}

impl DofParams {
    /// All gains zero, co-contraction `p0`.
    pub fn passive(p0: f64) -> Self {
        DofParams {
            kp: 0.0,
            kd: 0.0,
            ki: 0.0,
            kpos: 0.0,
            kvel: 0.0,
            kacc: 0.0,
            p0,
        }
    }

    pub fn to_array(&self) -> [f64; N_PARAMS] {
        [self.kp, self.kd, self.ki, self.kpos, self.kvel, self.kacc, self.p0]
    }

    pub fn from_slice(v: &[f64]) -> Result<Self, ControlError> {
        if v.len() != N_PARAMS {
            return Err(ControlError::Length {
                expected: N_PARAMS,
                got: v.len(),
            });
        }
        Ok(DofParams {
            kp: v[0],
            kd: v[1],
            ki: v[2],
            kpos: v[3],
            kvel: v[4],
            kacc: v[5],
            p0: v[6],
        })
    }
}

/// Box constraints `θ_lim` for one DoF, `[lo, hi]` per parameter.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParamBounds {
    pub kp: [f64; 2],
    pub kd: [f64; 2],
    pub ki: [f64; 2],
    pub kpos: [f64; 2],
    pub kvel: [f64; 2],
    pub kacc: [f64; 2],
    pub p0: [f64; 2],
}

impl Default for ParamBounds {
    fn default() -> Self {
        ParamBounds {
            kp: [0.0, 10.0],
            kd: [0.0, 1.0],
            ki: [0.0, 10.0],
            kpos: [-1.0, 1.0],
            kvel: [-0.5, 0.5],
            kacc: [-0.05, 0.05],
            p0: [0.0, 1.0],
        }
    }
}

impl ParamBounds {
    pub fn as_pairs(&self) -> [(f64, f64); N_PARAMS] {
        [self.kp, self.kd, self.ki, self.kpos, self.kvel, self.kacc, self.p0].map(|b| (b[0], b[1]))
    }

    pub fn validate(&self) -> Result<(), ControlError> {
        for ((lo, hi), name) in self.as_pairs().into_iter().zip(PARAM_NAMES) {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(ControlError::InvalidBounds(name));
            }
        }
        if self.p0[0] < 0.0 || self.p0[1] > 1.0 {
            return Err(ControlError::InvalidBounds("p0"));
        }
        Ok(())
    }

    pub fn check(&self, params: &DofParams) -> Result<(), ControlError> {
        for (((lo, hi), value), name) in self
            .as_pairs()
            .into_iter()
            .zip(params.to_array())
            .zip(PARAM_NAMES)
        {
            if !(lo..=hi).contains(&value) {
                return Err(ControlError::OutOfBounds { name, value, lo, hi });
            }
        }
        Ok(())
    }
}

/// Saturation `min(max(x, l_min), l_max)`.
///
/// # Panics
///
/// Panics if `l_min > l_max`.
pub fn sat(x: f64, l_min: f64, l_max: f64) -> f64 {
    assert!(l_min <= l_max, "sat: l_min ({l_min}) > l_max ({l_max})");
    x.max(l_min).min(l_max)
}

/// Slope correction `c = 0.5 − sat(|p0 − 0.5|, 0, 0.5)`.
pub fn cocontraction_slope(p0: f64) -> f64 {
    0.5 - sat((p0 - 0.5).abs(), 0.0, 0.5)
}

/// Desired pressures `(p_a, p_b)` of an antagonistic pair for command `u`.
///
/// `p_x = (p_max − p_min)(p0 ± c·sat(u, −1, 1)) + p_min`, agonist `+`,
/// antagonist `−`. Outputs are clamped into the muscle ranges to absorb
/// last-ulp rounding.
pub fn cocontraction_map(u: f64, p0: f64, pam_a: &PamConfig, pam_b: &PamConfig) -> (f64, f64) {
    let c = cocontraction_slope(p0);
    let s = sat(u, -1.0, 1.0);
    let p_a = (pam_a.p_max - pam_a.p_min) * (p0 + c * s) + pam_a.p_min;
    let p_b = (pam_b.p_max - pam_b.p_min) * (p0 - c * s) + pam_b.p_min;
    (pam_a.clamp_pressure(p_a), pam_b.clamp_pressure(p_b))
}

/// Plain symmetric map `p_x = p0 ± u` (bar) with post-hoc clamping.
pub fn legacy_cocontraction_map(
    u: f64,
    p0_bar: f64,
    pam_a: &PamConfig,
    pam_b: &PamConfig,
) -> (f64, f64) {
    (
        pam_a.clamp_pressure(p0_bar + u),
        pam_b.clamp_pressure(p0_bar - u),
    )
}

/// Command interval in which the legacy map changes at least one pressure.
pub fn legacy_effective_range(p0_bar: f64, pam_a: &PamConfig, pam_b: &PamConfig) -> (f64, f64) {
    let lo = (pam_a.p_min - p0_bar).min(p0_bar - pam_b.p_max);
    let hi = (pam_a.p_max - p0_bar).max(p0_bar - pam_b.p_min);
    (lo, hi)
}

/// PID feedback `kP·e + kD·ė + kI·∫e` per DoF.
pub fn feedback(params: &[DofParams], err: &[f64], err_dot: &[f64], err_int: &[f64]) -> Vec<f64> {
    params
        .iter()
        .zip(err)
        .zip(err_dot)
        .zip(err_int)
        .map(|(((p, e), ed), ei)| p.kp * e + p.kd * ed + p.ki * ei)
        .collect()
}

/// Feedforward `kpos·q_des + kvel·q̇_des + kacc·q̈_des` per DoF.
pub fn feedforward(params: &[DofParams], q_des: &[f64], qd_des: &[f64], qdd_des: &[f64]) -> Vec<f64> {
    params
        .iter()
        .zip(q_des)
        .zip(qd_des)
        .zip(qdd_des)
        .map(|(((p, q), qd), qdd)| p.kpos * q + p.kvel * qd + p.kacc * qdd)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlConfig {
    /// Anti-windup bound on the integrated position error, rad·s.
    pub integral_limit: f64,
}

impl Default for ControlConfig {
    fn default() -> Self {
        ControlConfig { integral_limit: 0.5 }
    }
}

/// Integrated position error per DoF.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlState {
    pub integral_error: Vec<f64>,
}

impl ControlState {
    pub fn new(n_dofs: usize) -> Self {
        ControlState {
            integral_error: vec![0.0; n_dofs],
        }
    }

    pub fn reset(&mut self) {
        self.integral_error.iter_mut().for_each(|v| *v = 0.0);
    }
}

/// Measured joint state.
#[derive(Debug, Clone, Copy)]
pub struct Measured<'a> {
    pub q: &'a [f64],
    pub q_dot: &'a [f64],
}

/// Desired joint state at one time step.
#[derive(Debug, Clone, Copy)]
pub struct Desired<'a> {
    pub q: &'a [f64],
    pub q_dot: &'a [f64],
    pub q_ddot: &'a [f64],
}

#[derive(Debug, Clone, PartialEq)]
pub struct ControlOutput {
    /// Desired pressures `[a1, b1, a2, b2, ...]`.
    pub pressures: Vec<f64>,
    /// Raw, unsaturated command per DoF.
    pub u: Vec<f64>,
}

/// One control period: `u = u_fb + u_ff`, then the co-contraction map.
///
/// Tracking errors are taken as reference minus measurement, so positive
/// feedback gains are stabilizing under the plant's sign convention.
pub fn control_step(
    params: &[DofParams],
    state: &mut ControlState,
    arm: &ArmConfig,
    cfg: &ControlConfig,
    measured: Measured<'_>,
    desired: Desired<'_>,
    dt: f64,
) -> Result<ControlOutput, ControlError> {
    let m = arm.n_dofs();
    for len in [
        params.len(),
        state.integral_error.len(),
        measured.q.len(),
        measured.q_dot.len(),
        desired.q.len(),
        desired.q_dot.len(),
        desired.q_ddot.len(),
    ] {
        if len != m {
            return Err(ControlError::Length { expected: m, got: len });
        }
    }

    let err: Vec<f64> = desired.q.iter().zip(measured.q).map(|(d, q)| d - q).collect();
    let err_dot: Vec<f64> = desired
        .q_dot
        .iter()
        .zip(measured.q_dot)
        .map(|(d, q)| d - q)
        .collect();
    let limit = cfg.integral_limit;
    for (acc, e) in state.integral_error.iter_mut().zip(&err) {
        *acc = (*acc + e * dt).clamp(-limit, limit);
    }

    let u_fb = feedback(params, &err, &err_dot, &state.integral_error);
    let u_ff = feedforward(params, desired.q, desired.q_dot, desired.q_ddot);
    let u: Vec<f64> = u_fb.iter().zip(&u_ff).map(|(a, b)| a + b).collect();

    let mut pressures = Vec::with_capacity(2 * m);
    for ((dof, p), &ui) in arm.dofs.iter().zip(params).zip(&u) {
        let (pa, pb) = cocontraction_map(ui, p.p0, &dof.agonist, &dof.antagonist);
        pressures.push(pa);
        pressures.push(pb);
    }
    Ok(ControlOutput { pressures, u })
}

/// Pressures produced by `u = 0` for every DoF.
pub fn rest_pressures(params: &[DofParams], arm: &ArmConfig) -> Vec<f64> {
    arm.dofs
        .iter()
        .zip(params)
        .flat_map(|(dof, p)| {
            let (a, b) = cocontraction_map(0.0, p.p0, &dof.agonist, &dof.antagonist);
            [a, b]
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::plant::ArmConfig;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn pams() -> (PamConfig, PamConfig) {
        let d = ArmConfig::surrogate().dofs[0].clone();
        (d.agonist, d.antagonist)
    }

    #[test]
    fn sat_clamps() {
        assert_eq!(sat(2.0, -1.0, 1.0), 1.0);
        assert_eq!(sat(0.5, -1.0, 1.0), 0.5);
        assert_eq!(sat(-3.0, -1.0, 1.0), -1.0);
    }

    #[test]
    #[should_panic]
    fn sat_rejects_inverted_limits() {
        sat(0.0, 1.0, -1.0);
    }

    #[test]
    fn feedback_examples() {
        let zero = DofParams::passive(0.5);
        assert_eq!(feedback(&[zero], &[0.0], &[0.0], &[0.0]), vec![0.0]);
        let p = DofParams { kp: 1.0, ..zero };
        assert_eq!(feedback(&[p], &[0.2], &[3.0], &[4.0]), vec![0.2]);
    }

    #[test]
    fn feedback_matches_dot_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..100 {
            let g: [f64; 3] = [rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0), rng.random_range(-5.0..5.0)];
            let e: [f64; 3] = [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
            let p = DofParams { kp: g[0], kd: g[1], ki: g[2], ..DofParams::passive(0.5) };
            let naive: f64 = g.iter().zip(&e).map(|(a, b)| a * b).sum();
            let got = feedback(&[p], &[e[0]], &[e[1]], &[e[2]])[0];
            assert!((got - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn feedforward_examples() {
        let zero = DofParams::passive(0.5);
        assert_eq!(feedforward(&[zero], &[1.0], &[2.0], &[3.0]), vec![0.0]);
        let p = DofParams { kvel: 2.0, ..zero };
        assert_eq!(feedforward(&[p], &[0.3], &[0.5], &[7.0]), vec![1.0]);
        let mut rng = ChaCha8Rng::seed_from_u64(12);
        for _ in 0..100 {
            let g: Vec<f64> = (0..3).map(|_| rng.random_range(-5.0..5.0)).collect();
            let r: Vec<f64> = (0..3).map(|_| rng.random_range(-2.0..2.0)).collect();
            let p = DofParams { kpos: g[0], kvel: g[1], kacc: g[2], ..zero };
            let naive: f64 = g.iter().zip(&r).map(|(a, b)| a * b).sum();
            let got = feedforward(&[p], &[r[0]], &[r[1]], &[r[2]])[0];
            assert!((got - naive).abs() < 1e-12);
        }
    }

    #[test]
    fn cocontraction_examples() {
        let (a, b) = pams();
        assert_eq!(cocontraction_map(0.0, 0.5, &a, &b), (1.5, 1.5));
        assert_eq!(cocontraction_map(1.0, 0.5, &a, &b), (3.0, 0.0));
        for u in [-4.0, -1.0, 0.0, 0.3, 9.0] {
            assert_eq!(cocontraction_map(u, 1.0, &a, &b), (3.0, 3.0));
            assert_eq!(cocontraction_map(u, 0.0, &a, &b), (0.0, 0.0));
        }
    }

    #[test]
    fn legacy_map_range_depends_on_p0() {
        let (a, b) = pams();
        assert_eq!(legacy_cocontraction_map(0.5, 1.0, &a, &b), (1.5, 0.5));
        assert_eq!(legacy_cocontraction_map(2.5, 1.0, &a, &b), (3.0, 0.0));
        let mid = legacy_effective_range(1.5, &a, &b);
        let low = legacy_effective_range(0.5, &a, &b);
        assert_eq!(mid, (-1.5, 1.5));
        assert_eq!(low, (-2.5, 2.5));
        // the adapted map saturates at the same command for every p0
        for p0 in [0.1, 0.3, 0.5, 0.8] {
            let (pa1, _) = cocontraction_map(1.0, p0, &a, &b);
            let (pa2, _) = cocontraction_map(1.5, p0, &a, &b);
            assert_eq!(pa1, pa2);
        }
    }

    #[test]
    fn feedforward_gains_do_not_touch_feedback() {
        let base = DofParams { kp: 2.0, kd: 0.3, ki: 1.0, ..DofParams::passive(0.5) };
        let other = DofParams { kpos: 9.0, kvel: -3.0, kacc: 0.4, ..base };
        let fb1 = feedback(&[base], &[0.1], &[-0.2], &[0.05]);
        let fb2 = feedback(&[other], &[0.1], &[-0.2], &[0.05]);
        assert_eq!(fb1, fb2);
    }

    #[test]
    fn zero_gains_give_rest_pressures() {
        let arm = ArmConfig::surrogate();
        let params = vec![DofParams::passive(0.3); 4];
        let mut st = ControlState::new(4);
        let q = [0.1, -0.2, 0.3, 0.0];
        let out = control_step(
            &params,
            &mut st,
            &arm,
            &ControlConfig::default(),
            Measured { q: &q, q_dot: &[0.0; 4] },
            Desired { q: &[0.0; 4], q_dot: &[1.0; 4], q_ddot: &[2.0; 4] },
            0.01,
        )
        .unwrap();
        assert_eq!(out.pressures, rest_pressures(&params, &arm));
        assert!(out.pressures.iter().all(|&p| (p - 0.9).abs() < 1e-12));
        assert_eq!(out.u, vec![0.0; 4]);
    }

    #[test]
    fn saturated_command_pins_pressures() {
        let arm = ArmConfig::surrogate();
        let params = vec![DofParams { kp: 100.0, ..DofParams::passive(0.7) }; 4];
        let mut st = ControlState::new(4);
        let out = control_step(
            &params,
            &mut st,
            &arm,
            &ControlConfig::default(),
            Measured { q: &[0.0; 4], q_dot: &[0.0; 4] },
            Desired { q: &[0.5, -0.5, 0.5, -0.5], q_dot: &[0.0; 4], q_ddot: &[0.0; 4] },
            0.01,
        )
        .unwrap();
        // p0 = 0.7: c = 0.3, extremes 3·1.0 and 3·0.4
        assert!((out.pressures[0] - 3.0).abs() < 1e-12);
        assert!((out.pressures[1] - 1.2).abs() < 1e-12);
        assert!((out.pressures[2] - 1.2).abs() < 1e-12);
        assert!((out.pressures[3] - 3.0).abs() < 1e-12);
        assert_eq!(out.u[0], 50.0);
    }

    #[test]
    fn integral_is_clamped() {
        let arm = ArmConfig::surrogate();
        let params = vec![DofParams::passive(0.5); 4];
        let mut st = ControlState::new(4);
        let cfg = ControlConfig { integral_limit: 0.05 };
        for _ in 0..1000 {
            control_step(
                &params,
                &mut st,
                &arm,
                &cfg,
                Measured { q: &[0.0; 4], q_dot: &[0.0; 4] },
                Desired { q: &[1.0, -1.0, 0.0, 0.0], q_dot: &[0.0; 4], q_ddot: &[0.0; 4] },
                0.01,
            )
            .unwrap();
        }
        assert_eq!(st.integral_error, vec![0.05, -0.05, 0.0, 0.0]);
        st.reset();
        assert_eq!(st.integral_error, vec![0.0; 4]);
    }

    #[test]
    fn bounds_check() {
        let b = ParamBounds {
            kp: [0.0, 10.0],
            kd: [0.0, 1.0],
            ki: [0.0, 5.0],
            kpos: [-1.0, 1.0],
            kvel: [-1.0, 1.0],
            kacc: [-0.1, 0.1],
            p0: [0.0, 1.0],
        };
        b.validate().unwrap();
        assert!(b.check(&DofParams::passive(0.5)).is_ok());
        assert!(b.check(&DofParams { kp: 11.0, ..DofParams::passive(0.5) }).is_err());
        let bad = ParamBounds { p0: [0.2, 1.4], ..b };
        assert!(bad.validate().is_err());
    }
}
