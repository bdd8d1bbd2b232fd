//! Experiment configuration files.
//!
//! The experiment file references the plant, manual-parameter and limit
//! files by path, relative to its own directory.

use std::fs;
use std::path::{Path, PathBuf};

use pam_core::control::{ControlConfig, DofParams, ParamBounds};
use pam_core::plant::ArmConfig;
use pam_core::trajgen::{hitting_trajectory, sinusoid, HittingSpec, Trajectory};
use pam_core::tuner::{LossWeights, TrackConfig, TuneOptions};
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrajectorySpec {
    Hitting {
        start_deg: Vec<f64>,
        end_deg: Vec<f64>,
    },
    Sinusoid {
        freq_hz: f64,
        amplitude_deg: Vec<f64>,
        duration: f64,
    },
}

impl TrajectorySpec {
    pub fn build(&self, arm: &ArmConfig) -> Result<Trajectory, CliError> {
        let limits: Vec<(f64, f64)> = arm.dofs.iter().map(|d| (d.q_limit_lo, d.q_limit_hi)).collect();
        let rad = |v: &[f64]| v.iter().map(|d| d.to_radians()).collect::<Vec<_>>();
        let traj = match self {
            TrajectorySpec::Hitting { start_deg, end_deg } => hitting_trajectory(
                &HittingSpec {
                    start: rad(start_deg),
                    end: rad(end_deg),
                },
                &limits,
            ),
            TrajectorySpec::Sinusoid {
                freq_hz,
                amplitude_deg,
                duration,
            } => sinusoid(*freq_hz, &rad(amplitude_deg), *duration, &limits),
        }
        .map_err(|e| CliError::Config(format!("trajectory: {e}")))?;
        if traj.n_dofs() != arm.n_dofs() {
            return Err(CliError::Config(format!(
                "trajectory has {} DoFs, plant has {}",
                traj.n_dofs(),
                arm.n_dofs()
            )));
        }
        Ok(traj)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSection {
    pub settle_time: f64,
    pub integral_limit: f64,
    pub trajectory: TrajectorySpec,
}

impl TrackSection {
    pub fn track_config(&self) -> TrackConfig {
        TrackConfig {
            settle_time: self.settle_time,
            control: ControlConfig {
                integral_limit: self.integral_limit,
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TuneSection {
    pub iterations: usize,
    pub n_init: usize,
    pub n_candidates: usize,
    pub n_refine: usize,
    pub refit_every: usize,
    pub log_targets: bool,
    pub trajectory: TrajectorySpec,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BallisticSection {
    /// 1-based DoFs whose pressures are swapped.
    pub dofs: Vec<usize>,
    /// Time at the starting extreme before the swap, s.
    pub hold_time: f64,
    /// Time after the swap, s.
    pub swing_time: f64,
    /// Co-contraction level of the remaining DoFs.
    pub p0: f64,
    pub upper_link: f64,
    pub lower_link: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ParetoSection {
    /// Neighbourhood size as a fraction of the front span per axis.
    pub eps_frac: f64,
}

/// Experiment file as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentFile {
    pub seed: u64,
    pub out_dir: PathBuf,
    pub plant: PathBuf,
    pub controller: PathBuf,
    pub limits: PathBuf,
    pub weights: LossWeights,
    pub track: TrackSection,
    pub tune: TuneSection,
    pub ballistic: BallisticSection,
    pub pareto: ParetoSection,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManualParamsFile {
    pub dofs: Vec<DofParams>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LimitsFile {
    pub dofs: Vec<ParamBounds>,
}

/// Fully resolved experiment: referenced files loaded, overrides applied.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentConfig {
    pub seed: u64,
    #[serde(skip)]
    pub out_dir: PathBuf,
    pub arm: ArmConfig,
    pub theta_man: Vec<DofParams>,
    pub theta_lim: Vec<ParamBounds>,
    pub weights: LossWeights,
    pub track: TrackSection,
    pub tune: TuneSection,
    pub ballistic: BallisticSection,
    pub pareto: ParetoSection,
}

/// Command-line and environment overrides.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Overrides {
    pub seed: Option<u64>,
    pub out_dir: Option<PathBuf>,
    pub iterations: Option<usize>,
    pub weights: Option<LossWeights>,
}

fn read_toml<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))?;
    toml::from_str(&text).map_err(|e| CliError::Parse {
        path: path.to_path_buf(),
        message: e.to_string(),
    })
}

/// Parse `w_pos,w_vel,w_act`.
pub fn parse_weights(s: &str) -> Result<LossWeights, String> {
    let parts = s
        .split(',')
        .map(|p| p.trim().parse::<f64>().map_err(|e| format!("weight '{p}': {e}")))
        .collect::<Result<Vec<_>, _>>()?;
    let [w_pos, w_vel, w_act] = parts[..] else {
        return Err(format!("expected three comma-separated weights, got {}", parts.len()));
    };
    let w = LossWeights { w_pos, w_vel, w_act };
    w.validate().map_err(|e| e.to_string())?;
    Ok(w)
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self, CliError> {
        let file: ExperimentFile = read_toml(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        let arm: ArmConfig = read_toml(&base.join(&file.plant))?;
        let man: ManualParamsFile = read_toml(&base.join(&file.controller))?;
        let lim: LimitsFile = read_toml(&base.join(&file.limits))?;
        let out_dir = match &overrides.out_dir {
            Some(o) => o.clone(),
            None if file.out_dir.is_absolute() => file.out_dir.clone(),
            None => base.join(&file.out_dir),
        };
        let mut cfg = ExperimentConfig {
            seed: overrides.seed.unwrap_or(file.seed),
            out_dir,
            arm,
            theta_man: man.dofs,
            theta_lim: lim.dofs,
            weights: overrides.weights.unwrap_or(file.weights),
            track: file.track,
            tune: file.tune,
            ballistic: file.ballistic,
            pareto: file.pareto,
        };
        if let Some(n) = overrides.iterations {
            cfg.tune.iterations = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), CliError> {
        let bad = |m: String| Err(CliError::Config(m));
        self.arm.validate().map_err(|e| CliError::Config(format!("plant: {e}")))?;
        let m = self.arm.n_dofs();
        if self.theta_man.len() != m {
            return bad(format!("controller file has {} DoFs, plant has {m}", self.theta_man.len()));
        }
        if self.theta_lim.len() != m {
            return bad(format!("limits file has {} DoFs, plant has {m}", self.theta_lim.len()));
        }
        for (i, b) in self.theta_lim.iter().enumerate() {
            b.validate().map_err(|e| CliError::Config(format!("limits dof {}: {e}", i + 1)))?;
        }
        self.weights.validate().map_err(|e| CliError::Config(e.to_string()))?;
        if self.tune.iterations == 0 {
            return bad("tune.iterations must be at least 1".into());
        }
        if self.ballistic.dofs.iter().any(|&d| d == 0 || d > m) {
            return bad(format!("ballistic.dofs must lie in 1..={m}"));
        }
        if self.pareto.eps_frac.is_nan() || self.pareto.eps_frac < 0.0 {
            return bad("pareto.eps_frac must be non-negative".into());
        }
        Ok(())
    }

    pub fn tune_options(&self) -> TuneOptions {
        TuneOptions {
            n_it: self.tune.iterations,
            seed: self.seed,
            n_init: self.tune.n_init,
            n_candidates: self.tune.n_candidates,
            n_refine: self.tune.n_refine,
            refit_every: self.tune.refit_every,
            log_targets: self.tune.log_targets,
            track: self.track.track_config(),
        }
    }

    /// Hex SHA-256 of the resolved configuration, output directory excluded.
    pub fn hash(&self) -> String {
        use sha2::{Digest, Sha256};
        let json = serde_json::to_vec(self).expect("configuration serializes");
        hex::encode(Sha256::digest(&json))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_parsing() {
        let w = parse_weights("1, 0.05,2").unwrap();
        assert_eq!((w.w_pos, w.w_vel, w.w_act), (1.0, 0.05, 2.0));
        assert!(parse_weights("1,2").is_err());
        assert!(parse_weights("0,0,0").is_err());
        assert!(parse_weights("a,1,1").is_err());
    }
}
