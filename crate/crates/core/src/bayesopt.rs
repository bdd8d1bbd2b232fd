//! Expected-improvement Bayesian optimization over a bounded box.
//!
//! The GP sees inputs mapped to the unit cube and standardized targets; the
//! public API works in the caller's units.

use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;
use thiserror::Error;

use crate::gp::{fit_hyper, Dataset, GpError, GpPosterior, HyperFitOptions, KernelHyper, Standardizer};

/// Margin that keeps proposals strictly inside the unit cube.
const INTERIOR: f64 = 1e-9;
/// Penalty for a failed trial before any finite loss has been observed.
const FIRST_FAILURE_PENALTY: f64 = 1e6;
const FAILURE_FACTOR: f64 = 10.0;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum BoError {
    #[error("invalid bounds in dimension {0}")]
    Bounds(usize),
    #[error("invalid configuration: {0}")]
    Config(&'static str),
    #[error("trace csv: {0}")]
    Csv(String),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BoConfig {
    pub bounds: Vec<[f64; 2]>,
    /// Uniform random evaluations before the GP drives the search.
    pub n_init: usize,
    /// Total objective evaluations.
    pub n_iter: usize,
    pub n_candidates: usize,
    pub n_refine: usize,
    /// Hyperparameters are re-estimated every this many model-driven steps.
    pub refit_every: usize,
    /// Model `ln y` instead of `y` (requires positive losses).
    pub log_targets: bool,
    pub seed: u64,
}

impl BoConfig {
    pub fn new(bounds: Vec<[f64; 2]>, n_iter: usize, seed: u64) -> Self {
        BoConfig {
            bounds,
            n_init: 8,
            n_iter,
            n_candidates: 2048,
            n_refine: 50,
            refit_every: 5,
            log_targets: false,
            seed,
        }
    }

    pub fn dim(&self) -> usize {
        self.bounds.len()
    }

    pub fn validate(&self) -> Result<(), BoError> {
        if self.bounds.is_empty() {
            return Err(BoError::Config("no dimensions"));
        }
        for (i, [lo, hi]) in self.bounds.iter().enumerate() {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(BoError::Bounds(i));
            }
        }
        if self.n_init == 0 {
            return Err(BoError::Config("n_init must be at least 1"));
        }
        if self.n_candidates == 0 {
            return Err(BoError::Config("n_candidates must be at least 1"));
        }
        if self.refit_every == 0 {
            return Err(BoError::Config("refit_every must be at least 1"));
        }
        Ok(())
    }

    fn to_unit(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(&self.bounds).map(|(v, [lo, hi])| (v - lo) / (hi - lo)).collect()
    }

    fn to_bounds(&self, u: &[f64]) -> Vec<f64> {
        u.iter()
            .zip(&self.bounds)
            .map(|(v, [lo, hi])| (lo + v * (hi - lo)).clamp(lo.next_up(), hi.next_down()))
            .collect()
    }

    fn random_unit<R: Rng>(&self, rng: &mut R) -> Vec<f64> {
        (0..self.dim()).map(|_| rng.random_range(INTERIOR..1.0 - INTERIOR)).collect()
    }
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / std::f64::consts::SQRT_2)
}

fn std_normal_pdf(z: f64) -> f64 {
    (-0.5 * z * z).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Closed-form EI for a minimization problem given posterior moments.
pub fn ei_from_moments(mean: f64, var: f64, f_best: f64) -> f64 {
    let improvement = f_best - mean;
    if var <= 0.0 {
        return improvement.max(0.0);
    }
    let sd = var.sqrt();
    let z = improvement / sd;
    (improvement * std_normal_cdf(z) + sd * std_normal_pdf(z)).max(0.0)
}

/// EI of `post` at `x` relative to the best observed value `f_best`.
pub fn expected_improvement(post: &GpPosterior, x: &[f64], f_best: f64) -> Result<f64, GpError> {
    let (m, v) = post.predict(x)?;
    Ok(ei_from_moments(m, v, f_best))
}

/// GP fitted on unit-cube inputs and standardized targets.
#[derive(Debug, Clone)]
pub struct Surrogate {
    pub post: GpPosterior,
    pub scale: Standardizer,
    log_targets: bool,
}

impl Surrogate {
    /// Fit with fixed hyperparameters (`None` uses the data heuristic).
    pub fn fit(data: &Dataset, cfg: &BoConfig, hyper: Option<&KernelHyper>) -> Result<Self, GpError> {
        let (unit, scale) = model_data(data, cfg);
        let hyper = match hyper {
            Some(h) => h.clone(),
            None => crate::gp::default_hyper(&unit),
        };
        Ok(Surrogate {
            post: GpPosterior::fit(&unit, &hyper)?,
            scale,
            log_targets: cfg.log_targets,
        })
    }

    fn target(&self, y: f64) -> f64 {
        self.scale.apply(transform(y, self.log_targets))
    }

    /// Posterior mean and variance in model space at an input in caller units.
    pub fn predict_model(&self, cfg: &BoConfig, x: &[f64]) -> Result<(f64, f64), GpError> {
        self.post.predict(&cfg.to_unit(x))
    }
}

fn transform(y: f64, log: bool) -> f64 {
    if log {
        y.max(f64::MIN_POSITIVE).ln()
    } else {
        y
    }
}

fn model_data(data: &Dataset, cfg: &BoConfig) -> (Dataset, Standardizer) {
    let t: Vec<f64> = data.y.iter().map(|&y| transform(y, cfg.log_targets)).collect();
    let scale = Standardizer::fit(&t);
    let unit = Dataset {
        x: data.x.iter().map(|r| cfg.to_unit(r)).collect(),
        y: t.iter().map(|&v| scale.apply(v)).collect(),
    };
    (unit, scale)
}

/// Next query point: EI maximized over random candidates, then refined
/// coordinate-wise. Falls back to a uniform draw when every EI is zero.
pub fn propose<R: Rng>(model: &Surrogate, data: &Dataset, cfg: &BoConfig, rng: &mut R) -> Vec<f64> {
    let f_best = data
        .y
        .iter()
        .map(|&y| model.target(y))
        .fold(f64::INFINITY, f64::min);
    let candidates: Vec<Vec<f64>> = (0..cfg.n_candidates).map(|_| cfg.random_unit(rng)).collect();
    let ei = |u: &[f64]| -> f64 {
        match expected_improvement(&model.post, u, f_best) {
            Ok(v) if v.is_finite() => v,
            _ => 0.0,
        }
    };
    let scores: Vec<f64> = candidates.par_iter().map(|u| ei(u)).collect();
    let (mut best_idx, mut best_ei) = (0, scores[0]);
    for (i, &s) in scores.iter().enumerate().skip(1) {
        if s > best_ei {
            best_idx = i;
            best_ei = s;
        }
    }
    if best_ei <= 0.0 {
        log::debug!("all candidate EI values are zero; sampling uniformly");
        return cfg.to_bounds(&cfg.random_unit(rng));
    }

    let mut x = candidates[best_idx].clone();
    let mut step = 0.05;
    let d = cfg.dim();
    let mut since_improvement = 0;
    for k in 0..cfg.n_refine {
        let dim = k % d;
        let mut improved = false;
        for sign in [1.0, -1.0] {
            let mut trial = x.clone();
            trial[dim] = (trial[dim] + sign * step).clamp(INTERIOR, 1.0 - INTERIOR);
            let v = ei(&trial);
            if v > best_ei {
                best_ei = v;
                x = trial;
                improved = true;
                break;
            }
        }
        since_improvement = if improved { 0 } else { since_improvement + 1 };
        if since_improvement >= d {
            step *= 0.5;
            since_improvement = 0;
        }
    }
    cfg.to_bounds(&x)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    pub iteration: usize,
    pub x: Vec<f64>,
    /// Recorded loss (penalized when the trial failed).
    pub y: f64,
    pub running_min: f64,
    pub failed: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BoResult {
    pub best_x: Vec<f64>,
    pub best_y: f64,
    pub trace: Vec<TraceEntry>,
}

/// Writes `iteration, x1..xD, y, running_min`.
pub fn write_trace_csv<W: Write>(trace: &[TraceEntry], w: W) -> Result<(), BoError> {
    let err = |e: csv::Error| BoError::Csv(e.to_string());
    let mut wr = csv::Writer::from_writer(w);
    let d = trace.first().map_or(0, |t| t.x.len());
    let mut header = vec!["iteration".to_string()];
    header.extend((1..=d).map(|i| format!("x{i}")));
    header.extend(["y".to_string(), "running_min".to_string()]);
    wr.write_record(&header).map_err(err)?;
    for t in trace {
        let mut rec = vec![t.iteration.to_string()];
        rec.extend(t.x.iter().map(f64::to_string));
        rec.extend([t.y.to_string(), t.running_min.to_string()]);
        wr.write_record(&rec).map_err(err)?;
    }
    wr.flush().map_err(|e| BoError::Csv(e.to_string()))
}

/// Minimizes `objective` over `cfg.bounds`. A `None` or non-finite return
/// marks a failed trial, recorded with a penalty loss.
pub fn bo_minimize<F>(mut objective: F, cfg: &BoConfig) -> Result<BoResult, BoError>
where
    F: FnMut(&[f64]) -> Option<f64>,
{
    cfg.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut data = Dataset::default();
    let mut trace: Vec<TraceEntry> = Vec::with_capacity(cfg.n_iter);
    let mut worst_finite: Option<f64> = None;
    let mut hyper: Option<KernelHyper> = None;
    let mut model_steps = 0usize;

    for it in 0..cfg.n_iter {
        let x = if it < cfg.n_init {
            cfg.to_bounds(&cfg.random_unit(&mut rng))
        } else {
            let (unit, _) = model_data(&data, cfg);
            if hyper.is_none() || model_steps.is_multiple_of(cfg.refit_every) {
                let opts = HyperFitOptions {
                    seed: cfg.seed.wrapping_add(it as u64),
                    warm_start: hyper.clone(),
                    ..HyperFitOptions::default()
                };
                hyper = Some(fit_hyper(&unit, &opts));
            }
            model_steps += 1;
            match Surrogate::fit(&data, cfg, hyper.as_ref()) {
                Ok(model) => propose(&model, &data, cfg, &mut rng),
                Err(e) => {
                    log::warn!("surrogate fit failed at iteration {it}: {e}; sampling uniformly");
                    cfg.to_bounds(&cfg.random_unit(&mut rng))
                }
            }
        };

        let (y, failed) = match objective(&x) {
            Some(v) if v.is_finite() => {
                worst_finite = Some(worst_finite.map_or(v, |w: f64| w.max(v)));
                (v, false)
            }
            _ => {
                let penalty = match worst_finite {
                    Some(w) if w > 0.0 => FAILURE_FACTOR * w,
                    Some(w) => w.abs() * FAILURE_FACTOR + FIRST_FAILURE_PENALTY,
                    None => FIRST_FAILURE_PENALTY,
                };
                log::warn!("trial {it} failed; recording penalty {penalty:e}");
                (penalty, true)
            }
        };
        let running_min = trace.last().map_or(y, |t: &TraceEntry| t.running_min.min(y));
        data.x.push(x.clone());
        data.y.push(y);
        trace.push(TraceEntry {
            iteration: it,
            x,
            y,
            running_min,
            failed,
        });
    }

    let best = trace
        .iter()
        .fold(None::<&TraceEntry>, |acc, t| match acc {
            Some(b) if b.y <= t.y => Some(b),
            _ => Some(t),
        })
        .ok_or(BoError::Config("n_iter must be at least 1"))?;
    Ok(BoResult {
        best_x: best.x.clone(),
        best_y: best.y,
        trace,
    })
}
