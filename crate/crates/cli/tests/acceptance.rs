//! End-to-end acceptance checks. Each test writes one `criterion N: PASS|FAIL`
//! line straight to stdout so it shows up even when output is captured.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use pam_cli::commands::{cmd_ballistic, cmd_pareto, cmd_track, cmd_tune};
use pam_cli::config::{ExperimentConfig, Overrides, TrajectorySpec};
use pam_core::bayesopt::{bo_minimize, ei_from_moments, BoConfig};
use pam_core::control::{cocontraction_map, DofParams};
use pam_core::gp::{Dataset, GpPosterior, KernelHyper};
use pam_core::plant::{ArmConfig, Plant};
use pam_core::tuner::{dominates, pareto_front, LossRecord, Objective};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GP_TOL: f64 = 1e-8;
const GP_BUDGET: Duration = Duration::from_secs(10);
const EI_TOL: f64 = 1e-2;
const EI_SAMPLES: usize = 1_000_000;
const BOWL_TARGET: f64 = 1e-2;
const BOWL_ITERATIONS: usize = 40;
const BOWL_BUDGET: Duration = Duration::from_secs(30);
const SAFETY_BUDGET: Duration = Duration::from_secs(60);
const CAMPAIGN_ITERATIONS: usize = 200;
const IMPROVEMENT_FACTOR: f64 = 10.0;
const IMPROVEMENT_WINDOW: usize = 60;
const CAMPAIGN_BUDGET: Duration = Duration::from_secs(20 * 60);
const SLOW_RMSE_FRACTION: f64 = 0.25;
const BALLISTIC_SPEED_RATIO: f64 = 5.0;

fn report(n: usize, pass: bool, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let mut out = std::io::stdout().lock();
    writeln!(out, "criterion {n}: {verdict} ({detail})").unwrap();
    out.flush().unwrap();
}

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn shipped_config(out: &Path, iterations: Option<usize>) -> ExperimentConfig {
    let o = Overrides { out_dir: Some(out.to_path_buf()), iterations, ..Overrides::default() };
    ExperimentConfig::load(&configs().join("experiment.toml"), &o).unwrap()
}

// Matérn-5/2 and a dense-inverse posterior, written independently of the library.
fn matern(a: &[f64], b: &[f64], l: &[f64], sf: f64) -> f64 {
    let r = a.iter().zip(b).zip(l).map(|((x, y), l)| ((x - y) / l).powi(2)).sum::<f64>().sqrt();
    let s = 5f64.sqrt() * r;
    sf * (1.0 + s + 5.0 * r * r / 3.0) * (-s).exp()
}

fn invert(mut a: Vec<Vec<f64>>) -> Vec<Vec<f64>> {
    let n = a.len();
    let mut inv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| f64::from(i == j)).collect()).collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs())).unwrap();
        a.swap(col, pivot);
        inv.swap(col, pivot);
        let d = a[col][col];
        for j in 0..n {
            a[col][j] /= d;
            inv[col][j] /= d;
        }
        for i in (0..n).filter(|&i| i != col) {
            let f = a[i][col];
            for j in 0..n {
                a[i][j] -= f * a[col][j];
                inv[i][j] -= f * inv[col][j];
            }
        }
    }
    inv
}

fn dense_posterior(data: &Dataset, h: &KernelHyper, xs: &[f64]) -> (f64, f64) {
    let n = data.len();
    let k = (0..n)
        .map(|i| {
            (0..n)
                .map(|j| {
                    matern(&data.x[i], &data.x[j], &h.lengthscales, h.signal_var)
                        + if i == j { h.noise_var } else { 0.0 }
                })
                .collect()
        })
        .collect();
    let kinv = invert(k);
    let ks: Vec<f64> = data.x.iter().map(|xi| matern(xi, xs, &h.lengthscales, h.signal_var)).collect();
    let w: Vec<f64> = (0..n).map(|i| (0..n).map(|j| kinv[i][j] * ks[j]).sum()).collect();
    let mean = w.iter().zip(&data.y).map(|(a, b)| a * b).sum();
    let var = h.signal_var - w.iter().zip(&ks).map(|(a, b)| a * b).sum::<f64>();
    (mean, var)
}

#[test]
fn criterion_01_gp_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let mut worst = 0.0f64;
    for _ in 0..50 {
        let n = rng.random_range(1..=20);
        let d = rng.random_range(1..=7);
        let x: Vec<Vec<f64>> = (0..n).map(|_| (0..d).map(|_| rng.random::<f64>()).collect()).collect();
        let y: Vec<f64> = (0..n).map(|_| rng.random_range(-2.0..2.0)).collect();
        let signal_var = rng.random_range(0.5..2.0);
        let h = KernelHyper {
            lengthscales: (0..d).map(|_| rng.random_range(0.2..2.0)).collect(),
            signal_var,
            noise_var: signal_var * rng.random_range(1e-3..1e-1),
        };
        let data = Dataset::new(x, y).unwrap();
        let post = GpPosterior::fit(&data, &h).unwrap();
        for _ in 0..5 {
            let xs: Vec<f64> = (0..d).map(|_| rng.random_range(-0.5..1.5)).collect();
            let (m, v) = post.predict(&xs).unwrap();
            let (mo, vo) = dense_posterior(&data, &h, &xs);
            worst = worst.max((m - mo).abs()).max((v - vo).abs());
        }
    }
    let elapsed = start.elapsed();
    let pass = worst <= GP_TOL && elapsed < GP_BUDGET;
    report(1, pass, &format!("max abs deviation {worst:.2e}, {:.2}s", elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_02_expected_improvement() {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut worst = 0.0f64;
    for _ in 0..20 {
        let mean: f64 = rng.random_range(-2.0..2.0);
        let sd: f64 = rng.random_range(0.05..2.0);
        let best: f64 = rng.random_range(-2.0..2.0);
        let mc = (0..EI_SAMPLES)
            .map(|_| {
                let z: f64 = StandardNormal.sample(&mut rng);
                (best - mean - sd * z).max(0.0)
            })
            .sum::<f64>()
            / EI_SAMPLES as f64;
        worst = worst.max((ei_from_moments(mean, sd * sd, best) - mc).abs());
    }
    let degenerate = [(0.0, 1.0), (1.0, 0.0), (0.5, 0.5), (-3.0, 2.0), (2.0, -3.0)]
        .iter()
        .all(|&(mean, best): &(f64, f64)| ei_from_moments(mean, 0.0, best) == (best - mean).max(0.0));
    let pass = worst <= EI_TOL && degenerate;
    report(2, pass, &format!("max MC deviation {worst:.2e}, zero-variance cases exact: {degenerate}"));
    assert!(pass);
}

#[test]
fn criterion_03_bowl_benchmark() {
    let start = Instant::now();
    let centre = [0.37, 0.61];
    let bowl = move |x: &[f64]| (x[0] - centre[0]).powi(2) + (x[1] - centre[1]).powi(2);
    let grid_min = (0..=200)
        .flat_map(|i| (0..=200).map(move |j| [i as f64 / 200.0, j as f64 / 200.0]))
        .map(|p| bowl(&p))
        .fold(f64::INFINITY, f64::min);
    let hits = (0..10u64)
        .filter(|&seed| {
            let cfg = BoConfig::new(vec![[0.0, 1.0]; 2], BOWL_ITERATIONS, seed);
            let res = bo_minimize(|x| Some(bowl(x)), &cfg).unwrap();
            res.trace.len() == BOWL_ITERATIONS && res.best_y - grid_min <= BOWL_TARGET
        })
        .count();
    let elapsed = start.elapsed();
    let pass = hits >= 9 && elapsed < BOWL_BUDGET;
    report(3, pass, &format!("{hits}/10 seeds reached the target, {:.2}s", elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_04_safety() {
    let start = Instant::now();
    let arm = ArmConfig::surrogate();
    let muscles: Vec<_> = arm.muscles().cloned().collect();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut violations = 0usize;
    for _ in 0..1000 {
        let mut plant = Plant::new(arm.clone()).unwrap();
        let steps = rng.random_range(1..=300);
        let mut desired: Vec<f64> = vec![0.0; muscles.len()];
        for _ in 0..steps {
            // piecewise-constant commands, often far outside the valid range
            if rng.random_bool(0.3) {
                desired = muscles.iter().map(|c| rng.random_range(-1.0..2.0) * c.p_max).collect();
            }
            for _ in 0..arm.inner_steps() {
                plant.step_inner(&desired, arm.inner_dt).unwrap();
                let s = plant.state();
                violations += s.p.iter().zip(&muscles).filter(|(p, c)| **p < c.p_min || **p > c.p_max).count();
                violations += s
                    .q
                    .iter()
                    .zip(&arm.dofs)
                    .filter(|(q, d)| **q < d.q_limit_lo || **q > d.q_limit_hi)
                    .count();
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = violations == 0 && elapsed < SAFETY_BUDGET;
    report(4, pass, &format!("{violations} violations over 1000 sequences, {:.2}s", elapsed.as_secs_f64()));
    assert!(pass);
}

#[test]
fn criterion_05_cocontraction_map() {
    let arm = ArmConfig::surrogate();
    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut failures = 0usize;
    for k in 0..100_000 {
        let dof = &arm.dofs[k % arm.n_dofs()];
        let (a, b) = (&dof.agonist, &dof.antagonist);
        let u: f64 = rng.random_range(-3.0..3.0);
        let p0: f64 = rng.random();
        let (pa, pb) = cocontraction_map(u, p0, a, b);
        let in_range = (a.p_min..=a.p_max).contains(&pa) && (b.p_min..=b.p_max).contains(&pb);
        let (ua, ub) = cocontraction_map(u + rng.random_range(0.0..1.0), p0, a, b);
        let monotone_u = ua >= pa && ub <= pb;
        let p0_hi = rng.random_range(p0..=1.0);
        let (sa, sb) = cocontraction_map(u, p0_hi, a, b);
        let stiffer = sa + sb >= pa + pb - 1e-12;
        let (ma, mb) = cocontraction_map(u, 0.5, a, b);
        let (na, nb) = cocontraction_map(-u, 0.5, a, b);
        let antisymmetric = ma == nb && mb == na;
        failures += usize::from(!(in_range && monotone_u && stiffer && antisymmetric));
    }
    let pass = failures == 0;
    report(5, pass, &format!("{failures} failing pairs out of 100000"));
    assert!(pass);
}

#[test]
fn criterion_06_tuning_campaign() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped_config(dir.path(), None);
    assert_eq!(cfg.tune.iterations, CAMPAIGN_ITERATIONS);
    let start = Instant::now();
    let summary = cmd_tune(&cfg).unwrap();
    let elapsed = start.elapsed();

    let improved: Vec<bool> = summary
        .running_min
        .iter()
        .map(|rm| rm[0] / rm[IMPROVEMENT_WINDOW - 1] >= IMPROVEMENT_FACTOR)
        .collect();
    let ratios: Vec<String> = summary
        .running_min
        .iter()
        .map(|rm| format!("{:.1}", rm[0] / rm[IMPROVEMENT_WINDOW - 1]))
        .collect();
    let n_improved = improved.iter().filter(|&&b| b).count();
    let better = summary.rmse.iter().all(|r| r.optimized_deg < r.manual_deg);
    let rmse: Vec<String> =
        summary.rmse.iter().map(|r| format!("{:.3}->{:.3}", r.manual_deg, r.optimized_deg)).collect();
    let pass = n_improved >= 3 && better && elapsed < CAMPAIGN_BUDGET;
    report(
        6,
        pass,
        &format!(
            "improvement by iteration {IMPROVEMENT_WINDOW} [{}], {n_improved}/4 DoFs >= {IMPROVEMENT_FACTOR}x; \
             rmse deg manual->optimized [{}]; {:.1}s",
            ratios.join(", "),
            rmse.join(", "),
            elapsed.as_secs_f64()
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_pareto_oracle() {
    let mut rng = ChaCha8Rng::seed_from_u64(707);
    let mut mismatches = 0usize;
    for set in 0..100 {
        let n = rng.random_range(1..=150);
        let coarse = set % 2 == 0;
        let draw = |rng: &mut ChaCha8Rng| {
            if coarse {
                // integer grid forces ties and duplicates
                rng.random_range(0..8) as f64
            } else {
                rng.random::<f64>()
            }
        };
        let records: Vec<LossRecord> = (0..n)
            .map(|i| LossRecord {
                dof: 0,
                iteration: i,
                theta: DofParams::passive(0.5),
                l_pos: draw(&mut rng),
                l_vel: draw(&mut rng),
                l_act: draw(&mut rng),
                l_total: 0.0,
                failed: false,
            })
            .collect();
        let objectives = if set % 3 == 0 {
            vec![Objective::Pos, Objective::Vel, Objective::Act]
        } else {
            vec![Objective::Pos, Objective::Vel]
        };
        let pts: Vec<Vec<f64>> = records
            .iter()
            .map(|r| {
                objectives
                    .iter()
                    .map(|o| match o {
                        Objective::Pos => r.l_pos,
                        Objective::Vel => r.l_vel,
                        Objective::Act => r.l_act,
                    })
                    .collect()
            })
            .collect();
        let oracle: Vec<usize> = (0..n)
            .filter(|&i| !(0..n).any(|j| {
                pts[j].iter().zip(&pts[i]).all(|(a, b)| a <= b) && pts[j].iter().zip(&pts[i]).any(|(a, b)| a < b)
            }))
            .collect();
        let mut front = pareto_front(&records, &objectives);
        front.sort_unstable();
        mismatches += usize::from(front != oracle);
    }

    let mut order_failures = 0usize;
    for _ in 0..10_000 {
        let mut p = || -> Vec<f64> { (0..3).map(|_| rng.random_range(0..4) as f64).collect() };
        let (a, b, c) = (p(), p(), p());
        let ok = !dominates(&a, &a)
            && !(dominates(&a, &b) && dominates(&b, &a))
            && (!(dominates(&a, &b) && dominates(&b, &c)) || dominates(&a, &c));
        order_failures += usize::from(!ok);
    }
    let pass = mismatches == 0 && order_failures == 0;
    report(
        7,
        pass,
        &format!("{mismatches}/100 front mismatches, {order_failures}/10000 partial-order failures"),
    );
    assert!(pass);
}

#[test]
fn criterion_08_slow_tracking() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped_config(dir.path(), None);
    let TrajectorySpec::Sinusoid { freq_hz, amplitude_deg, .. } = &cfg.track.trajectory else {
        panic!("shipped tracking reference is not a sinusoid");
    };
    assert_eq!(*freq_hz, 0.1);
    let manual = cmd_track(&cfg, false).unwrap();
    let passive = cmd_track(&cfg, true).unwrap();
    let pass = manual
        .rmse_deg
        .iter()
        .zip(&passive.rmse_deg)
        .zip(amplitude_deg)
        .all(|((m, p), amp)| *m <= SLOW_RMSE_FRACTION * amp && m < p);
    let fmt = |v: &[f64]| v.iter().map(|x| format!("{x:.2}")).collect::<Vec<_>>().join(", ");
    report(
        8,
        pass,
        &format!("rmse deg manual [{}] vs zero-gain [{}]", fmt(&manual.rmse_deg), fmt(&passive.rmse_deg)),
    );
    assert!(pass);
}

#[test]
fn criterion_09_ballistic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = shipped_config(dir.path(), None);
    let ballistic = cmd_ballistic(&cfg);
    let slow = cmd_track(&cfg, false).unwrap();
    let (pass, detail) = match &ballistic {
        Ok(r) => {
            let ratio = r.peak_joint_speed() / slow.peak_speed;
            (
                r.joint_limits_respected && r.pressures_in_range && ratio > BALLISTIC_SPEED_RATIO,
                format!(
                    "peak joint speed {:.2} rad/s vs slow tracking {:.3} rad/s, ratio {ratio:.1}, within limits: {}",
                    r.peak_joint_speed(),
                    slow.peak_speed,
                    r.joint_limits_respected
                ),
            )
        }
        Err(e) => (false, format!("fault: {e}")),
    };
    report(9, pass, &detail);
    assert!(pass);
}

fn run_pipeline(out: &Path) -> BTreeMap<String, Vec<u8>> {
    let cfg = shipped_config(out, Some(20));
    cmd_track(&cfg, false).unwrap();
    cmd_ballistic(&cfg).unwrap();
    cmd_tune(&cfg).unwrap();
    cmd_pareto(&cfg, &out.join("campaign.csv")).unwrap();
    fs::read_dir(out)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

#[test]
fn criterion_10_determinism() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let first = run_pipeline(a.path());
    let second = run_pipeline(b.path());
    let expected = ["ballistic_trace.csv", "campaign.csv", "min_trace.csv", "pareto.csv", "rmse_table.csv", "track_trace.csv"];
    let complete = expected.iter().all(|f| first.contains_key(*f));
    let pass = complete && first == second;
    report(10, pass, &format!("{} CSV files compared, identical: {}", first.len(), first == second));
    assert!(pass);
}
