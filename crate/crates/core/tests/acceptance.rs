//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each and
//! exits non-zero if any fails.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::collections::HashMap;
use std::f64::consts::PI;
use std::io::Write;
use std::time::{Duration, Instant};

use nalgebra::{DMatrix, DVector, Matrix3, Vector2, Vector3};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use v2i_core::accel::estimate_alpha;
use v2i_core::array_channel::{array_response, channel_vector, complex_normal, RoadGeometry};
use v2i_core::codebook::{build_multiresolution, equal_division_ratio, narrowing_threshold, DesignParams};
use v2i_core::ekf::{jacobian, update, RealSounding, StateBelief, UpdateForm};
use v2i_core::harness::{bundled_scenario, run_experiment, MetricSummary, RunOptions, BUNDLED_SCENARIOS};
use v2i_core::motion::{long_term, MotionModel, StateVector};
use v2i_core::sounding::{lift, optimal_combiner, optimal_combiner_dense, rayleigh_quotient};
use v2i_core::C64;

const H: f64 = 7.5;

struct Outcome {
    pass: bool,
    detail: String,
}

fn psi_of(x: f64, y: f64, h: f64) -> f64 {
    PI * x / (x * x + y * y + h * h).sqrt()
}

fn lifted_channel(beta: C64, x: f64, y: f64, m: usize) -> DVector<f64> {
    let psi = psi_of(x, y, H);
    DVector::from_fn(2 * m, |i, _| {
        let k = (i % m) as f64;
        let v = beta * C64::new(0.0, k * psi).exp();
        if i < m {
            v.re
        } else {
            v.im
        }
    })
}

fn random_state<R: Rng>(rng: &mut R) -> StateVector {
    StateVector::new(rng.random_range(-75.0..75.0), rng.random_range(3.0..15.0), rng.random_range(5.0..40.0))
}

fn random_psd<R: Rng>(rng: &mut R, scale: f64) -> Matrix3<f64> {
    let g: Matrix3<f64> = Matrix3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
    (g * g.transpose() + Matrix3::identity() * 1e-3) * scale
}

fn criterion_1() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(101);
    let step = 1e-5;
    let mut worst: f64 = 0.0;
    for &m in &[8usize, 64] {
        for _ in 0..100 {
            let t = random_state(&mut rng);
            let beta = complex_normal(&mut rng, 1.0);
            let ts = 0.01;
            let phi = rng.random_range(0.0..PI / 128.0);
            let jac = jacobian(&t, beta, m, H, ts, phi).expect("jacobian");
            let dvx = ts * phi.cos();
            let cols = [
                (lifted_channel(beta, t.x + step, t.y, m) - lifted_channel(beta, t.x - step, t.y, m)) / (2.0 * step),
                (lifted_channel(beta, t.x, t.y + step, m) - lifted_channel(beta, t.x, t.y - step, m)) / (2.0 * step),
                (lifted_channel(beta, t.x + dvx * step, t.y, m) - lifted_channel(beta, t.x - dvx * step, t.y, m))
                    / (2.0 * step),
            ];
            let fd = DMatrix::from_columns(&cols);
            let rel = (&jac.real - &fd).norm() / fd.norm();
            worst = worst.max(rel);
        }
    }
    Outcome { pass: worst <= 1e-4, detail: format!("max relative error {worst:.2e}") }
}

fn criterion_2() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(202);
    let mut violations = 0usize;
    let mut min_margin = f64::INFINITY;
    let mut dense_gap: f64 = 0.0;
    for inst in 0..50 {
        let m = [8usize, 16, 32, 64][inst % 4];
        let t = random_state(&mut rng);
        let beta = complex_normal(&mut rng, 1.0);
        let jac = jacobian(&t, beta, m, H, 0.01, PI / 512.0).expect("jacobian");
        let scale = 10f64.powf(rng.random_range(-4.0..0.0));
        let q = random_psd(&mut rng, scale);
        let rho = 10f64.powf(rng.random_range(-1.0..4.0));
        let psi = psi_of(t.x, t.y, H);
        let opt = optimal_combiner(&jac.complex, &q, rho, psi);
        let q_opt = rayleigh_quotient(&opt.weights, &jac.complex, &q, rho);
        let dense = optimal_combiner_dense(&jac.complex, &q, rho, psi);
        let q_dense = rayleigh_quotient(&dense.weights, &jac.complex, &q, rho);
        dense_gap = dense_gap.max((q_dense - q_opt) / q_dense);
        for _ in 0..10_000 {
            let w = DVector::from_fn(m, |_, _| complex_normal(&mut rng, 1.0));
            let w = &w / C64::new(w.norm(), 0.0);
            let q_rand = rayleigh_quotient(&w, &jac.complex, &q, rho);
            if q_rand > q_opt {
                violations += 1;
            }
            min_margin = min_margin.min((q_opt - q_rand) / q_opt);
        }
    }
    Outcome {
        pass: violations == 0,
        detail: format!(
            "{violations} random vectors beat the optimum; min relative margin {min_margin:.2e}; reduced vs dense gap {dense_gap:.1e}"
        ),
    }
}

fn criterion_3() -> Outcome {
    let model = MotionModel { ts_s: 0.01, steering_rad: PI / 512.0, sigma_alpha: 1.94, sigma_omega: 10f64.powf(-1.5) };
    let l = 50;
    let lt = long_term(&model, l).expect("long-term transition");
    let q = Matrix3::from_diagonal(&Vector3::new(4e-4, 1e-4, 2.5e-3));
    let s = lt.cov + q;
    let chol = s.cholesky().expect("covariance");
    let alpha = 1.3;
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let n = 10_000;
    let mut est = Vec::with_capacity(n);
    let mut crlb = 0.0;
    for _ in 0..n {
        let z = Vector3::from_fn(|_, _| rng.sample::<f64, _>(StandardNormal));
        let t = lt.b_tilde * alpha + chol.l() * z;
        let e = estimate_alpha(&t, &lt.b_tilde, &lt.cov, &q, l).expect("estimate");
        crlb = e.crlb;
        est.push(e.alpha_hat);
    }
    let mean = est.iter().sum::<f64>() / n as f64;
    let var = est.iter().map(|a| (a - mean).powi(2)).sum::<f64>() / (n - 1) as f64;
    let se = (var / n as f64).sqrt();
    let bias = mean - alpha;
    let var_rel = (var - crlb).abs() / crlb;
    Outcome {
        pass: bias.abs() <= 3.0 * se && var_rel <= 0.05,
        detail: format!(
            "bias {bias:.3e} (3 SE = {:.3e}); variance {var:.4e} vs CRLB {crlb:.4e} ({:.2}%)",
            3.0 * se,
            100.0 * var_rel
        ),
    }
}

fn criterion_4() -> Outcome {
    let geom = RoadGeometry { rsu_height_m: H, lane_offset_m: 8.5, range_lb_m: -75.0, range_ub_m: 75.0 };
    let k = (8.5f64 * 8.5 + H * H).sqrt();
    let nu_edge = PI * 75.0 / (75.0f64 * 75.0 + k * k).sqrt();
    let n_grid = 4096;
    let mut failures = Vec::new();
    let mut worst_int: f64 = 0.0;
    let mut worst_peak: f64 = 0.0;
    for (m, qs) in [(64usize, vec![64usize]), (96, vec![48]), (96, vec![48, 96])] {
        let cb = match build_multiresolution(&geom, &DesignParams::new(m, 4, 8.5, 1), &qs) {
            Ok(c) => c,
            Err(e) => {
                failures.push(format!("M={m} {qs:?}: {e}"));
                continue;
            }
        };
        let mut start = 0;
        for &q in &qs {
            let block = &cb.codewords[start..start + q];
            start += q;
            let first = block[0].region.nu_lb;
            let last = block[q - 1].region.nu_ub;
            let contiguous = block.windows(2).all(|w| w[0].region.nu_ub == w[1].region.nu_lb);
            let ordered = block.iter().all(|c| c.region.nu_ub > c.region.nu_lb);
            if (first + nu_edge).abs() > 1e-12 || (last - nu_edge).abs() > 1e-12 || !contiguous || !ordered {
                failures.push(format!("M={m} Q={q}: regions do not partition [-{nu_edge:.6}, {nu_edge:.6}]"));
            }
        }
        if start != cb.len() {
            failures.push(format!("M={m}: {} codewords for resolutions {qs:?}", cb.len()));
        }
        let target = 2.0 * PI / m as f64;
        for (i, c) in cb.codewords.iter().enumerate() {
            let mut integral = 0.0;
            for g in 0..n_grid {
                let psi = -PI + 2.0 * PI * g as f64 / n_grid as f64;
                let bp = array_response(m, psi).dotc(&c.u).norm_sqr() / m as f64;
                worst_peak = worst_peak.max(bp);
                if bp > 1.0 + 1e-6 {
                    failures.push(format!("M={m} codeword {i}: peak {bp}"));
                }
                integral += bp * 2.0 * PI / n_grid as f64;
            }
            let rel = (integral - target).abs() / target;
            worst_int = worst_int.max(rel);
            if rel > 1e-3 {
                failures.push(format!("M={m} codeword {i}: integral off by {rel:.2e}"));
            }
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!("max integral error {worst_int:.2e}, max peak {worst_peak:.8}")
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_5() -> Outcome {
    let y = 8.5;
    let geom = RoadGeometry { rsu_height_m: H, lane_offset_m: y, range_lb_m: -75.0, range_ub_m: 75.0 };
    let len = 150.0;
    let k = (y * y + H * H).sqrt();
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for q in [32usize, 64] {
        let x_star = (len * (len + k * q as f64)).sqrt() / 2.0;
        let lib_star = narrowing_threshold(&geom, y, q);
        if (x_star - lib_star).abs() > 1e-9 * x_star {
            failures.push(format!("Q={q}: threshold {lib_star} vs {x_star}"));
        }
        let nu_tilde = 2.0 * psi_of(75.0, y, H) / q as f64;
        let width = len / q as f64;
        let mut prev_ratio = 0.0;
        let mut min_ratio = f64::INFINITY;
        let mut count = 0;
        let mut lb = x_star;
        while lb < 20.0 * x_star {
            let ub = lb + width;
            for (a, b) in [(lb, ub), (-ub, -lb)] {
                let exact = nu_tilde / (psi_of(b, y, H) - psi_of(a, y, H)).abs();
                let lib = equal_division_ratio(&geom, y, q, a, b);
                if (exact - lib).abs() > 1e-9 * exact {
                    failures.push(format!("Q={q}: ratio mismatch at [{a:.1}, {b:.1}]"));
                }
                if !(exact > 1.0) {
                    failures.push(format!("Q={q}: ratio {exact:.4} at [{a:.1}, {b:.1}]"));
                }
                min_ratio = min_ratio.min(exact);
                count += 1;
            }
            let r = nu_tilde / (psi_of(ub, y, H) - psi_of(lb, y, H));
            if lb > 3.0 * k && r <= prev_ratio {
                failures.push(format!("Q={q}: ratio not increasing at {lb:.1}"));
            }
            prev_ratio = r;
            lb = ub;
        }
        details.push(format!("Q={q}: x*={x_star:.2} m, {count} sub-ranges, min ratio {min_ratio:.4}"));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            details.join("; ")
        } else {
            failures.into_iter().take(5).collect::<Vec<_>>().join("; ")
        },
    }
}

type Cache = HashMap<(String, u64, usize), Vec<MetricSummary>>;

/// Summaries of a bundled scenario; `trials` of `None` keeps the bundled count.
fn summaries(cache: &mut Cache, name: &str, seed: u64, trials: Option<usize>) -> Result<Vec<MetricSummary>, String> {
    let scenario = bundled_scenario(name).map_err(|e| e.to_string())?;
    let key = (name.to_string(), seed, trials.unwrap_or(scenario.trials));
    if let Some(s) = cache.get(&key) {
        return Ok(s.clone());
    }
    let res = run_experiment(&scenario, &RunOptions { trials: Some(key.2), seed: Some(seed), keep_csv: false })
        .map_err(|e| format!("{name}: {e}"))?;
    let s: Vec<MetricSummary> = res.into_iter().map(|r| r.summary).collect();
    cache.insert(key, s.clone());
    Ok(s)
}

fn criterion_6(cache: &mut Cache) -> Outcome {
    let mut failures = Vec::new();
    let mut details = Vec::new();
    for seed in [1u64, 2, 3] {
        let run = |cache: &mut Cache, n: &str| summaries(cache, n, seed, Some(500));
        let (p, b, f) =
            match (run(cache, "tracking-proposed"), run(cache, "tracking-manifold"), run(cache, "tracking-feedback")) {
                (Ok(p), Ok(b), Ok(f)) => (p, b, f),
                (p, b, f) => {
                    for e in [p.err(), b.err(), f.err()].into_iter().flatten() {
                        failures.push(e);
                    }
                    continue;
                }
            };
        let powers: Vec<f64> = p.iter().map(|s| s.tx_power_dbm).collect();
        if powers.last().unwrap() - powers.first().unwrap() < 20.0 {
            failures.push(format!("seed {seed}: sweep spans less than 20 dB"));
        }
        for w in p.windows(2) {
            if !(w[1].nmse_x < w[0].nmse_x && w[1].nmse_v < w[0].nmse_v) {
                failures.push(format!(
                    "seed {seed}: NMSE does not decrease from {} to {} dBm",
                    w[0].tx_power_dbm, w[1].tx_power_dbm
                ));
            }
        }
        let (pl, bl) = (p.last().unwrap(), b.last().unwrap());
        if !(pl.nmse_x <= bl.nmse_x) {
            failures.push(format!(
                "seed {seed}: proposed {:.3e} > manifold {:.3e} at the highest power",
                pl.nmse_x, bl.nmse_x
            ));
        }
        for (fs, ps) in f.iter().zip(&p) {
            if !(fs.nmse_x <= ps.nmse_x && fs.nmse_v <= ps.nmse_v) {
                failures.push(format!("seed {seed}: feedback worse than proposed at {} dBm", ps.tx_power_dbm));
            }
        }
        details.push(format!(
            "seed {seed}: NMSE_x proposed {} | manifold@max {:.3e} | feedback@max {:.3e}",
            p.iter().map(|s| format!("{:.3e}", s.nmse_x)).collect::<Vec<_>>().join(" > "),
            bl.nmse_x,
            f.last().unwrap().nmse_x
        ));
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() { details.join("; ") } else { failures.join("; ") },
    }
}

fn criterion_7(cache: &mut Cache) -> Outcome {
    let get = |cache: &mut Cache, n: &str| -> Result<(f64, f64), String> {
        let s = summaries(cache, n, 1, Some(500))?;
        let s = &s[0];
        Ok((s.mean_gain.unwrap_or(f64::NAN), s.mean_rate.unwrap_or(f64::NAN)))
    };
    match (get(cache, "beam-codebook"), get(cache, "beam-dft2"), get(cache, "beam-random")) {
        (Ok(c), Ok(d), Ok(r)) => Outcome {
            pass: c.0 >= d.0 && d.0 >= r.0 && c.1 >= d.1 && d.1 >= r.1,
            detail: format!(
                "gain codebook {:.4} / dft2 {:.4} / random {:.4}; rate {:.3} / {:.3} / {:.3} bit/s/Hz",
                c.0, d.0, r.0, c.1, d.1, r.1
            ),
        },
        (c, d, r) => Outcome {
            pass: false,
            detail: [c.err(), d.err(), r.err()].into_iter().flatten().collect::<Vec<_>>().join("; "),
        },
    }
}

fn criterion_8() -> Outcome {
    let trials = 16;
    let mut failures = Vec::new();
    for (name, _) in BUNDLED_SCENARIOS {
        let s = bundled_scenario(name).expect("bundled");
        let opts = RunOptions { trials: Some(trials), seed: None, keep_csv: true };
        let a = run_experiment(&s, &opts);
        let b =
            rayon::ThreadPoolBuilder::new().num_threads(3).build().expect("pool").install(|| run_experiment(&s, &opts));
        match (a, b) {
            (Ok(a), Ok(b)) => {
                let same = a.len() == b.len()
                    && a.iter()
                        .zip(&b)
                        .all(|(x, y)| x.csv.as_deref().map(str::as_bytes) == y.csv.as_deref().map(str::as_bytes));
                if !same {
                    failures.push(format!("{name}: CSV differs between runs"));
                }
            }
            (a, b) => failures.push(format!("{name}: {:?} {:?}", a.err(), b.err())),
        }
    }
    Outcome {
        pass: failures.is_empty(),
        detail: if failures.is_empty() {
            format!(
                "{} bundled scenarios byte-identical across runs ({trials} trials each, 1 vs 3 workers)",
                BUNDLED_SCENARIOS.len()
            )
        } else {
            failures.join("; ")
        },
    }
}

fn criterion_9(cache: &mut Cache) -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(909);
    let mut moved = 0usize;
    for i in 0..200 {
        let m = [8usize, 32, 96][i % 3];
        let t = random_state(&mut rng);
        let beta = complex_normal(&mut rng, 1.0);
        let jac = jacobian(&t, beta, m, H, 0.01, PI / 512.0).expect("jacobian");
        let cov = random_psd(&mut rng, 1e-2);
        let rho = 10f64.powf(rng.random_range(0.0..4.0));
        let comb = optimal_combiner(&jac.complex, &cov, rho, psi_of(t.x, t.y, H));
        let z = comb.lifted();
        let expected = &z * lift(&channel_vector(beta, psi_of(t.x, t.y, H), m));
        let sounding = RealSounding { r: Vector2::new(expected[0], expected[1]), z, noise_var: 1.0 / (2.0 * rho) };
        let prior = StateBelief { mean: t, cov };
        for form in [UpdateForm::Simple, UpdateForm::Joseph] {
            let post = update(&prior, &sounding, &jac, beta, m, H, rho, form).expect("update");
            if post.mean != prior.mean {
                moved += 1;
            }
        }
    }
    let mut non_psd = 0usize;
    let mut steps = 0usize;
    let mut errors = Vec::new();
    for (name, _) in BUNDLED_SCENARIOS {
        let seed = bundled_scenario(name).expect("bundled").seed;
        match summaries(cache, name, seed, None) {
            Ok(s) => {
                for m in &s {
                    non_psd += m.non_psd_steps;
                    steps += m.trials * m.nmse_x_series.len();
                }
            }
            Err(e) => errors.push(e),
        }
    }
    Outcome {
        pass: moved == 0 && non_psd == 0 && errors.is_empty(),
        detail: format!(
            "zero-innovation updates that moved the mean: {moved}/400; non-PSD covariances: {non_psd} of {steps} steps{}",
            if errors.is_empty() { String::new() } else { format!("; {}", errors.join("; ")) }
        ),
    }
}

fn main() {
    let mut cache = Cache::new();
    type Runner<'a> = Box<dyn FnMut(&mut Cache) -> Outcome + 'a>;
    let criteria: Vec<(&str, Option<Duration>, Runner)> = vec![
        ("Jacobian matches central differences", Some(Duration::from_secs(10)), Box::new(|_| criterion_1())),
        ("optimal combiner beats random unit vectors", Some(Duration::from_secs(30)), Box::new(|_| criterion_2())),
        (
            "MVU acceleration estimator is unbiased at the CRLB",
            Some(Duration::from_secs(20)),
            Box::new(|_| criterion_3()),
        ),
        ("codebook partition and pattern invariants", Some(Duration::from_secs(300)), Box::new(|_| criterion_4())),
        (
            "equal sub-ranges beyond the threshold map to narrow regions",
            Some(Duration::from_secs(5)),
            Box::new(|_| criterion_5()),
        ),
        ("tracking NMSE ordering on seeds 1..3", Some(Duration::from_secs(600)), Box::new(criterion_6)),
        ("beamforming gain and rate ordering", Some(Duration::from_secs(600)), Box::new(criterion_7)),
        ("bundled scenarios are deterministic", None, Box::new(|_| criterion_8())),
        ("EKF fixed point and PSD covariances", None, Box::new(criterion_9)),
    ];
    let mut failed = 0;
    let out = std::io::stdout();
    for (i, (name, budget, mut run)) in criteria.into_iter().enumerate() {
        let start = Instant::now();
        let o = run(&mut cache);
        let took = start.elapsed();
        let ok = o.pass && budget.is_none_or(|b| took <= b);
        if !ok {
            failed += 1;
        }
        let mut lock = out.lock();
        let _ = writeln!(
            lock,
            "criterion {}: {} | {name} | {} | {:.1}s{}",
            i + 1,
            if ok { "PASS" } else { "FAIL" },
            o.detail,
            took.as_secs_f64(),
            budget.map(|b| format!(" (budget {}s)", b.as_secs())).unwrap_or_default()
        );
        let _ = lock.flush();
    }
    if failed > 0 {
        eprintln!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
