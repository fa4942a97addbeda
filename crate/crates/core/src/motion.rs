//! Linear kinematic state model of a vehicle on a straight road.
//!
//! The state is `[x, y, v]`: position along the road, lateral position and
//! speed. One step of length `T_s` moves the vehicle along the steering
//! direction, adds a stationary acceleration through `b` and a Gaussian
//! perturbation with diagonal covariance `Q_w`.

use nalgebra::{Matrix3, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, validation, Result};

pub fn kmh_to_mps(kmh: f64) -> f64 {
    kmh * 1000.0 / 3600.0
}

/// Acceleration spread tied to the initial speed: a tenth of `v0` expressed in m/s.
pub fn default_sigma_alpha(v0_kmh: f64) -> f64 {
    0.1 * (v0_kmh * 1e3 / 3600.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StateVector {
    pub x: f64,
    pub y: f64,
    pub v: f64,
}

impl StateVector {
    pub fn new(x: f64, y: f64, v: f64) -> Self {
        Self { x, y, v }
    }

    pub fn to_vector(self) -> Vector3<f64> {
        Vector3::new(self.x, self.y, self.v)
    }

    pub fn from_vector(v: &Vector3<f64>) -> Self {
        Self { x: v[0], y: v[1], v: v[2] }
    }

    pub fn is_finite(&self) -> bool {
        self.x.is_finite() && self.y.is_finite() && self.v.is_finite()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MotionModel {
    /// Sounding period (s).
    pub ts_s: f64,
    /// Steering angle (rad), within `[-pi/2, pi/2]`.
    pub steering_rad: f64,
    /// Standard deviation of the stationary acceleration (m/s^2).
    pub sigma_alpha: f64,
    /// Standard deviation of the per-step perturbation.
    pub sigma_omega: f64,
}

impl MotionModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.ts_s > 0.0) {
            return Err(validation("sounding period must be positive"));
        }
        if !(self.steering_rad.abs() <= std::f64::consts::FRAC_PI_2) {
            return Err(validation("steering angle must lie in [-pi/2, pi/2]"));
        }
        if !(self.sigma_alpha >= 0.0) || !(self.sigma_omega >= 0.0) {
            return Err(validation("noise standard deviations must be non-negative"));
        }
        Ok(())
    }

    pub fn matrices(&self) -> TransitionMatrices {
        transition_matrices(self)
    }
}

/// `A`, `b`, `Q_a = b b^T sigma_a^2` and `Q_w` of the one-step model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransitionMatrices {
    pub a: Matrix3<f64>,
    pub b: Vector3<f64>,
    pub q_alpha: Matrix3<f64>,
    pub q_omega: Matrix3<f64>,
}

pub fn transition_matrices(m: &MotionModel) -> TransitionMatrices {
    let (s, c) = m.steering_rad.sin_cos();
    let ts = m.ts_s;
    #[rustfmt::skip]
    let a = Matrix3::new(
        1.0, 0.0, ts * c,
        0.0, 1.0, ts * s,
        0.0, 0.0, 1.0,
    );
    let b = Vector3::new(ts * ts / 2.0 * c, ts * ts / 2.0 * s, ts);
    let q_alpha = b * b.transpose() * (m.sigma_alpha * m.sigma_alpha);
    let w2 = m.sigma_omega * m.sigma_omega;
    let q_omega = Matrix3::from_diagonal(&Vector3::new(ts * ts * w2 * c * c, ts * ts * w2 * s * s, w2));
    TransitionMatrices { a, b, q_alpha, q_omega }
}

/// Closed form of `A^l`. `A - I` is nilpotent, so `A^l = I + l (A - I)`.
pub fn transition_power(m: &MotionModel, l: usize) -> Matrix3<f64> {
    let a = transition_matrices(m).a;
    Matrix3::identity() + (a - Matrix3::identity()) * l as f64
}

/// One ground-truth step `t' = A t + b alpha + w`, `w ~ N(0, Q_w)`.
pub fn step_truth<R: Rng + ?Sized>(rng: &mut R, m: &MotionModel, t: &StateVector, alpha: f64) -> StateVector {
    let tm = transition_matrices(m);
    let mut noise = Vector3::zeros();
    for i in 0..3 {
        let sd = tm.q_omega[(i, i)].sqrt();
        let z: f64 = StandardNormal.sample(rng);
        noise[i] = sd * z;
    }
    StateVector::from_vector(&(tm.a * t.to_vector() + tm.b * alpha + noise))
}

/// Long-term transition `t_l = A^l t_0 + b~_l alpha + c~_l` with `c~_l ~ N(0, C_l)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LongTermTransition {
    pub b_tilde: Vector3<f64>,
    pub cov: Matrix3<f64>,
}

pub fn long_term(m: &MotionModel, l: usize) -> Result<LongTermTransition> {
    if l < 1 {
        return Err(domain("long-term transition needs at least one step"));
    }
    let tm = transition_matrices(m);
    let (s, c) = m.steering_rad.sin_cos();
    let lt = l as f64 * m.ts_s;
    let b_tilde = Vector3::new(lt * lt / 2.0 * c, lt * lt / 2.0 * s, lt);
    let mut cov = Matrix3::zeros();
    let mut power = Matrix3::identity();
    for _ in 0..l {
        cov += power * tm.q_omega * power.transpose();
        power = tm.a * power;
    }
    Ok(LongTermTransition { b_tilde, cov })
}

/// A simulated ground-truth run together with the acceleration applied at each step.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    /// States `t_0 .. t_steps`.
    pub states: Vec<StateVector>,
    /// `alphas[l]` drove the transition into `states[l + 1]`.
    pub alphas: Vec<f64>,
}

/// Ground truth with one acceleration draw `alpha ~ N(0, sigma_a^2)` for the whole run.
pub fn simulate_trajectory<R: Rng + ?Sized>(
    rng: &mut R,
    m: &MotionModel,
    t0: StateVector,
    steps: usize,
) -> Vec<StateVector> {
    simulate_trajectory_with_coherence(rng, m, t0, steps, None).states
}

/// Ground truth where the acceleration is redrawn every `coherence` steps
/// (`None` keeps one draw for the whole run).
pub fn simulate_trajectory_with_coherence<R: Rng + ?Sized>(
    rng: &mut R,
    m: &MotionModel,
    t0: StateVector,
    steps: usize,
    coherence: Option<usize>,
) -> Trajectory {
    let accel = Normal::new(0.0, m.sigma_alpha).expect("sigma_alpha validated non-negative");
    let mut states = Vec::with_capacity(steps + 1);
    let mut alphas = Vec::with_capacity(steps);
    states.push(t0);
    let mut alpha = accel.sample(rng);
    for l in 0..steps {
        if let Some(period) = coherence {
            if l > 0 && period > 0 && l % period == 0 {
                alpha = accel.sample(rng);
            }
        }
        let next = step_truth(rng, m, &states[l], alpha);
        states.push(next);
        alphas.push(alpha);
    }
    Trajectory { states, alphas }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::PI;

    fn model(steering: f64, sa: f64, sw: f64) -> MotionModel {
        MotionModel { ts_s: 0.01, steering_rad: steering, sigma_alpha: sa, sigma_omega: sw }
    }

    #[test]
    fn straight_road_matrices() {
        let tm = transition_matrices(&model(0.0, 1.0, 0.1));
        assert_eq!(tm.a[(1, 2)], 0.0);
        assert_eq!(tm.b, Vector3::new(0.01 * 0.01 / 2.0, 0.0, 0.01));
        let eig = tm.q_alpha.symmetric_eigenvalues();
        let mut ev: Vec<f64> = eig.iter().copied().collect();
        ev.sort_by(f64::total_cmp);
        assert!(ev[0].abs() < 1e-18 && ev[1].abs() < 1e-18 && ev[2] > 0.0);
    }

    #[test]
    fn steering_entry_from_sounding_period() {
        let tm = transition_matrices(&model(PI / 128.0, 1.0, 0.1));
        assert_relative_eq!(tm.a[(0, 2)], 0.009_996_988_186_962_043, epsilon = 1e-15);
        assert!(tm.a.upper_triangle() == tm.a);
        assert_eq!(tm.a.diagonal(), Vector3::new(1.0, 1.0, 1.0));
    }

    #[test]
    fn q_omega_eigenvalues_are_its_diagonal() {
        let m = model(0.3, 1.0, 0.2);
        let tm = transition_matrices(&m);
        let (s, c) = m.steering_rad.sin_cos();
        let want = [0.01f64.powi(2) * 0.04 * c * c, 0.01f64.powi(2) * 0.04 * s * s, 0.04];
        for (i, w) in want.iter().enumerate() {
            assert_relative_eq!(tm.q_omega[(i, i)], *w, epsilon = 1e-15);
        }
        assert_eq!(tm.q_omega, Matrix3::from_diagonal(&tm.q_omega.diagonal()));
    }

    #[test]
    fn noiseless_steps() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let m = model(0.0, 0.0, 0.0);
        let t = StateVector::new(-50.0, 8.5, 20.0);
        let next = step_truth(&mut rng, &m, &t, 0.0);
        assert_eq!(next, StateVector::new(-50.0 + 20.0 * 0.01, 8.5, 20.0));
        let next = step_truth(&mut rng, &m, &t, 2.0);
        assert_relative_eq!(next.v, 20.0 + 2.0 * 0.01, epsilon = 1e-12);
    }

    #[test]
    fn step_noise_covariance_matches_q_omega() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let m = model(PI / 8.0, 0.0, 0.5);
        let tm = transition_matrices(&m);
        let t = StateVector::new(3.0, 8.5, 15.0);
        let n = 100_000;
        let mut acc = Matrix3::zeros();
        for _ in 0..n {
            let next = step_truth(&mut rng, &m, &t, 0.7);
            let e = next.to_vector() - tm.a * t.to_vector() - tm.b * 0.7;
            acc += e * e.transpose();
        }
        acc /= n as f64;
        for i in 0..3 {
            assert!((acc[(i, i)] / tm.q_omega[(i, i)] - 1.0).abs() < 0.05, "diag {i}");
        }
    }

    #[test]
    fn long_term_single_step() {
        let m = model(0.2, 1.0, 0.3);
        let tm = transition_matrices(&m);
        let lt = long_term(&m, 1).unwrap();
        assert_relative_eq!(lt.b_tilde, tm.b, epsilon = 1e-15);
        assert_relative_eq!(lt.cov, tm.q_omega, epsilon = 1e-15);
        assert!(long_term(&m, 0).is_err());
    }

    #[test]
    fn long_term_closed_form_matches_matrix_power_sum() {
        let m = model(PI / 128.0, 1.0, 0.3);
        let tm = transition_matrices(&m);
        for l in [2usize, 10, 50, 1000] {
            let mut sum = Vector3::zeros();
            let mut power = Matrix3::identity();
            for _ in 0..l {
                sum += power * tm.b;
                power *= tm.a;
            }
            let lt = long_term(&m, l).unwrap();
            for i in 0..3 {
                let denom = sum[i].abs().max(1e-300);
                assert!((lt.b_tilde[i] - sum[i]).abs() / denom <= 1e-12, "l={l} i={i}");
            }
            assert_relative_eq!(transition_power(&m, l), power, max_relative = 1e-12);
        }
    }

    #[test]
    fn long_term_covariance_is_psd_with_growing_trace() {
        let m = model(0.4, 1.0, 0.3);
        let mut prev = 0.0;
        for l in 1..60 {
            let lt = long_term(&m, l).unwrap();
            assert!(lt.cov.symmetric_eigenvalues().min() >= -1e-12);
            let tr = lt.cov.trace();
            assert!(tr >= prev);
            prev = tr;
        }
    }

    #[test]
    fn trajectory_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = model(PI / 128.0, 0.0, 0.0);
        let t0 = StateVector::new(-50.0, 8.5, kmh_to_mps(70.0));
        assert_eq!(simulate_trajectory(&mut rng, &m, t0, 0), vec![t0]);
        let traj = simulate_trajectory(&mut rng, &m, t0, 300);
        for (l, s) in traj.iter().enumerate() {
            let want = t0.x + l as f64 * 0.01 * t0.v * m.steering_rad.cos();
            assert!((s.x - want).abs() < 1e-9);
        }
        assert!((t0.v - 19.444).abs() < 1e-3);
    }

    #[test]
    fn acceleration_is_redrawn_per_coherence_period() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = model(0.0, 1.5, 0.0);
        let t0 = StateVector::new(0.0, 8.5, 10.0);
        let traj = simulate_trajectory_with_coherence(&mut rng, &m, t0, 30, Some(10));
        assert!(traj.alphas[..10].iter().all(|a| *a == traj.alphas[0]));
        assert_ne!(traj.alphas[0], traj.alphas[10]);
        let traj = simulate_trajectory_with_coherence(&mut rng, &m, t0, 30, None);
        assert!(traj.alphas.iter().all(|a| *a == traj.alphas[0]));
    }

    #[test]
    fn default_sigma_alpha_from_speed() {
        assert_relative_eq!(default_sigma_alpha(70.0), 1.944_444_444_444_444_4, epsilon = 1e-12);
    }
}
