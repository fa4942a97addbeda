//! Extended Kalman filter over the vehicle state driven by single-sample
//! uplink soundings.

use nalgebra::{DMatrix, DVector, Matrix2, Matrix3, Matrix3x2, SymmetricEigen, Vector3};
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::accel::{AccelEstimate, AccelEstimator, AccelSettings};
use crate::array_channel::{array_response_derivative, channel_vector, spatial_frequency, ChannelRealization};
use crate::error::{Error, Result};
use crate::motion::{transition_matrices, MotionModel, StateVector, TransitionMatrices};
use crate::sounding::{
    dft_manifold_combiner, hybrid_approximation, lift, optimal_combiner, sound_uplink, CombinerKind,
    SteeringDictionary, DEFAULT_OVERSAMPLING,
};
use crate::C64;

pub use crate::sounding::RealSounding;

/// Relative size of the ridge added to the initial covariance.
pub const DELTA_REG_SCALE: f64 = 1e-9;

/// Tolerance used when checking covariances for positive semidefiniteness.
pub const PSD_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StateBelief {
    pub mean: StateVector,
    pub cov: Matrix3<f64>,
}

impl StateBelief {
    pub fn is_psd(&self) -> bool {
        is_numerically_psd(&self.cov)
    }
}

pub fn is_numerically_psd(q: &Matrix3<f64>) -> bool {
    if (q - q.transpose()).abs().max() > 1e-10 * q.abs().max().max(1.0) {
        return false;
    }
    SymmetricEigen::new(*q).eigenvalues.iter().all(|&e| e >= -PSD_TOLERANCE)
}

/// Ridge `1e-9 * |t0|^2` that keeps the initial covariance invertible.
pub fn delta_reg(t0: &StateVector) -> f64 {
    let n2 = t0.to_vector().norm_squared();
    DELTA_REG_SCALE * if n2 > 0.0 { n2 } else { 1.0 }
}

/// Initial belief from a feedback report `t0 (1 + eps)`, `eps ~ N(0, sigma_eps^2)`.
pub fn init_belief<R: Rng + ?Sized>(t0: &StateVector, sigma_eps: f64, rng: &mut R) -> StateBelief {
    let eps = if sigma_eps > 0.0 { Normal::new(0.0, sigma_eps).expect("finite sigma").sample(rng) } else { 0.0 };
    let tv = t0.to_vector();
    let cov = tv * tv.transpose() * (sigma_eps * sigma_eps) + Matrix3::identity() * delta_reg(t0);
    StateBelief { mean: StateVector::from_vector(&(tv * (1.0 + eps))), cov }
}

/// One-step prediction; with an acceleration estimate its drift is applied and
/// its uncertainty term dropped.
pub fn predict(belief: &StateBelief, tm: &TransitionMatrices, alpha_hat: Option<f64>) -> StateBelief {
    let t = belief.mean.to_vector();
    let base = tm.a * belief.cov * tm.a.transpose() + tm.q_omega;
    let (mean, cov) = match alpha_hat {
        Some(a) => (tm.a * t + tm.b * a, base),
        None => (tm.a * t, base + tm.q_alpha),
    };
    StateBelief { mean: StateVector::from_vector(&mean), cov: (cov + cov.transpose()) * 0.5 }
}

pub fn g_of_state(t: &StateVector, h: f64) -> Result<f64> {
    spatial_frequency(t.x, t.y, h)
}

/// Gradient row of `g` with the velocity entry taken through `dx/dv = Ts cos(phi)`.
pub fn g_gradient(t: &StateVector, h: f64, ts: f64, steering: f64) -> Vector3<f64> {
    let yh = t.y * t.y + h * h;
    let r3 = (t.x * t.x + yh).powf(1.5);
    let s = std::f64::consts::PI / r3;
    Vector3::new(s * yh, -s * t.x * t.y, s * steering.cos() * yh * ts)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Jacobian {
    /// `2M x 3` real-domain Jacobian.
    pub real: DMatrix<f64>,
    /// `M x 3` complex Jacobian.
    pub complex: DMatrix<C64>,
}

/// Rank-one channel Jacobian `hdot * gdot` at the predicted state.
pub fn jacobian(t: &StateVector, beta: C64, m: usize, h: f64, ts: f64, steering: f64) -> Result<Jacobian> {
    let psi = g_of_state(t, h)?;
    let g = g_gradient(t, h, ts, steering);
    let (dre, dim) = array_response_derivative(m, psi);
    let hdot = DVector::from_fn(m, |i, _| beta * C64::new(dre[i], dim[i]));
    let complex = DMatrix::from_fn(m, 3, |i, j| hdot[i] * g[j]);
    let real = DMatrix::from_fn(2 * m, 3, |i, j| if i < m { complex[(i, j)].re } else { complex[(i - m, j)].im });
    Ok(Jacobian { real, complex })
}

/// Kalman gain `Q H^T (H Q H^T + I / (2 rho))^-1` with `H = Z D`.
pub fn kalman_gain(q_pred: &Matrix3<f64>, d_real: &DMatrix<f64>, z: &DMatrix<f64>, rho: f64) -> Result<Matrix3x2<f64>> {
    let hd = z * d_real;
    let h = nalgebra::Matrix2x3::from_fn(|i, j| hd[(i, j)]);
    let s = h * q_pred * h.transpose() + Matrix2::identity() / (2.0 * rho);
    let inv = s
        .try_inverse()
        .filter(|m| m.iter().all(|v| v.is_finite()))
        .ok_or_else(|| Error::Numerical("singular innovation covariance".into()))?;
    Ok(q_pred * h.transpose() * inv)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum UpdateForm {
    /// `(I - K H) Q`, then symmetrized.
    #[default]
    Simple,
    /// `(I - K H) Q (I - K H)^T + K R K^T`.
    Joseph,
}

/// Measurement update with the predicted sample `Z h(g(t_pred))`.
#[allow(clippy::too_many_arguments)]
pub fn update(
    pred: &StateBelief,
    sounding: &RealSounding,
    jac: &Jacobian,
    beta: C64,
    m: usize,
    h: f64,
    rho: f64,
    form: UpdateForm,
) -> Result<StateBelief> {
    let k = kalman_gain(&pred.cov, &jac.real, &sounding.z, rho)?;
    let psi_hat = g_of_state(&pred.mean, h)?;
    let expected = &sounding.z * lift(&channel_vector(beta, psi_hat, m));
    let innovation = nalgebra::Vector2::new(sounding.r[0] - expected[0], sounding.r[1] - expected[1]);
    let mean = pred.mean.to_vector() + k * innovation;
    let hd = &sounding.z * &jac.real;
    let hm = nalgebra::Matrix2x3::from_fn(|i, j| hd[(i, j)]);
    let ikh = Matrix3::identity() - k * hm;
    let cov = match form {
        UpdateForm::Simple => ikh * pred.cov,
        UpdateForm::Joseph => ikh * pred.cov * ikh.transpose() + k * k.transpose() / (2.0 * rho),
    };
    let cov = (cov + cov.transpose()) * 0.5;
    let mean = StateVector::from_vector(&mean);
    if !mean.is_finite() || cov.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("tracker diverged to a non-finite state".into()));
    }
    Ok(StateBelief { mean, cov })
}

/// Which combiner the tracker sounds with.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SoundingMode {
    Optimal,
    Hybrid,
    Manifold,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrackerConfig {
    pub antennas: usize,
    pub rf_chains: usize,
    pub rsu_height: f64,
    pub model: MotionModel,
    pub sounding: SoundingMode,
    pub update_form: UpdateForm,
    pub accel: AccelSettings,
    pub oversampling: usize,
}

impl TrackerConfig {
    pub fn new(antennas: usize, rf_chains: usize, rsu_height: f64, model: MotionModel, sounding: SoundingMode) -> Self {
        Self {
            antennas,
            rf_chains,
            rsu_height,
            model,
            sounding,
            update_form: UpdateForm::Simple,
            accel: AccelSettings::default(),
            oversampling: DEFAULT_OVERSAMPLING,
        }
    }
}

/// What happened in one tracker step.
#[derive(Debug, Clone)]
pub struct TrackerStep {
    pub prior: StateBelief,
    pub posterior: StateBelief,
    pub combiner: CombinerKind,
    pub fallback: bool,
    pub accel: Option<AccelEstimate>,
    /// Acceleration applied in this step's prediction.
    pub alpha_applied: Option<f64>,
}

/// Stateful sounding-driven tracker.
#[derive(Debug, Clone)]
pub struct Tracker {
    cfg: TrackerConfig,
    tm: TransitionMatrices,
    belief: StateBelief,
    dict: Option<SteeringDictionary>,
    accel: Option<AccelEstimator>,
}

impl Tracker {
    /// `accel_origin` is the state `t0` the residual `t_hat - A^l t0` refers to.
    pub fn new(cfg: TrackerConfig, initial: StateBelief, accel_origin: StateVector) -> Self {
        let dict =
            (cfg.sounding == SoundingMode::Hybrid).then(|| SteeringDictionary::new(cfg.antennas, cfg.oversampling));
        let accel = (cfg.accel.enabled).then(|| AccelEstimator::new(cfg.model, accel_origin, cfg.accel));
        Self { tm: transition_matrices(&cfg.model), cfg, belief: initial, dict, accel }
    }

    pub fn config(&self) -> &TrackerConfig {
        &self.cfg
    }

    pub fn belief(&self) -> &StateBelief {
        &self.belief
    }

    pub fn alpha_applied(&self) -> Option<f64> {
        self.accel.as_ref().and_then(|a| a.applied())
    }

    pub fn last_estimate(&self) -> Option<&AccelEstimate> {
        self.accel.as_ref().and_then(|a| a.last())
    }

    pub fn transition(&self) -> &TransitionMatrices {
        &self.tm
    }

    /// Overwrite the belief (feedback reports).
    pub fn reset(&mut self, belief: StateBelief) {
        self.belief = belief;
    }

    /// Prediction without a sounding.
    pub fn predict_only(&mut self) -> StateBelief {
        self.belief = predict(&self.belief, &self.tm, self.alpha_applied());
        self.belief
    }

    /// Predict, design the combiner, sound the true channel and update.
    pub fn step<R: Rng + ?Sized>(&mut self, rng: &mut R, chan: &ChannelRealization) -> Result<TrackerStep> {
        let m = self.cfg.antennas;
        let h = self.cfg.rsu_height;
        let alpha_applied = self.alpha_applied();
        let prior = predict(&self.belief, &self.tm, alpha_applied);
        if !prior.mean.is_finite() {
            return Err(Error::Numerical("non-finite predicted state".into()));
        }
        let jac = jacobian(&prior.mean, chan.beta, m, h, self.cfg.model.ts_s, self.cfg.model.steering_rad)?;
        let comb = match self.cfg.sounding {
            SoundingMode::Manifold => dft_manifold_combiner(&prior.mean, h, m)?,
            SoundingMode::Optimal | SoundingMode::Hybrid => {
                let psi_hat = g_of_state(&prior.mean, h)?;
                let opt = optimal_combiner(&jac.complex, &prior.cov, chan.rho, psi_hat);
                match &self.dict {
                    Some(dict) => {
                        let mut hyb = hybrid_approximation(&opt.weights, dict, self.cfg.rf_chains)?;
                        hyb.fallback = opt.fallback;
                        hyb
                    }
                    None => opt,
                }
            }
        };
        let sounding = sound_uplink(rng, &comb, chan, m);
        let posterior = update(&prior, &sounding, &jac, chan.beta, m, h, chan.rho, self.cfg.update_form)?;
        let accel = match self.accel.as_mut() {
            Some(a) => a.observe(&posterior.mean, &posterior.cov)?,
            None => None,
        };
        self.belief = posterior;
        Ok(TrackerStep { prior, posterior, combiner: comb.kind, fallback: comb.fallback, accel, alpha_applied })
    }
}
