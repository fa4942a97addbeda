//! Minimum-variance unbiased estimation of the stationary acceleration and
//! the gate that decides when an estimate is trusted.

use nalgebra::{Matrix3, SymmetricEigen, Vector3};
use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};
use crate::motion::{transition_matrices, transition_power, MotionModel, StateVector};

pub const DEFAULT_THRESHOLD: f64 = 0.03;
pub const DEFAULT_MIN_STEP: usize = 10;
/// Floor on the previous estimate's magnitude in the relative gate (m/s^2).
pub const GATE_EPS_ABS: f64 = 1e-3;
/// Condition number above which `C + Q` is regularized.
pub const MAX_CONDITION: f64 = 1e12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AccelEstimate {
    pub alpha_hat: f64,
    pub crlb: f64,
    pub accepted: bool,
    pub step: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AccelSettings {
    pub enabled: bool,
    pub min_step: usize,
    pub threshold: f64,
}

impl Default for AccelSettings {
    fn default() -> Self {
        Self { enabled: true, min_step: DEFAULT_MIN_STEP, threshold: DEFAULT_THRESHOLD }
    }
}

/// `t_hat - A^l t0`.
pub fn residual_state(t_hat: &StateVector, t0: &StateVector, model: &MotionModel, l: usize) -> Vector3<f64> {
    t_hat.to_vector() - transition_power(model, l) * t0.to_vector()
}

/// Weighted least-squares estimate of the acceleration and its CRLB.
pub fn estimate_alpha(
    t_res: &Vector3<f64>,
    b_tilde: &Vector3<f64>,
    c: &Matrix3<f64>,
    q: &Matrix3<f64>,
    step: usize,
) -> Result<AccelEstimate> {
    if b_tilde.norm() == 0.0 {
        return Err(domain("acceleration is unobservable with a zero drift vector"));
    }
    let mut s = c + q;
    s = (s + s.transpose()) * 0.5;
    let eig = SymmetricEigen::new(s);
    let max = eig.eigenvalues.max();
    let min = eig.eigenvalues.min();
    if !(max > 0.0) || !max.is_finite() {
        return Err(domain("error covariance is not positive"));
    }
    if min <= max / MAX_CONDITION {
        s += Matrix3::identity() * (max / MAX_CONDITION);
    }
    let chol = s.cholesky().ok_or_else(|| domain("error covariance is not positive definite"))?;
    let wb = chol.solve(b_tilde);
    let info = b_tilde.dot(&wb);
    if !(info > 0.0) || !info.is_finite() {
        return Err(domain("non-positive Fisher information"));
    }
    let alpha_hat = wb.dot(t_res) / info;
    Ok(AccelEstimate { alpha_hat, crlb: 1.0 / info, accepted: false, step })
}

/// Relative-change gate against the previous estimate.
pub fn gate_alpha(prev: Option<&AccelEstimate>, new: &AccelEstimate, threshold: f64) -> bool {
    match prev {
        None => false,
        Some(p) => (new.alpha_hat - p.alpha_hat).abs() / p.alpha_hat.abs().max(GATE_EPS_ABS) <= threshold,
    }
}

/// Running estimator that tracks the accumulated process-noise covariance
/// step by step and applies the gate.
#[derive(Debug, Clone)]
pub struct AccelEstimator {
    model: MotionModel,
    origin: StateVector,
    settings: AccelSettings,
    a: Matrix3<f64>,
    q_omega: Matrix3<f64>,
    /// `A^l` for the current step count.
    power: Matrix3<f64>,
    /// Accumulated `sum_{tau < l} A^tau Q_w A^tau^T`.
    cov: Matrix3<f64>,
    step: usize,
    prev: Option<AccelEstimate>,
    applied: Option<f64>,
}

impl AccelEstimator {
    pub fn new(model: MotionModel, origin: StateVector, settings: AccelSettings) -> Self {
        let tm = transition_matrices(&model);
        Self {
            model,
            origin,
            settings,
            a: tm.a,
            q_omega: tm.q_omega,
            power: Matrix3::identity(),
            cov: Matrix3::zeros(),
            step: 0,
            prev: None,
            applied: None,
        }
    }

    /// Acceleration currently applied in prediction (last accepted estimate).
    pub fn applied(&self) -> Option<f64> {
        self.applied
    }

    pub fn last(&self) -> Option<&AccelEstimate> {
        self.prev.as_ref()
    }

    /// Advance to the next step with the posterior belief of that step.
    pub fn observe(&mut self, mean: &StateVector, cov: &Matrix3<f64>) -> Result<Option<AccelEstimate>> {
        self.cov += self.power * self.q_omega * self.power.transpose();
        self.power = self.a * self.power;
        self.step += 1;
        let l = self.step;
        if !self.settings.enabled || l < self.settings.min_step.max(1) {
            return Ok(None);
        }
        let lt = l as f64 * self.model.ts_s;
        let (s, c) = self.model.steering_rad.sin_cos();
        let b_tilde = Vector3::new(lt * lt / 2.0 * c, lt * lt / 2.0 * s, lt);
        let t_res = mean.to_vector() - self.power * self.origin.to_vector();
        let mut est = estimate_alpha(&t_res, &b_tilde, &self.cov, cov, l)?;
        est.accepted = gate_alpha(self.prev.as_ref(), &est, self.settings.threshold);
        if est.accepted {
            self.applied = Some(est.alpha_hat);
        }
        self.prev = Some(est);
        Ok(Some(est))
    }
}
