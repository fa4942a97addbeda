//! Uniform linear array geometry and the single-path V2I channel.
//!
//! Units are SI throughout: metres, seconds, radians and linear power (mW for
//! absolute powers). Conversions from dB/dBm happen at the configuration
//! boundary via [`db_to_linear`] and [`dbm_to_mw`].

use nalgebra::DVector;
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;

use crate::error::{domain, validation, Result};
use crate::C64;

/// Speed of light in vacuum (m/s).
pub const SPEED_OF_LIGHT: f64 = 299_792_458.0;

/// Thermal noise density at room temperature (dBm/Hz).
pub const THERMAL_NOISE_DBM_PER_HZ: f64 = -174.0;

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

pub fn linear_to_db(lin: f64) -> f64 {
    10.0 * lin.log10()
}

pub fn dbm_to_mw(dbm: f64) -> f64 {
    db_to_linear(dbm)
}

/// Integrated thermal noise power over `bandwidth_hz`, in dBm.
pub fn noise_power_dbm(bandwidth_hz: f64) -> f64 {
    THERMAL_NOISE_DBM_PER_HZ + 10.0 * bandwidth_hz.log10()
}

pub fn wavelength(carrier_hz: f64) -> f64 {
    SPEED_OF_LIGHT / carrier_hz
}

/// Road layout seen from the roadside unit.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RoadGeometry {
    /// Height of the RSU antenna above the road (m).
    pub rsu_height_m: f64,
    /// Lateral offset of the lane from the RSU (m).
    pub lane_offset_m: f64,
    /// Left edge of the served road segment along the travel axis (m).
    pub range_lb_m: f64,
    /// Right edge of the served road segment along the travel axis (m).
    pub range_ub_m: f64,
}

impl RoadGeometry {
    pub fn validate(&self) -> Result<()> {
        if !(self.rsu_height_m > 0.0) {
            return Err(validation("rsu height must be positive"));
        }
        if !(self.lane_offset_m >= 0.0) {
            return Err(validation("lane offset must be non-negative"));
        }
        if !(self.range_lb_m < self.range_ub_m) {
            return Err(validation("road range lower bound must be below upper bound"));
        }
        Ok(())
    }

    /// Distance from the RSU to the lane in the plane orthogonal to the road.
    pub fn lateral_distance(&self, lane_offset_m: f64) -> f64 {
        lane_offset_m.hypot(self.rsu_height_m)
    }
}

/// Antenna array and link-budget constants.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ArrayConfig {
    pub num_antennas: usize,
    pub num_rf_chains: usize,
    /// Carrier wavelength (m).
    pub wavelength_m: f64,
    pub pathloss_exponent: f64,
    /// Noise power (mW).
    pub noise_power_mw: f64,
    /// Transmit power (mW).
    pub tx_power_mw: f64,
}

impl ArrayConfig {
    pub fn validate(&self) -> Result<()> {
        if self.num_antennas == 0 || self.num_rf_chains == 0 {
            return Err(validation("antenna and RF chain counts must be positive"));
        }
        if self.num_rf_chains > self.num_antennas {
            return Err(validation("more RF chains than antennas"));
        }
        if !(self.wavelength_m > 0.0) || !(self.noise_power_mw > 0.0) || !(self.tx_power_mw > 0.0) {
            return Err(validation("wavelength, noise power and tx power must be positive"));
        }
        Ok(())
    }
}

/// Per-instant channel state: fading, direction and average SNR.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub beta: C64,
    pub psi: f64,
    pub rho: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RicianConfig {
    pub k_factor_db: f64,
    /// Number of sounding steps over which the fading stays constant.
    pub block_length: usize,
}

impl Default for RicianConfig {
    fn default() -> Self {
        Self { k_factor_db: 13.0, block_length: 1 }
    }
}

/// Spatial frequency `pi * x / sqrt(x^2 + y^2 + h^2)` of a vehicle at `(x, y)`
/// seen from an RSU at height `h`.
pub fn spatial_frequency(x: f64, y: f64, h: f64) -> Result<f64> {
    if !(x.is_finite() && y.is_finite() && h.is_finite()) {
        return Err(domain("spatial frequency of a non-finite position"));
    }
    let r2 = x * x + y * y + h * h;
    if r2 == 0.0 {
        return Err(domain("spatial frequency at the array origin"));
    }
    Ok(PI * x / r2.sqrt())
}

/// Array response `[1, e^{j psi}, ..., e^{j (M-1) psi}]`.
pub fn array_response(m: usize, psi: f64) -> DVector<C64> {
    DVector::from_fn(m, |i, _| C64::from_polar(1.0, i as f64 * psi))
}

/// Real and imaginary parts of [`array_response`].
pub fn array_response_parts(m: usize, psi: f64) -> (DVector<f64>, DVector<f64>) {
    let re = DVector::from_fn(m, |i, _| (i as f64 * psi).cos());
    let im = DVector::from_fn(m, |i, _| (i as f64 * psi).sin());
    (re, im)
}

/// Derivatives of the real and imaginary array-response parts with respect to `psi`.
pub fn array_response_derivative(m: usize, psi: f64) -> (DVector<f64>, DVector<f64>) {
    let re = DVector::from_fn(m, |i, _| -(i as f64) * (i as f64 * psi).sin());
    let im = DVector::from_fn(m, |i, _| i as f64 * (i as f64 * psi).cos());
    (re, im)
}

/// Average receive SNR `(P/N) (lambda / (4 pi d))^n` at distance `d`.
pub fn average_snr(cfg: &ArrayConfig, d: f64) -> Result<f64> {
    if !(d > 0.0) {
        return Err(domain(format!("distance must be positive, got {d}")));
    }
    let gain = (cfg.wavelength_m / (4.0 * PI * d)).powf(cfg.pathloss_exponent);
    Ok(cfg.tx_power_mw / cfg.noise_power_mw * gain)
}

/// Draw one Rician fading coefficient with unit mean power.
///
/// The line-of-sight phase is drawn fresh, so every call starts a new fading
/// block. An infinite K-factor yields a pure LOS coefficient.
pub fn draw_fading<R: Rng + ?Sized>(rng: &mut R, ric: &RicianConfig) -> C64 {
    let k = db_to_linear(ric.k_factor_db);
    let (los, nlos) = if k.is_infinite() { (1.0, 0.0) } else { ((k / (k + 1.0)).sqrt(), (1.0 / (k + 1.0)).sqrt()) };
    let phase = rng.random::<f64>() * 2.0 * PI;
    let scatter = complex_normal(rng, 1.0);
    C64::from_polar(los, phase) + scatter * nlos
}

/// Circularly-symmetric complex Gaussian with total variance `var`.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R, var: f64) -> C64 {
    let s = (var / 2.0).sqrt();
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    C64::new(re * s, im * s)
}

/// Block-constant fading process: a new coefficient every `block_length` steps.
#[derive(Debug, Clone)]
pub struct FadingProcess {
    cfg: RicianConfig,
    remaining: usize,
    current: C64,
}

impl FadingProcess {
    pub fn new(cfg: RicianConfig) -> Self {
        Self { cfg, remaining: 0, current: C64::new(1.0, 0.0) }
    }

    pub fn next<R: Rng + ?Sized>(&mut self, rng: &mut R) -> C64 {
        if self.remaining == 0 {
            self.current = draw_fading(rng, &self.cfg);
            self.remaining = self.cfg.block_length.max(1);
        }
        self.remaining -= 1;
        self.current
    }
}

/// Channel vector `beta * d_M(psi)`.
pub fn channel_vector(beta: C64, psi: f64, m: usize) -> DVector<C64> {
    array_response(m, psi) * beta
}
