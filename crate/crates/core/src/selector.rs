//! Sounding-free beam selection for the next downlink interval.
//!
//! The current belief is extrapolated over the `Omega` sounding periods of the
//! interval, each predicted state becomes a Gaussian over the beam direction,
//! and the mixture is matched against every codeword pattern.

use nalgebra::{DVector, Matrix3};
use statrs::function::erf::erfc;
use std::f64::consts::{PI, SQRT_2};

use crate::array_channel::{array_response, spatial_frequency};
use crate::codebook::Codebook;
use crate::ekf::StateBelief;
use crate::error::{domain, Result};
use crate::grid::PsiGrid;
use crate::motion::{MotionModel, StateVector, TransitionMatrices};
use crate::C64;

/// Half-width of the sampled Gaussian window in standard deviations.
pub const WINDOW_SIGMAS: f64 = 8.0;

/// Predicted state and covariance `t` steps ahead, `t = 1..=omega`.
///
/// `t~ = A^t t + b~_t alpha` and `Q~ = A^t Q A^t^T + sum_{s<t} A^s (Q_a + Q_w) A^s^T`;
/// the `Q_a` term is dropped when an acceleration estimate is supplied.
pub fn extrapolate(
    belief: &StateBelief,
    model: &MotionModel,
    tm: &TransitionMatrices,
    alpha_hat: Option<f64>,
    omega: usize,
) -> Vec<(StateVector, Matrix3<f64>)> {
    let noise = match alpha_hat {
        Some(_) => tm.q_omega,
        None => tm.q_alpha + tm.q_omega,
    };
    let (sin, cos) = model.steering_rad.sin_cos();
    let t0 = belief.mean.to_vector();
    let id = Matrix3::identity();
    let power = |t: usize| id + (tm.a - id) * t as f64;
    (1..=omega)
        .map(|t| {
            let at = power(t);
            let mut mean = at * t0;
            if let Some(a) = alpha_hat {
                let lt = t as f64 * model.ts_s;
                mean += nalgebra::Vector3::new(lt * lt / 2.0 * cos, lt * lt / 2.0 * sin, lt) * a;
            }
            let mut cov = at * belief.cov * at.transpose();
            for s in 0..t {
                let p = power(s);
                cov += p * noise * p.transpose();
            }
            (StateVector::from_vector(&mean), (cov + cov.transpose()) * 0.5)
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictedDirection {
    pub mean_psi: f64,
    pub std_psi: f64,
    pub t: usize,
}

/// `d psi / d x` at `(x, y)`.
pub fn direction_slope(x: f64, y: f64, h: f64) -> f64 {
    let yh = y * y + h * h;
    PI * yh / (x * x + yh).powf(1.5)
}

/// Linearized beam-direction distribution of a predicted state.
pub fn direction_distribution(t: &StateVector, cov: &Matrix3<f64>, h: f64, step: usize) -> Result<PredictedDirection> {
    let mean_psi = spatial_frequency(t.x, t.y, h)?;
    let std_psi = direction_slope(t.x, t.y, h).abs() * cov[(0, 0)].max(0.0).sqrt();
    Ok(PredictedDirection { mean_psi, std_psi, t: step })
}

/// Ideal pattern: a Gaussian mixture scaled by `2 pi / (M Omega)`.
///
/// Only the samples in `support` can be non-zero.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealBpVector {
    pub g: Vec<f64>,
    pub omega: usize,
    /// Inclusive index range holding every non-zero sample.
    pub support: (usize, usize),
}

fn std_normal_cdf(z: f64) -> f64 {
    0.5 * erfc(-z / SQRT_2)
}

/// Sample the mixture on the grid as cell averages of each Gaussian (exact
/// CDF differences over a `+-8 sigma` window, truncated at the grid edges).
/// A component narrower than a cell becomes a unit mass at the nearest sample.
pub fn ideal_bp(dirs: &[PredictedDirection], m: usize, grid: &PsiGrid) -> Result<IdealBpVector> {
    if dirs.is_empty() {
        return Err(domain("ideal pattern needs at least one predicted direction"));
    }
    let omega = dirs.len();
    let dpsi = grid.spacing();
    let scale = 2.0 * PI / (m as f64 * omega as f64);
    let mut g = vec![0.0; grid.len()];
    let mut lo = usize::MAX;
    let mut hi = 0;
    for d in dirs {
        if !(d.mean_psi.is_finite() && d.std_psi.is_finite()) {
            return Err(domain("non-finite predicted direction"));
        }
        if d.std_psi < 1e-3 * dpsi {
            let i = grid.nearest(d.mean_psi);
            g[i] += scale / dpsi;
            lo = lo.min(i);
            hi = hi.max(i);
            continue;
        }
        let a = grid.nearest(d.mean_psi - WINDOW_SIGMAS * d.std_psi);
        let b = grid.nearest(d.mean_psi + WINDOW_SIGMAS * d.std_psi);
        for (i, slot) in g.iter_mut().enumerate().take(b + 1).skip(a) {
            let c = grid.psi(i);
            let p = std_normal_cdf((c + dpsi / 2.0 - d.mean_psi) / d.std_psi)
                - std_normal_cdf((c - dpsi / 2.0 - d.mean_psi) / d.std_psi);
            *slot += scale * p / dpsi;
        }
        lo = lo.min(a);
        hi = hi.max(b);
    }
    Ok(IdealBpVector { g, omega, support: (lo, hi) })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Selection {
    /// One-based codeword index.
    pub index: usize,
    pub score: f64,
}

/// Score `(g_ideal . g_q)^2` of every codeword.
pub fn scores(codebook: &Codebook, ideal: &IdealBpVector) -> Vec<f64> {
    let (lo, hi) = ideal.support;
    codebook
        .codewords
        .iter()
        .map(|c| {
            let ip: f64 = ideal.g[lo..=hi].iter().zip(&c.bp_samples[lo..=hi]).map(|(a, b)| a * b).sum();
            ip * ip
        })
        .collect()
}

/// Codeword maximizing the squared pattern inner product; ties go to the
/// lowest index.
pub fn select(codebook: &Codebook, ideal: &IdealBpVector) -> Result<Selection> {
    if codebook.is_empty() {
        return Err(domain("cannot select from an empty codebook"));
    }
    if codebook.grid().len() != ideal.g.len() {
        return Err(domain("ideal pattern and codebook use different grids"));
    }
    let s = scores(codebook, ideal);
    let mut best = 0;
    for (i, v) in s.iter().enumerate() {
        if *v > s[best] {
            best = i;
        }
    }
    Ok(Selection { index: best + 1, score: s[best] })
}

/// Which state the DFT baseline steers toward.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DftScheme {
    /// Mid-interval prediction `A^{Omega/2} t`.
    Midpoint,
    /// Current estimate.
    Current,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DftChoice {
    /// Column `k` of the `M`-point DFT grid, frequency `2 pi k / M` wrapped to `(-pi, pi]`.
    pub column: usize,
    pub psi: f64,
    pub u: DVector<C64>,
}

/// Quantize a spatial frequency to the nearest `M`-point DFT column.
pub fn dft_column(psi: f64, m: usize) -> DftChoice {
    let step = 2.0 * PI / m as f64;
    let k = ((psi / step).round() as i64).rem_euclid(m as i64) as usize;
    let mut q = k as f64 * step;
    if q > PI + 1e-12 {
        q -= 2.0 * PI;
    }
    let u = array_response(m, q) / C64::new((m as f64).sqrt(), 0.0);
    DftChoice { column: k, psi: q, u }
}

/// DFT-column baseline for the next interval.
pub fn dft_scheme(
    belief: &StateBelief,
    tm: &TransitionMatrices,
    omega: usize,
    m: usize,
    h: f64,
    scheme: DftScheme,
) -> Result<DftChoice> {
    let state = match scheme {
        DftScheme::Current => belief.mean,
        DftScheme::Midpoint => {
            if !omega.is_multiple_of(2) {
                return Err(domain("midpoint scheme needs an even interval length"));
            }
            let id = Matrix3::identity();
            let at = id + (tm.a - id) * (omega / 2) as f64;
            StateVector::from_vector(&(at * belief.mean.to_vector()))
        }
    };
    Ok(dft_column(spatial_frequency(state.x, state.y, h)?, m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_channel::RoadGeometry;
    use crate::codebook::{build_codebook, DesignParams, FitOptions};
    use crate::ekf::predict;
    use crate::motion::transition_matrices;

    fn model() -> MotionModel {
        MotionModel { ts_s: 0.01, steering_rad: PI / 128.0, sigma_alpha: 1.9, sigma_omega: 10f64.powf(-1.5) }
    }

    fn belief() -> StateBelief {
        StateBelief {
            mean: StateVector::new(-30.0, 8.5, 19.0),
            cov: Matrix3::new(0.5, 0.01, 0.02, 0.01, 0.1, 0.0, 0.02, 0.0, 0.3),
        }
    }

    #[test]
    fn extrapolation_matches_repeated_prediction() {
        let m = model();
        let tm = transition_matrices(&m);
        for alpha in [None, Some(0.7)] {
            let ext = extrapolate(&belief(), &m, &tm, alpha, 20);
            let mut b = belief();
            for (t, (mean, cov)) in ext.iter().enumerate() {
                b = predict(&b, &tm, alpha);
                assert!((b.mean.to_vector() - mean.to_vector()).norm() < 1e-10, "t={t}");
                assert!((b.cov - cov).norm() < 1e-10);
            }
        }
    }

    #[test]
    fn extrapolated_uncertainty_grows() {
        let m = model();
        let tm = transition_matrices(&m);
        let ext = extrapolate(&belief(), &m, &tm, None, 10);
        for w in ext.windows(2) {
            assert!(w[1].1.trace() > w[0].1.trace());
        }
    }

    #[test]
    fn direction_statistics() {
        let t = StateVector::new(0.0, 8.5, 20.0);
        let d = direction_distribution(&t, &Matrix3::zeros(), 7.5, 1).unwrap();
        assert_eq!(d.mean_psi, 0.0);
        assert_eq!(d.std_psi, 0.0);
        for x in [-40.0, 3.0, 25.0] {
            let e = 1e-6;
            let fd =
                (spatial_frequency(x + e, 8.5, 7.5).unwrap() - spatial_frequency(x - e, 8.5, 7.5).unwrap()) / (2.0 * e);
            assert!((direction_slope(x, 8.5, 7.5) - fd).abs() < 1e-6);
        }
    }

    #[test]
    fn delta_component_has_unit_mass() {
        let grid = PsiGrid::new(4096);
        let d = PredictedDirection { mean_psi: 0.4, std_psi: 0.0, t: 1 };
        let g = ideal_bp(&[d], 64, &grid).unwrap();
        assert!((grid.integrate(&g.g) - 2.0 * PI / 64.0).abs() < 1e-12);
        assert_eq!(g.g.iter().filter(|v| **v > 0.0).count(), 1);
    }

    #[test]
    fn identical_components_collapse() {
        let grid = PsiGrid::new(4096);
        let d = PredictedDirection { mean_psi: -0.2, std_psi: 0.03, t: 1 };
        let one = ideal_bp(&[d], 64, &grid).unwrap();
        let many = ideal_bp(&[d; 5], 64, &grid).unwrap();
        for (a, b) in one.g.iter().zip(&many.g) {
            assert!((a - b).abs() < 1e-12);
        }
        assert!((grid.integrate(&one.g) - 2.0 * PI / 64.0).abs() < 1e-9);
    }

    #[test]
    fn dft_quantization() {
        let m = 16;
        let c = dft_column(2.0 * PI * 3.0 / 16.0, m);
        assert_eq!(c.column, 3);
        let gain = c.u.dotc(&array_response(m, c.psi)).norm_sqr() / m as f64;
        assert!((gain - 1.0).abs() < 1e-12);
        let c = dft_column(-2.0 * PI / 16.0, m);
        assert_eq!(c.column, 15);
        assert!((c.psi + 2.0 * PI / 16.0).abs() < 1e-12);
        let c = dft_column(PI, m);
        assert!((c.psi - PI).abs() < 1e-12);
    }

    #[test]
    fn dft_schemes_coincide_without_lookahead() {
        let tm = transition_matrices(&model());
        let a = dft_scheme(&belief(), &tm, 0, 64, 7.5, DftScheme::Midpoint).unwrap();
        let b = dft_scheme(&belief(), &tm, 0, 64, 7.5, DftScheme::Current).unwrap();
        assert_eq!(a, b);
        assert!(dft_scheme(&belief(), &tm, 3, 64, 7.5, DftScheme::Midpoint).is_err());
    }

    #[test]
    fn selection_rules() {
        let road = RoadGeometry { rsu_height_m: 7.5, lane_offset_m: 8.5, range_lb_m: -75.0, range_ub_m: 75.0 };
        let mut p = DesignParams::new(16, 4, 8.5, 1);
        p.grid_len = 512;
        p.fit = FitOptions { restarts: 1, iterations: 5 };
        let cb = build_codebook(&road, &p, 8).unwrap();
        let grid = cb.grid();
        for q in 0..cb.len() {
            let ideal = IdealBpVector { g: cb.codewords[q].bp_samples.clone(), omega: 1, support: (0, grid.len() - 1) };
            let s = scores(&cb, &ideal);
            let sel = select(&cb, &ideal).unwrap();
            // the codeword matched against itself scores at least as high as any other
            assert!(s[q] >= s[sel.index - 1] * (1.0 - 1e-12));
            let scaled = IdealBpVector { g: ideal.g.iter().map(|v| v * 3.5).collect(), ..ideal.clone() };
            assert_eq!(select(&cb, &scaled).unwrap().index, sel.index);
        }
        let empty = Codebook { codewords: vec![], ..cb.clone() };
        let ideal = ideal_bp(&[PredictedDirection { mean_psi: 0.0, std_psi: 0.01, t: 1 }], 16, &grid).unwrap();
        assert!(select(&empty, &ideal).is_err());
    }
}
