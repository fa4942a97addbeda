//! Uniform spatial-frequency grid shared by codebook design and beam selection.
//!
//! The grid holds `L` samples `psi_i = -pi + (i + 1) 2 pi / L` covering
//! `(-pi, pi]`. Beam patterns are trigonometric polynomials of degree `< M`, so
//! the periodic trapezoid rule `2 pi / L * sum(samples)` integrates them exactly
//! whenever `M <= L / 2`.

use nalgebra::DVector;
use rustfft::{Fft, FftPlanner};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::C64;

/// Default number of pattern samples.
pub const DEFAULT_GRID_LEN: usize = 4096;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PsiGrid {
    len: usize,
}

impl PsiGrid {
    pub fn new(len: usize) -> Self {
        assert!(len >= 2, "grid needs at least two samples");
        Self { len }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn spacing(&self) -> f64 {
        2.0 * PI / self.len as f64
    }

    pub fn psi(&self, i: usize) -> f64 {
        -PI + (i + 1) as f64 * self.spacing()
    }

    pub fn points(&self) -> Vec<f64> {
        (0..self.len).map(|i| self.psi(i)).collect()
    }

    /// Index of the grid point nearest to `psi` (no wrap-around).
    pub fn nearest(&self, psi: f64) -> usize {
        let pos = (psi + PI) / self.spacing() - 1.0;
        pos.round().clamp(0.0, (self.len - 1) as f64) as usize
    }

    /// Periodic trapezoid integral of samples taken on this grid.
    pub fn integrate(&self, samples: &[f64]) -> f64 {
        debug_assert_eq!(samples.len(), self.len);
        samples.iter().sum::<f64>() * self.spacing()
    }

    /// Squared-error integral between two sampled functions.
    pub fn squared_error(&self, a: &[f64], b: &[f64]) -> f64 {
        a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * self.spacing()
    }
}

/// FFT-backed evaluation of `d_M(psi)^H u` on a [`PsiGrid`].
#[derive(Clone)]
pub struct PatternEngine {
    grid: PsiGrid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for PatternEngine {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("PatternEngine").field("grid", &self.grid).finish()
    }
}

impl PatternEngine {
    pub fn new(grid: PsiGrid) -> Self {
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(grid.len());
        let inverse = planner.plan_fft_inverse(grid.len());
        Self { grid, forward, inverse }
    }

    pub fn grid(&self) -> PsiGrid {
        self.grid
    }

    fn twiddle(&self, m: usize, sign: f64) -> C64 {
        // (-1)^m e^{sign j m dpsi} absorbs the grid offset psi_0 = -pi + dpsi.
        let parity = if m.is_multiple_of(2) { 1.0 } else { -1.0 };
        C64::from_polar(parity, sign * m as f64 * self.grid.spacing())
    }

    /// Complex pattern `d_M(psi_i)^H u` for every grid sample.
    pub fn field(&self, u: &DVector<C64>) -> Vec<C64> {
        assert!(u.len() <= self.grid.len(), "vector longer than grid");
        let mut buf = vec![C64::new(0.0, 0.0); self.grid.len()];
        for (m, um) in u.iter().enumerate() {
            buf[m] = *um * self.twiddle(m, -1.0);
        }
        self.forward.process(&mut buf);
        buf
    }

    /// Least-squares array weights of length `m` whose field best matches `field`.
    pub fn weights_from_field(&self, field: &[C64], m: usize) -> DVector<C64> {
        let mut buf = field.to_vec();
        self.inverse.process(&mut buf);
        let scale = 1.0 / self.grid.len() as f64;
        DVector::from_fn(m, |i, _| buf[i] * self.twiddle(i, 1.0) * scale)
    }

    /// Normalized beam pattern `|d_M(psi)^H u|^2 / M` on the grid.
    pub fn beam_pattern(&self, u: &DVector<C64>) -> Vec<f64> {
        let m = u.len() as f64;
        self.field(u).into_iter().map(|c| c.norm_sqr() / m).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::array_channel::array_response;

    #[test]
    fn grid_covers_half_open_interval() {
        let g = PsiGrid::new(8);
        assert!((g.psi(7) - PI).abs() < 1e-15);
        assert!(g.psi(0) > -PI);
        assert_eq!(g.nearest(PI), 7);
        assert_eq!(g.nearest(g.psi(3) + 0.1 * g.spacing()), 3);
    }

    #[test]
    fn fft_field_matches_direct_sum() {
        let grid = PsiGrid::new(64);
        let eng = PatternEngine::new(grid);
        let u = DVector::from_fn(5, |i, _| C64::new(0.3 * i as f64 - 0.2, 0.1 + (i as f64).sin()));
        let field = eng.field(&u);
        for (i, f) in field.iter().enumerate() {
            let d = array_response(5, grid.psi(i));
            let direct = d.dotc(&u);
            assert!((direct - f).norm() < 1e-12);
        }
        let back = eng.weights_from_field(&field, 5);
        assert!((back - u).norm() < 1e-12);
    }

    #[test]
    fn parseval_on_grid() {
        let grid = PsiGrid::new(DEFAULT_GRID_LEN);
        let eng = PatternEngine::new(grid);
        let mut u = DVector::from_fn(64, |i, _| C64::from_polar(1.0, 0.37 * (i * i) as f64));
        u /= C64::new(u.norm(), 0.0);
        let bp = eng.beam_pattern(&u);
        let total = grid.integrate(&bp);
        assert!((total - 2.0 * PI / 64.0).abs() < 1e-12);
        assert!(bp.iter().all(|&g| g <= 1.0 + 1e-12));
    }
}
