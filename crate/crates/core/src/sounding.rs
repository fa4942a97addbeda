//! Uplink combiner design and sounding synthesis.
//!
//! A combiner is stored as the column vector `w`; the RSU forms the sounding
//! sample `r = w^H h + n`, i.e. the row combiner is `z = w^H`.

use nalgebra::{DMatrix, DVector, Matrix3, Vector2};
use rand::Rng;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::f64::consts::PI;
use std::sync::Arc;

use crate::array_channel::{array_response, channel_vector, complex_normal, spatial_frequency, ChannelRealization};
use crate::error::{domain, Result};
use crate::motion::StateVector;
use crate::C64;

/// Power-iteration limits for the generalized eigenproblem.
pub const POWER_ITERATIONS: usize = 200;
pub const POWER_TOLERANCE: f64 = 1e-10;

/// Default dictionary oversampling.
pub const DEFAULT_OVERSAMPLING: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CombinerKind {
    Optimal,
    Hybrid,
    DftManifold,
}

#[derive(Debug, Clone)]
pub struct Combiner {
    /// Unit-norm weights `w`; the sounding sample is `w^H h`.
    pub weights: DVector<C64>,
    pub kind: CombinerKind,
    /// Set when the eigen-solve degenerated and the manifold direction was used.
    pub fallback: bool,
    /// `|w_target^H w|` for hybrid reconstructions.
    pub correlation: Option<f64>,
    /// Analog steering columns `F` (hybrid only).
    pub analog: Option<DMatrix<C64>>,
    /// Digital weights `v` with `w = F v` (hybrid only).
    pub digital: Option<DVector<C64>>,
}

impl Combiner {
    fn plain(weights: DVector<C64>, kind: CombinerKind) -> Self {
        Self { weights, kind, fallback: false, correlation: None, analog: None, digital: None }
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Combined sample `w^H h`.
    pub fn combine(&self, h: &DVector<C64>) -> C64 {
        self.weights.dotc(h)
    }

    /// Real-domain combining matrix `[[z_re, -z_im], [z_im, z_re]]` of the row `z = w^H`.
    pub fn lifted(&self) -> DMatrix<f64> {
        let m = self.weights.len();
        let mut out = DMatrix::zeros(2, 2 * m);
        for (i, w) in self.weights.iter().enumerate() {
            let (zr, zi) = (w.re, -w.im);
            out[(0, i)] = zr;
            out[(0, m + i)] = -zi;
            out[(1, i)] = zi;
            out[(1, m + i)] = zr;
        }
        out
    }

    /// Apply a global phase `e^{j phi}` to the weights.
    pub fn rotated(&self, phi: f64) -> Self {
        let rot = C64::from_polar(1.0, phi);
        let mut out = self.clone();
        out.weights *= rot;
        if let Some(v) = out.digital.as_mut() {
            *v *= rot;
        }
        out
    }
}

/// Stack the real and imaginary parts of a complex vector.
pub fn lift(h: &DVector<C64>) -> DVector<f64> {
    let m = h.len();
    DVector::from_fn(2 * m, |i, _| if i < m { h[i].re } else { h[i - m].im })
}

/// Sounding sample and combiner in the real domain.
#[derive(Debug, Clone, PartialEq)]
pub struct RealSounding {
    pub r: Vector2<f64>,
    /// `2 x 2M` lifted combiner.
    pub z: DMatrix<f64>,
    /// Per-component noise variance `1 / (2 rho)`.
    pub noise_var: f64,
}

/// Oversampled steering dictionary with atoms `d_M(psi_k) / sqrt(M)` on
/// `psi_k = -pi + 2 pi k / (O M)`.
#[derive(Clone)]
pub struct SteeringDictionary {
    m: usize,
    oversampling: usize,
    psis: Vec<f64>,
    fft: Arc<dyn Fft<f64>>,
}

impl std::fmt::Debug for SteeringDictionary {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SteeringDictionary").field("m", &self.m).field("oversampling", &self.oversampling).finish()
    }
}

impl SteeringDictionary {
    pub fn new(m: usize, oversampling: usize) -> Self {
        assert!(m >= 1 && oversampling >= 1);
        let k = m * oversampling;
        let psis = (0..k).map(|i| -PI + 2.0 * PI * i as f64 / k as f64).collect();
        let fft = FftPlanner::new().plan_fft_forward(k);
        Self { m, oversampling, psis, fft }
    }

    pub fn antennas(&self) -> usize {
        self.m
    }

    pub fn oversampling(&self) -> usize {
        self.oversampling
    }

    pub fn len(&self) -> usize {
        self.psis.len()
    }

    pub fn is_empty(&self) -> bool {
        self.psis.is_empty()
    }

    pub fn psi(&self, k: usize) -> f64 {
        self.psis[k]
    }

    pub fn atom(&self, k: usize) -> DVector<C64> {
        array_response(self.m, self.psis[k]) / C64::new((self.m as f64).sqrt(), 0.0)
    }

    /// Full `M x (O M)` atom matrix.
    pub fn atoms(&self) -> DMatrix<C64> {
        let mut out = DMatrix::zeros(self.m, self.len());
        for k in 0..self.len() {
            out.set_column(k, &self.atom(k));
        }
        out
    }

    /// Inner products `a_k^H r` for every atom.
    pub fn correlations(&self, r: &DVector<C64>) -> Vec<C64> {
        let mut buf = vec![C64::new(0.0, 0.0); self.len()];
        for (i, v) in r.iter().enumerate() {
            // e^{-j i psi_k} = (-1)^i e^{-j 2 pi i k / K}
            buf[i] = if i % 2 == 0 { *v } else { -*v };
        }
        self.fft.process(&mut buf);
        let s = 1.0 / (self.m as f64).sqrt();
        buf.iter_mut().for_each(|c| *c *= s);
        buf
    }
}

/// Matrices `(D Q^2 D^H, D Q D^H + I / rho)` of the sounding quotient.
fn quotient_matrices(d: &DMatrix<C64>, q: &Matrix3<f64>, rho: f64) -> (DMatrix<C64>, DMatrix<C64>) {
    let qc = DMatrix::from_column_slice(3, 3, q.map(|v| C64::new(v, 0.0)).as_slice());
    let dq = d * &qc;
    let num = &dq * &qc * d.adjoint();
    let mut den = dq * d.adjoint();
    for i in 0..den.nrows() {
        den[(i, i)] += C64::new(1.0 / rho, 0.0);
    }
    (num, den)
}

/// The sounding objective `w^H D Q^2 D^H w / w^H (D Q D^H + I / rho) w`.
pub fn rayleigh_quotient(w: &DVector<C64>, d: &DMatrix<C64>, q: &Matrix3<f64>, rho: f64) -> f64 {
    let q2 = q * q;
    let dw = d.adjoint() * w;
    let qc = |m: &Matrix3<f64>| DMatrix::from_column_slice(3, 3, m.map(|v| C64::new(v, 0.0)).as_slice());
    let num = dw.dotc(&(qc(&q2) * &dw)).re;
    let den = dw.dotc(&(qc(q) * &dw)).re + w.norm_squared() / rho;
    num / den
}

/// Real-domain trace objective `Tr{L^-1 Z D Q^2 D^T Z^T}` with `L = Z D Q D^T Z^T + I / (2 rho)`.
pub fn real_trace_objective(z_lifted: &DMatrix<f64>, d_lifted: &DMatrix<f64>, q: &Matrix3<f64>, rho: f64) -> f64 {
    let h = z_lifted * d_lifted;
    let qd = DMatrix::from_column_slice(3, 3, q.as_slice());
    let q2 = &qd * &qd;
    let mut lam = &h * &qd * h.transpose();
    lam[(0, 0)] += 1.0 / (2.0 * rho);
    lam[(1, 1)] += 1.0 / (2.0 * rho);
    let Some(inv) = lam.try_inverse() else { return 0.0 };
    (inv * &h * q2 * h.transpose()).trace()
}

/// Principal eigenvector of `den^-1 num` by power iteration, or `None` when the
/// problem is degenerate.
fn principal_direction(num: &DMatrix<C64>, den: &DMatrix<C64>) -> Option<DVector<C64>> {
    let scale = num.iter().map(|c| c.norm()).fold(0.0, f64::max);
    if !(scale > 1e-300) || !scale.is_finite() {
        return None;
    }
    let inv = den.clone().try_inverse()?;
    let op = inv * num;
    let start = (0..op.ncols()).max_by(|&a, &b| op.column(a).norm().total_cmp(&op.column(b).norm()))?;
    let mut v: DVector<C64> = op.column(start).into_owned();
    let n = v.norm();
    if !(n > 0.0) || !n.is_finite() {
        return None;
    }
    v /= C64::new(n, 0.0);
    for _ in 0..POWER_ITERATIONS {
        let mut next = &op * &v;
        let n = next.norm();
        if !(n > 0.0) || !n.is_finite() {
            return None;
        }
        next /= C64::new(n, 0.0);
        // Remove the arbitrary phase before measuring progress.
        let align = next.dotc(&v);
        if align.norm() > 0.0 {
            next *= align / align.norm();
        }
        let delta = (&next - &v).norm();
        v = next;
        if delta < POWER_TOLERANCE {
            break;
        }
    }
    Some(v)
}

fn fallback_combiner(m: usize, fallback_psi: f64) -> Combiner {
    let mut c =
        Combiner::plain(array_response(m, fallback_psi) / C64::new((m as f64).sqrt(), 0.0), CombinerKind::Optimal);
    c.fallback = true;
    c
}

/// Sounding combiner maximizing [`rayleigh_quotient`].
///
/// `D` has at most three columns, so the non-trivial eigenvectors of
/// `(D Q D^H + I/rho)^-1 D Q^2 D^H` lie in its column space. The problem is
/// reduced with a thin QR factorization `D = U R` and solved in at most three
/// dimensions. On a degenerate problem (`D Q^2 D^H = 0`) the manifold
/// direction `d_M(fallback_psi) / sqrt(M)` is returned with `fallback` set.
pub fn optimal_combiner(d: &DMatrix<C64>, q_pred: &Matrix3<f64>, rho: f64, fallback_psi: f64) -> Combiner {
    let m = d.nrows();
    let qr = d.clone().qr();
    let u = qr.q();
    let r = qr.r();
    let (num, den) = quotient_matrices(&r, q_pred, rho);
    match principal_direction(&num, &den) {
        Some(c) => {
            let mut w = u * c;
            let n = w.norm();
            if !(n > 0.0) || !n.is_finite() {
                return fallback_combiner(m, fallback_psi);
            }
            w /= C64::new(n, 0.0);
            Combiner::plain(w, CombinerKind::Optimal)
        }
        None => fallback_combiner(m, fallback_psi),
    }
}

/// Dense `M x M` route to the same combiner: explicit inverse plus power iteration.
pub fn optimal_combiner_dense(d: &DMatrix<C64>, q_pred: &Matrix3<f64>, rho: f64, fallback_psi: f64) -> Combiner {
    let m = d.nrows();
    let (num, den) = quotient_matrices(d, q_pred, rho);
    match principal_direction(&num, &den) {
        Some(w) => Combiner::plain(w, CombinerKind::Optimal),
        None => fallback_combiner(m, fallback_psi),
    }
}

/// Greedy orthogonal matching pursuit of `target` with `n` dictionary atoms.
///
/// Digital weights are the least-squares fit on the chosen atoms; the result
/// is renormalized to unit norm.
pub fn hybrid_approximation(target: &DVector<C64>, dict: &SteeringDictionary, n: usize) -> Result<Combiner> {
    let m = dict.antennas();
    if target.len() != m {
        return Err(domain("target length does not match the dictionary"));
    }
    if n == 0 || n > m {
        return Err(domain(format!("need 1 <= N <= M, got N={n}, M={m}")));
    }
    let tnorm = target.norm();
    if !(tnorm > 0.0) {
        return Err(domain("cannot approximate a zero target"));
    }
    let mut chosen: Vec<usize> = Vec::with_capacity(n);
    let mut residual = target.clone();
    let mut analog = DMatrix::<C64>::zeros(m, 0);
    let mut digital = DVector::<C64>::zeros(0);
    for _ in 0..n {
        let corr = dict.correlations(&residual);
        let best = corr
            .iter()
            .enumerate()
            .filter(|(k, _)| !chosen.contains(k))
            .max_by(|a, b| a.1.norm_sqr().total_cmp(&b.1.norm_sqr()))
            .map(|(k, _)| k);
        let Some(best) = best else { break };
        chosen.push(best);
        analog = DMatrix::from_fn(m, chosen.len(), |i, j| {
            C64::from_polar(1.0 / (m as f64).sqrt(), i as f64 * dict.psi(chosen[j]))
        });
        let qr = analog.clone().qr();
        let rhs = qr.q().adjoint() * target;
        digital = qr.r().solve_upper_triangular(&rhs).ok_or_else(|| domain("singular atom set in matching pursuit"))?;
        residual = target - &analog * &digital;
        if residual.norm() <= 1e-13 * tnorm {
            break;
        }
    }
    let mut w = &analog * &digital;
    let norm = w.norm();
    if !(norm > 0.0) {
        return Err(domain("matching pursuit produced a zero vector"));
    }
    w /= C64::new(norm, 0.0);
    digital /= C64::new(norm, 0.0);
    let correlation = target.dotc(&w).norm() / tnorm;
    Ok(Combiner {
        weights: w,
        kind: CombinerKind::Hybrid,
        fallback: false,
        correlation: Some(correlation),
        analog: Some(analog),
        digital: Some(digital),
    })
}

/// Manifold baseline: `d_M(g(t)) / sqrt(M)` at the predicted state.
pub fn dft_manifold_combiner(t_pred: &StateVector, h: f64, m: usize) -> Result<Combiner> {
    let psi = spatial_frequency(t_pred.x, t_pred.y, h)?;
    let w = array_response(m, psi) / C64::new((m as f64).sqrt(), 0.0);
    Ok(Combiner::plain(w, CombinerKind::DftManifold))
}

/// Synthesize one uplink sounding sample `r = w^H h + n`, `n ~ CN(0, 1/rho)`.
pub fn sound_uplink<R: Rng + ?Sized>(
    rng: &mut R,
    comb: &Combiner,
    chan: &ChannelRealization,
    m: usize,
) -> RealSounding {
    let h = channel_vector(chan.beta, chan.psi, m);
    let r = comb.combine(&h) + complex_normal(rng, 1.0 / chan.rho);
    RealSounding { r: Vector2::new(r.re, r.im), z: comb.lifted(), noise_var: 1.0 / (2.0 * chan.rho) }
}
