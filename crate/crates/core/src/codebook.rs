//! Road-aware downlink codebooks.
//!
//! The road is split into geographic sub-ranges whose images in the spatial
//! frequency domain become beam-regions. Each region gets a target pattern
//! proportional to the density of the beam direction of a vehicle uniformly
//! placed in its sub-range, and a hybrid-constrained codeword is fitted to it.

use nalgebra::DVector;
use rand::Rng;
use rayon::prelude::*;
use serde_json::{json, Map, Value};
use std::f64::consts::PI;
use std::path::Path;

use crate::array_channel::RoadGeometry;
use crate::error::{domain, validation, Error, Result};
use crate::grid::{PatternEngine, PsiGrid, DEFAULT_GRID_LEN};
use crate::rng::{substream, Purpose};
use crate::sounding::{hybrid_approximation, SteeringDictionary, DEFAULT_OVERSAMPLING};
use crate::C64;

/// Relative tolerance of the Parseval check on codeword patterns.
pub const PARSEVAL_TOLERANCE: f64 = 1e-3;

/// Road position to spatial frequency at lateral distance `k`.
pub fn to_frequency(x: f64, k: f64) -> f64 {
    PI * x / (x * x + k * k).sqrt()
}

/// Spatial frequency back to road position at lateral distance `k`.
pub fn to_position(psi: f64, k: f64) -> f64 {
    k * psi / (PI * PI - psi * psi).sqrt()
}

fn lateral(geom: &RoadGeometry, y: f64) -> f64 {
    y.hypot(geom.rsu_height_m)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BeamRegion {
    pub nu_lb: f64,
    pub nu_ub: f64,
    pub rho_lb: f64,
    pub rho_ub: f64,
}

impl BeamRegion {
    pub fn width(&self) -> f64 {
        self.nu_ub - self.nu_lb
    }

    pub fn contains(&self, psi: f64) -> bool {
        psi >= self.nu_lb && psi < self.nu_ub
    }
}

/// Result of the region division.
#[derive(Debug, Clone, PartialEq)]
pub struct Division {
    /// Regions ordered left to right.
    pub regions: Vec<BeamRegion>,
    /// Minimum region width of the final round.
    pub nu_tilde: f64,
    /// Geographic candidate length of the final round.
    pub rho_tilde: f64,
    /// Division count of the final round (may be fractional after bisection).
    pub divisor: f64,
}

/// Positive-half regions `[lo, hi)` in frequency for a given division count.
fn positive_half(nu_ub: f64, rho_ub: f64, k: f64, divisor: f64) -> Vec<(f64, f64)> {
    let nu_t = 2.0 * nu_ub / divisor;
    let rho_t = 2.0 * rho_ub / divisor;
    let mut out = Vec::new();
    let mut lo = 0.0;
    loop {
        let rho_prev = to_position(lo, k);
        let converted = to_frequency(rho_prev + rho_t, k) - lo;
        let hi = lo + converted.max(nu_t);
        // A remainder narrower than the minimum width is absorbed.
        if nu_ub - hi < nu_t * (1.0 - 1e-12) {
            out.push((lo, nu_ub));
            return out;
        }
        out.push((lo, hi));
        lo = hi;
    }
}

/// Split a symmetric road into `q` beam-regions.
///
/// Starting from `Q' = q`, both domains are divided by `Q'`; the positive half
/// is built outward from zero with width `max(nu~, converted width)` and then
/// mirrored. `Q'` grows by two until exactly `q` regions result. If a step of
/// two jumps past `q`, the count is refined by bisection on a real divisor.
pub fn divide_regions(geom: &RoadGeometry, y: f64, q: usize) -> Result<Division> {
    geom.validate()?;
    if q < 2 || !q.is_multiple_of(2) {
        return Err(domain(format!("codeword count must be even and at least 2, got {q}")));
    }
    if (geom.range_lb_m + geom.range_ub_m).abs() > 1e-9 * geom.range_ub_m.abs().max(1.0) {
        return Err(domain("region division needs a road symmetric about the RSU"));
    }
    let k = lateral(geom, y);
    let rho_ub = geom.range_ub_m;
    let nu_ub = to_frequency(rho_ub, k);
    if !(nu_ub > 0.0) {
        return Err(domain("road range maps to an empty frequency interval"));
    }
    let half = q / 2;
    let count = |d: f64| positive_half(nu_ub, rho_ub, k, d).len();

    let mut d = q as f64;
    let mut prev = d;
    let limit = 1000.0 * q as f64;
    let divisor = loop {
        let c = count(d);
        if c == half {
            break d;
        }
        if c > half {
            // Bisection between the last short division and this one.
            let (mut a, mut b) = (prev, d);
            let mut found = None;
            for _ in 0..200 {
                let mid = 0.5 * (a + b);
                match count(mid).cmp(&half) {
                    std::cmp::Ordering::Equal => {
                        found = Some(mid);
                        break;
                    }
                    std::cmp::Ordering::Less => a = mid,
                    std::cmp::Ordering::Greater => b = mid,
                }
            }
            break found.ok_or_else(|| Error::Numerical(format!("no division yields exactly {q} regions")))?;
        }
        prev = d;
        d += 2.0;
        if d > limit {
            return Err(Error::Numerical(format!("no division yields exactly {q} regions")));
        }
    };

    let pos = positive_half(nu_ub, rho_ub, k, divisor);
    let region =
        |lo: f64, hi: f64| BeamRegion { nu_lb: lo, nu_ub: hi, rho_lb: to_position(lo, k), rho_ub: to_position(hi, k) };
    let mut regions: Vec<BeamRegion> = pos.iter().rev().map(|&(lo, hi)| region(-hi, -lo)).collect();
    regions.extend(pos.iter().map(|&(lo, hi)| region(lo, hi)));
    if let Some(first) = regions.first_mut() {
        first.rho_lb = geom.range_lb_m;
    }
    if let Some(last) = regions.last_mut() {
        last.rho_ub = geom.range_ub_m;
    }
    Ok(Division { regions, nu_tilde: 2.0 * nu_ub / divisor, rho_tilde: 2.0 * rho_ub / divisor, divisor })
}

/// Position beyond which equally divided sub-ranges map to beam-regions
/// narrower than the equal frequency split: `sqrt(|rho| (|rho| + k Q)) / 2`.
pub fn narrowing_threshold(geom: &RoadGeometry, y: f64, q: usize) -> f64 {
    let len = geom.range_ub_m - geom.range_lb_m;
    let k = lateral(geom, y);
    (len * (len + k * q as f64)).sqrt() / 2.0
}

/// Ratio `nu~ / |D[lb, ub)|` of the equal frequency width to the exact
/// converted width of the sub-range `[lb, ub)`.
pub fn equal_division_ratio(geom: &RoadGeometry, y: f64, q: usize, lb: f64, ub: f64) -> f64 {
    let k = lateral(geom, y);
    let nu_span = to_frequency(geom.range_ub_m, k) - to_frequency(geom.range_lb_m, k);
    let nu_tilde = nu_span / q as f64;
    nu_tilde / (to_frequency(ub, k) - to_frequency(lb, k)).abs()
}

/// Target pattern of one region sampled on the grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BpTarget {
    pub samples: Vec<f64>,
    /// The target exceeds unit gain somewhere (no unit-norm beam can reach it).
    pub oversampled: bool,
}

/// Target pattern `(2 pi / M) f_nu(psi)` for a region.
///
/// Each sample is the average of the density over its grid cell, computed
/// from the closed-form antiderivative `x(psi)`, so the trapezoid mass equals
/// `2 pi / M` up to rounding.
pub fn position_pdf_to_bp(region: &BeamRegion, y: f64, h: f64, m: usize, grid: &PsiGrid) -> Result<BpTarget> {
    if !(region.nu_lb < region.nu_ub) {
        return Err(domain("empty beam-region"));
    }
    if !(region.nu_lb > -PI && region.nu_ub < PI) {
        return Err(domain("beam-region must lie inside (-pi, pi)"));
    }
    let k = y.hypot(h);
    let span = to_position(region.nu_ub, k) - to_position(region.nu_lb, k);
    let dpsi = grid.spacing();
    let chi = 2.0 * PI / m as f64;
    let mut samples = vec![0.0; grid.len()];
    let first = grid.nearest(region.nu_lb).saturating_sub(1);
    let last = (grid.nearest(region.nu_ub) + 1).min(grid.len() - 1);
    for (i, s) in samples.iter_mut().enumerate().take(last + 1).skip(first) {
        let c = grid.psi(i);
        let a = (c - dpsi / 2.0).max(region.nu_lb);
        let b = (c + dpsi / 2.0).min(region.nu_ub);
        if b > a {
            *s = chi * (to_position(b, k) - to_position(a, k)) / span / dpsi;
        }
    }
    let oversampled = samples.iter().any(|&v| v > 1.0);
    Ok(BpTarget { samples, oversampled })
}

/// Knobs of the alternating-projection codeword fitter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FitOptions {
    pub restarts: usize,
    pub iterations: usize,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { restarts: 8, iterations: 50 }
    }
}

#[derive(Debug, Clone)]
pub struct FittedCodeword {
    pub u: DVector<C64>,
    pub mse: f64,
}

/// Fit a hybrid codeword to a target pattern.
///
/// Candidates: every single dictionary atom, then alternating projections
/// (target magnitude on the grid / least-squares array weights / hybrid OMP
/// with `n` atoms) started from the best atom and from `restarts` random phase
/// profiles. The candidate with the smallest squared-error integral wins.
pub fn fit_codeword<R: Rng + ?Sized>(
    target: &[f64],
    m: usize,
    n: usize,
    dict: &SteeringDictionary,
    engine: &PatternEngine,
    opts: &FitOptions,
    rng: &mut R,
) -> Result<FittedCodeword> {
    let grid = engine.grid();
    if target.len() != grid.len() {
        return Err(domain("target length does not match the grid"));
    }
    if dict.antennas() != m {
        return Err(domain("dictionary size does not match the array"));
    }
    let mse_of = |u: &DVector<C64>| -> (f64, Vec<C64>) {
        let f = engine.field(u);
        let err =
            f.iter().zip(target).map(|(c, g)| (c.norm_sqr() / m as f64 - g).powi(2)).sum::<f64>() * grid.spacing();
        (err, f)
    };

    let mut best: Option<FittedCodeword> = None;
    let consider = |u: DVector<C64>, mse: f64, best: &mut Option<FittedCodeword>| {
        if best.as_ref().is_none_or(|b| mse < b.mse) {
            *best = Some(FittedCodeword { u, mse });
        }
    };

    let mut best_atom: Option<(f64, Vec<C64>)> = None;
    for a in 0..dict.len() {
        let atom = dict.atom(a);
        let (mse, f) = mse_of(&atom);
        if best_atom.as_ref().is_none_or(|b| mse < b.0) {
            best_atom = Some((mse, f));
        }
        consider(atom, mse, &mut best);
    }

    let magnitude: Vec<f64> = target.iter().map(|g| (m as f64 * g.max(0.0)).sqrt()).collect();
    let mut starts: Vec<Vec<C64>> = Vec::with_capacity(opts.restarts + 1);
    if let Some((_, f)) = best_atom {
        starts.push(f.iter().map(|c| if c.norm() > 0.0 { c / c.norm() } else { C64::new(1.0, 0.0) }).collect());
    }
    for _ in 0..opts.restarts {
        starts.push((0..grid.len()).map(|_| C64::from_polar(1.0, rng.random::<f64>() * 2.0 * PI)).collect());
    }

    for phases in starts {
        let mut field: Vec<C64> = phases.iter().zip(&magnitude).map(|(p, a)| p * *a).collect();
        for _ in 0..opts.iterations {
            let w = engine.weights_from_field(&field, m);
            if !(w.norm() > 0.0) {
                break;
            }
            let u = hybrid_approximation(&w, dict, n)?.weights;
            let (mse, f) = mse_of(&u);
            consider(u, mse, &mut best);
            for ((slot, c), a) in field.iter_mut().zip(&f).zip(&magnitude) {
                let nrm = c.norm();
                *slot = if nrm > 0.0 { c * (*a / nrm) } else { C64::new(*a, 0.0) };
            }
        }
    }
    best.ok_or_else(|| Error::Numerical("codeword fit produced no candidate".into()))
}

#[derive(Debug, Clone)]
pub struct Codeword {
    pub u: DVector<C64>,
    pub region: BeamRegion,
    /// Normalized pattern `|d^H u|^2 / M` on the codebook grid.
    pub bp_samples: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Codebook {
    pub m: usize,
    pub n: usize,
    pub y_design: f64,
    pub h: f64,
    /// Codeword count of each concatenated resolution.
    pub resolutions: Vec<usize>,
    pub codewords: Vec<Codeword>,
    pub(crate) grid: PsiGrid,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DesignParams {
    pub antennas: usize,
    pub rf_chains: usize,
    pub lane_offset: f64,
    pub seed: u64,
    pub oversampling: usize,
    pub grid_len: usize,
    pub fit: FitOptions,
}

impl DesignParams {
    pub fn new(antennas: usize, rf_chains: usize, lane_offset: f64, seed: u64) -> Self {
        Self {
            antennas,
            rf_chains,
            lane_offset,
            seed,
            oversampling: DEFAULT_OVERSAMPLING,
            grid_len: DEFAULT_GRID_LEN,
            fit: FitOptions::default(),
        }
    }
}

/// Single-resolution design with `q` codewords.
pub fn build_codebook(geom: &RoadGeometry, params: &DesignParams, q: usize) -> Result<Codebook> {
    build_multiresolution(geom, params, &[q])
}

/// Concatenation of independent designs, one per entry of `qs`.
pub fn build_multiresolution(geom: &RoadGeometry, params: &DesignParams, qs: &[usize]) -> Result<Codebook> {
    let m = params.antennas;
    if m == 0 || params.rf_chains == 0 || params.rf_chains > m {
        return Err(validation("need 1 <= rf_chains <= antennas"));
    }
    if qs.is_empty() {
        return Err(validation("at least one codeword count is required"));
    }
    if params.grid_len < 2 * m {
        return Err(validation("pattern grid must have at least 2M samples"));
    }
    let grid = PsiGrid::new(params.grid_len);
    let engine = PatternEngine::new(grid);
    let dict = SteeringDictionary::new(m, params.oversampling.max(1));
    let mut jobs = Vec::new();
    for (res, &q) in qs.iter().enumerate() {
        let div = divide_regions(geom, params.lane_offset, q)?;
        for (i, r) in div.regions.into_iter().enumerate() {
            jobs.push((res, i, r));
        }
    }
    let codewords = jobs
        .par_iter()
        .map(|&(res, i, region)| {
            let target = position_pdf_to_bp(&region, params.lane_offset, geom.rsu_height_m, m, &grid)?;
            let mut rng = substream(params.seed, ((res as u64) << 32) | i as u64, Purpose::Design);
            let fit = fit_codeword(&target.samples, m, params.rf_chains, &dict, &engine, &params.fit, &mut rng)?;
            let bp_samples = engine.beam_pattern(&fit.u);
            Ok(Codeword { u: fit.u, region, bp_samples })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Codebook {
        m,
        n: params.rf_chains,
        y_design: params.lane_offset,
        h: geom.rsu_height_m,
        resolutions: qs.to_vec(),
        codewords,
        grid,
    })
}

/// Integral and peak of one codeword pattern.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatternCheck {
    pub integral: f64,
    pub peak: f64,
    pub ok: bool,
}

impl Codebook {
    pub fn len(&self) -> usize {
        self.codewords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.codewords.is_empty()
    }

    pub fn grid(&self) -> PsiGrid {
        self.grid
    }

    /// Parseval and unit-gain check of every codeword.
    pub fn check_patterns(&self) -> Vec<PatternCheck> {
        let want = 2.0 * PI / self.m as f64;
        self.codewords
            .iter()
            .map(|c| {
                let integral = self.grid.integrate(&c.bp_samples);
                let peak = c.bp_samples.iter().copied().fold(0.0, f64::max);
                let ok = ((integral - want) / want).abs() <= PARSEVAL_TOLERANCE && peak <= 1.0 + 1e-6;
                PatternCheck { integral, peak, ok }
            })
            .collect()
    }

    pub fn to_json(&self) -> Value {
        let s = |v: f64| Value::String(format!("{v:?}"));
        let regions: Vec<Value> = self
            .codewords
            .iter()
            .map(|c| {
                json!({
                    "nu_lb": s(c.region.nu_lb),
                    "nu_ub": s(c.region.nu_ub),
                    "rho_lb": s(c.region.rho_lb),
                    "rho_ub": s(c.region.rho_ub),
                })
            })
            .collect();
        let words: Vec<Value> = self
            .codewords
            .iter()
            .map(|c| Value::Array(c.u.iter().map(|z| Value::Array(vec![s(z.re), s(z.im)])).collect()))
            .collect();
        let mut obj = Map::new();
        obj.insert("M".into(), json!(self.m));
        obj.insert("N".into(), json!(self.n));
        obj.insert("Q".into(), json!(self.len()));
        obj.insert("y_design".into(), s(self.y_design));
        obj.insert("h".into(), s(self.h));
        obj.insert("resolutions".into(), json!(self.resolutions));
        obj.insert("regions".into(), Value::Array(regions));
        obj.insert("codewords".into(), Value::Array(words));
        Value::Object(obj)
    }

    pub fn to_json_string(&self) -> String {
        let mut out = self.to_json().to_string();
        out.push('\n');
        out
    }

    pub fn from_json_str(text: &str) -> Result<Self> {
        let v: Value = serde_json::from_str(text)?;
        Self::from_json(&v)
    }

    pub fn from_json(v: &Value) -> Result<Self> {
        let bad = |what: &str| validation(format!("codebook file: {what}"));
        let int = |key: &str| {
            v.get(key)
                .and_then(Value::as_u64)
                .map(|x| x as usize)
                .ok_or_else(|| bad(&format!("missing integer '{key}'")))
        };
        let num = |x: &Value| -> Result<f64> {
            match x {
                Value::String(s) => s.parse::<f64>().map_err(|_| bad(&format!("bad number '{s}'"))),
                Value::Number(n) => n.as_f64().ok_or_else(|| bad("bad number")),
                _ => Err(bad("expected a number")),
            }
        };
        let m = int("M")?;
        let n = int("N")?;
        let q = int("Q")?;
        let y_design = num(v.get("y_design").ok_or_else(|| bad("missing 'y_design'"))?)?;
        let h = num(v.get("h").ok_or_else(|| bad("missing 'h'"))?)?;
        let regions = v.get("regions").and_then(Value::as_array).ok_or_else(|| bad("missing 'regions'"))?;
        let words = v.get("codewords").and_then(Value::as_array).ok_or_else(|| bad("missing 'codewords'"))?;
        if m == 0 || regions.len() != q || words.len() != q {
            return Err(bad("Q does not match the number of regions and codewords"));
        }
        let resolutions = match v.get("resolutions") {
            Some(Value::Array(a)) => a
                .iter()
                .map(|x| x.as_u64().map(|x| x as usize).ok_or_else(|| bad("bad resolution")))
                .collect::<Result<Vec<_>>>()?,
            _ => vec![q],
        };
        if resolutions.iter().sum::<usize>() != q {
            return Err(bad("resolutions do not add up to Q"));
        }
        let grid = PsiGrid::new(DEFAULT_GRID_LEN.max(2 * m));
        let engine = PatternEngine::new(grid);
        let mut codewords = Vec::with_capacity(q);
        for (r, w) in regions.iter().zip(words) {
            let field = |key: &str| num(r.get(key).ok_or_else(|| bad(&format!("region missing '{key}'")))?);
            let region = BeamRegion {
                nu_lb: field("nu_lb")?,
                nu_ub: field("nu_ub")?,
                rho_lb: field("rho_lb")?,
                rho_ub: field("rho_ub")?,
            };
            let entries = w.as_array().ok_or_else(|| bad("codeword is not an array"))?;
            if entries.len() != m {
                return Err(bad("codeword length differs from M"));
            }
            let u = entries
                .iter()
                .map(|e| {
                    let pair =
                        e.as_array().filter(|p| p.len() == 2).ok_or_else(|| bad("entry is not a [re, im] pair"))?;
                    Ok(C64::new(num(&pair[0])?, num(&pair[1])?))
                })
                .collect::<Result<Vec<_>>>()?;
            let u = DVector::from_vec(u);
            if (u.norm() - 1.0).abs() > 1e-9 {
                return Err(bad("codeword is not unit norm"));
            }
            let bp_samples = engine.beam_pattern(&u);
            codewords.push(Codeword { u, region, bp_samples });
        }
        Ok(Self { m, n, y_design, h, resolutions, codewords, grid })
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }
}
