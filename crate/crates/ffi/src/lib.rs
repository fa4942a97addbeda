//! C ABI over `v2i-core`.
//!
//! Objects cross the boundary as opaque handles that the caller frees with the
//! matching `*_free` function. Every fallible call returns a [`V2iStatus`]; on
//! failure the message is kept per thread and can be copied out with
//! [`v2i_last_error_message`]. Panics are caught and reported as
//! [`V2iStatus::Panic`].

#![allow(clippy::neg_cmp_op_on_partial_ord)]

use std::cell::RefCell;
use std::ffi::{c_char, CStr};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;

use v2i_core::array_channel::{spatial_frequency, ChannelRealization, RoadGeometry};
use v2i_core::codebook::{build_multiresolution, Codebook, DesignParams};
use v2i_core::ekf::{init_belief, SoundingMode, Tracker, TrackerConfig};
use v2i_core::harness::{run_experiment, RunOptions, Scenario};
use v2i_core::motion::{MotionModel, StateVector};
use v2i_core::rng::{substream, Purpose, StreamRng};
use v2i_core::selector::{direction_distribution, extrapolate, ideal_bp, select};
use v2i_core::{Error, C64};

/// Status code of every fallible call.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2iStatus {
    Ok = 0,
    /// A required pointer argument was null.
    Null = 1,
    /// An argument or configuration was out of range.
    Domain = 2,
    Numerical = 3,
    Io = 4,
    /// Malformed JSON or a non-UTF-8 string.
    Parse = 5,
    Panic = 6,
}

/// Opaque codebook handle.
pub struct V2iCodebook {
    inner: Codebook,
}

/// Opaque tracker handle; owns its sounding noise stream.
pub struct V2iTracker {
    inner: Tracker,
    rng: StreamRng,
}

/// Which combiner the tracker sounds with.
#[repr(C)]
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum V2iSoundingMode {
    Optimal = 0,
    Hybrid = 1,
    Manifold = 2,
}

/// Tracker construction parameters.
#[repr(C)]
#[derive(Debug, Clone, Copy)]
pub struct V2iTrackerParams {
    pub antennas: usize,
    pub rf_chains: usize,
    pub rsu_height_m: f64,
    pub ts_s: f64,
    pub steering_rad: f64,
    pub sigma_alpha: f64,
    pub sigma_omega: f64,
    pub x0: f64,
    pub y0: f64,
    /// Initial speed (m/s).
    pub v0: f64,
    pub sigma_eps: f64,
    pub seed: u64,
    pub sounding: V2iSoundingMode,
    /// Non-zero enables acceleration estimation.
    pub estimate_accel: u8,
}

/// Posterior mean and row-major covariance.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct V2iState {
    pub x: f64,
    pub y: f64,
    pub v: f64,
    pub cov: [f64; 9],
    /// Applied acceleration estimate, NaN when none.
    pub alpha_hat: f64,
}

/// Aggregates of one experiment at one transmit power.
#[repr(C)]
#[derive(Debug, Clone, Copy, Default)]
pub struct V2iSummary {
    pub tx_power_dbm: f64,
    pub trials: usize,
    pub nmse_x: f64,
    pub nmse_v: f64,
    pub excluded_x: usize,
    pub excluded_v: usize,
    /// NaN when the scenario selects no beams.
    pub mean_gain: f64,
    pub mean_rate: f64,
    pub non_psd_steps: usize,
}

thread_local! {
    static LAST_ERROR: RefCell<String> = const { RefCell::new(String::new()) };
}

fn set_error(msg: impl Into<String>) {
    LAST_ERROR.with(|e| *e.borrow_mut() = msg.into());
}

fn status_of(e: &Error) -> V2iStatus {
    match e {
        Error::Domain(_) | Error::Validation(_) => V2iStatus::Domain,
        Error::Numerical(_) => V2iStatus::Numerical,
        Error::Io(_) => V2iStatus::Io,
        Error::Json(_) => V2iStatus::Parse,
    }
}

struct Fail(V2iStatus, String);

impl From<Error> for Fail {
    fn from(e: Error) -> Self {
        Fail(status_of(&e), e.to_string())
    }
}

fn null(what: &str) -> Fail {
    Fail(V2iStatus::Null, format!("{what} is null"))
}

fn guard(f: impl FnOnce() -> Result<(), Fail>) -> V2iStatus {
    match catch_unwind(AssertUnwindSafe(f)) {
        Ok(Ok(())) => {
            set_error("");
            V2iStatus::Ok
        }
        Ok(Err(Fail(status, msg))) => {
            set_error(msg);
            status
        }
        Err(p) => {
            let msg = p
                .downcast_ref::<&str>()
                .map(|s| s.to_string())
                .or_else(|| p.downcast_ref::<String>().cloned())
                .unwrap_or_else(|| "panic".into());
            set_error(format!("panic: {msg}"));
            V2iStatus::Panic
        }
    }
}

unsafe fn str_arg<'a>(p: *const c_char, what: &str) -> Result<&'a str, Fail> {
    if p.is_null() {
        return Err(null(what));
    }
    CStr::from_ptr(p).to_str().map_err(|_| Fail(V2iStatus::Parse, format!("{what} is not valid UTF-8")))
}

/// Copy the calling thread's last error message into `buf` (NUL-terminated,
/// truncated to `len`). Returns the full message length without the NUL.
///
/// # Safety
/// `buf` must be null or valid for `len` bytes.
#[no_mangle]
pub unsafe extern "C" fn v2i_last_error_message(buf: *mut c_char, len: usize) -> usize {
    LAST_ERROR.with(|e| {
        let msg = e.borrow();
        if !buf.is_null() && len > 0 {
            let n = msg.len().min(len - 1);
            std::ptr::copy_nonoverlapping(msg.as_ptr(), buf as *mut u8, n);
            *buf.add(n) = 0;
        }
        msg.len()
    })
}

/// Spatial frequency of a vehicle at `(x, y)` seen from an RSU at height `h`.
///
/// # Safety
/// `out` must be null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_spatial_frequency(x: f64, y: f64, h: f64, out: *mut f64) -> V2iStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        *out = spatial_frequency(x, y, h)?;
        Ok(())
    })
}

/// Design a codebook with one resolution per entry of `codewords`.
///
/// # Safety
/// `codewords` must be valid for `n_resolutions` reads and `out` for one write.
#[no_mangle]
#[allow(clippy::too_many_arguments)]
pub unsafe extern "C" fn v2i_codebook_design(
    antennas: usize,
    rf_chains: usize,
    codewords: *const usize,
    n_resolutions: usize,
    lane_offset_m: f64,
    rsu_height_m: f64,
    range_half_m: f64,
    seed: u64,
    out: *mut *mut V2iCodebook,
) -> V2iStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        if codewords.is_null() {
            return Err(null("codewords"));
        }
        let qs = std::slice::from_raw_parts(codewords, n_resolutions);
        let geometry =
            RoadGeometry { rsu_height_m, lane_offset_m, range_lb_m: -range_half_m, range_ub_m: range_half_m };
        let params = DesignParams::new(antennas, rf_chains, lane_offset_m, seed);
        let cb = build_multiresolution(&geometry, &params, qs)?;
        *out = Box::into_raw(Box::new(V2iCodebook { inner: cb }));
        Ok(())
    })
}

/// Load a codebook JSON file.
///
/// # Safety
/// `path` must be a NUL-terminated string and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_codebook_load(path: *const c_char, out: *mut *mut V2iCodebook) -> V2iStatus {
    guard(|| {
        if out.is_null() {
            return Err(null("out"));
        }
        let p = str_arg(path, "path")?;
        let cb = Codebook::load(Path::new(p))?;
        *out = Box::into_raw(Box::new(V2iCodebook { inner: cb }));
        Ok(())
    })
}

/// Write a codebook as JSON.
///
/// # Safety
/// `cb` must be a live handle and `path` a NUL-terminated string.
#[no_mangle]
pub unsafe extern "C" fn v2i_codebook_save(cb: *const V2iCodebook, path: *const c_char) -> V2iStatus {
    guard(|| {
        let cb = cb.as_ref().ok_or_else(|| null("codebook"))?;
        let p = str_arg(path, "path")?;
        cb.inner.save(Path::new(p))?;
        Ok(())
    })
}

/// # Safety
/// `cb` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn v2i_codebook_free(cb: *mut V2iCodebook) {
    if !cb.is_null() {
        drop(Box::from_raw(cb));
    }
}

/// Number of codewords; 0 for a null handle.
///
/// # Safety
/// `cb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn v2i_codebook_len(cb: *const V2iCodebook) -> usize {
    cb.as_ref().map_or(0, |c| c.inner.len())
}

/// Antennas per codeword; 0 for a null handle.
///
/// # Safety
/// `cb` must be null or a live handle.
#[no_mangle]
pub unsafe extern "C" fn v2i_codebook_antennas(cb: *const V2iCodebook) -> usize {
    cb.as_ref().map_or(0, |c| c.inner.m)
}

/// Copy codeword `index` (0-based) into `re` and `im`, each of length `len`
/// equal to the antenna count.
///
/// # Safety
/// `re` and `im` must be valid for `len` writes.
#[no_mangle]
pub unsafe extern "C" fn v2i_codebook_codeword(
    cb: *const V2iCodebook,
    index: usize,
    re: *mut f64,
    im: *mut f64,
    len: usize,
) -> V2iStatus {
    guard(|| {
        let cb = cb.as_ref().ok_or_else(|| null("codebook"))?;
        if re.is_null() || im.is_null() {
            return Err(null("output buffer"));
        }
        let word = cb
            .inner
            .codewords
            .get(index)
            .ok_or_else(|| Fail(V2iStatus::Domain, format!("codeword index {index} out of range")))?;
        if len != word.u.len() {
            return Err(Fail(V2iStatus::Domain, format!("buffer length {len} differs from {}", word.u.len())));
        }
        for (i, c) in word.u.iter().enumerate() {
            *re.add(i) = c.re;
            *im.add(i) = c.im;
        }
        Ok(())
    })
}

/// Create a tracker from its parameters.
///
/// # Safety
/// `params` must be valid for one read and `out` for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_tracker_new(params: *const V2iTrackerParams, out: *mut *mut V2iTracker) -> V2iStatus {
    guard(|| {
        let p = params.as_ref().ok_or_else(|| null("params"))?;
        if out.is_null() {
            return Err(null("out"));
        }
        let model = MotionModel {
            ts_s: p.ts_s,
            steering_rad: p.steering_rad,
            sigma_alpha: p.sigma_alpha,
            sigma_omega: p.sigma_omega,
        };
        model.validate()?;
        if p.antennas < 2 || p.rf_chains == 0 || !(p.rsu_height_m > 0.0) || !(p.sigma_eps >= 0.0) {
            return Err(Fail(V2iStatus::Domain, "invalid tracker parameters".into()));
        }
        let sounding = match p.sounding {
            V2iSoundingMode::Optimal => SoundingMode::Optimal,
            V2iSoundingMode::Hybrid => SoundingMode::Hybrid,
            V2iSoundingMode::Manifold => SoundingMode::Manifold,
        };
        let mut cfg = TrackerConfig::new(p.antennas, p.rf_chains, p.rsu_height_m, model, sounding);
        cfg.accel.enabled = p.estimate_accel != 0;
        let t0 = StateVector::new(p.x0, p.y0, p.v0);
        let belief = init_belief(&t0, p.sigma_eps, &mut substream(p.seed, 0, Purpose::Init));
        let tracker = Tracker::new(cfg, belief, t0);
        *out = Box::into_raw(Box::new(V2iTracker { inner: tracker, rng: substream(p.seed, 0, Purpose::Sounding) }));
        Ok(())
    })
}

/// # Safety
/// `t` must be null or a handle not freed before.
#[no_mangle]
pub unsafe extern "C" fn v2i_tracker_free(t: *mut V2iTracker) {
    if !t.is_null() {
        drop(Box::from_raw(t));
    }
}

fn state_of(t: &Tracker) -> V2iState {
    let b = t.belief();
    let mut cov = [0.0; 9];
    for r in 0..3 {
        for c in 0..3 {
            cov[3 * r + c] = b.cov[(r, c)];
        }
    }
    V2iState { x: b.mean.x, y: b.mean.y, v: b.mean.v, cov, alpha_hat: t.alpha_applied().unwrap_or(f64::NAN) }
}

/// One sounding step against the true channel `(beta, psi, rho)`.
///
/// # Safety
/// `t` must be a live handle; `out` null or valid for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_tracker_step(
    t: *mut V2iTracker,
    beta_re: f64,
    beta_im: f64,
    psi: f64,
    rho: f64,
    out: *mut V2iState,
) -> V2iStatus {
    guard(|| {
        let t = t.as_mut().ok_or_else(|| null("tracker"))?;
        let chan = ChannelRealization { beta: C64::new(beta_re, beta_im), psi, rho };
        t.inner.step(&mut t.rng, &chan)?;
        if let Some(o) = out.as_mut() {
            *o = state_of(&t.inner);
        }
        Ok(())
    })
}

/// Current belief of the tracker.
///
/// # Safety
/// `t` must be a live handle and `out` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_tracker_state(t: *const V2iTracker, out: *mut V2iState) -> V2iStatus {
    guard(|| {
        let t = t.as_ref().ok_or_else(|| null("tracker"))?;
        let o = out.as_mut().ok_or_else(|| null("out"))?;
        *o = state_of(&t.inner);
        Ok(())
    })
}

/// Pick the codeword (1-based index) for the next `omega` steps from the
/// tracker's current belief.
///
/// # Safety
/// `cb` and `t` must be live handles and `out_index` valid for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_select(
    cb: *const V2iCodebook,
    t: *const V2iTracker,
    omega: usize,
    out_index: *mut usize,
) -> V2iStatus {
    guard(|| {
        let cb = cb.as_ref().ok_or_else(|| null("codebook"))?;
        let t = t.as_ref().ok_or_else(|| null("tracker"))?;
        let o = out_index.as_mut().ok_or_else(|| null("out_index"))?;
        if omega == 0 {
            return Err(Fail(V2iStatus::Domain, "omega must be at least 1".into()));
        }
        let tr = &t.inner;
        let cfg = tr.config();
        if cfg.antennas != cb.inner.m {
            return Err(Fail(V2iStatus::Domain, "codebook and tracker antenna counts differ".into()));
        }
        let ext = extrapolate(tr.belief(), &cfg.model, tr.transition(), tr.alpha_applied(), omega);
        let dirs = ext
            .iter()
            .enumerate()
            .map(|(k, (mean, cov))| direction_distribution(mean, cov, cfg.rsu_height, k + 1))
            .collect::<Result<Vec<_>, _>>()?;
        let ideal = ideal_bp(&dirs, cb.inner.m, &cb.inner.grid())?;
        *o = select(&cb.inner, &ideal)?.index;
        Ok(())
    })
}

/// Run a scenario given as JSON. `trials` of 0 keeps the scenario's count and
/// a null `seed` keeps its seed. Writes up to `capacity` summaries (one per
/// transmit power) and stores the number available in `written`.
///
/// # Safety
/// `scenario_json` must be a NUL-terminated string, `out` valid for
/// `capacity` writes and `written` for one write.
#[no_mangle]
pub unsafe extern "C" fn v2i_run_experiment(
    scenario_json: *const c_char,
    trials: usize,
    seed: *const u64,
    out: *mut V2iSummary,
    capacity: usize,
    written: *mut usize,
) -> V2iStatus {
    guard(|| {
        let text = str_arg(scenario_json, "scenario_json")?;
        let w = written.as_mut().ok_or_else(|| null("written"))?;
        if out.is_null() && capacity > 0 {
            return Err(null("out"));
        }
        let scenario = Scenario::from_json_str(text)?;
        let opts = RunOptions { trials: (trials > 0).then_some(trials), seed: seed.as_ref().copied(), keep_csv: false };
        let results = run_experiment(&scenario, &opts)?;
        *w = results.len();
        for (i, r) in results.iter().take(capacity).enumerate() {
            let s = &r.summary;
            *out.add(i) = V2iSummary {
                tx_power_dbm: s.tx_power_dbm,
                trials: s.trials,
                nmse_x: s.nmse_x,
                nmse_v: s.nmse_v,
                excluded_x: s.excluded_x,
                excluded_v: s.excluded_v,
                mean_gain: s.mean_gain.unwrap_or(f64::NAN),
                mean_rate: s.mean_rate.unwrap_or(f64::NAN),
                non_psd_steps: s.non_psd_steps,
            };
        }
        Ok(())
    })
}
