//! Seeded Monte-Carlo experiments: scenarios, trials, metrics and CSV output.

use nalgebra::Matrix3;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use crate::accel::AccelSettings;
use crate::array_channel::{
    array_response, average_snr, dbm_to_mw, noise_power_dbm, spatial_frequency, wavelength, ArrayConfig,
    ChannelRealization, FadingProcess, RicianConfig, RoadGeometry,
};
use crate::codebook::{build_multiresolution, Codebook, DesignParams};
use crate::ekf::{delta_reg, init_belief, SoundingMode, StateBelief, Tracker, TrackerConfig, UpdateForm};
use crate::error::{validation, Error, Result};
use crate::motion::{default_sigma_alpha, kmh_to_mps, simulate_trajectory_with_coherence, MotionModel, StateVector};
use crate::rng::{substream, Purpose};
use crate::selector::{dft_scheme, direction_distribution, extrapolate, ideal_bp, select, DftScheme};
use crate::C64;

/// Default number of Monte-Carlo trials.
pub const DEFAULT_TRIALS: usize = 500;

/// Steps with `|x|` (or `|v|`) below this are left out of the relative errors.
pub const NMSE_EXCLUSION: f64 = 0.5;

/// Environment variable capping the worker count.
pub const THREADS_ENV: &str = "V2I_THREADS";

pub const CSV_HEADER: &str =
    "trial,step,time_s,x_true,y_true,v_true,x_hat,y_hat,v_hat,alpha_hat,beam_index,gain_norm,rate_bps_hz";

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ArraySpec {
    pub antennas: usize,
    #[serde(default = "default_rf_chains")]
    pub rf_chains: usize,
    #[serde(default = "default_carrier")]
    pub carrier_hz: f64,
    #[serde(default = "default_bandwidth")]
    pub bandwidth_hz: f64,
    #[serde(default = "default_pathloss")]
    pub pathloss_exponent: f64,
    #[serde(default = "default_tx_power")]
    pub tx_power_dbm: f64,
}

fn default_rf_chains() -> usize {
    4
}
fn default_carrier() -> f64 {
    28e9
}
fn default_bandwidth() -> f64 {
    20e6
}
fn default_pathloss() -> f64 {
    2.0
}
fn default_tx_power() -> f64 {
    -20.0
}

impl ArraySpec {
    pub fn config(&self, tx_power_dbm: f64) -> ArrayConfig {
        ArrayConfig {
            num_antennas: self.antennas,
            num_rf_chains: self.rf_chains,
            wavelength_m: wavelength(self.carrier_hz),
            pathloss_exponent: self.pathloss_exponent,
            noise_power_mw: dbm_to_mw(noise_power_dbm(self.bandwidth_hz)),
            tx_power_mw: dbm_to_mw(tx_power_dbm),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct MotionSpec {
    #[serde(default = "default_ts")]
    pub ts_s: f64,
    pub steering_rad: f64,
    /// Defaults to a tenth of the initial speed (per second).
    #[serde(default)]
    pub sigma_alpha: Option<f64>,
    #[serde(default = "default_sigma_omega")]
    pub sigma_omega: f64,
    /// Steps between acceleration redraws; one draw per trial when absent.
    #[serde(default)]
    pub coherence_steps: Option<usize>,
}

fn default_ts() -> f64 {
    0.01
}
fn default_sigma_omega() -> f64 {
    10f64.powf(-1.5)
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InitialState {
    pub x: f64,
    pub y: f64,
    pub v_kmh: f64,
}

impl InitialState {
    pub fn state(&self) -> StateVector {
        StateVector::new(self.x, self.y, kmh_to_mps(self.v_kmh))
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum TrackerKind {
    /// Optimal (or hybrid) combiner with acceleration estimation.
    Proposed,
    /// Array-manifold combiner without acceleration estimation.
    Manifold,
    /// Proposed tracker whose belief is overwritten by the true state every `period` steps.
    Feedback { period: usize },
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq, Eq)]
#[serde(rename_all = "snake_case")]
pub enum CombinerMode {
    Optimal,
    Hybrid,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum Beamforming {
    /// Designed codebook; one entry per resolution, or loaded from `file`.
    Codebook {
        #[serde(default)]
        resolutions: Vec<usize>,
        #[serde(default)]
        file: Option<String>,
    },
    /// DFT column toward the mid-interval prediction.
    Dft1,
    /// DFT column toward the current estimate.
    Dft2,
    /// A uniformly random codeword of the designed codebook.
    Random {
        #[serde(default)]
        resolutions: Vec<usize>,
        #[serde(default)]
        file: Option<String>,
    },
    /// Tracking only.
    None,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct Scenario {
    pub name: String,
    pub geometry: RoadGeometry,
    pub array: ArraySpec,
    pub motion: MotionSpec,
    pub initial: InitialState,
    #[serde(default)]
    pub sigma_eps: f64,
    #[serde(default)]
    pub rician: RicianConfig,
    pub omega: usize,
    #[serde(default = "default_trials")]
    pub trials: usize,
    pub horizon: usize,
    #[serde(default = "default_combiner_mode")]
    pub combiner_mode: CombinerMode,
    pub tracker: TrackerKind,
    pub beamforming: Beamforming,
    #[serde(default)]
    pub seed: u64,
    /// Transmit powers to sweep; the array power is used when empty.
    #[serde(default)]
    pub tx_power_sweep_dbm: Vec<f64>,
    #[serde(default)]
    pub accel: AccelSettings,
    #[serde(default)]
    pub update_form: UpdateForm,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}
fn default_combiner_mode() -> CombinerMode {
    CombinerMode::Optimal
}

impl Scenario {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let s: Scenario = serde_json::from_str(text).map_err(|e| validation(format!("scenario: {e}")))?;
        s.validate()?;
        Ok(s)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn motion_model(&self) -> MotionModel {
        MotionModel {
            ts_s: self.motion.ts_s,
            steering_rad: self.motion.steering_rad,
            sigma_alpha: self.motion.sigma_alpha.unwrap_or_else(|| default_sigma_alpha(self.initial.v_kmh)),
            sigma_omega: self.motion.sigma_omega,
        }
    }

    pub fn tx_powers(&self) -> Vec<f64> {
        if self.tx_power_sweep_dbm.is_empty() {
            vec![self.array.tx_power_dbm]
        } else {
            self.tx_power_sweep_dbm.clone()
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.geometry.validate()?;
        self.array.config(self.array.tx_power_dbm).validate()?;
        self.motion_model().validate()?;
        if !(self.array.carrier_hz > 0.0 && self.array.bandwidth_hz > 0.0) {
            return Err(validation("carrier and bandwidth must be positive"));
        }
        if self.trials == 0 {
            return Err(validation("trial count must be at least 1"));
        }
        if self.omega == 0 {
            return Err(validation("omega must be at least 1"));
        }
        if self.horizon < self.omega {
            return Err(validation("horizon must cover at least one beam interval"));
        }
        if !(self.sigma_eps >= 0.0) {
            return Err(validation("sigma_eps must be non-negative"));
        }
        if self.rician.block_length == 0 {
            return Err(validation("fading block length must be at least 1"));
        }
        if let TrackerKind::Feedback { period } = self.tracker {
            if period == 0 {
                return Err(validation("feedback period must be at least 1"));
            }
        }
        if matches!(self.beamforming, Beamforming::Dft1) && !self.omega.is_multiple_of(2) {
            return Err(validation("the midpoint DFT scheme needs an even omega"));
        }
        if self.tx_powers().iter().any(|p| !p.is_finite()) {
            return Err(validation("transmit powers must be finite"));
        }
        Ok(())
    }

    /// Design (or load) the codebook this scenario beamforms with, if any.
    pub fn codebook(&self) -> Result<Option<Codebook>> {
        let (resolutions, file) = match &self.beamforming {
            Beamforming::Codebook { resolutions, file } | Beamforming::Random { resolutions, file } => {
                (resolutions, file)
            }
            _ => return Ok(None),
        };
        if let Some(f) = file {
            let cb = Codebook::load(Path::new(f))?;
            if cb.m != self.array.antennas {
                return Err(validation("codebook antenna count differs from the scenario"));
            }
            return Ok(Some(cb));
        }
        let qs = if resolutions.is_empty() { vec![self.array.antennas] } else { resolutions.clone() };
        let params =
            DesignParams::new(self.array.antennas, self.array.rf_chains, self.geometry.lane_offset_m, self.seed);
        build_multiresolution(&self.geometry, &params, &qs).map(Some)
    }
}

/// One logged step of one trial.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub step: usize,
    pub time_s: f64,
    pub truth: StateVector,
    pub estimate: StateVector,
    pub cov: Matrix3<f64>,
    pub alpha_hat: Option<f64>,
    pub beam_index: Option<usize>,
    pub gain: Option<f64>,
    pub rate: Option<f64>,
}

impl TrialRecord {
    pub fn csv_line(&self, out: &mut String) {
        let opt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{}",
            self.trial,
            self.step,
            self.time_s,
            self.truth.x,
            self.truth.y,
            self.truth.v,
            self.estimate.x,
            self.estimate.y,
            self.estimate.v,
            opt(self.alpha_hat),
            self.beam_index.map(|i| i.to_string()).unwrap_or_default(),
            opt(self.gain),
            opt(self.rate),
        );
    }
}

/// Normalized gain `|d^H c|^2 / M` and rate `log2(1 + rho |beta|^2 |d^H c|^2)`.
pub fn link_metrics(beam: &nalgebra::DVector<C64>, chan: &ChannelRealization) -> (f64, f64) {
    let m = beam.len();
    let ip = array_response(m, chan.psi).dotc(beam).norm_sqr();
    let gain = ip / m as f64;
    let rate = (1.0 + chan.rho * chan.beta.norm_sqr() * ip).log2();
    (gain, rate)
}

/// Everything a trial needs that is shared across trials.
#[derive(Debug, Clone)]
pub struct TrialContext {
    pub scenario: Scenario,
    pub array: ArrayConfig,
    pub codebook: Option<Arc<Codebook>>,
}

impl TrialContext {
    pub fn new(scenario: &Scenario, tx_power_dbm: f64, codebook: Option<Arc<Codebook>>) -> Result<Self> {
        scenario.validate()?;
        if matches!(scenario.beamforming, Beamforming::Codebook { .. } | Beamforming::Random { .. })
            && codebook.is_none()
        {
            return Err(validation("scenario needs a codebook"));
        }
        Ok(Self { scenario: scenario.clone(), array: scenario.array.config(tx_power_dbm), codebook })
    }
}

fn beam_of(
    ctx: &TrialContext,
    belief: &StateBelief,
    tracker: &Tracker,
    control: &mut impl Rng,
) -> Result<Option<(usize, nalgebra::DVector<C64>)>> {
    let s = &ctx.scenario;
    let m = s.array.antennas;
    let h = s.geometry.rsu_height_m;
    match &s.beamforming {
        Beamforming::None => Ok(None),
        Beamforming::Dft1 | Beamforming::Dft2 => {
            let scheme =
                if matches!(s.beamforming, Beamforming::Dft1) { DftScheme::Midpoint } else { DftScheme::Current };
            let c = dft_scheme(belief, tracker.transition(), s.omega, m, h, scheme)?;
            Ok(Some((c.column + 1, c.u)))
        }
        Beamforming::Codebook { .. } => {
            let cb = ctx.codebook.as_ref().expect("checked in context");
            let model = tracker.config().model;
            let ext = extrapolate(belief, &model, tracker.transition(), tracker.alpha_applied(), s.omega);
            let dirs = ext
                .iter()
                .enumerate()
                .map(|(t, (mean, cov))| direction_distribution(mean, cov, h, t + 1))
                .collect::<Result<Vec<_>>>()?;
            let ideal = ideal_bp(&dirs, m, &cb.grid())?;
            let sel = select(cb, &ideal)?;
            Ok(Some((sel.index, cb.codewords[sel.index - 1].u.clone())))
        }
        Beamforming::Random { .. } => {
            let cb = ctx.codebook.as_ref().expect("checked in context");
            let q = control.random_range(0..cb.len());
            Ok(Some((q + 1, cb.codewords[q].u.clone())))
        }
    }
}

/// Run one trial with its own random substreams.
pub fn run_trial(ctx: &TrialContext, trial: usize) -> Result<Vec<TrialRecord>> {
    let s = &ctx.scenario;
    let model = s.motion_model();
    let t0 = s.initial.state();
    let m = s.array.antennas;
    let h = s.geometry.rsu_height_m;
    let seed = s.seed;
    let tr = trial as u64;
    let mut truth_rng = substream(seed, tr, Purpose::Truth);
    let mut fading_rng = substream(seed, tr, Purpose::Fading);
    let mut init_rng = substream(seed, tr, Purpose::Init);
    let mut sounding_rng = substream(seed, tr, Purpose::Sounding);
    let mut control_rng = substream(seed, tr, Purpose::Control);

    let traj = simulate_trajectory_with_coherence(&mut truth_rng, &model, t0, s.horizon, s.motion.coherence_steps);
    let mut fading = FadingProcess::new(s.rician);
    let belief0 = init_belief(&t0, s.sigma_eps, &mut init_rng);

    let sounding = match (s.tracker, s.combiner_mode) {
        (TrackerKind::Manifold, _) => SoundingMode::Manifold,
        (_, CombinerMode::Optimal) => SoundingMode::Optimal,
        (_, CombinerMode::Hybrid) => SoundingMode::Hybrid,
    };
    let mut cfg = TrackerConfig::new(m, s.array.rf_chains, h, model, sounding);
    cfg.update_form = s.update_form;
    cfg.accel = s.accel;
    if matches!(s.tracker, TrackerKind::Manifold) {
        cfg.accel.enabled = false;
    }
    let mut tracker = Tracker::new(cfg, belief0, t0);

    let mut records = Vec::with_capacity(s.horizon);
    let mut beam: Option<(usize, nalgebra::DVector<C64>)> = None;
    for l in 1..=s.horizon {
        if (l - 1) % s.omega == 0 {
            let belief = *tracker.belief();
            beam = beam_of(ctx, &belief, &tracker, &mut control_rng)?;
        }
        let truth = traj.states[l];
        let beta = fading.next(&mut fading_rng);
        let psi = spatial_frequency(truth.x, truth.y, h)?;
        let dist = (truth.x * truth.x + truth.y * truth.y + h * h).sqrt();
        let rho = average_snr(&ctx.array, dist)?;
        let chan = ChannelRealization { beta, psi, rho };
        tracker.step(&mut sounding_rng, &chan)?;
        if let TrackerKind::Feedback { period } = s.tracker {
            if l % period == 0 {
                tracker.reset(StateBelief { mean: truth, cov: Matrix3::identity() * delta_reg(&t0) });
            }
        }
        let post = tracker.belief();
        if !post.mean.is_finite() {
            return Err(Error::Numerical(format!("trial {trial} diverged at step {l}")));
        }
        let (gain, rate) = match &beam {
            Some((_, u)) => {
                let (g, r) = link_metrics(u, &chan);
                (Some(g), Some(r))
            }
            None => (None, None),
        };
        records.push(TrialRecord {
            trial,
            step: l,
            time_s: l as f64 * model.ts_s,
            truth,
            estimate: post.mean,
            cov: post.cov,
            alpha_hat: tracker.alpha_applied(),
            beam_index: beam.as_ref().map(|b| b.0),
            gain,
            rate,
        });
    }
    Ok(records)
}

/// Aggregated metrics of one experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub scenario: String,
    pub tx_power_dbm: f64,
    pub trials: usize,
    pub nmse_x: f64,
    pub nmse_v: f64,
    pub excluded_x: usize,
    pub excluded_v: usize,
    pub mean_gain: Option<f64>,
    pub mean_rate: Option<f64>,
    /// Per-step NMSE of `x` (NaN where every trial was excluded).
    pub nmse_x_series: Vec<f64>,
    pub nmse_v_series: Vec<f64>,
    pub gain_series: Vec<f64>,
    pub rate_series: Vec<f64>,
    /// Steps whose posterior covariance failed the PSD check.
    pub non_psd_steps: usize,
}

impl MetricSummary {
    pub fn rows(&self) -> Vec<(String, f64)> {
        let mut rows = vec![
            ("tx_power_dbm".to_string(), self.tx_power_dbm),
            ("trials".to_string(), self.trials as f64),
            ("nmse_x".to_string(), self.nmse_x),
            ("nmse_v".to_string(), self.nmse_v),
            ("excluded_x".to_string(), self.excluded_x as f64),
            ("excluded_v".to_string(), self.excluded_v as f64),
            ("non_psd_steps".to_string(), self.non_psd_steps as f64),
        ];
        if let Some(g) = self.mean_gain {
            rows.push(("mean_gain".to_string(), g));
        }
        if let Some(r) = self.mean_rate {
            rows.push(("mean_rate".to_string(), r));
        }
        rows
    }
}

/// Accumulates per-step sums in trial order.
#[derive(Debug, Clone)]
struct Accumulator {
    horizon: usize,
    ex: Vec<f64>,
    nx: Vec<usize>,
    ev: Vec<f64>,
    nv: Vec<usize>,
    gain: Vec<f64>,
    rate: Vec<f64>,
    ng: Vec<usize>,
    excluded_x: usize,
    excluded_v: usize,
    non_psd: usize,
}

impl Accumulator {
    fn new(horizon: usize) -> Self {
        Self {
            horizon,
            ex: vec![0.0; horizon],
            nx: vec![0; horizon],
            ev: vec![0.0; horizon],
            nv: vec![0; horizon],
            gain: vec![0.0; horizon],
            rate: vec![0.0; horizon],
            ng: vec![0; horizon],
            excluded_x: 0,
            excluded_v: 0,
            non_psd: 0,
        }
    }

    fn add(&mut self, recs: &[TrialRecord]) {
        for r in recs {
            let i = r.step - 1;
            if r.truth.x.abs() >= NMSE_EXCLUSION {
                self.ex[i] += ((r.truth.x - r.estimate.x) / r.truth.x).powi(2);
                self.nx[i] += 1;
            } else {
                self.excluded_x += 1;
            }
            if r.truth.v.abs() >= NMSE_EXCLUSION {
                self.ev[i] += ((r.truth.v - r.estimate.v) / r.truth.v).powi(2);
                self.nv[i] += 1;
            } else {
                self.excluded_v += 1;
            }
            if let (Some(g), Some(rt)) = (r.gain, r.rate) {
                self.gain[i] += g;
                self.rate[i] += rt;
                self.ng[i] += 1;
            }
            if !crate::ekf::is_numerically_psd(&r.cov) {
                self.non_psd += 1;
            }
        }
    }

    fn finish(self, scenario: &str, tx: f64, trials: usize) -> MetricSummary {
        let ratio = |s: &[f64], n: &[usize]| -> Vec<f64> {
            s.iter().zip(n).map(|(a, &c)| if c > 0 { a / c as f64 } else { f64::NAN }).collect()
        };
        let total = |s: &[f64], n: &[usize]| -> f64 {
            let c: usize = n.iter().sum();
            if c == 0 {
                f64::NAN
            } else {
                s.iter().sum::<f64>() / c as f64
            }
        };
        let has_beams = self.ng.iter().any(|&c| c > 0);
        let _ = self.horizon;
        MetricSummary {
            scenario: scenario.to_string(),
            tx_power_dbm: tx,
            trials,
            nmse_x: total(&self.ex, &self.nx),
            nmse_v: total(&self.ev, &self.nv),
            excluded_x: self.excluded_x,
            excluded_v: self.excluded_v,
            mean_gain: has_beams.then(|| total(&self.gain, &self.ng)),
            mean_rate: has_beams.then(|| total(&self.rate, &self.ng)),
            nmse_x_series: ratio(&self.ex, &self.nx),
            nmse_v_series: ratio(&self.ev, &self.nv),
            gain_series: ratio(&self.gain, &self.ng),
            rate_series: ratio(&self.rate, &self.ng),
            non_psd_steps: self.non_psd,
        }
    }
}

/// Output of one experiment at one transmit power.
#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub summary: MetricSummary,
    /// Per-step CSV including the header, when requested.
    pub csv: Option<String>,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    pub trials: Option<usize>,
    pub seed: Option<u64>,
    pub keep_csv: bool,
}

/// Worker count from `V2I_THREADS`, if set.
pub fn thread_cap() -> Option<usize> {
    std::env::var(THREADS_ENV).ok().and_then(|v| v.trim().parse::<usize>().ok()).filter(|&n| n > 0)
}

fn in_pool<T: Send>(f: impl FnOnce() -> T + Send) -> Result<T> {
    match thread_cap() {
        Some(n) => {
            let pool = rayon::ThreadPoolBuilder::new()
                .num_threads(n)
                .build()
                .map_err(|e| Error::Numerical(format!("thread pool: {e}")))?;
            Ok(pool.install(f))
        }
        None => Ok(f()),
    }
}

/// Run every trial at one transmit power with a given (shared) codebook.
pub fn run_with_codebook(
    scenario: &Scenario,
    tx_power_dbm: f64,
    codebook: Option<Arc<Codebook>>,
    keep_csv: bool,
) -> Result<ExperimentResult> {
    let ctx = TrialContext::new(scenario, tx_power_dbm, codebook)?;
    let trials = scenario.trials;
    let per_trial: Vec<Result<(Vec<TrialRecord>, Option<String>)>> = in_pool(|| {
        (0..trials)
            .into_par_iter()
            .map(|t| {
                let recs = run_trial(&ctx, t)?;
                let csv = keep_csv.then(|| {
                    let mut s = String::with_capacity(recs.len() * 120);
                    for r in &recs {
                        r.csv_line(&mut s);
                    }
                    s
                });
                Ok((recs, csv))
            })
            .collect()
    })?;
    let mut acc = Accumulator::new(scenario.horizon);
    let mut csv = keep_csv.then(|| format!("{CSV_HEADER}\n"));
    for item in per_trial {
        let (recs, part) = item?;
        acc.add(&recs);
        if let (Some(out), Some(p)) = (csv.as_mut(), part) {
            out.push_str(&p);
        }
    }
    Ok(ExperimentResult { summary: acc.finish(&scenario.name, tx_power_dbm, trials), csv })
}

/// Run the scenario at every transmit power of its sweep.
pub fn run_experiment(scenario: &Scenario, opts: &RunOptions) -> Result<Vec<ExperimentResult>> {
    let mut s = scenario.clone();
    if let Some(t) = opts.trials {
        s.trials = t;
    }
    if let Some(seed) = opts.seed {
        s.seed = seed;
    }
    s.validate()?;
    let codebook = in_pool(|| s.codebook())??.map(Arc::new);
    s.tx_powers().into_iter().map(|p| run_with_codebook(&s, p, codebook.clone(), opts.keep_csv)).collect()
}

/// Summary CSV with columns `metric,scenario,value`.
pub fn summary_csv(results: &[ExperimentResult]) -> String {
    let mut out = String::from("metric,scenario,value\n");
    let sweep = results.len() > 1;
    for r in results {
        for (metric, value) in r.summary.rows() {
            let name = if sweep && metric != "tx_power_dbm" {
                format!("{metric}@{}dBm", r.summary.tx_power_dbm)
            } else {
                metric
            };
            let _ = writeln!(out, "{name},{},{value}", r.summary.scenario);
        }
    }
    out
}

/// Bundled scenario files, `(name, json)`.
pub const BUNDLED_SCENARIOS: &[(&str, &str)] = &[
    ("track-demo", include_str!("../scenarios/track-demo.json")),
    ("tracking-proposed", include_str!("../scenarios/tracking-proposed.json")),
    ("tracking-hybrid", include_str!("../scenarios/tracking-hybrid.json")),
    ("tracking-manifold", include_str!("../scenarios/tracking-manifold.json")),
    ("tracking-feedback", include_str!("../scenarios/tracking-feedback.json")),
    ("tracking-steep", include_str!("../scenarios/tracking-steep.json")),
    ("beam-codebook", include_str!("../scenarios/beam-codebook.json")),
    ("beam-codebook-hybrid", include_str!("../scenarios/beam-codebook-hybrid.json")),
    ("beam-dft1", include_str!("../scenarios/beam-dft1.json")),
    ("beam-dft2", include_str!("../scenarios/beam-dft2.json")),
    ("beam-random", include_str!("../scenarios/beam-random.json")),
    ("beam-multires", include_str!("../scenarios/beam-multires.json")),
];

pub fn bundled_scenario(name: &str) -> Result<Scenario> {
    let (_, text) = BUNDLED_SCENARIOS
        .iter()
        .find(|(n, _)| *n == name)
        .ok_or_else(|| validation(format!("unknown bundled scenario '{name}'")))?;
    Scenario::from_json_str(text)
}
