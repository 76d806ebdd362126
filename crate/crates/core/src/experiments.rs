//! Monte Carlo studies: repolarisation times under noise, estimator error
//! rates and interval coverage, and front counting.

use std::ops::ControlFlow;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::statistics::{Data, Distribution, OrderStatistics};

use crate::domain::TorusGrid;
use crate::error::{Error, Result};
use crate::estimator::{
    augmented_mle, default_spectral_modes, intervals_from_parts, realized_variation, spectral_mle, IntervalInputs,
};
use crate::measurement::{Kernel, MeasurementLayout, MeasurementRecorder};
use crate::model::{default_initial_condition, FieldPair, ModelParams};
use crate::solver::{simulate_observed, Reaction, Scheme, SolverConfig};

/// Window averages `(mu_F, mu_R)` of the activator over the front
/// `[L/4, 3L/4]` and the rear (the rest), each normalised by `2/L`.
///
/// When the window edges fall on grid points (`m` divisible by 4) each window
/// is integrated with fourth-order end-corrected trapezoid weights; otherwise
/// plain cell sums are used.
pub fn relative_concentrations(activator: &[f64], grid: &TorusGrid) -> Result<(f64, f64)> {
    grid.check_len(activator.len())?;
    let m = grid.len();
    let l = grid.length();
    let scale = 2.0 / l * grid.dx();
    if m % 4 == 0 && m >= 16 {
        let q = m / 4;
        let front = gregory_sum(&|i| activator[i], q, 3 * q);
        let rear = gregory_sum(&|i| activator[i % m], 3 * q, 5 * q);
        return Ok((scale * front, scale * rear));
    }
    let (mut front, mut rear) = (0.0, 0.0);
    for (i, x) in grid.coords().enumerate() {
        if (l / 4.0..=3.0 * l / 4.0).contains(&x) {
            front += activator[i];
        } else {
            rear += activator[i];
        }
    }
    Ok((scale * front, scale * rear))
}

/// `sum_{i=a}^{b} w_i f(i)` with Gregory end weights `3/8, 7/6, 23/24`.
fn gregory_sum(f: &dyn Fn(usize) -> f64, a: usize, b: usize) -> f64 {
    const W: [f64; 3] = [3.0 / 8.0, 7.0 / 6.0, 23.0 / 24.0];
    let mut total = 0.0;
    for i in a..=b {
        let from_edge = (i - a).min(b - i);
        let w = if from_edge < 3 { W[from_edge] } else { 1.0 };
        total += w * f(i);
    }
    total
}

/// Outcome of a repolarisation run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "tau", rename_all = "lowercase")]
pub enum RepolOutcome {
    Repolarised(f64),
    Never,
    /// The path went negative before repolarising.
    Discarded,
}

impl RepolOutcome {
    pub fn tau(self) -> Option<f64> {
        match self {
            RepolOutcome::Repolarised(t) => Some(t),
            _ => None,
        }
    }
}

fn check_gamma(gamma: f64) -> Result<()> {
    if !(gamma > 1.0 && gamma.is_finite()) {
        return Err(Error::InvalidParameter(format!("gamma must exceed 1, got {gamma}")));
    }
    Ok(())
}

/// Whether `mu_F >= gamma mu_R` holds for this activator profile.
pub fn is_repolarised(activator: &[f64], grid: &TorusGrid, gamma: f64) -> Result<bool> {
    let (front, rear) = relative_concentrations(activator, grid)?;
    Ok(front >= gamma * rear)
}

/// First recorded time with `mu_F >= gamma mu_R`; paths that went negative
/// anywhere are discarded.
pub fn time_to_repolarisation(traj: &crate::solver::Trajectory, gamma: f64) -> Result<RepolOutcome> {
    check_gamma(gamma)?;
    if traj.discarded || traj.states.iter().any(FieldPair::has_negative) {
        return Ok(RepolOutcome::Discarded);
    }
    for s in &traj.states {
        if is_repolarised(&s.activator, &traj.grid, gamma)? {
            return Ok(RepolOutcome::Repolarised(s.time));
        }
    }
    Ok(RepolOutcome::Never)
}

/// Start profile for repolarisation runs.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialProfile {
    /// Cosine bump at the rear, inhibitor at its quasi-steady level.
    Cosine { peak: f64 },
    /// Self-organised rear pattern, see [`polarised_initial_condition`].
    Polarised,
}

impl Default for InitialProfile {
    fn default() -> Self {
        InitialProfile::Polarised
    }
}

impl InitialProfile {
    pub fn build(self, grid: &TorusGrid, params: &ModelParams) -> Result<FieldPair> {
        match self {
            InitialProfile::Cosine { peak } => Ok(default_initial_condition(grid, params, peak)),
            InitialProfile::Polarised => polarised_initial_condition(grid, params),
        }
    }
}

/// Length of the deterministic warm-up in [`polarised_initial_condition`].
pub const WARMUP_HORIZON: f64 = 100.0;

/// Polarised start built from the model itself: a unit cosine bump is run
/// deterministically, the state with the highest activator peak is kept and
/// rotated by `L/2` so that the peak sits at the rear `x = 0`.
///
/// The warm-up places the peak on the front side, where the signal favours
/// it; rotating yields a pattern in its own dynamic balance but on the
/// disfavoured side.
pub fn polarised_initial_condition(grid: &TorusGrid, params: &ModelParams) -> Result<FieldPair> {
    let det = params.deterministic();
    let init = default_initial_condition(grid, &det, 1.0);
    let cfg = SolverConfig::with_max_dt(WARMUP_HORIZON, 0.01, Scheme::SemiImplicitDiffusion);
    let mut best: Option<(f64, FieldPair)> = None;
    simulate_observed(&det, &init, &cfg, grid, |_, s| {
        let peak = s.activator.iter().copied().fold(f64::MIN, f64::max);
        if best.as_ref().is_none_or(|(b, _)| peak > *b) {
            best = Some((peak, s.clone()));
        }
        ControlFlow::Continue(())
    })?;
    let (_, state) = best.expect("observer sees the initial state");
    let m = grid.len();
    let half = m / 2;
    let rotate = |v: &[f64]| (0..m).map(|i| v[(i + half) % m]).collect::<Vec<f64>>();
    FieldPair::new(rotate(&state.activator), rotate(&state.inhibitor), 0.0)
}

/// Settings shared by all replicates of a repolarisation sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RepolSetup {
    pub length: f64,
    pub points: usize,
    /// Paths are followed (and checked for negativity) up to this time. The
    /// discard fraction grows with it.
    pub horizon: f64,
    pub max_dt: f64,
    pub scheme: Scheme,
    /// Steps between repolarisation checks.
    pub check_every: usize,
    pub gamma: f64,
    pub initial: InitialProfile,
}

impl Default for RepolSetup {
    fn default() -> Self {
        Self {
            length: 20.0,
            points: 500,
            horizon: 80.0,
            max_dt: 0.01,
            scheme: Scheme::SemiImplicitDiffusion,
            check_every: 10,
            gamma: 1.2,
            initial: InitialProfile::Polarised,
        }
    }
}

impl RepolSetup {
    pub fn paper_scale() -> Self {
        Self { points: 2000, max_dt: 0.0025, check_every: 40, ..Self::default() }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.length, self.points)
    }

    fn solver_config(&self, seed: u64, stream: u64) -> SolverConfig {
        SolverConfig::with_max_dt(self.horizon, self.max_dt, self.scheme).seed(seed).stream(stream)
    }
}

/// Runs one path over the full horizon and reports the first checked time
/// with `mu_F >= gamma mu_R`. A path that goes negative anywhere on
/// `[0, T]` is discarded, as a recorded trajectory would be; the run stops at
/// the first negative state.
pub fn run_repolarisation(
    params: &ModelParams,
    init: &FieldPair,
    setup: &RepolSetup,
    seed: u64,
    stream: u64,
) -> Result<RepolOutcome> {
    check_gamma(setup.gamma)?;
    let grid = setup.grid()?;
    let cfg = setup.solver_config(seed, stream);
    let every = setup.check_every.max(1);
    let mut tau = None;
    let mut check_err = None;
    let summary = simulate_observed(params, init, &cfg, &grid, |n, s| {
        if s.has_negative() {
            return ControlFlow::Break(());
        }
        if tau.is_none() && (n % every == 0 || n == cfg.n_steps) {
            match is_repolarised(&s.activator, &grid, setup.gamma) {
                Ok(true) => tau = Some(s.time),
                Ok(false) => {}
                Err(e) => {
                    check_err = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    })?;
    if let Some(e) = check_err {
        return Err(e);
    }
    Ok(match (summary.went_negative, tau) {
        (true, _) => RepolOutcome::Discarded,
        (false, Some(t)) => RepolOutcome::Repolarised(t),
        (false, None) => RepolOutcome::Never,
    })
}

/// Quartiles and Tukey whiskers (furthest samples within 1.5 IQR).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BoxplotSummary {
    pub whisker_low: f64,
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    pub whisker_high: f64,
}

pub fn boxplot_summary(samples: &[f64]) -> Option<BoxplotSummary> {
    if samples.is_empty() {
        return None;
    }
    let mut data = Data::new(samples.to_vec());
    let (q1, median, q3) = (data.lower_quartile(), data.median(), data.upper_quartile());
    let iqr = q3 - q1;
    let (lo_fence, hi_fence) = (q1 - 1.5 * iqr, q3 + 1.5 * iqr);
    let whisker_low = samples.iter().copied().filter(|&v| v >= lo_fence).fold(f64::INFINITY, f64::min);
    let whisker_high = samples.iter().copied().filter(|&v| v <= hi_fence).fold(f64::NEG_INFINITY, f64::max);
    Some(BoxplotSummary { whisker_low, q1, median, q3, whisker_high })
}

/// Repolarisation times at one noise level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepolStats {
    pub sigma: f64,
    pub gamma: f64,
    pub tau_samples: Vec<f64>,
    pub n_discarded_negative: usize,
    pub n_never: usize,
}

impl RepolStats {
    pub fn from_outcomes(sigma: f64, gamma: f64, outcomes: &[RepolOutcome]) -> Self {
        let mut stats = Self { sigma, gamma, tau_samples: Vec::new(), n_discarded_negative: 0, n_never: 0 };
        for o in outcomes {
            match *o {
                RepolOutcome::Repolarised(t) => stats.tau_samples.push(t),
                RepolOutcome::Never => stats.n_never += 1,
                RepolOutcome::Discarded => stats.n_discarded_negative += 1,
            }
        }
        stats
    }

    pub fn replicates(&self) -> usize {
        self.tau_samples.len() + self.n_discarded_negative + self.n_never
    }

    pub fn discard_fraction(&self) -> f64 {
        self.n_discarded_negative as f64 / self.replicates().max(1) as f64
    }

    pub fn mean(&self) -> Option<f64> {
        (!self.tau_samples.is_empty()).then(|| self.tau_samples.iter().sum::<f64>() / self.tau_samples.len() as f64)
    }

    /// Sample variance; `None` below two samples.
    pub fn variance(&self) -> Option<f64> {
        Data::new(self.tau_samples.clone()).variance().filter(|v| v.is_finite())
    }

    pub fn std_error(&self) -> Option<f64> {
        self.variance().map(|v| (v / self.tau_samples.len() as f64).sqrt())
    }

    pub fn boxplot(&self) -> Option<BoxplotSummary> {
        boxplot_summary(&self.tau_samples)
    }
}

fn thread_pool(workers: Option<usize>) -> Result<rayon::ThreadPool> {
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(n) = workers {
        builder = builder.num_threads(n.max(1));
    }
    builder.build().map_err(|e| Error::InvalidParameter(format!("cannot start worker pool: {e}")))
}

/// Repolarisation times for each `sigma_A` in `sigma_grid`. Replicate `r` at
/// grid index `i` uses RNG stream `i * replicates + r` of `seed`.
pub fn repol_sweep(
    params_base: &ModelParams,
    sigma_grid: &[f64],
    replicates: usize,
    setup: &RepolSetup,
    seed: u64,
    workers: Option<usize>,
) -> Result<Vec<RepolStats>> {
    if replicates == 0 {
        return Err(Error::InvalidParameter("need at least one replicate".into()));
    }
    check_gamma(setup.gamma)?;
    let grid = setup.grid()?;
    let init = setup.initial.build(&grid, params_base)?;
    let pool = thread_pool(workers)?;
    sigma_grid
        .iter()
        .enumerate()
        .map(|(i, &sigma)| {
            let params = params_base.with_sigma_a(sigma);
            let outcomes: Vec<RepolOutcome> = pool.install(|| {
                (0..replicates)
                    .into_par_iter()
                    .map(|r| run_repolarisation(&params, &init, setup, seed, (i * replicates + r) as u64))
                    .collect::<Result<_>>()
            })?;
            let stats = RepolStats::from_outcomes(sigma, setup.gamma, &outcomes);
            log::info!(
                "sigma_A = {sigma}: mean tau = {:?}, discarded {}, never {}",
                stats.mean(),
                stats.n_discarded_negative,
                stats.n_never
            );
            Ok(stats)
        })
        .collect()
}

/// Number of maximal periodic runs where the activator exceeds
/// `threshold_fraction * max(A)`.
pub fn count_fronts(activator: &[f64], threshold_fraction: f64) -> Result<usize> {
    if !(threshold_fraction > 0.0 && threshold_fraction < 1.0) {
        return Err(Error::InvalidParameter(format!(
            "threshold fraction must lie in (0, 1), got {threshold_fraction}"
        )));
    }
    let peak = activator.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if activator.is_empty() || !(peak > 0.0) {
        return Ok(0);
    }
    let level = threshold_fraction * peak;
    let above: Vec<bool> = activator.iter().map(|&a| a > level).collect();
    let m = above.len();
    let starts = (0..m).filter(|&i| above[i] && !above[(i + m - 1) % m]).count();
    Ok(if starts == 0 && above[0] { 1 } else { starts })
}

/// Default threshold for [`count_fronts`].
pub const FRONT_THRESHOLD: f64 = 0.5;

/// Front counts sampled every `sample_every` time units of a run.
pub fn front_history(
    params: &ModelParams,
    init: &FieldPair,
    grid: &TorusGrid,
    config: &SolverConfig,
    sample_every: f64,
    threshold_fraction: f64,
) -> Result<Vec<(f64, usize)>> {
    let stride = ((sample_every / config.dt()).round() as usize).max(1);
    let mut out = Vec::new();
    let mut err = None;
    simulate_observed(params, init, config, grid, |n, s| {
        if n % stride == 0 {
            match count_fronts(&s.activator, threshold_fraction) {
                Ok(c) => out.push((s.time, c)),
                Err(e) => {
                    err = Some(e);
                    return ControlFlow::Break(());
                }
            }
        }
        ControlFlow::Continue(())
    })?;
    match err {
        Some(e) => Err(e),
        None => Ok(out),
    }
}

/// Channel-count rule across resolutions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum MPolicy {
    Fixed(usize),
    /// `M(delta) = floor(L / (2 delta))`
    Scaled,
}

impl MPolicy {
    pub fn channels(self, delta: f64, length: f64) -> Result<usize> {
        let m = match self {
            MPolicy::Fixed(m) => m,
            MPolicy::Scaled => (length / (2.0 * delta) * (1.0 + 1e-12)).floor() as usize,
        };
        if m == 0 {
            return Err(Error::InvalidParameter(format!("no channel fits at delta = {delta}")));
        }
        Ok(m)
    }

    pub fn label(self) -> String {
        match self {
            MPolicy::Fixed(m) => format!("fixed-{m}"),
            MPolicy::Scaled => "scaled".into(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scenario {
    /// `f_A = 0`, zero initial value.
    LinearZeroInit,
    /// Full reaction terms from the polarised start.
    FullMeinhardt,
}

/// Discretisation of the simulated paths in an estimation campaign.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimulationSpec {
    pub length: f64,
    pub points: usize,
    pub horizon: f64,
    pub n_steps: usize,
    /// Solver steps per observation frame.
    pub observe_every: usize,
    pub scheme: Scheme,
}

impl SimulationSpec {
    /// Desk scale: `m = 1200` keeps at least 20 cells per kernel half-width
    /// at `delta = 0.017 L`; explicit steps keep the Itô sums free of
    /// implicit smoothing. Frames every 0.003 time units (`N = 10^4`).
    pub fn desk(scenario: Scenario) -> Self {
        let (n_steps, observe_every) = match scenario {
            Scenario::LinearZeroInit => (10_000, 1),
            Scenario::FullMeinhardt => (30_000, 3),
        };
        Self {
            length: 20.0,
            points: 1200,
            horizon: 30.0,
            n_steps,
            observe_every,
            scheme: Scheme::ExplicitEulerMaruyama,
        }
    }

    /// `m = 2000`, `n = m^2 / 4`, `N = n / 100`.
    pub fn paper_scale() -> Self {
        Self {
            length: 20.0,
            points: 2000,
            horizon: 30.0,
            n_steps: 1_000_000,
            observe_every: 100,
            scheme: Scheme::ExplicitEulerMaruyama,
        }
    }

    pub fn grid(&self) -> Result<TorusGrid> {
        TorusGrid::new(self.length, self.points)
    }
}

/// One Monte Carlo estimation study.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct McCampaign {
    pub replicates: usize,
    pub master_seed: u64,
    /// Absolute resolutions `delta`.
    pub delta_grid: Vec<f64>,
    pub policy: MPolicy,
    pub scenario: Scenario,
    pub alphas: Vec<f64>,
    pub params: ModelParams,
    pub sim: SimulationSpec,
}

impl McCampaign {
    /// Resolutions `{0.017, 0.025, 0.05, 0.1} L`.
    pub fn standard_deltas(length: f64) -> Vec<f64> {
        [0.017, 0.025, 0.05, 0.1].iter().map(|f| f * length).collect()
    }

    pub fn new(scenario: Scenario, policy: MPolicy, replicates: usize, master_seed: u64) -> Self {
        let sim = SimulationSpec::desk(scenario);
        Self {
            replicates,
            master_seed,
            delta_grid: Self::standard_deltas(sim.length),
            policy,
            scenario,
            alphas: vec![0.1, 0.05],
            params: ModelParams::default(),
            sim,
        }
    }

    pub fn layouts(&self) -> Result<Vec<MeasurementLayout>> {
        self.delta_grid
            .iter()
            .map(|&d| MeasurementLayout::regular(self.policy.channels(d, self.sim.length)?, d, self.sim.length))
            .collect()
    }

    fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::InvalidParameter("need at least one replicate".into()));
        }
        if self.delta_grid.is_empty() {
            return Err(Error::InvalidParameter("empty delta grid".into()));
        }
        for &a in &self.alphas {
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {a}")));
            }
        }
        if self.sim.observe_every == 0 || self.sim.n_steps % self.sim.observe_every != 0 {
            return Err(Error::InvalidParameter("observe_every must divide n_steps".into()));
        }
        Ok(())
    }

    fn shares_paths_with(&self, other: &McCampaign) -> bool {
        self.replicates == other.replicates
            && self.master_seed == other.master_seed
            && self.scenario == other.scenario
            && self.params == other.params
            && self.sim == other.sim
    }

    fn solver_config(&self, stream: u64) -> SolverConfig {
        let reaction = match self.scenario {
            Scenario::LinearZeroInit => Reaction::Linear,
            Scenario::FullMeinhardt => Reaction::Meinhardt,
        };
        SolverConfig::new(self.sim.horizon, self.sim.n_steps, self.sim.scheme)
            .seed(self.master_seed)
            .stream(stream)
            .reaction(reaction)
            .record_stride(self.sim.observe_every)
    }
}

/// Estimation outcome of one replicate at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub d_hat: f64,
    pub fisher_info: f64,
    pub realized_variation: f64,
    /// Plug-in half-width per alpha; `None` when `d_hat < 0`.
    pub plugin_half_widths: Vec<Option<f64>>,
    /// Data-driven half-width per alpha, with `sigma_A` known.
    pub datadriven_half_widths: Vec<f64>,
    pub spectral_d_hat: Option<f64>,
    pub went_negative: bool,
}

impl ReplicateRecord {
    pub fn plugin_covers(&self, alpha_index: usize, truth: f64) -> bool {
        self.plugin_half_widths[alpha_index].is_some_and(|h| (self.d_hat - truth).abs() <= h)
    }

    pub fn datadriven_covers(&self, alpha_index: usize, truth: f64) -> bool {
        (self.d_hat - truth).abs() <= self.datadriven_half_widths[alpha_index]
    }
}

/// Aggregates at one resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DeltaSummary {
    pub delta: f64,
    pub channels: usize,
    pub n: usize,
    pub rmse: f64,
    pub mean: f64,
    pub std_dev: f64,
    /// Plug-in interval coverage per alpha.
    pub coverage_plugin: Vec<f64>,
    pub coverage_datadriven: Vec<f64>,
    /// Mean full width of the plug-in interval per alpha.
    pub mean_width_plugin: Vec<f64>,
    pub mean_width_datadriven: Vec<f64>,
    pub mean_fisher_info: f64,
    pub spectral_rmse: Option<f64>,
    pub n_negative_paths: usize,
}

fn summarize(delta: f64, channels: usize, records: &[ReplicateRecord], truth: f64, n_alpha: usize) -> DeltaSummary {
    let n = records.len();
    let nf = n as f64;
    let mean = records.iter().map(|r| r.d_hat).sum::<f64>() / nf;
    let rmse = (records.iter().map(|r| (r.d_hat - truth).powi(2)).sum::<f64>() / nf).sqrt();
    let std_dev =
        if n > 1 { (records.iter().map(|r| (r.d_hat - mean).powi(2)).sum::<f64>() / (nf - 1.0)).sqrt() } else { 0.0 };
    let frac = |f: &dyn Fn(&ReplicateRecord) -> bool| records.iter().filter(|r| f(r)).count() as f64 / nf;
    let coverage_plugin = (0..n_alpha).map(|a| frac(&|r| r.plugin_covers(a, truth))).collect();
    let coverage_datadriven = (0..n_alpha).map(|a| frac(&|r| r.datadriven_covers(a, truth))).collect();
    let mean_width_plugin = (0..n_alpha)
        .map(|a| {
            let w: Vec<f64> = records.iter().filter_map(|r| r.plugin_half_widths[a]).collect();
            2.0 * w.iter().sum::<f64>() / w.len().max(1) as f64
        })
        .collect();
    let mean_width_datadriven =
        (0..n_alpha).map(|a| 2.0 * records.iter().map(|r| r.datadriven_half_widths[a]).sum::<f64>() / nf).collect();
    let spectral: Vec<f64> = records.iter().filter_map(|r| r.spectral_d_hat).collect();
    let spectral_rmse =
        (spectral.len() == n && n > 0).then(|| (spectral.iter().map(|d| (d - truth).powi(2)).sum::<f64>() / nf).sqrt());
    DeltaSummary {
        delta,
        channels,
        n,
        rmse,
        mean,
        std_dev,
        coverage_plugin,
        coverage_datadriven,
        mean_width_plugin,
        mean_width_datadriven,
        mean_fisher_info: records.iter().map(|r| r.fisher_info).sum::<f64>() / nf,
        spectral_rmse,
        n_negative_paths: records.iter().filter(|r| r.went_negative).count(),
    }
}

/// Results of one campaign.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignResults {
    pub campaign: McCampaign,
    pub per_delta: Vec<DeltaSummary>,
    /// Fitted log-log slope of RMSE against `delta` (needs two or more
    /// resolutions).
    pub rmse_slope: Option<f64>,
    /// `records[d][r]`: replicate `r` at resolution index `d`.
    pub records: Vec<Vec<ReplicateRecord>>,
}

impl CampaignResults {
    /// `delta^{-1} (D_hat - D_A) (M T / (D_A Sigma))^{1/2}` at resolution
    /// index `d`; asymptotically standard normal.
    pub fn normalized_errors(&self, d: usize, kernel: &Kernel) -> Vec<f64> {
        let s = &self.per_delta[d];
        let truth = self.campaign.params.D_A;
        let scale = (s.channels as f64 * self.campaign.sim.horizon / (truth * kernel.sigma())).sqrt() / s.delta;
        self.records[d].iter().map(|r| (r.d_hat - truth) * scale).collect()
    }
}

/// Runs a single campaign.
pub fn estimation_campaign(campaign: &McCampaign, kernel: &Kernel, workers: Option<usize>) -> Result<CampaignResults> {
    let mut out = estimation_campaigns(std::slice::from_ref(campaign), kernel, workers)?;
    Ok(out.pop().expect("one campaign in, one result out"))
}

/// Runs several campaigns that differ only in resolutions, channel policy or
/// confidence levels on one shared set of simulated paths.
pub fn estimation_campaigns(
    campaigns: &[McCampaign],
    kernel: &Kernel,
    workers: Option<usize>,
) -> Result<Vec<CampaignResults>> {
    let Some(first) = campaigns.first() else {
        return Ok(Vec::new());
    };
    for c in campaigns {
        c.validate()?;
        if !c.shares_paths_with(first) {
            return Err(Error::InvalidParameter(
                "campaigns sharing paths must agree on replicates, seed, scenario, params and discretisation".into(),
            ));
        }
    }
    let grid = first.sim.grid()?;
    let layouts: Vec<Vec<MeasurementLayout>> = campaigns.iter().map(McCampaign::layouts).collect::<Result<_>>()?;
    let init = match first.scenario {
        Scenario::LinearZeroInit => FieldPair::zeros(grid.len()),
        Scenario::FullMeinhardt => polarised_initial_condition(&grid, &first.params)?,
    };
    let flat: Vec<(usize, usize)> =
        layouts.iter().enumerate().flat_map(|(c, ls)| (0..ls.len()).map(move |d| (c, d))).collect();

    let pool = thread_pool(workers)?;
    let per_replicate: Vec<Vec<ReplicateRecord>> = pool.install(|| {
        (0..first.replicates)
            .into_par_iter()
            .map(|r| {
                let mut recorders = flat
                    .iter()
                    .map(|&(c, d)| MeasurementRecorder::new(layouts[c][d].clone(), kernel, &grid))
                    .collect::<Result<Vec<_>>>()?;
                let cfg = first.solver_config(r as u64);
                let every = first.sim.observe_every;
                let mut rec_err = None;
                let summary = simulate_observed(&first.params, &init, &cfg, &grid, |n, s| {
                    if n % every == 0 {
                        for rec in recorders.iter_mut() {
                            if let Err(e) = rec.record(s.time, &s.activator) {
                                rec_err = Some(e);
                                return ControlFlow::Break(());
                            }
                        }
                    }
                    ControlFlow::Continue(())
                })?;
                if let Some(e) = rec_err {
                    return Err(e);
                }
                flat.iter()
                    .zip(recorders)
                    .map(|(&(c, _), rec)| {
                        let ms = rec.finish()?;
                        let camp = &campaigns[c];
                        let fit = augmented_mle(&ms)?;
                        let inputs = IntervalInputs {
                            channels: ms.channels(),
                            horizon: ms.horizon(),
                            delta: Some(ms.delta()),
                            norm_k: kernel.norm_k(),
                            kernel_sigma: kernel.sigma(),
                            realized_variation: realized_variation(&ms)?,
                        };
                        let mut plugin = Vec::new();
                        let mut datadriven = Vec::new();
                        for &alpha in &camp.alphas {
                            let rep = intervals_from_parts(&fit, inputs, Some(camp.params.sigma_A), alpha)?;
                            plugin.push(rep.plugin_half_width());
                            datadriven.push(rep.datadriven_half_width());
                        }
                        let modes = default_spectral_modes(ms.channels());
                        let spectral_d_hat = if modes >= 1 && 2 * modes < ms.channels() {
                            spectral_mle(&ms.a_loc, &ms.layout, &ms.times, modes).ok()
                        } else {
                            None
                        };
                        Ok(ReplicateRecord {
                            d_hat: fit.d_hat,
                            fisher_info: fit.fisher_info,
                            realized_variation: inputs.realized_variation,
                            plugin_half_widths: plugin,
                            datadriven_half_widths: datadriven,
                            spectral_d_hat,
                            went_negative: summary.went_negative,
                        })
                    })
                    .collect::<Result<Vec<_>>>()
            })
            .collect::<Result<Vec<_>>>()
    })?;

    let mut results = Vec::with_capacity(campaigns.len());
    let mut offset = 0;
    for (c, camp) in campaigns.iter().enumerate() {
        let n_delta = layouts[c].len();
        let records: Vec<Vec<ReplicateRecord>> =
            (0..n_delta).map(|d| per_replicate.iter().map(|row| row[offset + d].clone()).collect()).collect();
        offset += n_delta;
        let per_delta: Vec<DeltaSummary> = records
            .iter()
            .zip(&layouts[c])
            .map(|(recs, lay)| summarize(lay.delta, lay.channels(), recs, camp.params.D_A, camp.alphas.len()))
            .collect();
        let rmse_slope = if per_delta.len() >= 2 {
            let xs: Vec<f64> = per_delta.iter().map(|s| s.delta).collect();
            let ys: Vec<f64> = per_delta.iter().map(|s| s.rmse).collect();
            loglog_slope(&xs, &ys).ok().map(|(slope, _)| slope)
        } else {
            None
        };
        results.push(CampaignResults { campaign: camp.clone(), per_delta, rmse_slope, records });
    }
    Ok(results)
}

/// Least-squares fit `log y = intercept + slope log x`; returns
/// `(slope, intercept)`.
pub fn loglog_slope(xs: &[f64], ys: &[f64]) -> Result<(f64, f64)> {
    if xs.len() != ys.len() {
        return Err(Error::LengthMismatch { expected: xs.len(), found: ys.len() });
    }
    if xs.len() < 2 {
        return Err(Error::InsufficientData("slope fit needs two points".into()));
    }
    if xs.iter().chain(ys).any(|v| !(*v > 0.0)) {
        return Err(Error::InvalidParameter("log-log fit needs positive values".into()));
    }
    let lx: Vec<f64> = xs.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = ys.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxx: f64 = lx.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::DegenerateData("all x values coincide".into()));
    }
    let sxy: f64 = lx.iter().zip(&ly).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    Ok((slope, my - slope * mx))
}

/// Jarque–Bera normality test; returns `(statistic, p_value)` from the
/// asymptotic chi-square law with two degrees of freedom.
pub fn jarque_bera(samples: &[f64]) -> Result<(f64, f64)> {
    let n = samples.len();
    if n < 8 {
        return Err(Error::InsufficientData(format!("normality test needs at least 8 samples, got {n}")));
    }
    let nf = n as f64;
    let mean = samples.iter().sum::<f64>() / nf;
    let m2 = samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / nf;
    if m2 == 0.0 {
        return Err(Error::DegenerateData("constant sample".into()));
    }
    let m3 = samples.iter().map(|v| (v - mean).powi(3)).sum::<f64>() / nf;
    let m4 = samples.iter().map(|v| (v - mean).powi(4)).sum::<f64>() / nf;
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let stat = nf / 6.0 * (skew * skew + 0.25 * (kurt - 3.0).powi(2));
    // chi-square survival function with 2 degrees of freedom
    Ok((stat, (-0.5 * stat).exp()))
}

/// Mean and unbiased standard deviation.
pub fn mean_std(samples: &[f64]) -> (f64, f64) {
    let data = Data::new(samples.to_vec());
    (data.mean().unwrap_or(f64::NAN), data.std_dev().unwrap_or(f64::NAN))
}
