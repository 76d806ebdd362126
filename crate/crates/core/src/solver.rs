//! Finite-difference integration of the coupled system with space-time white
//! noise.
//!
//! Noise enters per step as cell-averaged increments `N(0, dt/dx)`, so that
//! `dx * sum_i xi_i phi(x_i)` has variance `dt * ||phi||^2` in the limit.

use std::ops::ControlFlow;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::domain::TorusGrid;
use crate::error::{Error, Result};
use crate::model::{FieldPair, ModelParams};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Scheme {
    ExplicitEulerMaruyama,
    /// Implicit diffusion, explicit reaction and noise.
    #[default]
    SemiImplicitDiffusion,
}

/// Which reaction terms drive the system.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Reaction {
    #[default]
    Meinhardt,
    /// `f_A = f_I = 0`: two decoupled stochastic heat equations.
    Linear,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolverConfig {
    /// Time horizon `T`.
    pub horizon: f64,
    pub n_steps: usize,
    pub scheme: Scheme,
    pub seed: u64,
    /// RNG stream, normally the replicate index.
    #[serde(default)]
    pub stream: u64,
    pub record_stride: usize,
    #[serde(default)]
    pub reaction: Reaction,
}

impl SolverConfig {
    pub fn new(horizon: f64, n_steps: usize, scheme: Scheme) -> Self {
        Self { horizon, n_steps, scheme, seed: 0, stream: 0, record_stride: 1, reaction: Reaction::Meinhardt }
    }

    /// Picks the step count so that `dt <= max_dt`.
    pub fn with_max_dt(horizon: f64, max_dt: f64, scheme: Scheme) -> Self {
        let n = (horizon / max_dt).ceil().max(1.0) as usize;
        Self::new(horizon, n, scheme)
    }

    pub fn seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn stream(mut self, stream: u64) -> Self {
        self.stream = stream;
        self
    }

    pub fn record_stride(mut self, stride: usize) -> Self {
        self.record_stride = stride;
        self
    }

    pub fn reaction(mut self, reaction: Reaction) -> Self {
        self.reaction = reaction;
        self
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Largest stable explicit step, `dx^2 / (2 max(D_A, D_I))`.
    pub fn cfl_limit(params: &ModelParams, grid: &TorusGrid) -> f64 {
        grid.dx() * grid.dx() / (2.0 * params.D_A.max(params.D_I))
    }

    /// Step limit for this configuration. A noiseless linear inhibitor is
    /// only integrated when it starts nonzero, which [`Stepper`] checks, so
    /// here only the activator constrains the step.
    fn effective_cfl_limit(&self, params: &ModelParams, grid: &TorusGrid) -> f64 {
        if self.reaction == Reaction::Linear && params.sigma_I == 0.0 {
            grid.dx() * grid.dx() / (2.0 * params.D_A)
        } else {
            Self::cfl_limit(params, grid)
        }
    }

    pub fn validate(&self, params: &ModelParams, grid: &TorusGrid) -> Result<()> {
        if !(self.horizon.is_finite() && self.horizon > 0.0) {
            return Err(Error::InvalidParameter(format!("horizon must be positive, got {}", self.horizon)));
        }
        if self.n_steps == 0 || self.record_stride == 0 {
            return Err(Error::InvalidParameter("n_steps and record_stride must be positive".into()));
        }
        if self.scheme == Scheme::ExplicitEulerMaruyama {
            let limit = self.effective_cfl_limit(params, grid);
            // tolerate round-off from dt = T / n
            if self.dt() > limit * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt: self.dt(), limit });
            }
        }
        Ok(())
    }

    pub fn rng(&self) -> ChaCha8Rng {
        noise_rng(self.seed, self.stream)
    }
}

/// Independent generator for `(master_seed, stream)`.
pub fn noise_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

/// I.i.d. `N(0, dt/dx)` cell increments of space-time white noise.
pub fn white_noise_increment<R: Rng + ?Sized>(grid: &TorusGrid, dt: f64, rng: &mut R) -> Vec<f64> {
    let mut out = vec![0.0; grid.len()];
    fill_white_noise(&mut out, (dt / grid.dx()).sqrt(), rng);
    out
}

fn fill_white_noise<R: Rng + ?Sized>(buf: &mut [f64], scale: f64, rng: &mut R) {
    for v in buf {
        let z: f64 = rng.sample(StandardNormal);
        *v = scale * z;
    }
}

/// Periodic second central difference.
pub fn laplacian(values: &[f64], grid: &TorusGrid) -> Result<Vec<f64>> {
    grid.check_len(values.len())?;
    let mut out = vec![0.0; values.len()];
    laplacian_into(values, 1.0 / (grid.dx() * grid.dx()), &mut out);
    Ok(out)
}

fn laplacian_into(v: &[f64], inv_dx2: f64, out: &mut [f64]) {
    let m = v.len();
    if m == 1 {
        out[0] = 0.0;
        return;
    }
    out[0] = (v[m - 1] - 2.0 * v[0] + v[1]) * inv_dx2;
    for i in 1..m - 1 {
        out[i] = (v[i - 1] - 2.0 * v[i] + v[i + 1]) * inv_dx2;
    }
    out[m - 1] = (v[m - 2] - 2.0 * v[m - 1] + v[0]) * inv_dx2;
}

/// Solver for the circulant system `(1 + 2r) x_i - r (x_{i-1} + x_{i+1}) = b_i`,
/// i.e. `(Id - dt D Δ_h) x = b`, via Thomas elimination plus a Sherman–Morrison
/// correction for the two corner entries.
#[derive(Debug, Clone)]
struct CyclicTridiagonal {
    r: f64,
    /// Modified superdiagonal of the reduced (non-cyclic) system.
    c_prime: Vec<f64>,
    /// Reciprocal pivots.
    inv_pivot: Vec<f64>,
    z: Vec<f64>,
    /// `1 / (1 + v . z)`
    correction: f64,
    gamma: f64,
    scratch: Vec<f64>,
}

impl CyclicTridiagonal {
    fn new(m: usize, r: f64) -> Self {
        let diag = 1.0 + 2.0 * r;
        let off = -r;
        let mut this = Self {
            r,
            c_prime: vec![0.0; m],
            inv_pivot: vec![0.0; m],
            z: vec![0.0; m],
            correction: 0.0,
            gamma: 0.0,
            scratch: vec![0.0; m],
        };
        if m < 3 {
            return this;
        }
        // Sherman–Morrison with u = (gamma, 0, .., off), v = (1, 0, .., off / gamma)
        let gamma = -diag;
        this.gamma = gamma;
        let mut b = vec![diag; m];
        b[0] = diag - gamma;
        b[m - 1] = diag - off * off / gamma;
        let mut denom = b[0];
        this.inv_pivot[0] = 1.0 / denom;
        this.c_prime[0] = off / denom;
        for i in 1..m {
            denom = b[i] - off * this.c_prime[i - 1];
            this.inv_pivot[i] = 1.0 / denom;
            this.c_prime[i] = off / denom;
        }
        let mut u = vec![0.0; m];
        u[0] = gamma;
        u[m - 1] = off;
        let mut z = vec![0.0; m];
        this.thomas(&u, &mut z);
        let vz = z[0] + off / gamma * z[m - 1];
        this.correction = 1.0 / (1.0 + vz);
        this.z = z;
        this
    }

    fn thomas(&self, rhs: &[f64], out: &mut [f64]) {
        let m = rhs.len();
        let off = -self.r;
        out[0] = rhs[0] * self.inv_pivot[0];
        for i in 1..m {
            out[i] = (rhs[i] - off * out[i - 1]) * self.inv_pivot[i];
        }
        for i in (0..m - 1).rev() {
            out[i] -= self.c_prime[i] * out[i + 1];
        }
    }

    /// Solves in place.
    fn solve(&mut self, x: &mut [f64]) {
        let m = x.len();
        match m {
            1 => return,
            2 => {
                // (1 + 2r) x0 - 2r x1 = b0, symmetric
                let (a, o) = (1.0 + 2.0 * self.r, -2.0 * self.r);
                let det = a * a - o * o;
                let (b0, b1) = (x[0], x[1]);
                x[0] = (a * b0 - o * b1) / det;
                x[1] = (a * b1 - o * b0) / det;
                return;
            }
            _ => {}
        }
        let mut y = std::mem::take(&mut self.scratch);
        self.thomas(x, &mut y);
        let off = -self.r;
        let vy = y[0] + off / self.gamma * y[m - 1];
        let f = vy * self.correction;
        for ((xi, yi), zi) in x.iter_mut().zip(&y).zip(&self.z) {
            *xi = yi - f * zi;
        }
        self.scratch = y;
    }
}

/// Reusable single-step integrator holding scratch buffers and precomputed
/// signal values.
#[derive(Debug, Clone)]
pub struct Stepper {
    grid: TorusGrid,
    params: ModelParams,
    config: SolverConfig,
    zeta: Vec<f64>,
    lap_a: Vec<f64>,
    lap_i: Vec<f64>,
    noise_a: Vec<f64>,
    noise_i: Vec<f64>,
    implicit_a: Option<CyclicTridiagonal>,
    implicit_i: Option<CyclicTridiagonal>,
    evolve_inhibitor: bool,
}

impl Stepper {
    pub fn new(params: &ModelParams, config: &SolverConfig, grid: &TorusGrid) -> Result<Self> {
        params.validate()?;
        config.validate(params, grid)?;
        let m = grid.len();
        let dt = config.dt();
        let inv_dx2 = 1.0 / (grid.dx() * grid.dx());
        let (implicit_a, implicit_i) = match config.scheme {
            Scheme::SemiImplicitDiffusion => (
                Some(CyclicTridiagonal::new(m, dt * params.D_A * inv_dx2)),
                Some(CyclicTridiagonal::new(m, dt * params.D_I * inv_dx2)),
            ),
            Scheme::ExplicitEulerMaruyama => (None, None),
        };
        Ok(Self {
            grid: *grid,
            params: *params,
            config: *config,
            zeta: params.signal_on(grid),
            lap_a: vec![0.0; m],
            lap_i: vec![0.0; m],
            noise_a: vec![0.0; m],
            noise_i: vec![0.0; m],
            implicit_a,
            implicit_i,
            // a decoupled linear inhibitor past its own step limit is frozen
            // until `prepare` sees a state that needs it
            evolve_inhibitor: config.reaction != Reaction::Linear
                || config.scheme == Scheme::SemiImplicitDiffusion
                || dt <= SolverConfig::cfl_limit(params, grid) * (1.0 + 1e-12),
        })
    }

    pub fn grid(&self) -> &TorusGrid {
        &self.grid
    }

    pub fn dt(&self) -> f64 {
        self.config.dt()
    }

    /// In the linear model a noiseless inhibitor that starts at zero stays
    /// zero and does not feed back, so its update can be skipped.
    /// Call before stepping a new initial state.
    pub fn prepare(&mut self, state: &FieldPair) -> Result<()> {
        self.evolve_inhibitor = !(self.config.reaction == Reaction::Linear
            && self.params.sigma_I == 0.0
            && state.inhibitor.iter().all(|&v| v == 0.0));
        if self.evolve_inhibitor && self.config.scheme == Scheme::ExplicitEulerMaruyama {
            let limit = SolverConfig::cfl_limit(&self.params, &self.grid);
            if self.dt() > limit * (1.0 + 1e-12) {
                return Err(Error::Cfl { dt: self.dt(), limit });
            }
        }
        Ok(())
    }

    /// Draws fresh noise and advances `state` by one step. Returns whether
    /// the new state has a negative entry.
    pub fn step<R: Rng + ?Sized>(&mut self, state: &mut FieldPair, rng: &mut R) -> Result<bool> {
        let scale = (self.dt() / self.grid.dx()).sqrt();
        let mut noise_a = std::mem::take(&mut self.noise_a);
        let mut noise_i = std::mem::take(&mut self.noise_i);
        fill_white_noise(&mut noise_a, scale, rng);
        if self.params.sigma_I != 0.0 {
            fill_white_noise(&mut noise_i, scale, rng);
        } else {
            noise_i.iter_mut().for_each(|v| *v = 0.0);
        }
        let out = self.step_with_increments(state, &noise_a, &noise_i);
        self.noise_a = noise_a;
        self.noise_i = noise_i;
        out
    }

    /// Advances `state` using caller-supplied white-noise cell increments
    /// (each `N(0, dt/dx)`, unscaled by `sigma`).
    pub fn step_with_increments(&mut self, state: &mut FieldPair, noise_a: &[f64], noise_i: &[f64]) -> Result<bool> {
        self.grid.check_len(noise_a.len())?;
        self.grid.check_len(noise_i.len())?;
        state.check_grid(&self.grid)?;
        let dt = self.dt();
        let p = self.params;
        let inv_dx2 = 1.0 / (self.grid.dx() * self.grid.dx());
        let linear = self.config.reaction == Reaction::Linear;
        let explicit = self.config.scheme == Scheme::ExplicitEulerMaruyama;

        if explicit {
            laplacian_into(&state.activator, inv_dx2, &mut self.lap_a);
            if self.evolve_inhibitor {
                laplacian_into(&state.inhibitor, inv_dx2, &mut self.lap_i);
            }
        }
        let (a, inh) = (&mut state.activator, &mut state.inhibitor);
        let mut bad = false;
        for i in 0..a.len() {
            let (ai, ii) = (a[i], inh[i]);
            let (fa, fi) =
                if linear { (0.0, 0.0) } else { (p.activator_rate(ai, ii, self.zeta[i]), p.inhibitor_rate(ai, ii)) };
            let diff_a = if explicit { p.D_A * self.lap_a[i] } else { 0.0 };
            let new_a = ai + dt * (diff_a + fa) + p.sigma_A * noise_a[i];
            a[i] = new_a;
            bad |= !new_a.is_finite();
            if self.evolve_inhibitor {
                let diff_i = if explicit { p.D_I * self.lap_i[i] } else { 0.0 };
                let new_i = ii + dt * (diff_i + fi) + p.sigma_I * noise_i[i];
                inh[i] = new_i;
                bad |= !new_i.is_finite();
            }
        }
        if let Some(solver) = self.implicit_a.as_mut() {
            solver.solve(a);
        }
        if self.evolve_inhibitor {
            if let Some(solver) = self.implicit_i.as_mut() {
                solver.solve(inh);
            }
        }
        if bad || (!explicit && a.iter().chain(inh.iter()).any(|v| !v.is_finite())) {
            return Err(Error::BlowUp { step: 0, time: state.time });
        }
        let negative = a.iter().chain(inh.iter()).any(|&v| v < 0.0);
        state.set_negative(negative);
        state.time += dt;
        Ok(negative)
    }
}

/// One step of the scheme, returning the new state.
pub fn step<R: Rng + ?Sized>(
    state: &FieldPair,
    params: &ModelParams,
    config: &SolverConfig,
    grid: &TorusGrid,
    rng: &mut R,
) -> Result<FieldPair> {
    let mut stepper = Stepper::new(params, config, grid)?;
    stepper.prepare(state)?;
    let mut next = state.clone();
    stepper.step(&mut next, rng)?;
    Ok(next)
}

/// Recorded solution path.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub grid: TorusGrid,
    pub times: Vec<f64>,
    pub states: Vec<FieldPair>,
    /// Set when any state along the path, recorded or not, went negative.
    pub discarded: bool,
    pub params: ModelParams,
    pub config: SolverConfig,
}

impl Trajectory {
    pub fn final_state(&self) -> &FieldPair {
        self.states.last().expect("trajectory records at least the initial state")
    }

    /// Activator heatmap: one row per recorded time.
    pub fn activator_rows(&self) -> impl Iterator<Item = &[f64]> {
        self.states.iter().map(|s| s.activator.as_slice())
    }
}

/// Outcome of an observed run that does not keep the path.
#[derive(Debug, Clone)]
pub struct RunSummary {
    pub final_state: FieldPair,
    pub steps_taken: usize,
    pub went_negative: bool,
    /// Step at which the state first had a negative entry.
    pub first_negative_step: Option<usize>,
    pub stopped_early: bool,
}

/// Integrates `n_steps` steps, calling `observer(step, state)` for the
/// initial state and after every step. The observer may stop the run early.
pub fn simulate_observed<F>(
    params: &ModelParams,
    init: &FieldPair,
    config: &SolverConfig,
    grid: &TorusGrid,
    mut observer: F,
) -> Result<RunSummary>
where
    F: FnMut(usize, &FieldPair) -> ControlFlow<()>,
{
    init.check_grid(grid)?;
    let mut stepper = Stepper::new(params, config, grid)?;
    stepper.prepare(init)?;
    let mut rng = config.rng();
    let mut state = init.clone();
    state.time = 0.0;
    let mut first_negative = state.refresh_validity().then_some(0);
    let dt = config.dt();
    if observer(0, &state).is_break() {
        return Ok(RunSummary {
            went_negative: first_negative.is_some(),
            first_negative_step: first_negative,
            final_state: state,
            steps_taken: 0,
            stopped_early: true,
        });
    }
    for n in 1..=config.n_steps {
        let negative = stepper.step(&mut state, &mut rng).map_err(|e| match e {
            Error::BlowUp { .. } => Error::BlowUp { step: n, time: n as f64 * dt },
            other => other,
        })?;
        // avoid accumulating round-off in the clock
        state.time = n as f64 * dt;
        if negative && first_negative.is_none() {
            first_negative = Some(n);
        }
        if observer(n, &state).is_break() {
            return Ok(RunSummary {
                went_negative: first_negative.is_some(),
                first_negative_step: first_negative,
                final_state: state,
                steps_taken: n,
                stopped_early: n < config.n_steps,
            });
        }
    }
    Ok(RunSummary {
        went_negative: first_negative.is_some(),
        first_negative_step: first_negative,
        final_state: state,
        steps_taken: config.n_steps,
        stopped_early: false,
    })
}

/// Integrates the system and records every `record_stride`-th state (plus
/// the final one).
pub fn simulate(params: &ModelParams, init: &FieldPair, config: &SolverConfig, grid: &TorusGrid) -> Result<Trajectory> {
    let stride = config.record_stride.max(1);
    let mut times = Vec::with_capacity(config.n_steps / stride + 2);
    let mut states = Vec::with_capacity(config.n_steps / stride + 2);
    let summary = simulate_observed(params, init, config, grid, |n, s| {
        if n % stride == 0 || n == config.n_steps {
            times.push(s.time);
            states.push(s.clone());
        }
        ControlFlow::Continue(())
    })?;
    Ok(Trajectory { grid: *grid, times, states, discarded: summary.went_negative, params: *params, config: *config })
}
