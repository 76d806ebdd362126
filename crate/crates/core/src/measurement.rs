//! Point-spread kernels and the local / Laplacian measurement functionals
//!
//! ```text
//! A_delta(t, x_k)   = <A(t), K_{delta,x_k}>
//! A_delta^Lap(t, x_k) = <A(t), K''_{delta,x_k}>,   K_delta(x) = delta^{-1/2} K(x / delta)
//! ```

use serde::{Deserialize, Serialize};

use crate::domain::TorusGrid;
use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::quadrature::adaptive_simpson;
use crate::solver::Trajectory;

/// Below this many grid cells per kernel half-width the grid quadrature of
/// the measurement functionals is considered unreliable.
pub const MIN_CELLS_PER_DELTA: f64 = 20.0;

const BUMP_STIFFNESS: f64 = 10.0;

/// Shape of the point-spread function on `[-1, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelProfile {
    /// `exp(-10 / (1 - x^2))` on `(-1, 1)`, zero elsewhere.
    Bump,
    Sampled(SampledProfile),
}

/// Uniform table of a profile on `[-1, 1]` with fourth-order finite
/// difference derivative tables.
#[derive(Debug, Clone, PartialEq)]
pub struct SampledProfile {
    h: f64,
    values: Vec<f64>,
    first: Vec<f64>,
    second: Vec<f64>,
}

impl SampledProfile {
    fn new(values: Vec<f64>) -> Result<Self> {
        let n = values.len();
        if n < 21 {
            return Err(Error::InvalidParameter(format!("sampled kernel needs at least 21 samples, got {n}")));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("kernel samples"));
        }
        let peak = values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        if values[0].abs() > 1e-12 * peak || values[n - 1].abs() > 1e-12 * peak {
            return Err(Error::InvalidParameter("kernel profile must vanish at +-1".into()));
        }
        let h = 2.0 / (n - 1) as f64;
        // zero extension outside the support
        let at = |i: isize| if i < 0 || i >= n as isize { 0.0 } else { values[i as usize] };
        let mut first = vec![0.0; n];
        let mut second = vec![0.0; n];
        for i in 0..n as isize {
            let (m2, m1, c, p1, p2) = (at(i - 2), at(i - 1), at(i), at(i + 1), at(i + 2));
            first[i as usize] = (-p2 + 8.0 * p1 - 8.0 * m1 + m2) / (12.0 * h);
            second[i as usize] = (-p2 + 16.0 * p1 - 30.0 * c + 16.0 * m1 - m2) / (12.0 * h * h);
        }
        Ok(Self { h, values, first, second })
    }

    fn interpolate(table: &[f64], h: f64, x: f64) -> f64 {
        if !(-1.0..=1.0).contains(&x) {
            return 0.0;
        }
        let s = (x + 1.0) / h;
        let i = (s.floor() as isize).clamp(0, table.len() as isize - 2);
        let t = s - i as f64;
        let at = |j: isize| if j < 0 || j >= table.len() as isize { 0.0 } else { table[j as usize] };
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        // Catmull–Rom
        0.5 * (2.0 * p1
            + (-p0 + p2) * t
            + (2.0 * p0 - 5.0 * p1 + 4.0 * p2 - p3) * t * t
            + (-p0 + 3.0 * p1 - 3.0 * p2 + p3) * t * t * t)
    }

    fn trapezoid(&self, f: impl Fn(usize) -> f64) -> f64 {
        // endpoints carry (near) zero weight for a compactly supported profile
        let n = self.values.len();
        self.h * ((1..n - 1).map(&f).sum::<f64>() + 0.5 * (f(0) + f(n - 1)))
    }
}

/// Compactly supported point-spread function with its derived norms.
#[derive(Debug, Clone, PartialEq)]
pub struct Kernel {
    name: String,
    profile: KernelProfile,
    oversample_factor: usize,
    norm_k: f64,
    norm_dk: f64,
    sigma: f64,
    integral: f64,
    l1_norm: f64,
}

/// Serializable description of a kernel's summary numbers.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KernelSummary {
    pub name: String,
    pub norm_k: f64,
    pub norm_dk: f64,
    pub sigma: f64,
}

impl Kernel {
    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn profile(&self) -> &KernelProfile {
        &self.profile
    }

    /// Table samples per kernel half-width (one `delta`); zero for analytic
    /// profiles.
    pub fn oversample_factor(&self) -> usize {
        self.oversample_factor
    }

    /// `||K||_{L^2}`
    pub fn norm_k(&self) -> f64 {
        self.norm_k
    }

    /// `||K'||_{L^2}`
    pub fn norm_dk(&self) -> f64 {
        self.norm_dk
    }

    /// `2 ||K||^2 / ||K'||^2`, the kernel factor in the estimator's
    /// asymptotic variance.
    pub fn sigma(&self) -> f64 {
        self.sigma
    }

    /// `int K`
    pub fn integral(&self) -> f64 {
        self.integral
    }

    /// `||K||_{L^1}`
    pub fn l1_norm(&self) -> f64 {
        self.l1_norm
    }

    pub fn summary(&self) -> KernelSummary {
        KernelSummary { name: self.name.clone(), norm_k: self.norm_k, norm_dk: self.norm_dk, sigma: self.sigma }
    }

    pub fn value(&self, x: f64) -> f64 {
        match &self.profile {
            KernelProfile::Bump => bump(x),
            KernelProfile::Sampled(s) => SampledProfile::interpolate(&s.values, s.h, x),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match &self.profile {
            KernelProfile::Bump => {
                let k = bump(x);
                if k == 0.0 {
                    return 0.0;
                }
                let q = 1.0 - x * x;
                k * (-2.0 * BUMP_STIFFNESS * x / (q * q))
            }
            KernelProfile::Sampled(s) => SampledProfile::interpolate(&s.first, s.h, x),
        }
    }

    pub fn second_derivative(&self, x: f64) -> f64 {
        match &self.profile {
            KernelProfile::Bump => {
                let k = bump(x);
                if k == 0.0 {
                    return 0.0;
                }
                let q = 1.0 - x * x;
                let g1 = -2.0 * BUMP_STIFFNESS * x / (q * q);
                let g2 = -2.0 * BUMP_STIFFNESS * (1.0 + 3.0 * x * x) / (q * q * q);
                k * (g1 * g1 + g2)
            }
            KernelProfile::Sampled(s) => SampledProfile::interpolate(&s.second, s.h, x),
        }
    }

    /// Kernel from a uniform table of its profile on `[-1, 1]` (endpoints
    /// included, both zero).
    pub fn from_samples(name: impl Into<String>, samples: Vec<f64>) -> Result<Self> {
        let oversample_factor = (samples.len().saturating_sub(1)) / 2;
        let s = SampledProfile::new(samples)?;
        let norm_k2 = s.trapezoid(|i| s.values[i] * s.values[i]);
        let norm_dk2 = s.trapezoid(|i| s.first[i] * s.first[i]);
        let integral = s.trapezoid(|i| s.values[i]);
        let l1_norm = s.trapezoid(|i| s.values[i].abs());
        Self::assemble(name.into(), KernelProfile::Sampled(s), oversample_factor, norm_k2, norm_dk2, integral, l1_norm)
    }

    fn assemble(
        name: String,
        profile: KernelProfile,
        oversample_factor: usize,
        norm_k2: f64,
        norm_dk2: f64,
        integral: f64,
        l1_norm: f64,
    ) -> Result<Self> {
        if !(norm_dk2 > 0.0) {
            return Err(Error::InvalidParameter("kernel derivative has zero L2 norm".into()));
        }
        Ok(Self {
            name,
            profile,
            oversample_factor,
            norm_k: norm_k2.sqrt(),
            norm_dk: norm_dk2.sqrt(),
            sigma: 2.0 * norm_k2 / norm_dk2,
            integral,
            l1_norm,
        })
    }

    /// `delta^{-1/2} K((x_i - center) / delta)` on the grid, wrapped
    /// periodically.
    pub fn scaled_samples(&self, delta: f64, center: f64, grid: &TorusGrid) -> Result<Vec<f64>> {
        let stencil = Stencil::new(self, delta, center, grid)?;
        let mut out = vec![0.0; grid.len()];
        for (k, (&w, _)) in stencil.loc.iter().zip(&stencil.lap).enumerate() {
            out[(stencil.first + k) % grid.len()] = w;
        }
        Ok(out)
    }

    /// `delta^{-5/2} K''((x_i - center) / delta)` on the grid.
    pub fn scaled_second_derivative_samples(&self, delta: f64, center: f64, grid: &TorusGrid) -> Result<Vec<f64>> {
        let stencil = Stencil::new(self, delta, center, grid)?;
        let mut out = vec![0.0; grid.len()];
        for (k, &w) in stencil.lap.iter().enumerate() {
            out[(stencil.first + k) % grid.len()] = w;
        }
        Ok(out)
    }
}

#[inline]
fn bump(x: f64) -> f64 {
    if x.abs() >= 1.0 {
        return 0.0;
    }
    (-BUMP_STIFFNESS / (1.0 - x * x)).exp()
}

/// The smooth bump `exp(-10 / (1 - x^2))` with norms from adaptive
/// quadrature.
pub fn bump_kernel() -> Kernel {
    let tol = 1e-13;
    let k2 = adaptive_simpson(|x| bump(x).powi(2), -1.0, 1.0, tol);
    let probe = Kernel {
        name: String::new(),
        profile: KernelProfile::Bump,
        oversample_factor: 0,
        norm_k: 0.0,
        norm_dk: 0.0,
        sigma: 0.0,
        integral: 0.0,
        l1_norm: 0.0,
    };
    let dk2 = adaptive_simpson(|x| probe.derivative(x).powi(2), -1.0, 1.0, tol);
    let integral = adaptive_simpson(bump, -1.0, 1.0, tol);
    Kernel::assemble("bump".into(), KernelProfile::Bump, 0, k2, dk2, integral, integral)
        .expect("bump derivative is not identically zero")
}

pub fn scaled_kernel_samples(kernel: &Kernel, delta: f64, center: f64, grid: &TorusGrid) -> Result<Vec<f64>> {
    kernel.scaled_samples(delta, center, grid)
}

/// Kernel and Laplacian-kernel weights on the grid cells inside the support
/// of one channel.
#[derive(Debug, Clone)]
struct Stencil {
    first: usize,
    loc: Vec<f64>,
    lap: Vec<f64>,
}

impl Stencil {
    fn new(kernel: &Kernel, delta: f64, center: f64, grid: &TorusGrid) -> Result<Self> {
        let l = grid.length();
        if !(delta.is_finite() && delta > 0.0) {
            return Err(Error::InvalidParameter(format!("resolution delta must be positive, got {delta}")));
        }
        if delta >= 0.5 * l {
            return Err(Error::KernelWraps { delta, length: l });
        }
        let center = grid.canonicalize(center);
        let dx = grid.dx();
        let lo = ((center - delta) / dx).ceil() as i64;
        let hi = ((center + delta) / dx).floor() as i64;
        let scale_loc = delta.powf(-0.5);
        let scale_lap = delta.powf(-2.5);
        let count = (hi - lo + 1).max(0) as usize;
        let mut loc = Vec::with_capacity(count);
        let mut lap = Vec::with_capacity(count);
        for i in lo..=hi {
            let u = (i as f64 * dx - center) / delta;
            loc.push(scale_loc * kernel.value(u));
            lap.push(scale_lap * kernel.second_derivative(u));
        }
        Ok(Self { first: grid.wrap_index(lo), loc, lap })
    }

    fn dot(weights: &[f64], first: usize, field: &[f64]) -> f64 {
        let m = field.len();
        let n1 = weights.len().min(m - first);
        let head: f64 = weights[..n1].iter().zip(&field[first..first + n1]).map(|(w, f)| w * f).sum();
        let tail: f64 = weights[n1..].iter().zip(field).map(|(w, f)| w * f).sum();
        head + tail
    }

    fn apply(&self, field: &[f64], dx: f64) -> (f64, f64) {
        (dx * Self::dot(&self.loc, self.first, field), dx * Self::dot(&self.lap, self.first, field))
    }
}

/// `A_delta(x_center) = dx * sum_i field_i K_{delta,center}(x_i)`
pub fn local_measure(field: &[f64], kernel: &Kernel, delta: f64, center: f64, grid: &TorusGrid) -> Result<f64> {
    grid.check_len(field.len())?;
    let s = Stencil::new(kernel, delta, center, grid)?;
    Ok(grid.dx() * Stencil::dot(&s.loc, s.first, field))
}

/// `A_delta^Lap(x_center) = dx * sum_i field_i K''_{delta,center}(x_i)`
pub fn laplace_measure(field: &[f64], kernel: &Kernel, delta: f64, center: f64, grid: &TorusGrid) -> Result<f64> {
    grid.check_len(field.len())?;
    let s = Stencil::new(kernel, delta, center, grid)?;
    Ok(grid.dx() * Stencil::dot(&s.lap, s.first, field))
}

/// Channel centers and resolution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeasurementLayout {
    pub centers: Vec<f64>,
    pub delta: f64,
    pub length: f64,
}

impl MeasurementLayout {
    /// `M` centers at `x_k = L k / M`.
    pub fn regular(channels: usize, delta: f64, length: f64) -> Result<Self> {
        if channels == 0 {
            return Err(Error::InvalidParameter("need at least one measurement channel".into()));
        }
        let centers = (0..channels).map(|k| length * k as f64 / channels as f64).collect();
        Self::new(centers, delta, length)
    }

    pub fn new(centers: Vec<f64>, delta: f64, length: f64) -> Result<Self> {
        if centers.is_empty() {
            return Err(Error::InvalidParameter("need at least one measurement channel".into()));
        }
        if !(length > 0.0 && delta > 0.0) {
            return Err(Error::InvalidParameter("layout needs positive length and delta".into()));
        }
        if centers.iter().any(|c| !(0.0..length).contains(c)) {
            return Err(Error::InvalidParameter(format!("measurement centers must lie in [0, {length})")));
        }
        let layout = Self { centers, delta, length };
        if let Some(w) = layout.overlap_warning() {
            log::warn!("{w}");
        }
        Ok(layout)
    }

    pub fn channels(&self) -> usize {
        self.centers.len()
    }

    /// Smallest periodic distance between two centers (`L` for a single
    /// channel).
    pub fn min_spacing(&self) -> f64 {
        let mut sorted = self.centers.clone();
        sorted.sort_by(f64::total_cmp);
        if sorted.len() < 2 {
            return self.length;
        }
        let wrap = sorted[0] + self.length - sorted[sorted.len() - 1];
        sorted.windows(2).map(|w| w[1] - w[0]).fold(wrap, f64::min)
    }

    /// Kernel supports of neighbouring channels intersect.
    pub fn overlaps(&self) -> bool {
        2.0 * self.delta > self.min_spacing() * (1.0 + 1e-12)
    }

    pub fn overlap_warning(&self) -> Option<String> {
        self.overlaps().then(|| {
            format!(
                "kernel supports overlap: 2 delta = {} exceeds the center spacing {}",
                2.0 * self.delta,
                self.min_spacing()
            )
        })
    }

    /// Centers sit on `x_k = L k / M` (up to round-off).
    pub fn is_regular(&self) -> bool {
        let m = self.centers.len() as f64;
        self.centers.iter().enumerate().all(|(k, &c)| (c - self.length * k as f64 / m).abs() <= 1e-9 * self.length)
    }
}

/// Local and Laplacian measurements over time, one row per instant.
#[derive(Debug, Clone, PartialEq)]
pub struct MeasurementSet {
    pub layout: MeasurementLayout,
    pub times: Vec<f64>,
    pub a_loc: Matrix,
    /// Absent for external data that only carries local measurements.
    pub a_lap: Option<Matrix>,
    pub kernel: Option<KernelSummary>,
}

impl MeasurementSet {
    pub fn new(
        layout: MeasurementLayout,
        times: Vec<f64>,
        a_loc: Matrix,
        a_lap: Option<Matrix>,
        kernel: Option<KernelSummary>,
    ) -> Result<Self> {
        let check = |m: &Matrix| -> Result<()> {
            if m.rows() != times.len() {
                return Err(Error::LengthMismatch { expected: times.len(), found: m.rows() });
            }
            if m.cols() != layout.channels() {
                return Err(Error::LengthMismatch { expected: layout.channels(), found: m.cols() });
            }
            Ok(())
        };
        check(&a_loc)?;
        if let Some(lap) = &a_lap {
            check(lap)?;
        }
        if times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter("measurement times must be strictly increasing".into()));
        }
        Ok(Self { layout, times, a_loc, a_lap, kernel })
    }

    pub fn channels(&self) -> usize {
        self.layout.channels()
    }

    /// `T = t_N - t_0`
    pub fn horizon(&self) -> f64 {
        match (self.times.first(), self.times.last()) {
            (Some(a), Some(b)) => b - a,
            _ => 0.0,
        }
    }

    pub fn delta(&self) -> f64 {
        self.layout.delta
    }

    /// Laplacian measurements, or an error when the set carries none.
    pub fn laplacian(&self) -> Result<&Matrix> {
        self.a_lap
            .as_ref()
            .ok_or_else(|| Error::InsufficientData("measurement set has no Laplacian measurements".into()))
    }
}

/// Accumulates measurements of a running simulation without storing the
/// field history.
#[derive(Debug, Clone)]
pub struct MeasurementRecorder {
    layout: MeasurementLayout,
    kernel: KernelSummary,
    stencils: Vec<Stencil>,
    dx: f64,
    points: usize,
    times: Vec<f64>,
    loc: Matrix,
    lap: Matrix,
    row_loc: Vec<f64>,
    row_lap: Vec<f64>,
}

impl MeasurementRecorder {
    pub fn new(layout: MeasurementLayout, kernel: &Kernel, grid: &TorusGrid) -> Result<Self> {
        if (layout.length - grid.length()).abs() > 1e-12 * grid.length() {
            return Err(Error::InvalidParameter(format!(
                "layout length {} does not match grid length {}",
                layout.length,
                grid.length()
            )));
        }
        let cells = layout.delta / grid.dx();
        if cells < MIN_CELLS_PER_DELTA {
            log::warn!("only {cells:.1} grid cells per kernel half-width; measurement quadrature may be inaccurate");
        }
        let stencils =
            layout.centers.iter().map(|&c| Stencil::new(kernel, layout.delta, c, grid)).collect::<Result<Vec<_>>>()?;
        let m = layout.channels();
        Ok(Self {
            layout,
            kernel: kernel.summary(),
            stencils,
            dx: grid.dx(),
            points: grid.len(),
            times: Vec::new(),
            loc: Matrix::zeros(0, m),
            lap: Matrix::zeros(0, m),
            row_loc: vec![0.0; m],
            row_lap: vec![0.0; m],
        })
    }

    pub fn record(&mut self, time: f64, activator: &[f64]) -> Result<()> {
        if activator.len() != self.points {
            return Err(Error::LengthMismatch { expected: self.points, found: activator.len() });
        }
        for (k, s) in self.stencils.iter().enumerate() {
            let (a, b) = s.apply(activator, self.dx);
            self.row_loc[k] = a;
            self.row_lap[k] = b;
        }
        self.loc.push_row(&self.row_loc);
        self.lap.push_row(&self.row_lap);
        self.times.push(time);
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn finish(self) -> Result<MeasurementSet> {
        MeasurementSet::new(self.layout, self.times, self.loc, Some(self.lap), Some(self.kernel))
    }
}

/// Measures every `time_stride`-th recorded state of a trajectory.
pub fn measure_trajectory(
    traj: &Trajectory,
    layout: &MeasurementLayout,
    kernel: &Kernel,
    time_stride: usize,
) -> Result<MeasurementSet> {
    let intervals = traj.states.len().saturating_sub(1);
    if time_stride == 0 || time_stride > intervals {
        return Err(Error::StrideTooLarge { stride: time_stride, available: intervals });
    }
    let mut rec = MeasurementRecorder::new(layout.clone(), kernel, &traj.grid)?;
    for (t, s) in traj.times.iter().zip(&traj.states).step_by(time_stride) {
        rec.record(*t, &s.activator)?;
    }
    rec.finish()
}
