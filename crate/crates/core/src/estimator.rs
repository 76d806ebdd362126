//! Augmented maximum-likelihood estimation of the activator diffusivity from
//! local and Laplacian measurements
//!
//! ```text
//! D_hat = sum_k int A_lap(t, x_k) dA_loc(t, x_k) / sum_k int A_lap(t, x_k)^2 dt
//! ```

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use crate::error::{Error, Result};
use crate::matrix::Matrix;
use crate::measurement::{Kernel, MeasurementLayout, MeasurementSet};

/// Left-point Itô sum `sum_j integrand(t_{j-1}) (integrator(t_j) - integrator(t_{j-1}))`.
pub fn ito_integral(integrand: &[f64], integrator: &[f64], times: &[f64]) -> Result<f64> {
    if integrand.len() != integrator.len() {
        return Err(Error::LengthMismatch { expected: integrand.len(), found: integrator.len() });
    }
    if times.len() != integrand.len() {
        return Err(Error::LengthMismatch { expected: integrand.len(), found: times.len() });
    }
    if times.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("times must be strictly increasing".into()));
    }
    Ok(integrand.windows(2).zip(integrator.windows(2)).map(|(f, x)| f[0] * (x[1] - x[0])).sum())
}

fn require_frames(ms: &MeasurementSet) -> Result<()> {
    if ms.times.len() < 2 {
        return Err(Error::InsufficientData(format!("need at least two measurement times, got {}", ms.times.len())));
    }
    Ok(())
}

/// Observed Fisher information `I_delta = sum_k int A_lap^2 dt` (left Riemann
/// sum in time).
pub fn fisher_information(ms: &MeasurementSet) -> Result<f64> {
    require_frames(ms)?;
    let lap = ms.laplacian()?;
    let mut total = 0.0;
    for j in 0..ms.times.len() - 1 {
        let dt = ms.times[j + 1] - ms.times[j];
        total += dt * lap.row(j).iter().map(|v| v * v).sum::<f64>();
    }
    Ok(total)
}

/// Point estimate and the pieces of the ratio.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MleFit {
    pub d_hat: f64,
    pub fisher_info: f64,
    /// `sum_k int A_lap dA_loc`
    pub numerator: f64,
}

pub fn augmented_mle(ms: &MeasurementSet) -> Result<MleFit> {
    let fisher_info = fisher_information(ms)?;
    let lap = ms.laplacian()?;
    if !(fisher_info > 0.0) || !fisher_info.is_finite() {
        return Err(Error::DegenerateData("observed Fisher information is zero; Laplacian measurements vanish".into()));
    }
    let mut numerator = 0.0;
    for j in 0..ms.times.len() - 1 {
        numerator += lap
            .row(j)
            .iter()
            .zip(ms.a_loc.row(j + 1).iter().zip(ms.a_loc.row(j)))
            .map(|(l, (b, a))| l * (b - a))
            .sum::<f64>();
    }
    Ok(MleFit { d_hat: numerator / fisher_info, fisher_info, numerator })
}

/// `RV = M^{-1} sum_k sum_j (A_loc(t_j, x_k) - A_loc(t_{j-1}, x_k))^2`, an
/// estimate of `T sigma_A^2 ||K||^2`.
pub fn realized_variation(ms: &MeasurementSet) -> Result<f64> {
    require_frames(ms)?;
    let m = ms.channels() as f64;
    let rows: Vec<&[f64]> = ms.a_loc.iter_rows().collect();
    let total: f64 = rows.windows(2).map(|w| w[1].iter().zip(w[0]).map(|(b, a)| (b - a) * (b - a)).sum::<f64>()).sum();
    Ok(total / m)
}

/// Summary of one estimation.
#[allow(non_snake_case)]
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EstimateReport {
    pub D_hat: f64,
    pub fisher_info: f64,
    /// Realized variation, an estimate of `T sigma_A^2 ||K||^2`.
    pub martingale_free_qv_estimate: f64,
    /// Absent when `D_hat < 0` or the resolution is unknown.
    pub ci_plugin: Option<[f64; 2]>,
    pub ci_datadriven: [f64; 2],
    pub alpha: f64,
    /// Absent for external data with unknown point-spread width.
    pub delta: Option<f64>,
    pub M: usize,
    pub T: f64,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

impl EstimateReport {
    pub fn plugin_half_width(&self) -> Option<f64> {
        self.ci_plugin.map(|[lo, hi]| 0.5 * (hi - lo))
    }

    pub fn datadriven_half_width(&self) -> f64 {
        0.5 * (self.ci_datadriven[1] - self.ci_datadriven[0])
    }

    pub fn covers(&self, value: f64) -> (Option<bool>, bool) {
        let inside = |[lo, hi]: [f64; 2]| lo <= value && value <= hi;
        (self.ci_plugin.map(inside), inside(self.ci_datadriven))
    }

    /// One-line human-readable summary.
    pub fn summary_line(&self) -> String {
        let plugin = match self.plugin_half_width() {
            Some(h) => format!("+- {h:.3e}"),
            None => "n/a".into(),
        };
        format!(
            "D_hat = {:.4e}  plugin {}  data-driven +- {:.3e}  (alpha = {}, M = {}, T = {})",
            self.D_hat,
            plugin,
            self.datadriven_half_width(),
            self.alpha,
            self.M,
            self.T
        )
    }
}

/// Two-sided standard normal quantile `q_{1 - alpha/2}`.
pub fn normal_quantile(alpha: f64) -> Result<f64> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::InvalidParameter(format!("alpha must lie in (0, 1), got {alpha}")));
    }
    let n = Normal::standard();
    Ok(n.inverse_cdf(1.0 - 0.5 * alpha).max(0.0))
}

/// Half-width `delta (MT)^{-1/2} (D_hat Sigma)^{1/2} q` of the plug-in interval.
pub fn plugin_half_width(
    d_hat: f64,
    delta: f64,
    channels: usize,
    horizon: f64,
    kernel_sigma: f64,
    q: f64,
) -> Option<f64> {
    (d_hat >= 0.0).then(|| delta * (channels as f64 * horizon).powf(-0.5) * (d_hat * kernel_sigma).sqrt() * q)
}

/// Inputs of the interval construction that do not come from the fit.
#[derive(Debug, Clone, Copy)]
pub struct IntervalInputs {
    pub channels: usize,
    pub horizon: f64,
    pub delta: Option<f64>,
    pub norm_k: f64,
    pub kernel_sigma: f64,
    /// Realized variation of the local measurements.
    pub realized_variation: f64,
}

/// Attaches both confidence intervals. `sigma_a_known` replaces the
/// realized-variation estimate of `sigma_A ||K||`.
pub fn intervals_from_parts(
    fit: &MleFit,
    inputs: IntervalInputs,
    sigma_a_known: Option<f64>,
    alpha: f64,
) -> Result<EstimateReport> {
    let q = normal_quantile(alpha)?;
    let noise_scale = match sigma_a_known {
        Some(s) if s >= 0.0 => s * inputs.norm_k,
        Some(s) => return Err(Error::InvalidParameter(format!("sigma_A must be non-negative, got {s}"))),
        None => {
            if !(inputs.horizon > 0.0) {
                return Err(Error::InsufficientData("zero observation horizon".into()));
            }
            (inputs.realized_variation / inputs.horizon).sqrt()
        }
    };
    let d = fit.d_hat;
    let half = noise_scale * fit.fisher_info.powf(-0.5) * q;
    let mut warnings = Vec::new();
    let ci_plugin = match inputs.delta {
        Some(delta) => {
            let h = plugin_half_width(d, delta, inputs.channels, inputs.horizon, inputs.kernel_sigma, q);
            if h.is_none() {
                warnings.push(format!("negative estimate {d:.4e}: plug-in interval undefined"));
            }
            h.map(|h| [d - h, d + h])
        }
        None => None,
    };
    Ok(EstimateReport {
        D_hat: d,
        fisher_info: fit.fisher_info,
        martingale_free_qv_estimate: inputs.realized_variation,
        ci_plugin,
        ci_datadriven: [d - half, d + half],
        alpha,
        delta: inputs.delta,
        M: inputs.channels,
        T: inputs.horizon,
        warnings,
    })
}

pub fn confidence_intervals(
    fit: &MleFit,
    ms: &MeasurementSet,
    kernel: &Kernel,
    sigma_a_known: Option<f64>,
    alpha: f64,
) -> Result<EstimateReport> {
    let inputs = IntervalInputs {
        channels: ms.channels(),
        horizon: ms.horizon(),
        delta: Some(ms.delta()),
        norm_k: kernel.norm_k(),
        kernel_sigma: kernel.sigma(),
        realized_variation: realized_variation(ms)?,
    };
    intervals_from_parts(fit, inputs, sigma_a_known, alpha)
}

/// Point estimate plus both intervals in one call.
pub fn estimate(
    ms: &MeasurementSet,
    kernel: &Kernel,
    sigma_a_known: Option<f64>,
    alpha: f64,
) -> Result<EstimateReport> {
    let fit = augmented_mle(ms)?;
    confidence_intervals(&fit, ms, kernel, sigma_a_known, alpha)
}

/// Periodic second difference across channels,
/// `(A[k+1] - 2 A[k] + A[k-1]) / h^2` with `h = L / M`.
pub fn fd_laplacian_measurements(a_loc: &Matrix, layout: &MeasurementLayout) -> Result<Matrix> {
    if !layout.is_regular() {
        return Err(Error::IrregularLayout);
    }
    let m = layout.channels();
    if m < 3 {
        return Err(Error::InsufficientData(format!("finite-difference Laplacian needs M >= 3, got {m}")));
    }
    if a_loc.cols() != m {
        return Err(Error::LengthMismatch { expected: m, found: a_loc.cols() });
    }
    let h = layout.length / m as f64;
    let inv_h2 = 1.0 / (h * h);
    let mut out = Matrix::zeros(a_loc.rows(), m);
    for (j, row) in a_loc.iter_rows().enumerate() {
        for k in 0..m {
            let left = row[(k + m - 1) % m];
            let right = row[(k + 1) % m];
            out.set(j, k, (right - 2.0 * row[k] + left) * inv_h2);
        }
    }
    Ok(out)
}

/// Default number of Fourier modes for [`spectral_mle`].
pub fn default_spectral_modes(channels: usize) -> usize {
    (channels / 4).min(10)
}

/// Drift MLE on the cosine and sine coefficients of the first `n_modes`
/// discrete Fourier modes of the local measurements, each treated as
/// `dv = -D lambda_l v dt + noise` with `lambda_l = (2 pi l / L)^2`.
pub fn spectral_mle(a_loc: &Matrix, layout: &MeasurementLayout, times: &[f64], n_modes: usize) -> Result<f64> {
    if !layout.is_regular() {
        return Err(Error::IrregularLayout);
    }
    let m = layout.channels();
    if n_modes == 0 || 2 * n_modes >= m {
        return Err(Error::InvalidParameter(format!("n_modes must lie in [1, M/2), got {n_modes} with M = {m}")));
    }
    if a_loc.rows() != times.len() {
        return Err(Error::LengthMismatch { expected: times.len(), found: a_loc.rows() });
    }
    if times.len() < 2 {
        return Err(Error::InsufficientData("need at least two measurement times".into()));
    }
    let l = layout.length;
    let mut num = 0.0;
    let mut den = 0.0;
    for mode in 1..=n_modes {
        let lambda = (2.0 * PI * mode as f64 / l).powi(2);
        let (cos_w, sin_w): (Vec<f64>, Vec<f64>) = layout
            .centers
            .iter()
            .map(|&x| {
                let phase = 2.0 * PI * mode as f64 * x / l;
                (phase.cos(), phase.sin())
            })
            .unzip();
        for weights in [&cos_w, &sin_w] {
            let v: Vec<f64> =
                a_loc.iter_rows().map(|r| r.iter().zip(weights).map(|(a, w)| a * w).sum::<f64>()).collect();
            num += lambda * ito_integral(&v, &v, times)?;
            den += lambda
                * lambda
                * v.windows(2).zip(times.windows(2)).map(|(v, t)| v[0] * v[0] * (t[1] - t[0])).sum::<f64>();
        }
    }
    if !(den > 0.0) || !den.is_finite() {
        return Err(Error::DegenerateData("spectral estimator denominator vanishes".into()));
    }
    Ok(-num / den)
}
