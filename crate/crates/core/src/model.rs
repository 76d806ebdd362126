//! Coefficients and reaction terms of the stochastic Meinhardt system
//!
//! ```text
//! dA = (D_A A'' + f_A(A, I, x)) dt + sigma_A dW_A
//! dI = (D_I I'' + f_I(A, I))    dt + sigma_I dW_I
//! ```
//!
//! on the torus `[0, L)`, driven by an extracellular signal
//! `zeta(x) = 1 + a cos(2 pi (x / L + 1/2))`.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::domain::TorusGrid;
use crate::error::{Error, Result};

/// How `|y|` is formed from the concentration pair inside `f_A`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConcentrationNorm {
    /// `|y1| + |y2|`
    L1,
    /// `sqrt(y1^2 + y2^2)`
    L2,
    /// `y1 + y2`, total concentration without absolute values
    Sum,
    /// `|y2|`, the inhibitor alone. Default: with either vector norm the
    /// calibrated system relaxes to a nearly homogeneous state and never
    /// repolarises.
    #[default]
    Inhibitor,
}

impl ConcentrationNorm {
    #[inline]
    pub fn apply(self, y1: f64, y2: f64) -> f64 {
        match self {
            ConcentrationNorm::L1 => y1.abs() + y2.abs(),
            ConcentrationNorm::L2 => y1.hypot(y2),
            ConcentrationNorm::Sum => y1 + y2,
            ConcentrationNorm::Inhibitor => y2.abs(),
        }
    }

    fn is_default(&self) -> bool {
        *self == ConcentrationNorm::Inhibitor
    }
}

/// All coefficients of the model. Field names in serialized form match the
/// usual symbols (`D_A`, `zeta_I`, ...).
#[allow(non_snake_case)]
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelParams {
    pub D_A: f64,
    pub D_I: f64,
    pub r_A: f64,
    pub r_I: f64,
    pub b_A: f64,
    pub b_I: f64,
    pub zeta_A: f64,
    pub zeta_I: f64,
    pub a: f64,
    pub sigma_A: f64,
    pub sigma_I: f64,
    #[serde(default, skip_serializing_if = "ConcentrationNorm::is_default")]
    pub norm: ConcentrationNorm,
}

impl Default for ModelParams {
    /// Calibrated parameter set for Dictyostelium repolarisation under shear
    /// flow, with activator noise `sigma_A = 0.02`.
    fn default() -> Self {
        Self {
            D_A: 4.415e-2,
            D_I: 9.768e-2,
            r_A: 2.393e-1,
            r_I: 2.378e-1,
            b_A: 2.776e-1,
            b_I: 2.076e-1,
            zeta_A: 5.647e-3,
            zeta_I: 3.397e-1,
            a: 1.280e-2,
            sigma_A: 2e-2,
            sigma_I: 0.0,
            norm: ConcentrationNorm::Inhibitor,
        }
    }
}

pub fn default_params() -> ModelParams {
    ModelParams::default()
}

impl ModelParams {
    pub fn deterministic(mut self) -> Self {
        self.sigma_A = 0.0;
        self.sigma_I = 0.0;
        self
    }

    pub fn with_sigma_a(mut self, sigma_a: f64) -> Self {
        self.sigma_A = sigma_a;
        self
    }

    /// Checks hard constraints and returns soft warnings.
    ///
    /// A configuration where the inhibitor diffuses no faster than the
    /// activator is allowed but reported.
    pub fn validate(&self) -> Result<Vec<String>> {
        let positive = [
            ("D_A", self.D_A),
            ("D_I", self.D_I),
            ("r_A", self.r_A),
            ("r_I", self.r_I),
            ("b_A", self.b_A),
            ("b_I", self.b_I),
            ("zeta_A", self.zeta_A),
            ("zeta_I", self.zeta_I),
        ];
        for (name, v) in positive {
            if !v.is_finite() {
                return Err(Error::NonFinite(name));
            }
            if v <= 0.0 {
                return Err(Error::InvalidParameter(format!("{name} must be positive, got {v}")));
            }
        }
        if !(0.0..1.0).contains(&self.a) {
            return Err(Error::InvalidParameter(format!("signal strength a must lie in [0, 1), got {}", self.a)));
        }
        for (name, v) in [("sigma_A", self.sigma_A), ("sigma_I", self.sigma_I)] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::InvalidParameter(format!("{name} must be finite and non-negative, got {v}")));
            }
        }
        let mut warnings = Vec::new();
        if self.D_I <= self.D_A {
            let msg = format!("D_I = {} does not exceed D_A = {}; not a Meinhardt-like regime", self.D_I, self.D_A);
            log::warn!("{msg}");
            warnings.push(msg);
        }
        Ok(warnings)
    }

    /// Extracellular signal, minimal at the rear `x = 0` and maximal at `x = L/2`.
    #[inline]
    pub fn signal_zeta(&self, x: f64, length: f64) -> f64 {
        1.0 + self.a * (2.0 * PI * (x / length + 0.5)).cos()
    }

    /// Activator reaction term for a precomputed signal value.
    #[inline]
    pub fn activator_rate(&self, y1: f64, y2: f64, zeta: f64) -> f64 {
        let sq = y1 * y1;
        self.r_A * zeta * (self.b_A + sq) / ((self.zeta_I + self.norm.apply(y1, y2)) * (1.0 + self.zeta_A * sq))
            - self.r_A * y1
    }

    #[inline]
    pub fn inhibitor_rate(&self, y1: f64, y2: f64) -> f64 {
        self.b_I * y1 - self.r_I * y2
    }

    /// `f_A(y, x)` with input checking.
    pub fn f_a(&self, y: [f64; 2], x: f64, length: f64) -> Result<f64> {
        if !(y[0].is_finite() && y[1].is_finite() && x.is_finite()) {
            return Err(Error::NonFinite("f_A"));
        }
        Ok(self.activator_rate(y[0], y[1], self.signal_zeta(x, length)))
    }

    /// `f_I(y)` with input checking.
    pub fn f_i(&self, y: [f64; 2]) -> Result<f64> {
        if !(y[0].is_finite() && y[1].is_finite()) {
            return Err(Error::NonFinite("f_I"));
        }
        Ok(self.inhibitor_rate(y[0], y[1]))
    }

    pub fn signal_on(&self, grid: &TorusGrid) -> Vec<f64> {
        grid.sample(|x| self.signal_zeta(x, grid.length()))
    }
}

/// Activator and inhibitor values on the grid at one instant.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FieldPair {
    pub activator: Vec<f64>,
    pub inhibitor: Vec<f64>,
    pub time: f64,
    negative: bool,
}

impl FieldPair {
    pub fn new(activator: Vec<f64>, inhibitor: Vec<f64>, time: f64) -> Result<Self> {
        if activator.len() != inhibitor.len() {
            return Err(Error::LengthMismatch { expected: activator.len(), found: inhibitor.len() });
        }
        let mut out = Self { activator, inhibitor, time, negative: false };
        out.refresh_validity();
        Ok(out)
    }

    pub fn zeros(points: usize) -> Self {
        Self { activator: vec![0.0; points], inhibitor: vec![0.0; points], time: 0.0, negative: false }
    }

    pub fn len(&self) -> usize {
        self.activator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.activator.is_empty()
    }

    /// Whether any concentration was negative when last checked.
    pub fn has_negative(&self) -> bool {
        self.negative
    }

    pub fn refresh_validity(&mut self) -> bool {
        self.negative = self.activator.iter().chain(&self.inhibitor).any(|&v| v < 0.0);
        self.negative
    }

    pub(crate) fn set_negative(&mut self, negative: bool) {
        self.negative = negative;
    }

    pub fn check_grid(&self, grid: &TorusGrid) -> Result<()> {
        grid.check_len(self.activator.len())?;
        grid.check_len(self.inhibitor.len())
    }
}

/// Cosine bump of height `peak_height` at the rear `x = 0`
/// with the inhibitor at its local quasi-steady level `(b_I / r_I) A`.
pub fn default_initial_condition(grid: &TorusGrid, params: &ModelParams, peak_height: f64) -> FieldPair {
    let l = grid.length();
    let activator = grid.sample(|x| peak_height * 0.5 * (1.0 + (2.0 * PI * x / l).cos()));
    let ratio = params.b_I / params.r_I;
    let inhibitor = activator.iter().map(|a| ratio * a).collect();
    FieldPair { activator, inhibitor, time: 0.0, negative: false }
}
