//! The periodic domain `[0, L)` with identified endpoints and its uniform grid.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Uniform grid of `m` points on the torus of circumference `L`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TorusGrid {
    length: f64,
    points: usize,
    dx: f64,
}

impl TorusGrid {
    pub fn new(length: f64, points: usize) -> Result<Self> {
        if !(length.is_finite() && length > 0.0) {
            return Err(Error::InvalidParameter(format!("torus length must be positive, got {length}")));
        }
        if points == 0 {
            return Err(Error::InvalidParameter("grid needs at least one point".into()));
        }
        Ok(Self { length, points, dx: length / points as f64 })
    }

    pub fn length(&self) -> f64 {
        self.length
    }

    pub fn len(&self) -> usize {
        self.points
    }

    pub fn is_empty(&self) -> bool {
        self.points == 0
    }

    pub fn dx(&self) -> f64 {
        self.dx
    }

    /// Coordinate of grid point `i` (wrapped onto the torus).
    pub fn coord(&self, i: i64) -> f64 {
        self.wrap_index(i) as f64 * self.dx
    }

    pub fn coords(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.points).map(move |i| i as f64 * self.dx)
    }

    /// Non-negative modulus `i mod m`.
    pub fn wrap_index(&self, i: i64) -> usize {
        i.rem_euclid(self.points as i64) as usize
    }

    /// Reduces an arbitrary coordinate to `[0, L)`.
    pub fn canonicalize(&self, x: f64) -> f64 {
        let r = x.rem_euclid(self.length);
        // rem_euclid can round up to L itself for tiny negative inputs
        if r >= self.length {
            0.0
        } else {
            r
        }
    }

    /// Signed offset `x - y` reduced to `[-L/2, L/2)`.
    pub fn signed_offset(&self, x: f64, y: f64) -> f64 {
        let half = 0.5 * self.length;
        (x - y + half).rem_euclid(self.length) - half
    }

    /// Geodesic distance on the circle, in `[0, L/2]`.
    pub fn periodic_distance(&self, x: f64, y: f64) -> f64 {
        let d = (x - y).abs().rem_euclid(self.length);
        d.min(self.length - d)
    }

    /// Periodic left-Riemann rule `dx * sum(values)`.
    pub fn integrate(&self, values: &[f64]) -> Result<f64> {
        self.check_len(values.len())?;
        Ok(self.dx * values.iter().sum::<f64>())
    }

    /// Discrete `L^2(Λ)` inner product.
    pub fn inner(&self, u: &[f64], v: &[f64]) -> Result<f64> {
        self.check_len(u.len())?;
        self.check_len(v.len())?;
        Ok(self.dx * u.iter().zip(v).map(|(a, b)| a * b).sum::<f64>())
    }

    pub(crate) fn check_len(&self, found: usize) -> Result<()> {
        if found != self.points {
            return Err(Error::LengthMismatch { expected: self.points, found });
        }
        Ok(())
    }

    /// Samples `f` at every grid coordinate.
    pub fn sample(&self, f: impl Fn(f64) -> f64) -> Vec<f64> {
        self.coords().map(f).collect()
    }
}
