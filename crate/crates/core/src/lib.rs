//! Simulation of the stochastic Meinhardt activator–inhibitor system on a
//! one-dimensional torus, local kernel measurements of its activator, and the
//! augmented maximum-likelihood estimator of the activator diffusivity.

pub mod domain;
pub mod error;
pub mod estimator;
pub mod experiments;
pub mod io;
pub mod matrix;
pub mod measurement;
pub mod model;
pub mod plot;
mod quadrature;
pub mod solver;

pub use domain::TorusGrid;
pub use error::{Error, Result};
pub use matrix::Matrix;
pub use measurement::{bump_kernel, Kernel, MeasurementLayout, MeasurementSet};
pub use model::{default_initial_condition, default_params, FieldPair, ModelParams};
pub use solver::{simulate, Reaction, Scheme, SolverConfig, Trajectory};
