//! Numerical calibrated geometry: comass of alternating forms, pointwise
//! metric constructions, calibration pairs glued on flat-torus grids, and
//! mass-minimization trials against sampled competitors.

pub mod cli;
pub mod comass;
pub mod error;
pub mod io;
pub mod linalg;
pub mod mass_court;
pub mod metric_lab;
pub mod multilinear;
pub mod seeds;
pub mod suites;
pub mod torus_forge;

pub use error::{CalibError, Result};
