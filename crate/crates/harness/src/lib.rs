//! Experiment harness for `spdp-core`: synthetic problems, parameter grids,
//! parallel trial execution, CSV output, slope fitting and calibration of the
//! unspecified constants.

pub mod calibrate;
pub mod config;
pub mod error;
pub mod experiments;
pub mod grid;
pub mod problems;
pub mod results;
pub mod slope;

pub use config::Config;
pub use error::{HarnessError, Result};
pub use experiments::{run, ExperimentKind, Report};
pub use grid::{Cell, Grid};
pub use results::{ResultRow, Table};
pub use slope::{fit_slope, SlopeFit};
