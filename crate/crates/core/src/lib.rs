//! Pseudospectral semiclassical NLS toolkit: wave-level and WKB-level
//! Lie-Trotter splitting, analytic norms, and local-error diagnostics.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod fields;
pub mod fit;
pub mod grid;
pub mod local_error;
pub mod norms;
pub mod wave;
pub mod wkb;

pub use error::{Error, Result};
pub use fields::{assemble_wave, observables, Observables, WkbState};
pub use grid::{ComplexField, Grid, RealField, Spectrum};
pub use wave::{ModelParams, SplitOrder};
pub use wkb::{GrenierParams, Trajectory};
pub use norms::NormParams;
