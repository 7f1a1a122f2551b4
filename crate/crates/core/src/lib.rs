//! Gap filling for daily mobility series built from GPS fixes.
//!
//! The alignment core is generic over the scalar type; the aliases below fix
//! it to `f64`, which is what the series and imputation layers use.

pub mod config;
pub mod dtw;
pub mod error;
pub mod geo;
pub mod harness;
pub mod impute;
pub mod pipeline;
pub mod report;
pub mod scalar;
pub mod segmentation;
pub mod series;
pub mod synth;

pub use error::{Error, Result};

pub type Timed<'a> = dtw::Timed<'a, f64>;
pub type Warping = dtw::Warping<f64>;
pub type Donor = dtw::Donor<f64>;
pub type ReferenceCollection = dtw::ReferenceCollection<f64>;
pub type Query<'a> = dtw::Query<'a, f64>;
pub type AlignmentResult = dtw::AlignmentResult<f64>;
