//! Illuminant estimation and projective bias correction for raw-RGB color
//! constancy.
//!
//! Statistical estimators ([`estimators`]) produce an illuminant ray per
//! image. A 3×3 projective transform fitted by alternating least squares
//! ([`projective`]) maps those rays closer to ground truth, either globally
//! or re-weighted per query (APAP). [`lut`] precomputes the per-query fits on
//! a chromaticity grid for constant-time correction.

// `!(x > 0.0)` style checks are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod color;
pub mod dataset;
pub mod estimators;
pub mod eval;
pub mod lut;
pub mod projective;
mod sum;
pub mod synth;

pub use color::{
    angular_error, from_chromaticity, normalize, to_chromaticity, AngleDeg, Chromaticity,
    ColorError, Illuminant,
};
