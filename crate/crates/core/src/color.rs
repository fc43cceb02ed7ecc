//! Illuminant vectors, chromaticity coordinates and the recovery angular error.
//!
//! An illuminant is a color ray: only its direction carries information, so
//! every comparison in this crate goes through [`angular_error`] and the
//! canonical stored form is the unit-Euclidean-norm representative.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Vectors shorter than this are treated as the zero vector.
pub const ZERO_NORM: f64 = 1e-15;

/// Slack allowed on `u1 + u2 <= 1` for chromaticities.
pub const CHROMA_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ColorError {
    #[error("zero-length color vector")]
    ZeroVector,
    #[error("channel sum R+G+B is not positive")]
    DegenerateSum,
    #[error("non-finite color component")]
    NonFinite,
}

/// RGB illuminant color, meaningful up to a positive scale factor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 3]", try_from = "[f64; 3]")]
pub struct Illuminant(Vector3<f64>);

impl Illuminant {
    pub fn new(r: f64, g: f64, b: f64) -> Result<Self, ColorError> {
        Self::from_vector(Vector3::new(r, g, b))
    }

    pub fn from_vector(v: Vector3<f64>) -> Result<Self, ColorError> {
        if !v.iter().all(|c| c.is_finite()) {
            return Err(ColorError::NonFinite);
        }
        if v.iter().all(|&c| c == 0.0) {
            return Err(ColorError::ZeroVector);
        }
        Ok(Self(v))
    }

    pub fn r(&self) -> f64 {
        self.0.x
    }

    pub fn g(&self) -> f64 {
        self.0.y
    }

    pub fn b(&self) -> f64 {
        self.0.z
    }

    pub fn as_vector(&self) -> &Vector3<f64> {
        &self.0
    }

    pub fn to_array(self) -> [f64; 3] {
        [self.0.x, self.0.y, self.0.z]
    }

    pub fn norm(&self) -> f64 {
        self.0.norm()
    }

    pub fn scaled(&self, alpha: f64) -> Result<Self, ColorError> {
        Self::from_vector(self.0 * alpha)
    }

    /// True when every channel is `>= 0`.
    pub fn is_non_negative(&self) -> bool {
        self.0.iter().all(|&c| c >= 0.0)
    }

    /// True when every channel is `> 0`.
    pub fn is_positive(&self) -> bool {
        self.0.iter().all(|&c| c > 0.0)
    }
}

impl From<Illuminant> for [f64; 3] {
    fn from(v: Illuminant) -> Self {
        v.to_array()
    }
}

impl TryFrom<[f64; 3]> for Illuminant {
    type Error = ColorError;

    fn try_from(a: [f64; 3]) -> Result<Self, Self::Error> {
        Illuminant::new(a[0], a[1], a[2])
    }
}

/// Scale-free 2D encoding `(R/(R+G+B), G/(R+G+B))`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chromaticity {
    pub u1: f64,
    pub u2: f64,
}

impl Chromaticity {
    pub fn new(u1: f64, u2: f64) -> Self {
        Self { u1, u2 }
    }

    /// Whether the point lies inside the unit simplex (with [`CHROMA_EPS`] slack).
    pub fn in_simplex(&self) -> bool {
        (0.0..=1.0).contains(&self.u1)
            && (0.0..=1.0).contains(&self.u2)
            && self.u1 + self.u2 <= 1.0 + CHROMA_EPS
    }
}

/// Angle in degrees, `[0, 180]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
#[serde(transparent)]
pub struct AngleDeg(pub f64);

impl AngleDeg {
    pub fn value(self) -> f64 {
        self.0
    }
}

/// Unit-norm representative of the ray through `v`.
pub fn normalize(v: &Illuminant) -> Result<Illuminant, ColorError> {
    let n = v.0.norm();
    if n < ZERO_NORM {
        return Err(ColorError::ZeroVector);
    }
    // Leave unit vectors alone so normalization is idempotent bit for bit.
    if (n - 1.0).abs() <= 4.0 * f64::EPSILON {
        return Ok(*v);
    }
    Ok(Illuminant(v.0 / n))
}

pub(crate) fn normalize_vector(v: &Vector3<f64>) -> Result<Vector3<f64>, ColorError> {
    let n = v.norm();
    if !n.is_finite() {
        return Err(ColorError::NonFinite);
    }
    if n < ZERO_NORM {
        return Err(ColorError::ZeroVector);
    }
    Ok(v / n)
}

/// Recovery angular error between two rays, in degrees.
pub fn angular_error(a: &Illuminant, b: &Illuminant) -> Result<AngleDeg, ColorError> {
    angle_between(&a.0, &b.0).map(AngleDeg)
}

pub(crate) fn angle_between(a: &Vector3<f64>, b: &Vector3<f64>) -> Result<f64, ColorError> {
    let na = a.norm();
    let nb = b.norm();
    if na < ZERO_NORM || nb < ZERO_NORM {
        return Err(ColorError::ZeroVector);
    }
    // atan2 form of arccos(a.b / |a||b|): same angle, but accurate near 0
    // and 180 degrees where arccos loses half the mantissa. Exactly
    // symmetric, and exactly zero for identical inputs.
    let cross = a.cross(b).norm();
    Ok(cross.atan2(a.dot(b)).to_degrees())
}

pub fn to_chromaticity(v: &Illuminant) -> Result<Chromaticity, ColorError> {
    let s = v.0.x + v.0.y + v.0.z;
    if s <= ZERO_NORM {
        return Err(ColorError::DegenerateSum);
    }
    Ok(Chromaticity {
        u1: v.0.x / s,
        u2: v.0.y / s,
    })
}

/// Inverse embedding `(u1, u2) -> (u1, u2, 1 - u1 - u2)`.
///
/// Defined for any point, including ones outside the simplex, where the
/// blue channel comes out negative. The LUT relies on this for its corner
/// nodes.
pub fn from_chromaticity(c: &Chromaticity) -> Illuminant {
    // Components sum to one, so the vector is never zero.
    Illuminant(Vector3::new(c.u1, c.u2, 1.0 - c.u1 - c.u2))
}
