//! Statistical illuminant estimators on masked, normalized raw-RGB images.

mod edge;
mod image;
mod minkowski;
mod pca;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{ColorError, Illuminant};

pub use edge::{gray_edge, min_side as gray_edge_min_side, EdgeOrder};
pub use image::{downsample, normalize_raw, Raw16Image, RawImage, Rect};
pub use minkowski::{gray_world, max_rgb, shades_of_gray};
pub use pca::pca_bright_dark;

pub const DEFAULT_SOG_P: f64 = 4.0;
pub const DEFAULT_GE_P: f64 = 6.0;
pub const DEFAULT_GE_SIGMA: f64 = 2.0;
pub const DEFAULT_PCA_PERCENT: f64 = 0.035;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EstimatorError {
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error("saturation level {saturation} must exceed black level {black} (channel {channel})")]
    BadLevels {
        channel: usize,
        black: u32,
        saturation: u32,
    },
    #[error("bad image dimensions {width}x{height} for buffer of length {len}")]
    BadDimensions {
        width: usize,
        height: usize,
        len: usize,
    },
    #[error("image {width}x{height} is smaller than the {min_side}-pixel kernel support")]
    TooSmall {
        width: usize,
        height: usize,
        min_side: usize,
    },
    #[error("no unmasked pixels available")]
    NoUnmaskedPixels,
    #[error("selecting {percent} of {pixels} pixels leaves an empty set")]
    SelectionEmpty { pixels: usize, percent: f64 },
    #[error("power iteration did not converge in {iterations} steps")]
    EigenFailure { iterations: usize },
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    GrayWorld,
    MaxRgb,
    ShadesOfGray,
    GrayEdge1,
    GrayEdge2,
    PcaBrightDark,
}

impl Method {
    pub const ALL: [Method; 6] = [
        Method::GrayWorld,
        Method::MaxRgb,
        Method::ShadesOfGray,
        Method::GrayEdge1,
        Method::GrayEdge2,
        Method::PcaBrightDark,
    ];

    /// Short tag used in file names, reports and on the command line.
    pub fn tag(self) -> &'static str {
        match self {
            Method::GrayWorld => "gw",
            Method::MaxRgb => "maxrgb",
            Method::ShadesOfGray => "sog",
            Method::GrayEdge1 => "ge1",
            Method::GrayEdge2 => "ge2",
            Method::PcaBrightDark => "pca",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim().to_ascii_lowercase();
        Method::ALL
            .into_iter()
            .find(|m| m.tag() == s)
            .or(match s.as_str() {
                "gray-world" | "grayworld" => Some(Method::GrayWorld),
                "max-rgb" | "white-patch" => Some(Method::MaxRgb),
                "shades-of-gray" => Some(Method::ShadesOfGray),
                "gray-edge-1" => Some(Method::GrayEdge1),
                "gray-edge-2" => Some(Method::GrayEdge2),
                _ => None,
            })
            .ok_or_else(|| {
                format!("unknown estimator '{s}' (expected one of gw, maxrgb, sog, ge1, ge2, pca)")
            })
    }
}

/// Estimator choice plus its parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EstimatorConfig {
    pub method: Method,
    /// Minkowski norm order.
    pub p: f64,
    /// Gaussian std-dev in pixels (Gray Edge only).
    pub sigma: f64,
    /// Fraction selected at each end of the brightness ranking (PCA only).
    pub pca_percent: f64,
}

impl EstimatorConfig {
    /// Defaults for `method`: SoG p=4, Gray Edge p=6 σ=2, PCA 3.5%.
    pub fn new(method: Method) -> Self {
        let p = match method {
            Method::ShadesOfGray => DEFAULT_SOG_P,
            Method::GrayEdge1 | Method::GrayEdge2 => DEFAULT_GE_P,
            _ => 1.0,
        };
        Self {
            method,
            p,
            sigma: DEFAULT_GE_SIGMA,
            pca_percent: DEFAULT_PCA_PERCENT,
        }
    }

    pub fn estimate(&self, img: &RawImage) -> Result<Illuminant, EstimatorError> {
        match self.method {
            Method::GrayWorld => gray_world(img),
            Method::MaxRgb => max_rgb(img),
            Method::ShadesOfGray => shades_of_gray(img, self.p),
            Method::GrayEdge1 => gray_edge(img, EdgeOrder::First, self.p, self.sigma),
            Method::GrayEdge2 => gray_edge(img, EdgeOrder::Second, self.p, self.sigma),
            Method::PcaBrightDark => pca_bright_dark(img, self.pca_percent),
        }
    }
}
