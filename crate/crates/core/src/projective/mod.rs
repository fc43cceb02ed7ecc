//! Projective bias correction: `α_i·ℓ_i = P·ℓ̂_i`.
//!
//! [`fit_global`] solves for one transform over a training corpus;
//! [`fit_apap`] re-solves per query with proximity weights. [`apply`] maps an
//! estimate through a transform and returns the corrected unit ray.

mod als;
mod apap;
mod corpus;

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{normalize_vector, ColorError, Illuminant};
use crate::estimators::RawImage;
use crate::lut::{LutError, LutGrid};

pub use als::{AlsConfig, AlsFit};
pub use apap::{apap_weights, fit_apap, ApapConfig};
pub use corpus::TrainingCorpus;

pub(crate) use als::solve_als;

/// Outputs shorter than this (for a unit-norm input) count as collapsed.
pub const COLLAPSE_NORM: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum FitError {
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error("corpus has {estimates} estimates but {truths} ground truths")]
    LengthMismatch { estimates: usize, truths: usize },
    #[error("corpus needs at least 3 pairs, got {0}")]
    TooFewPairs(usize),
    #[error("corpus has only {distinct} non-parallel estimate directions (need 3)")]
    DegenerateCorpus { distinct: usize },
    #[error("normal-equation system is numerically singular")]
    SingularSystem,
    #[error("transform maps the estimate to (nearly) zero")]
    CollapsedOutput,
    #[error("illuminant must be strictly positive in every channel")]
    NonPositiveIlluminant,
    #[error("transform has non-finite entries")]
    NonFiniteTransform,
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
}

/// 3×3 matrix acting on illuminant rays.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(into = "[f64; 9]", try_from = "[f64; 9]")]
pub struct ProjectiveTransform {
    m: Matrix3<f64>,
}

impl ProjectiveTransform {
    pub fn identity() -> Self {
        Self {
            m: Matrix3::identity(),
        }
    }

    pub fn from_matrix(m: Matrix3<f64>) -> Result<Self, FitError> {
        if !m.iter().all(|x| x.is_finite()) {
            return Err(FitError::NonFiniteTransform);
        }
        let t = Self { m };
        if t.is_near_singular() {
            log::warn!(
                "projective transform is numerically rank deficient: {:?}",
                t.to_row_major()
            );
        }
        Ok(t)
    }

    pub fn from_row_major(rows: [f64; 9]) -> Result<Self, FitError> {
        Self::from_matrix(Matrix3::from_row_slice(&rows))
    }

    pub fn matrix(&self) -> &Matrix3<f64> {
        &self.m
    }

    pub fn to_row_major(&self) -> [f64; 9] {
        let m = &self.m;
        [
            m[(0, 0)],
            m[(0, 1)],
            m[(0, 2)],
            m[(1, 0)],
            m[(1, 1)],
            m[(1, 2)],
            m[(2, 0)],
            m[(2, 1)],
            m[(2, 2)],
        ]
    }

    /// Smallest/largest singular value ratio below 1e-10.
    pub fn is_near_singular(&self) -> bool {
        let sv = self.m.singular_values();
        let max = sv.max();
        max == 0.0 || sv.min() / max < 1e-10
    }

    pub fn inverse(&self) -> Option<Self> {
        self.m.try_inverse().map(|m| Self { m })
    }
}

impl From<ProjectiveTransform> for [f64; 9] {
    fn from(t: ProjectiveTransform) -> Self {
        t.to_row_major()
    }
}

impl TryFrom<[f64; 9]> for ProjectiveTransform {
    type Error = FitError;

    fn try_from(rows: [f64; 9]) -> Result<Self, Self::Error> {
        Self::from_row_major(rows)
    }
}

/// On-disk JSON form of a fitted transform.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransformFile {
    pub m: ProjectiveTransform,
    pub method: String,
    pub camera: String,
}

/// A corrected unit illuminant. `clamped` records that negative channels
/// were zeroed before normalization.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Corrected {
    pub illuminant: Illuminant,
    pub clamped: bool,
}

/// Normalize a raw corrected vector, zeroing negative channels.
pub(crate) fn finish_correction(v: Vector3<f64>) -> Result<Corrected, FitError> {
    if !v.iter().all(|x| x.is_finite()) {
        return Err(FitError::NonFiniteTransform);
    }
    if v.norm() < COLLAPSE_NORM {
        return Err(FitError::CollapsedOutput);
    }
    let clamped = v.iter().any(|&x| x < 0.0);
    let v = if clamped { v.map(|x| x.max(0.0)) } else { v };
    if v.norm() < COLLAPSE_NORM {
        return Err(FitError::CollapsedOutput);
    }
    let u = normalize_vector(&v)?;
    Ok(Corrected {
        illuminant: Illuminant::from_vector(u)?,
        clamped,
    })
}

/// `normalize(P·est)`. The estimate is normalized first, so the result does
/// not depend on its scale.
pub fn apply(p: &ProjectiveTransform, est: &Illuminant) -> Result<Corrected, FitError> {
    let e = normalize_vector(est.as_vector())?;
    finish_correction(p.m * e)
}

/// Global transform over the whole corpus.
pub fn fit_global(corpus: &TrainingCorpus, cfg: &AlsConfig) -> Result<AlsFit, FitError> {
    let a: Vec<Vector3<f64>> = corpus.estimates().iter().map(|e| *e.as_vector()).collect();
    let b: Vec<Vector3<f64>> = corpus.truths().iter().map(|t| *t.as_vector()).collect();
    solve_als(&a, &b, cfg)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CorrectionMode {
    Global,
    Apap,
    ApapLut,
}

/// A ready-to-use bias corrector for one of the three correction modes.
#[derive(Debug, Clone)]
pub enum Corrector {
    Global(ProjectiveTransform),
    Apap {
        corpus: TrainingCorpus,
        apap: ApapConfig,
        als: AlsConfig,
    },
    Lut(LutGrid),
}

#[derive(Debug, Error)]
pub enum CorrectError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Lut(#[from] LutError),
}

impl Corrector {
    pub fn mode(&self) -> CorrectionMode {
        match self {
            Corrector::Global(_) => CorrectionMode::Global,
            Corrector::Apap { .. } => CorrectionMode::Apap,
            Corrector::Lut(_) => CorrectionMode::ApapLut,
        }
    }

    pub fn correct(&self, query: &Illuminant) -> Result<Corrected, CorrectError> {
        Ok(match self {
            Corrector::Global(p) => apply(p, query)?,
            Corrector::Apap { corpus, apap, als } => {
                apply(&fit_apap(query, corpus, apap, als)?.transform, query)?
            }
            Corrector::Lut(grid) => grid.query(query)?,
        })
    }
}

/// Settings shared by the fitting modes.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrectionSettings {
    pub apap: ApapConfig,
    pub als: AlsConfig,
    pub lut_size: usize,
    pub lut_bounds: crate::lut::LutBounds,
}

impl Default for CorrectionSettings {
    fn default() -> Self {
        Self {
            apap: ApapConfig::default(),
            als: AlsConfig::default(),
            lut_size: crate::lut::DEFAULT_LUT_SIZE,
            lut_bounds: crate::lut::LutBounds::default(),
        }
    }
}

impl Corrector {
    /// Fit a corrector of the requested mode on `corpus`.
    pub fn train(
        corpus: &TrainingCorpus,
        mode: CorrectionMode,
        s: &CorrectionSettings,
    ) -> Result<Self, CorrectError> {
        Ok(match mode {
            CorrectionMode::Global => Corrector::Global(fit_global(corpus, &s.als)?.transform),
            CorrectionMode::Apap => {
                s.apap.validate()?;
                s.als.validate()?;
                Corrector::Apap {
                    corpus: corpus.clone(),
                    apap: s.apap,
                    als: s.als,
                }
            }
            CorrectionMode::ApapLut => Corrector::Lut(LutGrid::build(
                corpus,
                s.lut_size,
                s.lut_bounds,
                &s.apap,
                &s.als,
            )?),
        })
    }
}

/// Fit-and-apply in one call.
pub fn correct(
    query: &Illuminant,
    corpus: &TrainingCorpus,
    mode: CorrectionMode,
    settings: &CorrectionSettings,
) -> Result<Corrected, CorrectError> {
    match mode {
        CorrectionMode::Global => Ok(apply(&fit_global(corpus, &settings.als)?.transform, query)?),
        CorrectionMode::Apap => Ok(apply(
            &fit_apap(query, corpus, &settings.apap, &settings.als)?.transform,
            query,
        )?),
        CorrectionMode::ApapLut => Corrector::train(corpus, mode, settings)?.correct(query),
    }
}

/// Diagonal white balance with gains `(G/R, 1, G/B)` of `illum`; output is
/// clamped to `[0, 1]`.
pub fn white_balance(img: &RawImage, illum: &Illuminant) -> Result<RawImage, FitError> {
    if !illum.is_positive() {
        return Err(FitError::NonPositiveIlluminant);
    }
    let gains = [illum.g() / illum.r(), 1.0, illum.g() / illum.b()];
    let mut out = img.clone();
    for px in out.pixels_mut() {
        for c in 0..3 {
            px[c] = (px[c] * gains[c]).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}
