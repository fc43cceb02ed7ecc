//! Bright/dark pixel PCA estimator.
//!
//! Pixels are ranked by their projection onto the mean color direction; the
//! top and bottom `percent` of the ranking are kept and the illuminant is the
//! dominant eigenvector of their (uncentered) scatter matrix.

use nalgebra::{Matrix3, Vector3};

use super::{EstimatorError, RawImage};
use crate::color::{normalize_vector, Illuminant};
use crate::sum::pairwise_sum;

const POWER_TOL: f64 = 1e-12;
const POWER_MAX_ITERS: usize = 1000;

pub fn pca_bright_dark(img: &RawImage, percent: f64) -> Result<Illuminant, EstimatorError> {
    if !(percent > 0.0 && percent <= 0.5) {
        return Err(EstimatorError::InvalidParameter(format!(
            "selection fraction {percent} must be in (0, 0.5]"
        )));
    }
    let px: Vec<Vector3<f64>> = img.unmasked().map(|p| Vector3::from(*p)).collect();
    if px.is_empty() {
        return Err(EstimatorError::NoUnmaskedPixels);
    }
    let n = px.len();
    let k = (percent * n as f64).floor() as usize;
    if k == 0 {
        return Err(EstimatorError::SelectionEmpty { pixels: n, percent });
    }

    let mean = Vector3::from_fn(|c, _| {
        pairwise_sum(&px.iter().map(|p| p[c]).collect::<Vec<_>>()) / n as f64
    });
    let dir = normalize_vector(&mean)?;

    let scores: Vec<f64> = px.iter().map(|p| p.dot(&dir)).collect();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]).then(a.cmp(&b)));
    let mut selected: Vec<usize> = order[..k].iter().chain(&order[n - k..]).copied().collect();
    selected.sort_unstable();
    selected.dedup();

    let mut scatter = Matrix3::zeros();
    for &i in &selected {
        scatter += px[i] * px[i].transpose();
    }
    let v = dominant_eigenvector(&scatter, &dir)?;
    Ok(Illuminant::from_vector(v)?)
}

/// Power iteration for a symmetric positive semi-definite 3×3 matrix. The
/// result is unit length and sign-flipped towards the positive octant.
pub(crate) fn dominant_eigenvector(
    m: &Matrix3<f64>,
    start: &Vector3<f64>,
) -> Result<Vector3<f64>, EstimatorError> {
    let mut v = normalize_vector(start)?;
    for _ in 0..POWER_MAX_ITERS {
        let next = normalize_vector(&(m * v))?;
        let done = (next - v).norm() < POWER_TOL;
        v = next;
        if done {
            if v.sum() < 0.0 {
                v = -v;
            }
            return Ok(v);
        }
    }
    Err(EstimatorError::EigenFailure {
        iterations: POWER_MAX_ITERS,
    })
}
