//! Gray Edge: Minkowski pooling of Gaussian-smoothed derivative magnitudes.
//!
//! Each channel is smoothed with a truncated Gaussian (radius `ceil(3σ)`,
//! clamp-to-edge padding), then differentiated with central differences.
//! First order pools `sqrt(Ix² + Iy²)`; second order pools the Hessian
//! Frobenius magnitude `sqrt(Ixx² + 2·Ixy² + Iyy²)`.
//!
//! Masked pixels are zeroed before smoothing so their values cannot leak
//! into the estimate, and every pixel within `radius + 1` of a masked pixel
//! is left out of the pooling along with the image border.

use rayon::prelude::*;

use super::minkowski::minkowski_pool;
use super::{EstimatorError, RawImage};
use crate::color::{normalize_vector, Illuminant};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum EdgeOrder {
    First,
    Second,
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as isize;
    let k: Vec<f64> = (-r..=r)
        .map(|i| (-((i * i) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable convolution with clamp-to-edge borders.
fn smooth(plane: &[f64], w: usize, h: usize, kernel: &[f64]) -> Vec<f64> {
    let r = (kernel.len() / 2) as isize;
    let clamp = |i: isize, n: usize| i.clamp(0, n as isize - 1) as usize;
    let mut tmp = vec![0.0; w * h];
    tmp.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, out) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sx = clamp(x as isize + k as isize - r, w);
                acc += kv * plane[y * w + sx];
            }
            *out = acc;
        }
    });
    let mut out = vec![0.0; w * h];
    out.par_chunks_mut(w).enumerate().for_each(|(y, row)| {
        for (x, o) in row.iter_mut().enumerate() {
            let mut acc = 0.0;
            for (k, kv) in kernel.iter().enumerate() {
                let sy = clamp(y as isize + k as isize - r, h);
                acc += kv * tmp[sy * w + x];
            }
            *o = acc;
        }
    });
    out
}

/// Chebyshev dilation of the mask by `radius` pixels.
fn dilate(mask: &[bool], w: usize, h: usize, radius: usize) -> Vec<bool> {
    let mut tmp = vec![false; w * h];
    for y in 0..h {
        for x in 0..w {
            let lo = x.saturating_sub(radius);
            let hi = (x + radius).min(w - 1);
            tmp[y * w + x] = (lo..=hi).any(|sx| mask[y * w + sx]);
        }
    }
    let mut out = vec![false; w * h];
    for y in 0..h {
        let lo = y.saturating_sub(radius);
        let hi = (y + radius).min(h - 1);
        for x in 0..w {
            out[y * w + x] = (lo..=hi).any(|sy| tmp[sy * w + x]);
        }
    }
    out
}

/// Minimum side length the Gaussian support needs: `ceil(6σ + 1)`.
pub fn min_side(sigma: f64) -> usize {
    (6.0 * sigma + 1.0).ceil() as usize
}

pub fn gray_edge(
    img: &RawImage,
    order: EdgeOrder,
    p: f64,
    sigma: f64,
) -> Result<Illuminant, EstimatorError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(EstimatorError::InvalidParameter(format!(
            "Minkowski order p={p} must be >= 1"
        )));
    }
    if !(sigma > 0.0) || !sigma.is_finite() {
        return Err(EstimatorError::InvalidParameter(format!(
            "sigma={sigma} must be > 0"
        )));
    }
    let (w, h) = (img.width(), img.height());
    let need = min_side(sigma);
    if w < need || h < need {
        return Err(EstimatorError::TooSmall {
            width: w,
            height: h,
            min_side: need,
        });
    }
    let kernel = gaussian_kernel(sigma);
    let radius = kernel.len() / 2;
    let border = radius;

    let excluded = img.mask().map(|m| dilate(m, w, h, radius + 1));
    let pooled: Vec<usize> = (border..h - border)
        .flat_map(|y| (border..w - border).map(move |x| y * w + x))
        .filter(|&i| excluded.as_ref().is_none_or(|m| !m[i]))
        .collect();
    if pooled.is_empty() {
        return Err(EstimatorError::NoUnmaskedPixels);
    }

    let mut pooled_per_channel = [0.0; 3];
    for (c, slot) in pooled_per_channel.iter_mut().enumerate() {
        let plane: Vec<f64> = img
            .pixels()
            .iter()
            .enumerate()
            .map(|(i, px)| if img.is_masked(i) { 0.0 } else { px[c] })
            .collect();
        let s = smooth(&plane, w, h, &kernel);
        let at = |x: usize, y: usize| s[y * w + x];
        let magnitudes: Vec<f64> = pooled
            .iter()
            .map(|&i| {
                let (x, y) = (i % w, i / w);
                match order {
                    EdgeOrder::First => {
                        let ix = 0.5 * (at(x + 1, y) - at(x - 1, y));
                        let iy = 0.5 * (at(x, y + 1) - at(x, y - 1));
                        (ix * ix + iy * iy).sqrt()
                    }
                    EdgeOrder::Second => {
                        let c0 = at(x, y);
                        let ixx = at(x + 1, y) - 2.0 * c0 + at(x - 1, y);
                        let iyy = at(x, y + 1) - 2.0 * c0 + at(x, y - 1);
                        let ixy = 0.25
                            * (at(x + 1, y + 1) - at(x + 1, y - 1) - at(x - 1, y + 1)
                                + at(x - 1, y - 1));
                        (ixx * ixx + 2.0 * ixy * ixy + iyy * iyy).sqrt()
                    }
                }
            })
            .collect();
        *slot = minkowski_pool(&magnitudes, p);
    }
    let n = normalize_vector(&pooled_per_channel.into())?;
    Ok(Illuminant::from_vector(n)?)
}
