//! Gray World, Shades-of-Gray and max-RGB: per-channel Minkowski pooling
//! of pixel values.

use nalgebra::Vector3;

use super::{EstimatorError, RawImage};
use crate::color::{normalize_vector, Illuminant};
use crate::sum::pairwise_sum;

/// Per-channel values of the unmasked pixels, row-major.
fn channels(img: &RawImage) -> Result<[Vec<f64>; 3], EstimatorError> {
    let n = img.unmasked_count();
    if n == 0 {
        return Err(EstimatorError::NoUnmaskedPixels);
    }
    let mut out = [
        Vec::with_capacity(n),
        Vec::with_capacity(n),
        Vec::with_capacity(n),
    ];
    for p in img.unmasked() {
        for c in 0..3 {
            out[c].push(p[c]);
        }
    }
    Ok(out)
}

/// `(mean(v^p))^(1/p)` computed on values rescaled by their maximum so that
/// large `p` does not underflow.
pub(crate) fn minkowski_pool(values: &[f64], p: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |m, &v| m.max(v.abs()));
    if max == 0.0 || values.is_empty() {
        return 0.0;
    }
    let powered: Vec<f64> = values.iter().map(|&v| (v.abs() / max).powf(p)).collect();
    (pairwise_sum(&powered) / values.len() as f64).powf(1.0 / p) * max
}

fn finish(v: [f64; 3]) -> Result<Illuminant, EstimatorError> {
    let n = normalize_vector(&Vector3::from(v))?;
    Ok(Illuminant::from_vector(n)?)
}

/// Direction of the per-channel mean over unmasked pixels.
pub fn gray_world(img: &RawImage) -> Result<Illuminant, EstimatorError> {
    let ch = channels(img)?;
    let n = ch[0].len() as f64;
    finish([0, 1, 2].map(|c| pairwise_sum(&ch[c]) / n))
}

/// Direction of the per-channel Minkowski `p`-mean.
pub fn shades_of_gray(img: &RawImage, p: f64) -> Result<Illuminant, EstimatorError> {
    if !(p >= 1.0) || !p.is_finite() {
        return Err(EstimatorError::InvalidParameter(format!(
            "Minkowski order p={p} must be >= 1"
        )));
    }
    if p == 1.0 {
        return gray_world(img);
    }
    let ch = channels(img)?;
    finish([0, 1, 2].map(|c| minkowski_pool(&ch[c], p)))
}

/// Direction of the per-channel maxima.
pub fn max_rgb(img: &RawImage) -> Result<Illuminant, EstimatorError> {
    let ch = channels(img)?;
    finish([0, 1, 2].map(|c| ch[c].iter().fold(0.0f64, |m, &v| m.max(v))))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::{angular_error, normalize};

    fn ill(r: f64, g: f64, b: f64) -> Illuminant {
        normalize(&Illuminant::new(r, g, b).unwrap()).unwrap()
    }

    fn lcg_image(w: usize, h: usize, seed: u64) -> RawImage {
        let mut s = seed;
        let mut next = move || {
            s = s
                .wrapping_mul(6364136223846793005)
                .wrapping_add(1442695040888963407);
            (s >> 11) as f64 / (1u64 << 53) as f64
        };
        let px: Vec<[f64; 3]> = (0..w * h).map(|_| [next(), next(), next()]).collect();
        RawImage::new(w, h, px).unwrap()
    }

    #[test]
    fn gray_world_uniform() {
        let img = RawImage::from_fn(3, 3, |_, _| [0.2, 0.4, 0.6]);
        let e = gray_world(&img).unwrap();
        assert!(angular_error(&e, &ill(0.2, 0.4, 0.6)).unwrap().0 < 1e-12);
    }

    #[test]
    fn gray_world_two_pixels() {
        let img = RawImage::new(2, 1, vec![[1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]).unwrap();
        let e = gray_world(&img).unwrap();
        assert_eq!(e, ill(0.5, 0.5, 0.0));
    }

    #[test]
    fn gray_world_matches_mean_oracle() {
        let img = lcg_image(8, 8, 7);
        let mut acc = [0.0; 3];
        for p in img.pixels() {
            for c in 0..3 {
                acc[c] += p[c];
            }
        }
        let oracle = ill(acc[0] / 64.0, acc[1] / 64.0, acc[2] / 64.0);
        let e = gray_world(&img).unwrap();
        for (a, b) in e.to_array().iter().zip(oracle.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn black_image_is_zero_vector() {
        let img = RawImage::from_fn(2, 2, |_, _| [0.0; 3]);
        assert!(matches!(gray_world(&img), Err(EstimatorError::Color(_))));
        assert!(matches!(max_rgb(&img), Err(EstimatorError::Color(_))));
        assert!(matches!(
            shades_of_gray(&img, 4.0),
            Err(EstimatorError::Color(_))
        ));
    }

    #[test]
    fn fully_masked_rejected() {
        let img = RawImage::from_fn(2, 1, |_, _| [0.5; 3])
            .with_mask(vec![true, true])
            .unwrap();
        assert!(matches!(
            gray_world(&img),
            Err(EstimatorError::NoUnmaskedPixels)
        ));
    }

    #[test]
    fn sog_p1_is_gray_world() {
        for seed in 0..10 {
            let img = lcg_image(9, 7, seed);
            let a = gray_world(&img).unwrap();
            assert_eq!(shades_of_gray(&img, 1.0).unwrap(), a);
            // The pooled route agrees to rounding.
            let ch = channels(&img).unwrap();
            let pooled = finish([0, 1, 2].map(|c| minkowski_pool(&ch[c], 1.0))).unwrap();
            assert!(angular_error(&a, &pooled).unwrap().0 < 1e-9);
        }
    }

    #[test]
    fn sog_large_p_approaches_max_rgb() {
        let mut px = vec![[0.1, 0.1, 0.1]; 16];
        px[5] = [1.0, 0.1, 0.1];
        let img = RawImage::new(4, 4, px).unwrap();
        let sog = shades_of_gray(&img, 64.0).unwrap();
        let mx = max_rgb(&img).unwrap();
        assert!(angular_error(&sog, &mx).unwrap().0 < 1.0);
    }

    #[test]
    fn sog_uniform_independent_of_p() {
        let img = RawImage::from_fn(3, 2, |_, _| [0.3, 0.5, 0.1]);
        let reference = ill(0.3, 0.5, 0.1);
        for p in [1.0, 2.0, 4.0, 8.0, 64.0] {
            let e = shades_of_gray(&img, p).unwrap();
            assert!(angular_error(&e, &reference).unwrap().0 < 1e-9);
        }
    }

    #[test]
    fn sog_rejects_small_p() {
        let img = RawImage::from_fn(1, 1, |_, _| [0.5; 3]);
        assert!(matches!(
            shades_of_gray(&img, 0.5),
            Err(EstimatorError::InvalidParameter(_))
        ));
        assert!(matches!(
            shades_of_gray(&img, f64::NAN),
            Err(EstimatorError::InvalidParameter(_))
        ));
    }

    #[test]
    fn max_rgb_examples() {
        let img = RawImage::new(2, 1, vec![[1.0, 0.0, 0.0], [0.0, 0.5, 0.0]]).unwrap();
        assert_eq!(max_rgb(&img).unwrap(), ill(1.0, 0.5, 0.0));
        let img = RawImage::from_fn(2, 2, |_, _| [0.2, 0.3, 0.4]);
        assert!(
            angular_error(&max_rgb(&img).unwrap(), &ill(0.2, 0.3, 0.4))
                .unwrap()
                .0
                < 1e-12
        );
    }

    #[test]
    fn max_rgb_matches_oracle() {
        let img = lcg_image(10, 6, 3);
        let mut m = [0.0f64; 3];
        for p in img.pixels() {
            for c in 0..3 {
                m[c] = m[c].max(p[c]);
            }
        }
        assert_eq!(max_rgb(&img).unwrap(), ill(m[0], m[1], m[2]));
    }
}
