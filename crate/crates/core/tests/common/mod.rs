//! Shared fixtures for the integration tests.
#![allow(dead_code)]

use nalgebra::{Matrix3, Vector3};
use projcc::estimators::RawImage;
use projcc::projective::{ProjectiveTransform, TrainingCorpus};
use projcc::synth::{IlluminantSampler, ReflectanceModel, SynthSpec};
use projcc::Illuminant;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// Angle in degrees between two raw vectors.
pub fn angle(a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
    a.cross(b).norm().atan2(a.dot(b)).to_degrees()
}

/// Positive ray with every channel in `[0.05, 1]`.
pub fn random_ray(rng: &mut impl Rng) -> Illuminant {
    Illuminant::new(
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
        rng.random_range(0.05..1.0),
    )
    .unwrap()
}

/// Rotate `v` by `deg` degrees about a random axis orthogonal to it.
pub fn perturb(v: &Vector3<f64>, deg: f64, rng: &mut impl Rng) -> Vector3<f64> {
    let u = v.normalize();
    let r = Vector3::new(
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
        rng.random_range(-1.0..1.0),
    );
    let axis = (r - u * u.dot(&r)).normalize();
    let t = deg.to_radians();
    (u * t.cos() + axis * t.sin()) * v.norm()
}

/// `n` pairs with truth `s_i·P·e_i`, scales `s_i ∈ [0.1, 10]`, optional
/// angular noise on the truth.
pub fn planted_corpus(
    p: &ProjectiveTransform,
    n: usize,
    noise_deg: f64,
    rng: &mut impl Rng,
) -> TrainingCorpus {
    let (est, truth): (Vec<_>, Vec<_>) = (0..n)
        .map(|_| {
            let e = random_ray(rng);
            let mut t = p.matrix() * e.as_vector() * rng.random_range(0.1..10.0);
            if noise_deg > 0.0 {
                t = perturb(&t, rng.random_range(0.0..noise_deg), rng);
            }
            (e, Illuminant::from_vector(t).unwrap())
        })
        .unzip();
    TrainingCorpus::new(est, truth, "gw", "synthetic").unwrap()
}

/// Worst angle between `fitted·q` and `planted·q` over `queries`.
pub fn worst_action_error(
    fitted: &Matrix3<f64>,
    planted: &Matrix3<f64>,
    queries: &[Illuminant],
) -> f64 {
    queries
        .iter()
        .map(|q| angle(&(fitted * q.as_vector()), &(planted * q.as_vector())))
        .fold(0.0, f64::max)
}

/// Textured random image with values in `[0, 1]`.
pub fn random_image(w: usize, h: usize, rng: &mut impl Rng) -> RawImage {
    let px = (0..w * h)
        .map(|_| {
            [
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
                rng.random_range(0.0..1.0),
            ]
        })
        .collect();
    RawImage::new(w, h, px).unwrap()
}

pub const SHEAR: [f64; 9] = [1.0, 0.7, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];
pub const IDENTITY: [f64; 9] = [1.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 1.0];

/// Two illuminant clusters 35° apart, one unbiased and one sheared.
pub fn two_cluster_spec(seed: u64, n: usize) -> SynthSpec {
    SynthSpec {
        seed,
        n_images: n,
        width: 16,
        height: 16,
        sampler: IlluminantSampler::TwoCluster {
            c1: [1.0, 1.0, 1.0],
            c2: [4.0, 1.0, 1.0],
            spread_deg: 4.0,
        },
        plants: vec![IDENTITY, SHEAR],
        reflectance: ReflectanceModel::AchromaticMean,
        estimate_noise_deg: 0.0,
        chart: false,
        camera: "synthetic".into(),
        folds: 3,
    }
}
