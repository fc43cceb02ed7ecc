//! Seeded synthetic datasets with known answers.
//!
//! Scenes are integer reflectances times an integer illuminant vector, so a
//! 16-bit render is exact and, when every channel's reflectance sum is
//! equal, Gray World returns the rendering illuminant to rounding error.
//! Illuminants are snapped to that integer grid (at most `QUANT_LEVELS` per
//! channel), and the snapped value is what the answers report.
//!
//! Randomness is keyed by `(seed, image index)`, so images can be generated
//! in any order or in parallel with identical results.

mod oracle;

use std::fs;
use std::path::{Path, PathBuf};

use nalgebra::{Matrix3, Vector3};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{normalize, ColorError, Illuminant};
use crate::dataset::{
    prepare_sample, write_manifest, write_raw16_png, DatasetError, DatasetManifest, SampleRecord,
    SampleSource,
};
use crate::estimators::{gray_world, EstimatorError, Raw16Image, RawImage, Rect};
use crate::projective::{FitError, ProjectiveTransform, TrainingCorpus};

pub use oracle::{brute_force_global_fit, brute_force_weighted_fit};

/// Largest reflectance level.
pub const MAX_REFLECTANCE: u16 = 15;
/// Largest illuminant level; `MAX_REFLECTANCE · QUANT_LEVELS = 65535`.
pub const QUANT_LEVELS: u16 = 4369;
/// Minimum chromaticity coordinate of sampled illuminants.
pub const SIMPLEX_MARGIN: f64 = 0.05;
const MAX_ATTEMPTS: usize = 10_000;

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid synthetic spec: {0}")]
    InvalidSpec(String),
    #[error("planted transform for cluster {cluster} is not invertible")]
    SingularPlant { cluster: usize },
    #[error("image {index}: no admissible illuminant after {MAX_ATTEMPTS} draws")]
    Sampling { index: usize },
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Estimator(#[from] EstimatorError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum IlluminantSampler {
    /// Uniform over the chromaticity simplex, kept `SIMPLEX_MARGIN` from its edges.
    UniformSimplex,
    /// Images alternate between two clusters; each draw lies within
    /// `spread_deg` of its cluster center.
    TwoCluster {
        c1: [f64; 3],
        c2: [f64; 3],
        spread_deg: f64,
    },
}

impl IlluminantSampler {
    pub fn clusters(&self) -> usize {
        match self {
            IlluminantSampler::UniformSimplex => 1,
            IlluminantSampler::TwoCluster { .. } => 2,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReflectanceModel {
    /// Per-channel reflectance sums are equalized, so the scene averages to gray.
    #[default]
    AchromaticMean,
    /// Independent uniform reflectances.
    Random,
}

fn default_size() -> usize {
    64
}

fn default_camera() -> String {
    "synthetic".into()
}

fn default_folds() -> u32 {
    3
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub seed: u64,
    pub n_images: usize,
    #[serde(default = "default_size")]
    pub width: usize,
    #[serde(default = "default_size")]
    pub height: usize,
    pub sampler: IlluminantSampler,
    /// Row-major bias transforms, one per cluster, or empty for unbiased
    /// estimates. Estimates become `P⁻¹·truth`, so a correction has to
    /// recover `P`.
    #[serde(default)]
    pub plants: Vec<[f64; 9]>,
    #[serde(default)]
    pub reflectance: ReflectanceModel,
    /// Random angular perturbation (degrees, uniform in `[0, noise]`)
    /// applied to estimates before rendering.
    #[serde(default)]
    pub estimate_noise_deg: f64,
    /// Paint a masked random-color chart into the bottom-right corner.
    #[serde(default)]
    pub chart: bool,
    #[serde(default = "default_camera")]
    pub camera: String,
    /// Fold labels cycle `1..=folds`.
    #[serde(default = "default_folds")]
    pub folds: u32,
}

impl SynthSpec {
    pub fn from_json(s: &str) -> Result<Self, SynthError> {
        serde_json::from_str(s).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    pub fn from_toml(s: &str) -> Result<Self, SynthError> {
        toml::from_str(s).map_err(|e| SynthError::InvalidSpec(e.to_string()))
    }

    /// Read a spec file; `.toml` files are parsed as TOML, anything else as JSON.
    pub fn from_file(path: &Path) -> Result<Self, SynthError> {
        let text = fs::read_to_string(path).map_err(|source| SynthError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => Self::from_toml(&text),
            _ => Self::from_json(&text),
        }
    }

    fn validate(&self) -> Result<Vec<Option<Plant>>, SynthError> {
        let bad = |m: &str| Err(SynthError::InvalidSpec(m.into()));
        if self.n_images < 3 {
            return bad("n_images must be at least 3");
        }
        if self.width < 4 || self.height < 4 {
            return bad("images must be at least 4x4");
        }
        if self.folds == 0 {
            return bad("folds must be at least 1");
        }
        if !(self.estimate_noise_deg >= 0.0 && self.estimate_noise_deg < 45.0) {
            return bad("estimate_noise_deg must lie in [0, 45)");
        }
        if let IlluminantSampler::TwoCluster { c1, c2, spread_deg } = &self.sampler {
            let ok = |c: &[f64; 3]| c.iter().all(|v| v.is_finite() && *v > 0.0);
            if !ok(c1) || !ok(c2) {
                return bad("cluster centers must be strictly positive");
            }
            if !(*spread_deg >= 0.0 && *spread_deg < 45.0) {
                return bad("spread_deg must lie in [0, 45)");
            }
        }
        let clusters = self.sampler.clusters();
        if !self.plants.is_empty() && self.plants.len() != clusters {
            return Err(SynthError::InvalidSpec(format!(
                "expected {clusters} planted transform(s), got {}",
                self.plants.len()
            )));
        }
        if self.plants.is_empty() {
            return Ok(vec![None; clusters]);
        }
        self.plants
            .iter()
            .enumerate()
            .map(|(cluster, rows)| {
                let p = ProjectiveTransform::from_row_major(*rows)
                    .map_err(|_| SynthError::SingularPlant { cluster })?;
                if p.is_near_singular() {
                    return Err(SynthError::SingularPlant { cluster });
                }
                let inv = p
                    .matrix()
                    .try_inverse()
                    .ok_or(SynthError::SingularPlant { cluster })?;
                Ok(Some((p, inv)))
            })
            .collect()
    }

    fn chart_rect(&self) -> Option<Rect> {
        self.chart.then(|| {
            let (w, h) = ((self.width / 4).max(1), (self.height / 4).max(1));
            Rect {
                x: self.width - w,
                y: self.height - h,
                w,
                h,
            }
        })
    }
}

/// A planted transform and its inverse.
type Plant = (ProjectiveTransform, Matrix3<f64>);

/// Known answers for one image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthAnswer {
    pub truth: Illuminant,
    /// Gray World output of the rendered image. For `AchromaticMean` scenes
    /// this is the rendering illuminant.
    pub estimate: Illuminant,
    pub cluster: usize,
    pub plant: Option<ProjectiveTransform>,
}

/// A generated dataset held in memory.
#[derive(Debug, Clone)]
pub struct SynthDataset {
    pub manifest: DatasetManifest,
    pub images: Vec<Raw16Image>,
    /// Estimate/truth pairs, one per image.
    pub corpus: TrainingCorpus,
    pub answers: Vec<SynthAnswer>,
}

impl SampleSource for SynthDataset {
    fn manifest(&self) -> &DatasetManifest {
        &self.manifest
    }

    fn load(&self, index: usize) -> Result<RawImage, DatasetError> {
        let img = &self.images[index];
        prepare_sample(&self.manifest.records[index], img, (img.width, img.height))
    }
}

fn image_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index as u64);
    rng
}

fn unit_vec(v: [f64; 3]) -> Vector3<f64> {
    Vector3::from(v).normalize()
}

/// A direction within `max_deg` of `center` (unit), uniform over the cap.
fn perturb(rng: &mut impl Rng, center: &Vector3<f64>, max_deg: f64) -> Vector3<f64> {
    if max_deg == 0.0 {
        return *center;
    }
    let helper = if center.x.abs() < 0.9 {
        Vector3::x()
    } else {
        Vector3::y()
    };
    let t1 = center.cross(&helper).normalize();
    let t2 = center.cross(&t1);
    let cos_max = max_deg.to_radians().cos();
    let cos_t = 1.0 - rng.random::<f64>() * (1.0 - cos_max);
    let sin_t = (1.0 - cos_t * cos_t).max(0.0).sqrt();
    let phi = rng.random::<f64>() * std::f64::consts::TAU;
    center * cos_t + (t1 * phi.cos() + t2 * phi.sin()) * sin_t
}

fn in_simplex_margin(v: &Vector3<f64>) -> bool {
    let s = v.sum();
    s > 0.0 && v.iter().all(|x| x / s >= SIMPLEX_MARGIN)
}

fn sample_truth(
    rng: &mut impl Rng,
    sampler: &IlluminantSampler,
    index: usize,
) -> (usize, Vector3<f64>) {
    match sampler {
        IlluminantSampler::UniformSimplex => {
            let (mut x, mut y) = (rng.random::<f64>(), rng.random::<f64>());
            if x > y {
                std::mem::swap(&mut x, &mut y);
            }
            let span = 1.0 - 3.0 * SIMPLEX_MARGIN;
            let u = [x, y - x, 1.0 - y].map(|p| SIMPLEX_MARGIN + span * p);
            (0, Vector3::from(u))
        }
        IlluminantSampler::TwoCluster { c1, c2, spread_deg } => {
            let cluster = index % 2;
            let center = unit_vec(if cluster == 0 { *c1 } else { *c2 });
            (cluster, perturb(rng, &center, *spread_deg))
        }
    }
}

/// Snap a positive ray to integer levels with the largest channel at
/// `QUANT_LEVELS`. `None` if a channel would round to zero.
fn quantize(v: &Vector3<f64>) -> Option<[u16; 3]> {
    let max = v.max();
    if !(max > 0.0) || v.iter().any(|x| !(*x > 0.0)) {
        return None;
    }
    let q = v.map(|x| (x / max * f64::from(QUANT_LEVELS)).round());
    q.iter()
        .all(|x| *x >= 1.0)
        .then(|| [q.x as u16, q.y as u16, q.z as u16])
}

struct Draw {
    cluster: usize,
    levels: [u16; 3],
    truth: Vector3<f64>,
}

fn draw(
    rng: &mut impl Rng,
    spec: &SynthSpec,
    plants: &[Option<(ProjectiveTransform, Matrix3<f64>)>],
    index: usize,
) -> Result<Draw, SynthError> {
    for _ in 0..MAX_ATTEMPTS {
        let (cluster, t) = sample_truth(rng, &spec.sampler, index);
        if !in_simplex_margin(&t) {
            continue;
        }
        let e = match &plants[cluster] {
            Some((_, inv)) => inv * t.normalize(),
            None => t.normalize(),
        };
        if !in_simplex_margin(&e) {
            continue;
        }
        // The truth follows from the snapped noise-free estimate; noise only
        // moves the rendered estimate.
        let Some(clean) = quantize(&e) else { continue };
        let clean = Vector3::from(clean.map(f64::from)).normalize();
        let truth = match &plants[cluster] {
            Some((p, _)) => p.matrix() * clean,
            None => clean,
        };
        let noisy = perturb(rng, &clean, spec.estimate_noise_deg);
        let Some(levels) = quantize(&noisy) else {
            continue;
        };
        if truth.iter().all(|x| *x > 0.0) {
            return Ok(Draw {
                cluster,
                levels,
                truth,
            });
        }
    }
    Err(SynthError::Sampling { index })
}

/// Integer reflectances, row-major, three channels per pixel. Chart pixels
/// are random and excluded from equalization.
fn reflectances(rng: &mut impl Rng, spec: &SynthSpec, chart: Option<Rect>) -> Vec<[u16; 3]> {
    let (w, h) = (spec.width, spec.height);
    let in_chart = |k: usize| chart.is_some_and(|r| (k % w) >= r.x && (k / w) >= r.y);
    let mut refl: Vec<[u16; 3]> = (0..w * h)
        .map(|_| std::array::from_fn(|_| rng.random_range(1..MAX_REFLECTANCE)))
        .collect();
    if spec.reflectance == ReflectanceModel::AchromaticMean {
        let mut scene: Vec<usize> = (0..w * h).filter(|k| !in_chart(*k)).collect();
        let sums: [u64; 3] =
            std::array::from_fn(|c| scene.iter().map(|&k| u64::from(refl[k][c])).sum());
        let target = *sums.iter().max().unwrap();
        for c in 0..3 {
            scene.shuffle(rng);
            let mut deficit = target - sums[c];
            for &k in &scene {
                if deficit == 0 {
                    break;
                }
                let add = u64::from(MAX_REFLECTANCE - refl[k][c]).min(deficit);
                refl[k][c] += add as u16;
                deficit -= add;
            }
            // Headroom is at least one level per pixel, so this only fails
            // for scenes with a handful of pixels.
            debug_assert_eq!(deficit, 0);
        }
    }
    refl
}

struct Rendered {
    image: Raw16Image,
    answer: SynthAnswer,
}

fn render_one(
    spec: &SynthSpec,
    plants: &[Option<(ProjectiveTransform, Matrix3<f64>)>],
    index: usize,
    with_image: bool,
) -> Result<Rendered, SynthError> {
    let mut rng = image_rng(spec.seed, index);
    let d = draw(&mut rng, spec, plants, index)?;
    let plant = plants[d.cluster].as_ref().map(|(p, _)| *p);
    let truth = normalize(&Illuminant::from_vector(d.truth)?)?;
    let ray = Illuminant::new(
        f64::from(d.levels[0]),
        f64::from(d.levels[1]),
        f64::from(d.levels[2]),
    )?;
    if !with_image {
        let answer = SynthAnswer {
            truth,
            estimate: normalize(&ray)?,
            cluster: d.cluster,
            plant,
        };
        return Ok(Rendered {
            image: Raw16Image {
                width: 0,
                height: 0,
                data: vec![],
            },
            answer,
        });
    }

    let chart = spec.chart_rect();
    let refl = reflectances(&mut rng, spec, chart);
    let w = spec.width;
    let mut data = Vec::with_capacity(refl.len() * 3);
    for (k, r) in refl.iter().enumerate() {
        let charted = chart.is_some_and(|c| (k % w) >= c.x && (k / w) >= c.y);
        for (v, level) in r.iter().zip(d.levels) {
            data.push(if charted {
                rng.random::<u16>()
            } else {
                v * level
            });
        }
    }
    let image = Raw16Image::new(spec.width, spec.height, data)?;
    let estimate = if spec.reflectance == ReflectanceModel::AchromaticMean {
        normalize(&ray)?
    } else {
        let mut img = crate::estimators::normalize_raw(&image, [0; 3], [65535; 3])?;
        img.mask_rects(chart.as_slice());
        gray_world(&img)?
    };
    Ok(Rendered {
        image,
        answer: SynthAnswer {
            truth,
            estimate,
            cluster: d.cluster,
            plant,
        },
    })
}

fn corpus_from(answers: &[SynthAnswer], camera: &str) -> Result<TrainingCorpus, SynthError> {
    Ok(TrainingCorpus::new(
        answers.iter().map(|a| a.estimate).collect(),
        answers.iter().map(|a| a.truth).collect(),
        "gw",
        camera,
    )?)
}

/// Estimate/truth pairs only, without rendering images. Matches the
/// corpus of [`generate`] for `AchromaticMean` specs.
pub fn generate_pairs(spec: &SynthSpec) -> Result<(TrainingCorpus, Vec<SynthAnswer>), SynthError> {
    let plants = spec.validate()?;
    let answers = (0..spec.n_images)
        .into_par_iter()
        .map(|i| render_one(spec, &plants, i, false).map(|r| r.answer))
        .collect::<Result<Vec<_>, _>>()?;
    Ok((corpus_from(&answers, &spec.camera)?, answers))
}

/// Render the full dataset.
pub fn generate(spec: &SynthSpec) -> Result<SynthDataset, SynthError> {
    let plants = spec.validate()?;
    let rendered = (0..spec.n_images)
        .into_par_iter()
        .map(|i| render_one(spec, &plants, i, true))
        .collect::<Result<Vec<_>, _>>()?;
    let chart = spec.chart_rect();
    let (images, answers): (Vec<_>, Vec<_>) =
        rendered.into_iter().map(|r| (r.image, r.answer)).unzip();
    let records = answers
        .iter()
        .enumerate()
        .map(|(i, a)| SampleRecord {
            image_path: PathBuf::from(image_name(i)),
            gt_illuminant: a.truth,
            black_level: [0; 3],
            saturation_level: [65535; 3],
            mask_rects: chart.into_iter().collect(),
            camera_id: spec.camera.clone(),
            fold: Some(i as u32 % spec.folds + 1),
        })
        .collect();
    let manifest = DatasetManifest {
        name: spec.camera.clone(),
        records,
    };
    let corpus = corpus_from(&answers, &spec.camera)?;
    Ok(SynthDataset {
        manifest,
        images,
        corpus,
        answers,
    })
}

fn image_name(i: usize) -> String {
    format!("img_{i:05}.png")
}

/// Write images, `manifest.csv`, `corpus.json` and `answers.json` into
/// `dir` (created if needed). Output bytes depend only on the dataset.
pub fn export(ds: &SynthDataset, dir: &Path) -> Result<PathBuf, SynthError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| SynthError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    ds.images
        .par_iter()
        .enumerate()
        .try_for_each(|(i, img)| write_raw16_png(&dir.join(image_name(i)), img))?;
    let manifest_path = dir.join("manifest.csv");
    let mut manifest = ds.manifest.clone();
    for r in &mut manifest.records {
        r.image_path = dir.join(&r.image_path);
    }
    let file = fs::File::create(&manifest_path).map_err(io(&manifest_path))?;
    write_manifest(&manifest, dir, file)?;
    for (name, json) in [
        ("corpus.json", serde_json::to_string_pretty(&ds.corpus)),
        ("answers.json", serde_json::to_string_pretty(&ds.answers)),
    ] {
        let path = dir.join(name);
        let json = json.map_err(|e| SynthError::InvalidSpec(e.to_string()))?;
        fs::write(&path, json + "\n").map_err(io(&path))?;
    }
    Ok(manifest_path)
}

/// A random transform `I + strength·U` (entries of `U` uniform in
/// `[-1, 1]`) with condition number at most `max_cond`, keyed by
/// `(seed, index)`.
pub fn random_plant(seed: u64, index: usize, strength: f64, max_cond: f64) -> ProjectiveTransform {
    let mut rng = image_rng(seed ^ 0x9e37_79b9_7f4a_7c15, index);
    loop {
        let m =
            Matrix3::identity() + Matrix3::from_fn(|_, _| strength * rng.random_range(-1.0..=1.0));
        let sv = m.singular_values();
        if sv.min() > 0.0 && sv.max() / sv.min() <= max_cond {
            return ProjectiveTransform::from_matrix(m).expect("finite matrix");
        }
    }
}
