//! Cross-validated evaluation of estimator and correction pipelines.
//!
//! Errors are pooled over all folds of a camera before summarizing. Images
//! that fail to load, estimate or correct are excluded and counted rather
//! than aborting the run.

mod report;
mod stats;

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{angular_error, Illuminant};
use crate::dataset::{split_folds, DatasetError, SampleSource};
use crate::estimators::EstimatorConfig;
use crate::projective::{CorrectionMode, CorrectionSettings, Corrector, FitError, TrainingCorpus};

pub use report::{emit_report, render_report, ReportFormat};
pub use stats::{summarize, ErrorStats};

pub const REPORT_SCHEMA_VERSION: u32 = 1;
pub const DEFAULT_FOLDS: u32 = 3;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("cannot summarize an empty error list")]
    EmptyInput,
    #[error("non-finite angular error {0}")]
    NonFiniteError(f64),
    #[error("fold {fold} of camera {camera}: record {index} is in both train and test sets")]
    FoldLeak {
        camera: String,
        fold: u32,
        index: usize,
    },
    #[error("unknown report format '{0}' (expected table, csv or json)")]
    UnknownFormat(String),
    #[error("unknown mode '{0}' (expected raw, global, apap or apap-lut)")]
    UnknownMode(String),
    #[error("invalid evaluation config: {0}")]
    InvalidConfig(String),
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        source: std::io::Error,
    },
    #[error("report JSON: {0}")]
    Json(String),
}

/// Raw estimator output or one of the correction modes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EvalMode {
    Raw,
    Global,
    Apap,
    ApapLut,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [
        EvalMode::Raw,
        EvalMode::Global,
        EvalMode::Apap,
        EvalMode::ApapLut,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            EvalMode::Raw => "raw",
            EvalMode::Global => "global",
            EvalMode::Apap => "apap",
            EvalMode::ApapLut => "apap-lut",
        }
    }

    pub fn correction(self) -> Option<CorrectionMode> {
        match self {
            EvalMode::Raw => None,
            EvalMode::Global => Some(CorrectionMode::Global),
            EvalMode::Apap => Some(CorrectionMode::Apap),
            EvalMode::ApapLut => Some(CorrectionMode::ApapLut),
        }
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for EvalMode {
    type Err = EvalError;

    fn from_str(s: &str) -> Result<Self, EvalError> {
        match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
            "raw" => Ok(EvalMode::Raw),
            "global" => Ok(EvalMode::Global),
            "apap" => Ok(EvalMode::Apap),
            "apap-lut" | "lut" => Ok(EvalMode::ApapLut),
            _ => Err(EvalError::UnknownMode(s.to_string())),
        }
    }
}

#[derive(Debug, Clone)]
pub struct EvalConfig {
    pub estimators: Vec<EstimatorConfig>,
    pub modes: Vec<EvalMode>,
    pub settings: CorrectionSettings,
    pub folds: u32,
    /// Record wall-clock time of each correction call. Off by default so
    /// reports are reproducible byte for byte.
    pub timing: bool,
}

impl EvalConfig {
    pub fn new(estimators: Vec<EstimatorConfig>, modes: Vec<EvalMode>) -> Self {
        Self {
            estimators,
            modes,
            settings: CorrectionSettings::default(),
            folds: DEFAULT_FOLDS,
            timing: false,
        }
    }
}

/// An image left out of a row's statistics.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExcludedImage {
    pub path: String,
    pub reason: String,
}

/// Per-query correction time in milliseconds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimingStats {
    pub mean_ms: f64,
    pub median_ms: f64,
    pub max_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub camera: String,
    pub estimator: String,
    pub mode: EvalMode,
    /// `None` only when every image of the row was excluded.
    pub stats: Option<ErrorStats>,
    pub excluded: Vec<ExcludedImage>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub timing: Option<TimingStats>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub schema_version: u32,
    pub dataset: String,
    pub rows: Vec<ReportRow>,
}

impl EvalReport {
    pub fn row(&self, camera: &str, estimator: &str, mode: EvalMode) -> Option<&ReportRow> {
        self.rows
            .iter()
            .find(|r| r.camera == camera && r.estimator == estimator && r.mode == mode)
    }

    /// Total number of excluded (image, row) entries.
    pub fn warnings(&self) -> usize {
        self.rows.iter().map(|r| r.excluded.len()).sum()
    }
}

type Estimates = Vec<Result<Illuminant, String>>;

fn estimate_all(source: &dyn SampleSource, cfg: &EstimatorConfig) -> Estimates {
    let n = source.manifest().records.len();
    (0..n)
        .into_par_iter()
        .map(|i| {
            let img = source.load(i).map_err(|e| e.to_string())?;
            cfg.estimate(&img).map_err(|e| e.to_string())
        })
        .collect()
}

struct Outcome {
    index: usize,
    result: Result<f64, String>,
    millis: Option<f64>,
}

fn timing_stats(ms: &[f64]) -> Option<TimingStats> {
    let s = summarize(ms).ok()?;
    let max = ms.iter().copied().fold(f64::MIN, f64::max);
    Some(TimingStats {
        mean_ms: s.mean,
        median_ms: s.median,
        max_ms: max,
    })
}

fn evaluate_fold(
    source: &dyn SampleSource,
    estimates: &Estimates,
    train: &[usize],
    test: &[usize],
    mode: EvalMode,
    cfg: &EvalConfig,
    estimator: &str,
) -> Vec<Outcome> {
    let records = &source.manifest().records;
    let corrector = match mode.correction() {
        None => None,
        Some(cm) => {
            let pairs: Vec<_> = train
                .iter()
                .filter_map(|&i| estimates[i].as_ref().ok().map(|e| (i, *e)))
                .collect();
            let corpus = TrainingCorpus::new(
                pairs.iter().map(|(_, e)| *e).collect(),
                pairs
                    .iter()
                    .map(|(i, _)| records[*i].gt_illuminant)
                    .collect(),
                estimator,
                records
                    .get(test[0])
                    .map(|r| r.camera_id.clone())
                    .unwrap_or_default(),
            );
            match corpus
                .map_err(|e| e.to_string())
                .and_then(|c| Corrector::train(&c, cm, &cfg.settings).map_err(|e| e.to_string()))
            {
                Ok(c) => Some(c),
                Err(reason) => {
                    let reason = format!("training failed: {reason}");
                    return test
                        .iter()
                        .map(|&index| Outcome {
                            index,
                            result: Err(reason.clone()),
                            millis: None,
                        })
                        .collect();
                }
            }
        }
    };
    test.par_iter()
        .map(|&index| {
            let gt = &records[index].gt_illuminant;
            let est = match &estimates[index] {
                Ok(e) => e,
                Err(reason) => {
                    return Outcome {
                        index,
                        result: Err(reason.clone()),
                        millis: None,
                    }
                }
            };
            let (corrected, millis) = match &corrector {
                None => (Ok(*est), None),
                Some(c) => {
                    let start = cfg.timing.then(Instant::now);
                    let out = c
                        .correct(est)
                        .map(|c| c.illuminant)
                        .map_err(|e| e.to_string());
                    (out, start.map(|s| s.elapsed().as_secs_f64() * 1e3))
                }
            };
            let result = corrected.and_then(|c| {
                angular_error(&c, gt)
                    .map(|a| a.0)
                    .map_err(|e| e.to_string())
            });
            Outcome {
                index,
                result,
                millis,
            }
        })
        .collect()
}

/// Evaluate every (camera, estimator, mode) combination with per-camera
/// k-fold cross-validation. Rows come out sorted by camera, then in the
/// configured estimator and mode order.
pub fn run_cross_validation(
    source: &dyn SampleSource,
    cfg: &EvalConfig,
) -> Result<EvalReport, EvalError> {
    if cfg.estimators.is_empty() || cfg.modes.is_empty() {
        return Err(EvalError::InvalidConfig(
            "at least one estimator and one mode are required".into(),
        ));
    }
    cfg.settings.apap.validate()?;
    cfg.settings.als.validate()?;
    let manifest = source.manifest();
    let splits = split_folds(manifest, cfg.folds)?;
    for s in &splits {
        let train: BTreeSet<_> = s.train.iter().collect();
        if let Some(&index) = s.test.iter().find(|i| train.contains(i)) {
            return Err(EvalError::FoldLeak {
                camera: s.camera.clone(),
                fold: s.fold,
                index,
            });
        }
    }
    let cameras: BTreeSet<&str> = splits.iter().map(|s| s.camera.as_str()).collect();

    let mut rows = Vec::new();
    for est_cfg in &cfg.estimators {
        let tag = est_cfg.method.tag();
        let estimates = estimate_all(source, est_cfg);
        for &camera in &cameras {
            for &mode in &cfg.modes {
                let mut outcomes: Vec<Outcome> = splits
                    .iter()
                    .filter(|s| s.camera == camera)
                    .flat_map(|s| {
                        evaluate_fold(source, &estimates, &s.train, &s.test, mode, cfg, tag)
                    })
                    .collect();
                outcomes.sort_by_key(|o| o.index);
                let mut errors = Vec::new();
                let mut excluded = Vec::new();
                for o in &outcomes {
                    match &o.result {
                        Ok(e) => errors.push(*e),
                        Err(reason) => excluded.push(ExcludedImage {
                            path: manifest.records[o.index].image_path.display().to_string(),
                            reason: reason.clone(),
                        }),
                    }
                }
                if !excluded.is_empty() {
                    log::warn!(
                        "{camera}/{tag}/{mode}: {} image(s) excluded",
                        excluded.len()
                    );
                }
                let millis: Vec<f64> = outcomes.iter().filter_map(|o| o.millis).collect();
                rows.push(ReportRow {
                    camera: camera.to_string(),
                    estimator: tag.to_string(),
                    mode,
                    stats: summarize(&errors).ok(),
                    excluded,
                    timing: timing_stats(&millis),
                });
            }
        }
    }
    rows.sort_by_key(|r| r.camera.clone());
    Ok(EvalReport {
        schema_version: REPORT_SCHEMA_VERSION,
        dataset: manifest.name.clone(),
        rows,
    })
}
