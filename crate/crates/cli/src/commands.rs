use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{ArgGroup, Args};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use projcc::dataset::{
    decode_raw16, load_manifest, to_raw16, working_size, write_raw16_png, DiskDataset, SampleSource,
};
use projcc::estimators::{downsample, normalize_raw, Method, Rect};
use projcc::eval::{render_report, run_cross_validation, EvalConfig, EvalMode, ReportFormat};
use projcc::lut::{self, LutGrid, HEADER_LEN};
use projcc::projective::{
    fit_global, white_balance, AlsConfig, ApapConfig, CorrectionMode, Corrector,
    ProjectiveTransform, TrainingCorpus, TransformFile,
};
use projcc::synth::{export, generate, SynthSpec};
use projcc::{normalize, Illuminant};

use crate::config::Settings;
use crate::error::{data, CliError};

/// Model file written by `train --mode apap`: the corpus plus the settings
/// each query is fitted with.
#[derive(Debug, Serialize, Deserialize)]
pub struct ApapModel {
    pub corpus: TrainingCorpus,
    pub apap: ApapConfig,
    pub als: AlsConfig,
}

fn parse_method(s: &str) -> Result<Method, CliError> {
    s.parse().map_err(CliError::Config)
}

fn parse_mode(s: &str) -> Result<CorrectionMode, CliError> {
    match s.trim().to_ascii_lowercase().replace('_', "-").as_str() {
        "global" => Ok(CorrectionMode::Global),
        "apap" => Ok(CorrectionMode::Apap),
        "apap-lut" | "lut" => Ok(CorrectionMode::ApapLut),
        _ => Err(CliError::Config(format!(
            "unknown mode '{s}' (expected global, apap or apap-lut)"
        ))),
    }
}

fn parse_triple<T: std::str::FromStr>(flag: &str, s: &str) -> Result<[T; 3], CliError> {
    let bad = || {
        CliError::Config(format!(
            "--{flag} expects three comma-separated numbers, got '{s}'"
        ))
    };
    let parts: Vec<T> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    parts.try_into().map_err(|_| bad())
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    fs::write(path, bytes)
        .map_err(|e| CliError::Data(format!("cannot write {}: {e}", path.display())))
}

fn read_file(path: &Path) -> Result<Vec<u8>, CliError> {
    fs::read(path).map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset manifest CSV.
    #[arg(long)]
    pub manifest: PathBuf,
    /// gw, maxrgb, sog, ge1, ge2 or pca.
    #[arg(long, default_value = "gw")]
    pub estimator: String,
    /// global, apap or apap-lut.
    #[arg(long, default_value = "global")]
    pub mode: String,
    /// Output file: JSON for global/apap, APLU binary for apap-lut.
    #[arg(long)]
    pub out: PathBuf,
    /// Train only on records with these fold labels (comma-separated).
    #[arg(long, value_delimiter = ',', value_name = "FOLDS")]
    pub fold_train: Vec<u32>,
    /// Train only on records of this camera.
    #[arg(long)]
    pub camera: Option<String>,
}

pub fn train(args: &TrainArgs, settings: &Settings) -> Result<(), CliError> {
    let method = parse_method(&args.estimator)?;
    let mode = parse_mode(&args.mode)?;
    let manifest = load_manifest(&args.manifest)?;
    let estimator = settings.estimator(method);
    let records: Vec<_> = manifest
        .records
        .iter()
        .filter(|r| {
            args.fold_train.is_empty() || r.fold.is_some_and(|f| args.fold_train.contains(&f))
        })
        .filter(|r| args.camera.as_ref().is_none_or(|c| &r.camera_id == c))
        .collect();
    if records.is_empty() {
        return Err(CliError::Data(
            "no manifest records match the fold/camera filters".into(),
        ));
    }
    let results: Vec<_> = records
        .par_iter()
        .map(|r| {
            let img = projcc::dataset::load_sample(r, settings.downsample)?;
            Ok::<_, CliError>(estimator.estimate(&img)?)
        })
        .collect();
    let mut estimates = Vec::new();
    let mut truths = Vec::new();
    for (r, res) in records.iter().zip(results) {
        match res {
            Ok(e) => {
                estimates.push(e);
                truths.push(r.gt_illuminant);
            }
            Err(e) => log::warn!("skipping {}: {e}", r.image_path.display()),
        }
    }
    let camera = args.camera.clone().unwrap_or_else(|| {
        let first = &records[0].camera_id;
        if records.iter().all(|r| &r.camera_id == first) {
            first.clone()
        } else {
            "mixed".into()
        }
    });
    let skipped = records.len() - estimates.len();
    let corpus = TrainingCorpus::new(estimates, truths, method.tag(), camera.clone())?;
    let cs = settings.correction();
    match mode {
        CorrectionMode::Global => {
            let fit = fit_global(&corpus, &cs.als)?;
            if !fit.converged {
                log::warn!("ALS hit the iteration cap; using the last iterate");
            }
            let file = TransformFile {
                m: fit.transform,
                method: method.tag().into(),
                camera,
            };
            let json = serde_json::to_string_pretty(&file).map_err(data)?;
            write_file(&args.out, (json + "\n").as_bytes())?;
            eprintln!(
                "global transform from {} pairs ({} iterations)",
                corpus.len(),
                fit.iterations
            );
        }
        CorrectionMode::Apap => {
            cs.apap.validate()?;
            let model = ApapModel {
                corpus: corpus.clone(),
                apap: cs.apap,
                als: cs.als,
            };
            let json = serde_json::to_string_pretty(&model).map_err(data)?;
            write_file(&args.out, (json + "\n").as_bytes())?;
            eprintln!("APAP model with {} pairs", corpus.len());
        }
        CorrectionMode::ApapLut => {
            let (grid, failures) =
                LutGrid::build_with_report(&corpus, cs.lut_size, cs.lut_bounds, &cs.apap, &cs.als)?;
            for f in &failures {
                log::warn!(
                    "LUT node ({}, {}) fell back to the global transform: {}",
                    f.i,
                    f.j,
                    f.error
                );
            }
            write_file(&args.out, &lut::serialize(&grid))?;
            eprintln!("{0}x{0} LUT from {1} pairs", grid.size(), corpus.len());
        }
    }
    if skipped > 0 {
        eprintln!("warning: {skipped} record(s) skipped");
    }
    Ok(())
}

#[derive(Debug, Args)]
#[command(group(ArgGroup::new("source").required(true).args(["input", "estimate"])))]
#[command(group(ArgGroup::new("model").required(true).args(["transform", "lut", "apap"])))]
pub struct CorrectArgs {
    /// 16-bit PNG/TIFF to estimate from.
    #[arg(long)]
    pub input: Option<PathBuf>,
    /// Estimate given directly as R,G,B.
    #[arg(long, value_name = "R,G,B", allow_hyphen_values = true)]
    pub estimate: Option<String>,
    /// Global transform JSON.
    #[arg(long)]
    pub transform: Option<PathBuf>,
    /// APLU lookup table.
    #[arg(long)]
    pub lut: Option<PathBuf>,
    /// APAP model JSON.
    #[arg(long)]
    pub apap: Option<PathBuf>,
    #[arg(long, default_value = "gw")]
    pub estimator: String,
    /// Per-channel black level for --input.
    #[arg(long, value_name = "R,G,B", default_value = "0,0,0")]
    pub black: String,
    /// Per-channel saturation level for --input.
    #[arg(long, value_name = "R,G,B", default_value = "65535,65535,65535")]
    pub saturation: String,
    /// Rectangles to ignore in --input, "x,y,w,h;x,y,w,h".
    #[arg(long)]
    pub mask: Option<String>,
    /// Write the image white-balanced by the corrected illuminant.
    #[arg(long, requires = "input")]
    pub preview: Option<PathBuf>,
    /// Decimal places printed.
    #[arg(long, default_value_t = 4)]
    pub precision: usize,
}

fn parse_mask(s: &str) -> Result<Vec<Rect>, CliError> {
    s.split(';')
        .filter(|r| !r.trim().is_empty())
        .map(|r| {
            let [x, y, w, h] = parse_triple_or_quad(r)?;
            Ok(Rect { x, y, w, h })
        })
        .collect()
}

fn parse_triple_or_quad(s: &str) -> Result<[usize; 4], CliError> {
    let bad = || CliError::Config(format!("--mask rectangles are x,y,w,h; got '{s}'"));
    let v: Vec<usize> = s
        .split(',')
        .map(|p| p.trim().parse().map_err(|_| bad()))
        .collect::<Result<_, _>>()?;
    v.try_into().map_err(|_| bad())
}

fn load_corrector(args: &CorrectArgs) -> Result<Corrector, CliError> {
    if let Some(p) = &args.transform {
        let file: TransformFile = serde_json::from_slice(&read_file(p)?)
            .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
        return Ok(Corrector::Global(file.m));
    }
    if let Some(p) = &args.lut {
        return Ok(Corrector::Lut(
            lut::deserialize(&read_file(p)?)
                .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?,
        ));
    }
    let p = args.apap.as_ref().expect("clap enforces one model");
    let model: ApapModel = serde_json::from_slice(&read_file(p)?)
        .map_err(|e| CliError::Data(format!("{}: {e}", p.display())))?;
    model.apap.validate()?;
    Ok(Corrector::Apap {
        corpus: model.corpus,
        apap: model.apap,
        als: model.als,
    })
}

pub fn correct(args: &CorrectArgs, settings: &Settings) -> Result<(), CliError> {
    let corrector = load_corrector(args)?;
    let mut full = None;
    let estimate = match (&args.estimate, &args.input) {
        (Some(s), _) => {
            let [r, g, b] = parse_triple::<f64>("estimate", s)?;
            let est = Illuminant::new(r, g, b)
                .map_err(|e| CliError::Config(format!("--estimate: {e}")))?;
            if !est.is_non_negative() {
                return Err(CliError::Config(format!(
                    "--estimate: channels must be non-negative, got '{s}'"
                )));
            }
            est
        }
        (None, Some(path)) => {
            let method = parse_method(&args.estimator)?;
            let black = parse_triple::<u32>("black", &args.black)?;
            let sat = parse_triple::<u32>("saturation", &args.saturation)?;
            let raw = decode_raw16(path)?;
            let img = normalize_raw(&raw, black, sat)?;
            let mut masked = img.clone();
            if let Some(m) = &args.mask {
                masked.mask_rects(&parse_mask(m)?);
            }
            let (w, h) = working_size(masked.width(), masked.height(), settings.downsample);
            let small = if (w, h) == (masked.width(), masked.height()) {
                masked
            } else {
                downsample(&masked, w, h)?
            };
            let est = settings.estimator(method).estimate(&small)?;
            full = Some(img);
            est
        }
        (None, None) => unreachable!("clap enforces one source"),
    };
    let out = corrector.correct(&estimate)?;
    if out.clamped {
        eprintln!("warning: negative channels were clamped to zero");
    }
    let v = normalize(&out.illuminant)?;
    let p = args.precision;
    println!("{:.p$},{:.p$},{:.p$}", v.r(), v.g(), v.b());
    if let (Some(path), Some(img)) = (&args.preview, full) {
        let balanced = white_balance(&img, &v)?;
        write_raw16_png(path, &to_raw16(&balanced))?;
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    /// Comma-separated estimators.
    #[arg(long, default_value = "gw")]
    pub estimators: String,
    /// Comma-separated subset of raw, global, apap, apap-lut.
    #[arg(long, default_value = "raw,global,apap,apap-lut")]
    pub modes: String,
    /// table, csv or json.
    #[arg(long, default_value = "table")]
    pub format: String,
    /// Write the report here instead of stdout.
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Record per-query correction time.
    #[arg(long)]
    pub timing: bool,
}

fn split_list(s: &str) -> impl Iterator<Item = &str> {
    s.split(',').map(str::trim).filter(|x| !x.is_empty())
}

pub fn eval(args: &EvalArgs, settings: &Settings) -> Result<(), CliError> {
    let estimators = split_list(&args.estimators)
        .map(|m| parse_method(m).map(|m| settings.estimator(m)))
        .collect::<Result<Vec<_>, _>>()?;
    let modes = split_list(&args.modes)
        .map(str::parse::<EvalMode>)
        .collect::<Result<Vec<_>, _>>()?;
    let format: ReportFormat = args.format.parse()?;
    let manifest = load_manifest(&args.manifest)?;
    let source = DiskDataset {
        manifest,
        target: settings.downsample,
    };
    let mut cfg = EvalConfig::new(estimators, modes);
    cfg.settings = settings.correction();
    cfg.folds = settings.folds;
    cfg.timing = args.timing;
    let report = run_cross_validation(&source as &dyn SampleSource, &cfg)?;
    let text = render_report(&report, format)?;
    match &args.out {
        Some(p) => write_file(p, text.as_bytes())?,
        None => std::io::stdout().write_all(text.as_bytes()).map_err(data)?,
    }
    if report.warnings() > 0 {
        eprintln!(
            "warning: {} image evaluation(s) excluded",
            report.warnings()
        );
    }
    Ok(())
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Spec file (.json or .toml).
    #[arg(long)]
    pub spec: PathBuf,
    /// Output directory.
    #[arg(long)]
    pub out: PathBuf,
}

pub fn synth(args: &SynthArgs) -> Result<(), CliError> {
    let spec = SynthSpec::from_file(&args.spec)?;
    let ds = generate(&spec)?;
    let manifest = export(&ds, &args.out)?;
    println!("{}", manifest.display());
    Ok(())
}

#[derive(Debug, Args)]
pub struct LutInspectArgs {
    /// APLU file.
    pub file: PathBuf,
    /// Print only the header.
    #[arg(long)]
    pub header_only: bool,
}

fn fmt_matrix(m: &ProjectiveTransform) -> String {
    m.to_row_major()
        .iter()
        .map(|v| format!("{v:.6e}"))
        .collect::<Vec<_>>()
        .join(" ")
}

pub fn lut_inspect(args: &LutInspectArgs) -> Result<(), CliError> {
    let bytes = read_file(&args.file)?;
    let grid = lut::deserialize(&bytes)
        .map_err(|e| CliError::Data(format!("{}: {e}", args.file.display())))?;
    let b = grid.bounds();
    let payload = grid.nodes().len() * 9 * 8;
    let mut out = String::new();
    out.push_str(&format!("file: {}\n", args.file.display()));
    out.push_str(&format!("magic: APLU\nversion: {}\n", lut::VERSION));
    out.push_str(&format!("size: {0}x{0}\n", grid.size()));
    out.push_str(&format!(
        "bounds: u1 [{}, {}], u2 [{}, {}]\n",
        b.u1_min, b.u1_max, b.u2_min, b.u2_max
    ));
    out.push_str(&format!(
        "method: {}\ncamera: {}\n",
        grid.method(),
        grid.camera()
    ));
    out.push_str(&format!(
        "header_bytes: {HEADER_LEN}\npayload_bytes: {payload}\ntotal_bytes: {}\n",
        bytes.len()
    ));
    out.push_str(&format!(
        "crc32: {:08x}\n",
        u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().expect("4 bytes"))
    ));
    if !args.header_only {
        for i in 0..grid.size() {
            for j in 0..grid.size() {
                let c = grid.node_chromaticity(i, j);
                out.push_str(&format!(
                    "node {i} {j} ({:.4}, {:.4}): {}\n",
                    c.u1,
                    c.u2,
                    fmt_matrix(grid.node(i, j))
                ));
            }
        }
    }
    std::io::stdout().write_all(out.as_bytes()).map_err(data)
}
