//! Layered settings: command-line flags override `ILLUM_*` environment
//! variables, which override the config file, which overrides built-in
//! defaults.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use projcc::estimators::{EstimatorConfig, Method};
use projcc::lut::LutBounds;
use projcc::projective::{AlsConfig, ApapConfig, CorrectionSettings};

use crate::error::CliError;

pub const ENV_PREFIX: &str = "ILLUM_";

/// `(key, default, description)` for every setting.
pub const KEYS: &[(&str, &str, &str)] = &[
    ("sigma_w", "3.0", "APAP weight fall-off scale (degrees)"),
    ("gamma", "0.0625", "APAP weight floor"),
    ("lut_size", "16", "LUT nodes per chromaticity axis"),
    ("sog_p", "4", "Shades of Gray Minkowski order"),
    ("ge_p", "6", "Gray Edge Minkowski order"),
    ("ge_sigma", "2", "Gray Edge Gaussian sigma (pixels)"),
    (
        "pca_percent",
        "0.035",
        "PCA brightest/darkest pixel fraction",
    ),
    ("downsample", "384x256", "working image size, WIDTHxHEIGHT"),
    (
        "als_threshold",
        "1e-8",
        "ALS stops once the scale change drops to this",
    ),
    ("als_max_iters", "100", "ALS iteration cap"),
    (
        "als_extrapolate",
        "true",
        "objective-checked extrapolation step in ALS",
    ),
    (
        "als_refine",
        "true",
        "Gauss-Newton polish of the ALS result",
    ),
    ("folds", "3", "cross-validation folds per camera"),
    ("threads", "0", "worker threads (0 = one per core)"),
];

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Default,
    ConfigFile,
    Env,
    Flag,
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Source::Default => "default",
            Source::ConfigFile => "config",
            Source::Env => "env",
            Source::Flag => "flag",
        })
    }
}

/// Fully resolved settings.
#[derive(Debug, Clone, PartialEq)]
pub struct Settings {
    pub sigma_w: f64,
    pub gamma: f64,
    pub lut_size: usize,
    pub sog_p: f64,
    pub ge_p: f64,
    pub ge_sigma: f64,
    pub pca_percent: f64,
    pub downsample: (usize, usize),
    pub als_threshold: f64,
    pub als_max_iters: usize,
    pub als_extrapolate: bool,
    pub als_refine: bool,
    pub folds: u32,
    pub threads: usize,
    /// Raw value and winning layer per key, in `KEYS` order.
    pub provenance: Vec<(&'static str, String, Source)>,
}

fn parse<T: std::str::FromStr>(key: &str, raw: &str, source: Source) -> Result<T, CliError>
where
    T::Err: fmt::Display,
{
    raw.trim()
        .parse()
        .map_err(|e| CliError::Config(format!("{key} = '{raw}' (from {source}): {e}")))
}

fn parse_size(key: &str, raw: &str, source: Source) -> Result<(usize, usize), CliError> {
    let bad = || {
        CliError::Config(format!(
            "{key} = '{raw}' (from {source}): expected WIDTHxHEIGHT"
        ))
    };
    let (w, h) = raw.trim().split_once(['x', 'X']).ok_or_else(bad)?;
    let w: usize = w.trim().parse().map_err(|_| bad())?;
    let h: usize = h.trim().parse().map_err(|_| bad())?;
    if w == 0 || h == 0 {
        return Err(bad());
    }
    Ok((w, h))
}

/// Read a TOML config file into string values keyed by setting name.
pub fn read_config_file(path: &Path) -> Result<BTreeMap<String, String>, CliError> {
    let text = std::fs::read_to_string(path).map_err(|e| {
        CliError::Config(format!("cannot read config file {}: {e}", path.display()))
    })?;
    parse_config_text(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_config_text(text: &str) -> Result<BTreeMap<String, String>, String> {
    let table: toml::Table = text.parse().map_err(|e: toml::de::Error| e.to_string())?;
    let mut out = BTreeMap::new();
    for (k, v) in table {
        if !KEYS.iter().any(|(key, _, _)| *key == k) {
            return Err(format!("unknown setting '{k}'"));
        }
        let s = match v {
            toml::Value::String(s) => s,
            toml::Value::Integer(i) => i.to_string(),
            toml::Value::Float(f) => f.to_string(),
            toml::Value::Boolean(b) => b.to_string(),
            other => return Err(format!("setting '{k}' has unsupported value {other}")),
        };
        out.insert(k, s);
    }
    Ok(out)
}

impl Settings {
    /// Resolve every key through the layers. `env` looks up a full
    /// variable name.
    pub fn resolve(
        flags: &BTreeMap<&str, String>,
        env: impl Fn(&str) -> Option<String>,
        file: &BTreeMap<String, String>,
    ) -> Result<Self, CliError> {
        let mut provenance = Vec::with_capacity(KEYS.len());
        for (key, default, _) in KEYS {
            let env_name = format!("{ENV_PREFIX}{}", key.to_ascii_uppercase());
            let (raw, source) = if let Some(v) = flags.get(key) {
                (v.clone(), Source::Flag)
            } else if let Some(v) = env(&env_name) {
                (v, Source::Env)
            } else if let Some(v) = file.get(*key) {
                (v.clone(), Source::ConfigFile)
            } else {
                (default.to_string(), Source::Default)
            };
            provenance.push((*key, raw, source));
        }
        let get = |k: &str| {
            let (_, raw, src) = provenance
                .iter()
                .find(|(key, _, _)| *key == k)
                .expect("known key");
            (raw.as_str(), *src)
        };
        macro_rules! field {
            ($k:literal) => {{
                let (raw, src) = get($k);
                parse($k, raw, src)?
            }};
        }
        let (ds_raw, ds_src) = get("downsample");
        let s = Settings {
            sigma_w: field!("sigma_w"),
            gamma: field!("gamma"),
            lut_size: field!("lut_size"),
            sog_p: field!("sog_p"),
            ge_p: field!("ge_p"),
            ge_sigma: field!("ge_sigma"),
            pca_percent: field!("pca_percent"),
            downsample: parse_size("downsample", ds_raw, ds_src)?,
            als_threshold: field!("als_threshold"),
            als_max_iters: field!("als_max_iters"),
            als_extrapolate: field!("als_extrapolate"),
            als_refine: field!("als_refine"),
            folds: field!("folds"),
            threads: field!("threads"),
            provenance: provenance.clone(),
        };
        s.validate()?;
        Ok(s)
    }

    fn validate(&self) -> Result<(), CliError> {
        let check = |ok: bool, msg: &str| {
            if ok {
                Ok(())
            } else {
                Err(CliError::Config(msg.to_string()))
            }
        };
        check(
            self.sigma_w > 0.0 && self.sigma_w.is_finite(),
            "sigma_w must be positive",
        )?;
        check(
            self.gamma > 0.0 && self.gamma <= 1.0,
            "gamma must lie in (0, 1]",
        )?;
        check(
            (2..=u16::MAX as usize).contains(&self.lut_size),
            "lut_size must be at least 2",
        )?;
        check(
            self.sog_p >= 1.0 && self.ge_p >= 1.0,
            "Minkowski orders must be at least 1",
        )?;
        check(
            self.ge_sigma > 0.0 && self.ge_sigma.is_finite(),
            "ge_sigma must be positive",
        )?;
        check(
            self.pca_percent > 0.0 && self.pca_percent <= 0.5,
            "pca_percent must lie in (0, 0.5]",
        )?;
        check(self.als_threshold > 0.0, "als_threshold must be positive")?;
        check(self.als_max_iters >= 1, "als_max_iters must be at least 1")?;
        check(self.folds >= 1, "folds must be at least 1")?;
        Ok(())
    }

    pub fn estimator(&self, method: Method) -> EstimatorConfig {
        let mut cfg = EstimatorConfig::new(method);
        cfg.p = match method {
            Method::ShadesOfGray => self.sog_p,
            Method::GrayEdge1 | Method::GrayEdge2 => self.ge_p,
            _ => cfg.p,
        };
        cfg.sigma = self.ge_sigma;
        cfg.pca_percent = self.pca_percent;
        cfg
    }

    pub fn correction(&self) -> CorrectionSettings {
        CorrectionSettings {
            apap: ApapConfig {
                sigma_w: self.sigma_w,
                gamma: self.gamma,
            },
            als: AlsConfig {
                threshold: self.als_threshold,
                max_iters: self.als_max_iters,
                extrapolate: self.als_extrapolate,
                refine: self.als_refine,
            },
            lut_size: self.lut_size,
            lut_bounds: LutBounds::default(),
        }
    }

    /// One `key = value  # source; description` line per setting.
    pub fn describe(&self) -> String {
        let width = self
            .provenance
            .iter()
            .map(|(k, v, _)| k.len() + v.len())
            .max()
            .unwrap_or(0)
            + 3;
        let mut out = String::new();
        for ((key, raw, source), (_, _, desc)) in self.provenance.iter().zip(KEYS) {
            let lhs = format!("{key} = {raw}");
            out.push_str(&format!("{lhs:<width$}  # {source}; {desc}\n"));
        }
        out
    }
}
