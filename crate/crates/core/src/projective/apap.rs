//! As-projective-as-possible fits: the ALS problem re-weighted per query by
//! angular proximity of each training estimate to the query estimate.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};

use super::als::{solve_als, AlsConfig, AlsFit};
use super::{FitError, TrainingCorpus};
use crate::color::{angle_between, Illuminant};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ApapConfig {
    /// Fall-off scale; the angle in degrees is divided by `sigma_w²`.
    pub sigma_w: f64,
    /// Weight floor in `(0, 1]`. At 1 every pair is weighted equally.
    pub gamma: f64,
}

impl Default for ApapConfig {
    fn default() -> Self {
        Self {
            sigma_w: 3.0,
            gamma: 0.0625,
        }
    }
}

impl ApapConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.sigma_w > 0.0)
            || !self.sigma_w.is_finite()
            || !(self.gamma > 0.0 && self.gamma <= 1.0)
        {
            return Err(FitError::InvalidConfig(format!(
                "APAP needs sigma_w > 0 and 0 < gamma <= 1 (got {}, {})",
                self.sigma_w, self.gamma
            )));
        }
        Ok(())
    }

    /// `max(exp(−θ/σ_w²), γ)` for an angle `θ` in degrees.
    pub fn weight(&self, theta_deg: f64) -> f64 {
        (-theta_deg / (self.sigma_w * self.sigma_w))
            .exp()
            .max(self.gamma)
    }
}

/// Per-pair weights for `query`; every weight lies in `[γ, 1]`.
pub fn apap_weights(
    query: &Illuminant,
    corpus: &TrainingCorpus,
    cfg: &ApapConfig,
) -> Result<Vec<f64>, FitError> {
    cfg.validate()?;
    corpus
        .estimates()
        .iter()
        .map(|e| Ok(cfg.weight(angle_between(query.as_vector(), e.as_vector())?)))
        .collect()
}

/// Weighted fit for one query: ALS on the corpus with each
/// (estimate, truth) column pair scaled by its weight.
pub fn fit_apap(
    query: &Illuminant,
    corpus: &TrainingCorpus,
    apap: &ApapConfig,
    als: &AlsConfig,
) -> Result<AlsFit, FitError> {
    let w = apap_weights(query, corpus, apap)?;
    let (a, b): (Vec<Vector3<f64>>, Vec<Vector3<f64>>) = corpus
        .estimates()
        .iter()
        .zip(corpus.truths())
        .zip(&w)
        .map(|((e, t), wi)| (e.as_vector() * *wi, t.as_vector() * *wi))
        .unzip();
    solve_als(&a, &b, als)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weight_examples() {
        let cfg = ApapConfig::default();
        assert_eq!(cfg.weight(0.0), 1.0);
        assert_eq!(cfg.weight(180.0), 0.0625);
        assert!((cfg.weight(9.0) - (-1.0f64).exp()).abs() < 1e-15);
        assert!((cfg.weight(9.0) - 0.367879).abs() < 1e-6);
    }

    #[test]
    fn invalid_configs() {
        for (s, g) in [
            (0.0, 0.5),
            (-1.0, 0.5),
            (3.0, 0.0),
            (3.0, 1.5),
            (f64::NAN, 0.5),
        ] {
            assert!(ApapConfig {
                sigma_w: s,
                gamma: g
            }
            .validate()
            .is_err());
        }
        assert!(ApapConfig {
            sigma_w: 3.0,
            gamma: 1.0
        }
        .validate()
        .is_ok());
    }
}
