use serde::{Deserialize, Serialize};

use super::FitError;
use crate::color::{normalize, Illuminant};

/// Paired (estimate, ground truth) illuminants, stored unit-normalized.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "CorpusRepr", into = "CorpusRepr")]
pub struct TrainingCorpus {
    estimates: Vec<Illuminant>,
    truths: Vec<Illuminant>,
    method: String,
    camera: String,
}

#[derive(Serialize, Deserialize)]
struct CorpusRepr {
    method: String,
    camera: String,
    estimates: Vec<Illuminant>,
    truths: Vec<Illuminant>,
}

impl TryFrom<CorpusRepr> for TrainingCorpus {
    type Error = FitError;

    fn try_from(r: CorpusRepr) -> Result<Self, FitError> {
        TrainingCorpus::new(r.estimates, r.truths, r.method, r.camera)
    }
}

impl From<TrainingCorpus> for CorpusRepr {
    fn from(c: TrainingCorpus) -> Self {
        CorpusRepr {
            method: c.method,
            camera: c.camera,
            estimates: c.estimates,
            truths: c.truths,
        }
    }
}

impl TrainingCorpus {
    pub fn new(
        estimates: Vec<Illuminant>,
        truths: Vec<Illuminant>,
        method: impl Into<String>,
        camera: impl Into<String>,
    ) -> Result<Self, FitError> {
        if estimates.len() != truths.len() {
            return Err(FitError::LengthMismatch {
                estimates: estimates.len(),
                truths: truths.len(),
            });
        }
        if estimates.len() < 3 {
            return Err(FitError::TooFewPairs(estimates.len()));
        }
        let estimates = estimates
            .iter()
            .map(normalize)
            .collect::<Result<Vec<_>, _>>()?;
        let truths = truths
            .iter()
            .map(normalize)
            .collect::<Result<Vec<_>, _>>()?;
        Ok(Self {
            estimates,
            truths,
            method: method.into(),
            camera: camera.into(),
        })
    }

    pub fn estimates(&self) -> &[Illuminant] {
        &self.estimates
    }

    pub fn truths(&self) -> &[Illuminant] {
        &self.truths
    }

    pub fn len(&self) -> usize {
        self.estimates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.estimates.is_empty()
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn camera(&self) -> &str {
        &self.camera
    }

    /// Same pairs in a different column order.
    pub fn permuted(&self, order: &[usize]) -> Self {
        Self {
            estimates: order.iter().map(|&i| self.estimates[i]).collect(),
            truths: order.iter().map(|&i| self.truths[i]).collect(),
            method: self.method.clone(),
            camera: self.camera.clone(),
        }
    }
}
