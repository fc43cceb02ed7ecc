use serde::{Deserialize, Serialize};

use super::EvalError;

/// The four summary statistics of a list of angular errors (degrees).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ErrorStats {
    pub mean: f64,
    pub median: f64,
    /// Mean of the `⌈n/4⌉` smallest errors.
    pub best25: f64,
    /// Mean of the `⌈n/4⌉` largest errors.
    pub worst25: f64,
    pub n: usize,
}

fn ascending_mean(xs: &[f64]) -> f64 {
    xs.iter().fold(0.0, |acc, x| acc + x) / xs.len() as f64
}

/// Summarize errors. Values are sorted first and every mean accumulates in
/// ascending order, so the result does not depend on input order.
pub fn summarize(errors: &[f64]) -> Result<ErrorStats, EvalError> {
    if errors.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some(bad) = errors.iter().find(|e| !e.is_finite()) {
        return Err(EvalError::NonFiniteError(*bad));
    }
    let mut v = errors.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    let median = if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    };
    let q = n.div_ceil(4);
    Ok(ErrorStats {
        mean: ascending_mean(&v),
        median,
        best25: ascending_mean(&v[..q]),
        worst25: ascending_mean(&v[n - q..]),
        n,
    })
}
