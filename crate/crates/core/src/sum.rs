//! Deterministic pairwise summation.

const BLOCK: usize = 8;

/// Pairwise (cascade) sum; the summation tree depends only on `xs.len()`.
pub fn pairwise_sum(xs: &[f64]) -> f64 {
    if xs.len() <= BLOCK {
        return xs.iter().sum();
    }
    let mid = xs.len() / 2;
    pairwise_sum(&xs[..mid]) + pairwise_sum(&xs[mid..])
}
