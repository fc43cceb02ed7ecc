//! Chromaticity-grid lookup table of precomputed APAP transforms.
//!
//! Node `(i, j)` sits at chromaticity `(u1_min + i·Δu1, u2_min + j·Δu2)` and
//! stores the APAP transform fitted for the illuminant
//! `from_chromaticity(node)`. A query blends the four enclosing nodes'
//! corrected vectors with bilinear weights.

mod format;

use nalgebra::{Matrix3, Vector3};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::color::{
    from_chromaticity, normalize_vector, to_chromaticity, Chromaticity, ColorError, Illuminant,
};
use crate::projective::{
    finish_correction, fit_apap, fit_global, AlsConfig, ApapConfig, Corrected, FitError,
    ProjectiveTransform, TrainingCorpus,
};

pub use format::{deserialize, serialize, HEADER_LEN, MAGIC, VERSION};

pub const DEFAULT_LUT_SIZE: usize = 16;

#[derive(Debug, Error)]
pub enum LutError {
    #[error(transparent)]
    Fit(#[from] FitError),
    #[error(transparent)]
    Color(#[from] ColorError),
    #[error("not an APLU stream (bad magic)")]
    BadMagic,
    #[error("unsupported APLU version {0}")]
    BadVersion(u32),
    #[error("stream ended early")]
    TruncatedStream,
    #[error("checksum mismatch: stored {stored:#010x}, computed {computed:#010x}")]
    ChecksumMismatch { stored: u32, computed: u32 },
    #[error("provenance tag is not valid UTF-8")]
    BadUtf8,
    #[error("{0} unexpected bytes after checksum")]
    TrailingBytes(usize),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
}

/// Chromaticity extents covered by the grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LutBounds {
    pub u1_min: f64,
    pub u1_max: f64,
    pub u2_min: f64,
    pub u2_max: f64,
}

impl Default for LutBounds {
    fn default() -> Self {
        Self {
            u1_min: 0.0,
            u1_max: 1.0,
            u2_min: 0.0,
            u2_max: 1.0,
        }
    }
}

impl LutBounds {
    fn validate(&self) -> Result<(), LutError> {
        let ok = [self.u1_min, self.u1_max, self.u2_min, self.u2_max]
            .iter()
            .all(|v| v.is_finite())
            && self.u1_max > self.u1_min
            && self.u2_max > self.u2_min;
        if ok {
            Ok(())
        } else {
            Err(LutError::InvalidGrid(format!(
                "bounds {self:?} must span > 0 on both axes"
            )))
        }
    }
}

/// Node that could not be fitted; the global transform stands in for it.
#[derive(Debug, Clone, PartialEq)]
pub struct NodeFailure {
    pub i: usize,
    pub j: usize,
    pub error: FitError,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LutGrid {
    size: usize,
    bounds: LutBounds,
    method: String,
    camera: String,
    /// `size × size` transforms, index `i * size + j` (i along u1).
    nodes: Vec<ProjectiveTransform>,
}

/// Bilinear cell lookup: the four corner node indices and their weights.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CellWeights {
    pub nodes: [(usize, usize); 4],
    pub weights: [f64; 4],
}

impl LutGrid {
    pub fn from_nodes(
        size: usize,
        bounds: LutBounds,
        nodes: Vec<ProjectiveTransform>,
        method: impl Into<String>,
        camera: impl Into<String>,
    ) -> Result<Self, LutError> {
        if size < 2 {
            return Err(LutError::InvalidGrid(format!(
                "grid needs at least 2 nodes per axis, got {size}"
            )));
        }
        bounds.validate()?;
        if nodes.len() != size * size {
            return Err(LutError::InvalidGrid(format!(
                "expected {} nodes, got {}",
                size * size,
                nodes.len()
            )));
        }
        Ok(Self {
            size,
            bounds,
            method: method.into(),
            camera: camera.into(),
            nodes,
        })
    }

    /// Build the table, fitting every node in parallel.
    pub fn build(
        corpus: &TrainingCorpus,
        size: usize,
        bounds: LutBounds,
        apap: &ApapConfig,
        als: &AlsConfig,
    ) -> Result<Self, LutError> {
        let (grid, failures) = Self::build_with_report(corpus, size, bounds, apap, als)?;
        for f in &failures {
            log::warn!(
                "LUT node ({}, {}) fell back to the global transform: {}",
                f.i,
                f.j,
                f.error
            );
        }
        Ok(grid)
    }

    /// Like [`LutGrid::build`], also returning the nodes that fell back to
    /// the global transform.
    pub fn build_with_report(
        corpus: &TrainingCorpus,
        size: usize,
        bounds: LutBounds,
        apap: &ApapConfig,
        als: &AlsConfig,
    ) -> Result<(Self, Vec<NodeFailure>), LutError> {
        if size < 2 {
            return Err(LutError::InvalidGrid(format!(
                "grid needs at least 2 nodes per axis, got {size}"
            )));
        }
        bounds.validate()?;
        apap.validate()?;
        let global = fit_global(corpus, als)?.transform;
        let fitted: Vec<Result<ProjectiveTransform, NodeFailure>> = (0..size * size)
            .into_par_iter()
            .map(|k| {
                let (i, j) = (k / size, k % size);
                let node = from_chromaticity(&node_chromaticity(&bounds, size, i, j));
                fit_apap(&node, corpus, apap, als)
                    .map(|f| f.transform)
                    .map_err(|error| NodeFailure { i, j, error })
            })
            .collect();
        let mut failures = Vec::new();
        let nodes = fitted
            .into_iter()
            .map(|r| {
                r.unwrap_or_else(|f| {
                    failures.push(f);
                    global
                })
            })
            .collect();
        let grid = Self::from_nodes(size, bounds, nodes, corpus.method(), corpus.camera())?;
        Ok((grid, failures))
    }

    pub fn size(&self) -> usize {
        self.size
    }

    pub fn bounds(&self) -> LutBounds {
        self.bounds
    }

    pub fn method(&self) -> &str {
        &self.method
    }

    pub fn camera(&self) -> &str {
        &self.camera
    }

    pub fn nodes(&self) -> &[ProjectiveTransform] {
        &self.nodes
    }

    pub fn node(&self, i: usize, j: usize) -> &ProjectiveTransform {
        &self.nodes[i * self.size + j]
    }

    pub fn node_chromaticity(&self, i: usize, j: usize) -> Chromaticity {
        node_chromaticity(&self.bounds, self.size, i, j)
    }

    /// Enclosing cell and bilinear weights for a chromaticity; points outside
    /// the bounds are clamped onto them.
    pub fn cell_weights(&self, c: &Chromaticity) -> CellWeights {
        let b = &self.bounds;
        let cells = (self.size - 1) as f64;
        let (i, t) = locate(c.u1.clamp(b.u1_min, b.u1_max), b.u1_min, b.u1_max, cells);
        let (j, s) = locate(c.u2.clamp(b.u2_min, b.u2_max), b.u2_min, b.u2_max, cells);
        CellWeights {
            nodes: [(i, j), (i + 1, j), (i, j + 1), (i + 1, j + 1)],
            weights: [(1.0 - t) * (1.0 - s), t * (1.0 - s), (1.0 - t) * s, t * s],
        }
    }

    /// Corrected illuminant for `est`: the four corner transforms applied to
    /// the unit estimate, blended bilinearly, then normalized.
    pub fn query(&self, est: &Illuminant) -> Result<Corrected, LutError> {
        let c = to_chromaticity(est)?;
        let e = normalize_vector(est.as_vector())?;
        let cw = self.cell_weights(&c);
        let mut v = Vector3::zeros();
        for ((i, j), w) in cw.nodes.iter().zip(cw.weights) {
            v += (self.node(*i, *j).matrix() * e) * w;
        }
        Ok(finish_correction(v)?)
    }

    /// The bilinearly blended matrix for `est`. Applying it gives the same
    /// ray as [`LutGrid::query`].
    pub fn blended_transform(&self, est: &Illuminant) -> Result<ProjectiveTransform, LutError> {
        let cw = self.cell_weights(&to_chromaticity(est)?);
        let m = cw
            .nodes
            .iter()
            .zip(cw.weights)
            .fold(Matrix3::zeros(), |acc, ((i, j), w)| {
                acc + self.node(*i, *j).matrix() * w
            });
        Ok(ProjectiveTransform::from_matrix(m)?)
    }
}

fn node_chromaticity(b: &LutBounds, size: usize, i: usize, j: usize) -> Chromaticity {
    let cells = (size - 1) as f64;
    Chromaticity::new(
        b.u1_min + i as f64 * (b.u1_max - b.u1_min) / cells,
        b.u2_min + j as f64 * (b.u2_max - b.u2_min) / cells,
    )
}

/// Cell index in `[0, cells - 1]` and fractional offset in `[0, 1]`.
fn locate(u: f64, lo: f64, hi: f64, cells: f64) -> (usize, f64) {
    let f = (u - lo) / (hi - lo) * cells;
    let idx = (f.floor().max(0.0) as usize).min(cells as usize - 1);
    (idx, (f - idx as f64).clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::color::angular_error;
    use crate::projective::apply;

    fn ill(r: f64, g: f64, b: f64) -> Illuminant {
        Illuminant::new(r, g, b).unwrap()
    }

    fn toy_grid() -> LutGrid {
        // Distinct, smoothly varying node transforms.
        let size = 4;
        let nodes = (0..size * size)
            .map(|k| {
                let (i, j) = ((k / size) as f64, (k % size) as f64);
                ProjectiveTransform::from_row_major([
                    1.0 + 0.1 * i,
                    0.05 * j,
                    0.0,
                    0.02 * i,
                    1.0,
                    0.03 * j,
                    0.0,
                    0.01 * (i + j),
                    1.0 - 0.05 * j,
                ])
                .unwrap()
            })
            .collect();
        LutGrid::from_nodes(size, LutBounds::default(), nodes, "gw", "toy").unwrap()
    }

    #[test]
    fn weights_are_convex() {
        let g = toy_grid();
        for (u1, u2) in [
            (0.0, 0.0),
            (0.2, 0.7),
            (1.0, 1.0),
            (0.5, 0.5),
            (0.999, 0.001),
            (-0.5, 3.0),
        ] {
            let w = g.cell_weights(&Chromaticity::new(u1, u2));
            assert!(w.weights.iter().all(|&x| x >= 0.0));
            assert!((w.weights.iter().sum::<f64>() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn node_query_matches_node_transform() {
        let g = toy_grid();
        for i in 0..4 {
            for j in 0..4 {
                // Nodes outside the simplex have a negative blue channel but
                // still a unit channel sum, so they remain queryable.
                let est = from_chromaticity(&g.node_chromaticity(i, j));
                let q = g.query(&est).unwrap().illuminant;
                let direct = apply(g.node(i, j), &est).unwrap().illuminant;
                assert!(
                    angular_error(&q, &direct).unwrap().0 < 1e-9,
                    "node ({i},{j})"
                );
            }
        }
    }

    #[test]
    fn cell_center_equals_average_matrix() {
        let g = toy_grid();
        let d = 1.0 / 3.0;
        let c = Chromaticity::new(0.5 * d, 1.5 * d);
        let est = from_chromaticity(&c);
        let avg = (g.node(0, 1).matrix()
            + g.node(1, 1).matrix()
            + g.node(0, 2).matrix()
            + g.node(1, 2).matrix())
            * 0.25;
        let expect = apply(&ProjectiveTransform::from_matrix(avg).unwrap(), &est)
            .unwrap()
            .illuminant;
        let got = g.query(&est).unwrap().illuminant;
        for (a, b) in got.to_array().iter().zip(expect.to_array()) {
            assert!((a - b).abs() < 1e-12);
        }
    }

    #[test]
    fn vector_blend_equals_matrix_blend() {
        let g = toy_grid();
        for est in [ill(0.3, 0.5, 0.2), ill(0.7, 0.1, 0.2), ill(0.2, 0.2, 0.6)] {
            let a = g.query(&est).unwrap().illuminant;
            let b = apply(&g.blended_transform(&est).unwrap(), &est)
                .unwrap()
                .illuminant;
            assert!(angular_error(&a, &b).unwrap().0 < 1e-9);
        }
    }

    #[test]
    fn continuous_across_cell_boundaries() {
        let g = toy_grid();
        let boundary = 1.0 / 3.0;
        for u2 in [0.1, 0.25, 0.4] {
            let a = from_chromaticity(&Chromaticity::new(boundary - 1e-9, u2));
            let b = from_chromaticity(&Chromaticity::new(boundary + 1e-9, u2));
            let qa = g.query(&a).unwrap().illuminant;
            let qb = g.query(&b).unwrap().illuminant;
            assert!(angular_error(&qa, &qb).unwrap().0 < 1e-6);
        }
    }

    #[test]
    fn query_scale_invariant() {
        let g = toy_grid();
        let est = ill(0.3, 0.45, 0.25);
        let a = g.query(&est).unwrap().illuminant;
        for s in [1e-4, 0.3, 7.0, 1e5] {
            let b = g.query(&est.scaled(s).unwrap()).unwrap().illuminant;
            assert!(angular_error(&a, &b).unwrap().0 < 1e-9);
        }
    }

    #[test]
    fn query_rejects_degenerate_sum() {
        let g = toy_grid();
        assert!(matches!(
            g.query(&ill(1.0, -1.0, 0.0)),
            Err(LutError::Color(ColorError::DegenerateSum))
        ));
    }

    #[test]
    fn rejects_bad_shapes() {
        let nodes = vec![ProjectiveTransform::identity(); 4];
        assert!(LutGrid::from_nodes(1, LutBounds::default(), nodes.clone(), "", "").is_err());
        let flat = LutBounds {
            u1_min: 0.5,
            u1_max: 0.5,
            ..LutBounds::default()
        };
        assert!(LutGrid::from_nodes(2, flat, nodes.clone(), "", "").is_err());
        assert!(LutGrid::from_nodes(3, LutBounds::default(), nodes, "", "").is_err());
    }
}
