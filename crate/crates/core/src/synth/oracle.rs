//! Reference solver for the weighted projective fit, independent of ALS.
//!
//! The scales are eliminated in closed form, `d_i = (P·a_i)·b_i / ‖P·a_i‖²`,
//! leaving a nonlinear least-squares problem in the nine entries of `P`.
//! It is started from a weighted direct linear transform (null vector of
//! the stacked `[b_i]×·P·a_i = 0` constraints) and refined by Gauss-Newton
//! with full dense pseudo-inverse steps.

use nalgebra::{DMatrix, DVector, Matrix3, Vector3};

use crate::color::Illuminant;
use crate::projective::{apap_weights, ApapConfig, FitError, ProjectiveTransform, TrainingCorpus};

const MAX_STEPS: usize = 200;
const PINV_RTOL: f64 = 1e-12;

fn cross_matrix(b: &Vector3<f64>) -> Matrix3<f64> {
    Matrix3::new(0.0, -b.z, b.y, b.z, 0.0, -b.x, -b.y, b.x, 0.0)
}

fn from_params(x: &DVector<f64>) -> Matrix3<f64> {
    Matrix3::from_row_slice(x.as_slice())
}

fn dlt(a: &[Vector3<f64>], b: &[Vector3<f64>], w: &[f64]) -> Result<Matrix3<f64>, FitError> {
    let n = a.len();
    let mut m = DMatrix::zeros(3 * n, 9);
    for i in 0..n {
        let bx = cross_matrix(&b[i]) * w[i];
        for r in 0..3 {
            for k in 0..3 {
                for j in 0..3 {
                    m[(3 * i + r, 3 * k + j)] = bx[(r, k)] * a[i][j];
                }
            }
        }
    }
    let svd = m.svd(false, true);
    let vt = svd.v_t.ok_or(FitError::SingularSystem)?;
    let k = svd.singular_values.imin();
    let p = Matrix3::from_row_slice(vt.row(k).transpose().as_slice());
    // Fix the sign so the mapped estimates point along the truths.
    let agree: f64 = a.iter().zip(b).map(|(ai, bi)| (p * ai).dot(bi)).sum();
    Ok(if agree < 0.0 { -p } else { p })
}

/// Weighted residuals `w_i·(d_i·P·a_i − b_i)` and their Jacobian with
/// respect to row-major `P`.
fn residuals(
    p: &Matrix3<f64>,
    a: &[Vector3<f64>],
    b: &[Vector3<f64>],
    w: &[f64],
) -> (DVector<f64>, DMatrix<f64>) {
    let n = a.len();
    let mut r = DVector::zeros(3 * n);
    let mut jac = DMatrix::zeros(3 * n, 9);
    for i in 0..n {
        let y = p * a[i];
        let yy = y.norm_squared();
        let yb = y.dot(&b[i]);
        let d = yb / yy;
        let res = (y * d - b[i]) * w[i];
        // ∂d/∂y = b/‖y‖² − 2(y·b)·y/‖y‖⁴
        let dd = b[i] / yy - y * (2.0 * yb / (yy * yy));
        let dr_dy = (y * dd.transpose() + Matrix3::identity() * d) * w[i];
        for m in 0..3 {
            r[3 * i + m] = res[m];
            for k in 0..3 {
                for j in 0..3 {
                    jac[(3 * i + m, 3 * k + j)] = dr_dy[(m, k)] * a[i][j];
                }
            }
        }
    }
    (r, jac)
}

fn pinv_step(jac: &DMatrix<f64>, r: &DVector<f64>) -> Result<DVector<f64>, FitError> {
    let svd = jac.clone().svd(true, true);
    let smax = svd.singular_values.max();
    if !(smax > 0.0) {
        return Err(FitError::SingularSystem);
    }
    svd.solve(r, smax * PINV_RTOL)
        .map(|x| -x)
        .map_err(|_| FitError::SingularSystem)
}

fn solve(
    a: &[Vector3<f64>],
    b: &[Vector3<f64>],
    w: &[f64],
) -> Result<ProjectiveTransform, FitError> {
    let mut p = dlt(a, b, w)?;
    if a.iter().any(|ai| (p * ai).norm_squared() == 0.0) {
        return Err(FitError::SingularSystem);
    }
    let mut x = DVector::from_row_slice(&ProjectiveTransform::from_matrix(p)?.to_row_major());
    let (mut r, mut jac) = residuals(&p, a, b, w);
    let mut cost = r.norm_squared();
    for _ in 0..MAX_STEPS {
        let step = pinv_step(&jac, &r)?;
        let mut t = 1.0;
        let mut accepted = None;
        for _ in 0..40 {
            let trial = &x + &step * t;
            let tp = from_params(&trial);
            if a.iter().all(|ai| (tp * ai).norm_squared() > 0.0) {
                let (tr, tj) = residuals(&tp, a, b, w);
                let tc = tr.norm_squared();
                if tc <= cost {
                    accepted = Some((trial, tr, tj, tc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((trial, tr, tj, tc)) = accepted else {
            break;
        };
        let moved = (&trial - &x).norm() / trial.norm();
        let norm = trial.norm();
        // The objective is invariant to the scale of P; keep it at unit norm.
        x = trial / norm;
        p = from_params(&x);
        let (nr, nj) = if norm == 1.0 {
            (tr, tj)
        } else {
            residuals(&p, a, b, w)
        };
        r = nr;
        jac = nj;
        let improved = cost - tc;
        cost = tc;
        if moved <= 1e-15 || improved <= cost * 1e-30 {
            break;
        }
    }
    ProjectiveTransform::from_matrix(p)
}

fn columns(corpus: &TrainingCorpus) -> (Vec<Vector3<f64>>, Vec<Vector3<f64>>) {
    (
        corpus.estimates().iter().map(|e| *e.as_vector()).collect(),
        corpus.truths().iter().map(|t| *t.as_vector()).collect(),
    )
}

/// Minimize `‖P·A·W·D − B·W‖_F` for the APAP weights of `query`.
pub fn brute_force_weighted_fit(
    query: &Illuminant,
    corpus: &TrainingCorpus,
    apap: &ApapConfig,
) -> Result<ProjectiveTransform, FitError> {
    let w = apap_weights(query, corpus, apap)?;
    let (a, b) = columns(corpus);
    solve(&a, &b, &w)
}

/// Unweighted reference fit over the whole corpus.
pub fn brute_force_global_fit(corpus: &TrainingCorpus) -> Result<ProjectiveTransform, FitError> {
    let (a, b) = columns(corpus);
    solve(&a, &b, &vec![1.0; a.len()])
}
