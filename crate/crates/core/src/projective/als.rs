//! Alternating least squares for `min ‖P·A·D − B‖_F` over a 3×3 matrix `P`
//! and a diagonal `D` of per-pair scales.
//!
//! Both half-steps are closed form. With `D` fixed, each row of `P` solves a
//! 3×3 normal-equation system sharing the Gram matrix `(AD)(AD)ᵀ`; with `P`
//! fixed, `d_i = (P·a_i)·b_i / ‖P·a_i‖²`. Each half-step minimizes the same
//! objective exactly, so the recorded objective never increases.
//!
//! Plain alternation converges only linearly and can crawl when `P` and
//! `D` are strongly coupled. With `extrapolate` on, each iteration also
//! tries a step further along the latest change in `D` (followed by the
//! usual P- and D-updates) and keeps it only if the objective is lower.
//!
//! Even accelerated, the `‖ΔD‖` stopping rule can fire while the iterate is
//! still measurably off the optimum. With `refine` on, the result is then
//! polished by Gauss–Newton on `P` alone (with `D` eliminated in closed form),
//! again accepting only steps that lower the objective.
//!
//! Pairs are processed in a canonical order, so the result does not depend
//! on how the corpus is ordered.

use std::cmp::Ordering;

use nalgebra::{Matrix3, SMatrix, SVector, Vector3};
use serde::{Deserialize, Serialize};

use super::{FitError, ProjectiveTransform};

/// Eigenvalue ratio above which the Gram solve switches to a pseudo-inverse.
const GRAM_COND_LIMIT: f64 = 1e12;
/// Pairs are considered parallel below this sine of their angle.
const PARALLEL_SINE: f64 = 1e-9;
/// Bounds on the extrapolation factor.
const MIN_STRETCH: f64 = 1.0;
const MAX_STRETCH: f64 = 1024.0;
/// Gauss–Newton polish: step cap, halvings per step, relative SVD cutoff.
const MAX_REFINE_STEPS: usize = 10;
const MAX_HALVINGS: usize = 40;
const REFINE_SVD_CUTOFF: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlsConfig {
    /// Stop once `‖D⁽q⁾ − D⁽q−1⁾‖_F` drops to this value.
    pub threshold: f64,
    pub max_iters: usize,
    /// Try an objective-checked extrapolation step every iteration.
    #[serde(default = "enabled")]
    pub extrapolate: bool,
    /// Polish the final iterate with objective-checked Gauss–Newton steps.
    #[serde(default = "enabled")]
    pub refine: bool,
}

fn enabled() -> bool {
    true
}

impl Default for AlsConfig {
    fn default() -> Self {
        Self {
            threshold: 1e-8,
            max_iters: 100,
            extrapolate: true,
            refine: true,
        }
    }
}

impl AlsConfig {
    pub fn validate(&self) -> Result<(), FitError> {
        if !(self.threshold > 0.0) || self.max_iters == 0 {
            return Err(FitError::InvalidConfig(format!(
                "ALS threshold must be > 0 and max_iters >= 1 (got {}, {})",
                self.threshold, self.max_iters
            )));
        }
        Ok(())
    }
}

/// Result of an ALS run.
///
/// `converged == false` means the iteration cap was hit; the transform is
/// still the last iterate and is usable.
#[derive(Debug, Clone, PartialEq)]
pub struct AlsFit {
    pub transform: ProjectiveTransform,
    /// Final per-pair scales (the diagonal of `D`).
    pub scales: Vec<f64>,
    /// ALS iterations run; refinement steps are counted separately.
    pub iterations: usize,
    pub converged: bool,
    pub refine_steps: usize,
    /// `‖P·A·D − B‖_F` for the initial `(I, D⁽⁰⁾)`, then one entry per ALS
    /// iteration, then one per accepted refinement step.
    pub objective: Vec<f64>,
}

/// Number of mutually non-parallel directions among `vs`, counting at most
/// `limit`.
pub(crate) fn distinct_directions(vs: &[Vector3<f64>], limit: usize) -> usize {
    let mut reps: Vec<Vector3<f64>> = Vec::with_capacity(limit);
    for v in vs {
        let n = v.norm();
        if n == 0.0 {
            continue;
        }
        let u = v / n;
        if reps.iter().all(|r| r.cross(&u).norm() > PARALLEL_SINE) {
            reps.push(u);
            if reps.len() >= limit {
                break;
            }
        }
    }
    reps.len()
}

fn objective(p: &Matrix3<f64>, a: &[Vector3<f64>], b: &[Vector3<f64>], d: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(d)
        .map(|((ai, bi), di)| (p * ai * *di - bi).norm_squared())
        .sum::<f64>()
        .sqrt()
}

/// `argmin_P ‖P·X − B‖_F` where the columns of `X` are `d_i·a_i`.
fn solve_p(a: &[Vector3<f64>], b: &[Vector3<f64>], d: &[f64]) -> Result<Matrix3<f64>, FitError> {
    let mut gram = Matrix3::zeros();
    let mut cross = Matrix3::zeros();
    for ((ai, bi), di) in a.iter().zip(b).zip(d) {
        let x = ai * *di;
        gram += x * x.transpose();
        cross += bi * x.transpose();
    }
    let eig = gram.symmetric_eigen();
    let lmax = eig.eigenvalues.max();
    let lmin = eig.eigenvalues.min();
    if !(lmax > f64::MIN_POSITIVE) || !lmax.is_finite() {
        return Err(FitError::SingularSystem);
    }
    if lmin > lmax / GRAM_COND_LIMIT {
        if let Some(chol) = gram.cholesky() {
            // gram is symmetric, so P = cross·gram⁻¹ ⇔ gram·Pᵀ = crossᵀ.
            return Ok(chol.solve(&cross.transpose()).transpose());
        }
    }
    let cutoff = lmax / GRAM_COND_LIMIT;
    let inv = eig
        .eigenvalues
        .map(|l| if l > cutoff { 1.0 / l } else { 0.0 });
    let pinv = eig.eigenvectors * Matrix3::from_diagonal(&inv) * eig.eigenvectors.transpose();
    Ok(cross * pinv)
}

fn solve_d(p: &Matrix3<f64>, a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Vec<f64> {
    a.iter()
        .zip(b)
        .map(|(ai, bi)| {
            let y = p * ai;
            let yy = y.norm_squared();
            if yy > 0.0 {
                y.dot(bi) / yy
            } else {
                0.0
            }
        })
        .collect()
}

/// Lexicographic order on the pair components; ties are identical pairs.
fn canonical_order(a: &[Vector3<f64>], b: &[Vector3<f64>]) -> Vec<usize> {
    let key = |i: usize| a[i].iter().chain(b[i].iter());
    let mut order: Vec<usize> = (0..a.len()).collect();
    order.sort_by(|&i, &j| {
        key(i)
            .zip(key(j))
            .map(|(x, y)| x.total_cmp(y))
            .find(|o| *o != Ordering::Equal)
            .unwrap_or(Ordering::Equal)
    });
    order
}

/// Objective with `D` eliminated for the given `P`.
fn reduced_objective(p: &Matrix3<f64>, a: &[Vector3<f64>], b: &[Vector3<f64>]) -> f64 {
    objective(p, a, b, &solve_d(p, a, b))
}

/// One Gauss–Newton direction for the reduced residuals
/// `r_i = b_i − d_i(P)·P·a_i`, or `None` if some `P·a_i` vanishes.
fn gauss_newton_step(
    p: &Matrix3<f64>,
    a: &[Vector3<f64>],
    b: &[Vector3<f64>],
) -> Option<Matrix3<f64>> {
    let mut jtj = SMatrix::<f64, 9, 9>::zeros();
    let mut jtr = SVector::<f64, 9>::zeros();
    for (ai, bi) in a.iter().zip(b) {
        let v = p * ai;
        let q = v.norm_squared();
        if !(q > f64::MIN_POSITIVE) {
            return None;
        }
        let s = v.dot(bi);
        let r = bi - v * (s / q);
        // dr/dv = −(s/q)·I − v·(b/q − 2s·v/q²)ᵀ
        let dr_dv =
            -(Matrix3::identity() * (s / q)) - v * (bi / q - v * (2.0 * s / (q * q))).transpose();
        let mut j = SMatrix::<f64, 3, 9>::zeros();
        for row in 0..3 {
            for col in 0..3 {
                j.column_mut(row * 3 + col)
                    .copy_from(&(dr_dv.column(row) * ai[col]));
            }
        }
        jtj += j.transpose() * j;
        jtr += j.transpose() * r;
    }
    let svd = jtj.svd(true, true);
    let cutoff = svd.singular_values.max() * REFINE_SVD_CUTOFF;
    let delta = svd.solve(&(-jtr), cutoff).ok()?;
    Some(Matrix3::from_row_slice(delta.as_slice()))
}

/// Objective-checked Gauss–Newton polish. `P` keeps its Frobenius norm (the
/// objective ignores the scale of `P`). Returns the accepted objectives.
fn refine(p: &mut Matrix3<f64>, a: &[Vector3<f64>], b: &[Vector3<f64>], start: f64) -> Vec<f64> {
    let scale = p.norm();
    let mut f = start;
    let mut accepted = Vec::new();
    for _ in 0..MAX_REFINE_STEPS {
        let Some(delta) = gauss_newton_step(p, a, b) else {
            break;
        };
        if !(delta.norm() > f64::EPSILON * scale) {
            break;
        }
        let mut t = 1.0;
        let mut improved = false;
        for _ in 0..MAX_HALVINGS {
            let trial = *p + delta * t;
            let trial = trial * (scale / trial.norm());
            let ft = reduced_objective(&trial, a, b);
            if ft < f {
                (*p, f) = (trial, ft);
                improved = true;
                break;
            }
            t *= 0.5;
        }
        if !improved {
            break;
        }
        accepted.push(f);
    }
    accepted
}

/// Run the alternating solver on raw column vectors. `a` and `b` are used
/// as given (no normalization), which lets callers pre-scale columns.
pub(crate) fn solve_als(
    a: &[Vector3<f64>],
    b: &[Vector3<f64>],
    cfg: &AlsConfig,
) -> Result<AlsFit, FitError> {
    cfg.validate()?;
    if a.len() != b.len() {
        return Err(FitError::LengthMismatch {
            estimates: a.len(),
            truths: b.len(),
        });
    }
    let distinct = distinct_directions(a, 3);
    if distinct < 3 {
        return Err(FitError::DegenerateCorpus { distinct });
    }
    let order = canonical_order(a, b);
    let a: Vec<Vector3<f64>> = order.iter().map(|&i| a[i]).collect();
    let b: Vec<Vector3<f64>> = order.iter().map(|&i| b[i]).collect();
    let (a, b) = (a.as_slice(), b.as_slice());

    let mut d = solve_d(&Matrix3::identity(), a, b);
    let mut history = vec![objective(&Matrix3::identity(), a, b, &d)];
    let mut p = Matrix3::identity();
    let mut stretch = MIN_STRETCH;
    let mut converged = false;
    let mut iterations = 0;
    while iterations < cfg.max_iters {
        iterations += 1;
        let mut p_next = solve_p(a, b, &d)?;
        let mut d_next = solve_d(&p_next, a, b);
        let mut obj = objective(&p_next, a, b, &d_next);
        if cfg.extrapolate && iterations > 1 {
            let d_try: Vec<f64> = d_next
                .iter()
                .zip(&d)
                .map(|(n, o)| n + stretch * (n - o))
                .collect();
            let trial = solve_p(a, b, &d_try).ok().map(|pt| {
                let dt = solve_d(&pt, a, b);
                let ot = objective(&pt, a, b, &dt);
                (pt, dt, ot)
            });
            match trial {
                Some((pt, dt, ot)) if ot < obj => {
                    (p_next, d_next, obj) = (pt, dt, ot);
                    stretch = (stretch * 2.0).min(MAX_STRETCH);
                }
                _ => stretch = (stretch / 4.0).max(MIN_STRETCH),
            }
        }
        let change = d_next
            .iter()
            .zip(&d)
            .map(|(x, y)| (x - y) * (x - y))
            .sum::<f64>()
            .sqrt();
        p = p_next;
        d = d_next;
        history.push(obj);
        if change <= cfg.threshold {
            converged = true;
            break;
        }
    }
    if !converged {
        log::debug!(
            "ALS stopped at the {}-iteration cap without meeting threshold {}",
            cfg.max_iters,
            cfg.threshold
        );
    }
    let mut refine_steps = 0;
    if cfg.refine {
        let polished = refine(&mut p, a, b, *history.last().expect("initial objective"));
        refine_steps = polished.len();
        if refine_steps > 0 {
            d = solve_d(&p, a, b);
            history.extend(polished);
        }
    }
    let mut scales = vec![0.0; d.len()];
    for (k, &i) in order.iter().enumerate() {
        scales[i] = d[k];
    }
    let transform = ProjectiveTransform::from_matrix(p)?;
    Ok(AlsFit {
        transform,
        scales,
        iterations,
        converged,
        refine_steps,
        objective: history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(x: f64, y: f64, z: f64) -> Vector3<f64> {
        Vector3::new(x, y, z)
    }

    #[test]
    fn distinct_directions_counts_rays() {
        let vs = [
            v(1.0, 0.0, 0.0),
            v(2.0, 0.0, 0.0),
            v(0.0, 1.0, 0.0),
            v(0.0, 3.0, 0.0),
        ];
        assert_eq!(distinct_directions(&vs, 3), 2);
        let vs = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(1.0, 1.0, 0.0)];
        assert_eq!(distinct_directions(&vs, 3), 3);
    }

    #[test]
    fn initial_scales_are_closed_form() {
        let a = [v(1.0, 0.0, 0.0), v(0.0, 2.0, 0.0), v(0.0, 0.0, 1.0)];
        let b = [v(3.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(1.0, 0.0, 1.0)];
        assert_eq!(solve_d(&Matrix3::identity(), &a, &b), vec![3.0, 0.5, 1.0]);
    }

    #[test]
    fn p_step_is_least_squares_solution() {
        // With exactly three independent columns the P-step interpolates.
        let a = [v(1.0, 0.2, 0.1), v(0.3, 1.0, 0.2), v(0.1, 0.4, 1.0)];
        let truth = Matrix3::new(1.2, 0.1, -0.2, 0.0, 0.9, 0.1, 0.3, 0.0, 1.1);
        let b: Vec<_> = a.iter().map(|x| truth * x).collect();
        let p = solve_p(&a, &b, &[1.0, 1.0, 1.0]).unwrap();
        assert!((p - truth).norm() < 1e-12);
    }

    #[test]
    fn p_step_falls_back_to_pseudo_inverse() {
        // All columns in the xy-plane: rank-2 Gram matrix.
        let a = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(1.0, 1.0, 0.0)];
        let b = a;
        let p = solve_p(&a, &b, &[1.0; 3]).unwrap();
        assert!(p.iter().all(|x| x.is_finite()));
        for (ai, bi) in a.iter().zip(&b) {
            assert!((p * ai - bi).norm() < 1e-12);
        }
        // Minimum-norm solution leaves the unseen z direction at zero.
        assert!(p.column(2).norm() < 1e-12);
    }

    #[test]
    fn orthogonal_pairs_are_singular() {
        let a = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)];
        let b = [v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0), v(1.0, 0.0, 0.0)];
        assert_eq!(
            solve_als(&a, &b, &AlsConfig::default()),
            Err(FitError::SingularSystem)
        );
    }

    #[test]
    fn rejects_bad_config() {
        let a = [v(1.0, 0.0, 0.0), v(0.0, 1.0, 0.0), v(0.0, 0.0, 1.0)];
        let cfg = AlsConfig {
            threshold: 0.0,
            max_iters: 10,
            ..Default::default()
        };
        assert!(matches!(
            solve_als(&a, &a, &cfg),
            Err(FitError::InvalidConfig(_))
        ));
        let cfg = AlsConfig {
            threshold: 1e-8,
            max_iters: 0,
            ..Default::default()
        };
        assert!(matches!(
            solve_als(&a, &a, &cfg),
            Err(FitError::InvalidConfig(_))
        ));
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let a = [
            v(1.0, 0.1, 0.2),
            v(0.2, 1.0, 0.1),
            v(0.1, 0.3, 1.0),
            v(0.5, 0.5, 0.4),
            v(0.9, 0.2, 0.6),
        ];
        let b = [
            v(0.3, 0.9, 0.2),
            v(1.0, 0.1, 0.4),
            v(0.2, 0.2, 1.0),
            v(0.7, 0.1, 0.5),
            v(0.1, 0.8, 0.6),
        ];
        let cfg = AlsConfig {
            threshold: 1e-300,
            max_iters: 3,
            refine: false,
            ..Default::default()
        };
        let fit = solve_als(&a, &b, &cfg).unwrap();
        assert!(!fit.converged);
        assert_eq!(fit.iterations, 3);
        assert_eq!(fit.objective.len(), 4);
        let polished = solve_als(
            &a,
            &b,
            &AlsConfig {
                refine: true,
                ..cfg
            },
        )
        .unwrap();
        assert_eq!(polished.objective[..4], fit.objective[..]);
        assert_eq!(polished.objective.len(), 4 + polished.refine_steps);
        assert!(polished.objective.windows(2).all(|w| w[1] <= w[0]));
    }

    #[test]
    fn pair_order_does_not_matter() {
        let a = [
            v(1.0, 0.1, 0.2),
            v(0.2, 1.0, 0.1),
            v(0.1, 0.3, 1.0),
            v(0.5, 0.5, 0.4),
            v(0.9, 0.2, 0.6),
        ];
        let b = [
            v(0.3, 0.9, 0.2),
            v(1.0, 0.1, 0.4),
            v(0.2, 0.2, 1.0),
            v(0.7, 0.1, 0.5),
            v(0.1, 0.8, 0.6),
        ];
        let fit = solve_als(&a, &b, &AlsConfig::default()).unwrap();
        let order = [3, 0, 4, 2, 1];
        let pa: Vec<_> = order.iter().map(|&i| a[i]).collect();
        let pb: Vec<_> = order.iter().map(|&i| b[i]).collect();
        let shuffled = solve_als(&pa, &pb, &AlsConfig::default()).unwrap();
        assert_eq!(shuffled.transform, fit.transform);
        for (k, &i) in order.iter().enumerate() {
            assert_eq!(shuffled.scales[k], fit.scales[i]);
        }
    }
}
