//! Dense linear-algebra helpers on top of `faer`.

use faer::diag::Diag;
use faer::dyn_stack::{MemBuffer, MemStack};
use faer::linalg::evd::{self, ComputeEigenvectors};
use faer::linalg::solvers::{PartialPivLu, Solve};
use faer::{Mat, MatRef, Par, Side};
use num_complex::Complex64;

use crate::error::{EsnError, Result};

/// Largest eigenvector-basis condition number accepted before a reservoir is
/// reported as near-defective.
pub const COND_LIMIT: f64 = 1e12;

pub fn eigenvalues(a: MatRef<'_, f64>) -> Result<Vec<Complex64>> {
    a.eigenvalues().map_err(|_| EsnError::EigenFailure)
}

pub fn spectral_radius(a: MatRef<'_, f64>) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.norm()).fold(0.0, f64::max))
}

/// Real eigendecomposition `A V = V diag(S)` in the real layout: a complex
/// pair `re ± i·im` occupies two adjacent columns `(Re v, Im v)` where `v`
/// is the eigenvector of `re + i·im_first`.
pub struct RealEigen {
    pub re: Vec<f64>,
    pub im: Vec<f64>,
    pub vectors: Mat<f64>,
}

pub fn real_eigen(a: MatRef<'_, f64>) -> Result<RealEigen> {
    let n = a.nrows();
    let par = Par::Seq;
    let mut vectors = Mat::<f64>::zeros(n, n);
    let mut s_re = Diag::<f64>::zeros(n);
    let mut s_im = Diag::<f64>::zeros(n);
    let mut mem = MemBuffer::new(evd::evd_scratch::<f64>(
        n,
        ComputeEigenvectors::No,
        ComputeEigenvectors::Yes,
        par,
        Default::default(),
    ));
    evd::evd_real(
        a,
        s_re.as_mut(),
        s_im.as_mut(),
        None,
        Some(vectors.as_mut()),
        par,
        MemStack::new(&mut mem),
        Default::default(),
    )
    .map_err(|_| EsnError::EigenFailure)?;
    Ok(RealEigen {
        re: s_re.column_vector().iter().copied().collect(),
        im: s_im.column_vector().iter().copied().collect(),
        vectors,
    })
}

/// Hager–Higham estimate of `‖A⁻¹‖₁` from an existing LU factorization.
fn inverse_one_norm_estimate(lu: &PartialPivLu<f64>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let mut x = Mat::<f64>::from_fn(n, 1, |_, _| 1.0 / n as f64);
    let mut estimate = 0.0;
    let mut last_j = usize::MAX;
    for _ in 0..5 {
        let y = lu.solve(&x);
        estimate = y.col(0).iter().map(|v| v.abs()).sum::<f64>();
        let xi = Mat::<f64>::from_fn(n, 1, |i, _| if y[(i, 0)] >= 0.0 { 1.0 } else { -1.0 });
        let z = lu.solve_transpose(&xi);
        let (j, zmax) = z
            .col(0)
            .iter()
            .enumerate()
            .fold((0, 0.0f64), |acc, (i, v)| {
                if v.abs() > acc.1 {
                    (i, v.abs())
                } else {
                    acc
                }
            });
        let ztx: f64 = (0..n).map(|i| z[(i, 0)] * x[(i, 0)]).sum();
        if zmax <= ztx || j == last_j {
            break;
        }
        last_j = j;
        x = Mat::zeros(n, 1);
        x[(j, 0)] = 1.0;
    }
    // alternating probe guards against the rare adversarial miss of the loop above
    let alt = Mat::<f64>::from_fn(n, 1, |i, _| {
        let sign = if i % 2 == 0 { 1.0 } else { -1.0 };
        sign * (1.0 + i as f64 / (n.max(2) - 1) as f64)
    });
    let y = lu.solve(&alt);
    let alt_est = 2.0 * y.col(0).iter().map(|v| v.abs()).sum::<f64>() / (3.0 * n as f64);
    estimate.max(alt_est)
}

/// One-norm condition estimate `‖A‖₁ · est(‖A⁻¹‖₁)`; infinite for singular `A`.
pub fn condition_estimate(a: MatRef<'_, f64>) -> f64 {
    let n = a.nrows();
    let lu = a.partial_piv_lu();
    let inv = inverse_one_norm_estimate(&lu, n);
    let cond = one_norm(a) * inv;
    if cond.is_finite() {
        cond
    } else {
        f64::INFINITY
    }
}

pub fn one_norm(a: MatRef<'_, f64>) -> f64 {
    (0..a.ncols())
        .map(|j| a.col(j).iter().map(|v| v.abs()).sum::<f64>())
        .fold(0.0, f64::max)
}

pub fn max_abs(a: MatRef<'_, f64>) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for v in a.col(j).iter() {
            m = m.max(v.abs());
        }
    }
    m
}

/// Solution of a regularized normal-equation system.
#[derive(Clone, Debug)]
pub struct RidgeFit {
    pub weights: Mat<f64>,
    /// `true` when Cholesky failed and the minimum-norm pseudo-solution was used.
    pub fallback: bool,
}

/// Unregularized Gram matrices that are singular in exact arithmetic can
/// still factor with a rounding-sized last pivot; such factors are rejected.
fn well_conditioned_pivots(l: MatRef<'_, f64>) -> bool {
    let n = l.nrows();
    let (lo, hi) = (0..n)
        .map(|i| l[(i, i)] * l[(i, i)])
        .fold((f64::INFINITY, 0.0f64), |(lo, hi), p| {
            (lo.min(p), hi.max(p))
        });
    lo > hi * n as f64 * f64::EPSILON
}

/// Solves `(G + α·R) W = B` where `G` is a Gram matrix, `R` the regularizer
/// (identity when `None`).
pub fn solve_normal_equations(
    gram: MatRef<'_, f64>,
    rhs: MatRef<'_, f64>,
    alpha: f64,
    regularizer: Option<MatRef<'_, f64>>,
) -> Result<RidgeFit> {
    let finite = |m: MatRef<'_, f64>| m.col_iter().all(|c| c.iter().all(|v| v.is_finite()));
    if !finite(gram) || !finite(rhs) {
        return Err(EsnError::Singular(
            "normal equations contain non-finite values; the reservoir states diverged".into(),
        ));
    }
    let n = gram.nrows();
    let mut lhs = gram.to_owned();
    if alpha != 0.0 {
        match regularizer {
            Some(r) => {
                for j in 0..n {
                    for i in 0..n {
                        lhs[(i, j)] += alpha * r[(i, j)];
                    }
                }
            }
            None => {
                for i in 0..n {
                    lhs[(i, i)] += alpha;
                }
            }
        }
    }
    if let Ok(llt) = lhs.llt(Side::Lower) {
        let weights = llt.solve(rhs);
        if (alpha != 0.0 || well_conditioned_pivots(llt.L()))
            && weights.col_iter().all(|c| c.iter().all(|v| v.is_finite()))
        {
            return Ok(RidgeFit {
                weights,
                fallback: false,
            });
        }
    }
    let weights = min_norm_solve(lhs.as_ref(), rhs)?;
    Ok(RidgeFit {
        weights,
        fallback: true,
    })
}

/// Minimum-norm solution of a symmetric positive semi-definite system via
/// its eigendecomposition, discarding eigenvalues below `n·ε·λ_max`.
fn min_norm_solve(a: MatRef<'_, f64>, rhs: MatRef<'_, f64>) -> Result<Mat<f64>> {
    let n = a.nrows();
    let eig = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|_| EsnError::Singular("symmetric eigendecomposition failed".into()))?;
    let u = eig.U();
    let s: Vec<f64> = eig.S().column_vector().iter().copied().collect();
    let smax = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = smax * n as f64 * f64::EPSILON;
    let proj = u.transpose() * rhs;
    let mut scaled = proj.clone();
    for i in 0..n {
        let f = if s[i].abs() > tol { 1.0 / s[i] } else { 0.0 };
        for j in 0..rhs.ncols() {
            scaled[(i, j)] = proj[(i, j)] * f;
        }
    }
    Ok(u * scaled)
}

pub fn to_rows(a: MatRef<'_, f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>], ncols_if_empty: usize) -> Result<Mat<f64>> {
    let ncols = rows.first().map_or(ncols_if_empty, |r| r.len());
    if let Some(bad) = rows.iter().find(|r| r.len() != ncols) {
        return Err(EsnError::DimensionMismatch {
            context: "matrix rows",
            expected: ncols,
            got: bad.len(),
        });
    }
    Ok(Mat::from_fn(rows.len(), ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn condition_of_diagonal_matrix() {
        let a = Mat::<f64>::from_fn(3, 3, |i, j| if i == j { [1.0, 10.0, 0.1][i] } else { 0.0 });
        let c = condition_estimate(a.as_ref());
        assert!((c - 100.0).abs() < 1e-9, "cond {c}");
    }

    #[test]
    fn singular_system_uses_min_norm_fallback() {
        // two identical columns: x1 + x2 = 2 has min-norm solution (1, 1)
        let gram = Mat::<f64>::from_fn(2, 2, |_, _| 1.0);
        let rhs = Mat::<f64>::from_fn(2, 1, |_, _| 2.0);
        let fit = solve_normal_equations(gram.as_ref(), rhs.as_ref(), 0.0, None).unwrap();
        assert!(fit.fallback);
        assert!((fit.weights[(0, 0)] - 1.0).abs() < 1e-12);
        assert!((fit.weights[(1, 0)] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn real_eigen_pairs_use_adjacent_columns() {
        let a = Mat::<f64>::from_fn(2, 2, |i, j| [[0.0, -0.8], [0.8, 0.0]][i][j]);
        let e = real_eigen(a.as_ref()).unwrap();
        assert!(e.re.iter().all(|v| v.abs() < 1e-12));
        assert!((e.im[0].abs() - 0.8).abs() < 1e-12);
        assert!((e.im[0] + e.im[1]).abs() < 1e-12);
    }
}
