//! Independent oracles shared by the integration tests.

#![allow(dead_code)]

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use linres::{RecurrentMatrix, SpectralReservoir, StateSeq};
use num_complex::Complex64;

/// `max |a − b| / max |b|`.
pub fn rel_err(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "length mismatch");
    let diff = a
        .iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max);
    let scale = b.iter().map(|y| y.abs()).fold(0.0, f64::max);
    if scale == 0.0 {
        diff
    } else {
        diff / scale
    }
}

pub fn mat_values(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

pub fn rel_err_mat(a: MatRef<'_, f64>, b: MatRef<'_, f64>) -> f64 {
    assert_eq!((a.nrows(), a.ncols()), (b.nrows(), b.ncols()));
    rel_err(&mat_values(a), &mat_values(b))
}

pub fn rel_err_states(a: &StateSeq, b: &StateSeq) -> f64 {
    rel_err(a.as_slice(), b.as_slice())
}

/// Block-diagonal transition of the Q-basis recurrence in row convention:
/// real lanes scale by λ, pair lanes `(x, y)` rotate by `μ = a + ib` through
/// `[[a, b], [−b, a]]`.
pub fn q_transition(spec: &SpectralReservoir) -> Mat<f64> {
    let n = spec.units();
    let n_r = spec.n_real();
    let mut m = Mat::<f64>::zeros(n, n);
    for (j, l) in spec.lambda_real().iter().enumerate() {
        m[(j, j)] = *l;
    }
    for (k, z) in spec.lambda_cpx().iter().enumerate() {
        let j = n_r + 2 * k;
        m[(j, j)] = z.re;
        m[(j, j + 1)] = z.im;
        m[(j + 1, j)] = -z.im;
        m[(j + 1, j + 1)] = z.re;
    }
    m
}

/// The dense recurrent matrix a spectral reservoir stands for, `Q·M·Q⁻¹`.
pub fn implied_w(spec: &SpectralReservoir) -> Mat<f64> {
    let q = spec.basis_q().expect("basis").to_owned();
    let qm = &q * q_transition(spec);
    // X = QM·Q⁻¹  ⇔  Qᵀ·Xᵀ = (QM)ᵀ
    let xt = q.partial_piv_lu().solve_transpose(qm.transpose());
    xt.transpose().to_owned()
}

pub fn dense(w: &RecurrentMatrix) -> Mat<f64> {
    w.to_dense()
}

/// States of `x(t) = x(t−1)·diag(Λ) + u(t)·W_in·P` in complex arithmetic.
pub fn complex_diag_run(
    lambda: &[Complex64],
    w_in_p: &Mat<Complex64>,
    inputs: MatRef<'_, f64>,
) -> Vec<Vec<Complex64>> {
    let n = lambda.len();
    let mut x = vec![Complex64::new(0.0, 0.0); n];
    let mut out = Vec::with_capacity(inputs.nrows());
    for t in 0..inputs.nrows() {
        for j in 0..n {
            let mut drive = Complex64::new(0.0, 0.0);
            for d in 0..inputs.ncols() {
                drive += inputs[(t, d)] * w_in_p[(d, j)];
            }
            x[j] = x[j] * lambda[j] + drive;
        }
        out.push(x.clone());
    }
    out
}

/// Real matrix as complex.
pub fn complexify(m: MatRef<'_, f64>) -> Mat<Complex64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| Complex64::new(m[(i, j)], 0.0))
}

/// Row-major iterator over a complex matrix.
pub fn cmat_values(m: &Mat<Complex64>) -> Vec<Complex64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        for j in 0..m.ncols() {
            v.push(m[(i, j)]);
        }
    }
    v
}

/// Kolmogorov–Smirnov statistic of a sample against a continuous CDF.
pub fn ks_one_sample(sample: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    let mut s = sample.to_vec();
    s.sort_by(f64::total_cmp);
    let n = s.len() as f64;
    s.iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).abs().max(((i + 1) as f64 / n - f).abs())
        })
        .fold(0.0, f64::max)
}

/// Two-sample Kolmogorov–Smirnov statistic.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j, mut d) = (0usize, 0usize, 0.0f64);
    while i < a.len() && j < b.len() {
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

/// Deterministic pseudo-random inputs in (−1, 1) without touching the library RNG.
pub fn test_inputs(steps: usize, d_in: usize, salt: u64) -> Mat<f64> {
    let mut state = salt.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ 0xD1B5_4A32_D192_ED03;
    Mat::from_fn(steps, d_in, |_, _| {
        // splitmix64
        state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^= z >> 31;
        (z >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
    })
}

/// Largest distance in a greedy nearest-neighbour matching of two multisets.
pub fn multiset_distance(a: &[Complex64], b: &[Complex64]) -> f64 {
    assert_eq!(a.len(), b.len(), "multisets differ in size");
    let mut used = vec![false; b.len()];
    let mut worst = 0.0f64;
    for x in a {
        let (j, d) = b
            .iter()
            .enumerate()
            .filter(|(j, _)| !used[*j])
            .map(|(j, y)| (j, (x - y).norm()))
            .min_by(|p, q| p.1.total_cmp(&q.1))
            .expect("b has an unused element");
        used[j] = true;
        worst = worst.max(d);
    }
    worst
}

pub fn max_abs(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}
