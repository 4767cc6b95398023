//! Reservoir dynamics in the real eigenbasis `Q`.
//!
//! With `W = P·diag(Λ)·P⁻¹`, the transformed state `[r]_P = r·P` evolves
//! pointwise: `[r(t)]_P = [r(t-1)]_P ⊙ Λ + u(t)·W_in·P + y(t-1)·W_fb·P`.
//! Eigenvalues come as `n_r` reals and `n_i` conjugate pairs; the conjugate
//! member of each pair carries no extra information, so the state is kept
//! in the real basis
//!
//! ```text
//! Q = [u_1 … u_{n_r}, Re v_1, Im v_1, …, Re v_{n_i}, Im v_{n_i}]
//! ```
//!
//! where the `(Re, Im)` lanes of a pair, read as one complex number, are the
//! `P`-coordinate of the eigenvalue `μ_k` (imaginary part > 0). The decay step
//! therefore reinterprets the tail of the state buffer as `&mut [Complex64]`
//! and multiplies in place, while input, feedback, readout and training all
//! stay real.

use std::cmp::Ordering;
use std::sync::{Arc, OnceLock};

use faer::linalg::solvers::Solve;
use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{check_dim, EsnError, Result};
use crate::linalg::{self, COND_LIMIT};
use crate::readout::{fit_readout, Basis, Readout, TrainSpec, TrainedReadout};
use crate::standard::DenseReservoir;
use crate::state::{Feedback, Run, StateSeq};

/// Reinterprets interleaved `(re, im)` lanes as complex numbers.
pub fn complex_lanes(lanes: &[f64]) -> &[Complex64] {
    assert!(
        lanes.len().is_multiple_of(2),
        "complex view needs an even number of lanes"
    );
    // SAFETY: Complex<f64> is #[repr(C)] { re: f64, im: f64 }: same alignment
    // as f64 and exactly two f64 in size, so the buffer is a valid
    // [Complex64] of half the length for the lifetime of the borrow.
    unsafe { std::slice::from_raw_parts(lanes.as_ptr().cast::<Complex64>(), lanes.len() / 2) }
}

/// Mutable counterpart of [`complex_lanes`].
pub fn complex_lanes_mut(lanes: &mut [f64]) -> &mut [Complex64] {
    assert!(
        lanes.len().is_multiple_of(2),
        "complex view needs an even number of lanes"
    );
    // SAFETY: see `complex_lanes`; the exclusive borrow is carried over.
    unsafe {
        std::slice::from_raw_parts_mut(lanes.as_mut_ptr().cast::<Complex64>(), lanes.len() / 2)
    }
}

/// Borrowed Q-basis state: `n_real` real lanes followed by interleaved pairs.
pub struct QState<'a> {
    n_real: usize,
    values: &'a mut [f64],
}

impl<'a> QState<'a> {
    pub fn new(values: &'a mut [f64], n_real: usize) -> Self {
        assert!(n_real <= values.len() && (values.len() - n_real).is_multiple_of(2));
        Self { n_real, values }
    }

    pub fn values(&self) -> &[f64] {
        self.values
    }

    /// Real lanes and the complex view of the pair lanes of the same buffer.
    pub fn split(&mut self) -> (&mut [f64], &mut [Complex64]) {
        let (re, cpx) = self.values.split_at_mut(self.n_real);
        (re, complex_lanes_mut(cpx))
    }

    /// `state ← state ⊙ Λ` lane-wise.
    pub fn decay(&mut self, lambda_real: &[f64], lambda_cpx: &[Complex64]) {
        let (re, cpx) = self.split();
        for (s, l) in re.iter_mut().zip(lambda_real) {
            *s *= l;
        }
        for (s, l) in cpx.iter_mut().zip(lambda_cpx) {
            *s *= l;
        }
    }
}

/// Eigenvector basis and quantities derived from it on demand.
#[derive(Debug)]
pub struct QBasis {
    q: Mat<f64>,
    cond: f64,
    gram: OnceLock<Mat<f64>>,
}

impl QBasis {
    pub fn new(q: Mat<f64>) -> Self {
        let cond = linalg::condition_estimate(q.as_ref());
        Self::with_cond(q, cond)
    }

    pub(crate) fn with_cond(q: Mat<f64>, cond: f64) -> Self {
        Self {
            q,
            cond,
            gram: OnceLock::new(),
        }
    }

    pub fn matrix(&self) -> MatRef<'_, f64> {
        self.q.as_ref()
    }

    /// One-norm condition estimate. `Q = P·Z` with `Z` a scaled unitary
    /// block-diagonal, so this also bounds the conditioning of `P`.
    pub fn cond(&self) -> f64 {
        self.cond
    }

    /// `QᵀQ`, computed once.
    pub fn gram(&self) -> &Mat<f64> {
        self.gram.get_or_init(|| self.q.transpose() * &self.q)
    }
}

/// Diagonal reservoir: eigenvalues plus input/feedback weights in the `Q` basis.
#[derive(Clone, Debug)]
pub struct SpectralReservoir {
    lambda_real: Vec<f64>,
    lambda_cpx: Vec<Complex64>,
    d_in: usize,
    /// `[W_in]_Q`, row-major `D_in × N`.
    w_in_q: Vec<f64>,
    /// `[W_fb]_Q`, row-major `D_out × N`.
    w_fb_q: Option<(usize, Vec<f64>)>,
    basis: Option<Arc<QBasis>>,
}

fn row_major(m: MatRef<'_, f64>) -> Vec<f64> {
    let mut v = Vec::with_capacity(m.nrows() * m.ncols());
    for i in 0..m.nrows() {
        v.extend(m.row(i).iter().copied());
    }
    v
}

impl SpectralReservoir {
    /// Assembles a reservoir from its parts. `w_in_q`/`w_fb_q` are already in
    /// the `Q` basis; `basis`, when given, is the `N × N` matrix `Q`.
    pub fn from_parts(
        lambda_real: Vec<f64>,
        lambda_cpx: Vec<Complex64>,
        w_in_q: MatRef<'_, f64>,
        w_fb_q: Option<MatRef<'_, f64>>,
        basis: Option<Arc<QBasis>>,
    ) -> Result<Self> {
        let n = lambda_real.len() + 2 * lambda_cpx.len();
        check_dim("[W_in]_Q columns", n, w_in_q.ncols())?;
        if let Some(fb) = w_fb_q {
            check_dim("[W_fb]_Q columns", n, fb.ncols())?;
        }
        if let Some(b) = &basis {
            check_dim("basis size", n, b.q.nrows())?;
            check_dim("basis size", n, b.q.ncols())?;
        }
        Ok(Self {
            lambda_real,
            lambda_cpx,
            d_in: w_in_q.nrows(),
            w_in_q: row_major(w_in_q),
            w_fb_q: w_fb_q.map(|m| (m.nrows(), row_major(m))),
            basis,
        })
    }

    pub fn units(&self) -> usize {
        self.lambda_real.len() + 2 * self.lambda_cpx.len()
    }

    pub fn n_real(&self) -> usize {
        self.lambda_real.len()
    }

    pub fn n_pairs(&self) -> usize {
        self.lambda_cpx.len()
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn d_fb(&self) -> Option<usize> {
        self.w_fb_q.as_ref().map(|(d, _)| *d)
    }

    pub fn lambda_real(&self) -> &[f64] {
        &self.lambda_real
    }

    pub fn lambda_cpx(&self) -> &[Complex64] {
        &self.lambda_cpx
    }

    pub fn w_in_q(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.w_in_q, self.d_in, self.units())
    }

    pub fn w_fb_q(&self) -> Option<MatRef<'_, f64>> {
        let n = self.units();
        self.w_fb_q
            .as_ref()
            .map(|(d, v)| MatRef::from_row_major_slice(v, *d, n))
    }

    pub fn basis(&self) -> Option<&Arc<QBasis>> {
        self.basis.as_ref()
    }

    pub fn basis_q(&self) -> Option<MatRef<'_, f64>> {
        self.basis.as_ref().map(|b| b.matrix())
    }

    pub fn cond_p(&self) -> Option<f64> {
        self.basis.as_ref().map(|b| b.cond())
    }

    fn require_basis(&self) -> Result<&QBasis> {
        self.basis.as_deref().ok_or_else(|| {
            EsnError::Model(
                "operation needs the eigenvector basis Q, which this reservoir does not store"
                    .into(),
            )
        })
    }

    /// Complex eigenvector matrix in the interleaved layout
    /// `[u_1 … u_{n_r}, v_1, v̄_1, …]`, rebuilt from `Q`.
    pub fn basis_p(&self) -> Option<Mat<Complex64>> {
        let q = self.basis_q()?;
        let n_r = self.n_real();
        let n = self.units();
        Some(Mat::from_fn(n, n, |i, j| {
            if j < n_r {
                Complex64::new(q[(i, j)], 0.0)
            } else {
                let base = n_r + 2 * ((j - n_r) / 2);
                let (re, im) = (q[(i, base)], q[(i, base + 1)]);
                if (j - n_r).is_multiple_of(2) {
                    Complex64::new(re, im)
                } else {
                    Complex64::new(re, -im)
                }
            }
        }))
    }

    /// Every eigenvalue, conjugates included.
    pub fn eigenvalues(&self) -> Vec<Complex64> {
        let mut all: Vec<Complex64> = self
            .lambda_real
            .iter()
            .map(|&r| Complex64::new(r, 0.0))
            .collect();
        for z in &self.lambda_cpx {
            all.push(*z);
            all.push(z.conj());
        }
        all
    }

    pub fn spectral_radius(&self) -> f64 {
        self.lambda_real
            .iter()
            .map(|v| v.abs())
            .chain(self.lambda_cpx.iter().map(|z| z.norm()))
            .fold(0.0, f64::max)
    }

    /// Same eigenvectors and input weights, eigenvalues rescaled so the
    /// spectral radius is `rho`.
    pub fn with_spectral_radius(&self, rho: f64) -> Self {
        let current = self.spectral_radius();
        let f = if current > 0.0 { rho / current } else { 1.0 };
        let mut out = self.clone();
        out.lambda_real.iter_mut().for_each(|v| *v *= f);
        out.lambda_cpx.iter_mut().for_each(|z| *z *= f);
        out
    }

    /// Leaky reparameterization in the eigenbasis: `Λ ← lr·Λ + (1−lr)`,
    /// `[W_in]_Q ← lr·[W_in]_Q`, `[W_fb]_Q ← lr·[W_fb]_Q`. Eigenvectors are unchanged.
    pub fn apply_leak(&self, lr: f64) -> Self {
        assert!(lr > 0.0 && lr <= 1.0, "leak rate must lie in (0, 1]");
        let mut out = self.clone();
        if lr == 1.0 {
            return out;
        }
        out.lambda_real
            .iter_mut()
            .for_each(|v| *v = lr * *v + (1.0 - lr));
        out.lambda_cpx
            .iter_mut()
            .for_each(|z| *z = *z * lr + (1.0 - lr));
        out.w_in_q.iter_mut().for_each(|v| *v *= lr);
        if let Some((_, fb)) = &mut out.w_fb_q {
            fb.iter_mut().for_each(|v| *v *= lr);
        }
        out
    }

    /// Input weights multiplied by `s`.
    pub fn with_input_scaling(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.w_in_q.iter_mut().for_each(|v| *v *= s);
        out
    }

    /// One in-place step `state ← state ⊙ Λ + u·[W_in]_Q + y_prev·[W_fb]_Q`.
    pub fn step(&self, state: &mut [f64], u: &[f64], y_prev: &[f64]) {
        QState::new(state, self.n_real()).decay(&self.lambda_real, &self.lambda_cpx);
        let n = self.units();
        add_rows(&self.w_in_q, n, u, state);
        if let Some((_, fb)) = &self.w_fb_q {
            add_rows(fb, n, y_prev, state);
        }
    }

    /// Maps Q-basis states back to neuron coordinates: `r = [r]_Q · Q⁻¹`.
    pub fn to_original(&self, states: &StateSeq) -> Result<StateSeq> {
        let basis = self.require_basis()?;
        check_dim("state width", self.units(), states.width())?;
        let lu = basis.q.partial_piv_lu();
        // r·Q = [r]_Q  ⇔  Qᵀ·rᵀ = [r]_Qᵀ
        let rt = lu.solve_transpose(states.as_mat().transpose());
        let mut out = StateSeq::zeros(states.steps(), states.width());
        for t in 0..states.steps() {
            for (j, v) in out.row_mut(t).iter_mut().enumerate() {
                *v = rt[(j, t)];
            }
        }
        Ok(out)
    }

    /// Maps neuron-coordinate states into the Q basis: `[r]_Q = r·Q`.
    pub fn from_original(&self, states: &StateSeq) -> Result<StateSeq> {
        let basis = self.require_basis()?;
        check_dim("state width", self.units(), states.width())?;
        let m = states.as_mat() * basis.matrix();
        Ok(StateSeq::from_vec(m.ncols(), row_major(m.as_ref())))
    }
}

/// `out += Σ_d x_d · row_d`, rows stored contiguously with length `n`.
pub(crate) fn add_rows(rows: &[f64], n: usize, x: &[f64], out: &mut [f64]) {
    for (d, &xd) in x.iter().enumerate() {
        if xd == 0.0 {
            continue;
        }
        for (o, w) in out.iter_mut().zip(&rows[d * n..(d + 1) * n]) {
            *o += xd * w;
        }
    }
}

fn real_order(a: &f64, b: &f64) -> Ordering {
    b.abs().total_cmp(&a.abs()).then(b.total_cmp(a))
}

fn pair_order(a: &Complex64, b: &Complex64) -> Ordering {
    b.norm()
        .total_cmp(&a.norm())
        .then(a.arg().total_cmp(&b.arg()))
}

/// Describes the two closest eigenvalues, for near-defective diagnostics.
fn closest_eigenvalues(values: &[Complex64]) -> String {
    let mut best = (f64::INFINITY, Complex64::default(), Complex64::default());
    for (i, a) in values.iter().enumerate() {
        for b in &values[i + 1..] {
            let d = (a - b).norm();
            if d < best.0 {
                best = (d, *a, *b);
            }
        }
    }
    if best.0.is_finite() {
        format!(
            "{:.6}{:+.6}i and {:.6}{:+.6}i (distance {:.3e})",
            best.1.re, best.1.im, best.2.re, best.2.im, best.0
        )
    } else {
        "(single eigenvalue)".into()
    }
}

/// Lanes of an eigenbasis before assembly: eigenvalues plus basis columns.
pub(crate) struct Lanes {
    pub reals: Vec<(f64, Vec<f64>)>,
    pub pairs: Vec<(Complex64, Vec<f64>, Vec<f64>)>,
}

impl Lanes {
    /// Sorts into canonical order and builds `Q`.
    pub(crate) fn into_canonical(mut self) -> (Vec<f64>, Vec<Complex64>, Mat<f64>) {
        self.reals.sort_by(|a, b| real_order(&a.0, &b.0));
        self.pairs.sort_by(|a, b| pair_order(&a.0, &b.0));
        let n = self.reals.len() + 2 * self.pairs.len();
        let mut q = Mat::<f64>::zeros(n, n);
        let mut col = 0;
        for (_, u) in &self.reals {
            for (i, v) in u.iter().enumerate() {
                q[(i, col)] = *v;
            }
            col += 1;
        }
        for (_, re, im) in &self.pairs {
            for i in 0..n {
                q[(i, col)] = re[i];
                q[(i, col + 1)] = im[i];
            }
            col += 2;
        }
        (
            self.reals.iter().map(|r| r.0).collect(),
            self.pairs.iter().map(|p| p.0).collect(),
            q,
        )
    }
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Eigendecomposition of `W` with eigenvalues split into reals and canonical
/// conjugate pairs, and `W_in`/`W_fb` mapped into the `Q` basis.
pub fn diagonalize(res: &DenseReservoir) -> Result<SpectralReservoir> {
    let w = res.w.to_dense();
    let n = w.nrows();
    let eig = linalg::real_eigen(w.as_ref())?;
    let mut lanes = Lanes {
        reals: Vec::new(),
        pairs: Vec::new(),
    };
    let mut j = 0;
    while j < n {
        if eig.im[j] == 0.0 {
            let mut u: Vec<f64> = eig.vectors.col(j).iter().copied().collect();
            normalize(&mut u);
            lanes.reals.push((eig.re[j], u));
            j += 1;
        } else {
            // column j + i·column j+1 is the eigenvector of re[j] + i·im[j]
            let sign = if eig.im[j] > 0.0 { 1.0 } else { -1.0 };
            let mu = Complex64::new(eig.re[j], sign * eig.im[j]);
            let re: Vec<f64> = eig.vectors.col(j).iter().copied().collect();
            let im: Vec<f64> = eig.vectors.col(j + 1).iter().map(|v| sign * v).collect();
            let norm = re.iter().chain(&im).map(|x| x * x).sum::<f64>().sqrt();
            let scale = if norm > 0.0 { 1.0 / norm } else { 1.0 };
            lanes.pairs.push((
                mu,
                re.iter().map(|v| v * scale).collect(),
                im.iter().map(|v| v * scale).collect(),
            ));
            j += 2;
        }
    }
    let (lambda_real, lambda_cpx, q) = lanes.into_canonical();
    let basis = QBasis::new(q);
    if !(basis.cond() <= COND_LIMIT) {
        let mut all: Vec<Complex64> = lambda_real
            .iter()
            .map(|&r| Complex64::new(r, 0.0))
            .collect();
        for z in &lambda_cpx {
            all.push(*z);
            all.push(z.conj());
        }
        return Err(EsnError::NearDefective {
            cond: basis.cond(),
            limit: COND_LIMIT,
            cluster: closest_eigenvalues(&all),
        });
    }
    let w_in_q = &res.w_in * basis.matrix();
    let w_fb_q = res.w_fb.as_ref().map(|fb| fb * basis.matrix());
    SpectralReservoir::from_parts(
        lambda_real,
        lambda_cpx,
        w_in_q.as_ref(),
        w_fb_q.as_ref().map(|m| m.as_ref()),
        Some(Arc::new(basis)),
    )
}

/// Sequential O(N·(D_in + D_out)) evaluation in the `Q` basis from a zero state.
pub fn run_diagonal(
    spec: &SpectralReservoir,
    inputs: MatRef<'_, f64>,
    feedback: Feedback<'_>,
) -> Result<Run> {
    check_dim("input columns", spec.d_in(), inputs.ncols())?;
    let n = spec.units();
    let steps = inputs.nrows();
    let d_out = feedback.prepare(spec.d_fb(), n, Basis::Q, steps)?;
    let mut states = StateSeq::zeros(steps, n);
    let mut outputs = feedback
        .wants_outputs()
        .then(|| Mat::<f64>::zeros(steps, d_out));
    let mut state = vec![0.0; n];
    let mut u = vec![0.0; inputs.ncols()];
    let mut y_prev = vec![0.0; d_out];
    let mut y = vec![0.0; d_out];
    for t in 0..steps {
        for (d, v) in u.iter_mut().enumerate() {
            *v = inputs[(t, d)];
        }
        spec.step(&mut state, &u, &y_prev);
        states.row_mut(t).copy_from_slice(&state);
        feedback.after_step(t, &state, &mut y_prev, &mut y, outputs.as_mut());
    }
    Ok(Run { states, outputs })
}

/// EWT: maps a readout trained on neuron-coordinate states into the `Q`
/// basis, `[W_out,res]_Q = Q⁻¹·W_out,res`; bias and feedback blocks unchanged.
pub fn ewt_transform(readout: &Readout, spec: &SpectralReservoir) -> Result<Readout> {
    if readout.basis != Basis::Original {
        return Err(EsnError::BasisMismatch {
            readout: readout.basis.name(),
            states: Basis::Original.name(),
        });
    }
    let basis = spec.require_basis()?;
    if !(basis.cond() <= COND_LIMIT) {
        return Err(EsnError::NearDefective {
            cond: basis.cond(),
            limit: COND_LIMIT,
            cluster: closest_eigenvalues(&spec.eigenvalues()),
        });
    }
    check_dim("readout units", spec.units(), readout.units())?;
    let res_block = basis.q.partial_piv_lu().solve(&readout.res_block);
    Ok(Readout {
        bias: readout.bias.clone(),
        out_block: readout.out_block.clone(),
        res_block,
        basis: Basis::Q,
    })
}

/// EET: ridge fit directly on Q-basis states with regularizer
/// `α·blockdiag(I, QᵀQ)`, equal to the EWT of the dense-basis ridge fit.
pub fn eet_train(
    q_states: &StateSeq,
    train: TrainSpec<'_>,
    spec: &SpectralReservoir,
) -> Result<TrainedReadout> {
    let basis = spec.require_basis()?;
    check_dim("state width", spec.units(), q_states.width())?;
    fit_readout(q_states, train, Basis::Q, Some(basis.gram().as_ref()))
}
