//! Baseline linear ESN with an explicit recurrent matrix: O(N²) per step
//! dense, O(nnz) per step sparse.

use faer::linalg::matmul::matmul;
use faer::{Accum, Mat, MatMut, MatRef, Par};
use rand::Rng;
use rand_distr::StandardNormal;
use sprs::CsMat;

use crate::config::EsnConfig;
use crate::error::{check_dim, EsnError, Result};
use crate::linalg;
use crate::readout::Basis;
use crate::rng::{stream, Stream};
use crate::state::{Feedback, Run, StateSeq};

/// Connectivity below which `W` is stored in compressed-row form.
pub const SPARSE_THRESHOLD: f64 = 0.5;

/// Recurrent matrix `W`, dense or compressed-row.
#[derive(Clone, Debug, PartialEq)]
pub enum RecurrentMatrix {
    Dense(Mat<f64>),
    Sparse(CsMat<f64>),
}

impl RecurrentMatrix {
    pub fn units(&self) -> usize {
        match self {
            RecurrentMatrix::Dense(m) => m.nrows(),
            RecurrentMatrix::Sparse(m) => m.rows(),
        }
    }

    pub fn nnz(&self) -> usize {
        match self {
            RecurrentMatrix::Dense(m) => m
                .col_iter()
                .map(|c| c.iter().filter(|v| **v != 0.0).count())
                .sum(),
            RecurrentMatrix::Sparse(m) => m.data().iter().filter(|v| **v != 0.0).count(),
        }
    }

    pub fn to_dense(&self) -> Mat<f64> {
        match self {
            RecurrentMatrix::Dense(m) => m.clone(),
            RecurrentMatrix::Sparse(m) => {
                let mut d = Mat::<f64>::zeros(m.rows(), m.cols());
                for (i, row) in m.outer_iterator().enumerate() {
                    for (j, v) in row.iter() {
                        d[(i, j)] = *v;
                    }
                }
                d
            }
        }
    }

    /// Multiplies every entry by `factor`.
    pub fn scale(&mut self, factor: f64) {
        match self {
            RecurrentMatrix::Dense(m) => {
                for j in 0..m.ncols() {
                    for v in m.col_mut(j).iter_mut() {
                        *v *= factor;
                    }
                }
            }
            RecurrentMatrix::Sparse(m) => {
                for v in m.data_mut() {
                    *v *= factor;
                }
            }
        }
    }

    /// `lr·W + (1 − lr)·I`.
    fn mixed_with_identity(&self, lr: f64) -> Self {
        match self {
            RecurrentMatrix::Dense(m) => {
                let n = m.nrows();
                RecurrentMatrix::Dense(Mat::from_fn(n, n, |i, j| {
                    lr * m[(i, j)] + if i == j { 1.0 - lr } else { 0.0 }
                }))
            }
            RecurrentMatrix::Sparse(m) => {
                let n = m.rows();
                let mut indptr = Vec::with_capacity(n + 1);
                let mut indices = Vec::with_capacity(m.nnz() + n);
                let mut data = Vec::with_capacity(m.nnz() + n);
                indptr.push(0);
                for (i, row) in m.outer_iterator().enumerate() {
                    let mut diag_done = lr == 1.0;
                    for (j, v) in row.iter() {
                        if !diag_done && j >= i {
                            if j == i {
                                indices.push(i);
                                data.push(lr * v + (1.0 - lr));
                                diag_done = true;
                                continue;
                            }
                            indices.push(i);
                            data.push(1.0 - lr);
                            diag_done = true;
                        }
                        indices.push(j);
                        data.push(lr * v);
                    }
                    if !diag_done {
                        indices.push(i);
                        data.push(1.0 - lr);
                    }
                    indptr.push(indices.len());
                }
                RecurrentMatrix::Sparse(CsMat::new((n, n), indptr, indices, data))
            }
        }
    }

    /// `out = x · W`.
    pub fn row_vec_mul(&self, x: &[f64], out: &mut [f64]) {
        match self {
            RecurrentMatrix::Dense(m) => {
                let n = m.nrows();
                matmul(
                    MatMut::from_row_major_slice_mut(out, 1, n),
                    Accum::Replace,
                    MatRef::from_row_major_slice(x, 1, n),
                    m.as_ref(),
                    1.0,
                    Par::Seq,
                );
            }
            RecurrentMatrix::Sparse(m) => {
                out.fill(0.0);
                let indptr = m.indptr();
                let indptr = indptr.raw_storage();
                let (indices, data) = (m.indices(), m.data());
                for (i, &xi) in x.iter().enumerate() {
                    if xi == 0.0 {
                        continue;
                    }
                    for k in indptr[i]..indptr[i + 1] {
                        out[indices[k]] += xi * data[k];
                    }
                }
            }
        }
    }
}

/// Weights of a standard linear reservoir.
#[derive(Clone, Debug, PartialEq)]
pub struct DenseReservoir {
    pub w: RecurrentMatrix,
    /// `D_in × N`.
    pub w_in: Mat<f64>,
    /// `D_out × N`.
    pub w_fb: Option<Mat<f64>>,
}

pub(crate) fn masked_uniform(
    rows: usize,
    cols: usize,
    connectivity: f64,
    scale: f64,
    seed: u64,
    which: Stream,
) -> Mat<f64> {
    let mut rng = stream(seed, which);
    let mut m = Mat::<f64>::zeros(rows, cols);
    for i in 0..rows {
        for j in 0..cols {
            if connectivity >= 1.0 || rng.random::<f64>() < connectivity {
                m[(i, j)] = scale * rng.random_range(-1.0..1.0);
            }
        }
    }
    m
}

/// Draws the unscaled recurrent matrix: Bernoulli(c_r) mask, standard normal values.
fn draw_recurrent(n: usize, connectivity: f64, seed: u64) -> RecurrentMatrix {
    let mut rng = stream(seed, Stream::Recurrent);
    let draw = |rng: &mut rand_chacha::ChaCha8Rng| -> Option<f64> {
        if connectivity >= 1.0 || rng.random::<f64>() < connectivity {
            Some(rng.sample(StandardNormal))
        } else {
            None
        }
    };
    if connectivity < SPARSE_THRESHOLD {
        let mut indptr = Vec::with_capacity(n + 1);
        let mut indices = Vec::new();
        let mut data = Vec::new();
        indptr.push(0);
        for _ in 0..n {
            for j in 0..n {
                if let Some(v) = draw(&mut rng) {
                    indices.push(j);
                    data.push(v);
                }
            }
            indptr.push(indices.len());
        }
        RecurrentMatrix::Sparse(CsMat::new((n, n), indptr, indices, data))
    } else {
        let mut m = Mat::<f64>::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                if let Some(v) = draw(&mut rng) {
                    m[(i, j)] = v;
                }
            }
        }
        RecurrentMatrix::Dense(m)
    }
}

/// Generates `W`, `W_in` and (if enabled) `W_fb` from the config seed and
/// rescales `W` to the configured spectral radius.
pub fn generate_dense(config: &EsnConfig) -> Result<DenseReservoir> {
    let mut res = generate_unscaled(config)?;
    res.scale_to_spectral_radius(config.spectral_radius)?;
    Ok(res)
}

/// Same draws as [`generate_dense`] with `W` left at its sampled scale.
pub fn generate_unscaled(config: &EsnConfig) -> Result<DenseReservoir> {
    config.validate()?;
    let n = config.units;
    let w = draw_recurrent(n, config.connectivity_r, config.seed);
    let w_in = masked_uniform(
        config.d_in,
        n,
        config.connectivity_in,
        config.input_scaling,
        config.seed,
        Stream::Input,
    );
    let w_fb = config.use_feedback.then(|| {
        masked_uniform(
            config.d_out,
            n,
            config.connectivity_fb,
            1.0,
            config.seed,
            Stream::Feedback,
        )
    });
    Ok(DenseReservoir { w, w_in, w_fb })
}

impl DenseReservoir {
    pub fn new(w: RecurrentMatrix, w_in: Mat<f64>, w_fb: Option<Mat<f64>>) -> Result<Self> {
        let n = w.units();
        check_dim("W_in columns", n, w_in.ncols())?;
        if let Some(fb) = &w_fb {
            check_dim("W_fb columns", n, fb.ncols())?;
        }
        Ok(Self { w, w_in, w_fb })
    }

    pub fn units(&self) -> usize {
        self.w.units()
    }

    pub fn d_in(&self) -> usize {
        self.w_in.nrows()
    }

    pub fn spectral_radius(&self) -> Result<f64> {
        linalg::spectral_radius(self.w.to_dense().as_ref())
    }

    /// Rescales `W` so that its largest eigenvalue modulus equals `rho`.
    /// Returns the radius before scaling.
    pub fn scale_to_spectral_radius(&mut self, rho: f64) -> Result<f64> {
        let current = self.spectral_radius()?;
        if current == 0.0 {
            let n = self.units();
            return Err(EsnError::DegenerateDraw {
                nonzeros: self.w.nnz(),
                total: n * n,
            });
        }
        self.w.scale(rho / current);
        Ok(current)
    }

    /// One step `next = prev·W + u·W_in + y_prev·W_fb`.
    pub fn step(&self, prev: &[f64], u: &[f64], y_prev: &[f64], next: &mut [f64]) {
        self.w.row_vec_mul(prev, next);
        accumulate_rows(self.w_in.as_ref(), u, next);
        if let Some(fb) = &self.w_fb {
            accumulate_rows(fb.as_ref(), y_prev, next);
        }
    }
}

/// `out += Σ_d x_d · row_d(m)`.
pub(crate) fn accumulate_rows(m: MatRef<'_, f64>, x: &[f64], out: &mut [f64]) {
    for (d, &xd) in x.iter().enumerate() {
        if xd == 0.0 {
            continue;
        }
        let row = m.row(d);
        for (o, w) in out.iter_mut().zip(row.iter()) {
            *o += xd * w;
        }
    }
}

/// Leaky reparameterization: `W ← lr·W + (1−lr)·I`, `W_in ← lr·W_in`, `W_fb ← lr·W_fb`.
pub fn apply_leak(res: &DenseReservoir, lr: f64) -> DenseReservoir {
    assert!(lr > 0.0 && lr <= 1.0, "leak rate must lie in (0, 1]");
    if lr == 1.0 {
        return res.clone();
    }
    let scale = |m: &Mat<f64>| Mat::from_fn(m.nrows(), m.ncols(), |i, j| lr * m[(i, j)]);
    DenseReservoir {
        w: res.w.mixed_with_identity(lr),
        w_in: scale(&res.w_in),
        w_fb: res.w_fb.as_ref().map(scale),
    }
}

/// Sequential O(N²) (or O(nnz)) evaluation of the reservoir from `r(0) = 0`.
pub fn run_reservoir(
    res: &DenseReservoir,
    inputs: MatRef<'_, f64>,
    feedback: Feedback<'_>,
) -> Result<Run> {
    check_dim("input columns", res.d_in(), inputs.ncols())?;
    let n = res.units();
    let d_out = feedback.prepare(
        res.w_fb.as_ref().map(|m| m.nrows()),
        n,
        Basis::Original,
        inputs.nrows(),
    )?;
    let steps = inputs.nrows();
    let mut states = StateSeq::zeros(steps, n);
    let mut outputs = feedback
        .wants_outputs()
        .then(|| Mat::<f64>::zeros(steps, d_out));
    let mut prev = vec![0.0; n];
    let mut next = vec![0.0; n];
    let mut u = vec![0.0; inputs.ncols()];
    let mut y_prev = vec![0.0; d_out];
    let mut y = vec![0.0; d_out];
    for t in 0..steps {
        for (d, v) in u.iter_mut().enumerate() {
            *v = inputs[(t, d)];
        }
        res.step(&prev, &u, &y_prev, &mut next);
        states.row_mut(t).copy_from_slice(&next);
        feedback.after_step(t, &next, &mut y_prev, &mut y, outputs.as_mut());
        std::mem::swap(&mut prev, &mut next);
    }
    Ok(Run { states, outputs })
}
