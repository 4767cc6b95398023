//! Linear readout `y(t) = [1, y(t-1), r(t)] · W_out` and its ridge training.

use std::ops::Range;

use faer::{Mat, MatRef};
use serde::{Deserialize, Serialize};

use crate::error::{check_dim, EsnError, Result};
use crate::linalg::{solve_normal_equations, RidgeFit};
use crate::state::StateSeq;

/// Coordinate system of reservoir states (and of a readout's reservoir block).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    /// Neuron coordinates of the dense reservoir.
    Original,
    /// Real eigenbasis: real eigenvectors followed by `(Re v, Im v)` column pairs.
    Q,
}

impl Basis {
    pub fn name(self) -> &'static str {
        match self {
            Basis::Original => "original",
            Basis::Q => "Q",
        }
    }
}

/// Which optional blocks precede the reservoir block of `W_out`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReadoutFlags {
    pub use_bias: bool,
    pub use_feedback: bool,
}

impl ReadoutFlags {
    pub fn prefix_width(self, d_out: usize) -> usize {
        usize::from(self.use_bias) + if self.use_feedback { d_out } else { 0 }
    }
}

/// `W_out` split into its bias, previous-output and reservoir blocks.
#[derive(Clone, Debug, PartialEq)]
pub struct Readout {
    pub bias: Option<Vec<f64>>,
    pub out_block: Option<Mat<f64>>,
    pub res_block: Mat<f64>,
    pub basis: Basis,
}

impl Readout {
    /// Splits a stacked `N' × D_out` weight matrix laid out as `[bias; out; res]`.
    pub fn from_weights(w: MatRef<'_, f64>, flags: ReadoutFlags, basis: Basis) -> Result<Self> {
        let d_out = w.ncols();
        let prefix = flags.prefix_width(d_out);
        if w.nrows() < prefix {
            return Err(EsnError::DimensionMismatch {
                context: "readout weight rows",
                expected: prefix,
                got: w.nrows(),
            });
        }
        let mut row = 0;
        let bias = flags.use_bias.then(|| {
            row += 1;
            (0..d_out).map(|j| w[(0, j)]).collect()
        });
        let out_block = flags.use_feedback.then(|| {
            let b = w.subrows(row, d_out).to_owned();
            row += d_out;
            b
        });
        let res_block = w.subrows(row, w.nrows() - row).to_owned();
        Ok(Self {
            bias,
            out_block,
            res_block,
            basis,
        })
    }

    pub fn flags(&self) -> ReadoutFlags {
        ReadoutFlags {
            use_bias: self.bias.is_some(),
            use_feedback: self.out_block.is_some(),
        }
    }

    /// Stacked `[bias; out; res]` weight matrix.
    pub fn weights(&self) -> Mat<f64> {
        let d_out = self.d_out();
        let prefix = self.flags().prefix_width(d_out);
        let n = self.units();
        Mat::from_fn(prefix + n, d_out, |i, j| {
            let mut i = i;
            if let Some(b) = &self.bias {
                if i == 0 {
                    return b[j];
                }
                i -= 1;
            }
            if let Some(o) = &self.out_block {
                if i < d_out {
                    return o[(i, j)];
                }
                i -= d_out;
            }
            self.res_block[(i, j)]
        })
    }

    pub fn d_out(&self) -> usize {
        self.res_block.ncols()
    }

    pub fn units(&self) -> usize {
        self.res_block.nrows()
    }

    /// `out = bias + y_prev · W_out,out + state · W_out,res`, no checks.
    pub(crate) fn apply(&self, state: &[f64], y_prev: &[f64], out: &mut [f64]) {
        for (j, o) in out.iter_mut().enumerate() {
            let mut acc = self.bias.as_ref().map_or(0.0, |b| b[j]);
            if let Some(ob) = &self.out_block {
                for (k, y) in y_prev.iter().enumerate() {
                    acc += y * ob[(k, j)];
                }
            }
            let col = self.res_block.col(j);
            for (s, w) in state.iter().zip(col.iter()) {
                acc += s * w;
            }
            *o = acc;
        }
    }

    /// Open-loop outputs for the given rows; `y_prev` row `t` holds `y(t-1)`.
    pub fn predict(
        &self,
        states: &StateSeq,
        y_prev: Option<MatRef<'_, f64>>,
        rows: Range<usize>,
    ) -> Result<Mat<f64>> {
        check_dim("readout units", self.units(), states.width())?;
        if self.out_block.is_some() && y_prev.is_none() {
            return Err(EsnError::MissingReadout(
                "readout uses the previous output but no previous outputs were given",
            ));
        }
        let d_out = self.d_out();
        let mut out = Mat::<f64>::zeros(rows.len(), d_out);
        let mut buf = vec![0.0; d_out];
        let mut prev = vec![0.0; d_out];
        for (i, t) in rows.enumerate() {
            if let Some(yp) = y_prev {
                for (k, p) in prev.iter_mut().enumerate() {
                    *p = yp[(t, k)];
                }
            }
            self.apply(states.row(t), &prev, &mut buf);
            for (j, v) in buf.iter().enumerate() {
                out[(i, j)] = *v;
            }
        }
        Ok(out)
    }
}

/// One readout step `y(t) = [1, y(t-1), r(t)] · W_out`.
pub fn readout_step(
    readout: &Readout,
    state: &[f64],
    state_basis: Basis,
    y_prev: &[f64],
) -> Result<Vec<f64>> {
    if readout.basis != state_basis {
        return Err(EsnError::BasisMismatch {
            readout: readout.basis.name(),
            states: state_basis.name(),
        });
    }
    check_dim("readout state width", readout.units(), state.len())?;
    if readout.out_block.is_some() {
        check_dim("readout previous output", readout.d_out(), y_prev.len())?;
    }
    let mut out = vec![0.0; readout.d_out()];
    readout.apply(state, y_prev, &mut out);
    Ok(out)
}

/// Extended-state design matrix `[1, y(t-1), r(t)]` over `rows`.
pub fn design_matrix(
    states: &StateSeq,
    y_prev: Option<MatRef<'_, f64>>,
    use_bias: bool,
    rows: Range<usize>,
) -> Mat<f64> {
    let n = states.width();
    let d_fb = y_prev.map_or(0, |y| y.ncols());
    let prefix = usize::from(use_bias) + d_fb;
    let start = rows.start;
    Mat::from_fn(rows.len(), prefix + n, |i, j| {
        let t = start + i;
        if use_bias && j == 0 {
            return 1.0;
        }
        let j = j - usize::from(use_bias);
        if j < d_fb {
            y_prev.map_or(0.0, |y| y[(t, j)])
        } else {
            states.row(t)[j - d_fb]
        }
    })
}

/// Ridge regression `W_out = (XᵀX + αI)⁻¹ XᵀY`.
///
/// With `α = 0` and a singular Gram matrix the minimum-norm least-squares
/// solution is returned and `RidgeFit::fallback` is set.
pub fn train_ridge(x: MatRef<'_, f64>, y: MatRef<'_, f64>, alpha: f64) -> Result<RidgeFit> {
    NormalEquations::new(x, y)?.solve(alpha, None)
}

/// Cached `XᵀX` and `XᵀY` so several regularization strengths can be solved
/// from one pass over the data.
#[derive(Clone, Debug)]
pub struct NormalEquations {
    pub gram: Mat<f64>,
    pub xty: Mat<f64>,
}

impl NormalEquations {
    pub fn new(x: MatRef<'_, f64>, y: MatRef<'_, f64>) -> Result<Self> {
        check_dim("ridge targets rows", x.nrows(), y.nrows())?;
        Ok(Self {
            gram: x.transpose() * x,
            xty: x.transpose() * y,
        })
    }

    /// Normal equations of the design whose columns after `prefix` are
    /// multiplied by `s`.
    pub fn rescaled(&self, prefix: usize, s: f64) -> Self {
        let d = |i: usize| if i < prefix { 1.0 } else { s };
        Self {
            gram: Mat::from_fn(self.gram.nrows(), self.gram.ncols(), |i, j| {
                d(i) * d(j) * self.gram[(i, j)]
            }),
            xty: Mat::from_fn(self.xty.nrows(), self.xty.ncols(), |i, j| {
                d(i) * self.xty[(i, j)]
            }),
        }
    }

    /// Solves with regularizer `α·blockdiag(I, R)`; `R` is the reservoir block
    /// (`I` when `None`) and the identity part covers the leading columns.
    pub fn solve(&self, alpha: f64, reservoir_reg: Option<MatRef<'_, f64>>) -> Result<RidgeFit> {
        if !alpha_ok(alpha) {
            return Err(EsnError::InvalidConfig(format!(
                "ridge alpha must be nonnegative, got {alpha}"
            )));
        }
        match reservoir_reg {
            None => solve_normal_equations(self.gram.as_ref(), self.xty.as_ref(), alpha, None),
            Some(r) => {
                let full = self.gram.nrows();
                let prefix = full - r.nrows();
                let reg = Mat::from_fn(full, full, |i, j| {
                    if i < prefix || j < prefix {
                        if i == j {
                            1.0
                        } else {
                            0.0
                        }
                    } else {
                        r[(i - prefix, j - prefix)]
                    }
                });
                solve_normal_equations(
                    self.gram.as_ref(),
                    self.xty.as_ref(),
                    alpha,
                    Some(reg.as_ref()),
                )
            }
        }
    }
}

fn alpha_ok(alpha: f64) -> bool {
    alpha >= 0.0 && alpha.is_finite()
}

/// Everything needed to fit a readout on collected states.
#[derive(Clone)]
pub struct TrainSpec<'a> {
    pub targets: MatRef<'a, f64>,
    pub rows: Range<usize>,
    pub alpha: f64,
    pub flags: ReadoutFlags,
}

/// A fitted readout and whether the singular fallback was taken.
#[derive(Clone, Debug)]
pub struct TrainedReadout {
    pub readout: Readout,
    pub fallback: bool,
}

/// Teacher-forced fit on `states` rows, with optional reservoir-block
/// regularizer (see [`NormalEquations::solve`]).
pub(crate) fn fit_readout(
    states: &StateSeq,
    spec: TrainSpec<'_>,
    basis: Basis,
    reservoir_reg: Option<MatRef<'_, f64>>,
) -> Result<TrainedReadout> {
    check_dim(
        "training targets rows",
        states.steps(),
        spec.targets.nrows(),
    )?;
    if spec.rows.end > states.steps() || spec.rows.is_empty() {
        return Err(EsnError::EmptySequence);
    }
    let y_prev = spec
        .flags
        .use_feedback
        .then(|| crate::dataset::shift_down(spec.targets));
    let x = design_matrix(
        states,
        y_prev.as_ref().map(|m| m.as_ref()),
        spec.flags.use_bias,
        spec.rows.clone(),
    );
    let y = spec.targets.subrows(spec.rows.start, spec.rows.len());
    let fit = NormalEquations::new(x.as_ref(), y)?.solve(spec.alpha, reservoir_reg)?;
    Ok(TrainedReadout {
        readout: Readout::from_weights(fit.weights.as_ref(), spec.flags, basis)?,
        fallback: fit.fallback,
    })
}

/// Dense-basis ridge fit of a readout (the standard training path).
pub fn train_readout(states: &StateSeq, spec: TrainSpec<'_>) -> Result<TrainedReadout> {
    fit_readout(states, spec, Basis::Original, None)
}
