use faer::{Mat, MatRef};

use crate::error::{check_dim, EsnError, Result};
use crate::readout::{Basis, Readout};

/// Sequence of reservoir states stored time-major: row `t` is the state
/// after consuming input row `t`.
#[derive(Clone, Debug, PartialEq)]
pub struct StateSeq {
    width: usize,
    data: Vec<f64>,
}

impl StateSeq {
    pub fn zeros(steps: usize, width: usize) -> Self {
        Self {
            width,
            data: vec![0.0; steps * width],
        }
    }

    pub fn from_vec(width: usize, data: Vec<f64>) -> Self {
        assert!(
            width == 0 || data.len().is_multiple_of(width),
            "ragged state buffer"
        );
        Self { width, data }
    }

    pub fn steps(&self) -> usize {
        if self.width == 0 {
            0
        } else {
            self.data.len() / self.width
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn row(&self, t: usize) -> &[f64] {
        &self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn row_mut(&mut self, t: usize) -> &mut [f64] {
        &mut self.data[t * self.width..(t + 1) * self.width]
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// `steps × width` view of the buffer.
    pub fn as_mat(&self) -> MatRef<'_, f64> {
        MatRef::from_row_major_slice(&self.data, self.steps(), self.width)
    }

    pub fn to_mat(&self) -> Mat<f64> {
        self.as_mat().to_owned()
    }

    pub fn scaled(&self, factor: f64) -> Self {
        Self {
            width: self.width,
            data: self.data.iter().map(|v| v * factor).collect(),
        }
    }

    /// Largest absolute entry.
    pub fn max_abs(&self) -> f64 {
        self.data.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }
}

/// Output of a reservoir run: states and, in closed loop, the outputs.
#[derive(Clone, Debug)]
pub struct Run {
    pub states: StateSeq,
    pub outputs: Option<Mat<f64>>,
}

/// Source of `y(t-1)` for the feedback term and closed-loop outputs.
#[derive(Clone, Copy)]
pub enum Feedback<'a> {
    /// No feedback term; rejected when the reservoir has `W_fb`.
    None,
    /// Teacher forcing: `y(t-1)` is row `t-1` of the given targets.
    Teacher(MatRef<'a, f64>),
    /// Closed loop: `y(t)` is produced by the readout at every step.
    Readout(&'a Readout),
}

impl Feedback<'_> {
    /// Validates shapes and returns the width of the output vector.
    pub(crate) fn prepare(
        &self,
        fb_rows: Option<usize>,
        units: usize,
        basis: Basis,
        steps: usize,
    ) -> Result<usize> {
        match self {
            Feedback::None => {
                if fb_rows.is_some() {
                    return Err(EsnError::MissingReadout(
                        "feedback is enabled: pass teacher outputs or a trained readout",
                    ));
                }
                Ok(0)
            }
            Feedback::Teacher(y) => {
                check_dim("teacher rows", steps, y.nrows())?;
                if let Some(rows) = fb_rows {
                    check_dim("teacher columns", rows, y.ncols())?;
                }
                Ok(y.ncols())
            }
            Feedback::Readout(r) => {
                if r.basis != basis {
                    return Err(EsnError::BasisMismatch {
                        readout: r.basis.name(),
                        states: basis.name(),
                    });
                }
                check_dim("readout units", units, r.units())?;
                if let Some(rows) = fb_rows {
                    check_dim("feedback rows", rows, r.d_out())?;
                }
                Ok(r.d_out())
            }
        }
    }

    pub(crate) fn wants_outputs(&self) -> bool {
        matches!(self, Feedback::Readout(_))
    }

    /// Produces `y(t)` from the state just computed and stores it in `y_prev`.
    pub(crate) fn after_step(
        &self,
        t: usize,
        state: &[f64],
        y_prev: &mut [f64],
        y: &mut [f64],
        outputs: Option<&mut Mat<f64>>,
    ) {
        match self {
            Feedback::None => {}
            Feedback::Teacher(m) => {
                for (k, v) in y_prev.iter_mut().enumerate() {
                    *v = m[(t, k)];
                }
            }
            Feedback::Readout(r) => {
                r.apply(state, y_prev, y);
                if let Some(out) = outputs {
                    for (k, v) in y.iter().enumerate() {
                        out[(t, k)] = *v;
                    }
                }
                y_prev.copy_from_slice(y);
            }
        }
    }
}
