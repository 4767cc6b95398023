use std::ops::Range;

use faer::{Mat, MatRef};

use crate::error::{check_dim, EsnError, Result};

/// Boundaries of the washout / train / validation / test periods, as row
/// indices into a [`TaskDataset`]. The washout is the head of the train
/// period: `0 ≤ washout ≤ train_end ≤ valid_end ≤ test_end ≤ T`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Split {
    pub washout: usize,
    pub train_end: usize,
    pub valid_end: usize,
    pub test_end: usize,
}

impl Split {
    pub fn train(&self) -> Range<usize> {
        self.washout..self.train_end
    }
    pub fn valid(&self) -> Range<usize> {
        self.train_end..self.valid_end
    }
    pub fn test(&self) -> Range<usize> {
        self.valid_end..self.test_end
    }
}

/// Input and target sequences, one time step per row.
#[derive(Clone, Debug)]
pub struct TaskDataset {
    pub inputs: Mat<f64>,
    pub targets: Mat<f64>,
    pub split: Split,
}

impl TaskDataset {
    pub fn new(inputs: Mat<f64>, targets: Mat<f64>, split: Split) -> Result<Self> {
        check_dim("dataset targets rows", inputs.nrows(), targets.nrows())?;
        let s = split;
        if !(s.washout <= s.train_end
            && s.train_end <= s.valid_end
            && s.valid_end <= s.test_end
            && s.test_end <= inputs.nrows())
        {
            return Err(EsnError::InvalidConfig(format!(
                "split boundaries {s:?} are not nondecreasing within {} steps",
                inputs.nrows()
            )));
        }
        Ok(Self {
            inputs,
            targets,
            split,
        })
    }

    pub fn len(&self) -> usize {
        self.inputs.nrows()
    }

    pub fn is_empty(&self) -> bool {
        self.inputs.nrows() == 0
    }

    /// Teacher-forced previous outputs: row `t` holds `y(t-1)`, with `y(-1) = 0`.
    pub fn previous_targets(&self) -> Mat<f64> {
        shift_down(self.targets.as_ref())
    }
}

/// Row `t` of the result is row `t-1` of `m`; the first row is zero.
pub fn shift_down(m: MatRef<'_, f64>) -> Mat<f64> {
    Mat::from_fn(m.nrows(), m.ncols(), |i, j| {
        if i == 0 {
            0.0
        } else {
            m[(i - 1, j)]
        }
    })
}
