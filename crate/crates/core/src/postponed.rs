//! Input-weight-free reservoir states.
//!
//! Without feedback, the diagonal state is a lane-wise weighted sum of an
//! echo matrix `R(t)` that does not depend on `W_in`:
//!
//! ```text
//! R(t) = R(t-1) ⊙ Λ + u(t)ᵀ·1        r(t) = Σ_d [W_in]_d ⊙ R_d(t)
//! ```
//!
//! `R` is kept in the same real layout as Q-basis states (real lanes, then
//! interleaved pairs) and the products on pair lanes are complex.

use faer::{Mat, MatRef};
use num_complex::Complex64;

use crate::error::{check_dim, EsnError, Result};
use crate::readout::Basis;
use crate::readout::{design_matrix, NormalEquations, Readout, ReadoutFlags};
use crate::spectral::{complex_lanes, complex_lanes_mut, QState, SpectralReservoir};
use crate::state::StateSeq;

/// Echo matrices for every step, stored `steps × d_in × units`.
#[derive(Clone, Debug, PartialEq)]
pub struct EchoStateSeq {
    d_in: usize,
    units: usize,
    n_real: usize,
    data: Vec<f64>,
}

impl EchoStateSeq {
    pub fn steps(&self) -> usize {
        self.data.len() / (self.d_in * self.units).max(1)
    }

    pub fn d_in(&self) -> usize {
        self.d_in
    }

    pub fn units(&self) -> usize {
        self.units
    }

    pub fn n_real(&self) -> usize {
        self.n_real
    }

    /// `R(t)` as `d_in` consecutive rows of length `units`.
    pub fn at(&self, t: usize) -> &[f64] {
        let w = self.d_in * self.units;
        &self.data[t * w..(t + 1) * w]
    }

    /// Row `d` of `R(t)`.
    pub fn row(&self, t: usize, d: usize) -> &[f64] {
        &self.at(t)[d * self.units..(d + 1) * self.units]
    }

    /// The rows of `R(t)` for a one-dimensional input as a state sequence.
    pub fn as_states(&self) -> Result<StateSeq> {
        check_dim("echo matrix input dimension", 1, self.d_in)?;
        Ok(StateSeq::from_vec(self.units, self.data.clone()))
    }
}

fn reject_feedback(spec: &SpectralReservoir) -> Result<()> {
    if spec.d_fb().is_some() {
        return Err(EsnError::FeedbackUnsupported(
            "echo matrices need a reservoir without output feedback",
        ));
    }
    Ok(())
}

/// `R ← R ⊙ Λ + u·1` for every input row of `R`.
fn echo_step(spec: &SpectralReservoir, r: &mut [f64], u: &[f64]) {
    let n = spec.units();
    let n_r = spec.n_real();
    for (row, &ud) in r.chunks_exact_mut(n).zip(u) {
        let mut q = QState::new(row, n_r);
        q.decay(spec.lambda_real(), spec.lambda_cpx());
        let (re, cpx) = q.split();
        re.iter_mut().for_each(|v| *v += ud);
        cpx.iter_mut().for_each(|z| z.re += ud);
    }
}

/// Streams `R(1), R(2), …` to `visit` without storing the sequence.
pub fn fold_echo_matrix<F>(
    spec: &SpectralReservoir,
    inputs: MatRef<'_, f64>,
    mut visit: F,
) -> Result<()>
where
    F: FnMut(usize, &[f64]),
{
    reject_feedback(spec)?;
    check_dim("input columns", spec.d_in(), inputs.ncols())?;
    let mut r = vec![0.0; spec.d_in() * spec.units()];
    let mut u = vec![0.0; spec.d_in()];
    for t in 0..inputs.nrows() {
        for (d, v) in u.iter_mut().enumerate() {
            *v = inputs[(t, d)];
        }
        echo_step(spec, &mut r, &u);
        visit(t, &r);
    }
    Ok(())
}

/// Echo matrices for all steps of `inputs`.
pub fn run_echo_matrix(spec: &SpectralReservoir, inputs: MatRef<'_, f64>) -> Result<EchoStateSeq> {
    let width = spec.d_in() * spec.units();
    let mut data = Vec::with_capacity(inputs.nrows() * width);
    fold_echo_matrix(spec, inputs, |_, r| data.extend_from_slice(r))?;
    Ok(EchoStateSeq {
        d_in: spec.d_in(),
        units: spec.units(),
        n_real: spec.n_real(),
        data,
    })
}

/// `out = Σ_d w_in[d] ⊙ R_d` in the Q layout (complex products on pairs).
pub fn recover_state(w_in_q: MatRef<'_, f64>, r_t: &[f64], n_real: usize, out: &mut [f64]) {
    let n = out.len();
    out.fill(0.0);
    for d in 0..w_in_q.nrows() {
        let w: Vec<f64> = w_in_q.row(d).iter().copied().collect();
        let rd = &r_t[d * n..(d + 1) * n];
        for j in 0..n_real {
            out[j] += w[j] * rd[j];
        }
        let wc = complex_lanes(&w[n_real..]);
        let rc = complex_lanes(&rd[n_real..]);
        for ((o, a), b) in complex_lanes_mut(&mut out[n_real..])
            .iter_mut()
            .zip(wc)
            .zip(rc)
        {
            *o += a * b;
        }
    }
}

/// Q-basis states recovered from a stored echo sequence.
pub fn recover_states(spec: &SpectralReservoir, echo: &EchoStateSeq) -> Result<StateSeq> {
    check_dim("echo matrix units", spec.units(), echo.units)?;
    check_dim("echo matrix input dimension", spec.d_in(), echo.d_in)?;
    let mut states = StateSeq::zeros(echo.steps(), echo.units);
    let w = spec.w_in_q();
    for t in 0..echo.steps() {
        recover_state(w, echo.at(t), echo.n_real, states.row_mut(t));
    }
    Ok(states)
}

/// Unit-scaling states shared by several input scalings.
///
/// Scaling `W_in` by `s` scales every state by `s`, so each scaling is a view
/// over the same buffer. Its normal equations follow from the unit ones by
/// `X_sᵀX_s = D_s·XᵀX·D_s` with `D_s = diag(1…1, s…s)`.
#[derive(Clone, Debug)]
pub struct SharedStates {
    base: StateSeq,
    scalings: Vec<f64>,
}

/// States for one input scaling, produced lazily.
#[derive(Clone, Copy, Debug)]
pub struct ScaledStates<'a> {
    pub base: &'a StateSeq,
    pub scale: f64,
}

impl ScaledStates<'_> {
    pub fn materialize(&self) -> StateSeq {
        self.base.scaled(self.scale)
    }
}

impl SharedStates {
    /// Wraps states computed at unit input scaling.
    pub fn from_base(base: StateSeq, scalings: &[f64]) -> Self {
        Self {
            base,
            scalings: scalings.to_vec(),
        }
    }

    pub fn base(&self) -> &StateSeq {
        &self.base
    }

    pub fn scalings(&self) -> &[f64] {
        &self.scalings
    }

    pub fn len(&self) -> usize {
        self.scalings.len()
    }

    pub fn is_empty(&self) -> bool {
        self.scalings.is_empty()
    }

    pub fn view(&self, i: usize) -> ScaledStates<'_> {
        ScaledStates {
            base: &self.base,
            scale: self.scalings[i],
        }
    }

    pub fn views(&self) -> impl Iterator<Item = ScaledStates<'_>> {
        self.scalings.iter().map(|&scale| ScaledStates {
            base: &self.base,
            scale,
        })
    }
}

/// One fused echo-and-recovery pass at unit scaling, shared by every
/// scaling in `scalings` (each acting as a scalar on `spec`'s `W_in`).
pub fn scan_input_scalings(
    spec: &SpectralReservoir,
    inputs: MatRef<'_, f64>,
    scalings: &[f64],
) -> Result<SharedStates> {
    let n = spec.units();
    let n_r = spec.n_real();
    let mut base = StateSeq::zeros(inputs.nrows(), n);
    let w = spec.w_in_q();
    if spec.d_in() == 1 {
        let w: Vec<f64> = w.row(0).iter().copied().collect();
        let (w_re, w_cpx) = (&w[..n_r], complex_lanes(&w[n_r..]));
        fold_echo_matrix(spec, inputs, |t, r| {
            let out = base.row_mut(t);
            for ((o, a), b) in out[..n_r].iter_mut().zip(w_re).zip(&r[..n_r]) {
                *o = a * b;
            }
            let rc = complex_lanes(&r[n_r..]);
            for ((o, a), b) in complex_lanes_mut(&mut out[n_r..])
                .iter_mut()
                .zip(w_cpx)
                .zip(rc)
            {
                *o = a * b;
            }
        })?;
    } else {
        fold_echo_matrix(spec, inputs, |t, r| {
            recover_state(w, r, n_r, base.row_mut(t))
        })?;
    }
    Ok(SharedStates {
        base,
        scalings: scalings.to_vec(),
    })
}

/// Readout trained on echo matrices: `y(t) = b + R(t)·γ` for one input and
/// one output, with `γ` in the same lane layout as the states.
#[derive(Clone, Debug, PartialEq)]
pub struct CompositeReadout {
    pub bias: Option<f64>,
    pub gamma: Vec<f64>,
    pub n_real: usize,
}

/// Ridge fit of `γ` over `rows` of the echo sequence, penalizing `α‖γ‖²`.
/// With `α > 0` this is not the same model as penalizing the output weights.
pub fn train_gamma(
    echo: &EchoStateSeq,
    targets: MatRef<'_, f64>,
    rows: std::ops::Range<usize>,
    alpha: f64,
    use_bias: bool,
) -> Result<CompositeReadout> {
    if echo.d_in != 1 || targets.ncols() != 1 {
        return Err(EsnError::InvalidConfig(format!(
            "gamma training needs one input and one output, got {} and {}",
            echo.d_in,
            targets.ncols()
        )));
    }
    check_dim("training targets rows", echo.steps(), targets.nrows())?;
    if rows.is_empty() || rows.end > echo.steps() {
        return Err(EsnError::EmptySequence);
    }
    let states = echo.as_states()?;
    let x = design_matrix(&states, None, use_bias, rows.clone());
    let y = targets.subrows(rows.start, rows.len());
    let fit = NormalEquations::new(x.as_ref(), y)?.solve(alpha, None)?;
    let offset = usize::from(use_bias);
    Ok(CompositeReadout {
        bias: use_bias.then(|| fit.weights[(0, 0)]),
        gamma: (0..echo.units)
            .map(|j| fit.weights[(offset + j, 0)])
            .collect(),
        n_real: echo.n_real,
    })
}

impl CompositeReadout {
    /// Predictions `b + R(t)·γ` for each row.
    pub fn predict(&self, echo: &EchoStateSeq, rows: std::ops::Range<usize>) -> Result<Vec<f64>> {
        check_dim("echo matrix units", self.gamma.len(), echo.units)?;
        check_dim("echo matrix input dimension", 1, echo.d_in)?;
        Ok(rows
            .map(|t| {
                let r = echo.row(t, 0);
                self.bias.unwrap_or(0.0)
                    + r.iter().zip(&self.gamma).map(|(a, b)| a * b).sum::<f64>()
            })
            .collect())
    }

    /// Composite weights of an ordinary Q-basis readout and input row:
    /// `γ_j = w_j·o_j` on real lanes; on a pair with complex input weight `w`
    /// and readout lanes `(o_a, o_b)`, `g = w·(o_a − i·o_b)` stored as `(Re g, −Im g)`.
    pub fn from_readout(readout: &Readout, w_in_q: &[f64], n_real: usize) -> Result<Self> {
        if readout.basis != Basis::Q {
            return Err(EsnError::BasisMismatch {
                readout: readout.basis.name(),
                states: Basis::Q.name(),
            });
        }
        if readout.d_out() != 1 || readout.out_block.is_some() {
            return Err(EsnError::InvalidConfig(
                "composite readouts need one output and no feedback block".into(),
            ));
        }
        check_dim("input weight lanes", readout.units(), w_in_q.len())?;
        let o: Vec<f64> = readout.res_block.col(0).iter().copied().collect();
        let mut gamma = vec![0.0; o.len()];
        for j in 0..n_real {
            gamma[j] = w_in_q[j] * o[j];
        }
        let wc = complex_lanes(&w_in_q[n_real..]);
        for (k, w) in wc.iter().enumerate() {
            let j = n_real + 2 * k;
            let g = w * Complex64::new(o[j], -o[j + 1]);
            gamma[j] = g.re;
            gamma[j + 1] = -g.im;
        }
        Ok(Self {
            bias: readout.bias.as_ref().map(|b| b[0]),
            gamma,
            n_real,
        })
    }

    /// Output weights `o = γ ⊘ w_in` (complex division on pairs) as a Q-basis readout.
    pub fn recover_readout(&self, w_in_q: &[f64]) -> Result<Readout> {
        check_dim("input weight lanes", self.gamma.len(), w_in_q.len())?;
        let n = self.gamma.len();
        let n_r = self.n_real;
        let mut o = Mat::<f64>::zeros(n, 1);
        for j in 0..n_r {
            if w_in_q[j] == 0.0 {
                return Err(EsnError::ZeroInputWeight { lane: j });
            }
            o[(j, 0)] = self.gamma[j] / w_in_q[j];
        }
        for (k, w) in complex_lanes(&w_in_q[n_r..]).iter().enumerate() {
            let j = n_r + 2 * k;
            if *w == Complex64::default() {
                return Err(EsnError::ZeroInputWeight { lane: j });
            }
            let q = Complex64::new(self.gamma[j], -self.gamma[j + 1]) / w;
            o[(j, 0)] = q.re;
            o[(j + 1, 0)] = -q.im;
        }
        let flags = ReadoutFlags {
            use_bias: self.bias.is_some(),
            use_feedback: false,
        };
        Ok(Readout {
            bias: flags.use_bias.then(|| vec![self.bias.unwrap_or(0.0)]),
            out_block: None,
            res_block: o,
            basis: Basis::Q,
        })
    }
}
