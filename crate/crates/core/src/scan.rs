//! Time-parallel evaluation of the diagonal recurrence `s_t = λ·s_{t-1} + b_t`.
//!
//! Each step is the affine map `x ↦ a·x + b`; composing two of them is
//! associative, so all prefixes can be computed as a scan. The schedule is
//! chunked: every chunk is scanned locally from zero (in parallel), the
//! chunk-end values are chained sequentially into carries, and finally each
//! chunk adds `λ^{k}·carry` to its `k`-th element (in parallel).

use std::ops::{Add, Mul};

use faer::MatRef;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{check_dim, EsnError, Result};
use crate::spectral::{complex_lanes, complex_lanes_mut, SpectralReservoir};
use crate::state::StateSeq;

/// Default number of time steps per chunk.
pub const DEFAULT_CHUNK: usize = 1024;

/// How diagonal states are evaluated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Engine {
    #[default]
    Sequential,
    Scan,
}

impl std::str::FromStr for Engine {
    type Err = EsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "sequential" => Ok(Engine::Sequential),
            "scan" => Ok(Engine::Scan),
            other => Err(EsnError::InvalidConfig(format!(
                "unknown engine {other:?}; expected sequential or scan"
            ))),
        }
    }
}

/// Scalar type of one recurrence lane.
pub trait Lane: Copy + Send + Sync + Add<Output = Self> + Mul<Output = Self> {
    fn zero() -> Self;
    fn one() -> Self;
    fn powi(self, k: i32) -> Self;
    fn is_finite(self) -> bool;
    /// Replaces non-finite parts by `±f64::MAX`.
    fn saturate(self) -> Self;
}

fn clamp(v: f64) -> f64 {
    if v.is_nan() {
        f64::MAX
    } else {
        v.clamp(-f64::MAX, f64::MAX)
    }
}

impl Lane for f64 {
    fn zero() -> Self {
        0.0
    }
    fn one() -> Self {
        1.0
    }
    fn powi(self, k: i32) -> Self {
        f64::powi(self, k)
    }
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
    fn saturate(self) -> Self {
        clamp(self)
    }
}

impl Lane for Complex64 {
    fn zero() -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn one() -> Self {
        Complex64::new(1.0, 0.0)
    }
    fn powi(self, k: i32) -> Self {
        Complex64::powi(&self, k)
    }
    fn is_finite(self) -> bool {
        Complex64::is_finite(self)
    }
    fn saturate(self) -> Self {
        Complex64::new(clamp(self.re), clamp(self.im))
    }
}

/// The affine map `x ↦ a·x + b`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Affine<T> {
    pub a: T,
    pub b: T,
}

impl<T: Lane> Affine<T> {
    pub fn identity() -> Self {
        Self {
            a: T::one(),
            b: T::zero(),
        }
    }

    /// `later ∘ self`: `(a₂a₁, b₂ + a₂b₁)`.
    pub fn then(self, later: Self) -> Self {
        Self {
            a: later.a * self.a,
            b: later.b + later.a * self.b,
        }
    }

    pub fn apply(self, x: T) -> T {
        self.a * x + self.b
    }
}

/// In-place inclusive scan of `b` (row-major `steps × lanes`) under
/// `s_t = a ⊙ s_{t-1} + b_t` with `s_{-1} = 0`.
pub fn scan_lanes<T: Lane>(a: &[T], b: &mut [T], chunk: usize) {
    let lanes = a.len();
    if lanes == 0 || b.is_empty() {
        return;
    }
    assert!(
        b.len().is_multiple_of(lanes),
        "buffer is not a whole number of rows"
    );
    let chunk = chunk.max(1);
    let rows_per_chunk = chunk * lanes;

    // Local scans from a zero state.
    b.par_chunks_mut(rows_per_chunk).for_each(|block| {
        let mut rows = block.chunks_exact_mut(lanes);
        let mut prev = match rows.next() {
            Some(r) => r,
            None => return,
        };
        for row in rows {
            for ((s, p), l) in row.iter_mut().zip(prev.iter()).zip(a) {
                *s = *l * *p + *s;
            }
            prev = row;
        }
    });

    // Carries: state at the end of each chunk.
    let n_chunks = b.len().div_ceil(rows_per_chunk);
    let mut carries = vec![T::zero(); n_chunks * lanes];
    let mut carry = vec![T::zero(); lanes];
    for c in 0..n_chunks {
        let start = c * rows_per_chunk;
        let len = (b.len() - start).min(rows_per_chunk) / lanes;
        carries[c * lanes..(c + 1) * lanes].copy_from_slice(&carry);
        let last = &b[start + (len - 1) * lanes..start + len * lanes];
        for ((cv, l), e) in carry.iter_mut().zip(a).zip(last) {
            *cv = l.powi(len as i32) * *cv + *e;
        }
    }

    // Fix-up with the incoming carry.
    b.par_chunks_mut(rows_per_chunk)
        .zip(carries.par_chunks(lanes))
        .skip(1)
        .for_each(|(block, incoming)| {
            let mut p = a.to_vec();
            for row in block.chunks_exact_mut(lanes) {
                for ((s, pk), (c, l)) in
                    row.iter_mut().zip(p.iter_mut()).zip(incoming.iter().zip(a))
                {
                    *s = *s + *pk * *c;
                    *pk = *pk * *l;
                }
            }
        });
}

/// Q-basis states of `spec` for `inputs`, computed by chunked scans.
/// Equal to [`crate::spectral::run_diagonal`] up to rounding.
pub fn scan_states(
    spec: &SpectralReservoir,
    inputs: MatRef<'_, f64>,
    chunk: usize,
) -> Result<StateSeq> {
    if spec.d_fb().is_some() {
        return Err(EsnError::FeedbackUnsupported(
            "the scan engine needs inputs that do not depend on outputs",
        ));
    }
    check_dim("input columns", spec.d_in(), inputs.ncols())?;
    let n = spec.units();
    let n_r = spec.n_real();
    let steps = inputs.nrows();
    let w = spec.w_in_q();

    let mut drive = StateSeq::zeros(steps, n);
    for t in 0..steps {
        let row = drive.row_mut(t);
        for d in 0..inputs.ncols() {
            let u = inputs[(t, d)];
            if u != 0.0 {
                for (o, wv) in row.iter_mut().zip(w.row(d).iter()) {
                    *o += u * wv;
                }
            }
        }
    }

    let mut re = Vec::with_capacity(steps * n_r);
    let mut cpx = Vec::with_capacity(steps * spec.n_pairs());
    for t in 0..steps {
        let row = drive.row(t);
        re.extend_from_slice(&row[..n_r]);
        cpx.extend_from_slice(complex_lanes(&row[n_r..]));
    }
    scan_lanes(spec.lambda_real(), &mut re, chunk);
    scan_lanes(spec.lambda_cpx(), &mut cpx, chunk);
    for t in 0..steps {
        let row = drive.row_mut(t);
        row[..n_r].copy_from_slice(&re[t * n_r..(t + 1) * n_r]);
        let m = spec.n_pairs();
        complex_lanes_mut(&mut row[n_r..]).copy_from_slice(&cpx[t * m..(t + 1) * m]);
    }
    Ok(drive)
}

/// Table of `λ^k` for `k = 0..=t_max`, row-major `(t_max+1) × lanes`.
#[derive(Clone, Debug, PartialEq)]
pub struct Powers<T> {
    pub table: Vec<T>,
    pub lanes: usize,
    /// Smallest exponent at which some lane overflowed, if any.
    pub saturated_from: Option<usize>,
}

impl<T: Lane> Powers<T> {
    pub fn get(&self, k: usize, lane: usize) -> T {
        self.table[k * self.lanes + lane]
    }
}

/// Element-wise powers by repeated squaring; overflowing entries are
/// clamped to `±f64::MAX` and reported through `saturated_from`.
pub fn batch_powers<T: Lane>(lambda: &[T], t_max: usize) -> Powers<T> {
    let lanes = lambda.len();
    let mut table = Vec::with_capacity((t_max + 1) * lanes);
    let mut saturated_from = None;
    for k in 0..=t_max {
        for &l in lambda {
            let p = l.powi(k as i32);
            if p.is_finite() {
                table.push(p);
            } else {
                saturated_from.get_or_insert(k);
                table.push(p.saturate());
            }
        }
    }
    Powers {
        table,
        lanes,
        saturated_from,
    }
}
