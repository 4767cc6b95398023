//! Benchmarks: multiple superimposed oscillators (MSO) with grid search,
//! memory capacity, a connectivity sweep and per-phase timings.

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use faer::{Mat, MatRef};
use rand::Rng;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::EsnConfig;
use crate::dataset::{Split, TaskDataset};
use crate::dpg::{build_dpg, uniform_eigenvalues, Distribution, DEFAULT_SIGMA};
use crate::error::{check_dim, EsnError, Result};
use crate::postponed::{scan_input_scalings, SharedStates};
use crate::readout::{design_matrix, readout_step, Basis, NormalEquations, Readout};
use crate::rng::{stream, Stream};
use crate::scan::{scan_states, Engine, DEFAULT_CHUNK};
use crate::spectral::{diagonalize, run_diagonal, SpectralReservoir};
use crate::standard::{
    apply_leak, generate_dense, generate_unscaled, run_reservoir, DenseReservoir,
};
use crate::state::{Feedback, StateSeq};

/// Angular frequencies of the MSO components.
pub const MSO_FREQUENCIES: [f64; 12] = [
    0.2, 0.331, 0.42, 0.51, 0.63, 0.74, 0.85, 0.97, 1.08, 1.19, 1.27, 1.32,
];

/// Standard MSO sequence length and split.
pub const MSO_LENGTH: usize = 1000;
pub const MSO_SPLIT: Split = Split {
    washout: 100,
    train_end: 400,
    valid_end: 700,
    test_end: 1000,
};

/// `U_K(t) = Σ_{k ≤ K} sin(α_k·t)`.
pub fn mso_value(k: usize, t: f64) -> f64 {
    MSO_FREQUENCIES[..k].iter().map(|a| (a * t).sin()).sum()
}

/// One-step-ahead MSO task: row `i` holds input `U_K(i+1)` and target
/// `U_K(i+2)`. The split is the standard one scaled to `steps`.
pub fn gen_mso(k: usize, steps: usize) -> Result<TaskDataset> {
    if !(1..=12).contains(&k) {
        return Err(EsnError::InvalidConfig(format!(
            "MSO order must lie in 1..=12, got {k}"
        )));
    }
    let inputs = Mat::from_fn(steps, 1, |i, _| mso_value(k, (i + 1) as f64));
    let targets = Mat::from_fn(steps, 1, |i, _| mso_value(k, (i + 2) as f64));
    let split = if steps == MSO_LENGTH {
        MSO_SPLIT
    } else {
        Split {
            washout: steps / 10,
            train_end: steps * 4 / 10,
            valid_end: steps * 7 / 10,
            test_end: steps,
        }
    };
    TaskDataset::new(inputs, targets, split)
}

/// Root mean square error over all entries.
pub fn rmse(pred: MatRef<'_, f64>, target: MatRef<'_, f64>) -> Result<f64> {
    check_dim("prediction rows", target.nrows(), pred.nrows())?;
    check_dim("prediction columns", target.ncols(), pred.ncols())?;
    let count = pred.nrows() * pred.ncols();
    if count == 0 {
        return Err(EsnError::EmptySequence);
    }
    let mut sum = 0.0;
    for j in 0..pred.ncols() {
        for i in 0..pred.nrows() {
            let d = pred[(i, j)] - target[(i, j)];
            sum += d * d;
        }
    }
    Ok((sum / count as f64).sqrt())
}

/// Reservoir construction path compared by the benchmarks.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Method {
    /// Dense reservoir, ridge readout.
    Normal,
    /// Dense reservoir diagonalized, Q-basis states, readout by EET.
    Diagonalized,
    /// Generated spectrum and eigenvectors, ridge readout on Q-basis states.
    Dpg(Distribution),
}

impl Method {
    pub fn name(&self) -> &'static str {
        match self {
            Method::Normal => "normal",
            Method::Diagonalized => "diag",
            Method::Dpg(Distribution::Uniform) => "dpg-uniform",
            Method::Dpg(Distribution::Golden) => "dpg-golden",
            Method::Dpg(Distribution::NoisyGolden { .. }) => "dpg-noisy-golden",
            Method::Dpg(Distribution::Sim) => "dpg-sim",
        }
    }

    pub fn all() -> [Method; 6] {
        [
            Method::Normal,
            Method::Diagonalized,
            Method::Dpg(Distribution::Uniform),
            Method::Dpg(Distribution::Golden),
            Method::Dpg(Distribution::NoisyGolden {
                sigma: DEFAULT_SIGMA,
            }),
            Method::Dpg(Distribution::Sim),
        ]
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = EsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "normal" => Ok(Method::Normal),
            "diag" | "diagonalized" => Ok(Method::Diagonalized),
            other => match other.strip_prefix("dpg-") {
                Some(dist) => dist.parse().map(Method::Dpg),
                None => Err(EsnError::InvalidConfig(format!(
                    "unknown method {other:?}; expected normal, diag, dpg-uniform, dpg-golden, dpg-noisy-golden or dpg-sim"
                ))),
            },
        }
    }
}

/// A concrete reservoir: dense, or diagonal with its ridge regularizer.
#[derive(Clone, Debug)]
pub enum Reservoir {
    Dense(DenseReservoir),
    /// `eet` selects the `blockdiag(I, QᵀQ)` regularizer.
    Spectral {
        spec: SpectralReservoir,
        eet: bool,
    },
}

impl Reservoir {
    pub fn basis(&self) -> Basis {
        match self {
            Reservoir::Dense(_) => Basis::Original,
            Reservoir::Spectral { .. } => Basis::Q,
        }
    }

    pub fn units(&self) -> usize {
        match self {
            Reservoir::Dense(r) => r.units(),
            Reservoir::Spectral { spec, .. } => spec.units(),
        }
    }

    /// Reservoir block of the ridge regularizer (`None` for the identity).
    pub fn regularizer(&self) -> Option<MatRef<'_, f64>> {
        match self {
            Reservoir::Spectral { spec, eet: true } => spec.basis().map(|b| b.gram().as_ref()),
            _ => None,
        }
    }

    /// States from a zero initial state without feedback.
    pub fn states(&self, inputs: MatRef<'_, f64>, engine: Engine) -> Result<StateSeq> {
        match (self, engine) {
            (Reservoir::Dense(r), _) => Ok(run_reservoir(r, inputs, Feedback::None)?.states),
            (Reservoir::Spectral { spec, .. }, Engine::Sequential) => {
                Ok(run_diagonal(spec, inputs, Feedback::None)?.states)
            }
            (Reservoir::Spectral { spec, .. }, Engine::Scan) => {
                scan_states(spec, inputs, DEFAULT_CHUNK)
            }
        }
    }

    /// States for several input scalings from one pass.
    pub fn shared_states(&self, inputs: MatRef<'_, f64>, scalings: &[f64]) -> Result<SharedStates> {
        match self {
            Reservoir::Dense(r) => Ok(SharedStates::from_base(
                run_reservoir(r, inputs, Feedback::None)?.states,
                scalings,
            )),
            Reservoir::Spectral { spec, .. } => scan_input_scalings(spec, inputs, scalings),
        }
    }

    pub fn with_input_scaling(&self, s: f64) -> Self {
        match self {
            Reservoir::Dense(r) => {
                let mut r = r.clone();
                r.w_in = Mat::from_fn(r.w_in.nrows(), r.w_in.ncols(), |i, j| s * r.w_in[(i, j)]);
                Reservoir::Dense(r)
            }
            Reservoir::Spectral { spec, eet } => Reservoir::Spectral {
                spec: spec.with_input_scaling(s),
                eet: *eet,
            },
        }
    }
}

/// Per-seed source of reservoirs at any `(ρ, lr)`: the dense draw (and its
/// diagonalization) is made once; generated spectra are redrawn per `ρ`
/// with the same seed.
#[derive(Clone, Debug)]
pub enum Family {
    Dense(DenseReservoir),
    Spectral(SpectralReservoir),
    Generated(EsnConfig, Distribution),
}

impl Family {
    /// `config.spectral_radius` and `config.leak_rate` are ignored here.
    pub fn new(method: Method, config: &EsnConfig) -> Result<Self> {
        let unit = EsnConfig {
            spectral_radius: 1.0,
            leak_rate: 1.0,
            ..config.clone()
        };
        Ok(match method {
            Method::Normal => Family::Dense(generate_dense(&unit)?),
            Method::Diagonalized => Family::Spectral(diagonalize(&generate_dense(&unit)?)?),
            Method::Dpg(d) => Family::Generated(unit, d),
        })
    }

    pub fn at(&self, rho: f64, lr: f64) -> Result<Reservoir> {
        Ok(match self {
            Family::Dense(base) => {
                let mut r = base.clone();
                r.w.scale(rho);
                Reservoir::Dense(apply_leak(&r, lr))
            }
            Family::Spectral(base) => Reservoir::Spectral {
                spec: base.with_spectral_radius(rho).apply_leak(lr),
                eet: true,
            },
            Family::Generated(config, d) => {
                let config = EsnConfig {
                    spectral_radius: rho,
                    ..config.clone()
                };
                Reservoir::Spectral {
                    spec: build_dpg(&config, *d)?.apply_leak(lr),
                    eet: false,
                }
            }
        })
    }
}

/// Hyperparameter grid. Cells are visited in the order
/// input scaling × leak rate × spectral radius × α.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridSpec {
    pub input_scaling: Vec<f64>,
    pub leak_rate: Vec<f64>,
    pub spectral_radius: Vec<f64>,
    pub alpha: Vec<f64>,
}

impl GridSpec {
    /// 3·6·6·12 = 1296 cells.
    pub fn table1() -> Self {
        let rates = vec![0.1, 0.3, 0.5, 0.7, 0.9, 1.0];
        Self {
            input_scaling: vec![0.01, 0.1, 1.0],
            leak_rate: rates.clone(),
            spectral_radius: rates,
            alpha: (0..12).map(|i| 10f64.powi(i - 11)).collect(),
        }
    }

    /// A small grid for quick runs.
    pub fn small() -> Self {
        Self {
            input_scaling: vec![0.1, 1.0],
            leak_rate: vec![0.5, 1.0],
            spectral_radius: vec![0.9, 1.0],
            alpha: vec![1e-10, 1e-7, 1e-4],
        }
    }

    pub fn single(input_scaling: f64, leak_rate: f64, spectral_radius: f64, alpha: f64) -> Self {
        Self {
            input_scaling: vec![input_scaling],
            leak_rate: vec![leak_rate],
            spectral_radius: vec![spectral_radius],
            alpha: vec![alpha],
        }
    }

    pub fn cells(&self) -> usize {
        self.input_scaling.len()
            * self.leak_rate.len()
            * self.spectral_radius.len()
            * self.alpha.len()
    }

    pub fn by_name(name: &str) -> Result<Self> {
        match name {
            "table1" => Ok(Self::table1()),
            "small" => Ok(Self::small()),
            other => Err(EsnError::InvalidConfig(format!(
                "unknown grid {other:?}; expected table1 or small"
            ))),
        }
    }
}

/// Options shared by the grid search runs.
#[derive(Clone, Debug)]
pub struct GridOptions {
    pub units: usize,
    pub share_states: bool,
    /// Worker threads; `None` uses the global pool.
    pub jobs: Option<usize>,
    pub use_bias: bool,
}

impl Default for GridOptions {
    fn default() -> Self {
        Self {
            units: 100,
            share_states: true,
            jobs: None,
            use_bias: true,
        }
    }
}

/// Scores of one grid cell.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct CellScore {
    pub input_scaling: f64,
    pub leak_rate: f64,
    pub spectral_radius: f64,
    pub alpha: f64,
    pub valid_rmse: f64,
    pub test_rmse: f64,
}

impl CellScore {
    /// Lower validation error first; ties go to smaller α, then ρ, then lr.
    fn better_than(&self, other: &CellScore) -> bool {
        let key = |c: &CellScore| {
            let v = if c.valid_rmse.is_nan() {
                f64::INFINITY
            } else {
                c.valid_rmse
            };
            [v, c.alpha, c.spectral_radius, c.leak_rate]
        };
        let (a, b) = (key(self), key(other));
        for (x, y) in a.iter().zip(&b) {
            match x.total_cmp(y) {
                std::cmp::Ordering::Less => return true,
                std::cmp::Ordering::Greater => return false,
                std::cmp::Ordering::Equal => {}
            }
        }
        false
    }
}

/// Wall-clock milliseconds spent per phase, summed over work items.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct PhaseTimes {
    pub generation_ms: f64,
    pub states_ms: f64,
    pub training_ms: f64,
    pub inference_ms: f64,
}

impl PhaseTimes {
    fn add(&mut self, other: &PhaseTimes) {
        self.generation_ms += other.generation_ms;
        self.states_ms += other.states_ms;
        self.training_ms += other.training_ms;
        self.inference_ms += other.inference_ms;
    }
}

fn ms_since(t: Instant) -> f64 {
    t.elapsed().as_secs_f64() * 1e3
}

/// Best cell of one seed.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct SeedChoice {
    pub seed: u64,
    pub best: CellScore,
}

/// One CSV row of an MSO report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MsoRow {
    pub task: String,
    pub method: String,
    pub rmse_mean: f64,
    pub rmse_std: f64,
    pub best_lr: f64,
    pub best_rho: f64,
    pub best_scale: f64,
    pub best_alpha: f64,
    pub wall_ms: f64,
}

/// Grid search outcome for one task and method. The `best_*` columns of
/// `row` come from the first seed; `seeds` lists every seed's choice.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridReport {
    pub row: MsoRow,
    pub seeds: Vec<SeedChoice>,
    pub phases: PhaseTimes,
}

/// Scores every α for one state set whose reservoir block is multiplied
/// by `scale`; `base_ne` holds the normal equations of the unscaled states.
#[allow(clippy::too_many_arguments)]
fn score_alphas(
    states: &StateSeq,
    scale: f64,
    data: &TaskDataset,
    reg: Option<MatRef<'_, f64>>,
    alphas: &[f64],
    use_bias: bool,
    base_ne: &NormalEquations,
    times: &mut PhaseTimes,
) -> Result<Vec<(f64, f64, f64)>> {
    let t0 = Instant::now();
    let prefix = usize::from(use_bias);
    let ne = base_ne.rescaled(prefix, scale);
    times.training_ms += ms_since(t0);
    if !ne.gram.col_iter().all(|c| c.iter().all(|v| v.is_finite())) {
        // diverged states: every α of this cell is unusable
        return Ok(alphas
            .iter()
            .map(|&a| (a, f64::INFINITY, f64::INFINITY))
            .collect());
    }
    let xv = design_matrix(states, None, use_bias, data.split.valid());
    let xt = design_matrix(states, None, use_bias, data.split.test());
    let yv = data
        .targets
        .subrows(data.split.train_end, data.split.valid().len());
    let yt = data
        .targets
        .subrows(data.split.valid_end, data.split.test().len());
    let mut out = Vec::with_capacity(alphas.len());
    for &alpha in alphas {
        let t1 = Instant::now();
        let mut w = ne.solve(alpha, reg)?.weights;
        times.training_ms += ms_since(t1);
        let t2 = Instant::now();
        if scale != 1.0 {
            for i in prefix..w.nrows() {
                for j in 0..w.ncols() {
                    w[(i, j)] *= scale;
                }
            }
        }
        let valid = rmse((&xv * &w).as_ref(), yv)?;
        let test = rmse((&xt * &w).as_ref(), yt)?;
        times.inference_ms += ms_since(t2);
        out.push((alpha, valid, test));
    }
    Ok(out)
}

/// Grid search over `grid` for each seed; the test RMSE of each seed's
/// best validation cell is averaged over seeds.
pub fn grid_search(
    data: &TaskDataset,
    task: &str,
    method: Method,
    grid: &GridSpec,
    seeds: &[u64],
    options: &GridOptions,
) -> Result<GridReport> {
    if seeds.is_empty() || grid.cells() == 0 {
        return Err(EsnError::InvalidConfig(
            "grid search needs at least one seed and one cell".into(),
        ));
    }
    let started = Instant::now();
    let run = || grid_search_inner(data, method, grid, seeds, options);
    let (choices, phases) = match options.jobs {
        Some(jobs) => rayon::ThreadPoolBuilder::new()
            .num_threads(jobs.max(1))
            .build()
            .map_err(|e| EsnError::InvalidConfig(format!("cannot start worker pool: {e}")))?
            .install(run)?,
        None => run()?,
    };
    let tests: Vec<f64> = choices.iter().map(|c| c.best.test_rmse).collect();
    let mean = tests.iter().sum::<f64>() / tests.len() as f64;
    let std = (tests.iter().map(|t| (t - mean).powi(2)).sum::<f64>() / tests.len() as f64).sqrt();
    let first = choices[0].best;
    Ok(GridReport {
        row: MsoRow {
            task: task.to_string(),
            method: method.name().to_string(),
            rmse_mean: mean,
            rmse_std: std,
            best_lr: first.leak_rate,
            best_rho: first.spectral_radius,
            best_scale: first.input_scaling,
            best_alpha: first.alpha,
            wall_ms: ms_since(started),
        },
        seeds: choices,
        phases,
    })
}

type ItemResult = Result<(Vec<CellScore>, PhaseTimes)>;

fn grid_search_inner(
    data: &TaskDataset,
    method: Method,
    grid: &GridSpec,
    seeds: &[u64],
    options: &GridOptions,
) -> Result<(Vec<SeedChoice>, PhaseTimes)> {
    let mut phases = PhaseTimes::default();
    let t0 = Instant::now();
    let families: Vec<Family> = seeds
        .par_iter()
        .map(|&seed| {
            let config = EsnConfig {
                units: options.units,
                seed,
                use_bias: options.use_bias,
                ..EsnConfig::default()
            };
            Family::new(method, &config)
        })
        .collect::<Result<_>>()?;
    phases.generation_ms += ms_since(t0);

    let items: Vec<(usize, f64, f64)> = (0..seeds.len())
        .flat_map(|s| {
            grid.leak_rate
                .iter()
                .flat_map(move |&lr| grid.spectral_radius.iter().map(move |&rho| (s, lr, rho)))
        })
        .collect();
    let results: Vec<ItemResult> = items
        .par_iter()
        .map(|&(s, lr, rho)| evaluate_item(&families[s], data, grid, lr, rho, options))
        .collect();

    let mut best: Vec<Option<CellScore>> = vec![None; seeds.len()];
    for (&(s, _, _), res) in items.iter().zip(results) {
        let (scores, times) = res?;
        phases.add(&times);
        for score in scores {
            if best[s].as_ref().is_none_or(|b| score.better_than(b)) {
                best[s] = Some(score);
            }
        }
    }
    let choices = seeds
        .iter()
        .zip(best)
        .map(|(&seed, b)| SeedChoice {
            seed,
            best: b.expect("every seed has at least one cell"),
        })
        .collect();
    Ok((choices, phases))
}

fn evaluate_item(
    family: &Family,
    data: &TaskDataset,
    grid: &GridSpec,
    lr: f64,
    rho: f64,
    options: &GridOptions,
) -> ItemResult {
    let mut times = PhaseTimes::default();
    let t0 = Instant::now();
    let reservoir = family.at(rho, lr)?;
    times.generation_ms += ms_since(t0);
    let reg = reservoir.regularizer();
    let inputs = data.inputs.as_ref();
    let mut scores = Vec::with_capacity(grid.input_scaling.len() * grid.alpha.len());
    let mut push = |scale: f64, alphas: Vec<(f64, f64, f64)>| {
        for (alpha, valid, test) in alphas {
            scores.push(CellScore {
                input_scaling: scale,
                leak_rate: lr,
                spectral_radius: rho,
                alpha,
                valid_rmse: valid,
                test_rmse: test,
            });
        }
    };
    // Without sharing, each input scaling gets its own state collection
    // through the same pipeline, so both modes report identical numbers.
    let groups: Vec<Vec<f64>> = if options.share_states {
        vec![grid.input_scaling.clone()]
    } else {
        grid.input_scaling.iter().map(|&s| vec![s]).collect()
    };
    for scalings in &groups {
        let t1 = Instant::now();
        let shared = reservoir.shared_states(inputs, scalings)?;
        times.states_ms += ms_since(t1);
        let t2 = Instant::now();
        let x = design_matrix(shared.base(), None, options.use_bias, data.split.train());
        let y = data
            .targets
            .subrows(data.split.washout, data.split.train().len());
        let base_ne = NormalEquations::new(x.as_ref(), y)?;
        times.training_ms += ms_since(t2);
        for view in shared.views() {
            let a = score_alphas(
                view.base,
                view.scale,
                data,
                reg,
                &grid.alpha,
                options.use_bias,
                &base_ne,
                &mut times,
            )?;
            push(view.scale, a);
        }
    }
    Ok((scores, times))
}

/// Protocol of the memory capacity measurement.
#[derive(Clone, Debug, PartialEq)]
pub struct McOptions {
    pub train: usize,
    pub test: usize,
    /// Defaults to `max(200, k_max)`.
    pub washout: Option<usize>,
    pub alpha: f64,
}

impl Default for McOptions {
    fn default() -> Self {
        Self {
            train: 2000,
            test: 1000,
            washout: None,
            alpha: 1e-8,
        }
    }
}

/// I.i.d. Uniform(−1, 1) input for the memory task.
pub fn mc_signal(len: usize, seed: u64) -> Vec<f64> {
    let mut rng = stream(seed, Stream::Signal(0));
    (0..len).map(|_| rng.random_range(-1.0..1.0)).collect()
}

/// Squared correlation `cov(a, b)² / (var a · var b)`, zero when either
/// variance vanishes.
pub fn determination(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut cov, mut va, mut vb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        cov += (x - ma) * (y - mb);
        va += (x - ma) * (x - ma);
        vb += (y - mb) * (y - mb);
    }
    // variances at rounding level of the data count as zero
    let floor = |v: &[f64]| {
        let m = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        n * (n * f64::EPSILON * m).powi(2)
    };
    if va <= floor(a) || vb <= floor(b) {
        return 0.0;
    }
    cov * cov / (va * vb)
}

/// Memory curve `MC_1 … MC_{k_max}` of one reservoir. All delays share one
/// state run and one factorization; each delay is a column of the targets.
pub fn memory_capacity(
    reservoir: &Reservoir,
    k_max: usize,
    seed: u64,
    options: &McOptions,
) -> Result<Vec<f64>> {
    let washout = options.washout.unwrap_or(k_max.max(200));
    if washout < k_max {
        return Err(EsnError::InvalidConfig(format!(
            "washout {washout} is shorter than the largest delay {k_max}"
        )));
    }
    let total = washout + options.train + options.test;
    let u = mc_signal(total, seed);
    let inputs = Mat::from_fn(total, 1, |i, _| u[i]);
    let states = reservoir.states(inputs.as_ref(), Engine::Sequential)?;
    let train = washout..washout + options.train;
    let test = washout + options.train..total;
    let x = design_matrix(&states, None, true, train.clone());
    let y = Mat::from_fn(train.len(), k_max, |i, k| u[train.start + i - (k + 1)]);
    let w = NormalEquations::new(x.as_ref(), y.as_ref())?
        .solve(options.alpha, reservoir.regularizer())?
        .weights;
    let pred = design_matrix(&states, None, true, test.clone()) * &w;
    Ok((0..k_max)
        .map(|k| {
            let target: Vec<f64> = test.clone().map(|t| u[t - (k + 1)]).collect();
            let p: Vec<f64> = (0..test.len()).map(|i| pred[(i, k)]).collect();
            determination(&target, &p)
        })
        .collect())
}

/// Reservoir of `method` for the memory task: spectral radius 1, no leak.
pub fn mc_reservoir(method: Method, units: usize, seed: u64) -> Result<Reservoir> {
    let config = EsnConfig {
        units,
        seed,
        spectral_radius: 1.0,
        ..EsnConfig::default()
    };
    Family::new(method, &config)?.at(1.0, 1.0)
}

/// One point of a memory curve, averaged over seeds.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct McRow {
    pub units: usize,
    pub method: String,
    pub delay: usize,
    pub mc: f64,
}

/// Memory curves averaged over `seeds`.
pub fn memory_capacity_curve(
    method: Method,
    units: usize,
    k_max: usize,
    seeds: &[u64],
    options: &McOptions,
) -> Result<Vec<McRow>> {
    let curves: Vec<Vec<f64>> = seeds
        .par_iter()
        .map(|&seed| memory_capacity(&mc_reservoir(method, units, seed)?, k_max, seed, options))
        .collect::<Result<_>>()?;
    Ok((0..k_max)
        .map(|k| McRow {
            units,
            method: method.name().to_string(),
            delay: k + 1,
            mc: curves.iter().map(|c| c[k]).sum::<f64>() / curves.len() as f64,
        })
        .collect())
}

/// Memory at a fixed delay for dense and diagonalized paths at one connectivity.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct ConnectivityRow {
    pub units: usize,
    pub connectivity: f64,
    pub delay: usize,
    pub mc_normal: f64,
    pub mc_diag: Option<f64>,
    pub difference: Option<f64>,
    pub error: Option<String>,
}

/// First delay whose capacity drops below one half (or the last delay).
pub fn half_capacity_delay(curve: &[f64]) -> usize {
    curve
        .iter()
        .position(|&d| d < 0.5)
        .map_or(curve.len(), |k| k + 1)
}

/// Memory at `delay` versus connectivity. Without a delay, the one where
/// the fully connected dense reservoir falls below one half is used.
/// Diagonalization failures are reported per row.
pub fn connectivity_sweep(
    units: usize,
    connectivities: &[f64],
    delay: Option<usize>,
    seed: u64,
    options: &McOptions,
) -> Result<Vec<ConnectivityRow>> {
    let delay = match delay {
        Some(d) => d,
        None => {
            let curve = memory_capacity(
                &mc_reservoir(Method::Normal, units, seed)?,
                2 * units,
                seed,
                options,
            )?;
            half_capacity_delay(&curve)
        }
    };
    connectivities
        .par_iter()
        .map(|&c| {
            let config = EsnConfig {
                units,
                seed,
                connectivity_r: c,
                ..EsnConfig::default()
            };
            let mut dense = generate_unscaled(&config)?;
            if dense.spectral_radius()? > 0.0 {
                dense.scale_to_spectral_radius(1.0)?;
            }
            let at = |r: &Reservoir| -> Result<f64> {
                Ok(memory_capacity(r, delay, seed, options)?[delay - 1])
            };
            let mc_normal = at(&Reservoir::Dense(dense.clone()))?;
            let (mc_diag, error) = match diagonalize(&dense) {
                Ok(spec) => match at(&Reservoir::Spectral { spec, eet: true }) {
                    Ok(v) => (Some(v), None),
                    Err(e) => (None, Some(e.to_string())),
                },
                Err(e) => (None, Some(e.to_string())),
            };
            Ok(ConnectivityRow {
                units,
                connectivity: c,
                delay,
                mc_normal,
                mc_diag,
                difference: mc_diag.map(|d| d - mc_normal),
                error,
            })
        })
        .collect()
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Which reservoir update is timed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum StepPath {
    Dense,
    Diagonal,
}

/// Median seconds per reservoir step over `repeats` measurements. The
/// weights are random with spectral radius near 0.9; no eigen-solve is done.
pub fn time_reservoir_step(path: StepPath, units: usize, repeats: usize, seed: u64) -> Result<f64> {
    let config = EsnConfig {
        units,
        seed,
        ..EsnConfig::default()
    };
    let u = [0.5];
    match path {
        StepPath::Dense => {
            let mut res = generate_unscaled(&config)?;
            res.w.scale(0.9 / (units as f64).sqrt());
            let steps = (1usize << 24).div_ceil(units * units).clamp(4, 4000);
            let mut prev = vec![0.0; units];
            let mut next = vec![0.0; units];
            let times = (0..repeats.max(1))
                .map(|_| {
                    let t0 = Instant::now();
                    for _ in 0..steps {
                        res.step(&prev, &u, &[], &mut next);
                        std::mem::swap(&mut prev, &mut next);
                    }
                    std::hint::black_box(&prev);
                    t0.elapsed().as_secs_f64() / steps as f64
                })
                .collect();
            Ok(median(times))
        }
        StepPath::Diagonal => {
            let spectrum = uniform_eigenvalues(units, 0.9, seed);
            let w_in = Mat::from_fn(1, units, |_, j| ((j * 7 + 3) % 11) as f64 / 11.0 - 0.5);
            let spec = SpectralReservoir::from_parts(
                spectrum.real,
                spectrum.cpx,
                w_in.as_ref(),
                None,
                None,
            )?;
            let steps = (1usize << 24).div_ceil(units).clamp(100, 200_000);
            let mut state = vec![0.0; units];
            let times = (0..repeats.max(1))
                .map(|_| {
                    let t0 = Instant::now();
                    for _ in 0..steps {
                        spec.step(&mut state, &u, &[]);
                    }
                    std::hint::black_box(&state);
                    t0.elapsed().as_secs_f64() / steps as f64
                })
                .collect();
            Ok(median(times))
        }
    }
}

/// Median seconds per single-output readout step.
pub fn time_readout_step(units: usize, repeats: usize) -> Result<f64> {
    let readout = Readout {
        bias: Some(vec![0.1]),
        out_block: None,
        res_block: Mat::from_fn(units, 1, |i, _| 1.0 / (i + 1) as f64),
        basis: Basis::Original,
    };
    let state: Vec<f64> = (0..units).map(|i| (i as f64).sin()).collect();
    let steps = (1usize << 22).div_ceil(units).clamp(100, 100_000);
    let mut times = Vec::with_capacity(repeats.max(1));
    for _ in 0..repeats.max(1) {
        let t0 = Instant::now();
        for _ in 0..steps {
            std::hint::black_box(readout_step(
                &readout,
                std::hint::black_box(&state),
                Basis::Original,
                &[],
            )?);
        }
        times.push(t0.elapsed().as_secs_f64() / steps as f64);
    }
    Ok(median(times))
}

/// Seconds to build a ready-to-run reservoir of `method`.
pub fn time_generation(method: Method, units: usize, seed: u64) -> Result<f64> {
    let config = EsnConfig {
        units,
        seed,
        ..EsnConfig::default()
    };
    let t0 = Instant::now();
    match method {
        Method::Normal => {
            std::hint::black_box(generate_dense(&config)?);
        }
        Method::Diagonalized => {
            std::hint::black_box(diagonalize(&generate_dense(&config)?)?);
        }
        Method::Dpg(d) => {
            std::hint::black_box(build_dpg(&config, d)?);
        }
    }
    Ok(t0.elapsed().as_secs_f64())
}

/// Options of [`timing_suite`].
#[derive(Clone, Debug, PartialEq)]
pub struct TimingOptions {
    pub repeats: usize,
    /// Also time generation (an eigen-solve per run for dense paths).
    pub generation: bool,
    pub generation_repeats: usize,
    pub seed: u64,
}

impl Default for TimingOptions {
    fn default() -> Self {
        Self {
            repeats: 5,
            generation: false,
            generation_repeats: 3,
            seed: 0,
        }
    }
}

/// Median timings per size and method.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TimingRow {
    pub units: usize,
    pub method: String,
    pub generation_ms: Option<f64>,
    pub step_us: f64,
    pub readout_us: f64,
}

/// Per-phase timings for every size and method; the dense step is timed for
/// `normal`, the diagonal step for every other method.
pub fn timing_suite(
    sizes: &[usize],
    methods: &[Method],
    options: &TimingOptions,
) -> Result<Vec<TimingRow>> {
    let mut rows = Vec::new();
    for &n in sizes {
        let readout = time_readout_step(n, options.repeats)?;
        for &method in methods {
            let path = if method == Method::Normal {
                StepPath::Dense
            } else {
                StepPath::Diagonal
            };
            let step = time_reservoir_step(path, n, options.repeats, options.seed)?;
            let generation_ms = if options.generation {
                let times = (0..options.generation_repeats.max(1))
                    .map(|_| time_generation(method, n, options.seed))
                    .collect::<Result<Vec<_>>>()?;
                Some(median(times) * 1e3)
            } else {
                None
            };
            rows.push(TimingRow {
                units: n,
                method: method.name().to_string(),
                generation_ms,
                step_us: step * 1e6,
                readout_us: readout * 1e6,
            });
        }
    }
    Ok(rows)
}

/// Least-squares slope of `log y` against `log x`.
pub fn log_log_slope(x: &[f64], y: &[f64]) -> f64 {
    let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
    let ly: Vec<f64> = y.iter().map(|v| v.ln()).collect();
    let n = lx.len() as f64;
    let mx = lx.iter().sum::<f64>() / n;
    let my = ly.iter().sum::<f64>() / n;
    let sxy: f64 = lx.iter().zip(&ly).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = lx.iter().map(|a| (a - mx) * (a - mx)).sum();
    sxy / sxx
}

/// Everything a benchmark invocation produced.
#[derive(Clone, Debug, Default, PartialEq, Serialize)]
pub struct BenchReport {
    pub mso: Vec<GridReport>,
    pub mc: Vec<McRow>,
    pub timing: Vec<TimingRow>,
    pub connectivity: Vec<ConnectivityRow>,
}
