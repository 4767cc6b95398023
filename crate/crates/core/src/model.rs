//! A self-contained model: construction method, reservoir, optional readout,
//! and its JSON document (schema `"v1"`).
//!
//! Real matrices are row-major nested arrays, sparse recurrent matrices are
//! `{rows, cols, row_ptr, col_idx, values}` and complex scalars are
//! `[re, im]` pairs. Floats are written with round-trip precision, so
//! save followed by load reproduces every weight bit for bit.

use std::fs;
use std::path::Path;
use std::sync::Arc;

use faer::{Mat, MatRef};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};
use sprs::CsMat;

use crate::bench::{Method, Reservoir};
use crate::config::EsnConfig;
use crate::dataset::shift_down;
use crate::dpg::{build_dpg, Distribution};
use crate::error::{check_dim, EsnError, Result};
use crate::linalg::{from_rows, to_rows};
use crate::postponed::{run_echo_matrix, train_gamma};
use crate::readout::{fit_readout, Basis, Readout, ReadoutFlags, TrainSpec};
use crate::scan::{scan_states, Engine, DEFAULT_CHUNK};
use crate::spectral::{
    diagonalize, eet_train, ewt_transform, run_diagonal, QBasis, SpectralReservoir,
};
use crate::standard::{apply_leak, generate_dense, run_reservoir, DenseReservoir, RecurrentMatrix};
use crate::state::{Feedback, Run};

pub const SCHEMA_VERSION: &str = "v1";

/// How a readout is fitted.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TrainMethod {
    /// Ridge with `α·I` on the model's native states.
    Ridge,
    /// Ridge on Q-basis states with `α·blockdiag(I, QᵀQ)`.
    Eet,
    /// Composite weights on the echo matrix, mapped back to output weights.
    Gamma,
}

impl std::str::FromStr for TrainMethod {
    type Err = EsnError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ridge" => Ok(TrainMethod::Ridge),
            "eet" => Ok(TrainMethod::Eet),
            "gamma" => Ok(TrainMethod::Gamma),
            other => Err(EsnError::InvalidConfig(format!(
                "unknown training method {other:?}; expected ridge, eet or gamma"
            ))),
        }
    }
}

/// Training data and options for [`Model::train`].
#[derive(Clone, Debug)]
pub struct TrainOptions {
    pub method: TrainMethod,
    pub alpha: f64,
    /// Fit in neuron coordinates and map the readout with EWT
    /// (ridge on a diagonalized model only).
    pub ewt: bool,
}

#[derive(Clone, Debug)]
pub struct Model {
    pub config: EsnConfig,
    pub method: Method,
    pub reservoir: Reservoir,
    pub readout: Option<Readout>,
}

impl Model {
    /// Builds the reservoir for `method`; the leak rate in `config` is applied.
    pub fn generate(method: Method, config: &EsnConfig) -> Result<Self> {
        let lr = config.leak_rate;
        let reservoir = match method {
            Method::Normal => Reservoir::Dense(apply_leak(&generate_dense(config)?, lr)),
            Method::Diagonalized => Reservoir::Spectral {
                spec: diagonalize(&generate_dense(config)?)?.apply_leak(lr),
                eet: true,
            },
            Method::Dpg(d) => Reservoir::Spectral {
                spec: build_dpg(config, d)?.apply_leak(lr),
                eet: false,
            },
        };
        Ok(Self {
            config: config.clone(),
            method,
            reservoir,
            readout: None,
        })
    }

    pub fn basis(&self) -> Basis {
        self.reservoir.basis()
    }

    pub fn d_in(&self) -> usize {
        match &self.reservoir {
            Reservoir::Dense(r) => r.d_in(),
            Reservoir::Spectral { spec, .. } => spec.d_in(),
        }
    }

    /// Feedback dimension, if the reservoir has `W_fb`.
    pub fn d_fb(&self) -> Option<usize> {
        match &self.reservoir {
            Reservoir::Dense(r) => r.w_fb.as_ref().map(|m| m.nrows()),
            Reservoir::Spectral { spec, .. } => spec.d_fb(),
        }
    }

    /// Runs the reservoir from a zero state. With `teacher` the previous
    /// outputs come from it; otherwise a feedback model runs closed loop on
    /// its readout. When a readout is attached the outputs are always filled.
    pub fn run(
        &self,
        inputs: MatRef<'_, f64>,
        teacher: Option<MatRef<'_, f64>>,
        engine: Engine,
    ) -> Result<Run> {
        let feedback =
            match (teacher, self.d_fb(), &self.readout) {
                (Some(y), Some(_), _) => Feedback::Teacher(y),
                (None, Some(_), Some(r)) => Feedback::Readout(r),
                (None, Some(_), None) => return Err(EsnError::MissingReadout(
                    "the model has feedback weights: give target columns or train a readout first",
                )),
                (_, None, _) => Feedback::None,
            };
        let mut run = match (&self.reservoir, engine, feedback) {
            (Reservoir::Dense(r), _, fb) => run_reservoir(r, inputs, fb)?,
            (Reservoir::Spectral { spec, .. }, Engine::Scan, Feedback::None) => Run {
                states: scan_states(spec, inputs, DEFAULT_CHUNK)?,
                outputs: None,
            },
            (Reservoir::Spectral { .. }, Engine::Scan, _) => {
                return Err(EsnError::FeedbackUnsupported(
                    "the scan engine needs inputs that do not depend on outputs",
                ))
            }
            (Reservoir::Spectral { spec, .. }, Engine::Sequential, fb) => {
                run_diagonal(spec, inputs, fb)?
            }
        };
        if run.outputs.is_none() {
            if let Some(r) = &self.readout {
                let y_prev = teacher.map(shift_down);
                let steps = run.states.steps();
                run.outputs =
                    Some(r.predict(&run.states, y_prev.as_ref().map(|m| m.as_ref()), 0..steps)?);
            }
        }
        Ok(run)
    }

    /// Fits a readout on rows `config.washout..` of teacher-forced states,
    /// attaches it and returns the training-span predictions.
    pub fn train(
        &mut self,
        inputs: MatRef<'_, f64>,
        targets: MatRef<'_, f64>,
        options: &TrainOptions,
    ) -> Result<Mat<f64>> {
        check_dim("target rows", inputs.nrows(), targets.nrows())?;
        let rows = self.config.washout..inputs.nrows();
        if rows.is_empty() {
            return Err(EsnError::EmptySequence);
        }
        let flags = ReadoutFlags {
            use_bias: self.config.use_bias,
            use_feedback: self.d_fb().is_some(),
        };
        if flags.use_feedback {
            check_dim(
                "feedback columns",
                self.d_fb().unwrap_or(0),
                targets.ncols(),
            )?;
        }
        let spec = TrainSpec {
            targets,
            rows: rows.clone(),
            alpha: options.alpha,
            flags,
        };
        let teacher = flags.use_feedback.then_some(targets);
        let readout = match (options.method, &self.reservoir) {
            (TrainMethod::Gamma, Reservoir::Spectral { spec: res, .. }) => {
                if options.ewt {
                    return Err(EsnError::InvalidConfig(
                        "--ewt applies to ridge training only".into(),
                    ));
                }
                if res.d_fb().is_some() {
                    return Err(EsnError::FeedbackUnsupported(
                        "gamma training runs without feedback",
                    ));
                }
                let echo = run_echo_matrix(res, inputs)?;
                let composite =
                    train_gamma(&echo, targets, rows.clone(), options.alpha, flags.use_bias)?;
                let w: Vec<f64> = res.w_in_q().row(0).iter().copied().collect();
                composite.recover_readout(&w)?
            }
            (TrainMethod::Gamma, Reservoir::Dense(_)) | (TrainMethod::Eet, Reservoir::Dense(_)) => {
                return Err(EsnError::InvalidConfig(
                    "eet and gamma training need a spectral model (diag or dpg-*)".into(),
                ))
            }
            (TrainMethod::Eet, Reservoir::Spectral { spec: res, .. }) => {
                if options.ewt {
                    return Err(EsnError::InvalidConfig(
                        "--ewt applies to ridge training only".into(),
                    ));
                }
                let states = self.run(inputs, teacher, Engine::Sequential)?.states;
                eet_train(&states, spec, res)?.readout
            }
            (TrainMethod::Ridge, Reservoir::Spectral { spec: res, .. }) if options.ewt => {
                let q_states = self.run(inputs, teacher, Engine::Sequential)?.states;
                let states = res.to_original(&q_states)?;
                let fit = fit_readout(&states, spec, Basis::Original, None)?;
                ewt_transform(&fit.readout, res)?
            }
            (TrainMethod::Ridge, _) if options.ewt => {
                return Err(EsnError::InvalidConfig(
                    "--ewt needs a diagonalized model".into(),
                ))
            }
            (TrainMethod::Ridge, _) => {
                let states = self.run(inputs, teacher, Engine::Sequential)?.states;
                fit_readout(&states, spec, self.basis(), None)?.readout
            }
        };
        self.readout = Some(readout);
        let mut run = self.run(
            inputs,
            Some(targets).filter(|_| flags.use_feedback),
            Engine::Sequential,
        )?;
        let outputs = run
            .outputs
            .take()
            .ok_or(EsnError::MissingReadout("no outputs"))?;
        Ok(outputs.subrows(rows.start, rows.len()).to_owned())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(&ModelDoc::from_model(self))?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str::<ModelDoc>(text)?.into_model()
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()?)?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }
}

#[derive(Serialize, Deserialize)]
struct ModelDoc {
    schema: String,
    method: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    sigma: Option<f64>,
    config: EsnConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    dense: Option<DenseDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    spectral: Option<SpectralDoc>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    readout: Option<ReadoutDoc>,
}

#[derive(Serialize, Deserialize)]
struct SparseDoc {
    rows: usize,
    cols: usize,
    row_ptr: Vec<usize>,
    col_idx: Vec<usize>,
    values: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
#[serde(untagged)]
enum MatrixDoc {
    Sparse(SparseDoc),
    Dense(Vec<Vec<f64>>),
}

#[derive(Serialize, Deserialize)]
struct DenseDoc {
    w: MatrixDoc,
    w_in: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_fb: Option<Vec<Vec<f64>>>,
}

#[derive(Serialize, Deserialize)]
struct SpectralDoc {
    lambda_real: Vec<f64>,
    lambda_cpx: Vec<[f64; 2]>,
    w_in_q: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    w_fb_q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    basis_q: Option<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    cond: Option<f64>,
    eet: bool,
}

#[derive(Serialize, Deserialize)]
struct ReadoutDoc {
    basis: Basis,
    use_bias: bool,
    use_feedback: bool,
    /// Stacked `[bias; previous output; reservoir]`, `N' × D_out`.
    weights: Vec<Vec<f64>>,
}

fn model_err(msg: impl Into<String>) -> EsnError {
    EsnError::Model(msg.into())
}

impl MatrixDoc {
    fn from_matrix(w: &RecurrentMatrix) -> Self {
        match w {
            RecurrentMatrix::Dense(m) => MatrixDoc::Dense(to_rows(m.as_ref())),
            RecurrentMatrix::Sparse(m) => {
                let csr = if m.is_csr() { m.clone() } else { m.to_csr() };
                MatrixDoc::Sparse(SparseDoc {
                    rows: csr.rows(),
                    cols: csr.cols(),
                    row_ptr: csr.indptr().raw_storage().to_vec(),
                    col_idx: csr.indices().to_vec(),
                    values: csr.data().to_vec(),
                })
            }
        }
    }

    fn into_matrix(self) -> Result<RecurrentMatrix> {
        match self {
            MatrixDoc::Dense(rows) => {
                let m = from_rows(&rows, 0)?;
                check_dim("W columns", m.nrows(), m.ncols())?;
                Ok(RecurrentMatrix::Dense(m))
            }
            MatrixDoc::Sparse(s) => {
                check_dim("W columns", s.rows, s.cols)?;
                CsMat::try_new((s.rows, s.cols), s.row_ptr, s.col_idx, s.values)
                    .map(RecurrentMatrix::Sparse)
                    .map_err(|(_, _, _, e)| model_err(format!("invalid sparse W: {e}")))
            }
        }
    }
}

fn matrix(rows: &[Vec<f64>], what: &str) -> Result<Mat<f64>> {
    if rows.is_empty() {
        return Err(model_err(format!("{what} has no rows")));
    }
    from_rows(rows, 0)
}

impl ModelDoc {
    fn from_model(model: &Model) -> Self {
        let (dense, spectral) = match &model.reservoir {
            Reservoir::Dense(r) => (
                Some(DenseDoc {
                    w: MatrixDoc::from_matrix(&r.w),
                    w_in: to_rows(r.w_in.as_ref()),
                    w_fb: r.w_fb.as_ref().map(|m| to_rows(m.as_ref())),
                }),
                None,
            ),
            Reservoir::Spectral { spec, eet } => (
                None,
                Some(SpectralDoc {
                    lambda_real: spec.lambda_real().to_vec(),
                    lambda_cpx: spec.lambda_cpx().iter().map(|z| [z.re, z.im]).collect(),
                    w_in_q: to_rows(spec.w_in_q()),
                    w_fb_q: spec.w_fb_q().map(to_rows),
                    basis_q: spec.basis_q().map(to_rows),
                    cond: spec.basis().map(|b| b.cond()),
                    eet: *eet,
                }),
            ),
        };
        let sigma = match model.method {
            Method::Dpg(Distribution::NoisyGolden { sigma }) => Some(sigma),
            _ => None,
        };
        Self {
            schema: SCHEMA_VERSION.into(),
            method: model.method.name().into(),
            sigma,
            config: model.config.clone(),
            dense,
            spectral,
            readout: model.readout.as_ref().map(|r| {
                let flags = r.flags();
                ReadoutDoc {
                    basis: r.basis,
                    use_bias: flags.use_bias,
                    use_feedback: flags.use_feedback,
                    weights: to_rows(r.weights().as_ref()),
                }
            }),
        }
    }

    fn into_model(self) -> Result<Model> {
        if self.schema != SCHEMA_VERSION {
            return Err(model_err(format!(
                "unsupported schema {:?}, expected {SCHEMA_VERSION:?}",
                self.schema
            )));
        }
        let mut method: Method = self.method.parse()?;
        if let (Method::Dpg(Distribution::NoisyGolden { sigma }), Some(s)) =
            (&mut method, self.sigma)
        {
            *sigma = s;
        }
        let reservoir = match (self.dense, self.spectral) {
            (Some(d), None) => Reservoir::Dense(DenseReservoir::new(
                d.w.into_matrix()?,
                matrix(&d.w_in, "w_in")?,
                d.w_fb.map(|m| matrix(&m, "w_fb")).transpose()?,
            )?),
            (None, Some(s)) => {
                let basis = s
                    .basis_q
                    .map(|rows| {
                        let q = matrix(&rows, "basis_q")?;
                        Ok::<_, EsnError>(Arc::new(match s.cond {
                            Some(c) => QBasis::with_cond(q, c),
                            None => QBasis::new(q),
                        }))
                    })
                    .transpose()?;
                let w_fb_q = s.w_fb_q.map(|m| matrix(&m, "w_fb_q")).transpose()?;
                let spec = SpectralReservoir::from_parts(
                    s.lambda_real,
                    s.lambda_cpx
                        .iter()
                        .map(|[re, im]| Complex64::new(*re, *im))
                        .collect(),
                    matrix(&s.w_in_q, "w_in_q")?.as_ref(),
                    w_fb_q.as_ref().map(|m| m.as_ref()),
                    basis,
                )?;
                Reservoir::Spectral { spec, eet: s.eet }
            }
            _ => {
                return Err(model_err(
                    "exactly one of \"dense\" and \"spectral\" must be present",
                ))
            }
        };
        let readout = self
            .readout
            .map(|r| {
                let flags = ReadoutFlags {
                    use_bias: r.use_bias,
                    use_feedback: r.use_feedback,
                };
                let readout = Readout::from_weights(
                    matrix(&r.weights, "readout weights")?.as_ref(),
                    flags,
                    r.basis,
                )?;
                check_dim("readout units", reservoir.units(), readout.units())?;
                if readout.basis != reservoir.basis() {
                    return Err(EsnError::BasisMismatch {
                        readout: readout.basis.name(),
                        states: reservoir.basis().name(),
                    });
                }
                Ok(readout)
            })
            .transpose()?;
        Ok(Model {
            config: self.config,
            method,
            reservoir,
            readout,
        })
    }
}
