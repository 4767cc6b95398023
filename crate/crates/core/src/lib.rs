//! Linear echo state networks with an O(N) diagonal reservoir update.

pub mod bench;
pub mod config;
pub mod dataset;
pub mod dpg;
pub mod error;
pub mod linalg;
pub mod model;
pub mod postponed;
pub mod readout;
pub mod rng;
pub mod scan;
pub mod spectral;
pub mod standard;
pub mod state;

pub use faer;

pub use config::EsnConfig;
pub use dataset::{Split, TaskDataset};
pub use dpg::{build_dpg, Distribution};
pub use error::{EsnError, Result};
pub use model::{Model, TrainMethod, TrainOptions};
pub use readout::{
    readout_step, train_readout, train_ridge, Basis, Readout, ReadoutFlags, TrainSpec,
    TrainedReadout,
};
pub use spectral::{diagonalize, eet_train, ewt_transform, run_diagonal, SpectralReservoir};
pub use standard::{apply_leak, generate_dense, run_reservoir, DenseReservoir, RecurrentMatrix};
pub use state::{Feedback, Run, StateSeq};
