//! Trait retrieval from hyperspectral reflectance with transfer-learned
//! Gaussian processes.
//!
//! The crate covers a seeded leaf-reflectance simulator, a PLSR baseline, a
//! small MLP with fine-tuning, an exact GP with the infinite-width ReLU
//! network kernel, and a two-task GP whose cross-task correlation is learned
//! from the data. [`experiment`] runs the full comparison grid.

pub mod data;
pub mod error;
pub mod evaluate;
pub mod experiment;
pub mod linalg;
pub mod mlp;
pub mod nngp;
pub mod persist;
pub mod plsr;
pub mod simulator;
pub mod transfer;

pub use data::{Domain, LabeledDataset, Scaler, WavelengthGrid};
pub use error::{Error, Result};
pub use evaluate::{r2, rmse, MetricReport};
pub use nngp::{NngpParams, NngpRegressor};
pub use simulator::SimulatorConfig;
pub use transfer::{TransferGpModel, TransferGpRegressor};
