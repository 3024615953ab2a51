//! Multi-output relevance vector regression.
//!
//! Two solvers share a kernel design matrix and a vector of weight-row
//! precisions `α`:
//!
//! - [`fit_fast`] models the target noise with a full `V×V` covariance `Ω`
//!   (matrix-normal likelihood), which gives each `α_i` a closed-form update.
//! - [`fit_baseline`] gives every output its own noise variance `σ_j²`; each
//!   `α_i` update then needs the roots of a degree `2V - 1` polynomial.
//!
//! All numerical code is generic over [`Scalar`] (`f32` or `f64`); the
//! `*64`/`*32` aliases fix the scalar type.

pub mod baseline;
pub mod common;
pub mod error;
pub mod eval;
pub mod fast;
pub mod kernel;
pub mod linalg;
pub mod model_file;
pub mod scalar;
pub mod sim;
pub mod table;

pub use baseline::{fit_baseline, predict_baseline, BaselineModel};
pub use common::{Action, Alpha, FitOptions, IterationRecord, Method, TrainingData};
pub use error::{Error, Result};
pub use fast::{fit_fast, predict_fast, FastModel};
pub use model_file::{load_model, save_model, ModelFile, ModelMetadata, Prediction, TrainedModel};
pub use kernel::{build_design_matrix, kernel_eval, DesignMatrix, KernelConfig, KernelKind};
pub use scalar::Scalar;

pub type FastModel64 = FastModel<f64>;
pub type FastModel32 = FastModel<f32>;
pub type BaselineModel64 = BaselineModel<f64>;
pub type BaselineModel32 = BaselineModel<f32>;
pub type TrainingData64 = TrainingData<f64>;
pub type TrainingData32 = TrainingData<f32>;
pub type KernelConfig64 = KernelConfig<f64>;
pub type KernelConfig32 = KernelConfig<f32>;
pub type TrainedModel64 = TrainedModel<f64>;
pub type TrainedModel32 = TrainedModel<f32>;
