//! Training-dynamics laboratory for learning-rate decay.

// Validation is written as `!(x > lo)` on purpose so that NaN is rejected.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod autodecay;
pub mod edma;
pub mod error;
pub mod ndgrad;
pub mod operator;
pub mod ps10;
pub mod scalar;
pub mod spectrum;
pub mod trainer;
pub mod transfer;

pub use error::{Error, Result};
pub use scalar::Real;

/// Double-precision instantiations used by the trainer and the CLI.
pub type EdmaState = edma::EdmaState<f64>;
pub type AutoDecayConfig = autodecay::AutoDecayConfig<f64>;
pub type ControllerState = autodecay::ControllerState<f64>;
pub type Controller = autodecay::Controller<f64>;
pub type SpectrumReport = spectrum::SpectrumReport<f64>;
pub type QuadraticSpec = spectrum::QuadraticSpec<f64>;

/// Single-precision instantiations.
pub type EdmaStateF32 = edma::EdmaState<f32>;
pub type AutoDecayConfigF32 = autodecay::AutoDecayConfig<f32>;
pub type ControllerStateF32 = autodecay::ControllerState<f32>;
pub type SpectrumReportF32 = spectrum::SpectrumReport<f32>;

/// Stage accuracies with exact decimal arithmetic.
pub type ExactStageAccuracies = transfer::StageAccuracies<num_rational::Ratio<i128>>;
