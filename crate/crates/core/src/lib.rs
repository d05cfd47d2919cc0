//! Nonparametric mean and quantile effects for stayers in two-period panels.
//!
//! The estimators compare conditional means or quantiles of the outcome in
//! the two periods at points where the regressor did not change
//! (`X1 = X2 = x`). Time effects of location-scale form are supported, and
//! uniform confidence bands come from a weighted bootstrap.
//!
//! All numerical code is generic over [`scalar::Real`] (`f32` or `f64`);
//! the aliases below fix `f64`.

pub mod basis;
pub mod dgp;
pub mod effects;
pub mod inference;
pub mod linalg;
pub mod panel;
pub mod pipeline;
pub mod regress;
pub mod scalar;
pub mod stats;

use thiserror::Error;

pub use scalar::Real;

/// Any error raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Panel(#[from] panel::PanelError),
    #[error(transparent)]
    Basis(#[from] basis::BasisError),
    #[error(transparent)]
    Regress(#[from] regress::RegressError),
    #[error(transparent)]
    Effect(#[from] effects::EffectError),
    #[error(transparent)]
    Inference(#[from] inference::InferenceError),
    #[error(transparent)]
    Dgp(#[from] dgp::DgpError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub type Panel = panel::PanelDataset<f64>;
pub type Basis = basis::BasisSpec<f64>;
pub type Grid = effects::EvalGrid<f64>;
pub type Curve = effects::EffectCurve<f64>;
pub type Fit = regress::LinearFit<f64>;
pub type QuantileFit = regress::QuantileFit<f64>;
pub type Run = inference::BootstrapRun<f64>;
pub type Band = inference::UniformBand<f64>;
pub type Estimator = pipeline::Pipeline<f64>;
