//! Fixed and Abramson-adaptive kernel estimators of the intensity of a
//! spatial point process observed as `n` superposed replicates, together with
//! exact moments by quadrature, leading-order expansions and optimal
//! bandwidths.
//!
//! The numerical core is generic over [`scalar::Scalar`] (`f32` or `f64`);
//! the aliases below fix the precision. Experiments run in `f64`.

// `!(x > 0)` is the NaN-rejecting form used throughout.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod estimate;
pub mod experiment;
pub mod kernel;
pub mod model;
pub mod oracle;
pub mod quadrature;
pub mod scalar;
pub mod simulate;
pub mod special;

pub use scalar::Scalar;

pub type KernelSpecF64 = kernel::KernelSpec<f64>;
pub type KernelSpecF32 = kernel::KernelSpec<f32>;
pub type WindowF64 = model::Window<f64>;
pub type WindowF32 = model::Window<f32>;
pub type IntensityModelF64 = model::IntensityModel<f64>;
pub type IntensityModelF32 = model::IntensityModel<f32>;
pub type AbramsonWeightF64 = model::AbramsonWeight<f64>;
pub type AbramsonWeightF32 = model::AbramsonWeight<f32>;
pub type PairCorrelationModelF64 = model::PairCorrelationModel<f64>;
pub type PairCorrelationModelF32 = model::PairCorrelationModel<f32>;
pub type PointPatternF64 = simulate::PointPattern<f64>;
pub type PointPatternF32 = simulate::PointPattern<f32>;
pub type EstimateRequestF64 = estimate::EstimateRequest<f64>;
pub type EstimateRequestF32 = estimate::EstimateRequest<f32>;
pub type MomentReportF64 = oracle::MomentReport<f64>;
pub type MomentReportF32 = oracle::MomentReport<f32>;
