//! Scaling laws for value-based RL: from training-run logs to fitted batch-size
//! and data-efficiency laws, and from those laws to compute-optimal
//! prescriptions of UTD ratio, model size and batch size.
//!
//! The numeric core ([`fitkit`], [`scaling_laws`], [`allocate`], and
//! [`preprocess::isotonic`]) is generic over [`Scalar`] (`f32` or `f64`).
//! The aliases at the crate root fix it to `f64`, with `*F32` variants for
//! single precision.

#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::type_complexity)]

pub mod allocate;
pub mod bootstrap;
pub mod error;
pub mod fitkit;
pub mod ingest;
pub mod preprocess;
pub mod scaling_laws;
pub mod scalar;
pub mod synth;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type DataFit = scaling_laws::DataFit<f64>;
pub type DataFitF32 = scaling_laws::DataFit<f32>;
pub type BatchRuleFit = scaling_laws::BatchRuleFit<f64>;
pub type BatchRuleFitF32 = scaling_laws::BatchRuleFit<f32>;
pub type ComputeModel = allocate::ComputeModel<f64>;
pub type ComputeModelF32 = allocate::ComputeModel<f32>;
pub type AllocationSolution = allocate::AllocationSolution<f64>;
pub type AllocationSolutionF32 = allocate::AllocationSolution<f32>;
pub type FrontierPoint = allocate::FrontierPoint<f64>;
pub type FrontierLaws = allocate::FrontierLaws<f64>;
pub type FitResult = fitkit::FitResult<f64>;
pub type FitResultF32 = fitkit::FitResult<f32>;
