//! Two-qubit open-system dynamics under mixed relaxation and dephasing noise.

#![allow(
    clippy::neg_cmp_op_on_partial_ord,
    clippy::needless_range_loop,
    clippy::type_complexity,
    clippy::result_large_err
)]

pub mod coefficients;
pub mod error;
pub mod experiment;
pub mod format;
pub mod linalg;
pub mod master;
pub mod noise;
pub mod protocols;
pub mod scalar;
pub mod system;

pub use error::{Error, Result};
pub use scalar::{Real, C};

pub type Field64 = coefficients::CoefficientField<f64>;
pub type Field32 = coefficients::CoefficientField<f32>;
pub type Density64 = linalg::DensityMatrix<f64>;
pub type Density32 = linalg::DensityMatrix<f32>;
pub type Matrix64 = linalg::ComplexMatrix<f64>;
pub type Matrix32 = linalg::ComplexMatrix<f32>;
pub type Trajectory64 = master::StateTrajectory<f64>;
pub type Trajectory32 = master::StateTrajectory<f32>;
