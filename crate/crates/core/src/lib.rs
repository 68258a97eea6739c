//! Teacher-student toolkit for learning a convolutional ReLU filter
//! `f(w, Z) = (1/k) Σ relu(wᵀZᵢ)` by gradient descent, with Monte Carlo
//! estimates of the region moments and angular smoothness constants that
//! govern convergence.
//!
//! Everything numeric is generic over [`Scalar`] (`f32` or `f64`); the
//! aliases below fix `f64`.

// `!(x > 0)` is deliberate: it also rejects NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]
#![allow(clippy::needless_range_loop)]

pub mod distributions;
pub mod error;
pub mod init;
pub mod linalg;
pub mod model;
pub mod optimize;
pub mod reduce;
pub mod regions;
pub mod rng;
pub mod scalar;
pub mod smoothness;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type RealVector = linalg::Vector<f64>;
pub type RealSymMatrix = linalg::SymMatrix<f64>;
pub type RealMatrix = linalg::Matrix<f64>;
pub type RealDataset = distributions::Dataset<f64>;
pub type RealDistributionSpec = distributions::DistributionSpec<f64>;
pub type RealMomentSet = regions::MomentSet<f64>;
pub type RealProfile = smoothness::SmoothnessProfile<f64>;
pub type RealRunConfig = optimize::RunConfig<f64>;
pub type RealTrajectory = optimize::Trajectory<f64>;
