//! Online selection of mixtures over sample generators under diversity-aware
//! objectives.
//!
//! The numerical layers ([`linalg`], [`kernels`], [`metrics`], [`objectives`],
//! [`solver`]) are generic over [`Real`]; the online layers use `f64`.

pub mod bandit;
pub mod diagnostics;
pub mod error;
pub mod harness;
pub mod kernels;
pub mod linalg;
pub mod metrics;
pub mod objectives;
pub mod rng;
pub mod scalar;
pub mod solver;

pub use error::{Error, Result};
pub use scalar::Real;

pub type SymMatrix64 = linalg::SymMatrix<f64>;
pub type SymMatrix32 = linalg::SymMatrix<f32>;
pub type Moments64 = metrics::GaussianMoments<f64>;
pub type ArmStats64 = objectives::ArmMomentStats<f64>;
pub type Weights64 = objectives::MixtureWeights<f64>;
pub type RffMap64 = kernels::RffMap<f64>;
