//! Optimal power-divergence (OPD) spatial prediction of positive-valued
//! processes: the loss family, closed-form log-Gaussian inference, Monte
//! Carlo estimators, prediction intervals and parameter estimation.

pub mod data;
pub mod error;
pub mod intervals;
pub mod linalg;
pub mod lognormal;
pub mod loss;
pub mod montecarlo;
pub mod normal;
pub mod optim;
pub mod rng;
pub mod variogram;

pub use error::{OpdError, Result};
pub use loss::PowerParameter;
