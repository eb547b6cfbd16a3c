//! Predictive density estimation under Kullback-Leibler loss for the
//! two-sample Gaussian model `X ~ N_p(mu, v_x I)`, `Y ~ N_p(mu, v_y I)`.

pub mod admissibility;
pub mod density;
pub mod error;
pub mod estimators;
pub mod experiments;
pub mod mc;
pub mod marginals;
pub mod model;
pub mod priors;
pub mod quadrature;
pub mod risk;
pub mod special;

pub use error::{Error, Result};
