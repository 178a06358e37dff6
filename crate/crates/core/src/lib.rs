//! Laplace's-method approximations for Bayesian inference.
//!
//! The crate approximates posterior integrals of the form
//! `∫ b(t) exp(-n r(t)) dt` by a Gaussian integral centred at the minimiser
//! of `r`, and builds on that single primitive:
//!
//! * posterior moments in the fully exponential form, with the mgf and
//!   additive-shift devices for functions that take nonpositive values,
//! * marginal posterior densities and densities of nonlinear functions,
//! * log marginal likelihoods, Bayes factors and posterior model
//!   probabilities, including selection of the number of mixture components.
//!
//! Every quantity is assembled in log space. Gradients and Hessians are
//! exact when the kernel is written against [`jet::Scalar`] (all built-in
//! models are) and numerical ([`numdiff`]) otherwise. Minimisation is a safeguarded Newton method ([`optimize`]),
//! and [`quadrature`] and [`montecarlo`] provide the normalisation constants
//! and the sampling baseline.

pub mod error;
pub mod exprlang;
pub mod jet;
pub mod laplace;
pub mod linalg;
pub mod model;
pub mod montecarlo;
pub mod numdiff;
pub mod optimize;
pub mod quadrature;
pub mod stats;

pub use error::{Error, Result};
pub use laplace::{
    BayesFactorReport, DensityGrid, DensitySurface, Laplace, LaplaceOptions, LogLaplaceIntegral,
    MixtureFit, MixtureSelection, MomentMethod, MomentReport, Normalization, Space,
};
pub use model::{Domain, GFunction, ModelSpec, ParameterDescriptor};
