//! Bayesian estimation error under additive noise `Y = X + sigma Z`.
//!
//! The crate evaluates the posterior mean `E[X | Y = y]`, inverts it, computes
//! the density of the error `W = X - E[X | Y]` and of its normalized form
//! `W / sigma`, and runs pathwise small-noise sweeps checked against a seeded
//! Monte-Carlo oracle. All numerics are generic over [`Scalar`]; the `f64`
//! aliases below are what the runner and CLI use.

pub mod dist;
pub mod acceptance;
pub mod convergence;
pub mod error;
pub mod error_density;
pub mod inversion;
pub mod mc_oracle;
pub mod posterior;
pub mod quadrature;
pub mod registry;
pub mod roots;
pub mod runner;
pub mod rng;
pub mod scalar;

pub use error::{Error, Result};
pub use scalar::Scalar;

pub type PriorSpec64 = dist::PriorSpec<f64>;
pub type NoiseSpec64 = dist::NoiseSpec<f64>;
pub type Posterior64<'a> = posterior::Posterior<'a, f64>;
pub type PosteriorCurve64 = posterior::PosteriorCurve<f64>;
pub type InverseMap64 = inversion::InverseMap<f64>;
pub type ErrorDensity64 = error_density::ErrorDensity<f64>;
pub type EmpiricalDistribution64 = mc_oracle::EmpiricalDistribution<f64>;
pub type AnalyticCdf64 = mc_oracle::AnalyticCdf<f64>;
pub type SweepReport64 = convergence::SweepReport<f64>;
