//! A numerical laboratory for score-based diffusion on Gaussian mixtures.
//!
//! The crate covers the whole loop: exact mixture scores and their smoothed
//! versions ([`mixture`]), the forward OU process and Monte Carlo checks of
//! its high-probability bounds ([`diffusion`]), reverse-time step schedules
//! ([`schedule`]), an exact-step DDPM sampler ([`sampler`]), score-matching
//! ERM and quantile error metrics ([`estimation`]), 1-d distance estimators
//! ([`metrics`]) and a reproducible experiment runner ([`lab`]).

// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod diffusion;
pub mod error;
pub mod estimation;
pub mod lab;
pub mod linalg;
pub mod metrics;
pub mod mixture;
pub mod quadrature;
pub mod rng;
pub mod sampler;
pub mod schedule;
pub mod stats;

pub use error::{LabError, Result};
pub use mixture::{IsotropicGaussianMixture, ScoreEvaluation};
pub use sampler::{AnalyticScore, CorruptedScore, FrozenHypothesis, ScoreModel};
pub use schedule::{Schedule, ScheduleKind};
