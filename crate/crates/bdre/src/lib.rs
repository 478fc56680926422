//! Numerics and simulation for Feller branching diffusions driven by a
//! Brownian environment.
//!
//! Exact evaluators (survival probabilities, densities of exponential
//! functionals, limiting constants) live next to Monte Carlo engines that
//! check them: Euler schemes, the time-change construction, h-transform
//! conditioning, the Poisson excursion backbone and a discrete branching
//! process in random environment.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod asymptotics;
pub mod backbone;
pub mod bpre;
pub mod env_path;
pub mod error;
pub mod exact;
pub mod feller;
pub mod model;
pub mod quad;
pub mod rng;
pub mod simulate;
pub mod stats;

pub use asymptotics::ThetaEvaluator;
pub use error::{BdreError, Result};
pub use model::{classify_regime, decay_profile, default_dt, f_eval, AsymptoticProfile, ModelParams, Regime};
pub use rng::{RngStream, SeedRecord, StreamFamily};
pub use stats::McEstimate;
