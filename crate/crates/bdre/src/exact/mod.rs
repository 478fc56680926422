//! Exact evaluators: the Hartman-Watson kernel, densities of 1/(2A_v^{(β)}),
//! environment-conditional Laplace transforms and survival probabilities,
//! the unconditional survival probability and the Dufresne gamma limit.
//!
//! Time arguments of the density routines are in the unit-volatility clock
//! v = tσ_e²/4 of the exponential functional A_v^{(β)}.

mod conditional;
mod density;
mod hartman_watson;
mod mellin;
mod phi;
mod reversed;
mod survival;

use serde::{Deserialize, Serialize};

use crate::error::{BdreError, Result};
use crate::quad::Tolerance;

pub use conditional::{gamma_limit, laplace_conditional, survival_conditional, GammaLimit};
pub use density::{critical_density, density_inv_two_a, DensityGrid, InvTwoADensity};
pub use hartman_watson::{hartman_watson_theta, joint_density};
pub use mellin::MellinKernel;
pub use phi::phi_beta;
pub use reversed::{reversed_functional, Functional};
pub use survival::{survival_exact, survival_exact_report, SurvivalReport, SurvivalRoute};

/// Smallest admissible time for every Hartman-Watson based evaluation.
pub const T_MIN: f64 = 0.3;

/// β below which the Mellin-kernel route is abandoned for the joint-density route.
pub const BETA_KERNEL_MIN: f64 = -0.9;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QuadratureSettings {
    /// Cutoff of the oscillatory ξ/y integrals; `None` picks one where the
    /// Gaussian damping is below e^{-40}.
    pub xi_max: Option<f64>,
    pub rel_tol: f64,
    /// Negative density values smaller than this are treated as roundoff.
    pub abs_tol: f64,
    pub max_subdivisions: usize,
}

impl Default for QuadratureSettings {
    fn default() -> Self {
        Self {
            xi_max: None,
            rel_tol: 1e-12,
            abs_tol: 1e-10,
            max_subdivisions: 200,
        }
    }
}

impl QuadratureSettings {
    pub(crate) fn log_damping(&self) -> f64 {
        40.0
    }

    pub(crate) fn y_cutoff(&self, _v: f64, natural: f64) -> f64 {
        self.xi_max.unwrap_or(natural)
    }

    /// Pure relative tolerance, for panels on which the integrand keeps its sign.
    pub(crate) fn tolerance_relative(&self) -> Tolerance {
        Tolerance {
            abs: f64::MIN_POSITIVE,
            rel: self.rel_tol,
            max_intervals: self.max_subdivisions,
        }
    }
}

pub(crate) fn check_horizon(t: f64, msg: &str) -> Result<()> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(BdreError::Domain(format!("time must be positive and finite, got {t}")));
    }
    if t < T_MIN {
        return Err(BdreError::Stability(format!("{msg} (t = {t} < {T_MIN})")));
    }
    Ok(())
}

/// ln sinh y and ln cosh y for y > 0 without overflow.
pub(crate) fn ln_sinh_cosh(y: f64) -> (f64, f64) {
    let e = (-2.0 * y).exp();
    let ln2 = std::f64::consts::LN_2;
    (y + (-(-2.0 * y).exp_m1()).ln() - ln2, y + e.ln_1p() - ln2)
}

/// ln(e^x + e^y).
pub(crate) fn log_add(x: f64, y: f64) -> f64 {
    if x == f64::NEG_INFINITY {
        return y;
    }
    if y == f64::NEG_INFINITY {
        return x;
    }
    let (hi, lo) = if x > y { (x, y) } else { (y, x) };
    hi + (lo - hi).exp().ln_1p()
}
