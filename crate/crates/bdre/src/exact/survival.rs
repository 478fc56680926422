//! Unconditional survival probability P^z(Z_t > 0) = E[f(z/(2A))]-type
//! integral over the law of 1/(2A_v^{(β)}), v = tσ_e²/4.

use serde::{Deserialize, Serialize};

use super::reversed::{reversed_functional, Functional};
use super::{MellinKernel, QuadratureSettings, BETA_KERNEL_MIN};
use crate::error::{domain, BdreError, Result};
use crate::model::ModelParams;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SurvivalRoute {
    /// z = 0.
    Trivial,
    /// Mellin form of the density, β ≥ -0.9.
    MellinKernel,
    /// Reversed joint density, β < -0.9.
    JointDensity,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SurvivalReport {
    pub value: f64,
    pub route: SurvivalRoute,
    /// Sum of absolute contributions before cancellation.
    pub magnitude: f64,
    pub error_estimate: f64,
}

pub fn survival_exact(params: &ModelParams, z: f64, t: f64, q: &QuadratureSettings) -> Result<f64> {
    survival_exact_report(params, z, t, q).map(|r| r.value)
}

pub fn survival_exact_report(params: &ModelParams, z: f64, t: f64, q: &QuadratureSettings) -> Result<SurvivalReport> {
    params.validate()?;
    params.require_environment()?;
    params.require_no_immigration("the exact survival probability")?;
    if !(z >= 0.0) || !z.is_finite() {
        return domain("initial mass z must be finite and nonnegative");
    }
    if !(t > 0.0) || !t.is_finite() {
        return domain("time must be positive and finite");
    }
    let v = t * params.sigma_e2 / 4.0;
    super::check_horizon(v, "Hartman-Watson evaluation unstable for small t")?;
    if z == 0.0 {
        return Ok(SurvivalReport {
            value: 0.0,
            route: SurvivalRoute::Trivial,
            magnitude: 0.0,
            error_estimate: 0.0,
        });
    }
    let beta = params.beta();
    let c = params.kappa() * z;
    let (value, magnitude, rel, route) = if beta >= BETA_KERNEL_MIN {
        let k = MellinKernel::new(v, beta, q)?;
        let (s, m) = k.survival(c);
        (s, m, k.relative_accuracy(), SurvivalRoute::MellinKernel)
    } else {
        let (s, m) = reversed_functional(v, beta, Functional::Survival { c }, q)?;
        (s, m, q.rel_tol, SurvivalRoute::JointDensity)
    };
    let error_estimate = magnitude * (10.0 * rel + 1e-15);
    if !value.is_finite() || error_estimate > 0.05 * value.abs().max(f64::MIN_POSITIVE) {
        return Err(BdreError::Accuracy(format!(
            "survival quadrature lost accuracy: value {value:e}, estimated error {error_estimate:e}"
        )));
    }
    Ok(SurvivalReport {
        value: value.clamp(0.0, 1.0),
        route,
        magnitude,
        error_estimate,
    })
}
