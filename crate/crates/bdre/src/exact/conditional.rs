//! Quantities conditional on a fixed environment path, and the Dufresne limit.

use serde::{Deserialize, Serialize};

use crate::env_path::{time_change, EnvPath};
use crate::error::{domain, Result};
use crate::model::ModelParams;

fn check(params: &ModelParams, z: f64, path: &EnvPath, what: &str) -> Result<()> {
    params.validate()?;
    params.require_no_immigration(what)?;
    if !(z >= 0.0) || !z.is_finite() {
        return domain("initial mass z must be finite and nonnegative");
    }
    if path.values.is_empty() {
        return domain("environment path is empty");
    }
    Ok(())
}

/// E[exp(-λ Z_t) | S] = exp(-z / (∫₀ᵗ (σ_b²/2) e^{-S_s} ds + e^{-S_t}/λ)),
/// with c/0 = ∞ (λ = 0 gives 1) and c/∞ = 0.
pub fn laplace_conditional(params: &ModelParams, z: f64, lam: f64, path: &EnvPath) -> Result<f64> {
    check(params, z, path, "the Laplace transform")?;
    if !(lam >= 0.0) {
        return domain("lambda must be nonnegative");
    }
    if z == 0.0 || lam == 0.0 {
        return Ok(1.0);
    }
    let integral = 0.5 * time_change(path, params.sigma_b2).last();
    let terminal = if lam.is_infinite() {
        0.0
    } else {
        (-path.last()).exp() / lam
    };
    let den = integral + terminal;
    if den == 0.0 {
        return Ok(0.0);
    }
    Ok((-z / den).exp())
}

/// P(Z_t > 0 | S) = 1 - exp(-z / ∫₀ᵗ (σ_b²/2) e^{-S_s} ds).
pub fn survival_conditional(params: &ModelParams, z: f64, path: &EnvPath) -> Result<f64> {
    check(params, z, path, "the conditional survival probability")?;
    if z == 0.0 {
        return Ok(0.0);
    }
    let integral = 0.5 * time_change(path, params.sigma_b2).last();
    if integral == 0.0 {
        return Ok(1.0);
    }
    Ok(-(-z / integral).exp_m1())
}

/// Law of (∫₀^∞ exp(aB_s - bs) ds)^{-1} = multiplier · Gamma(shape, 1).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GammaLimit {
    pub shape: f64,
    pub multiplier: f64,
}

impl GammaLimit {
    pub fn mean(&self) -> f64 {
        self.shape * self.multiplier
    }
}

pub fn gamma_limit(a: f64, b: f64) -> Result<GammaLimit> {
    if !(b > 0.0) {
        return domain(format!("b = {b}: the exponential functional diverges unless b > 0"));
    }
    if a == 0.0 || !a.is_finite() {
        return domain("a must be finite and nonzero");
    }
    Ok(GammaLimit {
        shape: 2.0 * b / (a * a),
        multiplier: a * a / 2.0,
    })
}
