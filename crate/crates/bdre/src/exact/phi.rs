//! The weak-regime profile φ_β.
//!
//! After integrating by parts in ξ,
//! φ_β(a) = Γ((β+2)/2)/(√2 π) e^{-a} a^{-β/2-1} β^{-1} ∫₀^∞ G(a cosh²ξ) dξ,
//! G(c) = ∫₀^∞ u^{(β-1)/2} e^{-u} (u + c)^{-β/2} du.

use std::f64::consts::PI;

use statrs::function::gamma::{gamma, ln_gamma};

use super::QuadratureSettings;
use crate::error::{domain, Result};
use crate::quad::{adaptive, Tolerance};

/// Beyond this value of a·cosh²ξ, G is replaced by its leading asymptotics.
const C_TAIL: f64 = 1e10;

fn g_inner(beta: f64, c: f64, tol: Tolerance) -> f64 {
    // u = x² removes the u^{(β-1)/2} endpoint singularity.
    let f = |x: f64| {
        if x == 0.0 {
            return 0.0;
        }
        2.0 * (beta * x.ln() - x * x - beta / 2.0 * (x * x + c).ln()).exp()
    };
    adaptive(f, 0.0, 9.0, tol).value
}

pub fn phi_beta(beta: f64, a: f64, q: &QuadratureSettings) -> Result<f64> {
    if !(beta > 0.0 && beta < 2.0) {
        return domain(format!("phi_beta needs beta in (0, 2), got {beta}"));
    }
    if !(a > 0.0) || !a.is_finite() {
        return domain("phi_beta needs a > 0");
    }
    let tol = Tolerance {
        abs: f64::MIN_POSITIVE,
        rel: q.rel_tol.max(1e-11),
        max_intervals: q.max_subdivisions,
    };
    let xi_tail = (C_TAIL / a).sqrt().max(1.0).acosh();
    let body = adaptive(
        |xi: f64| {
            let c = xi.cosh();
            g_inner(beta, a * c * c, tol)
        },
        0.0,
        xi_tail,
        tol,
    )
    .value;
    // G(c) ≈ Γ((β+1)/2) c^{-β/2} (1 - (β/2)((β+1)/2)/c) and
    // cosh^{-β}ξ ≈ 2^β e^{-βξ} (1 - β e^{-2ξ}).
    let g0 = gamma((beta + 1.0) / 2.0);
    let corr = 1.0 - beta / 2.0 * (beta + 1.0) / 2.0 / (a * xi_tail.cosh().powi(2));
    let tail = g0
        * a.powf(-beta / 2.0)
        * 2f64.powf(beta)
        * ((-beta * xi_tail).exp() / beta - beta * (-(beta + 2.0) * xi_tail).exp() / (beta + 2.0))
        * corr;
    let ln_pre = ln_gamma((beta + 2.0) / 2.0) - (2f64.sqrt() * PI).ln() - a - (beta / 2.0 + 1.0) * a.ln() - beta.ln();
    Ok(ln_pre.exp() * (body + tail))
}
