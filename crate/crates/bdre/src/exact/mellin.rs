//! Density of 1/(2A_v^{(β)}) for β > -1 written as
//!
//! p(a) = K e^{-a} a^{-(β+1)/2} ∫₀^∞ s^{(β+1)/2} e^{-as} J(s) ds/s,
//!
//! with K = e^{-β²v/2} Γ((β+2)/2) / (√2 π² √v) and
//! J(s) = ∫₀^∞ e^{π²/2v - ξ²/2v} sin(πξ/v) sinh ξ cosh ξ (s + cosh²ξ)^{-(β+2)/2} dξ.
//!
//! J is tabulated once on a uniform grid in w = ln s. Expectations of
//! functionals whose a-integral is elementary (survival, mean, mass) are then
//! single trapezoid sums over that grid.

use std::f64::consts::PI;

use rayon::prelude::*;
use statrs::function::gamma::{gamma, ln_gamma};

use super::{check_horizon, ln_sinh_cosh, log_add, QuadratureSettings, BETA_KERNEL_MIN};
use crate::error::{domain, BdreError, Result};
use crate::quad::{panels, periodic_breaks, NeumaierSum};

const STEP: f64 = 0.05;
/// Below this w the shift s in (s + cosh²ξ) is invisible in double precision.
const W_FLAT: f64 = -40.0;

#[derive(Debug, Clone)]
pub struct MellinKernel {
    v: f64,
    beta: f64,
    p: f64,
    ln_k: f64,
    w: Vec<f64>,
    j: Vec<f64>,
    /// Relative accuracy of each J value.
    j_rel: f64,
    abs_tol: f64,
}

/// Continued Mellin transform Ψ_ν(b) = ∫₀^∞ a^{ν-1} e^{-ab} da = Γ(ν) b^{-ν}.
/// At ν = -n the pole is replaced by the finite part (-1)^{n+1} bⁿ ln b / n!;
/// the discarded polynomial integrates to zero against the kernel.
pub(crate) fn psi(nu: f64, b: f64) -> f64 {
    match nonpositive_integer(nu) {
        Some(n) => sign(n + 1) * b.powi(n as i32) * b.ln() / factorial(n),
        None => gamma(nu) * b.powf(-nu),
    }
}

/// Ψ_ν(b) - Ψ_ν(b + d), d ≥ 0, without cancellation for small d/b.
pub(crate) fn psi_diff(nu: f64, b: f64, d: f64) -> f64 {
    match nonpositive_integer(nu) {
        Some(n) => {
            let b2 = b + d;
            sign(n + 1) * (b.powi(n as i32) * b.ln() - b2.powi(n as i32) * b2.ln()) / factorial(n)
        }
        None => gamma(nu) * b.powf(-nu) * -(-nu * (d / b).ln_1p()).exp_m1(),
    }
}

fn nonpositive_integer(nu: f64) -> Option<u32> {
    let n = (-nu).round();
    (n >= 0.0 && (nu + n).abs() < 1e-9).then_some(n as u32)
}

fn sign(n: u32) -> f64 {
    if n.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

fn factorial(n: u32) -> f64 {
    (1..=n).map(f64::from).product()
}

impl MellinKernel {
    pub fn new(v: f64, beta: f64, q: &QuadratureSettings) -> Result<Self> {
        check_horizon(v, "Hartman-Watson evaluation unstable for small t")?;
        if !(beta > -1.0) {
            return domain(format!("density formula needs beta > -1, got {beta}"));
        }
        if beta < BETA_KERNEL_MIN {
            return domain(format!(
                "beta = {beta} in (-1, {BETA_KERNEL_MIN}) is outside the supported range of the density route"
            ));
        }
        let p = (beta + 1.0) / 2.0;
        let xi_max = q.y_cutoff(v, (-beta).max(0.0) * v + (2.0 * v * q.log_damping()).sqrt() + 1.0);
        let w_hi = 2.0 * xi_max + 10.0;
        let w_lo = W_FLAT.min(-40.0 / p - 2.0);
        let n = ((w_hi - w_lo) / STEP).ceil() as usize;
        let w: Vec<f64> = (0..=n).map(|i| w_lo + i as f64 * STEP).collect();
        let breaks = periodic_breaks(v, xi_max, 1.0);
        let flat = j_value(f64::NEG_INFINITY, v, beta, &breaks, q);
        let j: Vec<f64> = w
            .par_iter()
            .map(|&wi| {
                if wi <= W_FLAT {
                    flat
                } else {
                    j_value(wi, v, beta, &breaks, q)
                }
            })
            .collect();
        let ln_k =
            -beta * beta * v / 2.0 + ln_gamma((beta + 2.0) / 2.0) - 0.5 * (2.0f64).ln() - 2.0 * PI.ln() - 0.5 * v.ln();
        Ok(Self {
            v,
            beta,
            p,
            ln_k,
            w,
            j,
            j_rel: q.rel_tol.max(1e-14),
            abs_tol: q.abs_tol,
        })
    }

    pub fn v(&self) -> f64 {
        self.v
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }

    /// K ∫ s^p J(s) T(s) dw plus the analytic piece below the grid, where J
    /// and T are flat. Returns the value and the sum of absolute terms.
    fn transform<T: Fn(f64) -> f64>(&self, t: T) -> (f64, f64) {
        let n = self.w.len();
        let mut acc = NeumaierSum::new();
        let mut mag = 0.0;
        for (i, (&w, &j)) in self.w.iter().zip(&self.j).enumerate() {
            let weight = if i == 0 || i == n - 1 { 0.5 * STEP } else { STEP };
            let term = weight * (self.p * w).exp() * j * t(w.exp());
            acc.add(term);
            mag += term.abs();
        }
        let w0 = self.w[0];
        let tail = self.j[0] * t(w0.exp()) * (self.p * w0).exp() / self.p;
        acc.add(tail);
        mag += tail.abs();
        let k = self.ln_k.exp();
        (k * acc.value(), k * mag)
    }

    /// Density at a together with a bound on its rounding error.
    pub fn pdf_with_error(&self, a: f64) -> Result<(f64, f64)> {
        if !(a > 0.0) {
            return domain("density argument must be positive");
        }
        let (v, m) = self.transform(|s| (-a * s).exp());
        let pre = (-a - self.p * a.ln()).exp();
        Ok((pre * v, pre * m * (self.j_rel + 1e-15)))
    }

    pub fn pdf(&self, a: f64) -> Result<f64> {
        let (v, err) = self.pdf_with_error(a)?;
        clamp_density(v, err, self.abs_tol, a)
    }

    /// ∫ p(a) da.
    pub fn normalization(&self) -> (f64, f64) {
        let nu = 1.0 - self.p;
        self.transform(|s| psi(nu, 1.0 + s))
    }

    /// ∫ a p(a) da.
    pub fn mean(&self) -> (f64, f64) {
        let nu = 2.0 - self.p;
        self.transform(|s| psi(nu, 1.0 + s))
    }

    /// ∫ (1 - e^{-ca}) p(a) da.
    pub fn survival(&self, c: f64) -> (f64, f64) {
        let nu = 1.0 - self.p;
        self.transform(|s| psi_diff(nu, 1.0 + s, c))
    }

    pub(crate) fn relative_accuracy(&self) -> f64 {
        self.j_rel
    }
}

pub(crate) fn clamp_density(value: f64, err: f64, abs_tol: f64, a: f64) -> Result<f64> {
    if value >= 0.0 {
        Ok(value)
    } else if -value <= abs_tol + err {
        Ok(0.0)
    } else {
        Err(BdreError::Accuracy(format!(
            "density quadrature returned {value:e} at a = {a}, beyond the tolerated roundoff {:e}",
            abs_tol + err
        )))
    }
}

fn j_value(w: f64, v: f64, beta: f64, breaks: &[f64], q: &QuadratureSettings) -> f64 {
    let lead = PI * PI / (2.0 * v);
    let pw = (beta + 2.0) / 2.0;
    let f = |xi: f64| {
        if xi == 0.0 {
            return 0.0;
        }
        let (ls, lc) = ln_sinh_cosh(xi);
        let ln_den = log_add(w, 2.0 * lc);
        (lead - xi * xi / (2.0 * v) + ls + lc - pw * ln_den).exp() * (PI * xi / v).sin()
    };
    panels(f, breaks, q.tolerance_relative()).value
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn psi_finite_part_is_continuous_in_differences() {
        // Γ(ν)(b^{-ν} - c^{-ν}) → ln(c/b) as ν → 0.
        let (b, c) = (1.5, 4.0);
        let near = psi(1e-7, b) - psi(1e-7, c);
        let at = psi(0.0, b) - psi(0.0, c);
        assert!((near - at).abs() < 1e-6, "{near} {at}");
    }

    #[test]
    fn psi_diff_matches_plain_difference() {
        for nu in [0.7, -0.3, 0.0, -1.0] {
            let d = psi_diff(nu, 2.0, 0.5);
            let e = psi(nu, 2.0) - psi(nu, 2.5);
            assert!((d - e).abs() < 1e-13, "{nu}: {d} {e}");
        }
    }

    #[test]
    fn unit_mass_and_pointwise_value() {
        let k = MellinKernel::new(1.0, 0.0, &QuadratureSettings::default()).unwrap();
        let (m, _) = k.normalization();
        assert!((m - 1.0).abs() < 1e-9, "{m}");
        let p = k.pdf(1.0).unwrap();
        assert!((p - 0.2930842840420667).abs() < 1e-9, "{p}");
    }

    #[test]
    fn refuses_out_of_range_beta() {
        let q = QuadratureSettings::default();
        assert!(matches!(MellinKernel::new(1.0, -1.0, &q), Err(BdreError::Domain(_))));
        assert!(matches!(MellinKernel::new(1.0, -0.95, &q), Err(BdreError::Domain(_))));
        assert!(matches!(MellinKernel::new(0.2, 0.0, &q), Err(BdreError::Stability(_))));
    }
}
