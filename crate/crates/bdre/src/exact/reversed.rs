//! Functionals of 1/(2A_v^{(β)}) evaluated from the joint density of
//! (A_v, W_v) with the ρ = e^{W_v} variable reversed. With μ = -β,
//! c = cosh y and M = 1 + 2ρc + ρ²,
//!
//! E[g(1/(2A))] = e^{-μ²v/2}/sqrt(2π³v) ∫₀^∞ e^{π²/2v - y²/2v} sinh y sin(πy/v) H(cosh y) dy,
//! H(c) = 2 ∫₀^∞ ρ^μ h(ρ) dρ,
//!
//! where h depends on g. For ρ > 1 the leading terms of h in ε = 1/ρ are
//! subtracted; they integrate to zero against the y-kernel and would
//! otherwise make H diverge or cancel badly for large μ.
//!
//! Unlike the Mellin route this works for β ≤ -1 as well.

use std::f64::consts::PI;

use super::{check_horizon, ln_sinh_cosh, QuadratureSettings};
use crate::error::{domain, Result};
use crate::quad::{adaptive, panels, periodic_breaks, QuadOutcome, Tolerance};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Functional {
    /// g(a) = 1 - e^{-ca}.
    Survival { c: f64 },
    /// g(a) = a.
    Mean,
    /// g(a) = 1.
    Normalization,
}

/// Number of subtracted ε-terms: every k with k ≤ μ - 1/2.
fn subtracted_terms(mu: f64) -> usize {
    if mu >= 0.5 {
        (mu - 0.5).floor() as usize + 1
    } else {
        0
    }
}

/// Coefficients of 1/(A + Bε + ε²) = Σ d_k ε^k.
fn inverse_series(a: f64, b: f64, k: usize) -> Vec<f64> {
    let mut d = Vec::with_capacity(k.max(2));
    d.push(1.0 / a);
    d.push(-b / (a * a));
    for i in 2..k {
        let next = -(b * d[i - 1] + d[i - 2]) / a;
        d.push(next);
    }
    d.truncate(k);
    d
}

/// 1/D - Σ_{k<K} d_k ε^k for D = A + Bε + ε², in closed form.
fn inverse_remainder(a: f64, b: f64, eps: f64, d: &[f64]) -> f64 {
    let den = a + eps * (b + eps);
    let k = d.len();
    if k == 0 {
        return 1.0 / den;
    }
    let dk1 = d[k - 1];
    let dk2 = if k >= 2 { d[k - 2] } else { 0.0 };
    -eps.powi(k as i32) * ((b * dk1 + dk2) + eps * dk1) / den
}

struct Inner {
    mu: f64,
    c: f64,
    kind: Functional,
    k: usize,
    d1: Vec<f64>,
    d2: Vec<f64>,
}

impl Inner {
    fn new(mu: f64, c: f64, kind: Functional) -> Self {
        let k = subtracted_terms(mu);
        let d1 = inverse_series(1.0, 2.0 * c, k);
        let d2 = match kind {
            Functional::Survival { c: kz } => inverse_series(1.0 + kz, 2.0 * c, k),
            _ => Vec::new(),
        };
        Self { mu, c, kind, k, d1, d2 }
    }

    /// ρ^μ h(ρ) for ρ ≤ 1.
    fn near(&self, r: f64) -> f64 {
        let m = 1.0 + r * (2.0 * self.c + r);
        let h = match self.kind {
            Functional::Survival { c: kz } => {
                let x = kz * r * r;
                x / (m * (m + x))
            }
            Functional::Mean => r * r / (m * m),
            Functional::Normalization => 1.0 / m,
        };
        r.powf(self.mu) * h
    }

    /// ρ^μ (h(ρ) - subtracted terms) for ρ ≥ 1, in terms of ε = 1/ρ.
    fn far(&self, eps: f64) -> f64 {
        let b = 2.0 * self.c;
        let rem = match self.kind {
            Functional::Survival { c: kz } => {
                inverse_remainder(1.0, b, eps, &self.d1) - inverse_remainder(1.0 + kz, b, eps, &self.d2)
            }
            Functional::Normalization => inverse_remainder(1.0, b, eps, &self.d1),
            Functional::Mean => {
                let d = 1.0 + eps * (b + eps);
                if self.k == 0 {
                    1.0 / (d * d)
                } else {
                    -eps * (b + eps) * (d + 1.0) / (d * d)
                }
            }
        };
        eps.powf(2.0 - self.mu) * rem
    }

    fn h_integral(&self, tol: Tolerance) -> QuadOutcome {
        let low_order = match self.kind {
            Functional::Normalization => 0.0,
            _ => 2.0,
        };
        let w_min = -80.0 / (self.mu + 1.0 + low_order);
        let decay = 1.0 + self.k as f64 - self.mu;
        let w_knee = (2.0 * self.c + 1.0).ln();
        let w_max = w_knee + 80.0 / decay;
        let lo = adaptive(
            |w: f64| {
                let r = w.exp();
                self.near(r) * r
            },
            w_min,
            0.0,
            tol,
        );
        let hi = panels(|w: f64| self.far((-w).exp()) * w.exp(), &[0.0, w_knee, w_max], tol);
        QuadOutcome {
            value: 2.0 * (lo.value + hi.value),
            abs_err: 2.0 * (lo.abs_err + hi.abs_err),
            magnitude: 2.0 * (lo.magnitude + hi.magnitude),
            intervals: lo.intervals + hi.intervals,
            converged: lo.converged && hi.converged,
        }
    }
}

/// Value of E[g(1/(2A_v^{(β)}))] and the sum of absolute panel values.
pub fn reversed_functional(v: f64, beta: f64, kind: Functional, q: &QuadratureSettings) -> Result<(f64, f64)> {
    check_horizon(v, "Hartman-Watson evaluation unstable for small t")?;
    let mu = -beta;
    let ok = match kind {
        Functional::Survival { c } => {
            if !(c >= 0.0) {
                return domain("survival functional needs a nonnegative argument");
            }
            mu > -3.0 && mu < 4.5
        }
        Functional::Normalization => mu > -1.0 && mu < 4.5,
        Functional::Mean => mu > -3.0 && mu < 1.5,
    };
    if !ok {
        return domain(format!(
            "beta = {beta} outside the range of the joint-density route for {kind:?}"
        ));
    }
    let inner_tol = Tolerance {
        abs: f64::MIN_POSITIVE,
        rel: (q.rel_tol * 0.1).max(1e-14),
        max_intervals: q.max_subdivisions,
    };
    let lead = PI * PI / (2.0 * v) - mu * mu * v / 2.0;
    let f = |y: f64| {
        if y == 0.0 {
            return 0.0;
        }
        let (ls, _) = ln_sinh_cosh(y);
        let h = Inner::new(mu, y.cosh(), kind).h_integral(inner_tol).value;
        (lead - y * y / (2.0 * v) + ls).exp() * (PI * y / v).sin() * h
    };
    let y_max = q.y_cutoff(v, mu.max(0.0) * v + (2.0 * v * q.log_damping()).sqrt() + 2.0 * v);
    let breaks = periodic_breaks(v, y_max, 1.0);
    let o = panels(f, &breaks, q.tolerance_relative());
    let norm = (2.0 * PI.powi(3) * v).sqrt();
    Ok((o.value / norm, o.magnitude / norm))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn remainder_matches_direct_evaluation() {
        let (a, b, e) = (1.3, 5.0, 0.01);
        for k in 0..4 {
            let d = inverse_series(a, b, k);
            let direct =
                1.0 / (a + b * e + e * e) - d.iter().enumerate().map(|(i, x)| x * e.powi(i as i32)).sum::<f64>();
            let r = inverse_remainder(a, b, e, &d);
            assert!((r - direct).abs() < 1e-10 * direct.abs().max(1e-6), "{k}: {r} {direct}");
        }
    }

    #[test]
    fn mass_is_one_for_negative_beta() {
        let q = QuadratureSettings::default();
        for beta in [-2.0, -1.0, -0.5, 0.5] {
            let (m, _) = reversed_functional(1.0, beta, Functional::Normalization, &q).unwrap();
            assert!((m - 1.0).abs() < 1e-8, "beta {beta}: {m}");
        }
    }

    #[test]
    fn supercritical_survival_values() {
        let q = QuadratureSettings::default();
        // α = 0.5, σ_e² = σ_b² = 1, z = 1: β = -1, v = t/4.
        for (t, want) in [(2.0, 0.71879473), (10.0, 0.51787826), (80.0, 0.50000020)] {
            let (s, _) = reversed_functional(t / 4.0, -1.0, Functional::Survival { c: 1.0 }, &q).unwrap();
            assert!((s - want).abs() < 2e-7, "t {t}: {s}");
        }
    }
}
