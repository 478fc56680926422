//! Densities of 1/(2A_v^{(β)}) and their quadrature grids.

use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use super::mellin::clamp_density;
use super::{check_horizon, MellinKernel, QuadratureSettings};
use crate::error::{domain, Result};
use crate::quad::{adaptive, composite_nodes, panels, NeumaierSum, Tolerance};

/// Density of 1/(2A_v) for driftless W:
/// p_v(a) = √2 e^{π²/8v} / sqrt(π²v) a^{-1/2} ∫₀^∞ e^{-a cosh²y - y²/2v} cosh y cos(πy/2v) dy.
pub fn critical_density(v: f64, a: f64, q: &QuadratureSettings) -> Result<f64> {
    let (value, err) = critical_density_with_error(v, a, q)?;
    clamp_density(value, err, q.abs_tol, a)
}

fn critical_density_with_error(v: f64, a: f64, q: &QuadratureSettings) -> Result<(f64, f64)> {
    check_horizon(v, "Hartman-Watson evaluation unstable for small t")?;
    if !(a > 0.0) {
        return domain("density argument must be positive");
    }
    let lead = PI * PI / (8.0 * v);
    let f = |y: f64| {
        let c = y.cosh();
        (lead - a * c * c - y * y / (2.0 * v)).exp() * c * (PI * y / (2.0 * v)).cos()
    };
    let gauss = (2.0 * v * (q.log_damping() + lead)).sqrt() + 1.0;
    let damp = ((q.log_damping() + lead) / a).sqrt().max(1.0).acosh() + 1.0;
    let upper = q.y_cutoff(v, gauss.min(damp));
    // Zeros of the cosine sit at v, 3v, 5v, ...
    let mut breaks = vec![0.0];
    let mut k = 0;
    loop {
        let z = v * (2 * k + 1) as f64;
        if z >= upper {
            break;
        }
        breaks.push(z);
        k += 1;
    }
    breaks.push(upper);
    let mut refined = vec![0.0];
    for w in breaks.windows(2) {
        let pieces = (w[1] - w[0]).ceil().max(1.0) as usize;
        for j in 1..=pieces {
            refined.push(w[0] + (w[1] - w[0]) * j as f64 / pieces as f64);
        }
    }
    let o = panels(f, &refined, q.tolerance_relative());
    let pre = 2f64.sqrt() / (PI * PI * v).sqrt() / a.sqrt();
    Ok((pre * o.value, pre * (o.magnitude * 1e-15 + o.abs_err)))
}

/// Pointwise evaluator of p_{v,β}; the β = 0 case uses the single integral.
#[derive(Debug, Clone)]
pub enum InvTwoADensity {
    Critical { v: f64, q: QuadratureSettings },
    Kernel(MellinKernel),
}

impl InvTwoADensity {
    pub fn new(v: f64, beta: f64, q: &QuadratureSettings) -> Result<Self> {
        if !(beta > -1.0) {
            return domain(format!("density formula needs beta > -1, got {beta}"));
        }
        check_horizon(v, "Hartman-Watson evaluation unstable for small t")?;
        if beta == 0.0 {
            Ok(Self::Critical { v, q: *q })
        } else {
            Ok(Self::Kernel(MellinKernel::new(v, beta, q)?))
        }
    }

    pub fn v(&self) -> f64 {
        match self {
            Self::Critical { v, .. } => *v,
            Self::Kernel(k) => k.v(),
        }
    }

    pub fn beta(&self) -> f64 {
        match self {
            Self::Critical { .. } => 0.0,
            Self::Kernel(k) => k.beta(),
        }
    }

    pub fn pdf(&self, a: f64) -> Result<f64> {
        match self {
            Self::Critical { v, q } => critical_density(*v, a, q),
            Self::Kernel(k) => k.pdf(a),
        }
    }

    /// Support interval carrying all but ~1e-12 of the mass: A_v is
    /// bracketed by v·exp(2(βs + W_s)) at the extremes of a Brownian path,
    /// and the path stays within 7.1√v with that probability.
    pub fn support(&self) -> (f64, f64) {
        let v = self.v();
        let b = self.beta();
        let spread = 7.1 * v.sqrt();
        let lo = (-2.0 * (b.max(0.0) * v + spread)).exp() / (2.0 * v);
        let hi = ((2.0 * ((-b).max(0.0) * v + spread)).exp() / (2.0 * v)).min(80.0);
        (lo, hi)
    }

    pub fn grid(&self) -> Result<DensityGrid> {
        let (lo, hi) = self.support();
        let (l0, l1) = (lo.ln(), hi.ln());
        let n_panels = ((l1 - l0) / 0.25).ceil().max(4.0) as usize;
        let (t, wt) = composite_nodes(l0, l1, n_panels, 16);
        let mut abscissae = Vec::with_capacity(t.len());
        let mut weights = Vec::with_capacity(t.len());
        let mut values = Vec::with_capacity(t.len());
        for (x, w) in t.into_iter().zip(wt) {
            let a = x.exp();
            abscissae.push(a);
            weights.push(w * a);
            values.push(self.pdf(a)?);
        }
        // Envelope p(a) ≈ p(a_hi) e^{-(a - a_hi)} (a/a_hi)^{-(β+1)} above the grid.
        let p_hi = self.pdf(hi)?;
        let e = self.beta() + 1.0;
        let tol = Tolerance::default();
        let env = |x: f64| (-x).exp() * (1.0 + x / hi).powf(-e);
        let tail_mass = p_hi * adaptive(env, 0.0, 60.0, tol).value;
        let tail_mean = p_hi * adaptive(|x: f64| (hi + x) * env(x), 0.0, 60.0, tol).value;
        Ok(DensityGrid {
            v: self.v(),
            beta: self.beta(),
            abscissae,
            weights,
            values,
            a_hi: hi,
            upper_tail_mass: tail_mass,
            upper_tail_mean: tail_mean,
        })
    }
}

/// Pointwise p_{v,β}(a). Builds a kernel per call for β ≠ 0; use
/// [`InvTwoADensity`] for repeated evaluation.
pub fn density_inv_two_a(v: f64, beta: f64, a: f64, q: &QuadratureSettings) -> Result<f64> {
    InvTwoADensity::new(v, beta, q)?.pdf(a)
}

/// Density tabulated on a quadrature rule in ln a, with the upper-tail
/// envelope kept separately.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DensityGrid {
    pub v: f64,
    pub beta: f64,
    pub abscissae: Vec<f64>,
    pub weights: Vec<f64>,
    pub values: Vec<f64>,
    pub a_hi: f64,
    pub upper_tail_mass: f64,
    pub upper_tail_mean: f64,
}

impl DensityGrid {
    /// ∫ g p da for g bounded by `g_sup` above the grid.
    pub fn integrate<G: Fn(f64) -> f64>(&self, g: G, g_sup: f64) -> f64 {
        let mut s: NeumaierSum = self
            .abscissae
            .iter()
            .zip(&self.weights)
            .zip(&self.values)
            .map(|((&a, &w), &p)| w * p * g(a))
            .collect();
        s.add(g_sup * self.upper_tail_mass);
        s.value()
    }

    pub fn normalization(&self) -> f64 {
        self.integrate(|_| 1.0, 1.0)
    }

    pub fn mean(&self) -> f64 {
        self.integrate(|a| a, 0.0) + self.upper_tail_mean
    }

    /// ∫ (1 - e^{-ca}) p(a) da.
    pub fn survival(&self, c: f64) -> f64 {
        self.integrate(|a| -(-c * a).exp_m1(), 1.0)
    }
}
