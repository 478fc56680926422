//! Limiting constants ϑ(z) of the normalized survival probability, their
//! derivatives and the drift σ_e² zϑ'(z)/ϑ(z) of the conditioned environment.

use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;

use crate::error::{domain, Result};
use crate::exact::{phi_beta, QuadratureSettings};
use crate::model::{classify_regime, decay_profile, ModelParams, Regime};
use crate::quad::{composite_nodes, NeumaierSum};

const A_MIN: f64 = 1e-14;
const A_MAX: f64 = 60.0;
const PANELS: usize = 90;
const ORDER: usize = 20;
const TABLE_LO: f64 = -30.0;
const TABLE_HI: f64 = 23.0;
const TABLE_STEP: f64 = 0.01;

/// φ_β tabulated on a log grid, with the a → 0 behaviour
/// φ_β(a) ≈ c_φ a^{-β/2-1} (½√π ln(1/a) + k0) used below the grid.
#[derive(Debug, Clone)]
struct WeakProfile {
    kappa: f64,
    nodes: Vec<f64>,
    /// Quadrature weight times φ_β at each node (measure da).
    weighted_phi: Vec<f64>,
    /// ∫₀^{A_MIN} a φ_β(a) da.
    small_a_moment: f64,
    table: Table,
}

#[derive(Debug, Clone, Default)]
struct Table {
    ln_theta: Vec<f64>,
    g: Vec<f64>,
}

impl WeakProfile {
    fn build(beta: f64, kappa: f64) -> Result<Self> {
        let q = QuadratureSettings::default();
        let (t, w) = composite_nodes(A_MIN.ln(), A_MAX.ln(), PANELS, ORDER);
        let phis: Vec<Result<f64>> = t.par_iter().map(|&x| phi_beta(beta, x.exp(), &q)).collect();
        let mut nodes = Vec::with_capacity(t.len());
        let mut weighted_phi = Vec::with_capacity(t.len());
        for ((x, w), p) in t.iter().zip(&w).zip(phis) {
            let a = x.exp();
            nodes.push(a);
            weighted_phi.push(w * a * p?);
        }
        let c_phi = gamma((beta + 2.0) / 2.0) / (2f64.sqrt() * PI * beta);
        let m = A_MIN;
        let lead = c_phi * m.powf(-beta / 2.0 - 1.0) * (-m).exp();
        let k0 = phi_beta(beta, m, &q)? / lead - 0.5 * PI.sqrt() * (1.0 / m).ln();
        let p1 = 1.0 - beta / 2.0;
        let small_a_moment = c_phi * m.powf(p1) * (0.5 * PI.sqrt() * ((1.0 / m).ln() / p1 + 1.0 / (p1 * p1)) + k0 / p1);
        let mut prof = Self {
            kappa,
            nodes,
            weighted_phi,
            small_a_moment,
            table: Table::default(),
        };
        let n = ((TABLE_HI - TABLE_LO) / TABLE_STEP).round() as usize;
        let (ln_theta, g): (Vec<f64>, Vec<f64>) = (0..=n)
            .into_par_iter()
            .map(|i| {
                let z = (TABLE_LO + i as f64 * TABLE_STEP).exp();
                let (th, thp) = prof.integrals(z);
                (th.ln(), z * thp / th)
            })
            .unzip();
        prof.table = Table { ln_theta, g };
        Ok(prof)
    }

    /// ∫ f(za) φ(a) da and ∫ f'(za) a φ(a) da, without the 8/σ_e³ factor.
    fn integrals(&self, z: f64) -> (f64, f64) {
        let k = self.kappa;
        let mut th = NeumaierSum::new();
        let mut thp = NeumaierSum::new();
        for (&a, &wp) in self.nodes.iter().zip(&self.weighted_phi) {
            let x = k * z * a;
            th.add(-(-x).exp_m1() * wp);
            thp.add(k * (-x).exp() * a * wp);
        }
        // f(za) ≈ κza below the grid.
        th.add(k * z * self.small_a_moment);
        thp.add(k * self.small_a_moment);
        (th.value(), thp.value())
    }

    /// (ln ∫fφ, z∂ ln ∫fφ/∂z) by Hermite interpolation in ln z.
    fn table_lookup(&self, z: f64) -> Option<(f64, f64)> {
        let x = z.ln();
        if !(x > TABLE_LO && x < TABLE_HI) {
            return None;
        }
        let u = (x - TABLE_LO) / TABLE_STEP;
        let i = (u.floor() as usize).min(self.table.g.len() - 2);
        let s = u - i as f64;
        let (y0, y1) = (self.table.ln_theta[i], self.table.ln_theta[i + 1]);
        let (d0, d1) = (self.table.g[i] * TABLE_STEP, self.table.g[i + 1] * TABLE_STEP);
        let s2 = s * s;
        let s3 = s2 * s;
        let y =
            (2.0 * s3 - 3.0 * s2 + 1.0) * y0 + (s3 - 2.0 * s2 + s) * d0 + (-2.0 * s3 + 3.0 * s2) * y1 + (s3 - s2) * d1;
        let g = self.table.g[i] * (1.0 - s) + self.table.g[i + 1] * s;
        Some((y, g))
    }
}

/// ϑ for one parameter set. Construction is the only expensive step
/// (weak regime: φ_β on ~2000 nodes); afterwards the evaluator is immutable.
#[derive(Debug, Clone)]
pub struct ThetaEvaluator {
    params: ModelParams,
    regime: Regime,
    lambda: f64,
    weak: Option<WeakProfile>,
}

impl ThetaEvaluator {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        let regime = classify_regime(params)?;
        let lambda = decay_profile(params)?.lambda;
        let weak = match regime {
            Regime::WeaklySubcritical => Some(WeakProfile::build(params.beta(), params.kappa())?),
            _ => None,
        };
        Ok(Self {
            params: *params,
            regime,
            lambda,
            weak,
        })
    }

    pub fn params(&self) -> &ModelParams {
        &self.params
    }

    pub fn regime(&self) -> Regime {
        self.regime
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    fn weak_factor(&self) -> f64 {
        8.0 / self.params.sigma_e2.powf(1.5)
    }

    fn check_z(z: f64) -> Result<()> {
        if !(z >= 0.0) || z.is_nan() {
            return domain(format!("z must be nonnegative, got {z}"));
        }
        Ok(())
    }

    pub fn vartheta(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        if z == 0.0 {
            return Ok(0.0);
        }
        let p = &self.params;
        let (k, se) = (p.kappa(), p.sigma_e2.sqrt());
        Ok(match self.regime {
            Regime::Supercritical => -(p.beta() * (k * z).ln_1p()).exp_m1(),
            Regime::Critical => (2.0 / PI).sqrt() / se * (k * z).ln_1p(),
            Regime::WeaklySubcritical => self.weak_factor() * self.weak.as_ref().expect("weak profile").integrals(z).0,
            Regime::IntermediatelySubcritical => z * (2.0 / PI).sqrt() * se / p.sigma_b2,
            Regime::StronglySubcritical => 2.0 * z * (-p.alpha - p.sigma_e2) / p.sigma_b2,
        })
    }

    pub fn vartheta_prime(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        let p = &self.params;
        let (k, se) = (p.kappa(), p.sigma_e2.sqrt());
        Ok(match self.regime {
            Regime::Supercritical => -p.beta() * k * ((p.beta() - 1.0) * (k * z).ln_1p()).exp(),
            Regime::Critical => (2.0 / PI).sqrt() / se * k / (1.0 + k * z),
            Regime::WeaklySubcritical => self.weak_factor() * self.weak.as_ref().expect("weak profile").integrals(z).1,
            Regime::IntermediatelySubcritical => (2.0 / PI).sqrt() * se / p.sigma_b2,
            Regime::StronglySubcritical => 2.0 * (-p.alpha - p.sigma_e2) / p.sigma_b2,
        })
    }

    /// g(z) = zϑ'(z)/ϑ(z), with g(0) = 1.
    pub fn log_derivative(&self, z: f64) -> Result<f64> {
        Self::check_z(z)?;
        if z == 0.0 {
            return Ok(1.0);
        }
        let p = &self.params;
        let x = p.kappa() * z;
        Ok(match self.regime {
            Regime::Supercritical => {
                let b = p.beta();
                // -β x (1+x)^{β-1} / (1 - (1+x)^β)
                -b * x * ((b - 1.0) * x.ln_1p()).exp() / -(b * x.ln_1p()).exp_m1()
            }
            Regime::Critical => x / ((1.0 + x) * x.ln_1p()),
            Regime::WeaklySubcritical => {
                let (th, thp) = self.weak.as_ref().expect("weak profile").integrals(z);
                z * thp / th
            }
            Regime::IntermediatelySubcritical | Regime::StronglySubcritical => 1.0,
        })
    }

    /// Extra environment drift σ_e² zϑ'/ϑ of the conditioned process.
    pub fn hdrift(&self, z: f64) -> Result<f64> {
        Ok(self.params.sigma_e2 * self.log_derivative(z)?)
    }

    /// Interpolated g(z) for inner simulation loops; exact outside the weak regime.
    pub fn log_derivative_fast(&self, z: f64) -> f64 {
        let z = z.max(0.0);
        if let Some(w) = &self.weak {
            if let Some((_, g)) = w.table_lookup(z) {
                return g;
            }
        }
        self.log_derivative(z).expect("z is nonnegative")
    }

    /// Interpolated ϑ(z); exact outside the weak regime.
    pub fn vartheta_fast(&self, z: f64) -> f64 {
        let z = z.max(0.0);
        if let Some(w) = &self.weak {
            if let Some((ln_t, _)) = w.table_lookup(z) {
                return self.weak_factor() * ln_t.exp();
            }
        }
        self.vartheta(z).expect("z is nonnegative")
    }
}

pub fn vartheta(ev: &ThetaEvaluator, z: f64) -> Result<f64> {
    ev.vartheta(z)
}

pub fn vartheta_prime(ev: &ThetaEvaluator, z: f64) -> Result<f64> {
    ev.vartheta_prime(z)
}

pub fn hdrift(ev: &ThetaEvaluator, z: f64) -> Result<f64> {
    ev.hdrift(z)
}

/// Limits of ϑ(z)/(z^{β/2} ln z) and ϑ'(z)/(z^{β/2-1} ln z) as z → ∞.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct WeakGrowth {
    pub c_theta: f64,
    pub c_theta_prime: f64,
}

pub fn weak_growth_constants(ev: &ThetaEvaluator) -> Result<WeakGrowth> {
    if ev.regime != Regime::WeaklySubcritical {
        return domain(format!(
            "growth constants are defined in the weakly subcritical regime only, not {}",
            ev.regime
        ));
    }
    let p = &ev.params;
    let b = p.beta();
    let c_theta = 2.0 / b * (2.0 * PI).sqrt() / (p.sigma_e2.powf(1.5) * (PI * b / 2.0).sin()) * p.kappa().powf(b / 2.0);
    Ok(WeakGrowth {
        c_theta,
        c_theta_prime: b / 2.0 * c_theta,
    })
}
