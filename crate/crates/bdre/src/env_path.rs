//! Discretized environment paths S, their time changes τ and samples of the
//! exponential functional A_v^{(β)} = ∫₀ᵛ exp(2(βs + W_s)) ds.

use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{domain, BdreError, Result};
use crate::model::ModelParams;
use crate::rng::{RngStream, SeedRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvPath {
    pub dt: f64,
    /// S at times 0, dt, 2dt, ...; `values[0] == 0`.
    pub values: Vec<f64>,
    pub drift: f64,
    pub vol2: f64,
    pub seed_record: Option<SeedRecord>,
}

impl EnvPath {
    pub fn horizon(&self) -> f64 {
        self.dt * (self.values.len() - 1) as f64
    }

    pub fn last(&self) -> f64 {
        *self.values.last().expect("paths are nonempty")
    }

    /// Path built from given values, e.g. a deterministic test path.
    pub fn from_values(dt: f64, values: Vec<f64>) -> Result<Self> {
        if !(dt > 0.0) || values.is_empty() {
            return domain("path needs dt > 0 and at least one value");
        }
        Ok(Self {
            dt,
            values,
            drift: f64::NAN,
            vol2: f64::NAN,
            seed_record: None,
        })
    }

    /// CSV with columns `t,S`.
    pub fn write_csv<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        let io = |e: csv::Error| BdreError::Domain(format!("csv export failed: {e}"));
        out.write_record(["t", "S"]).map_err(io)?;
        for (k, s) in self.values.iter().enumerate() {
            out.write_record([(k as f64 * self.dt).to_string(), s.to_string()])
                .map_err(io)?;
        }
        out.flush()
            .map_err(|e| BdreError::Domain(format!("csv export failed: {e}")))
    }
}

pub(crate) fn step_count(horizon: f64, dt: f64) -> Result<usize> {
    if !(dt > 0.0) || !(horizon > 0.0) || !dt.is_finite() || !horizon.is_finite() {
        return domain("dt and horizon must be positive and finite");
    }
    if horizon < dt * (1.0 - 1e-12) {
        return domain("horizon must be at least dt");
    }
    Ok((horizon / dt + 1e-9).floor() as usize)
}

/// Brownian motion with drift on a uniform grid, started at 0.
pub fn sample_brownian_path(drift: f64, vol2: f64, horizon: f64, dt: f64, rng: &mut RngStream) -> Result<EnvPath> {
    let n = step_count(horizon, dt)?;
    let sd = (vol2 * dt).sqrt();
    let mut values = Vec::with_capacity(n + 1);
    let mut s = 0.0;
    values.push(s);
    for _ in 0..n {
        let g: f64 = if sd > 0.0 { rng.sample(StandardNormal) } else { 0.0 };
        s += drift * dt + sd * g;
        values.push(s);
    }
    Ok(EnvPath {
        dt,
        values,
        drift,
        vol2,
        seed_record: Some(rng.record()),
    })
}

/// S with dS = α dt + σ_e dW.
pub fn sample_env_path(params: &ModelParams, horizon: f64, dt: f64, rng: &mut RngStream) -> Result<EnvPath> {
    sample_brownian_path(params.alpha, params.sigma_e2, horizon, dt, rng)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeChangeGrid {
    pub dt: f64,
    pub tau_values: Vec<f64>,
}

impl TimeChangeGrid {
    pub fn last(&self) -> f64 {
        *self.tau_values.last().expect("grids are nonempty")
    }
}

/// τ(t) = ∫₀ᵗ σ_b² e^{-S_s} ds by the trapezoidal rule.
pub fn time_change(path: &EnvPath, sigma_b2: f64) -> TimeChangeGrid {
    let mut tau_values = Vec::with_capacity(path.values.len());
    let mut acc = 0.0;
    tau_values.push(0.0);
    let mut prev = (-path.values[0]).exp();
    for &s in &path.values[1..] {
        let cur = (-s).exp();
        acc += 0.5 * path.dt * (prev + cur);
        prev = cur;
        tau_values.push(sigma_b2 * acc);
    }
    TimeChangeGrid {
        dt: path.dt,
        tau_values,
    }
}

/// Allocation-free variant: samples a drifted Brownian path and returns
/// (S at the end, trapezoidal ∫ e^{-S}).
pub(crate) fn integrate_exp_neg(drift: f64, vol2: f64, steps: usize, dt: f64, rng: &mut RngStream) -> (f64, f64) {
    let sd = (vol2 * dt).sqrt();
    let mut s = 0.0f64;
    let mut prev = 1.0f64;
    let mut acc = 0.0;
    for _ in 0..steps {
        let g: f64 = rng.sample(StandardNormal);
        s += drift * dt + sd * g;
        let cur = (-s).exp();
        acc += prev + cur;
        prev = cur;
    }
    (s, 0.5 * dt * acc)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExpFunctionalSample {
    pub beta: f64,
    pub v: f64,
    pub value: f64,
}

/// Trapezoidal A_v^{(β)} along a sampled standard Brownian path.
pub fn sample_exp_functional(beta: f64, v: f64, dt: f64, rng: &mut RngStream) -> Result<ExpFunctionalSample> {
    let n = step_count(v, dt)?;
    let sd = dt.sqrt();
    let mut w = 0.0f64;
    let mut prev = 1.0f64;
    let mut acc = 0.0;
    for k in 1..=n {
        let g: f64 = rng.sample(StandardNormal);
        w += sd * g;
        let cur = (2.0 * (beta * k as f64 * dt + w)).exp();
        acc += prev + cur;
        prev = cur;
    }
    Ok(ExpFunctionalSample {
        beta,
        v: n as f64 * dt,
        value: 0.5 * dt * acc,
    })
}

/// A^{(β)} along a given driver `w` sampled at 0, dt, 2dt, ...
pub fn exp_functional_of_path(beta: f64, dt: f64, w: &[f64]) -> f64 {
    let mut acc = 0.0;
    for k in 1..w.len() {
        let a = (2.0 * (beta * (k - 1) as f64 * dt + w[k - 1])).exp();
        let b = (2.0 * (beta * k as f64 * dt + w[k])).exp();
        acc += a + b;
    }
    0.5 * dt * acc
}
