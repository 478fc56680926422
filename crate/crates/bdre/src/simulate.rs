//! Monte Carlo engines: full-truncation Euler for the BDRE (with
//! immigration), the time-change construction, the h-transformed
//! (conditioned) process, reweighted estimation, the scale function of the
//! conditioned diffusion and its stationary law in the strong regime.

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::asymptotics::ThetaEvaluator;
use crate::env_path::integrate_exp_neg;
use crate::error::{domain, BdreError, Result};
use crate::feller::feller_transition;
use crate::model::ModelParams;
use crate::quad::{adaptive, NeumaierSum, Tolerance};
use crate::rng::{map_replicas, RngStream, SeedRecord, StreamFamily};
use crate::stats::{bin_index, wald_test, ChiSquareReport, McEstimate};

/// Floor for ϑ'/ϑ and hdrift evaluations of the conditioned process.
pub const Z_FLOOR: f64 = 1e-12;

/// Replica counts below this make `mc_survival` refuse.
pub const MIN_SURVIVAL_REPLICAS: usize = 100;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub z: Vec<f64>,
    pub s: Vec<f64>,
    pub absorbed_at: Option<f64>,
    pub seed_record: SeedRecord,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySet {
    /// Step actually used: horizon / ceil(horizon / requested dt).
    pub dt: f64,
    pub horizon: f64,
    pub times: Vec<f64>,
    pub paths: Vec<Trajectory>,
}

impl TrajectorySet {
    pub fn len(&self) -> usize {
        self.paths.len()
    }

    pub fn is_empty(&self) -> bool {
        self.paths.is_empty()
    }

    pub fn final_z(&self) -> Vec<f64> {
        self.paths.iter().map(|p| *p.z.last().expect("nonempty path")).collect()
    }

    pub fn final_s(&self) -> Vec<f64> {
        self.paths.iter().map(|p| *p.s.last().expect("nonempty path")).collect()
    }

    pub fn absorbed_fraction(&self) -> f64 {
        let k = self.paths.iter().filter(|p| p.absorbed_at.is_some()).count();
        k as f64 / self.paths.len().max(1) as f64
    }
}

/// Terminal values only, for runs too large to keep whole paths.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Marginals {
    pub horizon: f64,
    pub z: Vec<f64>,
    pub s: Vec<f64>,
}

impl Marginals {
    fn from_pairs(horizon: f64, pairs: Vec<(f64, f64)>) -> Self {
        let (z, s) = pairs.into_iter().unzip();
        Self { horizon, z, s }
    }

    pub fn survival(&self) -> Result<McEstimate> {
        let alive = self.z.iter().filter(|&&z| z > 0.0).count();
        McEstimate::from_counts(alive, self.z.len())
    }
}

/// Accepts regular parameters and the noiseless test hook.
fn check_params(params: &ModelParams) -> Result<()> {
    if params.sigma_b2 == 0.0
        && params.sigma_e2 == 0.0
        && params.alpha.is_finite()
        && params.theta >= 0.0
        && params.theta.is_finite()
    {
        return Ok(());
    }
    params.validate()
}

fn check_z0(z0: f64) -> Result<()> {
    if !(z0 >= 0.0) || !z0.is_finite() {
        return domain(format!("z0 must be finite and nonnegative, got {z0}"));
    }
    Ok(())
}

/// (steps, step) covering the horizon exactly.
pub(crate) fn grid(horizon: f64, dt: f64) -> Result<(usize, f64)> {
    if !(horizon > 0.0) || !horizon.is_finite() || !(dt > 0.0) || !dt.is_finite() {
        return domain("horizon and dt must be positive and finite");
    }
    if dt >= horizon {
        return domain(format!("dt = {dt} must be smaller than the horizon {horizon}"));
    }
    let n = (horizon / dt - 1e-9).ceil().max(1.0) as usize;
    Ok((n, horizon / n as f64))
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return domain("at least one replica is required");
    }
    Ok(())
}

struct Recorder {
    keep: bool,
    z: Vec<f64>,
    s: Vec<f64>,
}

impl Recorder {
    fn new(keep: bool, steps: usize) -> Self {
        let cap = if keep { steps + 1 } else { 0 };
        Self {
            keep,
            z: Vec::with_capacity(cap),
            s: Vec::with_capacity(cap),
        }
    }

    fn push(&mut self, z: f64, s: f64) {
        if self.keep {
            self.z.push(z);
            self.s.push(s);
        }
    }
}

struct PathOutcome {
    z_end: f64,
    s_end: f64,
    absorbed_at: Option<f64>,
    rec: Recorder,
    seed_record: SeedRecord,
}

fn euler_path(p: &ModelParams, z0: f64, steps: usize, h: f64, mut rng: RngStream, keep: bool) -> PathOutcome {
    let (se, sqh) = (p.sigma_e2.sqrt(), h.sqrt());
    let absorbing = p.theta == 0.0;
    let mut rec = Recorder::new(keep, steps);
    let (mut z, mut s) = (z0, 0.0);
    let mut absorbed_at = if absorbing && z0 == 0.0 { Some(0.0) } else { None };
    rec.push(z, s);
    for k in 1..=steps {
        let ge: f64 = rng.sample(StandardNormal);
        let gb: f64 = rng.sample(StandardNormal);
        let ds = p.alpha * h + se * sqh * ge;
        s += ds;
        if absorbed_at.is_none() {
            let zp = z.max(0.0);
            z += (0.5 * p.sigma_e2 * zp + p.theta) * h + zp * ds + (p.sigma_b2 * zp * h).sqrt() * gb;
            if z <= 0.0 {
                z = 0.0;
                if absorbing {
                    absorbed_at = Some(k as f64 * h);
                }
            }
        }
        rec.push(z, s);
    }
    PathOutcome {
        z_end: z,
        s_end: s,
        absorbed_at,
        seed_record: rng.record(),
        rec,
    }
}

fn time_change_path(
    p: &ModelParams,
    z0: f64,
    steps: usize,
    h: f64,
    fam: &StreamFamily,
    i: u64,
    keep: bool,
) -> PathOutcome {
    let mut env = fam.child(1).stream(i);
    let mut branching = fam.child(2).stream(i);
    let (se, sqh) = (p.sigma_e2.sqrt(), h.sqrt());
    let b = if p.sigma_b2 > 0.0 { p.theta / p.sigma_b2 } else { 0.0 };
    let absorbing = p.theta == 0.0;
    let mut rec = Recorder::new(keep, steps);
    let (mut f, mut s) = (z0, 0.0f64);
    let mut absorbed_at = if absorbing && z0 == 0.0 { Some(0.0) } else { None };
    rec.push(f, s);
    let mut prev = 1.0;
    for k in 1..=steps {
        let g: f64 = env.sample(StandardNormal);
        s += p.alpha * h + se * sqh * g;
        let cur = (-s).exp();
        let dtau = p.sigma_b2 * 0.5 * h * (prev + cur);
        prev = cur;
        if absorbed_at.is_none() {
            f = feller_transition(f, b, dtau, &mut branching);
            if absorbing && f == 0.0 {
                absorbed_at = Some(k as f64 * h);
            }
        }
        rec.push(f * s.exp(), s);
    }
    PathOutcome {
        z_end: f * s.exp(),
        s_end: s,
        absorbed_at,
        seed_record: env.record(),
        rec,
    }
}

fn assemble(horizon: f64, steps: usize, h: f64, outs: Vec<PathOutcome>) -> TrajectorySet {
    TrajectorySet {
        dt: h,
        horizon,
        times: (0..=steps).map(|k| k as f64 * h).collect(),
        paths: outs
            .into_iter()
            .map(|o| Trajectory {
                z: o.rec.z,
                s: o.rec.s,
                absorbed_at: o.absorbed_at,
                seed_record: o.seed_record,
            })
            .collect(),
    }
}

/// Full-truncation Euler-Maruyama for
/// dZ = (σ_e²Z/2 + θ)dt + Z dS + √(σ_b² Z) dW_b, dS = α dt + σ_e dW_e,
/// with the same ΔS entering both equations. Without immigration a step
/// that lands at or below zero absorbs the path. Path `i` uses stream `i`.
pub fn simulate_bdre(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<TrajectorySet> {
    check_params(params)?;
    check_z0(z0)?;
    check_n(n)?;
    let (steps, h) = grid(horizon, dt)?;
    let outs = map_replicas(n, |i| euler_path(params, z0, steps, h, family.stream(i), true));
    Ok(assemble(horizon, steps, h, outs))
}

/// Terminal values of [`simulate_bdre`]; identical draws, no path storage.
pub fn bdre_marginals(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<Marginals> {
    check_params(params)?;
    check_z0(z0)?;
    check_n(n)?;
    let (steps, h) = grid(horizon, dt)?;
    let pairs = map_replicas(n, |i| {
        let o = euler_path(params, z0, steps, h, family.stream(i), false);
        (o.z_end, o.s_end)
    });
    Ok(Marginals::from_pairs(horizon, pairs))
}

/// Z_t = F(τ(t)) e^{S_t} with τ(t) = ∫₀ᵗ σ_b² e^{-S} ds (trapezoidal) and F
/// the Feller diffusion dF = θ/σ_b² dτ + √F dW, sampled by exact
/// transitions between consecutive τ grid values. S and F use independent
/// streams (children 1 and 2 of `family`).
pub fn simulate_via_time_change(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<TrajectorySet> {
    check_params(params)?;
    check_z0(z0)?;
    check_n(n)?;
    if params.sigma_b2 == 0.0 && params.theta > 0.0 {
        return domain("the time-change construction needs sigma_b2 > 0 when theta > 0");
    }
    let (steps, h) = grid(horizon, dt)?;
    let outs = map_replicas(n, |i| time_change_path(params, z0, steps, h, family, i, true));
    Ok(assemble(horizon, steps, h, outs))
}

/// Terminal values of the time-change construction. Only τ(horizon) is
/// needed, so F is drawn with one exact transition; the draws differ from
/// [`simulate_via_time_change`] but the law is the same.
pub fn time_change_marginals(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<Marginals> {
    check_params(params)?;
    check_z0(z0)?;
    check_n(n)?;
    if params.sigma_b2 == 0.0 && params.theta > 0.0 {
        return domain("time-change marginals need sigma_b2 > 0 when theta > 0");
    }
    let (steps, h) = grid(horizon, dt)?;
    let b = if params.sigma_b2 > 0.0 {
        params.theta / params.sigma_b2
    } else {
        0.0
    };
    let pairs = map_replicas(n, |i| {
        let mut env = family.child(1).stream(i);
        let (s, integral) = integrate_exp_neg(params.alpha, params.sigma_e2, steps, h, &mut env);
        let mut branching = family.child(2).stream(i);
        let f = feller_transition(z0, b, params.sigma_b2 * integral, &mut branching);
        (f * s.exp(), s)
    });
    Ok(Marginals::from_pairs(horizon, pairs))
}

/// P(Z_t > 0) by the time-change construction on the default grid: given
/// the environment, F(τ(t)) > 0 iff a Poisson(2z₀/τ(t)) count is positive.
pub fn mc_survival(params: &ModelParams, z0: f64, t: f64, n: usize, family: &StreamFamily) -> Result<McEstimate> {
    mc_survival_with_dt(params, z0, t, crate::model::default_dt(params), n, family)
}

pub fn mc_survival_with_dt(
    params: &ModelParams,
    z0: f64,
    t: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<McEstimate> {
    params.validate()?;
    params.require_no_immigration("mc_survival")?;
    check_z0(z0)?;
    if n < MIN_SURVIVAL_REPLICAS {
        return domain(format!(
            "mc_survival needs at least {MIN_SURVIVAL_REPLICAS} replicas, got {n}"
        ));
    }
    let (steps, h) = grid(t, dt)?;
    if z0 == 0.0 {
        return McEstimate::from_counts(0, n);
    }
    let alive = map_replicas(n, |i| {
        let mut r = family.stream(i);
        let (_, integral) = integrate_exp_neg(params.alpha, params.sigma_e2, steps, h, &mut r);
        let tau = params.sigma_b2 * integral;
        let p_alive = -(-2.0 * z0 / tau).exp_m1();
        r.random::<f64>() < p_alive
    });
    McEstimate::from_counts(alive.iter().filter(|&&a| a).count(), n)
}

/// Drift terms of the conditioned pair at z: the Z̄ equation carries
/// σ_b² g(z) + σ_e² z/2 (plus Z̄ dS̄), the S̄ equation α + σ_e² g(z), where
/// g = zϑ'/ϑ. In the strong and intermediate regimes g ≡ 1.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ConditionedDrift {
    pub z_drift: f64,
    pub s_drift: f64,
}

pub fn conditioned_drift(ev: &ThetaEvaluator, z: f64) -> ConditionedDrift {
    let p = ev.params();
    let zf = z.max(Z_FLOOR);
    let g = ev.log_derivative_fast(zf);
    ConditionedDrift {
        z_drift: p.sigma_b2 * g + 0.5 * p.sigma_e2 * z.max(0.0),
        s_drift: p.alpha + p.sigma_e2 * g,
    }
}

fn check_conditioning(params: &ModelParams, z0: f64, ev: &ThetaEvaluator) -> Result<()> {
    params.validate()?;
    params.require_no_immigration("conditioning on survival")?;
    if ev.params() != params {
        return domain("the ThetaEvaluator was built for different parameters");
    }
    if !(z0 > 0.0) || !z0.is_finite() {
        return domain(format!("conditioning needs z0 > 0 (vartheta(0) = 0), got {z0}"));
    }
    Ok(())
}

fn conditioned_step(ev: &ThetaEvaluator, z: f64, h: f64, rng: &mut RngStream) -> f64 {
    let p = ev.params();
    let ge: f64 = rng.sample(StandardNormal);
    let gb: f64 = rng.sample(StandardNormal);
    let d = conditioned_drift(ev, z);
    let ds = d.s_drift * h + p.sigma_e2.sqrt() * h.sqrt() * ge;
    let next = z + d.z_drift * h + z * ds + (p.sigma_b2 * z * h).sqrt() * gb;
    next.abs().max(Z_FLOOR)
}

fn conditioned_path(ev: &ThetaEvaluator, z0: f64, steps: usize, h: f64, mut rng: RngStream, keep: bool) -> PathOutcome {
    let p = *ev.params();
    let (se, sqh) = (p.sigma_e2.sqrt(), h.sqrt());
    let mut rec = Recorder::new(keep, steps);
    let (mut z, mut s) = (z0, 0.0);
    rec.push(z, s);
    for _ in 0..steps {
        let ge: f64 = rng.sample(StandardNormal);
        let gb: f64 = rng.sample(StandardNormal);
        let d = conditioned_drift(ev, z);
        let ds = d.s_drift * h + se * sqh * ge;
        s += ds;
        z += d.z_drift * h + z * ds + (p.sigma_b2 * z * h).sqrt() * gb;
        // Reflect at the boundary, which the conditioned process never reaches.
        z = z.abs().max(Z_FLOOR);
        rec.push(z, s);
    }
    PathOutcome {
        z_end: z,
        s_end: s,
        absorbed_at: None,
        seed_record: rng.record(),
        rec,
    }
}

/// Euler-Maruyama of the h-transformed pair (Z̄, S̄), see [`conditioned_drift`].
pub fn simulate_conditioned(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
    ev: &ThetaEvaluator,
) -> Result<TrajectorySet> {
    check_conditioning(params, z0, ev)?;
    check_n(n)?;
    let (steps, h) = grid(horizon, dt)?;
    let outs = map_replicas(n, |i| conditioned_path(ev, z0, steps, h, family.stream(i), true));
    Ok(assemble(horizon, steps, h, outs))
}

pub fn conditioned_marginals(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
    ev: &ThetaEvaluator,
) -> Result<Marginals> {
    check_conditioning(params, z0, ev)?;
    check_n(n)?;
    let (steps, h) = grid(horizon, dt)?;
    let pairs = map_replicas(n, |i| {
        let o = conditioned_path(ev, z0, steps, h, family.stream(i), false);
        (o.z_end, o.s_end)
    });
    Ok(Marginals::from_pairs(horizon, pairs))
}

/// Z̄ after `burn_in`, then every `every` time units, `samples_per_path`
/// values from each of `n` paths.
#[allow(clippy::too_many_arguments)]
pub fn conditioned_long_run(
    ev: &ThetaEvaluator,
    z0: f64,
    burn_in: f64,
    every: f64,
    samples_per_path: usize,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<Vec<f64>> {
    check_conditioning(ev.params(), z0, ev)?;
    check_n(n)?;
    if samples_per_path == 0 {
        return domain("at least one sample per path is required");
    }
    let (gap_steps, h) = grid(every, dt)?;
    let burn_steps = if burn_in > 0.0 {
        (burn_in / h).round() as usize
    } else if burn_in == 0.0 {
        0
    } else {
        return domain("burn-in must be nonnegative");
    };
    let per_path = map_replicas(n, |i| {
        let mut rng = family.stream(i);
        let mut z = z0;
        let mut out = Vec::with_capacity(samples_per_path);
        for _ in 0..burn_steps {
            z = conditioned_step(ev, z, h, &mut rng);
        }
        for _ in 0..samples_per_path {
            for _ in 0..gap_steps {
                z = conditioned_step(ev, z, h, &mut rng);
            }
            out.push(z);
        }
        out
    });
    Ok(per_path.into_iter().flatten().collect())
}

/// Bin probabilities of Z̄_t estimated from the unconditioned process:
/// E[1{Z̄_t ∈ B}] = e^{λt} E[ϑ(Z_t) 1{Z_t ∈ B}] / ϑ(z₀).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReweightedBins {
    pub edges: Vec<f64>,
    pub estimates: Vec<McEstimate>,
    /// Covariance of the bin estimates (already divided by n).
    pub covariance: Vec<Vec<f64>>,
    /// Mean weight, e^{λt}E[ϑ(Z_t)]/ϑ(z₀), which should be 1.
    pub total: McEstimate,
}

fn check_edges(edges: &[f64]) -> Result<()> {
    if edges.len() < 2 || edges[0] != 0.0 || edges.windows(2).any(|w| !(w[1] > w[0])) {
        return domain("bin edges must start at 0 and increase strictly (last bin is open)");
    }
    Ok(())
}

pub fn reweighted_expectation(
    params: &ModelParams,
    z0: f64,
    t: f64,
    edges: &[f64],
    n: usize,
    family: &StreamFamily,
    ev: &ThetaEvaluator,
) -> Result<ReweightedBins> {
    check_conditioning(params, z0, ev)?;
    check_edges(edges)?;
    let m = time_change_marginals(params, z0, t, crate::model::default_dt(params), n, family)?;
    let scale = (ev.lambda() * t).exp() / ev.vartheta(z0)?;
    let weights: Vec<f64> = m.z.iter().map(|&z| scale * ev.vartheta_fast(z)).collect();
    let k = edges.len();
    let columns: Vec<Vec<f64>> = (0..k)
        .map(|j| {
            m.z.iter()
                .zip(&weights)
                .map(|(&z, &w)| if bin_index(edges, z) == Some(j) { w } else { 0.0 })
                .collect()
        })
        .collect();
    let estimates = columns
        .iter()
        .map(|c| McEstimate::from_samples(c))
        .collect::<Result<Vec<_>>>()?;
    let nf = n as f64;
    let mut covariance = vec![vec![0.0; k]; k];
    for a in 0..k {
        for b in 0..=a {
            let (ma, mb) = (estimates[a].mean, estimates[b].mean);
            let c = columns[a]
                .iter()
                .zip(&columns[b])
                .map(|(x, y)| (x - ma) * (y - mb))
                .collect::<NeumaierSum>()
                .value()
                / ((nf - 1.0) * nf);
            covariance[a][b] = c;
            covariance[b][a] = c;
        }
    }
    Ok(ReweightedBins {
        edges: edges.to_vec(),
        estimates,
        covariance,
        total: McEstimate::from_samples(&weights)?,
    })
}

/// Wald test of conditioned bin frequencies against reweighted bin
/// estimates. The last bin is dropped because the frequencies sum to one.
pub fn h_transform_test(conditioned: &[f64], reweighted: &ReweightedBins) -> Result<ChiSquareReport> {
    let k = reweighted.edges.len();
    let n = conditioned.len();
    if n < 2 {
        return domain("need at least two conditioned samples");
    }
    let mut counts = vec![0usize; k];
    for &z in conditioned {
        match bin_index(&reweighted.edges, z) {
            Some(j) => counts[j] += 1,
            None => return domain("conditioned sample below the first bin edge"),
        }
    }
    let nf = n as f64;
    let p: Vec<f64> = counts.iter().map(|&c| c as f64 / nf).collect();
    let m = k - 1;
    let diff: Vec<f64> = (0..m).map(|j| p[j] - reweighted.estimates[j].mean).collect();
    let cov: Vec<Vec<f64>> = (0..m)
        .map(|a| {
            (0..m)
                .map(|b| {
                    let multinomial = if a == b { p[a] * (1.0 - p[a]) } else { -p[a] * p[b] } / nf;
                    multinomial + reweighted.covariance[a][b]
                })
                .collect()
        })
        .collect();
    wald_test(&diff, &cov)
}

fn scale_tolerance() -> Tolerance {
    Tolerance {
        abs: 1e-13,
        rel: 1e-10,
        max_intervals: 400,
    }
}

fn check_quad(out: crate::quad::QuadOutcome, what: &str) -> Result<f64> {
    if out.converged && out.value.is_finite() {
        Ok(out.value)
    } else {
        Err(BdreError::Accuracy(format!("{what}: quadrature did not converge")))
    }
}

/// ∫₀ʷ 2μ/σ² (e^u) e^u du for the conditioned Z̄ diffusion, where
/// 2μ/σ² = 2ϑ'/ϑ + (2α+σ_e²)/(σ_b²+σ_e²x).
fn scale_exponent(ev: &ThetaEvaluator, w: f64) -> Result<f64> {
    let p = *ev.params();
    let c = 2.0 * p.alpha + p.sigma_e2;
    let mut failure = None;
    let f = |u: f64| {
        let x = u.exp();
        let g = ev.log_derivative(x).unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        });
        2.0 * g + c * x / (p.sigma_b2 + p.sigma_e2 * x)
    };
    if w == 0.0 {
        return Ok(0.0);
    }
    let (a, b, sign) = if w > 0.0 { (0.0, w, 1.0) } else { (w, 0.0, -1.0) };
    let out = adaptive(f, a, b, scale_tolerance());
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(sign * check_quad(out, "scale exponent")?)
}

/// Scale function R(z) = ∫₁ᶻ exp(-∫₁ʸ 2μ(x)/σ²(x) dx) dy of the conditioned
/// Z̄ diffusion, with both integrals taken in logarithmic variables.
pub fn scale_function(params: &ModelParams, z: f64, ev: &ThetaEvaluator) -> Result<f64> {
    params.validate()?;
    if ev.params() != params {
        return domain("the ThetaEvaluator was built for different parameters");
    }
    if !(z > 0.0) || !z.is_finite() {
        return domain(format!("scale function needs z > 0, got {z}"));
    }
    let w = z.ln();
    if w == 0.0 {
        return Ok(0.0);
    }
    let mut failure = None;
    let f = |u: f64| match scale_exponent(ev, u) {
        Ok(e) => (u - e).exp(),
        Err(err) => {
            failure.get_or_insert(err);
            0.0
        }
    };
    let (a, b, sign) = if w > 0.0 { (0.0, w, 1.0) } else { (w, 0.0, -1.0) };
    let out = adaptive(f, a, b, scale_tolerance());
    if let Some(err) = failure {
        return Err(err);
    }
    Ok(sign * check_quad(out, "scale function")?)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BoundaryClass {
    #[serde(rename = "R0_is_minus_inf")]
    pub r0_is_minus_inf: bool,
    #[serde(rename = "Rinf_finite")]
    pub rinf_finite: bool,
}

/// Probes of R: R(0) = -∞ when R(1e-6) < -1e3. R(∞) is declared finite when
/// the increment over [1e6, 1e9] is below half the increment over [1e3, 1e6];
/// this separates tails like 1/(y ln²y) (ratio ≈ 1/3) from 1/(y ln y)
/// (≈ 0.58) and 1/y (1).
pub fn boundary_classification(params: &ModelParams, ev: &ThetaEvaluator) -> Result<BoundaryClass> {
    let r0 = scale_function(params, 1e-6, ev)?;
    let r3 = scale_function(params, 1e3, ev)?;
    let r6 = scale_function(params, 1e6, ev)?;
    let r9 = scale_function(params, 1e9, ev)?;
    Ok(BoundaryClass {
        r0_is_minus_inf: r0 < -1e3,
        rinf_finite: (r9 - r6) < 0.5 * (r6 - r3),
    })
}

/// Stationary law c·y(σ_b²+σ_e²y)^{2α/σ_e²} of Z̄ in the strong regime.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StationaryLaw {
    params: ModelParams,
    c: f64,
}

impl StationaryLaw {
    pub fn new(params: &ModelParams) -> Result<Self> {
        params.validate()?;
        params.require_environment()?;
        if !(params.alpha < -params.sigma_e2) {
            return domain("a stationary law exists only for alpha < -sigma_e2");
        }
        let mut law = Self {
            params: *params,
            c: 1.0,
        };
        let mass = law.mass_below(f64::INFINITY)?;
        law.c = 1.0 / mass;
        Ok(law)
    }

    pub fn normalization(&self) -> f64 {
        self.c
    }

    fn kernel(&self, y: f64) -> f64 {
        let p = &self.params;
        y * ((2.0 * p.alpha / p.sigma_e2) * (p.sigma_b2 + p.sigma_e2 * y).ln()).exp()
    }

    fn mass_below(&self, y: f64) -> Result<f64> {
        if y <= 0.0 {
            return Ok(0.0);
        }
        let p = &self.params;
        let q = 2.0 * p.alpha / p.sigma_e2;
        // In u = ln y the integrand is e^{2u}(b + e e^u)^q; it is below e^{-80}
        // of its peak outside [lo, hi].
        let knee = (p.sigma_b2 / p.sigma_e2).ln();
        let lo = knee - 40.0;
        let hi = knee + 80.0 / (-(q + 2.0)).max(1e-3);
        let upper = y.ln().min(hi);
        if upper <= lo {
            return Ok(self.c * 0.5 * y * y * p.sigma_b2.powf(q));
        }
        let f = |u: f64| {
            let x = u.exp();
            x * self.kernel(x)
        };
        let tol = Tolerance {
            abs: 1e-300,
            rel: 1e-12,
            max_intervals: 400,
        };
        let head = 0.5 * (lo.exp()).powi(2) * p.sigma_b2.powf(q);
        let body = check_quad(adaptive(f, lo, upper, tol), "stationary normalization")?;
        Ok(self.c * (head + body))
    }

    pub fn pdf(&self, y: f64) -> f64 {
        if y <= 0.0 {
            0.0
        } else {
            self.c * self.kernel(y)
        }
    }

    pub fn cdf(&self, y: f64) -> Result<f64> {
        Ok(self.mass_below(y)?.clamp(0.0, 1.0))
    }
}

pub fn stationary_density(params: &ModelParams, y: f64) -> Result<f64> {
    if !(y > 0.0) {
        return domain(format!("stationary density needs y > 0, got {y}"));
    }
    Ok(StationaryLaw::new(params)?.pdf(y))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_two_sample;
    use std::sync::OnceLock;

    fn p(alpha: f64) -> ModelParams {
        ModelParams::new(alpha, 1.0, 1.0).unwrap()
    }

    fn weak() -> &'static ThetaEvaluator {
        static EV: OnceLock<ThetaEvaluator> = OnceLock::new();
        EV.get_or_init(|| ThetaEvaluator::new(&p(-0.5)).unwrap())
    }

    #[test]
    fn grid_covers_horizon() {
        let (n, h) = grid(1.0, 0.3).unwrap();
        assert_eq!(n, 4);
        assert!((h * n as f64 - 1.0).abs() < 1e-15);
        assert_eq!(grid(1.0, 0.1).unwrap().0, 10);
        assert!(grid(1.0, 1.0).is_err());
        assert!(grid(1.0, 2.0).is_err());
    }

    #[test]
    fn noiseless_hook_is_exponential() {
        let q = ModelParams::noiseless(-0.7);
        let set = simulate_bdre(&q, 2.0, 1.0, 1e-4, 3, &StreamFamily::new(1)).unwrap();
        for path in &set.paths {
            let z = *path.z.last().unwrap();
            assert!((z - 2.0 * (-0.7f64).exp()).abs() < 1e-3);
        }
        let tc = simulate_via_time_change(&q, 2.0, 1.0, 1e-4, 2, &StreamFamily::new(1)).unwrap();
        assert!((tc.final_z()[0] - 2.0 * (-0.7f64).exp()).abs() < 1e-12);
    }

    #[test]
    fn invariants_of_paths() {
        let set = simulate_bdre(&p(-1.0), 0.3, 2.0, 0.01, 200, &StreamFamily::new(2)).unwrap();
        assert_eq!(set.times.len(), 201);
        let mut absorbed = 0;
        for path in &set.paths {
            assert!(path.z.iter().all(|&z| z >= 0.0));
            if let Some(t0) = path.absorbed_at {
                absorbed += 1;
                let k = (t0 / set.dt).round() as usize;
                assert!(path.z[k..].iter().all(|&z| z == 0.0));
            }
        }
        assert!(absorbed > 0);
    }

    #[test]
    fn marginals_repeat_the_path_draws() {
        let fam = StreamFamily::new(3);
        let q = ModelParams::with_theta(-0.2, 1.0, 0.5, 0.4).unwrap();
        let set = simulate_bdre(&q, 1.0, 0.5, 0.01, 50, &fam).unwrap();
        let m = bdre_marginals(&q, 1.0, 0.5, 0.01, 50, &fam).unwrap();
        assert_eq!(set.final_z(), m.z);
        assert_eq!(set.final_s(), m.s);
    }

    #[test]
    fn zero_start_is_absorbed() {
        let fam = StreamFamily::new(4);
        let e = mc_survival(&p(0.5), 0.0, 1.0, 100, &fam).unwrap();
        assert_eq!(e.mean, 0.0);
        let set = simulate_bdre(&p(0.5), 0.0, 1.0, 0.1, 5, &fam).unwrap();
        assert!(set.paths.iter().all(|x| x.absorbed_at == Some(0.0)));
        assert!(mc_survival(&p(0.5), 1.0, 1.0, 99, &fam).is_err());
    }

    #[test]
    fn shared_noise_residual_is_uncorrelated_with_environment() {
        let q = p(-0.3);
        let set = simulate_bdre(&q, 2.0, 0.2, 0.01, 400, &StreamFamily::new(5)).unwrap();
        let (mut sxy, mut sxx) = (0.0, 0.0);
        for path in &set.paths {
            for k in 0..path.z.len() - 1 {
                let z = path.z[k];
                if z <= 0.0 || path.z[k + 1] == 0.0 {
                    continue;
                }
                let ds = path.s[k + 1] - path.s[k];
                let resid = path.z[k + 1] - z - 0.5 * q.sigma_e2 * z * set.dt - z * ds;
                sxy += resid * ds;
                sxx += ds * ds;
            }
        }
        assert!((sxy / sxx).abs() < 0.05, "slope {}", sxy / sxx);
    }

    #[test]
    fn euler_mean_and_conditional_mean() {
        let q = p(-1.0);
        let fam = StreamFamily::new(6);
        let m = bdre_marginals(&q, 1.0, 2.0, crate::model::default_dt(&q), 100_000, &fam).unwrap();
        let mean = McEstimate::from_samples(&m.z).unwrap();
        assert!(mean.z_against((-1.0f64).exp()) < 4.0, "{mean:?}");
        let disc: Vec<f64> = m.z.iter().zip(&m.s).map(|(z, s)| z * (-s).exp()).collect();
        let c = McEstimate::from_samples(&disc).unwrap();
        assert!(c.z_against(1.0) < 4.0, "{c:?}");
    }

    #[test]
    fn time_change_without_environment_is_a_martingale() {
        let q = ModelParams::new(0.0, 1.3, 0.0).unwrap();
        let m = time_change_marginals(&q, 1.0, 2.0, 0.01, 50_000, &StreamFamily::new(7)).unwrap();
        assert!(McEstimate::from_samples(&m.z).unwrap().z_against(1.0) < 4.0);
        let set = simulate_via_time_change(&q, 1.0, 2.0, 0.05, 20_000, &StreamFamily::new(8)).unwrap();
        assert!(McEstimate::from_samples(&set.final_z()).unwrap().z_against(1.0) < 4.0);
    }

    #[test]
    fn constructions_agree_in_law() {
        let q = p(-0.5);
        let a = bdre_marginals(&q, 1.0, 2.0, 1e-3, 10_000, &StreamFamily::new(9)).unwrap();
        let b = simulate_via_time_change(&q, 1.0, 2.0, 1e-3, 10_000, &StreamFamily::new(10)).unwrap();
        let ks = ks_two_sample(&a.z, &b.final_z()).unwrap();
        assert!(ks.p_value > 0.01, "{ks:?}");
    }

    #[test]
    fn immigration_only_delays_absorption() {
        let fam = StreamFamily::new(11);
        let a = simulate_via_time_change(&p(-1.0), 0.5, 2.0, 0.01, 2000, &fam).unwrap();
        let q = ModelParams::with_theta(-1.0, 1.0, 1.0, 0.5).unwrap();
        let b = simulate_via_time_change(&q, 0.5, 2.0, 0.01, 2000, &fam).unwrap();
        assert!(a.absorbed_fraction() >= b.absorbed_fraction());
        assert!(a.absorbed_fraction() > 0.1);
    }

    #[test]
    fn conditioned_strong_regime_never_absorbs() {
        let q = p(-2.0);
        let ev = ThetaEvaluator::new(&q).unwrap();
        let d = conditioned_drift(&ev, 0.37);
        assert_eq!(d.s_drift, q.alpha + q.sigma_e2);
        assert_eq!(d.z_drift, q.sigma_b2 + 0.5 * q.sigma_e2 * 0.37);
        let m = conditioned_marginals(&q, 1.0, 2.0, 1e-3, 10_000, &StreamFamily::new(12), &ev).unwrap();
        assert!(m.z.iter().all(|&z| z > 0.0));
        assert!(simulate_conditioned(&q, 0.0, 1.0, 0.1, 1, &StreamFamily::new(1), &ev).is_err());
    }

    #[test]
    fn reweighted_total_is_one() {
        let q = p(-1.0);
        let ev = ThetaEvaluator::new(&q).unwrap();
        let r =
            reweighted_expectation(&q, 1.0, 1.0, &[0.0, 0.5, 1.0, 2.0], 50_000, &StreamFamily::new(13), &ev).unwrap();
        assert!(r.total.z_against(1.0) < 4.0, "{:?}", r.total);
        let sum: f64 = r.estimates.iter().map(|e| e.mean).sum();
        assert!((sum - r.total.mean).abs() < 1e-12);
        assert!(reweighted_expectation(&q, 1.0, 1.0, &[0.5, 1.0], 10, &StreamFamily::new(1), &ev).is_err());
    }

    #[test]
    fn scale_function_matches_closed_form() {
        let ev = weak();
        let q = *ev.params();
        assert_eq!(scale_function(&q, 1.0, ev).unwrap(), 0.0);
        let th1 = ev.vartheta(1.0).unwrap();
        // Weak regime with 2α + σ_e² = 0: R(z) = ∫₁ᶻ (ϑ(1)/ϑ(y))² dy.
        for z in [0.2f64, 3.0, 40.0] {
            let (a, b, s) = if z > 1.0 {
                (0.0, z.ln(), 1.0)
            } else {
                (z.ln(), 0.0, -1.0)
            };
            let closed = s * adaptive(
                |u| u.exp() * (th1 / ev.vartheta(u.exp()).unwrap()).powi(2),
                a,
                b,
                scale_tolerance(),
            )
            .value;
            let r = scale_function(&q, z, ev).unwrap();
            assert!((r - closed).abs() < 1e-5 * closed.abs(), "z={z}: {r} vs {closed}");
        }
        let strong = p(-2.0);
        let evs = ThetaEvaluator::new(&strong).unwrap();
        // 2μ/σ² = 2/x - 3/(1+x): R(z) = ∫₁ᶻ y^{-2}((1+y)/2)³ dy.
        let exact = |z: f64| {
            let prim = |y: f64| (y.powi(2) / 2.0 + 3.0 * y + 3.0 * y.ln() - 1.0 / y) / 8.0;
            prim(z) - prim(1.0)
        };
        for z in [0.01f64, 5.0, 1e4] {
            let r = scale_function(&strong, z, &evs).unwrap();
            assert!((r - exact(z)).abs() < 1e-8 * exact(z).abs(), "{r} vs {}", exact(z));
        }
    }

    #[test]
    fn boundary_classes() {
        let c = boundary_classification(weak().params(), weak()).unwrap();
        assert!(c.r0_is_minus_inf && c.rinf_finite);
        let strong = p(-2.0);
        let c = boundary_classification(&strong, &ThetaEvaluator::new(&strong).unwrap()).unwrap();
        assert!(c.r0_is_minus_inf && !c.rinf_finite);
        let inter = p(-1.0);
        let c = boundary_classification(&inter, &ThetaEvaluator::new(&inter).unwrap()).unwrap();
        assert!(!c.rinf_finite);
        for a in [0.5, 0.0] {
            let q = p(a);
            let c = boundary_classification(&q, &ThetaEvaluator::new(&q).unwrap()).unwrap();
            assert!(c.r0_is_minus_inf && c.rinf_finite, "alpha {a}");
        }
    }

    #[test]
    fn weak_tail_increment_is_not_small() {
        // The tail behaves like 2.03/(y ln²y): R(1e6) - R(1e3) ≈ 0.147.
        let ev = weak();
        let d = scale_function(ev.params(), 1e6, ev).unwrap() - scale_function(ev.params(), 1e3, ev).unwrap();
        assert!(d > 0.1 && d < 0.2, "{d}");
    }

    #[test]
    fn stationary_law() {
        let q = p(-2.0);
        let law = StationaryLaw::new(&q).unwrap();
        // ∫ y(1+y)^{-4} dy = 1/6.
        assert!((law.normalization() - 6.0).abs() < 6e-6);
        assert!((law.cdf(f64::INFINITY).unwrap() - 1.0).abs() < 1e-6);
        let r1 = stationary_density(&q, 1e-4).unwrap() / 1e-4;
        let r2 = stationary_density(&q, 2e-4).unwrap() / 2e-4;
        assert!((r1 / r2 - 1.0).abs() < 0.01);
        // F(y) = 1 - (1 + 3y)/(1 + y)³ for this law.
        for y in [0.1f64, 1.0, 7.0] {
            let exact = 1.0 - (1.0 + 3.0 * y) / (1.0 + y).powi(3);
            assert!((law.cdf(y).unwrap() - exact).abs() < 1e-9);
        }
        assert!(StationaryLaw::new(&p(-1.0)).is_err());
        assert!(StationaryLaw::new(&p(-0.5)).is_err());
    }
}
