//! Poisson excursion ("backbone") construction of the conditioned process
//! in the strong and intermediate regimes, and the family decomposition of
//! Feller's diffusion with immigration.
//!
//! The excursion measure Q is approximated by ε⁻¹ times the law of a unit
//! Feller diffusion started at ε. Excursions are sampled by exact Feller
//! transitions at the ages where they are needed.

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::env_path::{sample_brownian_path, time_change, EnvPath, TimeChangeGrid};
use crate::error::{domain, Result};
use crate::feller::feller_transition;
use crate::model::ModelParams;
use crate::rng::{map_replicas, RngStream, StreamFamily};
use crate::simulate::{grid, Marginals, Trajectory, TrajectorySet};
use crate::stats::{ks_two_sample, KsReport, McEstimate};

pub const DEFAULT_EPS: f64 = 1e-3;

/// A unit Feller path from ε observed at increasing ages. `values[0] = ε`
/// at age 0; the record stops at the first zero (absorption), so the path
/// is zero beyond the last stored age whenever `t0` is set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Excursion {
    pub eps: f64,
    pub ages: Vec<f64>,
    pub values: Vec<f64>,
    /// First observed age with value 0; `None` if alive at the last age.
    pub t0: Option<f64>,
}

impl Excursion {
    /// Value at stored index `i`, zero past the end of an absorbed record.
    pub fn value(&self, i: usize) -> f64 {
        self.values.get(i).copied().unwrap_or(0.0)
    }
}

fn check_eps(eps: f64) -> Result<()> {
    if !(eps > 0.0) || !eps.is_finite() {
        return domain(format!("eps must be positive, got {eps}"));
    }
    Ok(())
}

fn excursion_at_ages<I: Iterator<Item = f64>>(eps: f64, ages: I, rng: &mut RngStream) -> Excursion {
    let mut exc = Excursion {
        eps,
        ages: vec![0.0],
        values: vec![eps],
        t0: None,
    };
    let (mut x, mut last) = (eps, 0.0);
    for a in ages {
        x = feller_transition(x, 0.0, a - last, rng);
        last = a;
        exc.ages.push(a);
        exc.values.push(x);
        if x == 0.0 {
            exc.t0 = Some(a);
            break;
        }
    }
    exc
}

/// Excursion on the uniform grid dt, 2dt, ... up to the horizon.
pub fn sample_excursion(eps: f64, dt: f64, horizon: f64, rng: &mut RngStream) -> Result<Excursion> {
    check_eps(eps)?;
    let (steps, h) = grid(horizon, dt)?;
    Ok(excursion_at_ages(eps, (1..=steps).map(|k| k as f64 * h), rng))
}

/// An excursion placed in the point process. `mark` is the position y in
/// [0, z0] for initial points and the birth time u on the τ̃-clock for
/// immigration points. `values[i]`, i ≥ 1, is observed at grid index
/// `first_grid + i - 1`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacedExcursion {
    pub mark: f64,
    pub first_grid: usize,
    pub excursion: Excursion,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRealization {
    pub initial_points: Vec<PlacedExcursion>,
    pub immigration_points: Vec<PlacedExcursion>,
}

/// One replica of the construction with everything needed to rebuild it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BackboneReplica {
    /// S̃ with drift α + σ_e².
    pub env: EnvPath,
    pub tau: TimeChangeGrid,
    pub points: PointRealization,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BackboneConfig {
    pub eps: f64,
    /// Switching this off leaves only the initial families, i.e. a
    /// time-changed BDRE with environment drift α + σ_e².
    pub immigration: bool,
}

impl Default for BackboneConfig {
    fn default() -> Self {
        Self {
            eps: DEFAULT_EPS,
            immigration: true,
        }
    }
}

fn check_backbone(params: &ModelParams, z0: f64, cfg: &BackboneConfig) -> Result<()> {
    params.validate()?;
    params.require_environment()?;
    params.require_no_immigration("the backbone construction")?;
    if !(params.alpha <= -params.sigma_e2) {
        return domain("the backbone construction needs alpha <= -sigma_e2 (strong or intermediate regime)");
    }
    if !(z0 > 0.0) || !z0.is_finite() {
        return domain(format!("the backbone construction needs z0 > 0, got {z0}"));
    }
    check_eps(cfg.eps)
}

fn poisson_count<R: Rng + ?Sized>(mean: f64, rng: &mut R) -> u64 {
    if mean <= 0.0 {
        0
    } else {
        Poisson::new(mean).expect("finite positive mean").sample(rng) as u64
    }
}

/// Sorted marks of a rate-1/ε Poisson process on [0, len].
fn poisson_marks(len: f64, eps: f64, rng: &mut RngStream) -> Vec<f64> {
    let k = poisson_count(len / eps, rng);
    let mut marks: Vec<f64> = (0..k).map(|_| len * rng.random::<f64>()).collect();
    marks.sort_by(f64::total_cmp);
    marks
}

/// Streams: environment child(1), point counts and marks child(2),
/// excursion j of replica i child(3).child(i).stream(j) (initial families
/// first, then immigrants).
pub fn backbone_replica(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    cfg: &BackboneConfig,
    family: &StreamFamily,
    replica: u64,
) -> Result<BackboneReplica> {
    check_backbone(params, z0, cfg)?;
    let (_, h) = grid(horizon, dt)?;
    let drift = params.alpha + params.sigma_e2;
    let env = sample_brownian_path(drift, params.sigma_e2, horizon, h, &mut family.child(1).stream(replica))?;
    let tau = time_change(&env, params.sigma_b2);
    let mut marks_rng = family.child(2).stream(replica);
    let exc_family = family.child(3).child(replica);
    let ys = poisson_marks(z0, cfg.eps, &mut marks_rng);
    let births = if cfg.immigration {
        poisson_marks(tau.last(), cfg.eps, &mut marks_rng)
    } else {
        Vec::new()
    };
    let mut j = 0u64;
    let mut initial_points = Vec::with_capacity(ys.len());
    for y in ys {
        let mut rng = exc_family.stream(j);
        j += 1;
        let excursion = excursion_at_ages(cfg.eps, tau.tau_values[1..].iter().copied(), &mut rng);
        initial_points.push(PlacedExcursion {
            mark: y,
            first_grid: 1,
            excursion,
        });
    }
    let mut immigration_points = Vec::with_capacity(births.len());
    for u in births {
        let mut rng = exc_family.stream(j);
        j += 1;
        let first = tau.tau_values.partition_point(|&s| s <= u);
        let ages = tau.tau_values[first..].iter().map(|&s| s - u);
        let excursion = excursion_at_ages(cfg.eps, ages, &mut rng);
        immigration_points.push(PlacedExcursion {
            mark: u,
            first_grid: first,
            excursion,
        });
    }
    Ok(BackboneReplica {
        env,
        tau,
        points: PointRealization {
            initial_points,
            immigration_points,
        },
    })
}

/// Z̃ on the grid: e^{S̃_t} times the sum of all families alive at τ̃(t),
/// summed family by family in storage order.
pub fn recompose(rep: &BackboneReplica) -> Vec<f64> {
    let n = rep.env.values.len();
    let mut mass = vec![0.0; n];
    for p in &rep.points.initial_points {
        mass[0] += p.excursion.values[0];
        for (i, &v) in p.excursion.values.iter().enumerate().skip(1) {
            mass[p.first_grid + i - 1] += v;
        }
    }
    for p in &rep.points.immigration_points {
        for (i, &v) in p.excursion.values.iter().enumerate().skip(1) {
            mass[p.first_grid + i - 1] += v;
        }
    }
    mass.iter().zip(&rep.env.values).map(|(m, s)| m * s.exp()).collect()
}

pub fn backbone_simulate(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    cfg: &BackboneConfig,
    n: usize,
    family: &StreamFamily,
) -> Result<TrajectorySet> {
    check_backbone(params, z0, cfg)?;
    if n == 0 {
        return domain("at least one replica is required");
    }
    let (steps, h) = grid(horizon, dt)?;
    let paths = map_replicas(n, |i| {
        backbone_replica(params, z0, horizon, dt, cfg, family, i).map(|rep| {
            let z = recompose(&rep);
            let absorbed_at = None;
            Trajectory {
                z,
                s: rep.env.values,
                absorbed_at,
                seed_record: rep.env.seed_record.expect("sampled paths carry a seed"),
            }
        })
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(TrajectorySet {
        dt: h,
        horizon,
        times: (0..=steps).map(|k| k as f64 * h).collect(),
        paths,
    })
}

/// Fraction of paths that are zero at some grid time t > 0.
pub fn violation_rate(set: &TrajectorySet) -> f64 {
    let bad = set.paths.iter().filter(|p| p.z[1..].contains(&0.0)).count();
    bad as f64 / set.paths.len().max(1) as f64
}

/// Families per replica, for reporting.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FamilyCounts {
    pub initial: usize,
    pub immigrant: usize,
}

pub fn family_counts(rep: &BackboneReplica) -> FamilyCounts {
    FamilyCounts {
        initial: rep.points.initial_points.len(),
        immigrant: rep.points.immigration_points.len(),
    }
}

/// Z̃ at the horizon only: each excursion needs one transition over its
/// age τ̃(t) - u. Same stream layout as [`backbone_replica`].
pub fn backbone_marginal(
    params: &ModelParams,
    z0: f64,
    horizon: f64,
    dt: f64,
    cfg: &BackboneConfig,
    n: usize,
    family: &StreamFamily,
) -> Result<Marginals> {
    check_backbone(params, z0, cfg)?;
    if n == 0 {
        return domain("at least one replica is required");
    }
    let (_, h) = grid(horizon, dt)?;
    let drift = params.alpha + params.sigma_e2;
    let out = map_replicas(n, |i| -> Result<(f64, f64)> {
        let env = sample_brownian_path(drift, params.sigma_e2, horizon, h, &mut family.child(1).stream(i))?;
        let tau = time_change(&env, params.sigma_b2).last();
        let mut marks_rng = family.child(2).stream(i);
        let exc_family = family.child(3).child(i);
        let ys = poisson_marks(z0, cfg.eps, &mut marks_rng);
        let births = if cfg.immigration {
            poisson_marks(tau, cfg.eps, &mut marks_rng)
        } else {
            Vec::new()
        };
        let mut mass = 0.0;
        let ages = ys.iter().map(|_| tau).chain(births.iter().map(|u| tau - u));
        for (j, age) in ages.enumerate() {
            mass += feller_transition(cfg.eps, 0.0, age, &mut exc_family.stream(j as u64));
        }
        Ok((mass * env.last().exp(), env.last()))
    });
    let pairs = out.into_iter().collect::<Result<Vec<_>>>()?;
    let (z, s) = pairs.into_iter().unzip();
    Ok(Marginals { horizon, z, s })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FellerImmigrationReport {
    pub ks: KsReport,
    pub direct_mean: McEstimate,
    pub excursion_mean: McEstimate,
    pub expected_mean: f64,
}

/// Full-truncation Euler of dF = θ dt + √(σ_b² F) dW at the horizon.
pub fn feller_immigration_direct(
    theta: f64,
    sigma_b2: f64,
    x0: f64,
    horizon: f64,
    dt: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<Vec<f64>> {
    check_feller_inputs(theta, sigma_b2, x0)?;
    let (steps, h) = grid(horizon, dt)?;
    Ok(map_replicas(n, |i| {
        let mut rng = family.stream(i);
        let mut x = x0;
        for _ in 0..steps {
            let g: f64 = rng.sample(StandardNormal);
            let xp = x.max(0.0);
            x += theta * h + (sigma_b2 * xp * h).sqrt() * g;
            if x <= 0.0 {
                x = 0.0;
            }
        }
        x
    }))
}

/// Sum of Poisson(x0/ε) families started at time 0 and rate-θ/ε immigrant
/// families, each a Feller path from ε with branching rate σ_b².
pub fn feller_immigration_excursions(
    theta: f64,
    sigma_b2: f64,
    x0: f64,
    horizon: f64,
    eps: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<Vec<f64>> {
    check_feller_inputs(theta, sigma_b2, x0)?;
    check_eps(eps)?;
    if !(horizon > 0.0) || !horizon.is_finite() {
        return domain("horizon must be positive");
    }
    Ok(map_replicas(n, |i| {
        let mut marks = family.child(2).stream(i);
        let exc = family.child(3).child(i);
        let n0 = poisson_count(x0 / eps, &mut marks);
        let n1 = poisson_count(theta * horizon / eps, &mut marks);
        let mut mass = 0.0;
        for j in 0..n0 + n1 {
            let age = if j < n0 {
                horizon
            } else {
                horizon * (1.0 - marks.random::<f64>())
            };
            mass += feller_transition(eps, 0.0, sigma_b2 * age, &mut exc.stream(j));
        }
        mass
    }))
}

fn check_feller_inputs(theta: f64, sigma_b2: f64, x0: f64) -> Result<()> {
    if !(theta >= 0.0) || !theta.is_finite() {
        return domain("theta must be nonnegative");
    }
    if !(sigma_b2 > 0.0) || !sigma_b2.is_finite() {
        return domain("sigma_b2 must be positive");
    }
    if !(x0 >= 0.0) || !x0.is_finite() {
        return domain("x0 must be nonnegative");
    }
    Ok(())
}

/// Direct and excursion-sum constructions of Feller's diffusion with
/// immigration at the horizon, compared by a two-sample KS test.
#[allow(clippy::too_many_arguments)]
pub fn feller_immigration_check(
    theta: f64,
    sigma_b2: f64,
    x0: f64,
    horizon: f64,
    dt: f64,
    eps: f64,
    n: usize,
    family: &StreamFamily,
) -> Result<FellerImmigrationReport> {
    if n < 2 {
        return domain("need at least two samples per construction");
    }
    let a = feller_immigration_direct(theta, sigma_b2, x0, horizon, dt, n, &family.child(10))?;
    let b = feller_immigration_excursions(theta, sigma_b2, x0, horizon, eps, n, &family.child(11))?;
    Ok(FellerImmigrationReport {
        ks: ks_two_sample(&a, &b)?,
        direct_mean: McEstimate::from_samples(&a)?,
        excursion_mean: McEstimate::from_samples(&b)?,
        expected_mean: x0 + theta * horizon,
    })
}
