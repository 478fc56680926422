//! Branching process in random environment with Poisson offspring and a
//! diagnostic for its diffusion approximation.
//!
//! In generation i every individual has Poisson(m_i) children, with
//! ln m_i = α/n + σ_e G_i/√n, G_i standard normal. Then Σ ln m over tn
//! generations converges to the BDRE environment S_t (drift α), and
//! n·E[m - 1] → α + σ_e²/2, the growth rate of E[Z_t].

use rand::Rng;
use rand_distr::{Distribution, Poisson, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{domain, BdreError, Result};
use crate::model::ModelParams;
use crate::rng::{map_replicas, RngStream, StreamFamily};
use crate::simulate::{bdre_marginals, mc_survival};
use crate::stats::{ks_two_sample, McEstimate};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BpreConfig {
    pub n: u64,
    pub generations: usize,
    /// Initial individuals = round(n·z0_mass).
    pub z0_mass: f64,
    pub alpha: f64,
    pub sigma_e2: f64,
}

impl BpreConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.generations == 0 {
            return domain("n and generations must be at least 1");
        }
        if !(self.z0_mass >= 0.0) || !self.z0_mass.is_finite() {
            return domain("z0_mass must be nonnegative");
        }
        if !self.alpha.is_finite() || !(self.sigma_e2 >= 0.0) || !self.sigma_e2.is_finite() {
            return domain("alpha must be finite and sigma_e2 nonnegative");
        }
        Ok(())
    }

    pub fn initial_population(&self) -> u64 {
        (self.n as f64 * self.z0_mass).round() as u64
    }

    /// ln m for a standard normal draw g.
    pub fn log_mean(&self, g: f64) -> f64 {
        let n = self.n as f64;
        self.alpha / n + self.sigma_e2.sqrt() * g / n.sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BprePath {
    pub population: Vec<u64>,
    /// walk[i] = √n Σ_{j<i} ln m_j, so E[Z_i | environment] = Z_0 e^{walk[i]/√n}.
    pub walk: Vec<f64>,
    pub means: Vec<f64>,
}

/// Sum of Z i.i.d. Poisson(m) variables is one Poisson(Z·m) draw.
pub fn simulate_bpre(cfg: &BpreConfig, rng: &mut RngStream) -> Result<BprePath> {
    cfg.validate()?;
    let sqn = (cfg.n as f64).sqrt();
    let mut population = Vec::with_capacity(cfg.generations + 1);
    let mut walk = Vec::with_capacity(cfg.generations + 1);
    let mut means = Vec::with_capacity(cfg.generations);
    let mut z = cfg.initial_population();
    let mut s = 0.0;
    population.push(z);
    walk.push(s);
    for _ in 0..cfg.generations {
        let g: f64 = rng.sample(StandardNormal);
        let lm = cfg.log_mean(g);
        let m = lm.exp();
        s += sqn * lm;
        means.push(m);
        if z > 0 {
            let lambda = z as f64 * m;
            if lambda > 9.0e18 {
                return Err(BdreError::Stability("population exceeds 2^63 - 1 individuals".into()));
            }
            z = Poisson::new(lambda).expect("positive finite mean").sample(rng) as u64;
        }
        population.push(z);
        walk.push(s);
    }
    Ok(BprePath {
        population,
        walk,
        means,
    })
}

/// Z^{(n)}_{tn}/n for `replicas` independent environments.
pub fn bpre_marginal(cfg: &BpreConfig, replicas: usize, family: &StreamFamily) -> Result<Vec<f64>> {
    cfg.validate()?;
    let n = cfg.n as f64;
    map_replicas(replicas, |i| {
        simulate_bpre(cfg, &mut family.stream(i)).map(|p| *p.population.last().expect("nonempty") as f64 / n)
    })
    .into_iter()
    .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceRow {
    pub n: u64,
    pub ks_distance: f64,
    pub survival_bpre: McEstimate,
    pub survival_bdre: McEstimate,
}

/// KS distance between Z^{(n)}_{tn}/n and one Euler sample of Z_t, plus
/// survival probabilities, for each n. The BDRE reference sample and the
/// survival estimate are shared by all rows.
#[allow(clippy::too_many_arguments)]
pub fn convergence_diagnostic(
    params: &ModelParams,
    z0: f64,
    n_list: &[u64],
    t: f64,
    replicas: usize,
    dt: f64,
    family: &StreamFamily,
) -> Result<Vec<ConvergenceRow>> {
    params.validate()?;
    if params.sigma_b2 != 1.0 {
        return domain("the Poisson offspring family forces sigma_b2 = 1");
    }
    if n_list.is_empty() || n_list.windows(2).any(|w| w[1] <= w[0]) {
        return domain("n_list must be nonempty and strictly increasing");
    }
    if !(t > 0.0) || !t.is_finite() {
        return domain("t must be positive");
    }
    let reference = bdre_marginals(params, z0, t, dt, replicas, &family.child(1))?;
    let survival_bdre = mc_survival(params, z0, t, replicas, &family.child(2))?;
    n_list
        .iter()
        .map(|&n| {
            let cfg = BpreConfig {
                n,
                generations: (t * n as f64).round().max(1.0) as usize,
                z0_mass: z0,
                alpha: params.alpha,
                sigma_e2: params.sigma_e2,
            };
            let xs = bpre_marginal(&cfg, replicas, &family.child(100 + n))?;
            let alive = xs.iter().filter(|&&x| x > 0.0).count();
            Ok(ConvergenceRow {
                n,
                ks_distance: ks_two_sample(&xs, &reference.z)?.statistic,
                survival_bpre: McEstimate::from_counts(alive, xs.len())?,
                survival_bdre,
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::stats::ks_one_sample;
    use statrs::distribution::{ContinuousCDF, Normal};

    fn cfg(n: u64, alpha: f64, se2: f64) -> BpreConfig {
        BpreConfig {
            n,
            generations: n as usize,
            z0_mass: 1.0,
            alpha,
            sigma_e2: se2,
        }
    }

    #[test]
    fn flat_environment_is_critical_galton_watson() {
        let c = BpreConfig {
            generations: 20,
            ..cfg(100, 0.0, 0.0)
        };
        let fam = StreamFamily::new(1);
        let paths: Vec<BprePath> = (0..4000)
            .map(|i| simulate_bpre(&c, &mut fam.stream(i)).unwrap())
            .collect();
        assert!(paths[0].means.iter().all(|&m| m == 1.0));
        for gen in [5, 10, 20] {
            let xs: Vec<f64> = paths.iter().map(|p| p.population[gen] as f64).collect();
            assert!(McEstimate::from_samples(&xs).unwrap().z_against(100.0) < 4.0);
        }
    }

    #[test]
    fn environment_moments() {
        let c = cfg(10_000, -0.5, 1.0);
        let mut r = StreamFamily::new(2).stream(0);
        let ms: Vec<f64> = (0..400_000)
            .map(|_| c.log_mean(r.sample(StandardNormal)).exp())
            .collect();
        // n·E[m - 1] → α + σ_e²/2 and n·E[ln m] = α.
        let dm: Vec<f64> = ms.iter().map(|m| 1e4 * (m - 1.0)).collect();
        let e = McEstimate::from_samples(&dm).unwrap();
        let exact = 1e4 * ((-0.5f64 / 1e4 + 0.5 / 1e4).exp() - 1.0);
        assert!(e.z_against(exact) < 4.0, "{e:?} vs {exact}");
        let lm: Vec<f64> = ms.iter().map(|m| 1e4 * m.ln()).collect();
        assert!(McEstimate::from_samples(&lm).unwrap().z_against(-0.5) < 4.0);
        // Poisson offspring: E[Σ (k/m - 1)² Q(k)] = E[1/m] → 1.
        let inv: Vec<f64> = ms.iter().map(|m| 1.0 / m).collect();
        assert!((McEstimate::from_samples(&inv).unwrap().mean - 1.0).abs() < 1e-3);
    }

    #[test]
    fn conditional_mean_follows_the_walk() {
        let c = BpreConfig {
            generations: 50,
            ..cfg(200, -0.5, 1.0)
        };
        let fam = StreamFamily::new(3);
        let ratios: Vec<f64> = (0..20_000)
            .map(|i| {
                let p = simulate_bpre(&c, &mut fam.stream(i)).unwrap();
                let last = p.population.len() - 1;
                p.population[last] as f64 / (200.0 * (p.walk[last] / (200f64).sqrt()).exp())
            })
            .collect();
        assert!(McEstimate::from_samples(&ratios).unwrap().z_against(1.0) < 4.0);
    }

    #[test]
    fn walk_marginal_is_gaussian() {
        let c = cfg(800, -0.5, 1.0);
        let fam = StreamFamily::new(4);
        let xs: Vec<f64> = (0..5000)
            .map(|i| {
                let p = simulate_bpre(&c, &mut fam.stream(i)).unwrap();
                p.walk.last().unwrap() / (800f64).sqrt()
            })
            .collect();
        let nd = Normal::new(-0.5, 1.0).unwrap();
        assert!(ks_one_sample(&xs, |x| nd.cdf(x)).unwrap().p_value > 0.01);
    }

    #[test]
    fn overflow_and_domain() {
        let c = BpreConfig {
            generations: 200,
            ..cfg(1, 40.0, 0.0)
        };
        assert!(matches!(
            simulate_bpre(&c, &mut StreamFamily::new(5).stream(0)),
            Err(BdreError::Stability(_))
        ));
        let p = ModelParams::new(-0.5, 2.0, 1.0).unwrap();
        let err = convergence_diagnostic(&p, 1.0, &[50], 1.0, 100, 0.01, &StreamFamily::new(1)).unwrap_err();
        assert!(err.to_string().contains("sigma_b2 = 1"));
    }
}
