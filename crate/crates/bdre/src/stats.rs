//! Monte Carlo summaries and goodness-of-fit statistics.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{domain, BdreError, Result};
use crate::quad::NeumaierSum;

/// Sample mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct McEstimate {
    pub mean: f64,
    pub std_error: f64,
    pub n: usize,
}

impl McEstimate {
    /// Values are summed in the given (replica) order with compensation,
    /// so the result does not depend on how replicas were scheduled.
    pub fn from_samples(xs: &[f64]) -> Result<Self> {
        let n = xs.len();
        if n < 2 {
            return domain("an estimate needs at least two replicas");
        }
        let mean = xs.iter().copied().collect::<NeumaierSum>().value() / n as f64;
        let ss = xs
            .iter()
            .map(|x| (x - mean) * (x - mean))
            .collect::<NeumaierSum>()
            .value();
        let var = ss / (n as f64 - 1.0);
        Ok(Self {
            mean,
            std_error: (var / n as f64).sqrt(),
            n,
        })
    }

    /// Binomial proportion with standard error sqrt(p(1-p)/n).
    pub fn from_counts(successes: usize, n: usize) -> Result<Self> {
        if n < 2 {
            return domain("an estimate needs at least two replicas");
        }
        let p = successes as f64 / n as f64;
        Ok(Self {
            mean: p,
            std_error: (p * (1.0 - p) / n as f64).sqrt(),
            n,
        })
    }

    /// |a - b| in units of the combined standard error.
    pub fn z_score(&self, other: &McEstimate) -> f64 {
        let se = (self.std_error.powi(2) + other.std_error.powi(2)).sqrt();
        let d = (self.mean - other.mean).abs();
        if se == 0.0 {
            if d == 0.0 {
                0.0
            } else {
                f64::INFINITY
            }
        } else {
            d / se
        }
    }

    /// |mean - target| in units of the standard error.
    pub fn z_against(&self, target: f64) -> f64 {
        self.z_score(&McEstimate {
            mean: target,
            std_error: 0.0,
            n: 2,
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsReport {
    pub statistic: f64,
    pub p_value: f64,
    pub n1: usize,
    pub n2: usize,
}

/// Kolmogorov survival function Q(λ) = P(K > λ).
pub fn kolmogorov_sf(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.0 {
        let pi2 = std::f64::consts::PI.powi(2);
        let mut s = 0.0;
        for k in 1..=20 {
            let j = (2 * k - 1) as f64;
            s += (-j * j * pi2 / (8.0 * lambda * lambda)).exp();
        }
        (1.0 - (2.0 * std::f64::consts::PI).sqrt() / lambda * s).clamp(0.0, 1.0)
    } else {
        let mut s = 0.0;
        for k in 1..=100 {
            let kf = k as f64;
            let term = (-2.0 * kf * kf * lambda * lambda).exp();
            s += if k % 2 == 1 { term } else { -term };
            if term < 1e-300 {
                break;
            }
        }
        (2.0 * s).clamp(0.0, 1.0)
    }
}

fn sorted_finite(xs: &[f64]) -> Result<Vec<f64>> {
    if xs.iter().any(|x| !x.is_finite()) {
        return Err(BdreError::Domain("KS test input contains non-finite values".into()));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample Kolmogorov-Smirnov test with the asymptotic p-value
/// (Stephens' small-sample correction). Ties are handled exactly in the
/// statistic; with atoms the p-value is conservative.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsReport> {
    if a.is_empty() || b.is_empty() {
        return domain("KS test needs two nonempty samples");
    }
    let x = sorted_finite(a)?;
    let y = sorted_finite(b)?;
    let (n1, n2) = (x.len(), y.len());
    let (mut i, mut j) = (0, 0);
    let mut d: f64 = 0.0;
    while i < n1 && j < n2 {
        let v = x[i].min(y[j]);
        while i < n1 && x[i] == v {
            i += 1;
        }
        while j < n2 && y[j] == v {
            j += 1;
        }
        d = d.max((i as f64 / n1 as f64 - j as f64 / n2 as f64).abs());
    }
    let en = ((n1 * n2) as f64 / (n1 + n2) as f64).sqrt();
    Ok(KsReport {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
        n1,
        n2,
    })
}

/// One-sample test against a continuous CDF.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<KsReport> {
    if xs.is_empty() {
        return domain("KS test needs a nonempty sample");
    }
    let x = sorted_finite(xs)?;
    let n = x.len() as f64;
    let mut d: f64 = 0.0;
    for (i, &v) in x.iter().enumerate() {
        let f = cdf(v);
        d = d.max((i as f64 + 1.0) / n - f).max(f - i as f64 / n);
    }
    let en = n.sqrt();
    Ok(KsReport {
        statistic: d,
        p_value: kolmogorov_sf((en + 0.12 + 0.11 / en) * d),
        n1: x.len(),
        n2: 0,
    })
}

/// Upper tail of the chi-square distribution.
pub fn chi_square_sf(x: f64, dof: usize) -> f64 {
    ChiSquared::new(dof as f64).map(|c| c.sf(x)).unwrap_or(f64::NAN)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChiSquareReport {
    pub statistic: f64,
    pub dof: usize,
    pub p_value: f64,
}

/// Wald statistic dᵀ Σ⁻¹ d for a difference vector with covariance Σ,
/// referred to chi-square with len(d) degrees of freedom.
pub fn wald_test(diff: &[f64], cov: &[Vec<f64>]) -> Result<ChiSquareReport> {
    let k = diff.len();
    if k == 0 || cov.len() != k || cov.iter().any(|r| r.len() != k) {
        return domain("wald test: dimension mismatch");
    }
    let l = cholesky(cov)?;
    // Forward substitution L y = d; statistic = |y|².
    let mut y = vec![0.0; k];
    for i in 0..k {
        let mut s = diff[i];
        for j in 0..i {
            s -= l[i][j] * y[j];
        }
        y[i] = s / l[i][i];
    }
    let statistic: f64 = y.iter().map(|v| v * v).sum();
    Ok(ChiSquareReport {
        statistic,
        dof: k,
        p_value: chi_square_sf(statistic, k),
    })
}

fn cholesky(a: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    let k = a.len();
    let mut l = vec![vec![0.0; k]; k];
    for i in 0..k {
        for j in 0..=i {
            let s = a[i][j] - l[i][..j].iter().zip(&l[j][..j]).map(|(x, y)| x * y).sum::<f64>();
            if i == j {
                if !(s > 0.0) {
                    return Err(BdreError::Accuracy("covariance matrix is not positive definite".into()));
                }
                l[i][i] = s.sqrt();
            } else {
                l[i][j] = s / l[j][j];
            }
        }
    }
    Ok(l)
}

/// Histogram-style bins `[edges[i], edges[i+1])`, the last bin open above.
pub fn bin_index(edges: &[f64], x: f64) -> Option<usize> {
    if edges.is_empty() || x < edges[0] {
        return None;
    }
    Some(edges.partition_point(|&e| e <= x) - 1)
}
