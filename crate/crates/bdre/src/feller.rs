//! Exact transitions of the Feller diffusion dF = b dt + √F dW.
//!
//! F_h given F_0 = x is (h/2)·Gamma(N + 2b) with N ~ Poisson(2x/h); a
//! Feller diffusion with branching rate σ² over time h is the unit one
//! over time σ²h with drift b/σ².

use rand::Rng;
use rand_distr::{Distribution, Gamma, Poisson, StandardNormal};

/// Above this Poisson mean a rounded normal draw is used instead.
const POISSON_NORMAL: f64 = 1e12;

pub fn feller_transition<R: Rng + ?Sized>(x: f64, b: f64, h: f64, rng: &mut R) -> f64 {
    if h <= 0.0 || (x <= 0.0 && b <= 0.0) {
        return x.max(0.0);
    }
    let lam = 2.0 * x.max(0.0) / h;
    let n = if lam == 0.0 {
        0.0
    } else if lam > POISSON_NORMAL {
        let g: f64 = rng.sample(StandardNormal);
        (lam + lam.sqrt() * g).round().max(0.0)
    } else {
        Poisson::new(lam).expect("finite positive mean").sample(rng)
    };
    let shape = n + 2.0 * b;
    if shape <= 0.0 {
        return 0.0;
    }
    Gamma::new(shape, 0.5 * h)
        .expect("positive shape and scale")
        .sample(rng)
}

/// P(F_h = 0 | F_0 = x) without immigration.
pub fn feller_extinction_probability(x: f64, h: f64) -> f64 {
    if x <= 0.0 {
        1.0
    } else if h <= 0.0 {
        0.0
    } else {
        (-2.0 * x / h).exp()
    }
}
