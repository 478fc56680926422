//! Hartman-Watson kernel θ_r(t) and the joint density of
//! (A_t^{(β)}, W_t + βt).

use std::f64::consts::PI;

use num_complex::Complex64;

use super::{check_horizon, ln_sinh_cosh, QuadratureSettings};
use crate::error::{domain, BdreError, Result};
use crate::quad::{panels, periodic_breaks};

/// θ_r(t) = r e^{π²/2t} / sqrt(2π³t) ∫₀^∞ e^{-y²/2t} e^{-r cosh y} sinh y sin(πy/t) dy.
///
/// For small r and t the integral cancels below double precision (θ_{0.1}(0.3)
/// is about 7e-18 against panel sums near 1e7). Such values are recomputed by
/// inverting the Laplace transform ∫₀^∞ e^{-ν²t/2} θ_r(t) dt = I_ν(r).
pub fn hartman_watson_theta(r: f64, t: f64, q: &QuadratureSettings) -> Result<f64> {
    check_horizon(t, "Hartman-Watson evaluation unstable for small t")?;
    if !(r > 0.0) || !r.is_finite() {
        return domain(format!("Hartman-Watson index must be positive, got {r}"));
    }
    let lead = PI * PI / (2.0 * t);
    let integrand = |y: f64| {
        if y == 0.0 {
            return 0.0;
        }
        let (ln_sinh, _) = ln_sinh_cosh(y);
        (lead - y * y / (2.0 * t) - r * y.cosh() + ln_sinh).exp() * (PI * y / t).sin()
    };
    let upper = q.y_cutoff(t, (PI * PI + 2.0 * t * q.log_damping()).sqrt() + 1.0);
    let breaks = periodic_breaks(t, upper, 1.0);
    let mut tol = q.tolerance_relative();
    tol.rel = tol.rel.min(1e-13);
    let o = panels(integrand, &breaks, tol);
    let pre = r / (2.0 * PI.powi(3) * t).sqrt();
    let value = pre * o.value;
    // Rounding in the integrand is about 1e-16 of the panel magnitudes.
    let scale = pre * o.magnitude;
    if value > 1e-9 * scale {
        return Ok(value);
    }
    let fine = talbot_theta(r, t, 56);
    let coarse = talbot_theta(r, t, 48);
    if fine > 0.0 && (fine - coarse).abs() <= 1e-6 * fine {
        Ok(fine)
    } else if value > 1e-12 * scale {
        Ok(value)
    } else {
        Err(BdreError::Accuracy(format!(
            "theta_{r}({t}) is below the resolution of both quadrature routes"
        )))
    }
}

/// ln Γ(z) for Re z ≥ 1 (Lanczos, g = 7).
fn ln_gamma_complex(z: Complex64) -> Complex64 {
    const C: [f64; 9] = [
        0.999_999_999_999_809_9,
        676.520_368_121_885_1,
        -1_259.139_216_722_402_8,
        771.323_428_777_653_1,
        -176.615_029_162_140_6,
        12.507_343_278_686_905,
        -0.138_571_095_265_720_12,
        9.984_369_578_019_572e-6,
        1.505_632_735_149_311_6e-7,
    ];
    let z = z - 1.0;
    let mut x = Complex64::new(C[0], 0.0);
    for (i, c) in C.iter().enumerate().skip(1) {
        x += *c / (z + i as f64);
    }
    let tt = z + 7.5;
    0.5 * (2.0 * PI).ln() + (z + 0.5) * tt.ln() - tt + x.ln()
}

/// I_ν(r) by its power series; adequate for Re ν ≥ 0 and moderate r.
fn bessel_i_complex(nu: Complex64, r: f64) -> Complex64 {
    let lh = (r / 2.0).ln();
    let mut sum = Complex64::new(0.0, 0.0);
    let mut lg_k = 0.0;
    for k in 0..400 {
        if k > 0 {
            lg_k += (k as f64).ln();
        }
        let term = ((2.0 * k as f64 + nu) * lh - lg_k - ln_gamma_complex(nu + (k + 1) as f64)).exp();
        sum += term;
        if k as f64 > nu.norm() && term.norm() < 1e-17 * sum.norm() {
            break;
        }
    }
    sum
}

/// Fixed Talbot inversion of λ ↦ I_{sqrt(2λ)}(r).
fn talbot_theta(r: f64, t: f64, m: usize) -> f64 {
    let rho = 2.0 * m as f64 / (5.0 * t);
    let f = |s: Complex64| bessel_i_complex((2.0 * s).sqrt(), r);
    let mut acc = 0.5 * (f(Complex64::new(rho, 0.0)) * (rho * t).exp()).re;
    for k in 1..m {
        let th = k as f64 * PI / m as f64;
        let cot = th.cos() / th.sin();
        let s = Complex64::new(rho * th * cot, rho * th);
        let sigma = th + (th * cot - 1.0) * cot;
        acc += ((t * s).exp() * f(s) * Complex64::new(1.0, sigma)).re;
    }
    rho / m as f64 * acc
}

/// Joint density of (A_t^{(β)}, W_t + βt) at (u, x):
/// (1/u) exp(-(1 + e^{2x})/(2u)) θ_{e^x/u}(t) times the Girsanov factor
/// exp(βx - β²t/2) that turns the driftless kernel into the drifted one.
pub fn joint_density(beta: f64, t: f64, x: f64, u: f64, q: &QuadratureSettings) -> Result<f64> {
    check_horizon(t, "Hartman-Watson evaluation unstable for small t")?;
    if !(u > 0.0) {
        return domain("joint density needs u > 0");
    }
    let e = -(1.0 + (2.0 * x).exp()) / (2.0 * u);
    if e < -700.0 {
        return Ok(0.0);
    }
    let r = x.exp() / u;
    let theta = match hartman_watson_theta(r, t, q) {
        Ok(v) => v,
        // Unresolvable values sit far below anything the density can see.
        Err(BdreError::Accuracy(_)) => 0.0,
        Err(e) => return Err(e),
    };
    Ok((e + beta * x - beta * beta * t / 2.0).exp() / u * theta)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::quad::{adaptive, Tolerance};

    fn q() -> QuadratureSettings {
        QuadratureSettings::default()
    }

    #[test]
    fn theta_positive_on_grid() {
        for r in [0.1, 0.5, 1.0, 3.0, 10.0] {
            for t in [0.3, 0.7, 1.0, 3.0, 10.0] {
                let v = hartman_watson_theta(r, t, &q()).unwrap();
                assert!(v > 0.0, "theta_{r}({t}) = {v}");
            }
        }
    }

    #[test]
    fn theta_matches_high_precision_values() {
        for (r, t, want) in [
            (0.1, 0.3, 7.1468689805157e-18),
            (0.5, 0.3, 2.703607152710931e-6),
            (0.1, 0.7, 1.638824517928806e-5),
            (10.0, 0.3, 6.029231055794826),
        ] {
            let v = hartman_watson_theta(r, t, &q()).unwrap();
            assert!((v / want - 1.0).abs() < 1e-7, "theta_{r}({t}) = {v}");
        }
    }

    #[test]
    fn talbot_agrees_with_integral_where_both_resolve() {
        let a = talbot_theta(0.5, 1.0, 48);
        let b = hartman_watson_theta(0.5, 1.0, &q()).unwrap();
        assert!((a / b - 1.0).abs() < 1e-8, "{a} {b}");
    }

    #[test]
    fn theta_damped_for_large_index() {
        assert!(hartman_watson_theta(100.0, 1.0, &q()).unwrap() < 1e-6);
    }

    #[test]
    fn small_horizon_is_refused() {
        let e = hartman_watson_theta(1.0, 0.2, &q()).unwrap_err();
        assert!(e.to_string().contains("unstable for small t"));
        assert!(hartman_watson_theta(-1.0, 1.0, &q()).is_err());
    }

    #[test]
    fn theta_integrates_against_laplace_kernel() {
        // Integrating out u leaves the N(0, t) density of W_t at x.
        let g = |u: f64| joint_density(0.0, 1.0, 0.0, u, &q()).unwrap();
        let tol = Tolerance {
            abs: 1e-12,
            rel: 1e-9,
            max_intervals: 200,
        };
        let lower = adaptive(|s: f64| g(s.exp()) * s.exp(), -8.0, 6.0, tol).value;
        let gauss = 1.0 / (2.0 * PI).sqrt();
        assert!((lower - gauss).abs() < 1e-3, "{lower} vs {gauss}");
    }

    #[test]
    fn drifted_marginal_is_shifted_gaussian() {
        let beta = 0.6;
        let t = 1.0;
        let x = 0.4;
        let g = |u: f64| joint_density(beta, t, x, u, &q()).unwrap();
        let tol = Tolerance {
            abs: 1e-12,
            rel: 1e-9,
            max_intervals: 200,
        };
        let m = adaptive(|s: f64| g(s.exp()) * s.exp(), -8.0, 7.0, tol).value;
        let expect = (-(x - beta * t).powi(2) / (2.0 * t)).exp() / (2.0 * PI * t).sqrt();
        assert!((m - expect).abs() < 1e-3, "{m} vs {expect}");
    }

    #[test]
    fn vanishes_as_u_to_zero() {
        assert_eq!(joint_density(0.0, 1.0, 0.3, 1e-4, &q()).unwrap(), 0.0);
        assert!(joint_density(0.0, 1.0, 0.3, 1e-2, &q()).unwrap() < 1e-10);
    }
}
