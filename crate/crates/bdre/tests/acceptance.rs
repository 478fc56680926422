//! Acceptance suite. Prints one PASS/FAIL line per criterion and exits
//! nonzero if any criterion fails.

use std::time::Instant;

use bdre::backbone::{backbone_marginal, feller_immigration_check, BackboneConfig};
use bdre::bpre::convergence_diagnostic;
use bdre::env_path::sample_exp_functional;
use bdre::exact::{
    critical_density, joint_density, phi_beta, reversed_functional, survival_exact, Functional, InvTwoADensity,
    QuadratureSettings,
};
use bdre::quad::{adaptive, Tolerance};
use bdre::rng::map_replicas;
use bdre::simulate::{
    bdre_marginals, conditioned_long_run, conditioned_marginals, h_transform_test, mc_survival, reweighted_expectation,
    time_change_marginals, StationaryLaw,
};
use bdre::stats::{ks_one_sample, ks_two_sample};
use bdre::{default_dt, f_eval, McEstimate, ModelParams, Result, StreamFamily, ThetaEvaluator};

type Outcome = Result<(bool, String)>;
type Criterion = (&'static str, fn() -> Outcome);

fn p(alpha: f64) -> ModelParams {
    ModelParams::new(alpha, 1.0, 1.0).unwrap()
}

fn q() -> QuadratureSettings {
    QuadratureSettings::default()
}

fn rel(x: f64, target: f64) -> f64 {
    (x / target - 1.0).abs()
}

const FIVE: [f64; 5] = [0.5, 0.0, -0.5, -1.0, -2.0];

fn supercritical_limit() -> Outcome {
    let mc = mc_survival(&p(0.5), 1.0, 50.0, 100_000, &StreamFamily::new(101))?;
    let exact = survival_exact(&p(0.5), 1.0, 80.0, &q())?;
    let ok = (mc.mean - 0.5).abs() <= 0.02 && (exact - 0.5).abs() <= 0.02;
    Ok((
        ok,
        format!(
            "mc(t=50) = {:.4} ± {:.4}, exact(t=80) = {exact:.5}",
            mc.mean, mc.std_error
        ),
    ))
}

fn critical_rate() -> Outcome {
    let target = (2.0 / std::f64::consts::PI).sqrt() * 2f64.ln();
    let mut errs = Vec::new();
    for t in [50.0f64, 100.0, 200.0] {
        errs.push(rel(t.sqrt() * survival_exact(&p(0.0), 1.0, t, &q())?, target));
    }
    let ok = errs.iter().all(|&e| e <= 0.10) && errs[2] < errs[0] && errs[2] < errs[1];
    Ok((ok, format!("relative errors {errs:.4?} against {target:.4}")))
}

fn intermediate_rate() -> Outcome {
    let target = (2.0 / std::f64::consts::PI).sqrt();
    let mut errs = Vec::new();
    for t in [10.0f64, 20.0, 30.0] {
        let s = survival_exact(&p(-1.0), 1.0, t, &q())?;
        errs.push(rel(t.sqrt() * (t / 2.0).exp() * s, target));
    }
    let ok = errs[0] > errs[1] && errs[1] > errs[2] && errs[2] <= 0.15;
    Ok((ok, format!("relative errors {errs:.4?} against {target:.4}")))
}

fn strong_rate() -> Outcome {
    let mut errs = Vec::new();
    for t in [5.0f64, 10.0, 15.0] {
        errs.push(rel((1.5 * t).exp() * survival_exact(&p(-2.0), 1.0, t, &q())?, 2.0));
    }
    let ok = errs[0] > errs[1] && errs[1] > errs[2] && errs[2] <= 0.10;
    Ok((ok, format!("relative errors {errs:.4?} against 2")))
}

fn weak_constant() -> Outcome {
    let params = p(-0.5);
    let beta = params.beta();
    let tol = Tolerance {
        abs: 1e-13,
        rel: 1e-10,
        max_intervals: 400,
    };
    let mut failure = None;
    let integrand = |u: f64| {
        let a = u.exp();
        let v = f_eval(&params, a).and_then(|f| Ok(f * phi_beta(beta, a, &q())? * a));
        v.unwrap_or_else(|e| {
            failure.get_or_insert(e);
            0.0
        })
    };
    let out = adaptive(integrand, (1e-20f64).ln(), 60f64.ln(), tol);
    if let Some(e) = failure {
        return Err(e);
    }
    let constant = 8.0 / params.sigma_e2.powf(1.5) * out.value;
    let mut scaled = Vec::new();
    for t in [20.0f64, 40.0, 80.0] {
        scaled.push(t.powf(1.5) * (t / 8.0).exp() * survival_exact(&params, 1.0, t, &q())?);
    }
    let steps = [(scaled[1] - scaled[0]).abs(), (scaled[2] - scaled[1]).abs()];
    let ok = steps[1] < steps[0] && rel(scaled[2], constant) <= 0.15;
    Ok((
        ok,
        format!(
            "scaled survival {scaled:.4?}, quadrature constant {constant:.6} (final rel. err {:.4})",
            rel(scaled[2], constant)
        ),
    ))
}

fn density_suite() -> Outcome {
    let mut worst_norm = 0.0f64;
    for v in [0.5, 1.0, 2.0] {
        for beta in [-0.5, 0.0, 0.5, 1.0, 2.0] {
            let g = InvTwoADensity::new(v, beta, &q())?.grid()?;
            worst_norm = worst_norm.max((g.normalization() - 1.0).abs());
        }
    }
    // β = 0: ∫ over W_v of the joint density of (A_v, W_v) against the single integral.
    let v = 1.0;
    let tol = Tolerance {
        abs: 1e-14,
        rel: 1e-9,
        max_intervals: 400,
    };
    let mut worst_rel = 0.0f64;
    for a in [0.1, 0.5, 1.0, 2.0] {
        let u = 1.0 / (2.0 * a);
        let mut failure = None;
        let inner = |x: f64| {
            joint_density(0.0, v, x, u, &q()).unwrap_or_else(|e| {
                failure.get_or_insert(e);
                0.0
            })
        };
        let double = adaptive(inner, -12.0, 12.0, tol).value / (2.0 * a * a);
        if let Some(e) = failure {
            return Err(e);
        }
        let single = critical_density(v, a, &q())?;
        worst_rel = worst_rel.max(rel(double, single));
    }
    // Quadrature mean of 1/(2A_v^{(β)}) against Monte Carlo.
    let (v, beta) = (1.0, 0.5);
    let exact_mean = InvTwoADensity::new(v, beta, &q())?.grid()?.mean();
    let fam = StreamFamily::new(106);
    let draws = map_replicas(100_000, |i| {
        sample_exp_functional(beta, v, 1e-3, &mut fam.stream(i)).map(|s| 1.0 / (2.0 * s.value))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let mc = McEstimate::from_samples(&draws)?;
    let z = mc.z_against(exact_mean);
    let ok = worst_norm <= 1e-4 && worst_rel <= 1e-4 && z <= 4.0;
    Ok((
        ok,
        format!("max |norm - 1| = {worst_norm:.2e}, beta=0 double/single rel = {worst_rel:.2e}, mean z = {z:.2}"),
    ))
}

fn exact_mean(v: f64, beta: f64) -> Result<f64> {
    if beta > -0.9 {
        Ok(InvTwoADensity::new(v, beta, &q())?.grid()?.mean())
    } else {
        Ok(reversed_functional(v, beta, Functional::Mean, &q())?.0)
    }
}

fn mc_mean(v: f64, beta: f64, fam: &StreamFamily) -> Result<McEstimate> {
    let draws = map_replicas(100_000, |i| {
        sample_exp_functional(beta, v, 1e-3, &mut fam.stream(i)).map(|s| 1.0 / (2.0 * s.value))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    McEstimate::from_samples(&draws)
}

fn moment_identity() -> Outcome {
    let v = 1.0;
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, gamma) in [2.0f64, 3.0].into_iter().enumerate() {
        let factor = (-(2.0 * gamma - 2.0) * v).exp();
        let other = -(gamma - 2.0);
        let (lhs, rhs) = (exact_mean(v, gamma)?, factor * exact_mean(v, other)?);
        let fam = StreamFamily::new(107).child(k as u64);
        let (ml, mr) = (mc_mean(v, gamma, &fam.child(1))?, mc_mean(v, other, &fam.child(2))?);
        let z = (ml.mean - factor * mr.mean).abs() / (ml.std_error.powi(2) + (factor * mr.std_error).powi(2)).sqrt();
        ok &= rel(lhs, rhs) <= 1e-3 && z <= 4.0;
        detail.push(format!("gamma={gamma}: quad rel {:.2e}, mc z {z:.2}", rel(lhs, rhs)));
    }
    Ok((ok, detail.join("; ")))
}

fn dufresne_limit() -> Outcome {
    let fam = StreamFamily::new(108);
    let draws = map_replicas(10_000, |i| {
        sample_exp_functional(-1.0, 50.0, 2e-3, &mut fam.stream(i)).map(|s| 1.0 / (2.0 * s.value))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let shape2 = ks_one_sample(&draws, |x| if x <= 0.0 { 0.0 } else { 1.0 - (-x).exp() * (1.0 + x) })?;
    let shape1 = ks_one_sample(&draws, |x| if x <= 0.0 { 0.0 } else { -(-x).exp_m1() })?;
    let mean = McEstimate::from_samples(&draws)?;
    Ok((
        shape2.p_value > 0.01,
        format!(
            "KS vs Gamma(2,1): p = {:.3e}; sample mean {:.4} ± {:.4}; KS vs Gamma(1,1): p = {:.3}",
            shape2.p_value, mean.mean, mean.std_error, shape1.p_value
        ),
    ))
}

fn martingale_identity() -> Outcome {
    let t = 2.0;
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, alpha) in FIVE.into_iter().enumerate() {
        let params = p(alpha);
        let ev = ThetaEvaluator::new(&params)?;
        let m = time_change_marginals(
            &params,
            1.0,
            t,
            default_dt(&params),
            100_000,
            &StreamFamily::new(109).child(k as u64),
        )?;
        let values: Vec<f64> = m.z.iter().map(|&z| ev.vartheta_fast(z)).collect();
        let est = McEstimate::from_samples(&values)?;
        let z = est.z_against((-ev.lambda() * t).exp() * ev.vartheta(1.0)?);
        ok &= z <= 4.0;
        detail.push(format!("{alpha}: z={z:.2}"));
    }
    Ok((ok, detail.join(", ")))
}

fn h_transform_equivalence() -> Outcome {
    let t = 1.0;
    let edges = [0.0, 0.25, 0.5, 1.0, 2.0, 4.0];
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, alpha) in FIVE.into_iter().enumerate() {
        let params = p(alpha);
        let ev = ThetaEvaluator::new(&params)?;
        let fam = StreamFamily::new(110).child(k as u64);
        let cond = conditioned_marginals(&params, 1.0, t, default_dt(&params), 20_000, &fam.child(1), &ev)?;
        let rw = reweighted_expectation(&params, 1.0, t, &edges, 200_000, &fam.child(2), &ev)?;
        let report = h_transform_test(&cond.z, &rw)?;
        ok &= report.p_value > 0.01;
        detail.push(format!("{alpha}: p={:.3}", report.p_value));
    }
    Ok((ok, detail.join(", ")))
}

fn stationary_law() -> Outcome {
    let params = p(-2.0);
    let ev = ThetaEvaluator::new(&params)?;
    let law = StationaryLaw::new(&params)?;
    let samples = conditioned_long_run(
        &ev,
        1.0,
        30.0,
        1.0,
        1,
        default_dt(&params),
        10_000,
        &StreamFamily::new(111),
    )?;
    let ks = ks_one_sample(&samples, |y| if y <= 0.0 { 0.0 } else { law.cdf(y).unwrap() })?;
    Ok((
        ks.p_value > 0.01,
        format!("KS D = {:.4}, p = {:.3}", ks.statistic, ks.p_value),
    ))
}

fn backbone_law() -> Outcome {
    let params = p(-2.0);
    let ev = ThetaEvaluator::new(&params)?;
    let (t, n, dt) = (1.0, 4_000, default_dt(&params));
    let fam = StreamFamily::new(112);
    let eps = 1e-3;
    let cfg = |eps| BackboneConfig {
        eps,
        ..BackboneConfig::default()
    };
    let bb = backbone_marginal(&params, 1.0, t, dt, &cfg(eps), n, &fam.child(1))?;
    let cond = conditioned_marginals(&params, 1.0, t, dt, n, &fam.child(2), &ev)?;
    let ks = ks_two_sample(&bb.z, &cond.z)?;
    let half = backbone_marginal(&params, 1.0, t, dt, &cfg(eps / 2.0), n, &fam.child(3))?;
    let (m1, m2) = (McEstimate::from_samples(&bb.z)?, McEstimate::from_samples(&half.z)?);
    let shift = m1.z_score(&m2);
    Ok((
        ks.p_value > 0.01 && shift <= 2.0,
        format!("KS p = {:.3}; eps-halving mean shift {shift:.2} SE", ks.p_value),
    ))
}

fn feller_decomposition() -> Outcome {
    let r = feller_immigration_check(1.0, 1.0, 1.0, 1.0, 1e-3, 1e-3, 5_000, &StreamFamily::new(113))?;
    Ok((
        r.ks.p_value > 0.01,
        format!(
            "KS p = {:.3}; means direct {:.4}, excursions {:.4}, expected {:.4}",
            r.ks.p_value, r.direct_mean.mean, r.excursion_mean.mean, r.expected_mean
        ),
    ))
}

fn hdrift_structure() -> Outcome {
    let grid: Vec<f64> = (0..25).map(|k| 2f64.powi(k) * 1e-3).collect();
    let mut ok = true;
    let mut detail = Vec::new();
    for alpha in [0.5, 0.0, -0.5] {
        let ev = ThetaEvaluator::new(&p(alpha))?;
        let h = grid.iter().map(|&z| ev.hdrift(z)).collect::<Result<Vec<_>>>()?;
        let dec = h.windows(2).all(|w| w[1] < w[0]);
        ok &= dec;
        detail.push(format!("{alpha}: decreasing={dec}"));
    }
    let weak = ThetaEvaluator::new(&p(-0.5))?.hdrift(1e-6)?;
    let sup = ThetaEvaluator::new(&p(0.5))?.hdrift(1e4)?;
    ok &= (weak - 1.0).abs() <= 1e-3 && sup.abs() <= 5e-2;
    detail.push(format!("hdrift_weak(1e-6) = {weak:.6}, hdrift_super(1e4) = {sup:.4}"));
    for alpha in [-1.0, -2.0] {
        let ev = ThetaEvaluator::new(&p(alpha))?;
        let constant = grid
            .iter()
            .chain(&[1e-9, 1e9])
            .all(|&z| ev.hdrift(z).map(|h| h == 1.0).unwrap_or(false));
        ok &= constant;
        detail.push(format!("{alpha}: constant={constant}"));
    }
    Ok((ok, detail.join(", ")))
}

fn constructions_agree() -> Outcome {
    let mut ok = true;
    let mut detail = Vec::new();
    for (k, theta) in [0.0, 1.0].into_iter().enumerate() {
        let params = ModelParams::with_theta(-0.5, 1.0, 1.0, theta)?;
        let fam = StreamFamily::new(115).child(k as u64);
        let a = bdre_marginals(&params, 1.0, 2.0, 1e-3, 10_000, &fam.child(1))?;
        let b = time_change_marginals(&params, 1.0, 2.0, 1e-3, 10_000, &fam.child(2))?;
        let ks = ks_two_sample(&a.z, &b.z)?;
        ok &= ks.p_value > 0.01;
        detail.push(format!("theta={theta}: p={:.3}", ks.p_value));
    }
    Ok((ok, detail.join(", ")))
}

fn diffusion_approximation() -> Outcome {
    let params = p(-0.5);
    let rows = convergence_diagnostic(
        &params,
        1.0,
        &[50, 200, 800],
        1.0,
        200_000,
        default_dt(&params),
        &StreamFamily::new(116),
    )?;
    let ks: Vec<f64> = rows.iter().map(|r| r.ks_distance).collect();
    let last = rows.last().expect("three rows");
    let se = (last.survival_bpre.std_error.powi(2) + last.survival_bdre.std_error.powi(2)).sqrt();
    let gap = (last.survival_bpre.mean - last.survival_bdre.mean).abs() / se;
    let ok = ks.windows(2).all(|w| w[1] <= w[0]) && gap <= 3.0;
    Ok((
        ok,
        format!("KS distances {ks:.4?}; n=800 survival gap {gap:.2} combined SE"),
    ))
}

fn main() {
    let criteria: [Criterion; 16] = [
        ("supercritical limit", supercritical_limit),
        ("critical rate", critical_rate),
        ("intermediate rate", intermediate_rate),
        ("strong rate", strong_rate),
        ("weak-regime constant", weak_constant),
        ("density suite", density_suite),
        ("moment identity", moment_identity),
        ("Dufresne limit", dufresne_limit),
        ("martingale identity", martingale_identity),
        ("h-transform equivalence", h_transform_equivalence),
        ("stationary law", stationary_law),
        ("backbone equality in law", backbone_law),
        ("Feller-immigration decomposition", feller_decomposition),
        ("hdrift structure", hdrift_structure),
        ("equality of constructions", constructions_agree),
        ("diffusion approximation", diffusion_approximation),
    ];
    let only: Vec<usize> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|s| s.split(',').filter_map(|x| x.trim().parse().ok()).collect())
        .unwrap_or_default();
    let mut failed = 0;
    for (i, (name, f)) in criteria.iter().enumerate() {
        let id = i + 1;
        if !only.is_empty() && !only.contains(&id) {
            continue;
        }
        let start = Instant::now();
        let (ok, detail) = match f() {
            Ok(r) => r,
            Err(e) => (false, format!("error: {e}")),
        };
        if !ok {
            failed += 1;
        }
        println!(
            "criterion {id:>2} {name}: {} ({detail}) [{:.1}s]",
            if ok { "PASS" } else { "FAIL" },
            start.elapsed().as_secs_f64()
        );
    }
    if failed > 0 {
        println!("{failed} criterion(s) failed");
        std::process::exit(1);
    }
}
