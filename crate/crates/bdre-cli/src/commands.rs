//! One function per subcommand, each turning a configuration into an artifact.

use bdre::asymptotics::ThetaEvaluator;
use bdre::backbone::{self, BackboneConfig};
use bdre::bpre::convergence_diagnostic;
use bdre::exact::{survival_exact_report, InvTwoADensity, QuadratureSettings};
use bdre::simulate::{self, Marginals, TrajectorySet};
use bdre::stats::ks_two_sample;
use bdre::{classify_regime, decay_profile, default_dt, McEstimate, ModelParams, StreamFamily};
use serde_json::json;

use crate::config::{CommandKind, ExperimentConfig, Format, GridSpec, Method, ASYMPTOTICS_GRID, DENSITY_POINTS};
use crate::error::{config, CliError};
use crate::output::{num, Artifact};

fn need<T: Copy>(v: Option<T>, name: &str) -> Result<T, CliError> {
    v.ok_or_else(|| CliError::Config(format!("missing required setting `{name}`")))
}

fn params(cfg: &ExperimentConfig) -> Result<ModelParams, CliError> {
    let p = need(cfg.params, "params")?;
    p.validate()?;
    Ok(p)
}

fn family(cfg: &ExperimentConfig) -> Result<StreamFamily, CliError> {
    match cfg.seed {
        Some(s) => Ok(StreamFamily::new(s)),
        None => config(format!("`{}` needs an explicit --seed", cfg.command.name())),
    }
}

fn log_grid(min: f64, max: f64, points: usize) -> Result<Vec<f64>, CliError> {
    if !(min > 0.0) || !(max > min) || !max.is_finite() || points < 2 {
        return config("grid needs 0 < min < max and at least two points");
    }
    let (a, b) = (min.ln(), max.ln());
    Ok((0..points)
        .map(|i| (a + (b - a) * i as f64 / (points - 1) as f64).exp())
        .collect())
}

pub fn run(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    match cfg.command {
        CommandKind::Survival => survival(cfg),
        CommandKind::Simulate => simulate_cmd(cfg),
        CommandKind::Condition => condition(cfg),
        CommandKind::Backbone => backbone_cmd(cfg),
        CommandKind::Asymptotics => asymptotics(cfg),
        CommandKind::Density => density(cfg),
        CommandKind::BpreConverge => bpre(cfg),
        CommandKind::RegimeTable => regime_table(cfg),
    }
}

fn survival(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let p = params(cfg)?;
    let (z0, t) = (need(cfg.z0, "z0")?, need(cfg.t, "t")?);
    let report = survival_exact_report(&p, z0, t, &QuadratureSettings::default())?;
    let mc = match cfg.n {
        Some(n) => Some(simulate::mc_survival(&p, z0, t, n, &family(cfg)?)?),
        None => None,
    };
    let regime = classify_regime(&p)?;
    Ok(match cfg.format {
        Format::Json => Artifact::Json(json!({
            "regime": regime.name(),
            "z0": z0,
            "t": t,
            "survival": report,
            "mc": mc,
        })),
        Format::Csv => {
            let mut row = vec![
                regime.name().to_string(),
                num(z0),
                num(t),
                num(report.value),
                serde_json::to_value(report.route)
                    .ok()
                    .and_then(|v| v.as_str().map(str::to_string))
                    .unwrap_or_default(),
                num(report.error_estimate),
            ];
            match mc {
                Some(m) => row.extend([num(m.mean), num(m.std_error), m.n.to_string()]),
                None => row.extend([String::new(), String::new(), String::new()]),
            }
            Artifact::Table {
                header: vec![
                    "regime",
                    "z0",
                    "t",
                    "survival",
                    "route",
                    "error_estimate",
                    "mc_mean",
                    "mc_std_error",
                    "mc_n",
                ],
                rows: vec![row],
            }
        }
    })
}

fn dt_for(cfg: &ExperimentConfig, p: &ModelParams) -> f64 {
    cfg.dt.unwrap_or_else(|| default_dt(p))
}

fn path_table(set: &TrajectorySet, every: usize) -> Result<Artifact, CliError> {
    if every == 0 {
        return config("record-every must be at least 1");
    }
    let mut rows = Vec::new();
    for (i, path) in set.paths.iter().enumerate() {
        let last = path.z.len() - 1;
        for k in (0..=last).filter(|k| k % every == 0 || *k == last) {
            rows.push(vec![i.to_string(), num(set.times[k]), num(path.z[k]), num(path.s[k])]);
        }
    }
    Ok(Artifact::Table {
        header: vec!["path", "t", "z", "s"],
        rows,
    })
}

fn quantiles(xs: &[f64]) -> serde_json::Value {
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    json!({ "q05": q(0.05), "q25": q(0.25), "q50": q(0.5), "q75": q(0.75), "q95": q(0.95) })
}

fn marginal_summary(m: &Marginals, extra: serde_json::Value) -> Result<Artifact, CliError> {
    let mut doc = json!({
        "n": m.z.len(),
        "horizon": m.horizon,
        "survival": m.survival()?,
        "mean_z": McEstimate::from_samples(&m.z)?,
        "mean_s": McEstimate::from_samples(&m.s)?,
        "z_quantiles": quantiles(&m.z),
    });
    if let (Some(d), Some(e)) = (doc.as_object_mut(), extra.as_object()) {
        d.extend(e.clone());
    }
    Ok(Artifact::Json(doc))
}

fn simulate_cmd(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let p = params(cfg)?;
    let fam = family(cfg)?;
    let (z0, horizon, n) = (need(cfg.z0, "z0")?, need(cfg.horizon, "horizon")?, need(cfg.n, "n")?);
    let dt = dt_for(cfg, &p);
    let method = cfg.method.unwrap_or(Method::Euler);
    match cfg.format {
        Format::Csv => {
            let set = match method {
                Method::Euler => simulate::simulate_bdre(&p, z0, horizon, dt, n, &fam)?,
                Method::TimeChange => simulate::simulate_via_time_change(&p, z0, horizon, dt, n, &fam)?,
            };
            path_table(&set, cfg.record_every.unwrap_or(1))
        }
        Format::Json => {
            let m = match method {
                Method::Euler => simulate::bdre_marginals(&p, z0, horizon, dt, n, &fam)?,
                Method::TimeChange => simulate::time_change_marginals(&p, z0, horizon, dt, n, &fam)?,
            };
            marginal_summary(&m, json!({ "seed": cfg.seed, "dt": dt }))
        }
    }
}

fn condition(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let p = params(cfg)?;
    let fam = family(cfg)?;
    let (z0, horizon, n) = (need(cfg.z0, "z0")?, need(cfg.horizon, "horizon")?, need(cfg.n, "n")?);
    let dt = dt_for(cfg, &p);
    let ev = ThetaEvaluator::new(&p)?;
    match cfg.format {
        Format::Csv => {
            let set = simulate::simulate_conditioned(&p, z0, horizon, dt, n, &fam, &ev)?;
            path_table(&set, cfg.record_every.unwrap_or(1))
        }
        Format::Json => {
            let m = simulate::conditioned_marginals(&p, z0, horizon, dt, n, &fam, &ev)?;
            marginal_summary(&m, json!({ "seed": cfg.seed, "dt": dt, "regime": ev.regime().name() }))
        }
    }
}

fn backbone_cmd(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let p = params(cfg)?;
    let fam = family(cfg)?;
    let (z0, horizon, n) = (need(cfg.z0, "z0")?, need(cfg.horizon, "horizon")?, need(cfg.n, "n")?);
    let dt = dt_for(cfg, &p);
    let bcfg = BackboneConfig {
        eps: need(cfg.eps, "eps")?,
        immigration: true,
    };
    let set = backbone::backbone_simulate(&p, z0, horizon, dt, &bcfg, n, &fam.child(1))?;
    let counts = (0..n as u64)
        .map(|i| {
            backbone::backbone_replica(&p, z0, horizon, dt, &bcfg, &fam.child(1), i)
                .map(|r| backbone::family_counts(&r))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let ev = ThetaEvaluator::new(&p)?;
    let reference = simulate::conditioned_marginals(&p, z0, horizon, dt, n, &fam.child(2), &ev)?;
    let finals = set.final_z();
    let ks = ks_two_sample(&finals, &reference.z)?;
    match cfg.format {
        Format::Json => Ok(Artifact::Json(json!({
            "n": n,
            "eps": bcfg.eps,
            "violation_rate": backbone::violation_rate(&set),
            "ks_vs_conditioned": ks,
            "mean_z": McEstimate::from_samples(&finals)?,
            "family_counts": counts,
        }))),
        Format::Csv => Ok(Artifact::Table {
            header: vec!["replica", "initial_families", "immigrant_families", "z_final"],
            rows: counts
                .iter()
                .zip(&finals)
                .enumerate()
                .map(|(i, (c, z))| vec![i.to_string(), c.initial.to_string(), c.immigrant.to_string(), num(*z)])
                .collect(),
        }),
    }
}

fn grid_values(g: Option<GridSpec>, default: (f64, f64, usize)) -> Result<Vec<f64>, CliError> {
    let g = g.unwrap_or_default();
    log_grid(
        g.min.unwrap_or(default.0),
        g.max.unwrap_or(default.1),
        g.points.unwrap_or(default.2),
    )
}

fn rows_to_json(header: &[&str], rows: &[Vec<String>]) -> serde_json::Value {
    serde_json::Value::Array(
        rows.iter()
            .map(|r| {
                let obj: serde_json::Map<String, serde_json::Value> = header
                    .iter()
                    .zip(r)
                    .map(|(h, v)| {
                        let val = v
                            .parse::<f64>()
                            .ok()
                            .and_then(|x| serde_json::Number::from_f64(x).map(serde_json::Value::Number))
                            .unwrap_or_else(|| serde_json::Value::String(v.clone()));
                        (h.to_string(), val)
                    })
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect(),
    )
}

fn table(format: Format, header: Vec<&'static str>, rows: Vec<Vec<String>>) -> Artifact {
    match format {
        Format::Csv => Artifact::Table { header, rows },
        Format::Json => Artifact::Json(rows_to_json(&header, &rows)),
    }
}

fn asymptotics(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let p = params(cfg)?;
    let ev = ThetaEvaluator::new(&p)?;
    let zs = grid_values(cfg.grid, ASYMPTOTICS_GRID)?;
    let rows = zs
        .iter()
        .map(|&z| {
            Ok(vec![
                num(z),
                num(ev.vartheta(z)?),
                num(ev.vartheta_prime(z)?),
                num(ev.hdrift(z)?),
            ])
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(table(
        cfg.format,
        vec!["z", "vartheta", "vartheta_prime", "hdrift"],
        rows,
    ))
}

fn density(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let (beta, v) = (need(cfg.beta, "beta")?, need(cfg.v, "v")?);
    let q = QuadratureSettings::default();
    let (lo, hi) = InvTwoADensity::new(v, 0.0, &q)?.support();
    let d = InvTwoADensity::new(v, beta, &q)?;
    let as_ = grid_values(cfg.grid, (lo, hi, DENSITY_POINTS))?;
    let rows = as_
        .iter()
        .map(|&a| Ok(vec![num(a), num(d.pdf(a)?)]))
        .collect::<Result<Vec<_>, CliError>>()?;
    Ok(table(cfg.format, vec!["a", "density"], rows))
}

fn bpre(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let p = params(cfg)?;
    let fam = family(cfg)?;
    let n_list = cfg
        .n_list
        .clone()
        .ok_or_else(|| CliError::Config("missing required setting `n_list`".into()))?;
    let (z0, t, reps) = (need(cfg.z0, "z0")?, need(cfg.t, "t")?, need(cfg.n, "n")?);
    let table_rows = convergence_diagnostic(&p, z0, &n_list, t, reps, dt_for(cfg, &p), &fam)?;
    let rows = table_rows
        .iter()
        .map(|r| {
            let se = (r.survival_bpre.std_error.powi(2) + r.survival_bdre.std_error.powi(2)).sqrt();
            vec![
                r.n.to_string(),
                num(r.ks_distance),
                num(r.survival_bpre.mean),
                num(r.survival_bdre.mean),
                num(se),
            ]
        })
        .collect();
    Ok(table(
        cfg.format,
        vec!["n", "ks_distance", "survival_bpre", "survival_bdre", "se"],
        rows,
    ))
}

/// α for the five regimes at σ_e² = σ_b² = 1.
pub const REGIME_ALPHAS: [f64; 5] = [0.5, 0.0, -0.5, -1.0, -2.0];

fn regime_table(cfg: &ExperimentConfig) -> Result<Artifact, CliError> {
    let fam = family(cfg)?;
    let (z0, t, n) = (need(cfg.z0, "z0")?, need(cfg.t, "t")?, need(cfg.n, "n")?);
    let q = QuadratureSettings::default();
    let mut rows = Vec::new();
    for (i, &alpha) in REGIME_ALPHAS.iter().enumerate() {
        let p = ModelParams::new(alpha, 1.0, 1.0)?;
        let prof = decay_profile(&p)?;
        let ev = ThetaEvaluator::new(&p)?;
        let mc = simulate::mc_survival(&p, z0, t, n, &fam.child(i as u64))?;
        let exact = survival_exact_report(&p, z0, t, &q)?;
        rows.push(vec![
            prof.regime.name().to_string(),
            num(prof.lambda),
            num(prof.poly_power),
            num(ev.vartheta(1.0)?),
            num(mc.mean),
            num(mc.std_error),
            num(exact.value),
        ]);
    }
    Ok(table(
        cfg.format,
        vec![
            "regime",
            "lambda",
            "poly_power",
            "vartheta_1",
            "mc_estimate",
            "mc_std_error",
            "quadrature_estimate",
        ],
        rows,
    ))
}
