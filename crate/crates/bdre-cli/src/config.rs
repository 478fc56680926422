//! Command-line flags and the serializable experiment configuration.

use std::path::PathBuf;

use bdre::ModelParams;
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum CommandKind {
    Survival,
    Simulate,
    Condition,
    Backbone,
    Asymptotics,
    Density,
    BpreConverge,
    RegimeTable,
}

impl CommandKind {
    pub fn name(self) -> &'static str {
        match self {
            CommandKind::Survival => "survival",
            CommandKind::Simulate => "simulate",
            CommandKind::Condition => "condition",
            CommandKind::Backbone => "backbone",
            CommandKind::Asymptotics => "asymptotics",
            CommandKind::Density => "density",
            CommandKind::BpreConverge => "bpre-converge",
            CommandKind::RegimeTable => "regime-table",
        }
    }

    pub fn default_format(self) -> Format {
        match self {
            CommandKind::Survival | CommandKind::Backbone => Format::Json,
            _ => Format::Csv,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Format {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "kebab-case")]
pub enum Method {
    Euler,
    TimeChange,
}

/// Log-spaced evaluation grid; unset fields take the command's defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub min: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub points: Option<usize>,
}

/// Everything a run depends on. Serialized into every output, and
/// accepted back by `bdre run --config`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub command: CommandKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub params: Option<ModelParams>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub z0: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub horizon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dt: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub eps: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_path: Option<PathBuf>,
    pub format: Format,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub method: Option<Method>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub record_every: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub beta: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub v: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grid: Option<GridSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_list: Option<Vec<u64>>,
}

impl ExperimentConfig {
    pub fn empty(command: CommandKind, format: Option<Format>) -> Self {
        Self {
            command,
            params: None,
            z0: None,
            t: None,
            horizon: None,
            dt: None,
            n: None,
            seed: None,
            eps: None,
            output_path: None,
            format: format.unwrap_or(command.default_format()),
            method: None,
            record_every: None,
            beta: None,
            v: None,
            grid: None,
            n_list: None,
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "bdre",
    version,
    about = "Feller branching diffusions in a Brownian environment: exact formulas and simulation"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: CliCommand,
}

#[derive(Debug, Subcommand)]
pub enum CliCommand {
    /// Exact survival probability P(Z_t > 0), optionally with a Monte Carlo check.
    Survival(SurvivalArgs),
    /// Simulate the BDRE (Euler or time-change construction).
    Simulate(SimulateArgs),
    /// Simulate the process conditioned never to die out.
    Condition(ConditionArgs),
    /// Excursion (backbone) construction of the conditioned process.
    Backbone(BackboneArgs),
    /// ϑ, ϑ' and the conditioned environment drift on a z-grid.
    Asymptotics(AsymptoticsArgs),
    /// Density of 1/(2A_v) for the exponential functional A_v.
    Density(DensityArgs),
    /// Diffusion approximation of a branching process in random environment.
    BpreConverge(BpreArgs),
    /// One row per regime: decay profile, ϑ(1), Monte Carlo and exact survival.
    RegimeTable(RegimeTableArgs),
    /// Re-run a saved configuration or provenance header.
    Run(RunArgs),
}

#[derive(Debug, Args)]
pub struct ModelArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub alpha: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_b2: f64,
    #[arg(long, default_value_t = 1.0)]
    pub sigma_e2: f64,
    #[arg(long, default_value_t = 0.0)]
    pub theta: f64,
}

impl ModelArgs {
    fn params(&self) -> ModelParams {
        ModelParams {
            alpha: self.alpha,
            sigma_b2: self.sigma_b2,
            sigma_e2: self.sigma_e2,
            theta: self.theta,
        }
    }
}

#[derive(Debug, Args)]
pub struct OutputArgs {
    #[arg(long, short = 'o')]
    pub output_path: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub format: Option<Format>,
}

#[derive(Debug, Args)]
pub struct SurvivalArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, visible_alias = "z", default_value_t = 1.0, allow_hyphen_values = true)]
    pub z0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub t: f64,
    /// Replicas for an optional Monte Carlo estimate (needs --seed).
    #[arg(long)]
    pub n: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct SimulateArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, visible_alias = "z", default_value_t = 1.0, allow_hyphen_values = true)]
    pub z0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, value_enum, default_value_t = Method::Euler)]
    pub method: Method,
    /// Keep every k-th grid point in per-path CSV output.
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct ConditionArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, visible_alias = "z", default_value_t = 1.0, allow_hyphen_values = true)]
    pub z0: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub horizon: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 100)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = 1)]
    pub record_every: usize,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BackboneArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, visible_alias = "z", default_value_t = 1.0, allow_hyphen_values = true)]
    pub z0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub horizon: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, default_value_t = 1000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[arg(long, default_value_t = bdre::backbone::DEFAULT_EPS)]
    pub eps: f64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct GridArgs {
    #[arg(long)]
    pub grid_min: Option<f64>,
    #[arg(long)]
    pub grid_max: Option<f64>,
    #[arg(long)]
    pub points: Option<usize>,
}

impl GridArgs {
    fn spec(&self) -> Option<GridSpec> {
        let g = GridSpec {
            min: self.grid_min,
            max: self.grid_max,
            points: self.points,
        };
        (g != GridSpec::default()).then_some(g)
    }
}

#[derive(Debug, Args)]
pub struct AsymptoticsArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct DensityArgs {
    #[arg(long, allow_hyphen_values = true)]
    pub beta: f64,
    #[arg(long, allow_hyphen_values = true)]
    pub v: f64,
    /// Grid in a; defaults to the β = 0 support at this v.
    #[command(flatten)]
    pub grid: GridArgs,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct BpreArgs {
    #[command(flatten)]
    pub model: ModelArgs,
    #[arg(long, visible_alias = "z", default_value_t = 1.0, allow_hyphen_values = true)]
    pub z0: f64,
    #[arg(long, default_value_t = 1.0, allow_hyphen_values = true)]
    pub t: f64,
    /// Replicas per n.
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long, allow_hyphen_values = true)]
    pub dt: Option<f64>,
    #[arg(long, value_delimiter = ',', default_values_t = vec![50u64, 200, 800])]
    pub n_list: Vec<u64>,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RegimeTableArgs {
    #[arg(long, visible_alias = "z", default_value_t = 1.0, allow_hyphen_values = true)]
    pub z0: f64,
    #[arg(long, default_value_t = 5.0, allow_hyphen_values = true)]
    pub t: f64,
    #[arg(long, default_value_t = 10_000)]
    pub n: usize,
    #[arg(long)]
    pub seed: u64,
    #[command(flatten)]
    pub out: OutputArgs,
}

#[derive(Debug, Args)]
pub struct RunArgs {
    /// An experiment configuration or a provenance header (JSON).
    #[arg(long)]
    pub config: PathBuf,
}

pub const ASYMPTOTICS_GRID: (f64, f64, usize) = (1e-3, 1e3, 25);

pub const DENSITY_POINTS: usize = 200;

fn base(command: CommandKind, out: &OutputArgs) -> ExperimentConfig {
    let mut c = ExperimentConfig::empty(command, out.format);
    c.output_path = out.output_path.clone();
    c
}

/// Flags to configuration; `run` is handled by the caller.
pub fn from_cli(cmd: &CliCommand) -> Option<ExperimentConfig> {
    Some(match cmd {
        CliCommand::Survival(a) => ExperimentConfig {
            params: Some(a.model.params()),
            z0: Some(a.z0),
            t: Some(a.t),
            n: a.n,
            seed: a.seed,
            ..base(CommandKind::Survival, &a.out)
        },
        CliCommand::Simulate(a) => ExperimentConfig {
            params: Some(a.model.params()),
            z0: Some(a.z0),
            horizon: Some(a.horizon),
            dt: a.dt,
            n: Some(a.n),
            seed: Some(a.seed),
            method: Some(a.method),
            record_every: Some(a.record_every),
            ..base(CommandKind::Simulate, &a.out)
        },
        CliCommand::Condition(a) => ExperimentConfig {
            params: Some(a.model.params()),
            z0: Some(a.z0),
            horizon: Some(a.horizon),
            dt: a.dt,
            n: Some(a.n),
            seed: Some(a.seed),
            record_every: Some(a.record_every),
            ..base(CommandKind::Condition, &a.out)
        },
        CliCommand::Backbone(a) => ExperimentConfig {
            params: Some(a.model.params()),
            z0: Some(a.z0),
            horizon: Some(a.horizon),
            dt: a.dt,
            n: Some(a.n),
            seed: Some(a.seed),
            eps: Some(a.eps),
            ..base(CommandKind::Backbone, &a.out)
        },
        CliCommand::Asymptotics(a) => ExperimentConfig {
            params: Some(a.model.params()),
            grid: a.grid.spec(),
            ..base(CommandKind::Asymptotics, &a.out)
        },
        CliCommand::Density(a) => ExperimentConfig {
            beta: Some(a.beta),
            v: Some(a.v),
            grid: a.grid.spec(),
            ..base(CommandKind::Density, &a.out)
        },
        CliCommand::BpreConverge(a) => ExperimentConfig {
            params: Some(a.model.params()),
            z0: Some(a.z0),
            t: Some(a.t),
            n: Some(a.n),
            dt: a.dt,
            n_list: Some(a.n_list.clone()),
            seed: Some(a.seed),
            ..base(CommandKind::BpreConverge, &a.out)
        },
        CliCommand::RegimeTable(a) => ExperimentConfig {
            z0: Some(a.z0),
            t: Some(a.t),
            n: Some(a.n),
            seed: Some(a.seed),
            ..base(CommandKind::RegimeTable, &a.out)
        },
        CliCommand::Run(_) => return None,
    })
}
