//! Run configuration: a human-editable TOML schema plus named presets.

use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::domain::SpatialDomain;
use crate::kernel::{Envelope, Kernel, KernelShape};
use crate::params::{make_params, ModelParams, ParamsError};
use crate::rates::RateField;
use crate::sim::{EngineKind, Horizon, InitialCondition, ReplicateSpec, DEFAULT_EVENT_CAP};
use crate::testfn::TestFn;
use crate::trace::SnapshotPlan;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("config parse error: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("bad config: missing section or field '{0}'")]
    Missing(&'static str),
    #[error("bad config: {0}")]
    Invalid(String),
    #[error("bad config: {0}")]
    Params(#[from] ParamsError),
    #[error("unknown preset '{0}'; available: {1}")]
    UnknownPreset(String, String),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub mode: String,
    pub dimension: usize,
    #[serde(default)]
    pub side: Option<f64>,
    #[serde(default)]
    pub bounds: Option<Vec<(f64, f64)>>,
    #[serde(default)]
    pub lattice_bounds: Option<Vec<(i64, i64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RatesConfig {
    pub gamma: f64,
    pub mu: f64,
    pub alpha: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelConfig {
    pub shape: String,
    #[serde(default)]
    pub radius: Option<f64>,
    #[serde(default)]
    pub inner: Option<f64>,
    #[serde(default)]
    pub outer: Option<f64>,
    #[serde(default)]
    pub variance: Option<f64>,
    #[serde(default)]
    pub edges: Option<Vec<f64>>,
    #[serde(default)]
    pub densities: Option<Vec<f64>>,
    #[serde(default = "default_mass")]
    pub mass: f64,
    #[serde(default)]
    pub envelope_c: Option<f64>,
    #[serde(default)]
    pub envelope_proposal: Option<Box<KernelConfig>>,
}

fn default_mass() -> f64 {
    1.0
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct KernelsConfig {
    pub dispersal: KernelConfig,
    pub competition: KernelConfig,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitialConfig {
    pub kind: String,
    #[serde(default)]
    pub position: Option<Vec<f64>>,
    #[serde(default)]
    pub positions: Option<Vec<Vec<f64>>>,
    #[serde(default)]
    pub count: Option<usize>,
    #[serde(default)]
    pub intensity: Option<f64>,
    #[serde(default)]
    pub window: Option<Vec<(f64, f64)>>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub t_end: f64,
    pub replicates: usize,
    #[serde(default = "default_engine")]
    pub engine: String,
    #[serde(default)]
    pub snapshot_dt: Option<f64>,
    #[serde(default)]
    pub snapshot_times: Option<Vec<f64>>,
    #[serde(default)]
    pub record_positions: bool,
    #[serde(default)]
    pub record_pair_u: bool,
    #[serde(default)]
    pub count_radius: Option<f64>,
    #[serde(default)]
    pub load_radius: Option<f64>,
    #[serde(default)]
    pub observables: Vec<TestFn>,
    #[serde(default = "default_event_cap")]
    pub event_cap: u64,
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_engine() -> String {
    "auto".to_string()
}

fn default_event_cap() -> u64 {
    DEFAULT_EVENT_CAP
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanFieldSection {
    pub grid_n: usize,
    pub t_end: f64,
    #[serde(default)]
    pub dt: Option<f64>,
    #[serde(default = "default_out_dt")]
    pub out_dt: f64,
    /// uniform | c0 | sin_perturbed | cos_perturbed
    #[serde(default = "default_mf_initial")]
    pub initial: String,
    #[serde(default)]
    pub initial_value: Option<f64>,
    #[serde(default)]
    pub amplitude: Option<f64>,
    /// integrate | logistic_oracle | dbc_decay | fixed_point | l2_decay
    #[serde(default = "default_mf_study")]
    pub study: String,
}

fn default_out_dt() -> f64 {
    0.1
}

fn default_mf_initial() -> String {
    "uniform".into()
}

fn default_mf_study() -> String {
    "integrate".into()
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default)]
    pub name: Option<String>,
    #[serde(default)]
    pub intensity: Option<f64>,
    #[serde(default)]
    pub replicates: Option<usize>,
    #[serde(default)]
    pub window_halfwidth: Option<f64>,
    #[serde(default)]
    pub b_radius: Option<f64>,
    #[serde(default)]
    pub ladder: Option<Vec<usize>>,
    #[serde(default)]
    pub t_end: Option<f64>,
    #[serde(default)]
    pub snapshot_dt: Option<f64>,
    #[serde(default)]
    pub replicates_per_n: Option<usize>,
    #[serde(default)]
    pub grid_n: Option<usize>,
    /// adaptive | fixed
    #[serde(default)]
    pub policy: Option<String>,
    #[serde(default)]
    pub fallback_t: Option<f64>,
    #[serde(default)]
    pub fixed_t: Option<f64>,
    #[serde(default)]
    pub mass_bound: Option<f64>,
    #[serde(default)]
    pub escape_threshold: Option<usize>,
    #[serde(default)]
    pub beta: Option<f64>,
    #[serde(default)]
    pub sigma: Option<f64>,
    #[serde(default)]
    pub initial_halfwidth: Option<f64>,
    /// Control runs set this: the pass condition flips to "the effect is
    /// detected" (mean excludes zero).
    #[serde(default)]
    pub expect_nonzero: bool,
    /// When false, the extinction pass condition checks only the mass
    /// bound, not full extinction within the horizon.
    #[serde(default = "default_true")]
    pub require_full_extinction: bool,
}

fn default_true() -> bool {
    true
}

/// One parsed run configuration file.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub domain: Option<DomainConfig>,
    #[serde(default)]
    pub rates: Option<RatesConfig>,
    #[serde(default)]
    pub kernels: Option<KernelsConfig>,
    #[serde(default)]
    pub initial: Option<InitialConfig>,
    #[serde(default)]
    pub run: Option<RunSection>,
    #[serde(default)]
    pub meanfield: Option<MeanFieldSection>,
    #[serde(default)]
    pub experiment: Option<ExperimentSection>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        Ok(toml::from_str(text)?)
    }

    pub fn domain(&self) -> Result<SpatialDomain, ConfigError> {
        let d = self.domain.as_ref().ok_or(ConfigError::Missing("domain"))?;
        match d.mode.as_str() {
            "unbounded" => Ok(SpatialDomain::Unbounded { dim: d.dimension }),
            "torus" => {
                let side = d.side.ok_or(ConfigError::Missing("domain.side"))?;
                if side <= 0.0 {
                    return Err(ConfigError::Invalid("domain.side must be positive".into()));
                }
                Ok(SpatialDomain::Torus { side, dim: d.dimension })
            }
            "box" => {
                let bounds = d.bounds.clone().ok_or(ConfigError::Missing("domain.bounds"))?;
                if bounds.iter().any(|(a, b)| a >= b) {
                    return Err(ConfigError::Invalid("domain.bounds must be ordered".into()));
                }
                Ok(SpatialDomain::Box { bounds })
            }
            "lattice" => {
                let bounds = d
                    .lattice_bounds
                    .clone()
                    .ok_or(ConfigError::Missing("domain.lattice_bounds"))?;
                Ok(SpatialDomain::Lattice { bounds })
            }
            other => Err(ConfigError::Invalid(format!("unknown domain mode '{other}'"))),
        }
    }

    pub fn kernel(cfg: &KernelConfig, dim: usize) -> Result<Kernel, ConfigError> {
        let shape = match cfg.shape.as_str() {
            "tophat" => KernelShape::Tophat {
                radius: cfg.radius.ok_or(ConfigError::Missing("kernel.radius"))?,
            },
            "annulus" => KernelShape::Annulus {
                inner: cfg.inner.ok_or(ConfigError::Missing("kernel.inner"))?,
                outer: cfg.outer.ok_or(ConfigError::Missing("kernel.outer"))?,
            },
            "gaussian" => KernelShape::Gaussian {
                variance: cfg.variance.ok_or(ConfigError::Missing("kernel.variance"))?,
            },
            "lattice_nn" => KernelShape::LatticeNn,
            "point" => KernelShape::Point,
            "tabulated" => KernelShape::Tabulated {
                edges: cfg.edges.clone().ok_or(ConfigError::Missing("kernel.edges"))?,
                densities: cfg
                    .densities
                    .clone()
                    .ok_or(ConfigError::Missing("kernel.densities"))?,
            },
            other => return Err(ConfigError::Invalid(format!("unknown kernel shape '{other}'"))),
        };
        let envelope = match (&cfg.envelope_c, &cfg.envelope_proposal) {
            (None, None) => Envelope::default(),
            (c, proposal) => Envelope {
                c: c.unwrap_or(1.0),
                proposal: match proposal {
                    Some(p) => Some(Box::new(Self::kernel(p, dim)?)),
                    None => None,
                },
            },
        };
        Ok(Kernel { shape, mass: cfg.mass, dim, envelope })
    }

    /// Build and validate the model parameters.
    pub fn params(&self) -> Result<ModelParams, ConfigError> {
        let domain = self.domain()?;
        let dim = domain.dim();
        let rates = self.rates.as_ref().ok_or(ConfigError::Missing("rates"))?;
        let kernels = self.kernels.as_ref().ok_or(ConfigError::Missing("kernels"))?;
        let dispersal = Self::kernel(&kernels.dispersal, dim)?;
        let competition = Self::kernel(&kernels.competition, dim)?;
        Ok(make_params(
            domain,
            RateField::constant(rates.gamma),
            RateField::constant(rates.mu),
            RateField::constant(rates.alpha),
            dispersal,
            competition,
        )?)
    }

    pub fn initial_condition(&self) -> Result<InitialCondition, ConfigError> {
        let i = self.initial.as_ref().ok_or(ConfigError::Missing("initial"))?;
        match i.kind.as_str() {
            "points" => Ok(InitialCondition::Points {
                positions: i.positions.clone().ok_or(ConfigError::Missing("initial.positions"))?,
            }),
            "replicated" => Ok(InitialCondition::Replicated {
                position: i.position.clone().ok_or(ConfigError::Missing("initial.position"))?,
                count: i.count.ok_or(ConfigError::Missing("initial.count"))?,
            }),
            "poisson_uniform" => Ok(InitialCondition::PoissonUniform {
                intensity: i.intensity.ok_or(ConfigError::Missing("initial.intensity"))?,
                window: i.window.clone(),
            }),
            "uniform_iid" => Ok(InitialCondition::UniformIid {
                count: i.count.ok_or(ConfigError::Missing("initial.count"))?,
                window: i.window.clone(),
            }),
            other => Err(ConfigError::Invalid(format!("unknown initial kind '{other}'"))),
        }
    }

    pub fn engine(&self) -> Result<EngineKind, ConfigError> {
        let run = self.run.as_ref().ok_or(ConfigError::Missing("run"))?;
        match run.engine.as_str() {
            "faithful" => Ok(EngineKind::Faithful),
            "indexed" => Ok(EngineKind::Indexed),
            "auto" => Ok(EngineKind::Auto),
            other => Err(ConfigError::Invalid(format!("unknown engine '{other}'"))),
        }
    }

    pub fn snapshot_plan(&self) -> Result<SnapshotPlan, ConfigError> {
        let run = self.run.as_ref().ok_or(ConfigError::Missing("run"))?;
        let mut plan = match (&run.snapshot_times, run.snapshot_dt) {
            (Some(times), _) => SnapshotPlan::at_times(times.clone()),
            (None, Some(dt)) => SnapshotPlan::regular(run.t_end, dt),
            (None, None) => SnapshotPlan::at_times(vec![0.0, run.t_end]),
        };
        plan.record_positions = run.record_positions;
        plan.record_pair_u = run.record_pair_u;
        plan.count_radius = run.count_radius;
        plan.load_radius = run.load_radius;
        Ok(plan)
    }

    /// Build the full replicate fleet spec for the `simulate` subcommand.
    pub fn replicate_spec(&self, seed_override: Option<u64>) -> Result<ReplicateSpec, ConfigError> {
        let params = Arc::new(self.params()?);
        let run = self.run.as_ref().ok_or(ConfigError::Missing("run"))?;
        let seed = seed_override.or(run.seed).unwrap_or(0);
        let spec = ReplicateSpec::new(
            params,
            self.engine()?,
            self.initial_condition()?,
            Horizon::UntilTime(run.t_end),
            self.snapshot_plan()?,
        )
        .with_observers(run.observables.clone())
        .seeded(seed, run.replicates)
        .with_event_cap(run.event_cap);
        Ok(spec)
    }
}

/// Named presets shipped with the crate, one TOML file each.
pub const PRESETS: &[(&str, &str)] = &[
    ("fig1", include_str!("../presets/fig1.toml")),
    ("fig2a", include_str!("../presets/fig2a.toml")),
    ("fig2b", include_str!("../presets/fig2b.toml")),
    ("fig3", include_str!("../presets/fig3.toml")),
    ("engine-equiv-a", include_str!("../presets/engine-equiv-a.toml")),
    ("engine-equiv-b", include_str!("../presets/engine-equiv-b.toml")),
    ("engine-equiv-c", include_str!("../presets/engine-equiv-c.toml")),
    ("martingale", include_str!("../presets/martingale.toml")),
    ("moment", include_str!("../presets/moment.toml")),
    ("logistic-oracle", include_str!("../presets/logistic-oracle.toml")),
    ("dbc-decay", include_str!("../presets/dbc-decay.toml")),
    ("fixed-point", include_str!("../presets/fixed-point.toml")),
    ("l2-decay", include_str!("../presets/l2-decay.toml")),
    ("stationarity", include_str!("../presets/stationarity.toml")),
    ("stationarity-broken-mu", include_str!("../presets/stationarity-broken-mu.toml")),
    ("slivnyak", include_str!("../presets/slivnyak.toml")),
    ("extinction-remark61", include_str!("../presets/extinction-remark61.toml")),
    ("extinction-compact", include_str!("../presets/extinction-compact.toml")),
    ("extinction-massbound", include_str!("../presets/extinction-massbound.toml")),
    ("lattice-survival", include_str!("../presets/lattice-survival.toml")),
    ("scaling-c1", include_str!("../presets/scaling-c1.toml")),
    ("scaling-c2", include_str!("../presets/scaling-c2.toml")),
];

pub fn preset(name: &str) -> Result<RunConfig, ConfigError> {
    match PRESETS.iter().find(|(n, _)| *n == name) {
        Some((_, text)) => RunConfig::parse(text),
        None => {
            let names: Vec<&str> = PRESETS.iter().map(|(n, _)| *n).collect();
            Err(ConfigError::UnknownPreset(name.to_string(), names.join(", ")))
        }
    }
}

pub fn preset_text(name: &str) -> Option<&'static str> {
    PRESETS.iter().find(|(n, _)| *n == name).map(|(_, t)| *t)
}
