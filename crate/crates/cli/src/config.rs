//! Run configuration: a sectioned TOML file with typed scalars.
//!
//! ```toml
//! output_dir = "out"
//! seed = 7
//!
//! [market]
//! model = "black_scholes"        # or "mean_reverting_drift"
//! mu = 0.08
//! sigma = 0.2
//!
//! [spread]
//! mode = "proportional_constant" # "absolute_constant", "proportional_stochastic"
//! eta = 0.01
//!
//! [preferences]
//! family = "power"               # "log", "exponential", "quadratic_truncated"
//! gamma = 5.0
//!
//! [grid]
//! horizon = 1.0
//! n_steps = 1000
//! n_paths = 2000
//! ```
//!
//! Every table rejects unknown keys.

use std::path::Path;

use notrade_core::{
    BaseConfig, Family, MarketModel, ModelKind, PathGrid, Preferences, SimOptions, SpreadMode, SpreadModel, SweepSpec,
    Tolerances,
};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default = "default_output_dir")]
    pub output_dir: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub market: MarketSection,
    #[serde(default)]
    pub spread: SpreadSection,
    pub preferences: PreferenceSection,
    #[serde(default)]
    pub grid: GridSection,
    #[serde(default)]
    pub experiment: ExperimentSection,
    #[serde(default)]
    pub simulation: SimOptions,
    #[serde(default)]
    pub tolerances: Tolerances,
}

fn default_output_dir() -> String {
    "out".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MarketSection {
    #[serde(default = "default_model")]
    pub model: ModelKind,
    pub mu: f64,
    pub sigma: f64,
    #[serde(default = "one")]
    pub s0: f64,
    /// Mean-reversion speed of the drift factor.
    #[serde(default)]
    pub kappa: f64,
    /// Volatility of the drift factor.
    #[serde(default)]
    pub nu: f64,
    #[serde(default)]
    pub rho: f64,
}

fn default_model() -> ModelKind {
    ModelKind::BlackScholes
}

fn one() -> f64 {
    1.0
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpreadSection {
    pub mode: SpreadMode,
    /// Relative half-spread at time zero.
    pub eta: f64,
    #[serde(default)]
    pub ou_speed: f64,
    #[serde(default)]
    pub ou_vol: f64,
}

impl Default for SpreadSection {
    fn default() -> Self {
        SpreadSection {
            mode: SpreadMode::ProportionalConstant,
            eta: 0.01,
            ou_speed: 0.0,
            ou_vol: 0.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FamilyName {
    Power,
    Log,
    Exponential,
    QuadraticTruncated,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreferenceSection {
    pub family: FamilyName,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gamma: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub p2: Option<f64>,
    #[serde(default)]
    pub beta: f64,
    #[serde(default)]
    pub delta: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    pub horizon: f64,
    pub n_steps: usize,
    pub n_paths: usize,
}

impl Default for GridSection {
    fn default() -> Self {
        GridSection {
            horizon: 1.0,
            n_steps: 1000,
            n_paths: 1000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentSection {
    #[serde(default = "one")]
    pub x0: f64,
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "yes")]
    pub common_random_numbers: bool,
    /// Target expected terminal wealths for `meanvar`.
    #[serde(default = "default_targets")]
    pub target_means: Vec<f64>,
}

impl Default for ExperimentSection {
    fn default() -> Self {
        ExperimentSection {
            x0: 1.0,
            eps_grid: default_eps_grid(),
            common_random_numbers: true,
            target_means: default_targets(),
        }
    }
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.0025, 0.005, 0.01, 0.02]
}

fn default_targets() -> Vec<f64> {
    vec![1.5]
}

fn yes() -> bool {
    true
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self, String> {
        toml::from_str(text).map_err(|e| e.to_string())
    }

    pub fn load(path: &Path) -> Result<Self, String> {
        let text = std::fs::read_to_string(path).map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        Self::from_toml(&text).map_err(|e| format!("{}: {e}", path.display()))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn market(&self) -> MarketModel {
        let m = &self.market;
        match m.model {
            ModelKind::BlackScholes => MarketModel::black_scholes(m.mu, m.sigma, m.s0),
            ModelKind::MeanRevertingDrift => MarketModel::mean_reverting(m.mu, m.sigma, m.kappa, m.nu, m.rho, m.s0),
        }
    }

    pub fn spread(&self) -> SpreadModel {
        SpreadModel {
            mode: self.spread.mode,
            eta0: self.spread.eta,
            ou_speed: self.spread.ou_speed,
            ou_vol: self.spread.ou_vol,
        }
    }

    pub fn preferences(&self) -> Result<Preferences, String> {
        let p = &self.preferences;
        let need = |v: Option<f64>, name: &str| v.ok_or_else(|| format!("preferences.{name} is required for {:?}", p.family));
        let family = match p.family {
            FamilyName::Power => Family::Power {
                gamma: need(p.gamma, "gamma")?,
            },
            FamilyName::Log => Family::Log,
            FamilyName::Exponential => Family::Exponential {
                p1: need(p.p1, "p1")?,
                p2: need(p.p2, "p2")?,
            },
            FamilyName::QuadraticTruncated => Family::QuadraticTruncated,
        };
        let pref = Preferences {
            family,
            beta: p.beta,
            delta: p.delta,
        };
        pref.validate().map_err(|e| e.to_string())?;
        Ok(pref)
    }

    pub fn grid(&self, seed: u64) -> PathGrid {
        PathGrid::new(self.grid.horizon, self.grid.n_steps, self.grid.n_paths, seed)
    }

    pub fn base(&self, seed: u64) -> Result<BaseConfig, String> {
        Ok(BaseConfig {
            model: self.market(),
            pref: self.preferences()?,
            spread: self.spread(),
            grid: self.grid(seed),
            x0: self.experiment.x0,
            options: self.simulation,
        })
    }

    pub fn sweep_spec(&self, seed: u64) -> Result<SweepSpec, String> {
        Ok(SweepSpec {
            eps_grid: self.experiment.eps_grid.clone(),
            base: self.base(seed)?,
            common_random_numbers: self.experiment.common_random_numbers,
        })
    }

    /// Checks every section against the core validators.
    pub fn validate(&self) -> Result<(), String> {
        let model = self.market();
        model.validate().map_err(|e| e.to_string())?;
        self.spread().validate(model.s0).map_err(|e| e.to_string())?;
        self.preferences()?;
        self.grid(0).validate().map_err(|e| e.to_string())?;
        self.simulation.validate().map_err(|e| e.to_string())?;
        if !(self.experiment.x0.is_finite()) {
            return Err("experiment.x0 must be finite".into());
        }
        Ok(())
    }
}

/// `--seed`, then the config file, then `NOTRADE_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env: Option<&str>) -> Result<u64, String> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| format!("NOTRADE_SEED must be an unsigned integer, got `{v}`")),
        None => Ok(0),
    }
}
