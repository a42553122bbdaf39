//! TOML configuration for single runs and sweeps. Powers are given in dBm and
//! SINR targets in dB; they are converted to linear values on ingestion.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::altmin::StopRule;
use crate::conic::SolverSettings;
use crate::error::{Error, Result};
use crate::factorize::ManifoldSettings;
use crate::model::{db_to_linear, dbm_to_mw, AngleBand, Scenario};

/// One SINR target for every user, or one per user.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum SinrDb {
    Uniform(f64),
    PerUser(Vec<f64>),
}

fn default_n_t() -> usize {
    0
}

fn default_nlos_paths() -> usize {
    2
}

fn default_nlos_variance() -> f64 {
    0.01
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    pub seed: u64,
    pub n_bs: usize,
    #[serde(default = "default_n_t")]
    pub n_t: usize,
    pub p_t_dbm: f64,
    pub noise_power_dbm: f64,
    pub sinr_db: SinrDb,
    pub grid_size: usize,
    pub user_angles_deg: Vec<f64>,
    pub objective_bands_deg: Vec<[f64; 2]>,
    /// Pattern weights, one per grid point. All ones when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<Vec<f64>>,
    #[serde(default = "default_nlos_paths")]
    pub nlos_paths_per_user: usize,
    #[serde(default = "default_nlos_variance")]
    pub nlos_gain_variance: f64,
    #[serde(default = "StopRule::design_default")]
    pub design_stop: StopRule,
    #[serde(default = "StopRule::factorization_default")]
    pub factorization_stop: StopRule,
    #[serde(default)]
    pub manifold: ManifoldSettings,
    #[serde(default)]
    pub solver: SolverSettings,
}

impl ScenarioConfig {
    /// Full-scale defaults: 128 antennas, three users, 30 dB targets, on a
    /// seed whose channels admit a feasible design.
    pub fn baseline() -> Self {
        Self {
            seed: 1,
            n_bs: 128,
            n_t: 0,
            p_t_dbm: 20.0,
            noise_power_dbm: 0.0,
            sinr_db: SinrDb::Uniform(30.0),
            grid_size: 400,
            user_angles_deg: vec![-70.0, -40.0, -10.0],
            objective_bands_deg: vec![[10.0, 30.0], [40.0, 60.0]],
            weights: None,
            nlos_paths_per_user: 2,
            nlos_gain_variance: 0.01,
            design_stop: StopRule {
                max_iters: 100,
                ..StopRule::design_default()
            },
            factorization_stop: StopRule::factorization_default(),
            manifold: ManifoldSettings::default(),
            solver: SolverSettings::default(),
        }
    }

    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.scenario()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// First 16 hex digits of the SHA-256 of the canonical TOML form.
    pub fn hash(&self) -> String {
        short_hash(&self.to_toml())
    }

    /// Validated linear-unit scenario.
    pub fn scenario(&self) -> Result<Scenario> {
        let n_c = self.user_angles_deg.len();
        let sinr_db = match &self.sinr_db {
            SinrDb::Uniform(g) => vec![*g; n_c],
            SinrDb::PerUser(v) => v.clone(),
        };
        if sinr_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("sinr_db", "thresholds must be finite"));
        }
        for (field, v) in [("p_t_dbm", self.p_t_dbm), ("noise_power_dbm", self.noise_power_dbm)] {
            if !v.is_finite() {
                return Err(Error::config(field, "must be finite"));
            }
        }
        let scenario = Scenario {
            n_bs: self.n_bs,
            n_c,
            n_t: self.n_t,
            p_t: dbm_to_mw(self.p_t_dbm),
            noise_power: dbm_to_mw(self.noise_power_dbm),
            sinr_thresholds: sinr_db.iter().map(|&g| db_to_linear(g)).collect(),
            grid_size: self.grid_size,
            objective_bands: self
                .objective_bands_deg
                .iter()
                .map(|[lo, hi]| AngleBand::new(*lo, *hi))
                .collect(),
            weight_diag: self.weights.clone().unwrap_or_else(|| vec![1.0; self.grid_size]),
            user_angles_deg: self.user_angles_deg.clone(),
            nlos_paths_per_user: self.nlos_paths_per_user,
            nlos_gain_variance: self.nlos_gain_variance,
            rng_seed: self.seed,
        };
        scenario.validate().map_err(|e| match e {
            Error::Config { field, message } => Error::Config {
                field: match field.as_str() {
                    "p_t" => "p_t_dbm".into(),
                    "noise_power" => "noise_power_dbm".into(),
                    _ => field,
                },
                message,
            },
            other => other,
        })?;
        let stops = [("design_stop", &self.design_stop), ("factorization_stop", &self.factorization_stop)];
        for (field, stop) in stops {
            stop.validate().map_err(|e| Error::config(field, e.to_string()))?;
        }
        Ok(scenario)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub gamma_db: Vec<f64>,
    pub n_bs: Vec<usize>,
    pub seeds: Vec<u64>,
    pub base: ScenarioConfig,
}

impl SweepConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| Error::ConfigParse(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_toml(&read(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn hash(&self) -> String {
        short_hash(&self.to_toml())
    }

    pub fn validate(&self) -> Result<()> {
        if self.gamma_db.is_empty() || self.gamma_db.iter().any(|g| !g.is_finite()) {
            return Err(Error::config("gamma_db", "need at least one finite threshold"));
        }
        if self.n_bs.is_empty() || self.n_bs.contains(&0) {
            return Err(Error::config("n_bs", "need at least one positive antenna count"));
        }
        if self.seeds.is_empty() {
            return Err(Error::config("seeds", "need at least one seed"));
        }
        for point in self.points() {
            point.config.scenario()?;
        }
        Ok(())
    }

    /// Cartesian product in `gamma, n_bs, seed` order.
    pub fn points(&self) -> Vec<SweepPoint> {
        let mut out = Vec::new();
        for &gamma_db in &self.gamma_db {
            for &n_bs in &self.n_bs {
                for &seed in &self.seeds {
                    let mut config = self.base.clone();
                    config.sinr_db = SinrDb::Uniform(gamma_db);
                    config.n_bs = n_bs;
                    config.seed = seed;
                    out.push(SweepPoint { gamma_db, n_bs, seed, config });
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepPoint {
    pub gamma_db: f64,
    pub n_bs: usize,
    pub seed: u64,
    pub config: ScenarioConfig,
}

/// Either kind of config file, told apart by the presence of a `base` table.
#[derive(Debug, Clone, PartialEq)]
pub enum AnyConfig {
    Scenario(ScenarioConfig),
    Sweep(SweepConfig),
}

impl AnyConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = read(path)?;
        let value: toml::Table = text.parse().map_err(|e: toml::de::Error| Error::ConfigParse(e.to_string()))?;
        if value.contains_key("base") {
            SweepConfig::from_toml(&text).map(AnyConfig::Sweep)
        } else {
            ScenarioConfig::from_toml(&text).map(AnyConfig::Scenario)
        }
    }
}

fn read(path: &Path) -> Result<String> {
    std::fs::read_to_string(path)
        .map_err(|e| Error::ConfigParse(format!("cannot read {}: {e}", path.display())))
}

fn short_hash(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(digest)[..16].to_string()
}
