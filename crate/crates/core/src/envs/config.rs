use super::mountain_car::MountainCarParams;
use super::reservoir::ReservoirParams;
use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const ENV_SCHEMA_VERSION: u32 = 1;

/// On-disk environment definition (`configs/envs/*.json`).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EnvConfig {
    pub schema_version: u32,
    pub id: String,
    pub gamma: f64,
    pub horizon: usize,
    pub reference_point: Vec<f64>,
    pub return_scale: Vec<f64>,
    pub dynamics: Dynamics,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum Dynamics {
    /// `grid[row][col]`: 0 water, negative seabed (impassable), positive treasure.
    DeepSeaTreasure { grid: Vec<Vec<f64>> },
    /// Leaves in left-to-right order; `leaf_seed` names the stream they were drawn from.
    FruitTree { depth: usize, leaf_seed: String, leaves: Vec<Vec<f64>> },
    Fishwood { p_fish: f64, p_wood: f64 },
    /// Map rows over `.` (empty), `H` (home), `G` (gold), `J` (gem), `E` (enemy).
    ResourceGathering { map: Vec<String>, attack_prob: f64 },
    MountainCar(MountainCarParams),
    LinearReservoir(ReservoirParams),
}

const BUILTIN: &[(&str, &str)] = &[
    ("deep-sea-treasure", include_str!("../../configs/envs/deep-sea-treasure.json")),
    ("fruit-tree-d2", include_str!("../../configs/envs/fruit-tree-d2.json")),
    ("fruit-tree-d5", include_str!("../../configs/envs/fruit-tree-d5.json")),
    ("fruit-tree-d6", include_str!("../../configs/envs/fruit-tree-d6.json")),
    ("fruit-tree-d7", include_str!("../../configs/envs/fruit-tree-d7.json")),
    ("fishwood", include_str!("../../configs/envs/fishwood.json")),
    ("resource-gathering", include_str!("../../configs/envs/resource-gathering.json")),
    ("mo-mountain-car", include_str!("../../configs/envs/mo-mountain-car.json")),
    ("linear-reservoir", include_str!("../../configs/envs/linear-reservoir.json")),
];

pub fn builtin_ids() -> impl Iterator<Item = &'static str> {
    BUILTIN.iter().map(|(id, _)| *id)
}

impl EnvConfig {
    pub fn builtin(id: &str) -> Result<Self> {
        let (_, text) = BUILTIN.iter().find(|(k, _)| *k == id).ok_or_else(|| Error::UnknownEnv(id.to_string()))?;
        let cfg: EnvConfig = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let cfg: EnvConfig = serde_json::from_str(&std::fs::read_to_string(path)?)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Resolves a builtin id or a path to a JSON config.
    pub fn resolve(id_or_path: &str) -> Result<Self> {
        if BUILTIN.iter().any(|(k, _)| *k == id_or_path) {
            Self::builtin(id_or_path)
        } else if Path::new(id_or_path).is_file() {
            Self::load(id_or_path)
        } else {
            Err(Error::UnknownEnv(id_or_path.to_string()))
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != ENV_SCHEMA_VERSION {
            return Err(Error::SchemaVersion { found: self.schema_version, supported: ENV_SCHEMA_VERSION });
        }
        if !(0.0..1.0).contains(&self.gamma) {
            return Err(Error::InvalidArgument(format!("{}: gamma {} not in [0, 1)", self.id, self.gamma)));
        }
        if self.horizon == 0 {
            return Err(Error::InvalidArgument(format!("{}: horizon must be >= 1", self.id)));
        }
        if self.return_scale.iter().any(|s| *s <= 0.0) {
            return Err(Error::InvalidArgument(format!("{}: return_scale must be positive", self.id)));
        }
        Ok(())
    }
}
