use std::path::Path;

use serde::{Deserialize, Serialize};

use super::DiscreteWorld;
use crate::error::{Error, Result};

/// On-disk (TOML) form of a world; the tables follow the layout described
/// on [`DiscreteWorld`].
///
/// ```toml
/// supports = [[0.0, 1.0]]
/// p_x1 = [0.4, 0.6]
/// transitions = []
/// propensity = [[0.3, 0.7]]
/// outcome_mean = [0.0, 1.0, 0.5, 2.0]
/// outcome_sd = 1.0
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WorldSpec {
    pub supports: Vec<Vec<f64>>,
    pub p_x1: Vec<f64>,
    #[serde(default)]
    pub transitions: Vec<Vec<Vec<f64>>>,
    pub propensity: Vec<Vec<f64>>,
    pub outcome_mean: Vec<f64>,
    #[serde(default)]
    pub outcome_sd: f64,
}

impl WorldSpec {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(format!("world file: {e}")))
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        toml::from_str(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(format!("world file: {e}")))
    }

    pub fn into_world(self) -> Result<DiscreteWorld<f64>> {
        DiscreteWorld::new(
            self.supports,
            self.p_x1,
            self.transitions,
            self.propensity,
            self.outcome_mean,
            self.outcome_sd,
        )
    }
}

impl From<&DiscreteWorld<f64>> for WorldSpec {
    fn from(w: &DiscreteWorld<f64>) -> Self {
        WorldSpec {
            supports: w.supports.clone(),
            p_x1: w.p_x1.clone(),
            transitions: w.transitions.clone(),
            propensity: w.propensity.clone(),
            outcome_mean: w.outcome_mean.clone(),
            outcome_sd: w.outcome_sd,
        }
    }
}
