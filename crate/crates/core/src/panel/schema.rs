use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Column mapping for long-format panel files, stored as TOML:
///
/// ```toml
/// id = "id"          # optional, these four are the defaults
/// time = "t"
/// treatment = "a"
/// outcome = "y"
///
/// [covariates]
/// default = ["x"]            # used at every t without its own entry
/// t1 = ["educ", "black", "x"]
/// ```
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Schema {
    #[serde(default = "default_id")]
    pub id: String,
    #[serde(default = "default_time")]
    pub time: String,
    #[serde(default = "default_treatment")]
    pub treatment: String,
    #[serde(default = "default_outcome")]
    pub outcome: String,
    pub covariates: CovariateColumns,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct CovariateColumns {
    #[serde(default)]
    pub default: Vec<String>,
    #[serde(flatten)]
    pub per_time: BTreeMap<String, Vec<String>>,
}

fn default_id() -> String {
    "id".into()
}
fn default_time() -> String {
    "t".into()
}
fn default_treatment() -> String {
    "a".into()
}
fn default_outcome() -> String {
    "y".into()
}

impl Schema {
    /// Schema with the default key columns and the same covariates at every t.
    pub fn uniform(covariates: &[&str]) -> Self {
        Schema {
            id: default_id(),
            time: default_time(),
            treatment: default_treatment(),
            outcome: default_outcome(),
            covariates: CovariateColumns {
                default: covariates.iter().map(|s| s.to_string()).collect(),
                per_time: BTreeMap::new(),
            },
        }
    }

    pub fn parse(text: &str) -> Result<Self> {
        let schema: Schema =
            toml::from_str(text).map_err(|e| Error::Config(format!("schema: {e}")))?;
        for key in schema.covariates.per_time.keys() {
            let ok = key
                .strip_prefix('t')
                .and_then(|s| s.parse::<usize>().ok())
                .is_some_and(|t| t >= 1);
            if !ok {
                return Err(Error::Config(format!(
                    "schema: covariate key '{key}' is neither 'default' nor t<k>"
                )));
            }
        }
        Ok(schema)
    }

    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("schema serializes")
    }

    /// Covariate columns at 1-based timepoint `t`.
    pub fn columns_at(&self, t: usize) -> &[String] {
        self.covariates
            .per_time
            .get(&format!("t{t}"))
            .unwrap_or(&self.covariates.default)
    }

    /// Builds the schema that describes a dataset's own covariate names.
    pub fn for_names(names: &[Vec<String>]) -> Self {
        let mut schema = Schema::uniform(&[]);
        for (t, cols) in names.iter().enumerate() {
            schema.covariates.per_time.insert(format!("t{}", t + 1), cols.clone());
        }
        schema
    }
}
