//! Flat `key = value` run configuration. Keys are the field names of the GA,
//! solver and Nash settings; command-line flags override the file.

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use tradewar_core::ga::GaConfig;
use tradewar_core::nash::NashConfig;
use tradewar_core::solver::SolverOptions;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct RunConfig {
    pub ga: GaConfig,
    pub solver: SolverOptions,
    pub nash: NashConfig,
}

fn de<T: serde::de::DeserializeOwned>(m: Map<String, Value>) -> Result<T> {
    serde_json::from_value(Value::Object(m)).map_err(|e| Error::Config(e.to_string()))
}

fn object<T: Serialize>(v: &T) -> Map<String, Value> {
    match serde_json::to_value(v) {
        Ok(Value::Object(m)) => m,
        _ => Map::new(),
    }
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let table: toml::Table = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        let base = RunConfig::default();
        let mut groups = [object(&base.ga), object(&base.solver), object(&base.nash)];
        for (key, value) in table {
            if value.is_table() {
                return Err(Error::Config(format!("`{key}`: nested tables are not supported")));
            }
            let v = serde_json::to_value(&value).map_err(|e| Error::Config(e.to_string()))?;
            let g = groups
                .iter_mut()
                .find(|g| g.contains_key(&key))
                .ok_or_else(|| Error::Config(format!("unknown key `{key}`")))?;
            g.insert(key, v);
        }
        let [ga, solver, nash] = groups;
        Ok(RunConfig { ga: de(ga)?, solver: de(solver)?, nash: de(nash)? })
    }

    /// Canonical text used for the provenance hash.
    pub fn canonical(&self) -> String {
        serde_json::to_string(self).unwrap_or_default()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn flat_keys_land_in_their_groups() {
        let c = RunConfig::parse("population = 40\nelites = 4\ncrossover = 30\nmutation = 6\ntol_outer = 1e-9\ntol = 0.001\n").unwrap();
        assert_eq!(c.ga.population, 40);
        assert_eq!(c.solver.tol_outer, 1e-9);
        assert_eq!(c.nash.tol, 1e-3);
        assert_eq!(c.ga.upper, GaConfig::default().upper);
    }

    #[test]
    fn unknown_key_rejected() {
        assert!(RunConfig::parse("bogus = 1").is_err());
    }
}
