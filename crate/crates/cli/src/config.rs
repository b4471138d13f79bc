//! Flat JSON configuration files.
//!
//! One object holds keys for every subcommand, e.g. `epochs`, `k_bits`,
//! `n_clusters`, `n_pos`. Each command reads the keys it knows and ignores
//! the rest; flags are applied afterwards and win.

use std::path::Path;

use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::Failure;

pub struct ConfigFile {
    map: Map<String, Value>,
}

impl ConfigFile {
    pub fn load(path: Option<&Path>) -> Result<Self, Failure> {
        let Some(path) = path else {
            return Ok(ConfigFile { map: Map::new() });
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::usage(format!("reading config {}: {e}", path.display())))?;
        match serde_json::from_str(&text) {
            Ok(Value::Object(map)) => Ok(ConfigFile { map }),
            Ok(_) => Err(Failure::usage(format!("config {} is not a JSON object", path.display()))),
            Err(e) => Err(Failure::usage(format!("parsing config {}: {e}", path.display()))),
        }
    }

    /// Deserializes a `#[serde(default)]` struct from the known keys.
    pub fn section<T: DeserializeOwned>(&self) -> Result<T, Failure> {
        serde_json::from_value(Value::Object(self.map.clone()))
            .map_err(|e| Failure::usage(format!("config: {e}")))
    }

    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, Failure> {
        self.map
            .get(key)
            .map(|v| serde_json::from_value(v.clone()).map_err(|e| Failure::usage(format!("config key {key}: {e}"))))
            .transpose()
    }
}
