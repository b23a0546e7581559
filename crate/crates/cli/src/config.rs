//! Run configuration: config files, flag overlay, seeds and manifests.
//!
//! A config file (TOML or JSON) has global keys at the top level, an optional
//! `[solver]` table and one table per subcommand:
//!
//! ```toml
//! command = "grid"   # used by `ptlab run`
//! seed = 7
//! out = "grid.csv"
//! [solver]
//! max_iters = 20000
//! [grid]
//! m = 12
//! M = 24
//! B = 24
//! coeffset = "complex"
//! ```
//!
//! Flags given on the command line win over the file. The master seed is
//! taken from `--seed`, then `PTLAB_SEED`, then the file, then 0.

use std::fs;
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use ptlab::solver::SolverOptions;

pub const SEED_ENV: &str = "PTLAB_SEED";

/// Marks errors that should exit with the usage status.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

/// Reads a TOML or JSON file into a JSON object. A manifest is accepted too:
/// its `config` member is used.
pub fn load_file(path: &Path) -> Result<Map<String, Value>> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let is_json = path.extension().is_some_and(|e| e == "json") || text.trim_start().starts_with('{');
    let value: Value = if is_json {
        serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?
    } else {
        let t: toml::Value = toml::from_str(&text).map_err(|e| usage(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t)?
    };
    let Value::Object(mut map) = value else {
        bail!(usage(format!("{}: expected a table at the top level", path.display())));
    };
    if let Some(Value::Object(inner)) = map.remove("config") {
        return Ok(inner);
    }
    Ok(map)
}

/// Overlays the non-null fields of `flags` on `base` and decodes the result.
pub fn overlay<T: Serialize + DeserializeOwned>(base: Option<&Value>, flags: &T) -> Result<T> {
    let mut merged = match base {
        Some(Value::Object(m)) => m.clone(),
        Some(Value::Null) | None => Map::new(),
        Some(other) => bail!(usage(format!("expected a table, found {other}"))),
    };
    if let Value::Object(f) = serde_json::to_value(flags)? {
        for (k, v) in f {
            if !v.is_null() {
                merged.insert(k, v);
            }
        }
    }
    serde_json::from_value(Value::Object(merged)).map_err(|e| usage(format!("invalid configuration: {e}")))
}

/// Global settings after merging file, environment and flags.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct Globals {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out: Option<PathBuf>,
    #[serde(default)]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub jobs: Option<usize>,
}

pub fn resolve_seed(flag: Option<u64>, file: Option<u64>) -> Result<u64> {
    if let Some(s) = flag {
        return Ok(s);
    }
    if let Ok(v) = std::env::var(SEED_ENV) {
        return v
            .trim()
            .parse()
            .map_err(|_| usage(format!("{SEED_ENV} must be an unsigned integer, got '{v}'")));
    }
    Ok(file.unwrap_or(0))
}

/// Solver settings from the `[solver]` table with flag overrides.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SolverFlags {
    pub feas_tol: Option<f64>,
    pub obj_tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub rho: Option<f64>,
}

impl SolverFlags {
    pub fn apply(&self, mut base: SolverOptions) -> SolverOptions {
        if let Some(v) = self.feas_tol {
            base.feas_tol = v;
        }
        if let Some(v) = self.obj_tol {
            base.obj_tol = v;
        }
        if let Some(v) = self.max_iters {
            base.max_iters = v;
        }
        if let Some(v) = self.rho {
            base.rho = v;
        }
        base
    }
}

/// Everything needed to repeat a run.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub tool: String,
    pub code_version: String,
    /// Seconds since the Unix epoch; the only field that changes between reruns.
    pub timestamp: u64,
    pub outputs: Vec<PathBuf>,
    /// A config that `ptlab run --config <manifest>` accepts.
    pub config: Value,
}

impl Manifest {
    pub fn new(config: Value, outputs: Vec<PathBuf>) -> Self {
        Manifest {
            tool: env!("CARGO_PKG_NAME").to_string(),
            code_version: env!("CARGO_PKG_VERSION").to_string(),
            timestamp: std::time::SystemTime::now()
                .duration_since(std::time::UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
            outputs,
            config,
        }
    }
}

pub fn manifest_path(out: &Path) -> PathBuf {
    let mut name = out.as_os_str().to_owned();
    name.push(".manifest.json");
    PathBuf::from(name)
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[derive(Debug, Default, Serialize, Deserialize, PartialEq)]
    struct Demo {
        #[serde(rename = "M")]
        big_m: Option<usize>,
        m: Option<usize>,
    }

    #[test]
    fn flags_override_file() {
        let file = json!({"M": 8, "m": 4});
        let flags = Demo { big_m: Some(16), m: None };
        let got = overlay(Some(&file), &flags).unwrap();
        assert_eq!(got, Demo { big_m: Some(16), m: Some(4) });
    }

    #[test]
    fn bad_types_are_usage_errors() {
        let file = json!({"M": "many"});
        let err = overlay(Some(&file), &Demo::default()).unwrap_err();
        assert!(err.downcast_ref::<UsageError>().is_some());
    }

    #[test]
    fn manifest_sits_next_to_output() {
        assert_eq!(manifest_path(Path::new("a/b.csv")), PathBuf::from("a/b.csv.manifest.json"));
    }
}
