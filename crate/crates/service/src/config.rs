//! Service configuration: a TOML file, then `ARBITER_*` environment
//! variables on top.
//!
//! | variable | file key |
//! |---|---|
//! | `ARBITER_LISTEN` | `listen` |
//! | `ARBITER_STORE_DIR` | `store_dir` |
//! | `ARBITER_POOL_CPU`, `_BANDWIDTH`, `_MEMORY`, `_STORAGE` | `pool.cpu` … |
//! | `ARBITER_POOL_COLOCATED_CPU` | `pool.colocated_cpu` |
//! | `ARBITER_POOL_SCALING_HEADROOM` | `pool.scaling_headroom` |
//! | `ARBITER_POOL_LADDER` (comma separated) | `pool.ladder` |
//! | `ARBITER_TOLERANCE_RELATIVE` | `tolerance.relative` |
//! | `ARBITER_TOLERANCE_ABSOLUTE` | `tolerance.absolute` |

use std::path::{Path, PathBuf};

use arbiter_core::orchestrator::PoolConfig;
use arbiter_core::units::{parse_quantity, Dimension};
use arbiter_core::{Resources, Tolerance};
use serde::Deserialize;
use thiserror::Error;

use crate::scenario::default_pool;

pub const ENV_PREFIX: &str = "ARBITER_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Toml {
        path: PathBuf,
        source: toml::de::Error,
    },
    #[error("{key}: {message}")]
    Value { key: String, message: String },
}

fn value_error(key: &str, message: impl ToString) -> ConfigError {
    ConfigError::Value {
        key: key.to_owned(),
        message: message.to_string(),
    }
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawConfig {
    listen: Option<String>,
    store_dir: Option<PathBuf>,
    #[serde(default)]
    pool: RawPool,
    #[serde(default)]
    tolerance: RawTolerance,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPool {
    cpu: Option<String>,
    bandwidth: Option<String>,
    memory: Option<String>,
    storage: Option<String>,
    colocated_cpu: Option<String>,
    scaling_headroom: Option<f64>,
    ladder: Option<Vec<f64>>,
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTolerance {
    relative: Option<f64>,
    absolute: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ServiceConfig {
    pub listen: String,
    /// Where records are kept; in memory only when absent.
    pub store_dir: Option<PathBuf>,
    pub pool: PoolConfig,
    pub tolerance: Tolerance<f64>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            listen: "127.0.0.1:8080".to_owned(),
            store_dir: None,
            pool: default_pool(),
            tolerance: Tolerance::default(),
        }
    }
}

fn float(key: &str, text: &str) -> Result<f64, ConfigError> {
    text.trim().parse().map_err(|_| value_error(key, format!("`{text}` is not a number")))
}

impl RawConfig {
    fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (key, value) in vars {
            let Some(name) = key.strip_prefix(ENV_PREFIX) else { continue };
            match name {
                "LISTEN" => self.listen = Some(value),
                "STORE_DIR" => self.store_dir = Some(PathBuf::from(value)),
                "POOL_CPU" => self.pool.cpu = Some(value),
                "POOL_BANDWIDTH" => self.pool.bandwidth = Some(value),
                "POOL_MEMORY" => self.pool.memory = Some(value),
                "POOL_STORAGE" => self.pool.storage = Some(value),
                "POOL_COLOCATED_CPU" => self.pool.colocated_cpu = Some(value),
                "POOL_SCALING_HEADROOM" => self.pool.scaling_headroom = Some(float(&key, &value)?),
                "POOL_LADDER" => {
                    self.pool.ladder = Some(
                        value
                            .split(',')
                            .filter(|s| !s.trim().is_empty())
                            .map(|s| float(&key, s))
                            .collect::<Result<_, _>>()?,
                    )
                }
                "TOLERANCE_RELATIVE" => self.tolerance.relative = Some(float(&key, &value)?),
                "TOLERANCE_ABSOLUTE" => self.tolerance.absolute = Some(float(&key, &value)?),
                _ => {}
            }
        }
        Ok(())
    }

    fn resolve(self) -> Result<ServiceConfig, ConfigError> {
        let defaults = ServiceConfig::default();
        let base = defaults.pool.capacity;
        let quantity = |key: &str, text: &Option<String>, dim: Dimension, fallback: f64| match text {
            Some(t) => parse_quantity(t, dim).map_err(|e| value_error(key, e)),
            None => Ok(fallback),
        };
        let capacity = Resources::new(
            quantity("pool.cpu", &self.pool.cpu, Dimension::PacketRate, base.cpu)?,
            quantity("pool.bandwidth", &self.pool.bandwidth, Dimension::Bandwidth, base.bandwidth)?,
            quantity("pool.memory", &self.pool.memory, Dimension::Bytes, base.memory)?,
            quantity("pool.storage", &self.pool.storage, Dimension::Bytes, base.storage)?,
        );
        if capacity.as_array().iter().any(|v| *v <= 0.0) {
            return Err(value_error("pool", "capacities must be positive"));
        }
        let mut pool = PoolConfig::new(capacity);
        pool.colocated_cpu = quantity(
            "pool.colocated_cpu",
            &self.pool.colocated_cpu,
            Dimension::PacketRate,
            capacity.cpu,
        )?;
        if let Some(h) = self.pool.scaling_headroom {
            if !(0.0..=1.0).contains(&h) {
                return Err(value_error("pool.scaling_headroom", "must lie in [0, 1]"));
            }
            pool.scaling_headroom = h;
        }
        if let Some(ladder) = self.pool.ladder {
            if ladder.iter().any(|t| !(*t > 0.0 && *t < 1.0)) {
                return Err(value_error("pool.ladder", "intermediate points must lie in (0, 1)"));
            }
            pool.ladder = ladder;
        }
        let mut tolerance = defaults.tolerance;
        if let Some(r) = self.tolerance.relative {
            tolerance.relative = r;
        }
        if let Some(a) = self.tolerance.absolute {
            tolerance.absolute = a;
        }
        if !(tolerance.relative > 0.0 && tolerance.absolute > 0.0) {
            return Err(value_error("tolerance", "both tolerances must be positive"));
        }
        Ok(ServiceConfig {
            listen: self.listen.unwrap_or(defaults.listen),
            store_dir: self.store_dir,
            pool,
            tolerance,
        })
    }
}

impl ServiceConfig {
    /// Reads `path` (when given) and applies overrides from `vars`.
    pub fn load(
        path: Option<&Path>,
        vars: impl IntoIterator<Item = (String, String)>,
    ) -> Result<Self, ConfigError> {
        let mut raw = match path {
            Some(path) => {
                let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                    path: path.to_owned(),
                    source,
                })?;
                toml::from_str(&text).map_err(|source| ConfigError::Toml {
                    path: path.to_owned(),
                    source,
                })?
            }
            None => RawConfig::default(),
        };
        raw.apply_env(vars)?;
        raw.resolve()
    }

    pub fn from_env(path: Option<&Path>) -> Result<Self, ConfigError> {
        Self::load(path, std::env::vars())
    }
}
