//! File configuration (TOML or JSON) with `MEMPAL_*` environment overrides.

use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::time::Duration;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::engine::EngineConfig;
use crate::providers::mock::{MockLatency, MockSettings, DEFAULT_DIM, DEFAULT_SEED};
use crate::providers::{ProviderConfig, ProvidersConfig};

pub const ENV_PREFIX: &str = "MEMPAL_";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {detail}")]
    Parse { path: PathBuf, detail: String },
    #[error("unsupported config extension for {0} (use .toml or .json)")]
    Extension(PathBuf),
    #[error("environment variable {name}={value:?}: {detail}")]
    Env { name: String, value: String, detail: String },
}

/// Settings of the built-in mock providers.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MockConfig {
    pub dim: usize,
    pub seed: u64,
    pub scene_noise: f64,
    pub location_latency_s: f64,
    pub vlm_latency_s: f64,
    pub llm_latency_s: f64,
}

impl Default for MockConfig {
    fn default() -> Self {
        Self {
            dim: DEFAULT_DIM,
            seed: DEFAULT_SEED,
            scene_noise: MockSettings::default().scene_noise,
            location_latency_s: 0.0,
            vlm_latency_s: 0.0,
            llm_latency_s: 0.0,
        }
    }
}

impl MockConfig {
    pub fn settings(&self) -> MockSettings {
        MockSettings {
            dim: self.dim,
            seed: self.seed,
            scene_noise: self.scene_noise,
            latency: MockLatency {
                location: Duration::from_secs_f64(self.location_latency_s.max(0.0)),
                vlm: Duration::from_secs_f64(self.vlm_latency_s.max(0.0)),
                llm: Duration::from_secs_f64(self.llm_latency_s.max(0.0)),
            },
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServerConfig {
    pub bind: String,
    /// Bearer token required on every request except `/health`.
    pub token: Option<String>,
}

impl Default for ServerConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:7878".into(),
            token: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct MempalConfig {
    pub engine: EngineConfig,
    pub providers: ProvidersConfig,
    pub mock: MockConfig,
    pub server: ServerConfig,
    /// Seconds of camera stream per batch when ingesting recordings.
    pub cadence_s: f64,
}

impl Default for MempalConfig {
    fn default() -> Self {
        Self {
            engine: EngineConfig::default(),
            providers: ProvidersConfig::default(),
            mock: MockConfig::default(),
            server: ServerConfig::default(),
            cadence_s: 5.0,
        }
    }
}

fn parse_value<T: FromStr>(name: &str, value: &str) -> Result<T, ConfigError>
where
    T::Err: std::fmt::Display,
{
    value.trim().parse().map_err(|e: T::Err| ConfigError::Env {
        name: name.to_string(),
        value: value.to_string(),
        detail: e.to_string(),
    })
}

fn parse_flag(name: &str, value: &str) -> Result<bool, ConfigError> {
    match value.trim().to_ascii_lowercase().as_str() {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(ConfigError::Env {
            name: name.to_string(),
            value: value.to_string(),
            detail: "expected a boolean".into(),
        }),
    }
}

impl MempalConfig {
    /// Read a `.toml` or `.json` file. Missing fields take defaults.
    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
            path: path.to_path_buf(),
            source,
        })?;
        let parse_err = |detail: String| ConfigError::Parse {
            path: path.to_path_buf(),
            detail,
        };
        match path.extension().and_then(|e| e.to_str()) {
            Some("toml") => toml::from_str(&text).map_err(|e| parse_err(e.to_string())),
            Some("json") => serde_json::from_str(&text).map_err(|e| parse_err(e.to_string())),
            _ => Err(ConfigError::Extension(path.to_path_buf())),
        }
    }

    /// Defaults, then the optional file, then the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self, ConfigError> {
        let mut config = match path {
            Some(p) => Self::from_file(p)?,
            None => Self::default(),
        };
        config.apply_env(std::env::vars())?;
        Ok(config)
    }

    /// Apply `MEMPAL_*` overrides. Unknown names are ignored.
    pub fn apply_env(&mut self, vars: impl IntoIterator<Item = (String, String)>) -> Result<(), ConfigError> {
        for (name, value) in vars {
            let Some(key) = name.strip_prefix(ENV_PREFIX) else {
                continue;
            };
            let remote = |value: &str| ProviderConfig::remote(value.trim());
            match key {
                "DATA_DIR" => self.engine.data_dir = Some(PathBuf::from(value)),
                "TOP_K" => self.engine.query.top_k = parse_value(&name, &value)?,
                "UTC_OFFSET_MINUTES" => self.engine.query.utc_offset_minutes = parse_value(&name, &value)?,
                "HYSTERESIS_MARGIN" => self.engine.ingest.localization.hysteresis_margin = parse_value(&name, &value)?,
                "UNKNOWN_THRESHOLD" => self.engine.ingest.localization.unknown_threshold = parse_value(&name, &value)?,
                "IMAGE_RETENTION" => self.engine.image_retention = parse_value(&name, &value)?,
                "PRIVACY" => {
                    if parse_flag(&name, &value)? {
                        self.engine.image_retention = 0;
                    }
                }
                "REQUIRE_WAKEWORD" => self.engine.require_wakeword = parse_flag(&name, &value)?,
                "TRAJECTORY_ENDPOINT" => self.engine.trajectory_endpoint = Some(value.trim().to_string()),
                "CADENCE_S" => self.cadence_s = parse_value(&name, &value)?,
                "BIND" => self.server.bind = value,
                "TOKEN" => self.server.token = Some(value).filter(|t| !t.is_empty()),
                "DIM" => self.mock.dim = parse_value(&name, &value)?,
                "SEED" => self.mock.seed = parse_value(&name, &value)?,
                "TEXT_EMBEDDER_ENDPOINT" => self.providers.text_embedder = remote(&value),
                "FRAME_EMBEDDER_ENDPOINT" => self.providers.frame_embedder = remote(&value),
                "VLM_ENDPOINT" => self.providers.vlm = remote(&value),
                "LLM_ENDPOINT" => self.providers.llm = remote(&value),
                "TRANSCRIBER_ENDPOINT" => self.providers.transcriber = remote(&value),
                _ => {}
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::providers::ProviderKind;

    fn env(pairs: &[(&str, &str)]) -> Vec<(String, String)> {
        pairs.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect()
    }

    #[test]
    fn toml_and_json_agree() {
        let dir = tempfile::tempdir().unwrap();
        let toml_path = dir.path().join("c.toml");
        std::fs::write(
            &toml_path,
            "cadence_s = 4.0\n[engine]\nimage_retention = 8\n[engine.query]\ntop_k = 5\n[server]\ntoken = \"s3cret\"\n",
        )
        .unwrap();
        let json_path = dir.path().join("c.json");
        std::fs::write(
            &json_path,
            r#"{"cadence_s":4.0,"engine":{"image_retention":8,"query":{"top_k":5}},"server":{"token":"s3cret"}}"#,
        )
        .unwrap();
        let a = MempalConfig::from_file(&toml_path).unwrap();
        let b = MempalConfig::from_file(&json_path).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.engine.query.top_k, 5);
        assert_eq!(a.engine.query.session_cap, 20);
        assert!(MempalConfig::from_file(&dir.path().join("c.yaml")).is_err());
    }

    #[test]
    fn env_overrides() {
        let mut c = MempalConfig::default();
        c.engine.image_retention = 16;
        c.apply_env(env(&[
            ("MEMPAL_TOP_K", "3"),
            ("MEMPAL_HYSTERESIS_MARGIN", "0.2"),
            ("MEMPAL_PRIVACY", "on"),
            ("MEMPAL_LLM_ENDPOINT", "http://127.0.0.1:9/llm"),
            ("HOME", "/root"),
        ]))
        .unwrap();
        assert_eq!(c.engine.query.top_k, 3);
        assert_eq!(c.engine.ingest.localization.hysteresis_margin, 0.2);
        assert_eq!(c.engine.image_retention, 0);
        assert_eq!(c.providers.llm.kind, ProviderKind::RemoteHttp);
        assert!(c.apply_env(env(&[("MEMPAL_TOP_K", "many")])).is_err());
    }
}
