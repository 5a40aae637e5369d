//! Optional TOML defaults. Command-line flags win over anything set here.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use anyhow::Context;
use degusta_core::acceptability::JitterConfig;
use degusta_models::{ProviderConfig, ProviderKind};
use serde::Deserialize;

use crate::exit::UsageError;

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub catalog: Option<PathBuf>,
    pub data_dir: Option<PathBuf>,
    pub seed: Option<u64>,
    pub jobs: Option<usize>,
    #[serde(default)]
    pub providers: BTreeMap<String, ProviderConfig>,
    #[serde(default)]
    pub serve: ServeSection,
}

#[derive(Debug, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ServeSection {
    pub host: Option<String>,
    pub port: Option<u16>,
    pub seed: Option<u64>,
    pub ui_dir: Option<PathBuf>,
    #[serde(default)]
    pub cors_origins: Vec<String>,
    pub predict_wait_ms: Option<u64>,
    pub jitter: Option<JitterConfig>,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> anyhow::Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
        toml::from_str(&text).map_err(|e| UsageError(format!("config {}: {}", path.display(), e.message())).into())
    }
}

/// Provider settings given on the command line.
#[derive(Debug, Default, Clone)]
pub struct ProviderFlags {
    pub model: Option<String>,
    pub endpoint: Option<String>,
    pub script: Option<PathBuf>,
    pub credential_env: Option<String>,
    pub replay_log: Option<PathBuf>,
    pub temperature: Option<f64>,
}

/// A named provider from the config file, or a provider kind built from flags.
pub fn resolve_provider(name: &str, file: &FileConfig, flags: &ProviderFlags) -> anyhow::Result<ProviderConfig> {
    let mut cfg = match file.providers.get(name) {
        Some(cfg) => cfg.clone(),
        None => {
            let kind = ProviderKind::parse(name).ok_or_else(|| {
                let known: Vec<&str> = file.providers.keys().map(String::as_str).collect();
                UsageError(format!(
                    "unknown provider `{name}`; use mock, openai, anthropic, gemini{}",
                    if known.is_empty() { String::new() } else { format!(" or one of {known:?}") }
                ))
            })?;
            let mut cfg = ProviderConfig::new(kind, "");
            if kind == ProviderKind::Mock {
                cfg.model = "mock".into();
            }
            cfg
        }
    };
    if let Some(m) = &flags.model {
        cfg.model = m.clone();
    }
    if let Some(e) = &flags.endpoint {
        cfg.endpoint = Some(e.clone());
    }
    if let Some(s) = &flags.script {
        cfg.script = Some(s.clone());
    }
    if let Some(c) = &flags.credential_env {
        cfg.credential_env = Some(c.clone());
    }
    if let Some(r) = &flags.replay_log {
        cfg.replay_log = Some(r.clone());
    }
    if flags.temperature.is_some() {
        cfg.temperature = flags.temperature;
    }
    if cfg.credential_env.is_none() {
        cfg.credential_env = cfg.kind.default_credential_env().map(str::to_string);
    }
    cfg.validate()?;
    Ok(cfg)
}
