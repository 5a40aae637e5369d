use std::path::PathBuf;
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::ConfigError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ProviderKind {
    OpenaiCompatible,
    AnthropicCompatible,
    GeminiCompatible,
    Mock,
}

impl ProviderKind {
    pub const ALL: [ProviderKind; 4] = [
        ProviderKind::OpenaiCompatible,
        ProviderKind::AnthropicCompatible,
        ProviderKind::GeminiCompatible,
        ProviderKind::Mock,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ProviderKind::OpenaiCompatible => "openai-compatible",
            ProviderKind::AnthropicCompatible => "anthropic-compatible",
            ProviderKind::GeminiCompatible => "gemini-compatible",
            ProviderKind::Mock => "mock",
        }
    }

    /// Accepts the short CLI names (`openai`, `anthropic`, `gemini`, `mock`) too.
    pub fn parse(s: &str) -> Option<Self> {
        let s = s.trim().to_ascii_lowercase();
        let short = s.strip_suffix("-compatible").unwrap_or(&s);
        match short {
            "openai" => Some(ProviderKind::OpenaiCompatible),
            "anthropic" => Some(ProviderKind::AnthropicCompatible),
            "gemini" => Some(ProviderKind::GeminiCompatible),
            "mock" => Some(ProviderKind::Mock),
            _ => None,
        }
    }

    pub fn default_endpoint(self) -> Option<&'static str> {
        match self {
            ProviderKind::OpenaiCompatible => Some("https://api.openai.com/v1"),
            ProviderKind::AnthropicCompatible => Some("https://api.anthropic.com/v1"),
            ProviderKind::GeminiCompatible => Some("https://generativelanguage.googleapis.com/v1beta"),
            ProviderKind::Mock => None,
        }
    }

    pub fn default_credential_env(self) -> Option<&'static str> {
        match self {
            ProviderKind::OpenaiCompatible => Some("OPENAI_API_KEY"),
            ProviderKind::AnthropicCompatible => Some("ANTHROPIC_API_KEY"),
            ProviderKind::GeminiCompatible => Some("GEMINI_API_KEY"),
            ProviderKind::Mock => None,
        }
    }

    /// OpenAI-style endpoints return all samples from one request.
    pub fn batches_samples(self) -> bool {
        self == ProviderKind::OpenaiCompatible
    }
}

impl std::fmt::Display for ProviderKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct RetryPolicy {
    pub max_attempts: u32,
    pub initial_backoff_ms: u64,
    pub max_backoff_ms: u64,
}

impl Default for RetryPolicy {
    fn default() -> Self {
        Self {
            max_attempts: 3,
            initial_backoff_ms: 500,
            max_backoff_ms: 8_000,
        }
    }
}

impl RetryPolicy {
    /// Delay before attempt `attempt + 1`, doubling from the initial value up to the cap.
    pub fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt.min(32)).unwrap_or(u64::MAX);
        Duration::from_millis(self.initial_backoff_ms.saturating_mul(factor).min(self.max_backoff_ms))
    }
}

/// Prices in currency units per million tokens.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Pricing {
    pub input_per_mtok: f64,
    pub output_per_mtok: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProviderConfig {
    pub kind: ProviderKind,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub endpoint: Option<String>,
    #[serde(default)]
    pub model: String,
    /// Name of the environment variable holding the API key.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub credential_env: Option<String>,
    /// Mock only: JSON script of canned responses.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub script: Option<PathBuf>,
    #[serde(default)]
    pub retry: RetryPolicy,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_output_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub pricing: Option<Pricing>,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
    /// Append every request and response here as JSON lines.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub replay_log: Option<PathBuf>,
}

fn default_timeout() -> u64 {
    120
}

impl ProviderConfig {
    pub fn new(kind: ProviderKind, model: impl Into<String>) -> Self {
        Self {
            kind,
            endpoint: kind.default_endpoint().map(str::to_string),
            model: model.into(),
            credential_env: kind.default_credential_env().map(str::to_string),
            script: None,
            retry: RetryPolicy::default(),
            temperature: None,
            max_output_tokens: None,
            pricing: None,
            timeout_secs: default_timeout(),
            replay_log: None,
        }
    }

    pub fn mock(script: impl Into<PathBuf>) -> Self {
        Self {
            script: Some(script.into()),
            ..Self::new(ProviderKind::Mock, "mock")
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        match self.kind {
            ProviderKind::Mock => {
                if self.script.is_none() {
                    return Err(ConfigError::MissingScript);
                }
            }
            _ => {
                if self.credential_env.is_none() {
                    return Err(ConfigError::MissingCredential(self.kind));
                }
                if self.model.trim().is_empty() {
                    return Err(ConfigError::MissingModel(self.kind));
                }
                if self.endpoint().is_none() {
                    return Err(ConfigError::MissingEndpoint(self.kind));
                }
            }
        }
        if self.retry.max_attempts == 0 {
            return Err(ConfigError::Invalid("retry.max_attempts must be at least 1".into()));
        }
        Ok(())
    }

    pub fn endpoint(&self) -> Option<&str> {
        self.endpoint
            .as_deref()
            .or(self.kind.default_endpoint())
            .map(|e| e.trim_end_matches('/'))
    }

    /// Short provenance tag, e.g. `anthropic-compatible:claude-x`.
    pub fn label(&self) -> String {
        if self.model.is_empty() {
            self.kind.to_string()
        } else {
            format!("{}:{}", self.kind, self.model)
        }
    }

    pub(crate) fn api_key(&self) -> Result<String, ConfigError> {
        let var = self
            .credential_env
            .as_deref()
            .ok_or(ConfigError::MissingCredential(self.kind))?;
        std::env::var(var).map_err(|_| ConfigError::CredentialUnset(var.to_string()))
    }
}
