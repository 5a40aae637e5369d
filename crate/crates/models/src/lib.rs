//! Multimodal chat providers behind one sampling call.
//!
//! [`ModelClient::sample`] sends a [`PromptBundle`] to the configured provider
//! and returns one text or one error per requested sample, together with the
//! usage it incurred. The mock provider answers from a script and never
//! touches the network.

mod config;
pub mod mock;
mod pipeline;
pub mod providers;
mod replay;
mod usage;

use std::time::Duration;

use degusta_core::prompt::PromptBundle;
use futures::future::join_all;
use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

pub use config::{Pricing, ProviderConfig, ProviderKind, RetryPolicy};
pub use mock::{MockProvider, MockScript, Perturbation};
pub use pipeline::{predict, ParseFailure, PredictError, Prediction};
pub use replay::ReplayLog;
pub use usage::{UsageMeter, UsageRecord};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("mock provider needs a script path")]
    MissingScript,
    #[error("{0} provider needs a credential environment variable")]
    MissingCredential(ProviderKind),
    #[error("credential variable {0} is not set")]
    CredentialUnset(String),
    #[error("{0} provider needs a model name")]
    MissingModel(ProviderKind),
    #[error("{0} provider needs an endpoint")]
    MissingEndpoint(ProviderKind),
    #[error("mock script: {0}")]
    Script(String),
    #[error("invalid provider config: {0}")]
    Invalid(String),
    #[error("replay log: {0}")]
    Replay(#[from] std::io::Error),
    #[error("http client: {0}")]
    Client(String),
}

/// Why one sample has no text. Siblings are unaffected.
#[derive(Debug, Clone, PartialEq, Error, Serialize, Deserialize)]
#[serde(tag = "kind", content = "detail", rename_all = "kebab-case")]
pub enum SampleError {
    #[error("authentication failed ({status}): {message}")]
    Auth { status: u16, message: String },
    #[error("rate limited after {attempts} attempts")]
    RateLimit { attempts: u32 },
    #[error("malformed provider payload: {0}")]
    Malformed(String),
    #[error("provider returned {status}: {message}")]
    Http { status: u16, message: String },
    #[error("transport: {0}")]
    Transport(String),
    #[error("{0}")]
    Script(String),
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SampleOutcome {
    pub texts: Vec<String>,
    pub errors: Vec<SampleError>,
    pub usage: UsageRecord,
}

impl SampleOutcome {
    pub fn is_complete(&self) -> bool {
        self.errors.is_empty()
    }

    fn collect(results: Vec<Result<String, SampleError>>, usage: UsageRecord) -> Self {
        let mut out = SampleOutcome {
            usage,
            ..Default::default()
        };
        for r in results {
            match r {
                Ok(t) => out.texts.push(t),
                Err(e) => out.errors.push(e),
            }
        }
        out.usage.output_chars = out.texts.iter().map(|t| t.chars().count() as u64).sum();
        out
    }
}

enum Backend {
    Mock(MockProvider),
    Http { client: reqwest::Client, key: String },
}

pub struct ModelClient {
    cfg: ProviderConfig,
    backend: Backend,
    usage: UsageMeter,
    replay: Option<ReplayLog>,
}

impl std::fmt::Debug for ModelClient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ModelClient").field("provider", &self.cfg.label()).finish()
    }
}

impl ModelClient {
    pub fn new(cfg: ProviderConfig) -> Result<Self, ConfigError> {
        cfg.validate()?;
        let backend = match cfg.kind {
            ProviderKind::Mock => {
                let path = cfg.script.as_deref().ok_or(ConfigError::MissingScript)?;
                Backend::Mock(MockProvider::new(MockScript::load(path)?))
            }
            _ => Backend::Http {
                client: reqwest::Client::builder()
                    .timeout(Duration::from_secs(cfg.timeout_secs))
                    .build()
                    .map_err(|e| ConfigError::Client(e.to_string()))?,
                key: cfg.api_key()?,
            },
        };
        let replay = cfg.replay_log.as_deref().map(ReplayLog::open).transpose()?;
        Ok(Self {
            cfg,
            backend,
            usage: UsageMeter::default(),
            replay,
        })
    }

    /// Mock client over an in-memory script.
    pub fn with_script(script: MockScript) -> Self {
        Self {
            cfg: ProviderConfig::new(ProviderKind::Mock, "mock"),
            backend: Backend::Mock(MockProvider::new(script)),
            usage: UsageMeter::default(),
            replay: None,
        }
    }

    pub fn config(&self) -> &ProviderConfig {
        &self.cfg
    }

    /// Totals over every call made through this client.
    pub fn usage(&self) -> UsageRecord {
        self.usage.snapshot(self.cfg.pricing.as_ref())
    }

    pub async fn sample(&self, bundle: &PromptBundle) -> SampleOutcome {
        let n = bundle.samples;
        let input_chars = bundle.text.chars().count() as u64;
        let images = bundle.images.len() as u64;
        let (results, mut usage) = match &self.backend {
            Backend::Mock(m) => {
                let results = m.respond(bundle);
                if let Some(log) = &self.replay {
                    let texts: Vec<Value> = results
                        .iter()
                        .map(|r| match r {
                            Ok(t) => Value::String(t.clone()),
                            Err(e) => serde_json::json!({"error": e.to_string()}),
                        })
                        .collect();
                    log.append("mock", &bundle.digest(), &serde_json::json!({"samples": n}), None, &Value::Array(texts));
                }
                let usage = UsageRecord {
                    requests: 1,
                    input_chars,
                    images,
                    ..Default::default()
                };
                (results, usage)
            }
            Backend::Http { client, key } => {
                let calls: Vec<(usize, usize)> = if self.cfg.kind.batches_samples() {
                    vec![(0, n)]
                } else {
                    (0..n).map(|i| (i, 1)).collect()
                };
                let replies = join_all(calls.iter().map(|&(_, k)| self.call(client, key, bundle, k))).await;
                let mut usage = UsageRecord::default();
                let mut results = Vec::with_capacity(n);
                for ((_, want), (reply, u)) in calls.iter().zip(replies) {
                    usage.add(&u);
                    match reply {
                        Ok(mut texts) => {
                            let got = texts.len();
                            texts.truncate(*want);
                            results.extend(texts.into_iter().map(Ok));
                            for _ in got..*want {
                                results.push(Err(SampleError::Malformed(format!(
                                    "asked for {want} choices, got {got}"
                                ))));
                            }
                        }
                        Err(e) => results.extend(std::iter::repeat_n(Err(e), *want)),
                    }
                }
                (results, usage)
            }
        };
        usage.input_chars = usage.requests * input_chars;
        usage.images = usage.requests * images;
        let outcome = SampleOutcome::collect(results, usage.priced(self.cfg.pricing.as_ref()));
        self.usage.record(&outcome.usage);
        if !outcome.errors.is_empty() {
            tracing::warn!(
                provider = %self.cfg.label(),
                failed = outcome.errors.len(),
                "some samples failed: {}",
                outcome.errors[0]
            );
        }
        outcome
    }

    /// One logical request with retries. Usage counts every HTTP attempt.
    async fn call(
        &self,
        client: &reqwest::Client,
        key: &str,
        bundle: &PromptBundle,
        choices: usize,
    ) -> (Result<Vec<String>, SampleError>, UsageRecord) {
        let req = providers::build_request(&self.cfg, bundle, key, choices);
        let policy = self.cfg.retry;
        let mut usage = UsageRecord::default();
        let digest = bundle.digest();
        let mut attempt = 0;
        loop {
            attempt += 1;
            usage.requests += 1;
            let mut builder = client.post(&req.url).json(&req.body);
            for (k, v) in &req.headers {
                builder = builder.header(*k, v);
            }
            let retryable = match builder.send().await {
                Err(e) => SampleError::Transport(e.to_string()),
                Ok(resp) => {
                    let status = resp.status().as_u16();
                    let text = resp.text().await.unwrap_or_default();
                    let body: Value = serde_json::from_str(&text).unwrap_or(Value::String(text.clone()));
                    if let Some(log) = &self.replay {
                        log.append(self.cfg.kind.as_str(), &digest, &req.body, Some(status), &body);
                    }
                    match status {
                        200..=299 => {
                            return match providers::parse_response(self.cfg.kind, &body) {
                                Some(p) => {
                                    usage.input_tokens += p.input_tokens;
                                    usage.output_tokens += p.output_tokens;
                                    (Ok(p.texts), usage)
                                }
                                None => (Err(SampleError::Malformed(snippet(&text))), usage),
                            };
                        }
                        401 | 403 => {
                            return (
                                Err(SampleError::Auth {
                                    status,
                                    message: snippet(&text),
                                }),
                                usage,
                            )
                        }
                        429 => SampleError::RateLimit { attempts: attempt },
                        500..=599 => SampleError::Http {
                            status,
                            message: snippet(&text),
                        },
                        _ => {
                            return (
                                Err(SampleError::Http {
                                    status,
                                    message: snippet(&text),
                                }),
                                usage,
                            )
                        }
                    }
                }
            };
            if attempt >= policy.max_attempts {
                return (Err(retryable), usage);
            }
            let wait = policy.backoff(attempt - 1);
            tracing::debug!(attempt, ?wait, "retrying after {retryable}");
            tokio::time::sleep(wait).await;
        }
    }
}

fn snippet(text: &str) -> String {
    const MAX: usize = 300;
    match text.char_indices().nth(MAX) {
        Some((i, _)) => format!("{}...", &text[..i]),
        None => text.to_string(),
    }
}

/// One-shot sampling with a fresh client.
pub async fn sample(bundle: &PromptBundle, cfg: &ProviderConfig) -> Result<SampleOutcome, ConfigError> {
    Ok(ModelClient::new(cfg.clone())?.sample(bundle).await)
}
