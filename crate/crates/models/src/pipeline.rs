//! Sample, parse and aggregate: one prompt bundle in, one task plan out.

use degusta_core::prediction::{aggregate, parse_response, AggregateError, TaskPlan};
use degusta_core::prompt::PromptBundle;
use degusta_core::{Arrangement, Catalog};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::{ModelClient, SampleError, UsageRecord};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParseFailure {
    pub sample: usize,
    pub message: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Prediction {
    pub plan: TaskPlan,
    /// Valid plan steps placed on the target table.
    pub arrangement: Arrangement,
    pub usage: UsageRecord,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub sample_errors: Vec<SampleError>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub parse_errors: Vec<ParseFailure>,
    pub digest: String,
}

#[derive(Debug, Error)]
pub enum PredictError {
    #[error("every sample failed; first error: {first}")]
    Provider { first: SampleError, usage: UsageRecord },
    #[error("none of the {received} responses could be parsed")]
    Unparsable { received: usize, usage: UsageRecord },
    #[error(transparent)]
    Aggregate(#[from] AggregateError),
}

/// Queries the model and aggregates whatever samples come back usable.
pub async fn predict(
    client: &ModelClient,
    bundle: &PromptBundle,
    catalog: &Catalog,
    table: &str,
) -> Result<Prediction, PredictError> {
    let outcome = client.sample(bundle).await;
    if outcome.texts.is_empty() {
        if let Some(first) = outcome.errors.first() {
            return Err(PredictError::Provider {
                first: first.clone(),
                usage: outcome.usage,
            });
        }
    }
    let mut parsed = Vec::with_capacity(outcome.texts.len());
    let mut parse_errors = Vec::new();
    for (i, text) in outcome.texts.iter().enumerate() {
        match parse_response(text, bundle.method) {
            Ok(steps) => parsed.push(steps),
            Err(e) => {
                tracing::warn!(sample = i, "unparsable response: {e}");
                parse_errors.push(ParseFailure {
                    sample: i,
                    message: e.to_string(),
                });
            }
        }
    }
    if parsed.is_empty() {
        return Err(PredictError::Unparsable {
            received: outcome.texts.len(),
            usage: outcome.usage,
        });
    }
    let plan = aggregate(&parsed, bundle.method, bundle.grid.as_ref(), catalog, &client.config().label())?;
    Ok(Prediction {
        arrangement: plan.to_arrangement(table),
        plan,
        usage: outcome.usage,
        sample_errors: outcome.errors,
        parse_errors,
        digest: bundle.digest(),
    })
}
