//! Exit codes and the one-line JSON error written to stderr.

use std::fmt;

use degusta_client::ClientError;
use degusta_core::prompt::PromptError;
use degusta_models::{ConfigError, PredictError};
use serde::Serialize;

pub const USAGE: u8 = 2;
pub const DATA: u8 = 3;
pub const PROVIDER: u8 = 4;

/// Bad flags or configuration.
#[derive(Debug)]
pub struct UsageError(pub String);

impl fmt::Display for UsageError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for UsageError {}

/// Some cases of a batch could not be predicted.
#[derive(Debug)]
pub struct ProviderFailure(pub String);

impl fmt::Display for ProviderFailure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for ProviderFailure {}

#[derive(Debug, Serialize)]
pub struct ErrorLine {
    pub error: &'static str,
    pub exit: u8,
    pub message: String,
}

impl ErrorLine {
    pub fn new(error: &'static str, exit: u8, message: impl Into<String>) -> Self {
        let message: String = message.into();
        Self {
            error,
            exit,
            message: message.split_whitespace().collect::<Vec<_>>().join(" "),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("error line serializes")
    }
}

pub fn classify(err: &anyhow::Error) -> ErrorLine {
    let message = format!("{err:#}");
    for cause in err.chain() {
        if cause.is::<UsageError>() || cause.is::<ConfigError>() {
            return ErrorLine::new("usage", USAGE, message);
        }
        if let Some(PromptError::MissingGrid(_)) = cause.downcast_ref::<PromptError>() {
            return ErrorLine::new("usage", USAGE, message);
        }
        if cause.is::<ProviderFailure>() || cause.is::<PredictError>() {
            return ErrorLine::new("provider", PROVIDER, message);
        }
        if let Some(e) = cause.downcast_ref::<ClientError>() {
            return match e.status() {
                Some(400 | 422) => ErrorLine::new("usage", USAGE, message),
                Some(404 | 409) => ErrorLine::new("data", DATA, message),
                _ => ErrorLine::new("provider", PROVIDER, message),
            };
        }
    }
    ErrorLine::new("data", DATA, message)
}

#[cfg(test)]
mod tests {
    use super::*;
    use anyhow::Context;

    #[test]
    fn causes_anywhere_in_the_chain_decide() {
        let e = anyhow::Error::new(UsageError("bad".into())).context("outer");
        let line = classify(&e);
        assert_eq!((line.error, line.exit), ("usage", USAGE));
        assert_eq!(line.message, "outer: bad");

        let e: anyhow::Result<()> = Err(std::io::Error::other("disk")).context("reading x");
        assert_eq!(classify(&e.unwrap_err()).exit, DATA);

        let e = anyhow::Error::new(ProviderFailure("2 cases failed".into()));
        assert_eq!(classify(&e).exit, PROVIDER);
    }

    #[test]
    fn message_is_one_line() {
        let line = ErrorLine::new("data", DATA, "first\nsecond\n  third");
        assert_eq!(line.message, "first second third");
        assert!(!line.to_json().contains('\n'));
    }
}
