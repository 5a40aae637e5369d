use std::sync::atomic::{AtomicU64, Ordering};

use serde::{Deserialize, Serialize};

use crate::Pricing;

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct UsageRecord {
    pub requests: u64,
    pub input_chars: u64,
    pub output_chars: u64,
    pub input_tokens: u64,
    pub output_tokens: u64,
    pub images: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub estimated_cost: Option<f64>,
}

impl UsageRecord {
    pub fn priced(mut self, pricing: Option<&Pricing>) -> Self {
        self.estimated_cost = pricing.map(|p| {
            (self.input_tokens as f64 * p.input_per_mtok + self.output_tokens as f64 * p.output_per_mtok) / 1e6
        });
        self
    }

    pub fn add(&mut self, other: &UsageRecord) {
        self.requests += other.requests;
        self.input_chars += other.input_chars;
        self.output_chars += other.output_chars;
        self.input_tokens += other.input_tokens;
        self.output_tokens += other.output_tokens;
        self.images += other.images;
        self.estimated_cost = match (self.estimated_cost, other.estimated_cost) {
            (None, None) => None,
            (a, b) => Some(a.unwrap_or(0.0) + b.unwrap_or(0.0)),
        };
    }
}

/// Running totals shared across concurrent calls.
#[derive(Debug, Default)]
pub struct UsageMeter {
    requests: AtomicU64,
    input_chars: AtomicU64,
    output_chars: AtomicU64,
    input_tokens: AtomicU64,
    output_tokens: AtomicU64,
    images: AtomicU64,
}

impl UsageMeter {
    pub fn record(&self, u: &UsageRecord) {
        self.requests.fetch_add(u.requests, Ordering::Relaxed);
        self.input_chars.fetch_add(u.input_chars, Ordering::Relaxed);
        self.output_chars.fetch_add(u.output_chars, Ordering::Relaxed);
        self.input_tokens.fetch_add(u.input_tokens, Ordering::Relaxed);
        self.output_tokens.fetch_add(u.output_tokens, Ordering::Relaxed);
        self.images.fetch_add(u.images, Ordering::Relaxed);
    }

    pub fn snapshot(&self, pricing: Option<&Pricing>) -> UsageRecord {
        UsageRecord {
            requests: self.requests.load(Ordering::Relaxed),
            input_chars: self.input_chars.load(Ordering::Relaxed),
            output_chars: self.output_chars.load(Ordering::Relaxed),
            input_tokens: self.input_tokens.load(Ordering::Relaxed),
            output_tokens: self.output_tokens.load(Ordering::Relaxed),
            images: self.images.load(Ordering::Relaxed),
            estimated_cost: None,
        }
        .priced(pricing)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::Arc;

    #[test]
    fn concurrent_records_all_land() {
        let meter = Arc::new(UsageMeter::default());
        let one = UsageRecord {
            requests: 1,
            input_chars: 10,
            output_tokens: 3,
            ..Default::default()
        };
        let handles: Vec<_> = (0..8)
            .map(|_| {
                let m = meter.clone();
                std::thread::spawn(move || (0..1000).for_each(|_| m.record(&one)))
            })
            .collect();
        handles.into_iter().for_each(|h| h.join().unwrap());
        let s = meter.snapshot(None);
        assert_eq!((s.requests, s.input_chars, s.output_tokens), (8000, 80_000, 24_000));
    }

    #[test]
    fn cost_uses_token_counts() {
        let u = UsageRecord {
            input_tokens: 2_000_000,
            output_tokens: 500_000,
            ..Default::default()
        }
        .priced(Some(&Pricing {
            input_per_mtok: 2.5,
            output_per_mtok: 10.0,
        }));
        assert!((u.estimated_cost.unwrap() - 10.0).abs() < 1e-12);
    }
}
