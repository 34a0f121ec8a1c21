//! Generation backends and their configuration.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};

use super::http::HttpBackend;
use super::simulated::SimulatedBackend;

/// Default number of in-flight requests per backend.
pub const DEFAULT_PARALLELISM: usize = 8;

/// What a generation call is for. HTTP backends ignore it; the simulated
/// backend uses it to decide how to answer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Purpose {
    /// Pairwise comparison prompt.
    Compare,
    /// Pointwise label prediction (in-context baseline).
    Classify,
    /// Free continuation of linearized demonstrations (probing set).
    Probe,
}

#[derive(Debug, Clone, Copy)]
pub struct GenerationRequest<'a> {
    pub prompt: &'a str,
    pub purpose: Purpose,
    pub max_tokens: Option<usize>,
}

impl<'a> GenerationRequest<'a> {
    pub fn new(prompt: &'a str, purpose: Purpose) -> Self {
        Self {
            prompt,
            purpose,
            max_tokens: None,
        }
    }

    pub fn max_tokens(mut self, max_tokens: usize) -> Self {
        self.max_tokens = Some(max_tokens);
        self
    }
}

/// A text-generation backend with deterministic decoding.
pub trait Generator: Send + Sync {
    fn id(&self) -> String;

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError>;

    /// Per-label probabilities for the continuation of `prompt`, when the
    /// backend exposes them. `None` means generation-only.
    fn label_probabilities(
        &self,
        _prompt: &str,
        _labels: &[String],
    ) -> Option<Result<Vec<f64>, BackendError>> {
        None
    }

    /// Prompt budget in (estimated) tokens, if bounded.
    fn context_budget(&self) -> Option<usize> {
        None
    }

    /// Number of generation calls served so far.
    fn call_count(&self) -> u64;
}

/// Rough token estimate used for context budgets: one token per four bytes.
pub fn estimate_tokens(text: &str) -> usize {
    text.len().div_ceil(4)
}

/// Thread-safe call counter shared by backend implementations.
#[derive(Debug, Default)]
pub struct CallCounter(AtomicU64);

impl CallCounter {
    pub fn bump(&self) {
        self.0.fetch_add(1, Ordering::Relaxed);
    }

    pub fn get(&self) -> u64 {
        self.0.load(Ordering::Relaxed)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BackendConfig {
    Http(HttpConfig),
    Simulated(SimulatedConfig),
    Replay(ReplayConfig),
}

impl BackendConfig {
    pub fn parallelism(&self) -> usize {
        match self {
            BackendConfig::Http(c) => c.parallelism,
            BackendConfig::Simulated(c) => c.parallelism,
            BackendConfig::Replay(_) => DEFAULT_PARALLELISM,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match self {
            BackendConfig::Http(c) => c.validate(),
            BackendConfig::Simulated(c) => c.validate(),
            BackendConfig::Replay(_) => Ok(()),
        }
    }

    /// Instantiates the backend. `labels` is the task label space; the
    /// simulated backend uses it when its own label list is empty.
    pub fn build(&self, labels: &[String]) -> Result<Arc<dyn Generator>> {
        self.validate()?;
        Ok(match self {
            BackendConfig::Http(c) => Arc::new(HttpBackend::new(c.clone())?),
            BackendConfig::Simulated(c) => {
                let mut c = c.clone();
                if c.labels.is_empty() {
                    c.labels = labels.to_vec();
                }
                Arc::new(SimulatedBackend::new(c))
            }
            BackendConfig::Replay(c) => Arc::new(ReplayBackend::new(c.strict)),
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HttpConfig {
    pub endpoint: String,
    /// Header values may reference environment variables as `${NAME}`.
    #[serde(default)]
    pub headers: BTreeMap<String, String>,
    /// JSON request body; string values have `{prompt}` substituted and a
    /// string value equal to `{max_tokens}` becomes the token limit.
    pub body_template: serde_json::Value,
    /// Dot-separated path to the generated text, e.g. `choices.0.message.content`.
    pub response_path: String,
    #[serde(default = "defaults::timeout_secs")]
    pub timeout_secs: f64,
    #[serde(default = "defaults::max_retries")]
    pub max_retries: u32,
    #[serde(default = "defaults::backoff_ms")]
    pub backoff_ms: u64,
    #[serde(default = "defaults::max_backoff_ms")]
    pub max_backoff_ms: u64,
    /// Requests per second; unlimited when absent.
    #[serde(default)]
    pub rate_limit: Option<f64>,
    #[serde(default = "defaults::parallelism")]
    pub parallelism: usize,
    #[serde(default)]
    pub context_budget: Option<usize>,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: usize,
}

impl HttpConfig {
    pub fn new(endpoint: impl Into<String>, body_template: serde_json::Value, response_path: impl Into<String>) -> Self {
        Self {
            endpoint: endpoint.into(),
            headers: BTreeMap::new(),
            body_template,
            response_path: response_path.into(),
            timeout_secs: defaults::timeout_secs(),
            max_retries: defaults::max_retries(),
            backoff_ms: defaults::backoff_ms(),
            max_backoff_ms: defaults::max_backoff_ms(),
            rate_limit: None,
            parallelism: defaults::parallelism(),
            context_budget: None,
            max_tokens: defaults::max_tokens(),
        }
    }

    fn validate(&self) -> Result<()> {
        if self.parallelism == 0 {
            return Err(Error::Config("http.parallelism must be at least 1".into()));
        }
        if !(self.timeout_secs > 0.0) {
            return Err(Error::Config("http.timeout_secs must be positive".into()));
        }
        if let Some(r) = self.rate_limit {
            if !(r > 0.0) {
                return Err(Error::Config("http.rate_limit must be positive".into()));
            }
        }
        if self.response_path.is_empty() {
            return Err(Error::Config("http.response_path is empty".into()));
        }
        if !body_mentions_prompt(&self.body_template) {
            return Err(Error::Config("http.body_template never uses {prompt}".into()));
        }
        Ok(())
    }
}

fn body_mentions_prompt(value: &serde_json::Value) -> bool {
    match value {
        serde_json::Value::String(s) => s.contains("{prompt}"),
        serde_json::Value::Array(items) => items.iter().any(body_mentions_prompt),
        serde_json::Value::Object(map) => map.values().any(body_mentions_prompt),
        _ => false,
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SimulatedConfig {
    /// Probability ε that a single call reports the reversed preference.
    #[serde(default)]
    pub noise: f64,
    /// Latent gap δ at or below which a comparison is inconclusive.
    #[serde(default)]
    pub tie_margin: f64,
    #[serde(default)]
    pub seed: u64,
    /// Label strings for pointwise answers and probe lines.
    #[serde(default)]
    pub labels: Vec<String>,
    /// Probe lines emitted per generation call.
    #[serde(default = "defaults::probe_lines")]
    pub probe_lines: usize,
    /// Multiplicative per-label bias applied to pointwise probabilities.
    #[serde(default)]
    pub label_bias: Option<Vec<f64>>,
    /// Whether label probabilities are exposed (contextual calibration).
    #[serde(default = "defaults::yes")]
    pub expose_probabilities: bool,
    #[serde(default)]
    pub context_budget: Option<usize>,
    #[serde(default = "defaults::parallelism")]
    pub parallelism: usize,
}

impl SimulatedConfig {
    pub fn new(noise: f64, tie_margin: f64, seed: u64) -> Self {
        Self {
            noise,
            tie_margin,
            seed,
            labels: Vec::new(),
            probe_lines: defaults::probe_lines(),
            label_bias: None,
            expose_probabilities: true,
            context_budget: None,
            parallelism: defaults::parallelism(),
        }
    }

    pub fn with_labels(mut self, labels: &[String]) -> Self {
        self.labels = labels.to_vec();
        self
    }

    fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.noise) {
            return Err(Error::Config(format!("simulated.noise {} outside [0, 1]", self.noise)));
        }
        if !(self.tie_margin >= 0.0) {
            return Err(Error::Config("simulated.tie_margin must be >= 0".into()));
        }
        if self.parallelism == 0 {
            return Err(Error::Config("simulated.parallelism must be at least 1".into()));
        }
        if let Some(bias) = &self.label_bias {
            if bias.iter().any(|b| !(*b > 0.0)) {
                return Err(Error::Config("simulated.label_bias entries must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReplayConfig {
    pub cache_path: PathBuf,
    /// Fail on a cache miss instead of answering "inconclusive".
    #[serde(default = "defaults::yes")]
    pub strict: bool,
}

/// Backend that only ever serves from a comparison cache. The oracle consults
/// the cache first, so this backend only sees misses.
#[derive(Debug, Default)]
pub struct ReplayBackend {
    strict: bool,
    calls: CallCounter,
}

impl ReplayBackend {
    pub fn new(strict: bool) -> Self {
        Self {
            strict,
            calls: CallCounter::default(),
        }
    }
}

impl Generator for ReplayBackend {
    fn id(&self) -> String {
        format!("replay(strict={})", self.strict)
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        self.calls.bump();
        if self.strict {
            Err(BackendError::ReplayMiss(super::cache::prompt_digest(request.prompt)))
        } else {
            Ok(String::new())
        }
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

pub(crate) mod defaults {
    pub fn timeout_secs() -> f64 {
        60.0
    }
    pub fn max_retries() -> u32 {
        4
    }
    pub fn backoff_ms() -> u64 {
        500
    }
    pub fn max_backoff_ms() -> u64 {
        30_000
    }
    pub fn parallelism() -> usize {
        super::DEFAULT_PARALLELISM
    }
    pub fn max_tokens() -> usize {
        512
    }
    pub fn probe_lines() -> usize {
        8
    }
    pub fn yes() -> bool {
        true
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn backend_config_from_toml_like_json() {
        let cfg: BackendConfig = serde_json::from_value(serde_json::json!({
            "kind": "simulated",
            "noise": 0.1,
            "seed": 7
        }))
        .unwrap();
        match &cfg {
            BackendConfig::Simulated(s) => {
                assert_eq!(s.noise, 0.1);
                assert_eq!(s.tie_margin, 0.0);
                assert_eq!(s.parallelism, DEFAULT_PARALLELISM);
            }
            other => panic!("unexpected {other:?}"),
        }
        assert_eq!(cfg.parallelism(), 8);
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let bad = BackendConfig::Simulated(SimulatedConfig::new(1.5, 0.0, 0));
        assert!(matches!(bad.validate(), Err(Error::Config(_))));
        let bad = BackendConfig::Simulated(SimulatedConfig::new(0.0, -1.0, 0));
        assert!(bad.validate().is_err());
        let http = HttpConfig::new("http://x", serde_json::json!({"input": "hi"}), "text");
        assert!(BackendConfig::Http(http).validate().is_err());
    }

    #[test]
    fn replay_backend_misses() {
        let strict = ReplayBackend::new(true);
        let req = GenerationRequest::new("p", Purpose::Compare);
        assert!(matches!(strict.generate(&req), Err(BackendError::ReplayMiss(_))));
        let lenient = ReplayBackend::new(false);
        assert_eq!(lenient.generate(&req).unwrap(), "");
        assert_eq!(lenient.call_count(), 1);
    }

    #[test]
    fn token_estimate() {
        assert_eq!(estimate_tokens(""), 0);
        assert_eq!(estimate_tokens("abcd"), 1);
        assert_eq!(estimate_tokens("abcde"), 2);
    }
}
