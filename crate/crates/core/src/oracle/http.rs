//! Generic JSON-over-HTTP generation backend.
//!
//! One POST per generation call. The body comes from a configurable JSON
//! template and the generated text is pulled out of the response with a
//! dot-separated path, which covers the usual provider response shapes.
//! Decoding is pinned to temperature 0.

use std::sync::Mutex;
use std::time::{Duration, Instant};

use serde_json::Value;

use crate::error::{BackendError, Error, Result};

use super::backend::{CallCounter, GenerationRequest, Generator, HttpConfig};

pub struct HttpBackend {
    config: HttpConfig,
    agent: ureq::Agent,
    headers: Vec<(String, String)>,
    body: Value,
    limiter: Option<RateLimiter>,
    calls: CallCounter,
}

impl HttpBackend {
    pub fn new(config: HttpConfig) -> Result<Self> {
        let headers = config
            .headers
            .iter()
            .map(|(k, v)| Ok((k.clone(), interpolate_env(v)?)))
            .collect::<Result<Vec<_>>>()?;
        let body = with_deterministic_decoding(config.body_template.clone())?;
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs_f64(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        let limiter = config.rate_limit.map(RateLimiter::per_second);
        Ok(Self {
            config,
            agent,
            headers,
            body,
            limiter,
            calls: CallCounter::default(),
        })
    }

    fn request_body(&self, prompt: &str, max_tokens: usize) -> Value {
        substitute(&self.body, prompt, max_tokens)
    }

    fn attempt(&self, body: &Value) -> std::result::Result<String, Attempt> {
        let mut request = self.agent.post(&self.config.endpoint);
        for (k, v) in &self.headers {
            request = request.header(k.as_str(), v.as_str());
        }
        let mut response = request
            .send_json(body)
            .map_err(|e| Attempt::Retry(e.to_string()))?;
        let status = response.status().as_u16();
        let text = response
            .body_mut()
            .read_to_string()
            .map_err(|e| Attempt::Retry(format!("reading body: {e}")))?;
        if status == 429 || status >= 500 {
            return Err(Attempt::Retry(format!("status {status}: {}", truncate(&text))));
        }
        if !(200..300).contains(&status) {
            return Err(Attempt::Fatal(BackendError::Status {
                status,
                body: truncate(&text),
            }));
        }
        let doc: Value = serde_json::from_str(&text)
            .map_err(|e| Attempt::Fatal(BackendError::Extraction(format!("response is not JSON: {e}"))))?;
        extract_text(&doc, &self.config.response_path).map_err(Attempt::Fatal)
    }

    fn backoff(&self, attempt: u32) -> Duration {
        let factor = 1u64.checked_shl(attempt).unwrap_or(u64::MAX);
        Duration::from_millis(
            self.config
                .backoff_ms
                .saturating_mul(factor)
                .min(self.config.max_backoff_ms),
        )
    }
}

enum Attempt {
    Retry(String),
    Fatal(BackendError),
}

impl Generator for HttpBackend {
    fn id(&self) -> String {
        format!("http({})", self.config.endpoint)
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> std::result::Result<String, BackendError> {
        self.calls.bump();
        let body = self.request_body(request.prompt, request.max_tokens.unwrap_or(self.config.max_tokens));
        let mut last = String::new();
        for attempt in 0..=self.config.max_retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff(attempt - 1));
            }
            if let Some(limiter) = &self.limiter {
                limiter.acquire();
            }
            match self.attempt(&body) {
                Ok(text) => return Ok(text),
                Err(Attempt::Fatal(e)) => return Err(e),
                Err(Attempt::Retry(msg)) => {
                    log::debug!("{}: attempt {} failed: {msg}", self.config.endpoint, attempt + 1);
                    last = msg;
                }
            }
        }
        Err(BackendError::Transport {
            attempts: self.config.max_retries + 1,
            message: last,
        })
    }

    fn context_budget(&self) -> Option<usize> {
        self.config.context_budget
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

/// Spaces requests at least `1 / rate` seconds apart across all threads.
struct RateLimiter {
    interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn per_second(rate: f64) -> Self {
        Self {
            interval: Duration::from_secs_f64(1.0 / rate),
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        let wait = {
            let mut next = self.next.lock().expect("rate limiter lock");
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

fn truncate(s: &str) -> String {
    const MAX: usize = 300;
    if s.len() <= MAX {
        return s.to_string();
    }
    let mut end = MAX;
    while !s.is_char_boundary(end) {
        end -= 1;
    }
    format!("{}...", &s[..end])
}

/// Expands `${NAME}` references from the environment.
pub(crate) fn interpolate_env(value: &str) -> Result<String> {
    let mut out = String::with_capacity(value.len());
    let mut rest = value;
    while let Some(start) = rest.find("${") {
        out.push_str(&rest[..start]);
        let after = &rest[start + 2..];
        let end = after
            .find('}')
            .ok_or_else(|| Error::Config(format!("unterminated ${{...}} in header value `{value}`")))?;
        let name = &after[..end];
        let var = std::env::var(name)
            .map_err(|_| Error::Config(format!("environment variable `{name}` is not set")))?;
        out.push_str(&var);
        rest = &after[end + 1..];
    }
    out.push_str(rest);
    Ok(out)
}

fn collect_temperatures<'a>(value: &'a Value, out: &mut Vec<&'a Value>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                if k == "temperature" {
                    out.push(v);
                } else {
                    collect_temperatures(v, out);
                }
            }
        }
        Value::Array(items) => items.iter().for_each(|v| collect_temperatures(v, out)),
        _ => {}
    }
}

/// Rejects a non-zero `temperature` anywhere in the body and adds a
/// top-level `temperature: 0` when none is present.
pub(crate) fn with_deterministic_decoding(mut body: Value) -> Result<Value> {
    let mut temps = Vec::new();
    collect_temperatures(&body, &mut temps);
    if let Some(bad) = temps.iter().find(|t| t.as_f64() != Some(0.0)) {
        return Err(Error::Config(format!(
            "http body sets temperature {bad}; decoding must be deterministic (temperature 0)"
        )));
    }
    if temps.is_empty() {
        if let Value::Object(map) = &mut body {
            map.insert("temperature".into(), Value::from(0));
        }
    }
    Ok(body)
}

fn substitute(value: &Value, prompt: &str, max_tokens: usize) -> Value {
    match value {
        Value::String(s) if s == "{max_tokens}" => Value::from(max_tokens),
        Value::String(s) => Value::String(s.replace("{prompt}", prompt)),
        Value::Array(items) => Value::Array(items.iter().map(|v| substitute(v, prompt, max_tokens)).collect()),
        Value::Object(map) => Value::Object(
            map.iter()
                .map(|(k, v)| (k.clone(), substitute(v, prompt, max_tokens)))
                .collect(),
        ),
        other => other.clone(),
    }
}

/// Follows a dot-separated path (`choices.0.message.content`) to a string.
pub fn extract_text(doc: &Value, path: &str) -> std::result::Result<String, BackendError> {
    let mut cur = doc;
    for segment in path.split('.') {
        cur = match cur {
            Value::Array(items) => segment
                .parse::<usize>()
                .ok()
                .and_then(|i| items.get(i)),
            Value::Object(map) => map.get(segment),
            _ => None,
        }
        .ok_or_else(|| BackendError::Extraction(format!("path `{path}` fails at `{segment}`")))?;
    }
    cur.as_str()
        .map(str::to_string)
        .ok_or_else(|| BackendError::Extraction(format!("value at `{path}` is not a string")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn extraction_paths() {
        let doc = json!({"choices": [{"message": {"content": "Passage A"}}], "n": 1});
        assert_eq!(extract_text(&doc, "choices.0.message.content").unwrap(), "Passage A");
        assert!(extract_text(&doc, "choices.1.message.content").is_err());
        assert!(extract_text(&doc, "n").is_err());
        assert!(extract_text(&doc, "missing").is_err());
    }

    #[test]
    fn body_substitution_escapes_prompt() {
        let body = json!({"messages": [{"role": "user", "content": "{prompt}"}], "max_tokens": "{max_tokens}"});
        let out = substitute(&body, "say \"hi\"\nnow", 16);
        assert_eq!(out["messages"][0]["content"], "say \"hi\"\nnow");
        assert_eq!(out["max_tokens"], 16);
        let wire = serde_json::to_string(&out).unwrap();
        assert!(wire.contains(r#"say \"hi\"\nnow"#));
    }

    #[test]
    fn temperature_is_pinned() {
        let body = with_deterministic_decoding(json!({"prompt": "{prompt}"})).unwrap();
        assert_eq!(body["temperature"], 0);
        let nested = with_deterministic_decoding(json!({"generationConfig": {"temperature": 0.0}})).unwrap();
        assert!(nested.get("temperature").is_none());
        assert!(with_deterministic_decoding(json!({"temperature": 0.7})).is_err());
        assert!(with_deterministic_decoding(json!({"cfg": {"temperature": 1}})).is_err());
    }

    #[test]
    fn env_interpolation() {
        std::env::set_var("LAMPO_TEST_TOKEN", "s3cret");
        assert_eq!(interpolate_env("Bearer ${LAMPO_TEST_TOKEN}").unwrap(), "Bearer s3cret");
        assert_eq!(interpolate_env("plain").unwrap(), "plain");
        assert!(interpolate_env("${LAMPO_SURELY_UNSET_VAR}").is_err());
        assert!(interpolate_env("${OPEN").is_err());
    }

    #[test]
    fn backoff_is_bounded() {
        let mut cfg = HttpConfig::new("http://localhost:1", json!({"p": "{prompt}"}), "t");
        cfg.backoff_ms = 100;
        cfg.max_backoff_ms = 1000;
        let b = HttpBackend::new(cfg).unwrap();
        assert_eq!(b.backoff(0), Duration::from_millis(100));
        assert_eq!(b.backoff(2), Duration::from_millis(400));
        assert_eq!(b.backoff(10), Duration::from_millis(1000));
        assert_eq!(b.backoff(80), Duration::from_millis(1000));
    }

    #[test]
    fn rate_limiter_spaces_calls() {
        let limiter = RateLimiter::per_second(50.0);
        let start = Instant::now();
        for _ in 0..6 {
            limiter.acquire();
        }
        assert!(start.elapsed() >= Duration::from_millis(95));
    }
}
