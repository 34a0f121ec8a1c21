//! Deterministic offline backend.
//!
//! Texts carry their latent ordinal value inline as `latent=<number>`
//! (for example `"synthetic item 3 latent=1.7"`). The backend reads those
//! values out of the prompt and answers like a noisy but unbiased model:
//!
//! * comparison prompts: the passage with the larger latent wins, latents
//!   within the tie margin are inconclusive, and each call is reversed with
//!   probability ε;
//! * pointwise prompts: the label nearest the query latent, replaced by a
//!   random other label with probability ε;
//! * probe prompts: fresh `input:... type:...` lines with latents drawn
//!   uniformly over `[0, m-1]`.
//!
//! All randomness is keyed on `(seed, prompt digest)`, so answers do not
//! depend on call order or parallelism.

use std::sync::OnceLock;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use regex::Regex;

use crate::error::BackendError;

use super::backend::{CallCounter, GenerationRequest, Generator, Purpose, SimulatedConfig};
use super::cache::{digest64, prompt_digest};
use super::parse::Preference;

pub struct SimulatedBackend {
    config: SimulatedConfig,
    calls: CallCounter,
}

impl SimulatedBackend {
    pub fn new(config: SimulatedConfig) -> Self {
        Self {
            config,
            calls: CallCounter::default(),
        }
    }

    pub fn config(&self) -> &SimulatedConfig {
        &self.config
    }

    fn answer_comparison(&self, prompt: &str) -> String {
        let latents = extract_latents(prompt);
        if latents.len() < 2 {
            return Preference::Inconclusive.as_text().to_string();
        }
        simulated_compare(latents[0], latents[1], &self.config, digest64(prompt.as_bytes()))
            .as_text()
            .to_string()
    }

    fn answer_pointwise(&self, prompt: &str) -> Result<String, BackendError> {
        let labels = &self.config.labels;
        if labels.is_empty() {
            return Err(BackendError::Unsupported(
                "simulated pointwise answers need a label list".into(),
            ));
        }
        let m = labels.len();
        let truth = match query_latent(prompt) {
            Some(v) => nearest_class(v, m),
            None => argmax(&self.bias(m)),
        };
        let mut rng = keyed_rng(self.config.seed, digest64(prompt.as_bytes()));
        let answer = if m > 1 && rng.random::<f64>() < self.config.noise {
            let other = rng.random_range(0..m - 1);
            if other >= truth {
                other + 1
            } else {
                other
            }
        } else {
            truth
        };
        Ok(labels[answer].clone())
    }

    fn answer_probe(&self, prompt: &str) -> String {
        let labels = &self.config.labels;
        let m = labels.len().max(2);
        let key = digest64(prompt.as_bytes());
        let tag = &prompt_digest(prompt)[..8];
        let mut rng = keyed_rng(self.config.seed, key);
        let mut out = String::new();
        for i in 0..self.config.probe_lines {
            let v: f64 = rng.random_range(0.0..=(m - 1) as f64);
            let label = labels
                .get(nearest_class(v, m))
                .map(String::as_str)
                .unwrap_or("unknown");
            out.push_str(&format!("input:synthetic probe {tag}-{i} latent={v:.4} type:{label}\n"));
        }
        out
    }

    fn bias(&self, m: usize) -> Vec<f64> {
        match &self.config.label_bias {
            Some(b) if b.len() == m => b.clone(),
            _ => vec![1.0; m],
        }
    }
}

impl Generator for SimulatedBackend {
    fn id(&self) -> String {
        format!(
            "simulated(noise={}, tie_margin={}, seed={})",
            self.config.noise, self.config.tie_margin, self.config.seed
        )
    }

    fn generate(&self, request: &GenerationRequest<'_>) -> Result<String, BackendError> {
        self.calls.bump();
        match request.purpose {
            Purpose::Compare => Ok(self.answer_comparison(request.prompt)),
            Purpose::Classify => self.answer_pointwise(request.prompt),
            Purpose::Probe => Ok(self.answer_probe(request.prompt)),
        }
    }

    fn label_probabilities(
        &self,
        prompt: &str,
        labels: &[String],
    ) -> Option<Result<Vec<f64>, BackendError>> {
        if !self.config.expose_probabilities {
            return None;
        }
        self.calls.bump();
        let m = labels.len();
        let bias = self.bias(m);
        let weights: Vec<f64> = match query_latent(prompt) {
            Some(v) => (0..m)
                .map(|j| (-(j as f64 - v).powi(2)).exp() * bias[j])
                .collect(),
            None => bias,
        };
        let total: f64 = weights.iter().sum();
        Some(Ok(weights.into_iter().map(|w| w / total).collect()))
    }

    fn context_budget(&self) -> Option<usize> {
        self.config.context_budget
    }

    fn call_count(&self) -> u64 {
        self.calls.get()
    }
}

/// One simulated comparison call between passages with the given latents.
pub fn simulated_compare(latent_a: f64, latent_b: f64, cfg: &SimulatedConfig, call_nonce: u64) -> Preference {
    if (latent_a - latent_b).abs() <= cfg.tie_margin {
        return Preference::Inconclusive;
    }
    let truth = if latent_a > latent_b {
        Preference::PrefersA
    } else {
        Preference::PrefersB
    };
    let flipped = keyed_rng(cfg.seed, call_nonce).random::<f64>() < cfg.noise;
    match (truth, flipped) {
        (t, false) => t,
        (Preference::PrefersA, true) => Preference::PrefersB,
        (_, true) => Preference::PrefersA,
    }
}

fn keyed_rng(seed: u64, key: u64) -> ChaCha8Rng {
    let mut bytes = [0u8; 32];
    bytes[..8].copy_from_slice(&seed.to_le_bytes());
    bytes[8..16].copy_from_slice(&key.to_le_bytes());
    bytes[16..24].copy_from_slice(b"lampo-sm");
    ChaCha8Rng::from_seed(bytes)
}

fn latent_pattern() -> &'static Regex {
    static PATTERN: OnceLock<Regex> = OnceLock::new();
    PATTERN.get_or_init(|| Regex::new(r"latent=(-?[0-9]+(?:\.[0-9]+)?)").unwrap())
}

/// All `latent=<number>` values in order of appearance.
pub fn extract_latents(text: &str) -> Vec<f64> {
    latent_pattern()
        .captures_iter(text)
        .filter_map(|c| c[1].parse().ok())
        .collect()
}

/// Latent of the query: the text after the last `input:` marker.
fn query_latent(prompt: &str) -> Option<f64> {
    let query = prompt.rsplit("input:").next().unwrap_or(prompt);
    extract_latents(query).last().copied()
}

fn nearest_class(latent: f64, m: usize) -> usize {
    latent.round().clamp(0.0, (m - 1) as f64) as usize
}

fn argmax(values: &[f64]) -> usize {
    values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
        .0
}

#[cfg(test)]
mod tests {
    use super::*;

    fn cfg(noise: f64, tie_margin: f64) -> SimulatedConfig {
        SimulatedConfig::new(noise, tie_margin, 11)
    }

    #[test]
    fn simulated_compare_examples() {
        assert_eq!(simulated_compare(2.0, 0.0, &cfg(0.0, 0.0), 1), Preference::PrefersA);
        assert_eq!(simulated_compare(1.0, 1.0, &cfg(0.0, 0.0), 1), Preference::Inconclusive);
        assert_eq!(simulated_compare(2.0, 0.0, &cfg(1.0, 0.0), 1), Preference::PrefersB);
        assert_eq!(simulated_compare(0.0, 2.0, &cfg(1.0, 0.0), 9), Preference::PrefersA);
        assert_eq!(simulated_compare(1.0, 1.4, &cfg(0.0, 0.5), 1), Preference::Inconclusive);
    }

    #[test]
    fn noise_rate_is_roughly_epsilon() {
        let c = cfg(0.3, 0.0);
        let flips = (0..4000u64)
            .filter(|&n| simulated_compare(1.0, 0.0, &c, n) == Preference::PrefersB)
            .count();
        let rate = flips as f64 / 4000.0;
        assert!((rate - 0.3).abs() < 0.03, "rate {rate}");
    }

    #[test]
    fn latents_are_read_in_order() {
        assert_eq!(extract_latents("a latent=1.5 b latent=-2 c latent=x"), vec![1.5, -2.0]);
        assert_eq!(query_latent("input:x latent=0 type:a\ninput:y latent=2 type:"), Some(2.0));
        assert_eq!(query_latent("input:x latent=0 type:a\ninput:N/A type:"), None);
    }

    #[test]
    fn comparison_prompt_answers() {
        let backend = SimulatedBackend::new(cfg(0.0, 0.0));
        let req = |p: &'static str| GenerationRequest::new(p, Purpose::Compare);
        assert_eq!(backend.generate(&req("A: latent=2 B: latent=1")).unwrap(), "Passage A");
        assert_eq!(backend.generate(&req("A: latent=0 B: latent=1")).unwrap(), "Passage B");
        let tie = backend.generate(&req("A: latent=1 B: latent=1")).unwrap();
        assert_eq!(super::super::parse_preference(&tie), Preference::Inconclusive);
        assert_eq!(backend.call_count(), 3);
    }

    #[test]
    fn pointwise_and_probe_answers() {
        let labels: Vec<String> = ["neg", "neu", "pos"].iter().map(|s| s.to_string()).collect();
        let backend = SimulatedBackend::new(cfg(0.0, 0.0).with_labels(&labels));
        let out = backend
            .generate(&GenerationRequest::new("input:x latent=1.8 type:", Purpose::Classify))
            .unwrap();
        assert_eq!(out, "pos");
        let probes = backend
            .generate(&GenerationRequest::new("input:a type:neg\n", Purpose::Probe))
            .unwrap();
        assert_eq!(probes.lines().count(), 8);
        for v in extract_latents(&probes) {
            assert!((0.0..=2.0).contains(&v));
        }
        let again = backend
            .generate(&GenerationRequest::new("input:a type:neg\n", Purpose::Probe))
            .unwrap();
        assert_eq!(probes, again);
    }

    #[test]
    fn probabilities_follow_latent_and_bias() {
        let labels: Vec<String> = ["a", "b"].iter().map(|s| s.to_string()).collect();
        let mut c = cfg(0.0, 0.0);
        c.label_bias = Some(vec![3.0, 1.0]);
        let backend = SimulatedBackend::new(c);
        let cf = backend.label_probabilities("input:N/A type:", &labels).unwrap().unwrap();
        assert!((cf[0] - 0.75).abs() < 1e-12);
        let p = backend.label_probabilities("input:t latent=1 type:", &labels).unwrap().unwrap();
        assert!((p.iter().sum::<f64>() - 1.0).abs() < 1e-12);

        let mut hidden = cfg(0.0, 0.0);
        hidden.expose_probabilities = false;
        assert!(SimulatedBackend::new(hidden).label_probabilities("x", &labels).is_none());
    }
}
