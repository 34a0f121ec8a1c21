//! Order-swapped comparisons against a backend, with caching and a bounded
//! worker pool.

use std::collections::{HashMap, HashSet};
use std::ops::Neg;
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use rayon::prelude::*;
use rayon::ThreadPool;
use serde::{Deserialize, Serialize};

use crate::error::{BackendError, Error, Result};
use crate::labels::Passage;
use crate::scoring::Comparator;

use super::backend::{GenerationRequest, Generator, Purpose};
use super::cache::{comparison_key, prompt_digest, CacheEntry, ComparisonCache};
use super::parse::{parse_preference, Preference};
use super::template::PromptTemplate;

/// Debiased three-valued comparison result `F(x, x_i)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ComparisonOutcome {
    /// Both calls preferred the demonstration.
    Loss,
    /// The calls conflicted or were inconclusive.
    Tie,
    /// Both calls preferred the test passage.
    Win,
}

impl ComparisonOutcome {
    pub fn value(self) -> i64 {
        match self {
            ComparisonOutcome::Loss => -1,
            ComparisonOutcome::Tie => 0,
            ComparisonOutcome::Win => 1,
        }
    }

    pub fn from_value(value: i64) -> Option<Self> {
        match value {
            -1 => Some(ComparisonOutcome::Loss),
            0 => Some(ComparisonOutcome::Tie),
            1 => Some(ComparisonOutcome::Win),
            _ => None,
        }
    }

    /// Combines the verdicts of the `(x, x_i)` call and the swapped `(x_i, x)` call.
    pub fn from_calls(first: Preference, swapped: Preference) -> Self {
        match (first, swapped) {
            (Preference::PrefersA, Preference::PrefersB) => ComparisonOutcome::Win,
            (Preference::PrefersB, Preference::PrefersA) => ComparisonOutcome::Loss,
            _ => ComparisonOutcome::Tie,
        }
    }
}

impl Neg for ComparisonOutcome {
    type Output = Self;

    fn neg(self) -> Self {
        match self {
            ComparisonOutcome::Loss => ComparisonOutcome::Win,
            ComparisonOutcome::Tie => ComparisonOutcome::Tie,
            ComparisonOutcome::Win => ComparisonOutcome::Loss,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OracleStats {
    pub backend_calls: u64,
    pub cache_hits: u64,
}

/// The preference machine: renders comparison prompts, queries the backend
/// (or the cache) and folds the two swapped verdicts into an outcome.
pub struct PreferenceOracle {
    backend: Arc<dyn Generator>,
    template: PromptTemplate,
    template_id: String,
    cache: Arc<ComparisonCache>,
    pool: Arc<ThreadPool>,
    backend_calls: AtomicU64,
    cache_hits: AtomicU64,
}

impl PreferenceOracle {
    pub fn new(
        backend: Arc<dyn Generator>,
        template: PromptTemplate,
        cache: Arc<ComparisonCache>,
        parallelism: usize,
    ) -> Result<Self> {
        Ok(Self::with_pool(backend, template, cache, Arc::new(worker_pool(parallelism)?)))
    }

    pub fn with_pool(
        backend: Arc<dyn Generator>,
        template: PromptTemplate,
        cache: Arc<ComparisonCache>,
        pool: Arc<ThreadPool>,
    ) -> Self {
        let template_id = template.id();
        Self {
            backend,
            template,
            template_id,
            cache,
            pool,
            backend_calls: AtomicU64::new(0),
            cache_hits: AtomicU64::new(0),
        }
    }

    pub fn template(&self) -> &PromptTemplate {
        &self.template
    }

    pub fn backend(&self) -> &Arc<dyn Generator> {
        &self.backend
    }

    pub fn cache(&self) -> &Arc<ComparisonCache> {
        &self.cache
    }

    pub fn stats(&self) -> OracleStats {
        OracleStats {
            backend_calls: self.backend_calls.load(Ordering::Relaxed),
            cache_hits: self.cache_hits.load(Ordering::Relaxed),
        }
    }

    /// `F(x, x_i)` for a single pair.
    pub fn compare_debiased(&self, x: Passage<'_>, demo: Passage<'_>) -> Result<ComparisonOutcome> {
        Ok(self.compare_pairs(&[(x, demo)])?[0])
    }

    /// Number of distinct backend calls `pairs` would need given the current cache.
    pub fn uncached_calls(&self, pairs: &[(Passage<'_>, Passage<'_>)]) -> usize {
        self.directed_calls(pairs)
            .into_iter()
            .filter(|(key, _, _)| !self.cache.contains(key))
            .count()
    }

    fn directed_calls<'p>(&self, pairs: &[(Passage<'p>, Passage<'p>)]) -> Vec<(String, Passage<'p>, Passage<'p>)> {
        let mut seen = HashSet::new();
        let mut calls = Vec::with_capacity(pairs.len() * 2);
        for &(x, demo) in pairs {
            for (a, b) in [(x, demo), (demo, x)] {
                let key = comparison_key(&self.template_id, a, b);
                if seen.insert(key.clone()) {
                    calls.push((key, a, b));
                }
            }
        }
        calls
    }

    fn call_backend(&self, key: &str, a: Passage<'_>, b: Passage<'_>) -> std::result::Result<Preference, BackendError> {
        let prompt = self
            .template
            .render(a, b)
            .map_err(|e| BackendError::Unsupported(e.to_string()))?;
        self.backend_calls.fetch_add(1, Ordering::Relaxed);
        let raw = self
            .backend
            .generate(&GenerationRequest::new(&prompt, Purpose::Compare))?;
        let parsed = parse_preference(&raw);
        let entry = CacheEntry::new(key.to_string(), self.template_id.clone(), raw, parsed);
        if let Err(e) = self.cache.insert(entry) {
            log::warn!("could not persist comparison {key}: {e}");
        }
        Ok(parsed)
    }

    /// Resolves every pair, issuing the uncached directed calls concurrently.
    /// Completed calls are cached even when others fail.
    pub fn compare_pairs(&self, pairs: &[(Passage<'_>, Passage<'_>)]) -> Result<Vec<ComparisonOutcome>> {
        if self.template.is_aspect_based() {
            if pairs.iter().any(|(x, d)| x.aspect.is_none() || d.aspect.is_none()) {
                return Err(Error::MissingAspect(self.template.name().to_string()));
            }
        }
        let calls = self.directed_calls(pairs);
        let mut verdicts: HashMap<String, Preference> = HashMap::with_capacity(calls.len());
        let mut pending = Vec::new();
        for (key, a, b) in calls {
            match self.cache.get(&key) {
                Some(entry) => {
                    self.cache_hits.fetch_add(1, Ordering::Relaxed);
                    verdicts.insert(key, entry.parsed);
                }
                None => pending.push((key, a, b)),
            }
        }

        let results: Vec<_> = self.pool.install(|| {
            pending
                .par_iter()
                .map(|(key, a, b)| self.call_backend(key, *a, *b))
                .collect()
        });

        let mut failures: HashMap<String, BackendError> = HashMap::new();
        for ((key, _, _), result) in pending.into_iter().zip(results) {
            match result {
                Ok(p) => {
                    verdicts.insert(key, p);
                }
                Err(e) => {
                    failures.insert(key, e);
                }
            }
        }

        let mut outcomes = Vec::with_capacity(pairs.len());
        for &(x, demo) in pairs {
            let k1 = comparison_key(&self.template_id, x, demo);
            let k2 = comparison_key(&self.template_id, demo, x);
            match (verdicts.get(&k1), verdicts.get(&k2)) {
                (Some(&first), Some(&swapped)) => outcomes.push(ComparisonOutcome::from_calls(first, swapped)),
                _ => {
                    let source = failures
                        .get(&k1)
                        .or_else(|| failures.get(&k2))
                        .cloned()
                        .expect("unresolved call has a recorded failure");
                    return Err(Error::ComparisonUnavailable {
                        first_digest: self.digest_of(x, demo),
                        second_digest: self.digest_of(demo, x),
                        outstanding: failures.len(),
                        source,
                    });
                }
            }
        }
        Ok(outcomes)
    }

    fn digest_of(&self, a: Passage<'_>, b: Passage<'_>) -> String {
        self.template
            .render(a, b)
            .map(|p| prompt_digest(&p))
            .unwrap_or_else(|_| "unrenderable".into())
    }
}

impl Comparator for PreferenceOracle {
    fn compare_batch(&self, pairs: &[(Passage<'_>, Passage<'_>)]) -> Result<Vec<ComparisonOutcome>> {
        self.compare_pairs(pairs)
    }
}

/// Builds a bounded worker pool.
pub fn worker_pool(parallelism: usize) -> Result<ThreadPool> {
    if parallelism == 0 {
        return Err(Error::Config("parallelism must be at least 1".into()));
    }
    rayon::ThreadPoolBuilder::new()
        .num_threads(parallelism)
        .thread_name(|i| format!("lampo-worker-{i}"))
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}
