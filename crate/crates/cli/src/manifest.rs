//! Job manifests.
//!
//! ```toml
//! output_dir = "runs/twitter-5shot"
//! resume = false
//! dry_run = false
//!
//! [run]
//! dataset = "twitter"
//! dataset_path = "data/twitter.jsonl"
//! shots = 5
//! method = "lampo"
//! strategy = "mixture"
//!
//! [probing]
//! n_target = 50
//!
//! [backend]
//! kind = "simulated"
//! noise = 0.0
//! tie_margin = 0.0
//! seed = 1
//! ```
//!
//! Relative paths resolve against the manifest's directory.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use lampo::baselines::{default_instruction, Method, CONTENT_FREE};
use lampo::eval::{preset, Metric};
use lampo::oracle::DEFAULT_PARALLELISM;
use lampo::probing::ProbingOptions;
use lampo::thresholding::{SearchConfig, ThresholdStrategy};
use lampo::{BackendConfig, OrderedLabelSpace, PromptTemplate};
use serde::{Deserialize, Serialize};

fn default_content_free() -> String {
    CONTENT_FREE.to_string()
}

fn default_candidates() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Built-in dataset name or a free-form name when `labels` is given.
    pub dataset: String,
    pub dataset_path: PathBuf,
    /// Label space; defaults to the built-in dataset's.
    #[serde(default)]
    pub labels: Option<Vec<String>>,
    #[serde(default)]
    pub shots: Option<usize>,
    /// Demonstration seeds to run; all seeds in the file when empty.
    #[serde(default)]
    pub seeds: Vec<u64>,
    #[serde(default = "default_method")]
    pub method: Method,
    #[serde(default)]
    pub strategy: ThresholdStrategy,
    #[serde(default)]
    pub search: SearchConfig,
    /// Built-in template name; defaults to the dataset's.
    #[serde(default)]
    pub template: Option<String>,
    #[serde(default)]
    pub template_file: Option<PathBuf>,
    #[serde(default)]
    pub metric: Option<Metric>,
    #[serde(default)]
    pub aspect_based: Option<bool>,
    /// Instruction for the pointwise baselines.
    #[serde(default)]
    pub instruction: Option<String>,
    #[serde(default = "default_content_free")]
    pub content_free: String,
    #[serde(default = "default_candidates")]
    pub globale_candidates: usize,
}

fn default_method() -> Method {
    Method::Lampo
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ProbingConfig {
    /// Probe file; `{seed}` is replaced by the demonstration seed.
    #[serde(default)]
    pub path: Option<String>,
    #[serde(default = "defaults::n_target")]
    pub n_target: usize,
    #[serde(default = "defaults::n_orderings")]
    pub n_orderings: usize,
    #[serde(default = "defaults::max_tokens")]
    pub max_tokens: usize,
    #[serde(default)]
    pub seed: u64,
}

mod defaults {
    use super::ProbingOptions;

    pub fn n_target() -> usize {
        ProbingOptions::default().n_target
    }
    pub fn n_orderings() -> usize {
        ProbingOptions::default().n_orderings
    }
    pub fn max_tokens() -> usize {
        ProbingOptions::default().max_tokens
    }
}

impl Default for ProbingConfig {
    fn default() -> Self {
        Self {
            path: None,
            n_target: defaults::n_target(),
            n_orderings: defaults::n_orderings(),
            max_tokens: defaults::max_tokens(),
            seed: 0,
        }
    }
}

impl ProbingConfig {
    pub fn options(&self, demo_seed: u64, batch: usize) -> ProbingOptions {
        ProbingOptions {
            n_target: self.n_target,
            n_orderings: self.n_orderings,
            max_tokens: self.max_tokens,
            seed: self.seed ^ demo_seed.wrapping_mul(0x9E37_79B9_7F4A_7C15),
            batch,
        }
    }

    pub fn path_for(&self, demo_seed: u64) -> Option<PathBuf> {
        self.path
            .as_ref()
            .map(|p| PathBuf::from(p.replace("{seed}", &demo_seed.to_string())))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobManifest {
    pub run: RunConfig,
    #[serde(default)]
    pub probing: ProbingConfig,
    pub backend: BackendConfig,
    pub output_dir: PathBuf,
    #[serde(default)]
    pub resume: bool,
    /// Overrides the backend's parallelism.
    #[serde(default)]
    pub parallelism: Option<usize>,
    #[serde(default)]
    pub dry_run: bool,
    /// Comparison cache file; defaults to `<output_dir>/comparisons.jsonl`.
    #[serde(default)]
    pub cache: Option<PathBuf>,
}

/// Everything derived from the manifest that the commands need.
#[derive(Debug, Clone)]
pub struct ResolvedTask {
    pub label_space: OrderedLabelSpace,
    pub metric: Metric,
    pub template: PromptTemplate,
    pub aspect_based: bool,
    pub instruction: String,
}

impl JobManifest {
    pub fn from_toml(text: &str) -> Result<Self> {
        Ok(toml::from_str(text)?)
    }

    /// Reads a manifest, resolving relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let mut manifest = Self::from_toml(&text).with_context(|| format!("parsing {}", path.display()))?;
        let base = path.parent().unwrap_or(Path::new("."));
        manifest.rebase(base);
        Ok(manifest)
    }

    pub fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.output_dir);
        fix(&mut self.run.dataset_path);
        if let Some(p) = self.run.template_file.as_mut() {
            fix(p);
        }
        if let Some(p) = self.cache.as_mut() {
            fix(p);
        }
        if let Some(p) = self.probing.path.as_mut() {
            if Path::new(p.as_str()).is_relative() {
                *p = base.join(p.as_str()).to_string_lossy().into_owned();
            }
        }
        if let BackendConfig::Replay(r) = &mut self.backend {
            fix(&mut r.cache_path);
        }
    }

    pub fn parallelism(&self) -> usize {
        self.parallelism.unwrap_or_else(|| self.backend.parallelism()).max(1)
    }

    pub fn cache_path(&self) -> PathBuf {
        match (&self.backend, &self.cache) {
            (BackendConfig::Replay(r), _) => r.cache_path.clone(),
            (_, Some(p)) => p.clone(),
            (_, None) => self.output_dir.join("comparisons.jsonl"),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.parallelism == Some(0) {
            bail!(lampo::Error::Config("parallelism must be at least 1".into()));
        }
        self.backend.validate()?;
        Ok(())
    }

    pub fn resolve(&self) -> Result<ResolvedTask> {
        self.validate()?;
        let preset = preset(&self.run.dataset).ok();
        let label_space = match (&self.run.labels, &preset) {
            (Some(labels), _) => OrderedLabelSpace::new(labels.iter().cloned())?,
            (None, Some(p)) => p.label_space(),
            (None, None) => bail!(lampo::Error::Config(format!(
                "dataset `{}` is not built in; set run.labels",
                self.run.dataset
            ))),
        };
        let metric = match (&self.run.metric, &preset) {
            (Some(m), _) => m.clone(),
            (None, Some(p)) => p.metric.clone(),
            (None, None) => Metric::Accuracy,
        };
        let template = match (&self.run.template_file, &self.run.template, &preset) {
            (Some(file), _, _) => PromptTemplate::from_file(file)?,
            (None, Some(name), _) => PromptTemplate::builtin(name)?,
            (None, None, Some(p)) => PromptTemplate::builtin(p.template)?,
            (None, None, None) => bail!(lampo::Error::Config("set run.template or run.template_file".into())),
        };
        let aspect_based = self
            .run
            .aspect_based
            .unwrap_or_else(|| template.is_aspect_based());
        let instruction = self
            .run
            .instruction
            .clone()
            .unwrap_or_else(|| default_instruction(&label_space));
        Ok(ResolvedTask {
            label_space,
            metric,
            template,
            aspect_based,
            instruction,
        })
    }
}

pub fn default_parallelism() -> usize {
    DEFAULT_PARALLELISM
}

#[cfg(test)]
mod tests {
    use super::*;

    const MANIFEST: &str = r#"
output_dir = "out"

[run]
dataset = "twitter"
dataset_path = "data/twitter.jsonl"
shots = 5
strategy = "mixture"

[run.search]
window = { half_width = 7 }

[backend]
kind = "simulated"
noise = 0.1
tie_margin = 0.0
seed = 3
"#;

    #[test]
    fn parses_and_resolves() {
        let mut m = JobManifest::from_toml(MANIFEST).unwrap();
        m.rebase(Path::new("/jobs"));
        assert_eq!(m.output_dir, PathBuf::from("/jobs/out"));
        assert_eq!(m.cache_path(), PathBuf::from("/jobs/out/comparisons.jsonl"));
        assert_eq!(m.run.strategy, ThresholdStrategy::Mixture);
        assert_eq!(m.run.search.window, lampo::thresholding::Window::HalfWidth(7));
        assert_eq!(m.probing.n_target, 50);
        assert_eq!(m.parallelism(), 8);
        let task = m.resolve().unwrap();
        assert_eq!(task.label_space.len(), 3);
        assert_eq!(task.metric, Metric::Accuracy);
        assert_eq!(task.template.name(), "twitter");
    }

    #[test]
    fn unknown_fields_are_rejected() {
        let bad = MANIFEST.replace("shots = 5", "shots = 5\nshotz = 4");
        assert!(JobManifest::from_toml(&bad).is_err());
    }

    #[test]
    fn custom_dataset_needs_labels() {
        let m = JobManifest::from_toml(&MANIFEST.replace("\"twitter\"", "\"movies\"")).unwrap();
        assert!(m.resolve().is_err());
    }

    #[test]
    fn probe_path_per_seed() {
        let p = ProbingConfig {
            path: Some("probes/seed{seed}.txt".into()),
            ..ProbingConfig::default()
        };
        assert_eq!(p.path_for(2), Some(PathBuf::from("probes/seed2.txt")));
    }
}
