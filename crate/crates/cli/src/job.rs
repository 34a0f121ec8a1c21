//! Shared plumbing for manifest-driven commands.

use std::path::{Path, PathBuf};
use std::sync::Arc;

use anyhow::{bail, Context, Result};
use lampo::eval::{load_dataset, Dataset, LoadOptions, MetricReport};
use lampo::oracle::worker_pool;
use lampo::probing::{construct_probing_set, load_probing_set, save_probing_set};
use lampo::{BackendConfig, ComparisonCache, DemonstrationSet, Generator, Passage, PreferenceOracle, ProbingSet};
use rayon::ThreadPool;
use serde::Serialize;

use crate::manifest::{JobManifest, ResolvedTask};

/// A manifest with its dataset loaded and its task resolved.
pub struct Job {
    pub manifest: JobManifest,
    pub task: ResolvedTask,
    pub dataset: Dataset,
    pub seeds: Vec<u64>,
    pub pool: Arc<ThreadPool>,
}

impl Job {
    pub fn load(manifest: JobManifest) -> Result<Self> {
        let task = manifest.resolve()?;
        let opts = LoadOptions {
            shots_per_class: manifest.run.shots,
            aspect_based: task.aspect_based,
        };
        let dataset = load_dataset(&manifest.run.dataset_path, &task.label_space, opts)?;
        if dataset.test.is_empty() {
            bail!(lampo::Error::Config(format!(
                "{} has no test rows",
                manifest.run.dataset_path.display()
            )));
        }
        let seeds = if manifest.run.seeds.is_empty() {
            dataset.demos.keys().copied().collect()
        } else {
            manifest.run.seeds.clone()
        };
        if seeds.is_empty() {
            bail!(lampo::Error::Config("dataset has no demonstration rows".into()));
        }
        for seed in &seeds {
            if !dataset.demos.contains_key(seed) {
                bail!(lampo::Error::Config(format!("dataset has no demonstrations for seed {seed}")));
            }
        }
        let pool = Arc::new(worker_pool(manifest.parallelism())?);
        Ok(Self {
            manifest,
            task,
            dataset,
            seeds,
            pool,
        })
    }

    pub fn demos(&self, seed: u64) -> &DemonstrationSet {
        &self.dataset.demos[&seed]
    }

    pub fn output_dir(&self) -> &Path {
        &self.manifest.output_dir
    }

    pub fn build_backend(&self) -> Result<Arc<dyn Generator>> {
        Ok(self.manifest.backend.build(self.task.label_space.labels())?)
    }

    /// The comparison cache: reloaded on resume (or replay), truncated otherwise.
    pub fn open_cache(&self) -> Result<Arc<ComparisonCache>> {
        let path = self.manifest.cache_path();
        let reuse = self.manifest.resume || matches!(self.manifest.backend, BackendConfig::Replay(_));
        let cache = if reuse {
            ComparisonCache::open(&path)?
        } else {
            ComparisonCache::create(&path)?
        };
        log::info!("comparison cache {} holds {} entries", path.display(), cache.len());
        Ok(Arc::new(cache))
    }

    pub fn oracle(&self, backend: Arc<dyn Generator>, cache: Arc<ComparisonCache>) -> PreferenceOracle {
        PreferenceOracle::with_pool(backend, self.task.template.clone(), cache, self.pool.clone())
    }

    pub fn test_passages(&self) -> Vec<Passage<'_>> {
        self.dataset.test.iter().map(|t| t.passage()).collect()
    }

    pub fn golds(&self) -> Vec<usize> {
        self.dataset.test.iter().map(|t| t.gold).collect()
    }

    /// Probe file configured for `seed`, if it already exists.
    pub fn existing_probe_file(&self, seed: u64) -> Option<PathBuf> {
        self.manifest.probing.path_for(seed).filter(|p| p.exists())
    }

    /// Loads the seed's probe file or generates a probing set with `backend`.
    /// Generated sets are saved next to the report (and to the configured
    /// path, when one is set).
    pub fn probing_set(&self, seed: u64, backend: &dyn Generator) -> Result<ProbingSet> {
        if let Some(path) = self.existing_probe_file(seed) {
            return load_probing_set(&path).with_context(|| format!("loading probes from {}", path.display()));
        }
        let opts = self.manifest.probing.options(seed, self.manifest.parallelism());
        let set = self
            .pool
            .install(|| construct_probing_set(self.demos(seed), backend, &opts))?;
        std::fs::create_dir_all(self.output_dir())?;
        save_probing_set(&set, &self.output_dir().join(format!("probing_seed{seed}.txt")))?;
        if let Some(path) = self.manifest.probing.path_for(seed) {
            if let Some(dir) = path.parent() {
                std::fs::create_dir_all(dir)?;
            }
            save_probing_set(&set, &path)?;
        }
        Ok(set)
    }

    pub fn probe_passages<'a>(&self, set: &'a ProbingSet) -> Vec<Passage<'a>> {
        set.texts()
            .iter()
            .map(|t| probe_passage(t, self.task.aspect_based))
            .collect()
    }

    /// Effective settings recorded in every report.
    pub fn common_settings(&self, report: MetricReport, backend: &dyn Generator) -> MetricReport {
        let m = &self.manifest;
        report
            .with_setting("backend", backend.id())
            .with_setting("decoding", "deterministic")
            .with_setting("parallelism", m.parallelism())
            .with_setting("template", self.task.template.id())
            .with_setting("test_items", self.dataset.test.len())
            .with_setting("probing", &m.probing)
    }
}

/// Probe text as a passage; on aspect-based tasks a trailing ` aspect:<a>`
/// supplies the aspect.
pub fn probe_passage(text: &str, aspect_based: bool) -> Passage<'_> {
    if aspect_based {
        if let Some((body, aspect)) = text.rsplit_once(" aspect:") {
            return Passage::with_aspect(body, Some(aspect));
        }
    }
    Passage::new(text)
}

/// Writes one JSON object per line.
pub fn write_jsonl<T: Serialize>(path: &Path, rows: &[T]) -> Result<()> {
    let mut out = String::new();
    for row in rows {
        out.push_str(&serde_json::to_string(row)?);
        out.push('\n');
    }
    std::fs::write(path, out).with_context(|| format!("writing {}", path.display()))
}
