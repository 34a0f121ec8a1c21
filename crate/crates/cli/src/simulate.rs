//! `simulate`: accuracy sweeps against the simulated oracle.
//!
//! Each trial draws a fresh demonstration set (`k` per class, latent equal to
//! the class index), fresh test items and a generated probing set. Trials
//! share their backend seed across noise levels, so cells differ only in ε.

use std::fmt::Write as _;
use std::path::Path;
use std::sync::Arc;

use anyhow::Result;
use lampo::eval::mean_std;
use lampo::oracle::{worker_pool, SimulatedBackend, SimulatedConfig};
use lampo::probing::{construct_probing_set, ProbingOptions};
use lampo::thresholding::{Calibration, ThresholdStrategy};
use lampo::{
    score_batch, ComparisonCache, Demonstration, DemonstrationSet, OrderedLabelSpace, Passage, PreferenceOracle,
    PromptTemplate, Rational, SearchConfig,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SweepConfig {
    pub classes: Vec<usize>,
    pub shots: Vec<usize>,
    pub noise: Vec<f64>,
    pub strategies: Vec<ThresholdStrategy>,
    pub trials: usize,
    pub test_items: usize,
    pub probing_size: usize,
    pub tie_margin: f64,
    pub seed: u64,
    pub search: SearchConfig,
    pub parallelism: usize,
}

impl Default for SweepConfig {
    fn default() -> Self {
        Self {
            classes: vec![3],
            shots: vec![5],
            noise: vec![0.0, 0.2, 0.4],
            strategies: ThresholdStrategy::ALL.to_vec(),
            trials: 100,
            test_items: 30,
            probing_size: 50,
            tie_margin: 0.0,
            seed: 0,
            search: SearchConfig::default(),
            parallelism: lampo::oracle::DEFAULT_PARALLELISM,
        }
    }
}

impl SweepConfig {
    pub fn validate(&self) -> Result<()> {
        let config = |msg: &str| Err(lampo::Error::Config(msg.into()).into());
        if self.classes.iter().any(|&m| m < 2) {
            return config("every class count must be at least 2");
        }
        if self.shots.iter().any(|&k| k == 0) {
            return config("every shot count must be at least 1");
        }
        if self.noise.iter().any(|e| !(0.0..=1.0).contains(e)) {
            return config("noise levels must lie in [0, 1]");
        }
        if self.classes.is_empty() || self.shots.is_empty() || self.noise.is_empty() || self.strategies.is_empty() {
            return config("sweep axes must be nonempty");
        }
        if self.trials == 0 || self.test_items == 0 || self.parallelism == 0 {
            return config("trials, test_items and parallelism must be at least 1");
        }
        if self.strategies.iter().any(|s| s.needs_probing()) && self.probing_size == 0 {
            return config("probing_size must be at least 1 for self-supervised strategies");
        }
        if !(self.tie_margin >= 0.0) {
            return config("tie_margin must be >= 0");
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepRow {
    pub m: usize,
    pub k: usize,
    pub noise: f64,
    pub strategy: ThresholdStrategy,
    pub trials: usize,
    pub mean_accuracy: f64,
    /// Population standard deviation over trials.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub config: SweepConfig,
    pub rows: Vec<SweepRow>,
}

impl SweepReport {
    pub fn row(&self, m: usize, k: usize, noise: f64, strategy: ThresholdStrategy) -> Option<&SweepRow> {
        self.rows
            .iter()
            .find(|r| r.m == m && r.k == k && r.noise == noise && r.strategy == strategy)
    }

    pub fn table(&self) -> String {
        let mut out = String::from("| m | k | noise | strategy | trials | accuracy | std |\n|---|---|---|---|---|---|---|\n");
        for r in &self.rows {
            let _ = writeln!(
                out,
                "| {} | {} | {} | {} | {} | {:.4} | {:.4} |",
                r.m,
                r.k,
                r.noise,
                r.strategy.name(),
                r.trials,
                r.mean_accuracy,
                r.std
            );
        }
        out
    }

    pub fn write(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        std::fs::write(dir.join("sweep.json"), serde_json::to_string_pretty(self)? + "\n")?;
        std::fs::write(dir.join("sweep.md"), self.table())?;
        Ok(())
    }
}

fn mix(parts: &[u64]) -> u64 {
    parts.iter().fold(0xCBF2_9CE4_8422_2325u64, |h, &p| {
        (h ^ p).wrapping_mul(0x0000_0100_0000_01B3).rotate_left(17)
    })
}

fn sweep_template() -> PromptTemplate {
    PromptTemplate::new(
        "simulated",
        "Passage A: {item1}\n\nPassage B: {item2}\n\nWhich Passage ranks higher?\n\nOutput Passage A or Passage B:",
        false,
    )
    .expect("valid sweep template")
}

/// Label names `c0..c{m-1}`.
pub fn synthetic_space(m: usize) -> OrderedLabelSpace {
    OrderedLabelSpace::new((0..m).map(|j| format!("c{j}"))).expect("distinct synthetic labels")
}

/// `k` demonstrations per class; each text carries its class as latent.
pub fn synthetic_demos(m: usize, k: usize, trial: usize) -> DemonstrationSet {
    let items = (0..m)
        .flat_map(|j| (0..k).map(move |i| Demonstration::new(format!("demo c{j} i{i} t{trial} latent={j}"), j)))
        .collect();
    DemonstrationSet::new(items, synthetic_space(m), Some(k)).expect("balanced synthetic demonstrations")
}

/// `(text, gold)` test items with uniformly drawn classes.
pub fn synthetic_tests(m: usize, n: usize, seed: u64) -> Vec<(String, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n)
        .map(|i| {
            let j = rng.random_range(0..m);
            (format!("test {seed:x} i{i} latent={j}"), j)
        })
        .collect()
}

/// Accuracy of every configured strategy on one `(m, k, ε, trial)` instance.
fn run_trial(cfg: &SweepConfig, m: usize, k: usize, noise: f64, trial: usize, pool: &Arc<rayon::ThreadPool>) -> Result<Vec<f64>> {
    let space = synthetic_space(m);
    let sim_seed = mix(&[cfg.seed, trial as u64, m as u64, k as u64]);
    let backend = Arc::new(SimulatedBackend::new(
        SimulatedConfig::new(noise, cfg.tie_margin, sim_seed).with_labels(space.labels()),
    ));
    let demos = synthetic_demos(m, k, trial);
    let tests = synthetic_tests(m, cfg.test_items, mix(&[sim_seed, 1]));
    let oracle = PreferenceOracle::with_pool(
        backend.clone(),
        sweep_template(),
        Arc::new(ComparisonCache::in_memory()),
        pool.clone(),
    );
    let test_passages: Vec<Passage<'_>> = tests.iter().map(|(t, _)| Passage::new(t)).collect();
    let test_scores = score_batch(&test_passages, &demos, &oracle)?;
    let probe_scores = if cfg.strategies.iter().any(|s| s.needs_probing()) {
        let opts = ProbingOptions {
            n_target: cfg.probing_size,
            seed: mix(&[sim_seed, 2]),
            batch: 1,
            n_orderings: cfg.probing_size,
            ..ProbingOptions::default()
        };
        let probes = construct_probing_set(&demos, backend.as_ref(), &opts)?;
        Some(score_batch(&probes.passages(), &demos, &oracle)?)
    } else {
        None
    };
    let calibration = Calibration::<Rational>::compute(probe_scores.as_deref(), &demos.labels(), m, &cfg.search)?;
    Ok(cfg
        .strategies
        .iter()
        .map(|&s| {
            let cuts = calibration.get(s);
            let hits = test_scores
                .iter()
                .zip(&tests)
                .filter(|(&score, (_, gold))| cuts.decide(score) == *gold)
                .count();
            hits as f64 / tests.len() as f64
        })
        .collect())
}

pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let pool = Arc::new(worker_pool(cfg.parallelism)?);
    let mut rows = Vec::new();
    for &m in &cfg.classes {
        for &k in &cfg.shots {
            for &noise in &cfg.noise {
                let per_trial: Vec<Vec<f64>> = pool.install(|| {
                    (0..cfg.trials)
                        .into_par_iter()
                        .map(|t| run_trial(cfg, m, k, noise, t, &pool))
                        .collect::<Result<_>>()
                })?;
                for (i, &strategy) in cfg.strategies.iter().enumerate() {
                    let accs: Vec<f64> = per_trial.iter().map(|a| a[i]).collect();
                    let (mean, std) = mean_std(&accs).expect("at least one trial");
                    rows.push(SweepRow {
                        m,
                        k,
                        noise,
                        strategy,
                        trials: cfg.trials,
                        mean_accuracy: mean,
                        std,
                    });
                }
                log::info!("m={m} k={k} noise={noise}: {} trials done", cfg.trials);
            }
        }
    }
    Ok(SweepReport { config: cfg.clone(), rows })
}
