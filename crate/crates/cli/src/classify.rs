//! `classify` and `calibrate`.

use std::sync::Arc;

use anyhow::{Context, Result};
use lampo::eval::{compute_metric, emit_report, MetricReport, SeedResult};
use lampo::thresholding::{Calibration, ThresholdStrategy};
use lampo::{score_batch, ComparisonCache, Generator, Passage, PreferenceOracle, ProbingSet, Rational};
use serde::Serialize;

use crate::job::{write_jsonl, Job};
use crate::manifest::JobManifest;

/// Comparison calls a run needs, counted before any network work.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct CallPlan {
    pub seeds: Vec<SeedPlan>,
    /// Directed comparison calls over all seeds.
    pub planned: usize,
    /// Calls the cache cannot serve (probes not yet generated count as uncached).
    pub uncached: usize,
    /// Upper bound on probe generation calls.
    pub probe_generations: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct SeedPlan {
    pub seed: u64,
    pub demos: usize,
    pub test_calls: usize,
    pub probing_calls: usize,
    pub uncached: usize,
    pub probe_generations: usize,
}

impl std::fmt::Display for CallPlan {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        for s in &self.seeds {
            writeln!(
                f,
                "seed {}: {} demonstrations, {} test calls, {} probing calls, {} uncached, {} probe generations",
                s.seed, s.demos, s.test_calls, s.probing_calls, s.uncached, s.probe_generations
            )?;
        }
        write!(
            f,
            "planned backend calls: {} ({} uncached, plus up to {} probe generations)",
            self.planned, self.uncached, self.probe_generations
        )
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ItemPrediction {
    pub index: usize,
    pub score: i64,
    pub predicted: String,
    pub gold: String,
}

pub struct ClassifyRun {
    pub plan: CallPlan,
    /// Absent on dry runs.
    pub report: Option<MetricReport>,
    pub predictions: Vec<(u64, Vec<ItemPrediction>)>,
}

fn plan(job: &Job, oracle: &PreferenceOracle, strategy: ThresholdStrategy) -> Result<CallPlan> {
    let tests = job.test_passages();
    let mut seeds = Vec::new();
    for &seed in &job.seeds {
        let demos = job.demos(seed);
        let c = demos.len();
        let demo_passages = demos.passages();
        let mut pairs: Vec<(Passage<'_>, Passage<'_>)> =
            tests.iter().flat_map(|&x| demo_passages.iter().map(move |&d| (x, d))).collect();
        let test_calls = 2 * c * tests.len();
        let (mut probing_calls, mut unknown, mut probe_generations) = (0, 0, 0);
        let loaded;
        if strategy.needs_probing() {
            match job.existing_probe_file(seed) {
                Some(path) => {
                    loaded = lampo::probing::load_probing_set(&path)?;
                    let probes = job.probe_passages(&loaded);
                    probing_calls = 2 * c * probes.len();
                    pairs.extend(probes.iter().flat_map(|&x| demo_passages.iter().map(move |&d| (x, d))));
                }
                None => {
                    probing_calls = 2 * c * job.manifest.probing.n_target;
                    unknown = probing_calls;
                    probe_generations = job.manifest.probing.n_orderings;
                }
            }
        }
        seeds.push(SeedPlan {
            seed,
            demos: c,
            test_calls,
            probing_calls,
            uncached: oracle.uncached_calls(&pairs) + unknown,
            probe_generations,
        });
    }
    Ok(CallPlan {
        planned: seeds.iter().map(|s| s.test_calls + s.probing_calls).sum(),
        uncached: seeds.iter().map(|s| s.uncached).sum(),
        probe_generations: seeds.iter().map(|s| s.probe_generations).sum(),
        seeds,
    })
}

struct SeedCalibration {
    calibration: Calibration<Rational>,
    probing: Option<ProbingSet>,
    probing_error: Option<String>,
    test_scores: Vec<i64>,
}

/// Scores the test items (and probes, when the strategy needs them) and
/// derives all three threshold sets for one seed.
fn calibrate_seed(
    job: &Job,
    seed: u64,
    oracle: &PreferenceOracle,
    probe_backend: &dyn Generator,
    need_probing: bool,
    score_tests: bool,
) -> Result<SeedCalibration> {
    let demos = job.demos(seed);
    let (probing, probing_error) = if need_probing {
        match job.probing_set(seed, probe_backend) {
            Ok(set) => (Some(set), None),
            Err(e) => {
                log::warn!("seed {seed}: probing set unavailable: {e:#}");
                (None, Some(format!("{e:#}")))
            }
        }
    } else {
        (None, None)
    };
    let test_scores = if score_tests {
        score_batch(&job.test_passages(), demos, oracle)?
    } else {
        Vec::new()
    };
    let probe_scores = match &probing {
        Some(set) => Some(score_batch(&job.probe_passages(set), demos, oracle)?),
        None => None,
    };
    let calibration = Calibration::compute(
        probe_scores.as_deref(),
        &demos.labels(),
        job.task.label_space.len(),
        &job.manifest.run.search,
    )?;
    Ok(SeedCalibration {
        calibration,
        probing,
        probing_error,
        test_scores,
    })
}

pub fn classify(manifest: &JobManifest) -> Result<ClassifyRun> {
    let job = Job::load(manifest.clone())?;
    let backend = job.build_backend()?;
    classify_job(&job, backend)
}

/// [`classify`] against a caller-supplied backend.
pub fn classify_with(manifest: &JobManifest, backend: Arc<dyn Generator>) -> Result<ClassifyRun> {
    classify_job(&Job::load(manifest.clone())?, backend)
}

fn classify_job(job: &Job, backend: Arc<dyn Generator>) -> Result<ClassifyRun> {
    let strategy = job.manifest.run.strategy;
    let cache = if job.manifest.dry_run {
        Arc::new(ComparisonCache::read_only(job.manifest.cache_path())?)
    } else {
        job.open_cache()?
    };
    let oracle = job.oracle(backend.clone(), cache);
    let plan = plan(job, &oracle, strategy)?;
    log::info!("{plan}");
    if job.manifest.dry_run {
        return Ok(ClassifyRun {
            plan,
            report: None,
            predictions: Vec::new(),
        });
    }

    let space = &job.task.label_space;
    let golds = job.golds();
    let mut seed_results = Vec::new();
    let mut predictions = Vec::new();
    let mut thresholds = serde_json::Map::new();
    for &seed in &job.seeds {
        let before = oracle.stats();
        let sc = calibrate_seed(job, seed, &oracle, backend.as_ref(), strategy.needs_probing(), true)?;
        let after = oracle.stats();
        let cuts = sc.calibration.get(strategy);
        let predicted: Vec<usize> = sc.test_scores.iter().map(|&s| cuts.decide(s)).collect();
        let value: f64 = compute_metric(&job.task.metric, &predicted, &golds, space)?;
        let rows: Vec<ItemPrediction> = sc
            .test_scores
            .iter()
            .zip(&predicted)
            .zip(&golds)
            .enumerate()
            .map(|(index, ((&score, &p), &g))| ItemPrediction {
                index,
                score,
                predicted: space.labels()[p].clone(),
                gold: space.labels()[g].clone(),
            })
            .collect();
        std::fs::create_dir_all(job.output_dir())?;
        write_jsonl(&job.output_dir().join(format!("predictions_seed{seed}.jsonl")), &rows)?;
        thresholds.insert(
            seed.to_string(),
            serde_json::json!({
                "thresholds": cuts,
                "fallback": sc.calibration.fallback,
                "probing_error": sc.probing_error,
                "probing_size": sc.probing.as_ref().map(ProbingSet::len),
            }),
        );
        let mut result = SeedResult::ok(seed, value);
        result.backend_calls = after.backend_calls - before.backend_calls;
        result.cache_hits = after.cache_hits - before.cache_hits;
        seed_results.push(result);
        predictions.push((seed, rows));
    }

    let m = &job.manifest;
    let report = MetricReport::new(
        m.run.dataset.clone(),
        format!("lampo/{}", strategy.name()),
        m.run.shots,
        job.task.metric.to_string(),
        seed_results,
    );
    let report = job
        .common_settings(report, backend.as_ref())
        .with_setting("strategy", strategy.name())
        .with_setting("search", &m.run.search)
        .with_setting("window_half_width", seed_half_widths(job))
        .with_setting("planned_calls", plan.planned)
        .with_setting("calibration", serde_json::Value::Object(thresholds));
    emit_report(std::slice::from_ref(&report), job.output_dir(), "report")?;
    Ok(ClassifyRun {
        plan,
        report: Some(report),
        predictions,
    })
}

fn seed_half_widths(job: &Job) -> serde_json::Value {
    job.seeds
        .iter()
        .map(|&s| {
            let hw = job.manifest.run.search.half_width(job.demos(s).len());
            (s.to_string(), serde_json::json!(hw))
        })
        .collect::<serde_json::Map<_, _>>()
        .into()
}

#[derive(Debug, Clone, Serialize)]
pub struct SeedCalibrationReport {
    pub seed: u64,
    pub calibration: Calibration<Rational>,
    pub probing_size: Option<usize>,
    pub probing_provenance: Option<lampo::probing::Provenance>,
    /// Why the probing set is missing, when it is.
    pub probing_error: Option<String>,
    /// Set when self-supervised and mixture fell back to expected thresholds.
    pub warning: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrationDocument {
    pub dataset: String,
    pub search: lampo::SearchConfig,
    pub seeds: Vec<SeedCalibrationReport>,
}

/// Computes all three threshold sets per seed and writes `calibration.json`.
pub fn calibrate(manifest: &JobManifest) -> Result<CalibrationDocument> {
    let job = Job::load(manifest.clone())?;
    let backend = job.build_backend()?;
    calibrate_job(&job, backend)
}

pub fn calibrate_with(manifest: &JobManifest, backend: Arc<dyn Generator>) -> Result<CalibrationDocument> {
    calibrate_job(&Job::load(manifest.clone())?, backend)
}

fn calibrate_job(job: &Job, backend: Arc<dyn Generator>) -> Result<CalibrationDocument> {
    let oracle = job.oracle(backend.clone(), job.open_cache()?);
    let mut seeds = Vec::new();
    for &seed in &job.seeds {
        let sc = calibrate_seed(job, seed, &oracle, backend.as_ref(), true, false)?;
        seeds.push(SeedCalibrationReport {
            seed,
            warning: sc.calibration.fallback.is_some(),
            probing_size: sc.probing.as_ref().map(ProbingSet::len),
            probing_provenance: sc.probing.as_ref().map(ProbingSet::provenance),
            probing_error: sc.probing_error,
            calibration: sc.calibration,
        });
    }
    let doc = CalibrationDocument {
        dataset: job.manifest.run.dataset.clone(),
        search: job.manifest.run.search.clone(),
        seeds,
    };
    std::fs::create_dir_all(job.output_dir())?;
    let path = job.output_dir().join("calibration.json");
    std::fs::write(&path, serde_json::to_string_pretty(&doc)? + "\n")
        .with_context(|| format!("writing {}", path.display()))?;
    Ok(doc)
}
