//! `baseline`: ICL, contextual calibration and GlobalE in the shared report schema.

use std::sync::Arc;

use anyhow::{bail, Result};
use lampo::baselines::{
    globale_select_ordering, icl_predict, ContextualCalibrator, Method, PredictionCache, PromptContext,
};
use lampo::eval::{compute_metric_with_abstentions, emit_report, MetricReport, SeedResult};
use lampo::{BackendError, Error, Generator};
use rayon::prelude::*;
use serde::Serialize;

use crate::job::{write_jsonl, Job};
use crate::manifest::JobManifest;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BaselinePrediction {
    pub index: usize,
    /// `None` when no label could be read from the output.
    pub predicted: Option<String>,
    pub gold: String,
}

/// Errors that make a whole seed infeasible rather than aborting the run.
fn infeasible(e: &Error) -> bool {
    matches!(
        e,
        Error::ContextOverflow { .. }
            | Error::Unsupported(_)
            | Error::Backend(BackendError::Unsupported(_))
            | Error::Infeasible(_)
            | Error::CalibrationSingularity(_)
    )
}

/// Per-item predictions; unparseable outputs become `None`.
fn predict_all(
    job: &Job,
    predict: impl Fn(lampo::Passage<'_>) -> lampo::Result<usize> + Sync,
) -> lampo::Result<Vec<Option<usize>>> {
    let tests = job.test_passages();
    job.pool.install(|| {
        tests
            .par_iter()
            .map(|&x| match predict(x) {
                Ok(l) => Ok(Some(l)),
                Err(Error::UnparseablePrediction(_)) => Ok(None),
                Err(e) => Err(e),
            })
            .collect()
    })
}

struct SeedOutcome {
    predictions: Vec<Option<usize>>,
    details: serde_json::Value,
}

fn run_seed(job: &Job, seed: u64, method: Method, backend: &dyn Generator, cache: &PredictionCache) -> Result<lampo::Result<SeedOutcome>> {
    let demos = job.demos(seed);
    let space = &job.task.label_space;
    let instruction = job.task.instruction.as_str();
    let identity: Vec<usize> = (0..demos.len()).collect();
    Ok(match method {
        Method::Icl => {
            let ctx = PromptContext::from_order(instruction, demos, &identity, 0);
            predict_all(job, |x| icl_predict(&ctx, x, backend, space)).map(|predictions| SeedOutcome {
                predictions,
                details: serde_json::Value::Null,
            })
        }
        Method::Cc => {
            let ctx = PromptContext::from_order(instruction, demos, &identity, 0);
            ContextualCalibrator::fit(ctx, &job.manifest.run.content_free, backend, space).and_then(|cal| {
                let details = serde_json::json!({ "content_free": cal.content_free().values() });
                predict_all(job, |x| cal.predict(x, backend, space)).map(|predictions| SeedOutcome { predictions, details })
            })
        }
        Method::Globale => {
            let probing = job.probing_set(seed, backend)?;
            let order_seed = job.manifest.probing.seed ^ seed;
            let selected = job.pool.install(|| {
                globale_select_ordering(
                    demos,
                    job.manifest.run.globale_candidates,
                    &probing,
                    backend,
                    instruction,
                    order_seed,
                    cache,
                )
            });
            selected.and_then(|sel| {
                let details = serde_json::json!({
                    "ordering_id": sel.context.ordering_id,
                    "entropy": sel.entropy,
                    "probing_size": probing.len(),
                    "candidates": sel.candidates,
                });
                predict_all(job, |x| icl_predict(&sel.context, x, backend, space))
                    .map(|predictions| SeedOutcome { predictions, details })
            })
        }
        Method::Lampo => unreachable!("rejected before any seed runs"),
    })
}

pub struct BaselineRun {
    /// Upper bound on pointwise backend calls.
    pub planned_calls: usize,
    /// Absent on dry runs.
    pub report: Option<MetricReport>,
}

fn planned_calls(job: &Job, method: Method) -> usize {
    let tests = job.dataset.test.len();
    let per_seed = match method {
        Method::Icl => tests,
        Method::Cc => tests + 1,
        Method::Globale => job.manifest.run.globale_candidates * job.manifest.probing.n_target + tests,
        Method::Lampo => 0,
    };
    per_seed * job.seeds.len()
}

pub fn baseline(manifest: &JobManifest) -> Result<BaselineRun> {
    let job = Job::load(manifest.clone())?;
    let backend = job.build_backend()?;
    baseline_job(&job, backend)
}

pub fn baseline_with(manifest: &JobManifest, backend: Arc<dyn Generator>) -> Result<BaselineRun> {
    baseline_job(&Job::load(manifest.clone())?, backend)
}

fn baseline_job(job: &Job, backend: Arc<dyn Generator>) -> Result<BaselineRun> {
    let method = job.manifest.run.method;
    if method == Method::Lampo {
        bail!(Error::Config("method `lampo` runs through `classify`".into()));
    }
    let planned_calls = planned_calls(job, method);
    log::info!("planned pointwise calls: at most {planned_calls}");
    if job.manifest.dry_run {
        return Ok(BaselineRun {
            planned_calls,
            report: None,
        });
    }
    let space = &job.task.label_space;
    let golds = job.golds();
    let cache = PredictionCache::new();
    let mut seeds = Vec::new();
    let mut details = serde_json::Map::new();
    for &seed in &job.seeds {
        let before = backend.call_count();
        let mut result = match run_seed(job, seed, method, backend.as_ref(), &cache)? {
            Ok(out) => {
                let value = compute_metric_with_abstentions(&job.task.metric, &out.predictions, &golds, space)?;
                let rows: Vec<BaselinePrediction> = out
                    .predictions
                    .iter()
                    .zip(&golds)
                    .enumerate()
                    .map(|(index, (p, &g))| BaselinePrediction {
                        index,
                        predicted: p.map(|p| space.labels()[p].clone()),
                        gold: space.labels()[g].clone(),
                    })
                    .collect();
                std::fs::create_dir_all(job.output_dir())?;
                write_jsonl(&job.output_dir().join(format!("predictions_{}_seed{seed}.jsonl", method.name())), &rows)?;
                details.insert(seed.to_string(), out.details);
                let mut r = SeedResult::ok(seed, value);
                r.unparseable = out.predictions.iter().filter(|p| p.is_none()).count();
                r
            }
            Err(e) if infeasible(&e) => {
                log::warn!("seed {seed}: {} infeasible: {e}", method.name());
                details.insert(seed.to_string(), serde_json::json!({ "error": e.to_string() }));
                SeedResult::na(seed, e.na_tag())
            }
            Err(e) => return Err(e.into()),
        };
        result.backend_calls = backend.call_count() - before;
        seeds.push(result);
    }
    let m = &job.manifest;
    let mut report = MetricReport::new(
        m.run.dataset.clone(),
        method.name(),
        m.run.shots,
        job.task.metric.to_string(),
        seeds,
    );
    report = job
        .common_settings(report, backend.as_ref())
        .with_setting("instruction", &job.task.instruction)
        .with_setting("seed_details", serde_json::Value::Object(details));
    if method == Method::Cc {
        report = report.with_setting("content_free", &m.run.content_free);
    }
    if method == Method::Globale {
        report = report.with_setting("globale_candidates", m.run.globale_candidates);
    }
    emit_report(std::slice::from_ref(&report), job.output_dir(), &format!("report_{}", method.name()))?;
    Ok(BaselineRun {
        planned_calls,
        report: Some(report),
    })
}
