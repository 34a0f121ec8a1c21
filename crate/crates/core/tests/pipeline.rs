//! Scoring, calibration and decisions end to end against the simulated oracle.

use std::sync::Arc;

use lampo::oracle::{SimulatedBackend, SimulatedConfig};
use lampo::probing::{construct_probing_set, ProbingOptions};
use lampo::thresholding::{Calibration, ThresholdStrategy};
use lampo::{
    score_batch, ComparisonCache, Demonstration, DemonstrationSet, ExactThresholds, Generator, OrderedLabelSpace,
    Passage, PreferenceOracle, PromptTemplate, Rational, SearchConfig,
};

fn space() -> OrderedLabelSpace {
    OrderedLabelSpace::new(["negative", "neutral", "positive"]).unwrap()
}

fn demos(k: usize) -> DemonstrationSet {
    let items = (0..3)
        .flat_map(|j| (0..k).map(move |i| Demonstration::new(format!("demo {j}.{i} latent={j}"), j)))
        .collect();
    DemonstrationSet::new(items, space(), Some(k)).unwrap()
}

fn oracle(backend: Arc<SimulatedBackend>) -> PreferenceOracle {
    PreferenceOracle::new(
        backend,
        PromptTemplate::builtin("twitter").unwrap(),
        Arc::new(ComparisonCache::in_memory()),
        4,
    )
    .unwrap()
}

#[test]
fn noise_free_pipeline_recovers_every_label() {
    let labels: Vec<String> = space().labels().to_vec();
    let backend = Arc::new(SimulatedBackend::new(SimulatedConfig::new(0.0, 0.0, 11).with_labels(&labels)));
    let demos = demos(5);
    let oracle = oracle(backend.clone());
    let tests: Vec<(String, usize)> = (0..60).map(|i| (format!("item {i} latent={}", i % 3), i % 3)).collect();
    let passages: Vec<Passage<'_>> = tests.iter().map(|(t, _)| Passage::new(t)).collect();
    let scores = score_batch(&passages, &demos, &oracle).unwrap();
    assert_eq!(backend.call_count(), 2 * 15 * 60);

    let probing = construct_probing_set(
        &demos,
        backend.as_ref(),
        &ProbingOptions {
            n_target: 40,
            ..ProbingOptions::default()
        },
    )
    .unwrap();
    let probe_scores = score_batch(&probing.passages(), &demos, &oracle).unwrap();
    let cal = Calibration::<Rational>::compute(Some(&probe_scores), &demos.labels(), 3, &SearchConfig::default()).unwrap();
    assert_eq!(cal.expected.to_string(), "{10, 20}");
    for strategy in ThresholdStrategy::ALL {
        let cuts: &ExactThresholds = cal.get(strategy);
        for (score, (_, gold)) in scores.iter().zip(&tests) {
            assert_eq!(cuts.decide(*score), *gold, "{strategy:?} score {score}");
        }
    }
}

#[test]
fn scores_are_identical_across_parallelism() {
    let labels: Vec<String> = space().labels().to_vec();
    let tests: Vec<String> = (0..25).map(|i| format!("item {i} latent={}", (i as f64) / 12.0)).collect();
    let passages: Vec<Passage<'_>> = tests.iter().map(|t| Passage::new(t)).collect();
    let demos = demos(3);
    let run = |parallelism| {
        let backend = Arc::new(SimulatedBackend::new(SimulatedConfig::new(0.3, 0.05, 5).with_labels(&labels)));
        let oracle = PreferenceOracle::new(
            backend,
            PromptTemplate::builtin("twitter").unwrap(),
            Arc::new(ComparisonCache::in_memory()),
            parallelism,
        )
        .unwrap();
        score_batch(&passages, &demos, &oracle).unwrap()
    };
    assert_eq!(run(1), run(8));
}
