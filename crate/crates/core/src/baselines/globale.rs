use std::cmp::Ordering;
use std::collections::HashMap;
use std::sync::Mutex;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::{class_counts, DemonstrationSet, OrderedLabelSpace, Passage};
use crate::oracle::Generator;
use crate::probing::{sample_permutations, ProbingSet};
use crate::thresholding::{compare_entropy, entropy_from_counts};

use super::icl::{icl_predict, PromptContext};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Cached {
    Label(usize),
    Unparseable,
    Overflow,
}

/// Probe predictions keyed by rendered prompt, so each `(ordering, probe)`
/// pair reaches the backend once.
#[derive(Debug, Default)]
pub struct PredictionCache {
    entries: Mutex<HashMap<String, Cached>>,
}

impl PredictionCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("prediction cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn predict(&self, ctx: &PromptContext, probe: &str, backend: &dyn Generator, space: &OrderedLabelSpace) -> Result<Cached> {
        let key = ctx.render(Passage::new(probe), space)?;
        if let Some(&hit) = self.entries.lock().expect("prediction cache lock").get(&key) {
            return Ok(hit);
        }
        let outcome = match icl_predict(ctx, Passage::new(probe), backend, space) {
            Ok(label) => Cached::Label(label),
            Err(Error::UnparseablePrediction(_)) => Cached::Unparseable,
            Err(Error::ContextOverflow { .. }) => Cached::Overflow,
            Err(e) => return Err(e),
        };
        self.entries
            .lock()
            .expect("prediction cache lock")
            .insert(key, outcome);
        Ok(outcome)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CandidateScore {
    pub ordering_id: usize,
    pub order: Vec<usize>,
    /// `None` when the ordering overflows the context budget.
    pub entropy: Option<f64>,
    pub class_counts: Vec<usize>,
    pub unparseable: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GlobalESelection {
    pub context: PromptContext,
    pub entropy: f64,
    pub candidates: Vec<CandidateScore>,
}

/// Samples `n_candidates` demonstration orderings, predicts every probe
/// under each and keeps the ordering whose predictions have the highest
/// label entropy (lowest ordering id on ties). Unparseable predictions are
/// left out of the distribution.
#[allow(clippy::too_many_arguments)]
pub fn globale_select_ordering(
    demos: &DemonstrationSet,
    n_candidates: usize,
    probing: &ProbingSet,
    backend: &dyn Generator,
    instruction: &str,
    seed: u64,
    cache: &PredictionCache,
) -> Result<GlobalESelection> {
    if n_candidates == 0 {
        return Err(Error::Config("GlobalE needs at least one candidate ordering".into()));
    }
    let space = demos.label_space();
    let m = space.len();
    let orderings = sample_permutations(demos.len(), n_candidates, seed);
    let candidates: Vec<CandidateScore> = orderings
        .par_iter()
        .enumerate()
        .map(|(id, order)| {
            let ctx = PromptContext::from_order(instruction, demos, order, id);
            let outcomes: Vec<Cached> = probing
                .texts()
                .par_iter()
                .map(|probe| cache.predict(&ctx, probe, backend, space))
                .collect::<Result<_>>()?;
            let overflow = outcomes.contains(&Cached::Overflow);
            let labels: Vec<usize> = outcomes
                .iter()
                .filter_map(|o| match o {
                    Cached::Label(l) => Some(*l),
                    _ => None,
                })
                .collect();
            let counts = class_counts(labels.iter().copied(), m);
            Ok(CandidateScore {
                ordering_id: id,
                order: order.clone(),
                entropy: (!overflow).then(|| entropy_from_counts(&counts)),
                class_counts: counts,
                unparseable: outcomes.iter().filter(|o| **o == Cached::Unparseable).count(),
            })
        })
        .collect::<Result<_>>()?;

    let best = candidates
        .iter()
        .filter(|c| c.entropy.is_some())
        .reduce(|a, b| match compare_entropy(&b.class_counts, &a.class_counts) {
            Ordering::Greater => b,
            _ => a,
        })
        .ok_or_else(|| Error::Infeasible(format!("context overflow under all {n_candidates} orderings")))?;

    Ok(GlobalESelection {
        context: PromptContext::from_order(instruction, demos, &best.order, best.ordering_id),
        entropy: best.entropy.expect("feasible candidate"),
        candidates,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::Demonstration;
    use crate::oracle::{SimulatedBackend, SimulatedConfig};
    use crate::probing::{ProbingMetadata, Provenance};

    fn setup() -> (DemonstrationSet, ProbingSet) {
        let space = OrderedLabelSpace::new(["negative", "neutral", "positive"]).unwrap();
        let demos = DemonstrationSet::new(
            (0..3).map(|j| Demonstration::new(format!("demo latent={j}"), j)).collect(),
            space,
            Some(1),
        )
        .unwrap();
        let probes = ProbingSet::new(
            (0..9).map(|i| format!("probe {i} latent={}", i % 3)).collect(),
            Provenance::File,
            ProbingMetadata::default(),
        )
        .unwrap();
        (demos, probes)
    }

    #[test]
    fn single_candidate_is_returned() {
        let (demos, probes) = setup();
        let backend = SimulatedBackend::new(SimulatedConfig::new(0.0, 0.0, 2).with_labels(demos.label_space().labels()));
        let sel = globale_select_ordering(&demos, 1, &probes, &backend, "", 5, &PredictionCache::new()).unwrap();
        assert_eq!(sel.context.ordering_id, 0);
        assert_eq!(sel.candidates.len(), 1);
        assert!((sel.entropy - 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn identical_predictions_tie_to_lowest_id() {
        let (demos, probes) = setup();
        let backend = SimulatedBackend::new(SimulatedConfig::new(0.0, 0.0, 2).with_labels(demos.label_space().labels()));
        let cache = PredictionCache::new();
        let sel = globale_select_ordering(&demos, 2, &probes, &backend, "", 5, &cache).unwrap();
        assert_eq!(sel.context.ordering_id, 0);
        assert_eq!(sel.candidates[0].class_counts, sel.candidates[1].class_counts);
        assert_eq!(cache.len(), 18);
        let calls = backend.call_count();
        globale_select_ordering(&demos, 2, &probes, &backend, "", 5, &cache).unwrap();
        assert_eq!(backend.call_count(), calls);
    }

    #[test]
    fn all_overflow_is_infeasible() {
        let (demos, probes) = setup();
        let mut cfg = SimulatedConfig::new(0.0, 0.0, 2).with_labels(demos.label_space().labels());
        cfg.context_budget = Some(4);
        let backend = SimulatedBackend::new(cfg);
        let err = globale_select_ordering(&demos, 3, &probes, &backend, "", 5, &PredictionCache::new()).unwrap_err();
        assert!(matches!(err, Error::Infeasible(_)));
    }
}
