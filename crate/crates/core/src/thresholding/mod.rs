//! From scores to ordinal labels.

mod entropy;
mod search;
mod thresholds;

use serde::{Deserialize, Serialize};

pub use entropy::{compare_entropy, entropy_from_counts, label_entropy};
pub use search::{search_self_supervised_thresholds, SearchConfig, SearchOutcome, TieBreak, Window};
pub use thresholds::{
    decide, decide_label, expected_scores, expected_thresholds, mixture_thresholds, Thresholds,
};

use crate::error::Result;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ThresholdStrategy {
    #[default]
    Expected,
    SelfSupervised,
    Mixture,
}

impl ThresholdStrategy {
    pub const ALL: [ThresholdStrategy; 3] = [
        ThresholdStrategy::Expected,
        ThresholdStrategy::SelfSupervised,
        ThresholdStrategy::Mixture,
    ];

    pub fn needs_probing(self) -> bool {
        self != ThresholdStrategy::Expected
    }

    pub fn name(self) -> &'static str {
        match self {
            ThresholdStrategy::Expected => "expected",
            ThresholdStrategy::SelfSupervised => "self_supervised",
            ThresholdStrategy::Mixture => "mixture",
        }
    }
}

impl std::str::FromStr for ThresholdStrategy {
    type Err = String;

    fn from_str(s: &str) -> std::result::Result<Self, String> {
        ThresholdStrategy::ALL
            .into_iter()
            .find(|t| t.name() == s.replace('-', "_"))
            .ok_or_else(|| format!("unknown threshold strategy `{s}` (expected, self_supervised, mixture)"))
    }
}

/// All three threshold sets for one demonstration set, with search
/// diagnostics. When the probing scores are missing or the search fails the
/// self-supervised and mixture entries fall back to the expected thresholds
/// and `fallback` records why.
#[derive(Debug, Clone, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct Calibration<T> {
    pub expected: Thresholds<T>,
    pub self_supervised: Thresholds<T>,
    pub mixture: Thresholds<T>,
    pub search: Option<SearchOutcome<T>>,
    pub fallback: Option<String>,
}

impl<T: Scalar> Calibration<T> {
    pub fn compute(
        probing_scores: Option<&[i64]>,
        demo_labels: &[usize],
        m: usize,
        cfg: &SearchConfig,
    ) -> Result<Self> {
        let expected: Thresholds<T> = expected_thresholds(demo_labels, m)?;
        let searched = match probing_scores {
            Some(scores) => search_self_supervised_thresholds::<T>(scores, demo_labels, m, cfg),
            None => Err(crate::Error::Calibration("no probing scores available".into())),
        };
        match searched {
            Ok(outcome) => Ok(Self {
                mixture: mixture_thresholds(&expected, &outcome.thresholds)?,
                self_supervised: outcome.thresholds.clone(),
                expected,
                search: Some(outcome),
                fallback: None,
            }),
            Err(e) => {
                log::warn!("self-supervised thresholds unavailable, using expected: {e}");
                Ok(Self {
                    self_supervised: expected.clone(),
                    mixture: expected.clone(),
                    expected,
                    search: None,
                    fallback: Some(e.to_string()),
                })
            }
        }
    }

    pub fn get(&self, strategy: ThresholdStrategy) -> &Thresholds<T> {
        match strategy {
            ThresholdStrategy::Expected => &self.expected,
            ThresholdStrategy::SelfSupervised => &self.self_supervised,
            ThresholdStrategy::Mixture => &self.mixture,
        }
    }
}
