//! Pointwise baselines: in-context prediction, contextual calibration and
//! ordering selection by global label entropy.

mod calibration;
mod globale;
mod icl;

pub use calibration::{
    calibration_ratios, contextual_calibrate, label_probabilities, ContextualCalibrator, ProbabilityVector,
    CONTENT_FREE,
};
pub use globale::{globale_select_ordering, CandidateScore, GlobalESelection, PredictionCache};
pub use icl::{default_instruction, icl_predict, match_label, PromptContext, ANSWER_TOKENS};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    Lampo,
    Icl,
    Cc,
    Globale,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Lampo => "lampo",
            Method::Icl => "icl",
            Method::Cc => "cc",
            Method::Globale => "globale",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        [Method::Lampo, Method::Icl, Method::Cc, Method::Globale]
            .into_iter()
            .find(|m| m.name().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method `{s}` (lampo, icl, cc, globale)"))
    }
}
