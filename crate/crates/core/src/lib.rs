//! Few-shot ordinal classification with a language model used as a pairwise
//! preference oracle.
//!
//! A test passage is compared against every labeled demonstration with two
//! order-swapped prompts. The debiased outcomes are folded into an integer
//! score, and the score is mapped back onto the ordinal label space through
//! `m - 1` thresholds: analytic expected thresholds, entropy-searched
//! self-supervised thresholds over an unlabeled probing set, or their mean.
//!
//! The crate also carries the pointwise baselines used for comparison
//! (in-context prediction, contextual calibration and ordering selection by
//! global label entropy) together with dataset ingestion, metrics and report
//! emission.
//!
//! Threshold arithmetic is generic over [`Scalar`]; the crate-root aliases
//! pick the exact rational instantiation used by the pipeline.

pub mod baselines;
pub mod error;
pub mod eval;
pub mod labels;
pub mod oracle;
pub mod probing;
pub mod scalar;
pub mod scoring;
pub mod thresholding;

pub use error::{BackendError, Error, ErrorKind, Result};
pub use labels::{label_index, Demonstration, DemonstrationSet, OrderedLabelSpace, Passage};
pub use oracle::{
    parse_preference, BackendConfig, ComparisonCache, ComparisonOutcome, Generator,
    Preference, PreferenceOracle, PromptTemplate,
};
pub use probing::ProbingSet;
pub use scalar::Scalar;
pub use scoring::{local_score, score_batch, score_instance, Comparator};
pub use thresholding::{
    decide, expected_scores, expected_thresholds, label_entropy, mixture_thresholds,
    search_self_supervised_thresholds, SearchConfig, Thresholds,
};

/// Exact rational used for threshold arithmetic.
pub type Rational = num_rational::Rational64;

/// Thresholds with exact rational cut points (the pipeline default).
pub type ExactThresholds = Thresholds<Rational>;

/// Thresholds with double-precision cut points.
pub type Thresholds64 = Thresholds<f64>;

/// Thresholds with single-precision cut points.
pub type Thresholds32 = Thresholds<f32>;

/// Per-label probability vector in double precision.
pub type Probabilities = baselines::ProbabilityVector<f64>;

/// Per-label probability vector in single precision.
pub type Probabilities32 = baselines::ProbabilityVector<f32>;
