use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};

/// Verdict of a single comparison call.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Preference {
    PrefersA,
    PrefersB,
    Inconclusive,
}

impl Preference {
    /// Canonical generation text for this verdict.
    pub fn as_text(self) -> &'static str {
        match self {
            Preference::PrefersA => "Passage A",
            Preference::PrefersB => "Passage B",
            Preference::Inconclusive => "Neither passage can be ranked above the other.",
        }
    }
}

fn slot_patterns() -> &'static (Regex, Regex) {
    static PATTERNS: OnceLock<(Regex, Regex)> = OnceLock::new();
    PATTERNS.get_or_init(|| {
        (
            Regex::new(r"(?i-u)\bpassage a\b").unwrap(),
            Regex::new(r"(?i-u)\bpassage b\b").unwrap(),
        )
    })
}

/// Maps raw generated text onto a verdict.
///
/// A verdict requires exactly one of "passage a" / "passage b" (any case, as
/// whole words). Both, neither or empty text is `Inconclusive`.
pub fn parse_preference(raw: &str) -> Preference {
    let (a, b) = slot_patterns();
    match (a.is_match(raw), b.is_match(raw)) {
        (true, false) => Preference::PrefersA,
        (false, true) => Preference::PrefersB,
        _ => Preference::Inconclusive,
    }
}
