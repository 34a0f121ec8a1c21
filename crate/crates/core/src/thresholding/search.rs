//! Entropy-maximizing threshold search over probing scores.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::labels::score_bounds;
use crate::scalar::Scalar;

use super::entropy::{compare_entropy, entropy_from_counts};
use super::thresholds::{doubled_expected_thresholds, Thresholds};

/// How far each candidate cut may stray from its expected threshold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum Window {
    /// `2|C|`, wide enough to reach every attainable score.
    #[default]
    Auto,
    /// A fixed half-width in score units.
    HalfWidth(u64),
    /// The whole attainable score range.
    Unbounded,
}

/// Rule for choosing among candidates of equal entropy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TieBreak {
    /// Smallest L1 distance to the expected thresholds, then lexicographically smallest.
    #[default]
    NearestExpected,
    /// Lexicographically smallest.
    Lexicographic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
pub struct SearchConfig {
    #[serde(default)]
    pub window: Window,
    #[serde(default)]
    pub tie_break: TieBreak,
}

impl SearchConfig {
    pub fn with_window(window: Window) -> Self {
        Self {
            window,
            ..Self::default()
        }
    }

    pub fn half_width(&self, demo_count: usize) -> Option<i64> {
        match self.window {
            Window::Auto => Some(2 * demo_count as i64),
            Window::HalfWidth(w) => Some(w as i64),
            Window::Unbounded => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(bound(serialize = "T: Scalar"))]
pub struct SearchOutcome<T> {
    pub thresholds: Thresholds<T>,
    pub entropy: f64,
    /// Probing predictions per class under the chosen thresholds.
    pub class_counts: Vec<usize>,
    pub candidates: u64,
    pub tie_break_applied: bool,
}

/// Number of scores `>= t` for each `t` in `lo..=hi+1`.
struct AtLeast {
    lo: i64,
    table: Vec<usize>,
}

impl AtLeast {
    fn new(sorted: &[i64], lo: i64, hi: i64) -> Self {
        let table = (lo..=hi + 1)
            .map(|t| sorted.len() - sorted.partition_point(|&s| s < t))
            .collect();
        Self { lo, table }
    }

    fn get(&self, t: i64) -> usize {
        self.table[(t - self.lo) as usize]
    }
}

struct Best {
    cuts: Vec<i64>,
    counts: Vec<usize>,
    distance: i64,
    tied: bool,
}

struct Searcher<'a> {
    ranges: Vec<(i64, i64)>,
    doubled: &'a [i64],
    at_least: AtLeast,
    total: usize,
    tie_break: TieBreak,
}

impl Searcher<'_> {
    fn counts(&self, cuts: &[i64]) -> Vec<usize> {
        let mut counts = Vec::with_capacity(cuts.len() + 1);
        let mut above = self.total;
        for &t in cuts {
            let ge = self.at_least.get(t);
            counts.push(above - ge);
            above = ge;
        }
        counts.push(above);
        counts
    }

    fn distance(&self, cuts: &[i64]) -> i64 {
        match self.tie_break {
            TieBreak::NearestExpected => cuts
                .iter()
                .zip(self.doubled)
                .map(|(&t, &d)| (2 * t - d).abs())
                .sum(),
            TieBreak::Lexicographic => 0,
        }
    }

    /// Total order: higher entropy, then smaller distance, then smaller tuple.
    fn better(a: &Best, b: &Best) -> Ordering {
        compare_entropy(&a.counts, &b.counts)
            .then_with(|| b.distance.cmp(&a.distance))
            .then_with(|| b.cuts.cmp(&a.cuts))
    }

    fn merge(a: Option<Best>, b: Option<Best>) -> Option<Best> {
        match (a, b) {
            (None, x) | (x, None) => x,
            (Some(a), Some(b)) => {
                let same_entropy = compare_entropy(&a.counts, &b.counts) == Ordering::Equal;
                let mut winner = if Self::better(&a, &b) == Ordering::Less { b } else { a };
                winner.tied |= same_entropy;
                Some(winner)
            }
        }
    }

    fn consider(&self, cuts: &[i64], best: &mut Option<Best>, seen: &mut u64) {
        *seen += 1;
        let candidate = Best {
            cuts: cuts.to_vec(),
            counts: self.counts(cuts),
            distance: self.distance(cuts),
            tied: false,
        };
        *best = Self::merge(best.take(), Some(candidate));
    }

    fn walk(&self, cuts: &mut Vec<i64>, best: &mut Option<Best>, seen: &mut u64) {
        let j = cuts.len();
        if j == self.ranges.len() {
            self.consider(cuts, best, seen);
            return;
        }
        let (lo, hi) = self.ranges[j];
        let lo = cuts.last().map_or(lo, |&prev| lo.max(prev + 1));
        // leave room for the remaining strictly increasing cuts
        let hi = self.ranges[j + 1..]
            .iter()
            .enumerate()
            .fold(hi, |h, (i, &(_, rh))| h.min(rh - 1 - i as i64));
        for t in lo..=hi {
            cuts.push(t);
            self.walk(cuts, best, seen);
            cuts.pop();
        }
    }
}

/// Exhaustively searches strictly increasing integer cut tuples near the
/// expected thresholds and returns the one maximizing the label entropy of
/// the probing predictions.
pub fn search_self_supervised_thresholds<T: Scalar>(
    probing_scores: &[i64],
    demo_labels: &[usize],
    m: usize,
    cfg: &SearchConfig,
) -> Result<SearchOutcome<T>> {
    if probing_scores.is_empty() {
        return Err(Error::Calibration(
            "probing set is empty; use expected thresholds instead".into(),
        ));
    }
    let doubled = doubled_expected_thresholds(demo_labels, m, None)?;
    let (min_score, max_score) = score_bounds(demo_labels);
    let ranges: Vec<(i64, i64)> = doubled
        .iter()
        .map(|&d| match cfg.half_width(demo_labels.len()) {
            Some(w) => (
                (d - 2 * w + 1).div_euclid(2).max(min_score),
                (d + 2 * w).div_euclid(2).min(max_score),
            ),
            None => (min_score, max_score),
        })
        .collect();

    let mut sorted = probing_scores.to_vec();
    sorted.sort_unstable();
    let searcher = Searcher {
        ranges,
        doubled: &doubled,
        at_least: AtLeast::new(&sorted, min_score, max_score),
        total: sorted.len(),
        tie_break: cfg.tie_break,
    };

    let (first_lo, first_hi) = searcher.ranges[0];
    let (best, candidates) = (first_lo..=first_hi)
        .into_par_iter()
        .map(|t| {
            let mut best = None;
            let mut seen = 0;
            let mut cuts = vec![t];
            if searcher.ranges.len() == 1 {
                searcher.consider(&cuts, &mut best, &mut seen);
            } else {
                searcher.walk(&mut cuts, &mut best, &mut seen);
            }
            (best, seen)
        })
        .reduce(
            || (None, 0),
            |(a, na), (b, nb)| (Searcher::merge(a, b), na + nb),
        );

    let best = best.ok_or_else(|| {
        Error::Calibration(format!(
            "no strictly increasing integer thresholds fit the search window ({:?}) within scores {min_score}..={max_score}",
            cfg.window
        ))
    })?;
    Ok(SearchOutcome {
        thresholds: Thresholds::from_scores(&best.cuts)?,
        entropy: entropy_from_counts(&best.counts),
        class_counts: best.counts,
        candidates,
        tie_break_applied: best.tied,
    })
}
