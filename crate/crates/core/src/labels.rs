//! Ordinal label space and labeled demonstrations.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Labels listed in ordinal order; the position of a label is its integer value.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "Vec<String>", into = "Vec<String>")]
pub struct OrderedLabelSpace {
    labels: Vec<String>,
}

impl OrderedLabelSpace {
    pub fn new<I, S>(labels: I) -> Result<Self>
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        let labels: Vec<String> = labels.into_iter().map(Into::into).collect();
        if labels.len() < 2 {
            return Err(Error::InvalidLabelSpace(format!(
                "need at least 2 labels, got {}",
                labels.len()
            )));
        }
        let mut seen = HashSet::new();
        for label in &labels {
            if label.is_empty() {
                return Err(Error::InvalidLabelSpace("empty label string".into()));
            }
            if !seen.insert(label.as_str()) {
                return Err(Error::InvalidLabelSpace(format!("duplicate label `{label}`")));
            }
        }
        Ok(Self { labels })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn label(&self, index: usize) -> Option<&str> {
        self.labels.get(index).map(String::as_str)
    }

    pub fn index_of(&self, label: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == label)
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }

    /// Like [`index_of`](Self::index_of) but falls back to a case-insensitive
    /// match. The flag reports whether the fallback was needed.
    pub fn index_of_casefold(&self, label: &str) -> Result<(usize, bool)> {
        if let Ok(j) = self.index_of(label) {
            return Ok((j, false));
        }
        let folded = label.trim().to_lowercase();
        self.labels
            .iter()
            .position(|l| l.to_lowercase() == folded)
            .map(|j| (j, true))
            .ok_or_else(|| Error::UnknownLabel(label.to_string()))
    }
}

impl TryFrom<Vec<String>> for OrderedLabelSpace {
    type Error = Error;

    fn try_from(labels: Vec<String>) -> Result<Self> {
        Self::new(labels)
    }
}

impl From<OrderedLabelSpace> for Vec<String> {
    fn from(space: OrderedLabelSpace) -> Self {
        space.labels
    }
}

/// Integer value `l(Y)` of a label.
pub fn label_index(label: &str, space: &OrderedLabelSpace) -> Result<usize> {
    space.index_of(label)
}

/// A passage handed to the oracle: its text and, for aspect-based tasks, the aspect.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Passage<'a> {
    pub text: &'a str,
    pub aspect: Option<&'a str>,
}

impl<'a> Passage<'a> {
    pub fn new(text: &'a str) -> Self {
        Self { text, aspect: None }
    }

    pub fn with_aspect(text: &'a str, aspect: Option<&'a str>) -> Self {
        Self { text, aspect }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Demonstration {
    pub text: String,
    pub label: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub aspect: Option<String>,
}

impl Demonstration {
    pub fn new(text: impl Into<String>, label: usize) -> Self {
        Self {
            text: text.into(),
            label,
            aspect: None,
        }
    }

    pub fn with_aspect(mut self, aspect: impl Into<String>) -> Self {
        self.aspect = Some(aspect.into());
        self
    }

    pub fn passage(&self) -> Passage<'_> {
        Passage::with_aspect(&self.text, self.aspect.as_deref())
    }
}

/// The labeled demonstrations `C` for one run.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DemonstrationSet {
    items: Vec<Demonstration>,
    label_space: OrderedLabelSpace,
    shots_per_class: Option<usize>,
}

impl DemonstrationSet {
    /// Validates labels and, when `shots_per_class` is given, that every
    /// class has exactly that many demonstrations.
    pub fn new(
        items: Vec<Demonstration>,
        label_space: OrderedLabelSpace,
        shots_per_class: Option<usize>,
    ) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::InvalidDemonstrations("no demonstrations".into()));
        }
        let m = label_space.len();
        for (i, demo) in items.iter().enumerate() {
            if demo.label >= m {
                return Err(Error::InvalidDemonstrations(format!(
                    "demonstration {i} has label index {} outside 0..{m}",
                    demo.label
                )));
            }
            if demo.text.is_empty() {
                return Err(Error::InvalidDemonstrations(format!(
                    "demonstration {i} has empty text"
                )));
            }
        }
        if let Some(k) = shots_per_class {
            let counts = class_counts(items.iter().map(|d| d.label), m);
            if let Some((j, &c)) = counts.iter().enumerate().find(|(_, &c)| c != k) {
                return Err(Error::InvalidDemonstrations(format!(
                    "declared {k} shots per class but class `{}` has {c}",
                    label_space.labels()[j]
                )));
            }
        }
        Ok(Self {
            items,
            label_space,
            shots_per_class,
        })
    }

    pub fn items(&self) -> &[Demonstration] {
        &self.items
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Demonstration> {
        self.items.iter()
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }

    pub fn label_space(&self) -> &OrderedLabelSpace {
        &self.label_space
    }

    pub fn shots_per_class(&self) -> Option<usize> {
        self.shots_per_class
    }

    pub fn labels(&self) -> Vec<usize> {
        self.items.iter().map(|d| d.label).collect()
    }

    pub fn passages(&self) -> Vec<Passage<'_>> {
        self.items.iter().map(Demonstration::passage).collect()
    }

    /// Range every score `S(x)` falls into: `Σ l(y_i) ± |C|`.
    pub fn score_bounds(&self) -> (i64, i64) {
        score_bounds(&self.labels())
    }
}

pub(crate) fn class_counts(labels: impl IntoIterator<Item = usize>, m: usize) -> Vec<usize> {
    let mut counts = vec![0; m];
    for l in labels {
        counts[l] += 1;
    }
    counts
}

pub(crate) fn score_bounds(demo_labels: &[usize]) -> (i64, i64) {
    let sum: i64 = demo_labels.iter().map(|&l| l as i64).sum();
    let n = demo_labels.len() as i64;
    (sum - n, sum + n)
}
