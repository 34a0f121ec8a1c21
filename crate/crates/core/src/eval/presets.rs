use crate::error::{Error, Result};
use crate::labels::OrderedLabelSpace;

use super::metrics::Metric;

/// Label space, metric and template of a built-in task.
#[derive(Debug, Clone, PartialEq)]
pub struct DatasetPreset {
    pub name: &'static str,
    pub labels: &'static [&'static str],
    pub metric: Metric,
    pub template: &'static str,
    pub aspect_based: bool,
}

impl DatasetPreset {
    pub fn label_space(&self) -> OrderedLabelSpace {
        OrderedLabelSpace::new(self.labels.iter().copied()).expect("preset labels are valid")
    }
}

const THREE_WAY: &[&str] = &["negative", "neutral", "positive"];
const FIVE_WAY: &[&str] = &["very negative", "negative", "neutral", "positive", "very positive"];

pub fn presets() -> Vec<DatasetPreset> {
    let p = |name, labels, metric, aspect_based| DatasetPreset {
        name,
        labels,
        metric,
        template: name,
        aspect_based,
    };
    vec![
        p("twitter", THREE_WAY, Metric::Accuracy, false),
        p("sst5", FIVE_WAY, Metric::Accuracy, false),
        p("yelp5", FIVE_WAY, Metric::Accuracy, false),
        p("lap14", THREE_WAY, Metric::Accuracy, true),
        p("hate", &["non-hate", "hate"], Metric::MacroF1, false),
        p("offensive", &["non-offensive", "offensive"], Metric::MacroF1, false),
        p("irony", &["non_irony", "irony"], Metric::F1OfLabel("irony".into()), false),
    ]
}

/// Looks a preset up by name, ignoring case and punctuation (`SST-5` = `sst5`).
pub fn preset(name: &str) -> Result<DatasetPreset> {
    let key: String = name
        .chars()
        .filter(char::is_ascii_alphanumeric)
        .map(|c| c.to_ascii_lowercase())
        .collect();
    presets()
        .into_iter()
        .find(|p| p.name == key)
        .ok_or_else(|| Error::Config(format!("no built-in dataset `{name}`")))
}
