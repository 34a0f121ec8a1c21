use std::fmt;
use std::str::FromStr;

use num_traits::{Float, FromPrimitive};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::labels::OrderedLabelSpace;

/// Evaluation metric. Textual forms: `accuracy`, `macro_f1`, `f1(<label>)`.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub enum Metric {
    Accuracy,
    MacroF1,
    F1OfLabel(String),
}

impl fmt::Display for Metric {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Metric::Accuracy => write!(f, "accuracy"),
            Metric::MacroF1 => write!(f, "macro_f1"),
            Metric::F1OfLabel(l) => write!(f, "f1({l})"),
        }
    }
}

impl FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let t = s.trim();
        match t.to_ascii_lowercase().as_str() {
            "accuracy" | "acc" => return Ok(Metric::Accuracy),
            "macro_f1" | "macro-f1" => return Ok(Metric::MacroF1),
            _ => {}
        }
        t.strip_prefix("f1(")
            .and_then(|r| r.strip_suffix(')'))
            .filter(|l| !l.is_empty())
            .map(|l| Metric::F1OfLabel(l.to_string()))
            .ok_or_else(|| Error::Config(format!("unknown metric `{s}` (accuracy, macro_f1, f1(<label>))")))
    }
}

impl Serialize for Metric {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Metric {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        String::deserialize(d)?.parse().map_err(serde::de::Error::custom)
    }
}

/// `m x m` confusion counts, rows gold, columns predicted.
pub fn confusion_matrix(predictions: &[usize], golds: &[usize], m: usize) -> Result<Vec<Vec<usize>>> {
    let preds: Vec<Option<usize>> = predictions.iter().copied().map(Some).collect();
    let mut cm = confusion_with_abstentions(&preds, golds, m)?;
    for row in &mut cm {
        row.pop();
    }
    Ok(cm)
}

/// Confusion counts with an extra last column for missing predictions.
fn confusion_with_abstentions(predictions: &[Option<usize>], golds: &[usize], m: usize) -> Result<Vec<Vec<usize>>> {
    if predictions.len() != golds.len() {
        return Err(Error::LengthMismatch {
            left: predictions.len(),
            right: golds.len(),
        });
    }
    let mut cm = vec![vec![0; m + 1]; m];
    for (&p, &g) in predictions.iter().zip(golds) {
        let col = p.unwrap_or(m);
        if col > m || g >= m {
            return Err(Error::Config(format!("label index out of range 0..{m}")));
        }
        cm[g][col] += 1;
    }
    Ok(cm)
}

fn f1_of<F: Float + FromPrimitive>(cm: &[Vec<usize>], class: usize) -> F {
    let tp = cm[class][class];
    let fp: usize = cm.iter().map(|row| row[class]).sum::<usize>() - tp;
    let fn_: usize = cm[class].iter().sum::<usize>() - tp;
    let denom = 2 * tp + fp + fn_;
    if denom == 0 {
        return F::zero();
    }
    F::from_usize(2 * tp).unwrap() / F::from_usize(denom).unwrap()
}

pub fn compute_metric<F: Float + FromPrimitive>(
    metric: &Metric,
    predictions: &[usize],
    golds: &[usize],
    space: &OrderedLabelSpace,
) -> Result<F> {
    let preds: Vec<Option<usize>> = predictions.iter().copied().map(Some).collect();
    compute_metric_with_abstentions(metric, &preds, golds, space)
}

/// [`compute_metric`] where `None` marks an item without a usable
/// prediction: wrong for accuracy and a false negative of its gold class.
pub fn compute_metric_with_abstentions<F: Float + FromPrimitive>(
    metric: &Metric,
    predictions: &[Option<usize>],
    golds: &[usize],
    space: &OrderedLabelSpace,
) -> Result<F> {
    let m = space.len();
    let cm = confusion_with_abstentions(predictions, golds, m)?;
    if predictions.is_empty() {
        return Err(Error::Config("cannot score an empty prediction list".into()));
    }
    Ok(match metric {
        Metric::Accuracy => {
            let hits: usize = (0..m).map(|j| cm[j][j]).sum();
            F::from_usize(hits).unwrap() / F::from_usize(predictions.len()).unwrap()
        }
        Metric::MacroF1 => {
            let total = (0..m).fold(F::zero(), |acc, j| acc + f1_of::<F>(&cm, j));
            total / F::from_usize(m).unwrap()
        }
        Metric::F1OfLabel(label) => f1_of(&cm, space.index_of(label)?),
    })
}
