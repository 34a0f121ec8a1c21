use std::fmt;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::labels::{class_counts, OrderedLabelSpace};
use crate::scalar::Scalar;

/// `m - 1` strictly increasing cut points `T_1 < ... < T_{m-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct Thresholds<T> {
    cuts: Vec<T>,
}

impl<T: Scalar> Thresholds<T> {
    pub fn new(cuts: Vec<T>) -> Result<Self> {
        if cuts.is_empty() {
            return Err(Error::Calibration("need at least one threshold".into()));
        }
        if let Some(w) = cuts.windows(2).position(|w| !(w[0] < w[1])) {
            return Err(Error::Calibration(format!(
                "thresholds not strictly increasing at T_{} = {} >= T_{} = {}",
                w + 1,
                cuts[w],
                w + 2,
                cuts[w + 1]
            )));
        }
        Ok(Self { cuts })
    }

    pub fn from_scores(cuts: &[i64]) -> Result<Self> {
        Self::new(cuts.iter().map(|&c| T::from_score(c)).collect())
    }

    pub fn cuts(&self) -> &[T] {
        &self.cuts
    }

    pub fn len(&self) -> usize {
        self.cuts.len()
    }

    pub fn is_empty(&self) -> bool {
        self.cuts.is_empty()
    }

    /// Number of classes these thresholds separate.
    pub fn classes(&self) -> usize {
        self.cuts.len() + 1
    }

    /// Largest `j` with `score >= T_j`, or 0 below `T_1`.
    pub fn decide(&self, score: i64) -> usize {
        let s = T::from_score(score);
        self.cuts.iter().take_while(|c| **c <= s).count()
    }

    pub fn to_f64(&self) -> Vec<f64> {
        self.cuts.iter().map(Scalar::as_f64).collect()
    }

    /// Converts to another scalar through the textual form when exact, or
    /// through f64 otherwise.
    pub fn convert<U: Scalar>(&self) -> Result<Thresholds<U>> {
        let cuts = self
            .cuts
            .iter()
            .map(|c| {
                c.to_string()
                    .parse::<U>()
                    .ok()
                    .or_else(|| U::from_f64(c.as_f64()))
                    .ok_or_else(|| Error::Calibration(format!("cannot convert threshold {c}")))
            })
            .collect::<Result<Vec<U>>>()?;
        Thresholds::new(cuts)
    }
}

impl<T: Scalar> fmt::Display for Thresholds<T> {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{{")?;
        for (i, c) in self.cuts.iter().enumerate() {
            if i > 0 {
                write!(f, ", ")?;
            }
            write!(f, "{c}")?;
        }
        write!(f, "}}")
    }
}

/// Serialized as a list of strings (`["10", "41/2"]`) so rationals stay exact.
impl<T: Scalar> Serialize for Thresholds<T> {
    fn serialize<S: Serializer>(&self, serializer: S) -> std::result::Result<S::Ok, S::Error> {
        serializer.collect_seq(self.cuts.iter().map(|c| c.to_string()))
    }
}

impl<'de, T: Scalar> Deserialize<'de> for Thresholds<T> {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> std::result::Result<Self, D::Error> {
        let raw = Vec::<String>::deserialize(deserializer)?;
        let cuts = raw
            .iter()
            .map(|s| s.parse::<T>().map_err(|_| D::Error::custom(format!("bad threshold `{s}`"))))
            .collect::<std::result::Result<Vec<T>, _>>()?;
        Thresholds::new(cuts).map_err(D::Error::custom)
    }
}

/// Expected score `S_j` of a class-`j` passage under noise-free comparisons:
/// it wins against lower-labeled demonstrations, ties same-labeled ones and
/// loses to higher-labeled ones.
pub fn expected_scores(demo_labels: &[usize], m: usize) -> Result<Vec<i64>> {
    if demo_labels.is_empty() {
        return Err(Error::Calibration("expected scores need at least one demonstration".into()));
    }
    if let Some(&bad) = demo_labels.iter().find(|&&l| l >= m) {
        return Err(Error::Calibration(format!("demonstration label {bad} outside 0..{m}")));
    }
    Ok((0..m)
        .map(|j| {
            demo_labels
                .iter()
                .map(|&y| {
                    let y = y as i64;
                    match (y as usize).cmp(&j) {
                        std::cmp::Ordering::Less => y + 1,
                        std::cmp::Ordering::Equal => y,
                        std::cmp::Ordering::Greater => y - 1,
                    }
                })
                .sum()
        })
        .collect())
}

/// Sums `S_{j-1} + S_j` for `j = 1..m-1`, i.e. twice the expected thresholds.
pub(crate) fn doubled_expected_thresholds(demo_labels: &[usize], m: usize, space: Option<&OrderedLabelSpace>) -> Result<Vec<i64>> {
    let scores = expected_scores(demo_labels, m)?;
    if let Some(j) = scores.windows(2).position(|w| w[1] <= w[0]) {
        let name = |i: usize| {
            space
                .and_then(|s| s.label(i))
                .map(|l| format!("`{l}`"))
                .unwrap_or_else(|| format!("class {i}"))
        };
        let counts = class_counts(demo_labels.iter().copied(), m);
        return Err(Error::Calibration(format!(
            "expected scores do not increase between {} and {} (S = {} and {}; {} and {} demonstrations)",
            name(j),
            name(j + 1),
            scores[j],
            scores[j + 1],
            counts[j],
            counts[j + 1]
        )));
    }
    Ok(scores.windows(2).map(|w| w[0] + w[1]).collect())
}

/// Expected thresholds `T_j = (S_{j-1} + S_j) / 2`.
pub fn expected_thresholds<T: Scalar>(demo_labels: &[usize], m: usize) -> Result<Thresholds<T>> {
    let two = T::from_score(2);
    Thresholds::new(
        doubled_expected_thresholds(demo_labels, m, None)?
            .into_iter()
            .map(|s| T::from_score(s) / two.clone())
            .collect(),
    )
}

/// Unweighted elementwise mean of two threshold tuples.
pub fn mixture_thresholds<T: Scalar>(expected: &Thresholds<T>, self_supervised: &Thresholds<T>) -> Result<Thresholds<T>> {
    if expected.len() != self_supervised.len() {
        return Err(Error::LengthMismatch {
            left: expected.len(),
            right: self_supervised.len(),
        });
    }
    Thresholds::new(
        expected
            .cuts()
            .iter()
            .zip(self_supervised.cuts())
            .map(|(a, b)| a.midpoint(b))
            .collect(),
    )
}

/// Maps a score to a label index.
pub fn decide<T: Scalar>(score: i64, thresholds: &Thresholds<T>) -> usize {
    thresholds.decide(score)
}

/// [`decide`], returning the label string.
pub fn decide_label<'s, T: Scalar>(score: i64, thresholds: &Thresholds<T>, space: &'s OrderedLabelSpace) -> Result<&'s str> {
    if thresholds.classes() != space.len() {
        return Err(Error::LengthMismatch {
            left: thresholds.classes(),
            right: space.len(),
        });
    }
    Ok(space.label(thresholds.decide(score)).expect("index below class count"))
}
