//! Aggregating debiased comparisons into integer scores.

use crate::error::{Error, Result};
use crate::labels::{DemonstrationSet, Passage};
use crate::oracle::ComparisonOutcome;

/// Anything that can resolve debiased comparisons `F(x, x_i)`.
///
/// Implementations receive a whole batch so they can deduplicate and run
/// calls concurrently; outcomes come back in input order.
pub trait Comparator: Sync {
    fn compare_batch(&self, pairs: &[(Passage<'_>, Passage<'_>)]) -> Result<Vec<ComparisonOutcome>>;
}

/// Local score `l(y_i) + F(x, x_i)`.
pub fn local_score(outcome: ComparisonOutcome, demo_label: usize) -> i64 {
    demo_label as i64 + outcome.value()
}

/// Score `S(x)`: the sum of local scores against every demonstration.
pub fn score_instance<C: Comparator + ?Sized>(x: Passage<'_>, demos: &DemonstrationSet, oracle: &C) -> Result<i64> {
    Ok(score_batch(&[x], demos, oracle)?[0])
}

/// Scores many passages against the same demonstrations with a single batch
/// of comparisons. Results are in input order.
pub fn score_batch<C: Comparator + ?Sized>(
    xs: &[Passage<'_>],
    demos: &DemonstrationSet,
    oracle: &C,
) -> Result<Vec<i64>> {
    let demo_passages = demos.passages();
    let pairs: Vec<_> = xs
        .iter()
        .flat_map(|&x| demo_passages.iter().map(move |&d| (x, d)))
        .collect();
    let outcomes = oracle.compare_batch(&pairs)?;
    if outcomes.len() != pairs.len() {
        return Err(Error::LengthMismatch {
            left: outcomes.len(),
            right: pairs.len(),
        });
    }
    let labels = demos.labels();
    Ok(outcomes
        .chunks(labels.len())
        .map(|row| {
            row.iter()
                .zip(&labels)
                .map(|(&o, &l)| local_score(o, l))
                .sum()
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::labels::{Demonstration, OrderedLabelSpace};
    use ComparisonOutcome::*;

    /// Returns a fixed outcome per demonstration text.
    struct Scripted(Vec<(&'static str, ComparisonOutcome)>);

    impl Comparator for Scripted {
        fn compare_batch(&self, pairs: &[(Passage<'_>, Passage<'_>)]) -> Result<Vec<ComparisonOutcome>> {
            Ok(pairs
                .iter()
                .map(|(_, d)| self.0.iter().find(|(t, _)| *t == d.text).map(|p| p.1).unwrap_or(Tie))
                .collect())
        }
    }

    fn three_way() -> OrderedLabelSpace {
        OrderedLabelSpace::new(["negative", "neutral", "positive"]).unwrap()
    }

    #[test]
    fn local_score_examples() {
        assert_eq!(local_score(Win, 0), 1);
        assert_eq!(local_score(Tie, 2), 2);
        assert_eq!(local_score(Loss, 1), 0);
    }

    #[test]
    fn all_ties_sum_the_labels() {
        let demos = DemonstrationSet::new(
            vec![Demonstration::new("a", 0), Demonstration::new("b", 1), Demonstration::new("c", 2)],
            three_way(),
            Some(1),
        )
        .unwrap();
        assert_eq!(score_instance(Passage::new("x"), &demos, &Scripted(vec![])).unwrap(), 3);
    }

    #[test]
    fn running_example_scores_sixteen() {
        // 5 demos per class. Wins over every negative (5 x 1), ties four
        // neutrals and beats one (4 x 1 + 2), loses to every positive (5 x 1).
        const NAMES: [&str; 15] = [
            "n0", "n1", "n2", "n3", "n4", "u0", "u1", "u2", "u3", "u4", "p0", "p1", "p2", "p3", "p4",
        ];
        let items = NAMES
            .iter()
            .enumerate()
            .map(|(i, name)| Demonstration::new(*name, i / 5))
            .collect();
        let mut script: Vec<_> = NAMES[..5].iter().map(|n| (*n, Win)).collect();
        script.extend([("u0", Tie), ("u1", Tie), ("u2", Tie), ("u3", Tie), ("u4", Win)]);
        script.extend(NAMES[10..].iter().map(|n| (*n, Loss)));
        let demos = DemonstrationSet::new(items, three_way(), Some(5)).unwrap();
        assert_eq!(score_instance(Passage::new("x"), &demos, &Scripted(script)).unwrap(), 16);
    }

    #[test]
    fn batch_keeps_input_order() {
        struct ByText;
        impl Comparator for ByText {
            fn compare_batch(&self, pairs: &[(Passage<'_>, Passage<'_>)]) -> Result<Vec<ComparisonOutcome>> {
                Ok(pairs
                    .iter()
                    .map(|(x, _)| if x.text == "hi" { Win } else { Loss })
                    .collect())
            }
        }
        let demos = DemonstrationSet::new(
            vec![Demonstration::new("a", 0), Demonstration::new("b", 1)],
            OrderedLabelSpace::new(["lo", "hi"]).unwrap(),
            None,
        )
        .unwrap();
        let scores = score_batch(&[Passage::new("hi"), Passage::new("lo")], &demos, &ByText).unwrap();
        assert_eq!(scores, vec![3, -1]);
    }
}
