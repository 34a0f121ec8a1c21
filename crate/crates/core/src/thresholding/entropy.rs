//! Label entropy of a prediction distribution, with an exact comparator.
//!
//! Floating-point entropies of different count vectors can coincide or land
//! within rounding of each other. [`compare_entropy`] settles those cases in
//! integer arithmetic: with `N = sum c_j` and `P = prod c_j^c_j`,
//! `H = ln N - ln(P) / N`, so for equal `N` a smaller `P` means larger
//! entropy, and in general `H1 > H2` iff
//! `N1^(N1 N2) * P2^N1 > N2^(N1 N2) * P1^N2`.

use std::cmp::Ordering;

use num_bigint::BigUint;
use num_traits::{Float, FromPrimitive, One, Pow};

use crate::labels::class_counts;

const FLOAT_MARGIN: f64 = 1e-9;

/// Above this many bits the general-`N` exact comparison is skipped.
const MAX_EXACT_BITS: f64 = 4.0e6;

/// Shannon entropy (natural log) of the empirical distribution of
/// `predictions` over `m` classes. Empty input has entropy 0.
pub fn label_entropy<F: Float + FromPrimitive>(predictions: &[usize], m: usize) -> F {
    entropy_from_counts(&class_counts(predictions.iter().copied(), m))
}

/// Entropy of a class-count vector. Summed over sorted counts so that
/// permuted count vectors give bit-identical results.
pub fn entropy_from_counts<F: Float + FromPrimitive>(counts: &[usize]) -> F {
    let n: usize = counts.iter().sum();
    if n == 0 {
        return F::zero();
    }
    let n = F::from_usize(n).expect("count fits the float type");
    let mut sorted: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    sorted.sort_unstable();
    let h = sorted.iter().fold(F::zero(), |acc, &c| {
        let p = F::from_usize(c).expect("count fits the float type") / n;
        acc - p * p.ln()
    });
    // a single class gives -(1 * ln 1) = -0.0
    if h <= F::zero() {
        F::zero()
    } else {
        h
    }
}

fn sorted_nonzero(counts: &[usize]) -> Vec<usize> {
    let mut v: Vec<usize> = counts.iter().copied().filter(|&c| c > 0).collect();
    v.sort_unstable();
    v
}

fn self_power_product(counts: &[usize]) -> BigUint {
    counts
        .iter()
        .fold(BigUint::one(), |acc, &c| acc * BigUint::from(c).pow(c as u32))
}

/// Orders two count vectors by the entropy of their distributions.
pub fn compare_entropy(a: &[usize], b: &[usize]) -> Ordering {
    let sa = sorted_nonzero(a);
    let sb = sorted_nonzero(b);
    if sa == sb {
        return Ordering::Equal;
    }
    let ha: f64 = entropy_from_counts(&sa);
    let hb: f64 = entropy_from_counts(&sb);
    if (ha - hb).abs() > FLOAT_MARGIN {
        return ha.partial_cmp(&hb).expect("entropies are finite");
    }
    let na: usize = sa.iter().sum();
    let nb: usize = sb.iter().sum();
    if na == 0 || nb == 0 {
        return ha.partial_cmp(&hb).expect("entropies are finite");
    }
    let pa = self_power_product(&sa);
    let pb = self_power_product(&sb);
    if na == nb {
        return pb.cmp(&pa);
    }
    let nn = na as f64 * nb as f64;
    if nn * (na.max(nb) as f64).log2() > MAX_EXACT_BITS {
        return ha.partial_cmp(&hb).expect("entropies are finite");
    }
    let nn = (na * nb) as u32;
    let left = BigUint::from(na).pow(nn) * pb.pow(na as u32);
    let right = BigUint::from(nb).pow(nn) * pa.pow(nb as u32);
    left.cmp(&right)
}
