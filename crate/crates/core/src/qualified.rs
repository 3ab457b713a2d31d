//! Exact significant and qualified index sets, and the prefix relation.
//!
//! These are the non-private reference computations: the protocol never
//! evaluates them, but tests use them as oracles for what the protocol's
//! output must contain and be contained in.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{compare_terms, decreasing_rearrangement, Rational, TermVector};

/// `Q_{c,ℓ,θ}`: indices in decreasing term order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct QualifiedSet {
    pub indices: Vec<usize>,
    pub ell: usize,
    #[serde(with = "crate::model::rational_string")]
    pub theta: Rational,
}

impl QualifiedSet {
    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn index_set(&self) -> BTreeSet<usize> {
        self.indices.iter().copied().collect()
    }
}

/// `lhs ≥ θ·rhs`, exactly.
pub(crate) fn at_least_fraction(lhs: i128, theta: &Rational, rhs: i128) -> bool {
    let num = *theta.numer() as i128;
    let den = *theta.denom() as i128;
    match (lhs.checked_mul(den), num.checked_mul(rhs)) {
        (Some(l), Some(r)) => l >= r,
        _ => BigInt::from(lhs) * BigInt::from(den) >= BigInt::from(num) * BigInt::from(rhs),
    }
}

/// Zero coefficients are never significant.
fn significant(ci_sq: i128, universe_sq: i128, theta: &Rational) -> bool {
    ci_sq != 0 && at_least_fraction(ci_sq, theta, universe_sq)
}

/// Whether `i` is an `(I, θ)`-significant index: `c_i² ≥ θ·Σ_{j∈I} c_j²` and
/// `c_i ≠ 0`.
pub fn is_significant(
    c: &TermVector,
    set: &BTreeSet<usize>,
    i: usize,
    theta: &Rational,
) -> Result<bool> {
    if !set.contains(&i) {
        return Err(Error::NotInSet(i));
    }
    let mut universe = 0i128;
    for &j in set {
        let v = *c.values().get(j).ok_or(Error::IndexOutOfRange {
            index: j,
            len: c.len(),
        })? as i128;
        universe += v * v;
    }
    let ci = c.values()[i] as i128;
    Ok(significant(ci * ci, universe, theta))
}

/// Whether `set` is a θ-significant index set: taking its members largest
/// first, each is significant relative to the whole universe minus the
/// members already taken.
pub fn is_significant_set(c: &TermVector, set: &BTreeSet<usize>, theta: &Rational) -> bool {
    let mut members: Vec<usize> = set.iter().copied().filter(|&i| i < c.len()).collect();
    if members.len() != set.len() {
        return false;
    }
    members.sort_by(|&i, &j| compare_terms(&c.term(j), &c.term(i)));
    let mut universe = c.l2_norm_squared();
    for i in members {
        let sq = c.term(i).squared();
        if !significant(sq, universe, theta) {
            return false;
        }
        universe -= sq;
    }
    true
}

/// Length of the qualified prefix given squared magnitudes already in
/// decreasing order.
pub(crate) fn qualified_prefix_len(sorted_sq: &[i128], total: i128, ell: usize, theta: &Rational) -> usize {
    let mut tail = total;
    let mut m = 0;
    for &sq in sorted_sq.iter().take(ell) {
        if !significant(sq, tail, theta) {
            break;
        }
        tail -= sq;
        m += 1;
    }
    m
}

/// `Q_{c,ℓ,θ}`: the longest significant prefix of the decreasing
/// rearrangement, truncated to `ℓ` and never extending into zero terms.
pub fn qualified_set(c: &TermVector, ell: usize, theta: &Rational) -> QualifiedSet {
    let order = decreasing_rearrangement(c);
    let sorted_sq: Vec<i128> = order.iter().map(|&i| c.term(i).squared()).collect();
    let m = qualified_prefix_len(&sorted_sq, c.l2_norm_squared(), ell, theta);
    QualifiedSet {
        indices: order[..m].to_vec(),
        ell,
        theta: *theta,
    }
}

/// `P` is a prefix of `Q`: `P ⊆ Q` and every member of `Q` with a larger
/// term than some member of `P` is itself in `P`.
pub fn is_prefix(p: &BTreeSet<usize>, q: &BTreeSet<usize>, c: &TermVector) -> bool {
    if !p.is_subset(q) {
        return false;
    }
    let Some(smallest) = p.iter().map(|&i| c.term(i)).min_by(compare_terms) else {
        return true;
    };
    q.iter()
        .filter(|j| !p.contains(j))
        .all(|&j| compare_terms(&c.term(j), &smallest).is_lt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{residual, top_b, Representation, Term};

    fn tv(v: &[i64]) -> TermVector {
        TermVector(v.to_vec())
    }

    fn set(v: &[usize]) -> BTreeSet<usize> {
        v.iter().copied().collect()
    }

    fn r(n: i64, d: i64) -> Rational {
        Rational::new(n, d)
    }

    #[test]
    fn significance_examples() {
        let c = tv(&[10, 3, 1]);
        let all = set(&[0, 1, 2]);
        assert!(is_significant(&c, &all, 0, &r(1, 2)).unwrap());
        assert!(!is_significant(&c, &all, 0, &r(19, 20)).unwrap());
        assert!(!is_significant(&tv(&[0, 0]), &set(&[0, 1]), 0, &r(1, 100)).unwrap());
        assert_eq!(
            is_significant(&c, &set(&[1]), 0, &r(1, 2)),
            Err(Error::NotInSet(0))
        );
    }

    #[test]
    fn significant_set_examples() {
        let c = tv(&[10, 3, 1]);
        assert!(is_significant_set(&c, &set(&[0, 1]), &r(1, 2)));
        assert!(!is_significant_set(&c, &set(&[1]), &r(1, 2)));
        assert!(is_significant_set(&c, &set(&[]), &r(1, 2)));
    }

    #[test]
    fn qualified_set_examples() {
        let c = tv(&[10, 3, 1]);
        assert_eq!(qualified_set(&c, 3, &r(1, 2)).indices, vec![0, 1, 2]);
        assert!(qualified_set(&c, 3, &r(19, 20)).is_empty());
        assert!(qualified_set(&tv(&[2; 8]), 1, &r(1, 2)).is_empty());
        // capped at ell
        assert_eq!(qualified_set(&c, 1, &r(1, 2)).indices, vec![0]);
        // stops at zero terms
        assert_eq!(qualified_set(&tv(&[0, 5, 0]), 3, &r(1, 2)).indices, vec![1]);
    }

    #[test]
    fn prefix_examples() {
        let c = tv(&[10, 3, 1]);
        assert!(is_prefix(&set(&[]), &set(&[1, 2]), &c));
        assert!(is_prefix(&set(&[0]), &set(&[0, 1]), &c));
        assert!(!is_prefix(&set(&[1]), &set(&[0, 1]), &c));
        assert!(!is_prefix(&set(&[2]), &set(&[0, 1]), &c));
    }

    #[test]
    fn uniqueness_is_determinism() {
        let c = tv(&[4, -4, 3, 0, 2, -1]);
        let a = qualified_set(&c, 4, &r(1, 8));
        assert_eq!(a, qualified_set(&c, 4, &r(1, 8)));
    }

    /// Visits every vector in `[-3, 3]^n`.
    fn for_each_vector(n: usize, mut f: impl FnMut(&TermVector)) {
        let mut v = vec![-3i64; n];
        loop {
            f(&TermVector(v.clone()));
            let mut pos = 0;
            loop {
                if pos == n {
                    return;
                }
                if v[pos] < 3 {
                    v[pos] += 1;
                    break;
                }
                v[pos] = -3;
                pos += 1;
            }
        }
    }

    #[test]
    fn monotone_in_theta_exhaustive() {
        let thetas = [r(1, 8), r(1, 4), r(1, 2), r(19, 20), r(1, 1)];
        for n in 1..=5 {
            for_each_vector(n, |c| {
                for ell in 0..=3 {
                    for w in thetas.windows(2) {
                        let loose = qualified_set(c, ell, &w[0]).index_set();
                        let tight = qualified_set(c, ell, &w[1]).index_set();
                        assert!(tight.is_subset(&loose), "{c:?} ell={ell}");
                    }
                }
            });
        }
    }

    #[test]
    fn qualified_representation_is_near_optimal_exhaustive() {
        // N ≤ 8, B ≤ 3, values in [-3, 3], ε ∈ {1/4, 1, 4}
        let epsilons = [r(1, 4), r(1, 1), r(4, 1)];
        for n in 1..=8 {
            for_each_vector(n, |c| {
                let order = decreasing_rearrangement(c);
                let sq: Vec<i128> = order.iter().map(|&i| c.term(i).squared()).collect();
                let total = c.l2_norm_squared();
                for b in 1..=3.min(n) {
                    let opt_err: i128 = total - sq[..b].iter().sum::<i128>();
                    for eps in &epsilons {
                        let theta = *eps / (Rational::from_integer(b as i64) * (Rational::from_integer(1) + eps));
                        let q = qualified_prefix_len(&sq, total, b, &theta);
                        let err: i128 = total - sq[..q].iter().sum::<i128>();
                        // err ≤ (1+ε)·opt_err
                        let (p, d) = (*eps.numer() as i128, *eps.denom() as i128);
                        assert!(err * d <= (d + p) * opt_err, "{c:?} b={b} eps={eps}");
                    }
                }
            });
        }
    }

    #[test]
    fn supersets_within_top_b_are_near_optimal() {
        let eps = r(1, 1);
        for n in 2..=6 {
            for_each_vector(n, |c| {
                for b in 1..=3.min(n) {
                    let theta = eps / (Rational::from_integer(b as i64) * (Rational::from_integer(1) + eps));
                    let q = qualified_set(c, b, &theta).index_set();
                    let opt = top_b(c, b).unwrap();
                    let opt_err = residual(c, &opt).unwrap().l2_norm_squared();
                    let top: Vec<usize> = opt.indices();
                    // every S with Q ⊆ S ⊆ top-B indices
                    for mask in 0u32..(1 << b) {
                        let s: BTreeSet<usize> =
                            (0..b).filter(|j| mask & (1 << j) != 0).map(|j| top[j]).collect();
                        if !q.is_subset(&s) {
                            continue;
                        }
                        let rep = Representation::new(s.iter().map(|&i| Term::new(i, c.values()[i])).collect()).unwrap();
                        let err = residual(c, &rep).unwrap().l2_norm_squared();
                        assert!(err <= 2 * opt_err, "{c:?} b={b} s={s:?}");
                    }
                }
            });
        }
    }

    #[test]
    fn exact_threshold_comparison() {
        assert!(at_least_fraction(5, &r(1, 2), 10));
        assert!(!at_least_fraction(4, &r(1, 2), 9));
        assert!(at_least_fraction(i128::MAX / 2, &r(1, 3), i128::MAX / 2));
        assert!(!at_least_fraction(i128::MAX / 4, &r(i64::MAX, 1), i128::MAX / 2));
    }
}
