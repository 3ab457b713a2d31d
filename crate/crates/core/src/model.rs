//! Vectors, terms, the magnitude-then-index order on terms, norms, top-B
//! summaries and protocol parameters.

use std::cmp::Ordering;
use std::collections::BTreeSet;

use num_rational::Ratio;
use num_traits::{One, Signed};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mpc::PRIME;

/// Exact rational used for ε, θ and other thresholds.
pub type Rational = Ratio<i64>;

/// An `(index, coefficient)` pair.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Term {
    pub index: usize,
    pub value: i64,
}

impl Term {
    pub fn new(index: usize, value: i64) -> Self {
        Term { index, value }
    }

    pub fn magnitude(&self) -> u64 {
        self.value.unsigned_abs()
    }

    pub fn squared(&self) -> i128 {
        let v = self.value as i128;
        v * v
    }
}

/// `t1 < t2` iff `|t1| < |t2|`, or the magnitudes agree and `t1.index < t2.index`.
///
/// Terms at the same index compare by signed value so that the order stays
/// total (and consistent with `Eq`) on arbitrary inputs.
pub fn compare_terms(t1: &Term, t2: &Term) -> Ordering {
    t1.magnitude()
        .cmp(&t2.magnitude())
        .then(t1.index.cmp(&t2.index))
        .then(t1.value.cmp(&t2.value))
}

impl Ord for Term {
    fn cmp(&self, other: &Self) -> Ordering {
        compare_terms(self, other)
    }
}

impl PartialOrd for Term {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Dense integer vector of length `N`.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct TermVector(pub Vec<i64>);

impl TermVector {
    pub fn zeros(n: usize) -> Self {
        TermVector(vec![0; n])
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn values(&self) -> &[i64] {
        &self.0
    }

    pub fn term(&self, index: usize) -> Term {
        Term::new(index, self.0[index])
    }

    pub fn terms(&self) -> impl Iterator<Item = Term> + '_ {
        self.0.iter().enumerate().map(|(i, &v)| Term::new(i, v))
    }

    /// Fails unless every entry lies in `[-bound, bound]`.
    pub fn check_bound(&self, bound: i64) -> Result<()> {
        for (position, &v) in self.0.iter().enumerate() {
            if v.unsigned_abs() > bound.unsigned_abs() {
                return Err(Error::ValueOutOfRange {
                    position,
                    value: v as i128,
                    bound: bound as i128,
                });
            }
        }
        Ok(())
    }

    pub fn add(&self, other: &TermVector) -> Result<TermVector> {
        if self.len() != other.len() {
            return Err(Error::DimensionMismatch {
                expected: self.len(),
                actual: other.len(),
            });
        }
        Ok(TermVector(
            self.0.iter().zip(&other.0).map(|(x, y)| x + y).collect(),
        ))
    }

    pub fn l1_norm(&self) -> i128 {
        self.0.iter().map(|&v| (v as i128).abs()).sum()
    }

    /// Exact `Σ c_i²`.
    pub fn l2_norm_squared(&self) -> i128 {
        self.0.iter().map(|&v| (v as i128) * (v as i128)).sum()
    }

    pub fn l2_norm(&self) -> f64 {
        (self.l2_norm_squared() as f64).sqrt()
    }

    pub fn norm(&self, p: NormKind) -> NormValue {
        match p {
            NormKind::L1 => {
                let v = self.l1_norm();
                NormValue { exact: v, value: v as f64 }
            }
            NormKind::L2 => {
                let sq = self.l2_norm_squared();
                NormValue {
                    exact: sq,
                    value: (sq as f64).sqrt(),
                }
            }
        }
    }
}

impl From<Vec<i64>> for TermVector {
    fn from(v: Vec<i64>) -> Self {
        TermVector(v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum NormKind {
    L1,
    L2,
}

/// `exact` is `Σ|c_i|` for ℓ₁ and `Σc_i²` for ℓ₂; `value` is the norm itself.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NormValue {
    pub exact: i128,
    pub value: f64,
}

/// A set of terms with pairwise distinct indices, kept in decreasing term
/// order.
#[derive(Debug, Clone, Default, PartialEq, Eq, Hash)]
pub struct Representation {
    terms: Vec<Term>,
}

impl Representation {
    pub fn empty() -> Self {
        Self::default()
    }

    pub fn new(mut terms: Vec<Term>) -> Result<Self> {
        let mut seen = BTreeSet::new();
        for t in &terms {
            if !seen.insert(t.index) {
                return Err(Error::DuplicateIndex(t.index));
            }
        }
        terms.sort_by(|x, y| compare_terms(y, x));
        Ok(Representation { terms })
    }

    pub fn terms(&self) -> &[Term] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn indices(&self) -> Vec<usize> {
        self.terms.iter().map(|t| t.index).collect()
    }

    pub fn index_set(&self) -> BTreeSet<usize> {
        self.terms.iter().map(|t| t.index).collect()
    }

    pub fn squared_norm(&self) -> i128 {
        self.terms.iter().map(Term::squared).sum()
    }

    /// Dense form of the representation.
    pub fn to_vector(&self, n: usize) -> Result<TermVector> {
        let mut v = vec![0; n];
        for t in &self.terms {
            if t.index >= n {
                return Err(Error::IndexOutOfRange { index: t.index, len: n });
            }
            v[t.index] = t.value;
        }
        Ok(TermVector(v))
    }

    /// Canonical string form `i:v,i:v,...` in decreasing term order.
    pub fn canonical(&self) -> String {
        self.terms
            .iter()
            .map(|t| format!("{}:{}", t.index, t.value))
            .collect::<Vec<_>>()
            .join(",")
    }
}

impl Serialize for Representation {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let pairs: Vec<(usize, i64)> = self.terms.iter().map(|t| (t.index, t.value)).collect();
        pairs.serialize(s)
    }
}

impl<'de> Deserialize<'de> for Representation {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let pairs = Vec::<(usize, i64)>::deserialize(d)?;
        Representation::new(pairs.into_iter().map(|(i, v)| Term::new(i, v)).collect())
            .map_err(serde::de::Error::custom)
    }
}

/// Indices of `c` sorted so that their terms strictly decrease.
pub fn decreasing_rearrangement(c: &TermVector) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..c.len()).collect();
    idx.sort_by(|&i, &j| compare_terms(&c.term(j), &c.term(i)));
    idx
}

/// The `B` largest terms of `c` (`c_opt`).
pub fn top_b(c: &TermVector, b: usize) -> Result<Representation> {
    if b == 0 || b > c.len() {
        return Err(Error::InvalidParams(format!(
            "B = {b} must lie in [1, {}]",
            c.len()
        )));
    }
    let order = decreasing_rearrangement(c);
    Ok(Representation {
        terms: order[..b].iter().map(|&i| c.term(i)).collect(),
    })
}

/// `c − Σ_{t∈r} t.value·δ_{t.index}`.
pub fn residual(c: &TermVector, r: &Representation) -> Result<TermVector> {
    let mut out = c.clone();
    for t in r.terms() {
        let slot = out.0.get_mut(t.index).ok_or(Error::IndexOutOfRange {
            index: t.index,
            len: c.len(),
        })?;
        *slot -= t.value;
    }
    Ok(out)
}

pub fn support(c: &TermVector) -> BTreeSet<usize> {
    c.0.iter()
        .enumerate()
        .filter(|(_, &v)| v != 0)
        .map(|(i, _)| i)
        .collect()
}

/// Smallest `t` with `2^t ≥ x`.
pub fn ceil_log2(x: u128) -> u32 {
    if x <= 1 {
        0
    } else {
        128 - (x - 1).leading_zeros()
    }
}

/// Ceiling of a positive rational.
pub(crate) fn ceil_rational(r: &Rational) -> i64 {
    r.ceil().to_integer()
}

/// Protocol parameters `(N, M, B, k, ε)` plus the derived `θ` and `B′`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProtocolParams {
    pub n: usize,
    pub m: i64,
    pub b: usize,
    pub k: u32,
    #[serde(with = "rational_string")]
    pub epsilon: Rational,
    #[serde(with = "rational_string")]
    pub theta: Rational,
    pub b_prime: usize,
}

impl ProtocolParams {
    pub fn new(n: usize, m: i64, b: usize, k: u32, epsilon: Rational) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidParams(format!("N = {n} must be at least 2")));
        }
        if m < 1 {
            return Err(Error::InvalidParams(format!("M = {m} must be positive")));
        }
        if b == 0 || b > n {
            return Err(Error::InvalidParams(format!("B = {b} must lie in [1, {n}]")));
        }
        if k == 0 {
            return Err(Error::InvalidParams("k must be positive".into()));
        }
        if !epsilon.is_positive() {
            return Err(Error::InvalidParams(format!("ε = {epsilon} must be positive")));
        }
        let mm = m as i128;
        if 8 * mm * mm * n as i128 >= PRIME as i128 {
            return Err(Error::InvalidParams(format!(
                "M²N = {} exceeds the supported envelope (8M²N < 2^61 - 1)",
                mm * mm * n as i128
            )));
        }
        let one = Rational::one();
        let theta = epsilon / (Rational::from_integer(b as i64) * (one + epsilon));
        let passes = Self::pass_cap_for(n, m) as i64;
        let per_pass = ceil_rational(&theta.recip());
        let b_prime = (per_pass * passes).min(n as i64) as usize;
        Ok(ProtocolParams {
            n,
            m,
            b,
            k,
            epsilon,
            theta,
            b_prime,
        })
    }

    fn pass_cap_for(n: usize, m: i64) -> u32 {
        let mm = m as u128;
        ceil_log2(4 * mm * mm * n as u128 + 1).max(1)
    }

    /// `⌈log₂(4M²N + 1)⌉`: bound on the recovery passes.
    pub fn pass_cap(&self) -> usize {
        Self::pass_cap_for(self.n, self.m) as usize
    }

    /// Threshold targeted by the recovery step, `θ/(1+ε) = ε/(B(1+ε)²)`.
    pub fn recovery_theta(&self) -> Rational {
        self.theta / (Rational::one() + self.epsilon)
    }

    /// Repetitions (median groups) for every measurement matrix.
    pub fn reps(&self) -> usize {
        2 * self.k as usize + 1
    }

    /// `⌈16·B²/ε²⌉`, the rows per repetition of `R₁`.
    pub fn recovery_rows_per_rep(&self) -> usize {
        let b = Rational::from_integer(self.b as i64);
        ceil_rational(&(Rational::from_integer(16) * b * b / (self.epsilon * self.epsilon))) as usize
    }

    /// `⌈64/ε²⌉`, the rows per repetition of each `R₂^j`.
    pub fn norm_rows_per_rep(&self) -> usize {
        norm_rows_per_rep(self.epsilon)
    }

    /// Inputs must lie in `[-M, M]^N`.
    pub fn check_input(&self, v: &TermVector) -> Result<()> {
        if v.len() != self.n {
            return Err(Error::DimensionMismatch {
                expected: self.n,
                actual: v.len(),
            });
        }
        v.check_bound(self.m)
    }
}

pub(crate) fn norm_rows_per_rep(epsilon: Rational) -> usize {
    ceil_rational(&(Rational::from_integer(64) / (epsilon * epsilon))) as usize
}

/// Parses `"p/q"` or a plain integer into a positive-denominator rational.
pub fn parse_rational(s: &str) -> Result<Rational> {
    let s = s.trim();
    let r = match s.split_once('/') {
        Some((p, q)) => {
            let p: i64 = p.trim().parse().map_err(|e| Error::Parse(format!("{s}: {e}")))?;
            let q: i64 = q.trim().parse().map_err(|e| Error::Parse(format!("{s}: {e}")))?;
            if q == 0 {
                return Err(Error::Parse(format!("{s}: zero denominator")));
            }
            Rational::new(p, q)
        }
        None => Rational::from_integer(
            s.parse().map_err(|e| Error::Parse(format!("{s}: {e}")))?,
        ),
    };
    Ok(r)
}

pub(crate) mod rational_string {
    use super::Rational;
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &Rational, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&format!("{}/{}", r.numer(), r.denom()))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Rational, D::Error> {
        let s = String::deserialize(d)?;
        super::parse_rational(&s).map_err(serde::de::Error::custom)
    }
}
