//! Seeded ±1 measurement matrices, linear sketches, median-of-repetitions
//! point estimates and the iterative superset recovery.
//!
//! A matrix is `reps` groups of `rows_per_rep` rows. Row `r` is keyed by the
//! matrix seed and `r`: its entries are the bits of a ChaCha8 keystream with
//! stream id `r`, so any entry can be regenerated from the seed alone. A set
//! bit means `-1`.
//!
//! Entries are stored twice, packed row-major (for computing `Rc`) and packed
//! column-major per repetition (for `Rᵀs` and for subtracting terms). Both
//! products use byte-indexed lookup tables, so a product costs about
//! `rows·N/8` table reads.

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Rational, Representation, Term, TermVector};
use crate::seed::Seed;

#[derive(Clone)]
pub struct MeasurementMatrix {
    seed: Seed,
    reps: usize,
    rows_per_rep: usize,
    cols: usize,
    row_words: usize,
    row_bits: Vec<u64>,
    /// words per (rep, column) in `col_bits`
    col_words: usize,
    col_bits: Vec<u64>,
}

impl std::fmt::Debug for MeasurementMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MeasurementMatrix")
            .field("seed", &self.seed)
            .field("reps", &self.reps)
            .field("rows_per_rep", &self.rows_per_rep)
            .field("cols", &self.cols)
            .finish()
    }
}

/// `Rc` for some matrix `R`, tagged with the seed of `R`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sketch {
    pub matrix_seed: Seed,
    pub values: Vec<i64>,
}

/// Builds the matrix for `seed`. Every entry is a deterministic function of
/// `(seed, row, column)`.
pub fn gen_matrix(seed: Seed, reps: usize, rows_per_rep: usize, n: usize) -> Result<MeasurementMatrix> {
    if reps == 0 || rows_per_rep == 0 || n == 0 {
        return Err(Error::InvalidParams(format!(
            "matrix dimensions must be positive (reps={reps}, rows_per_rep={rows_per_rep}, n={n})"
        )));
    }
    let rows = reps * rows_per_rep;
    let row_words = n.div_ceil(64);
    let tail_mask = if n % 64 == 0 { u64::MAX } else { (1u64 << (n % 64)) - 1 };

    let mut row_bits = vec![0u64; rows * row_words];
    let base = ChaCha8Rng::from_seed(seed.0);
    for (r, chunk) in row_bits.chunks_exact_mut(row_words).enumerate() {
        let mut rng = base.clone();
        rng.set_stream(r as u64);
        rng.set_word_pos(0);
        for w in chunk.iter_mut() {
            *w = rng.next_u64();
        }
        chunk[row_words - 1] &= tail_mask;
    }

    let col_words = rows_per_rep.div_ceil(64);
    let mut col_bits = vec![0u64; reps * n * col_words];
    let mut block = [0u64; 64];
    for g in 0..reps {
        for rb in 0..col_words {
            let first = rb * 64;
            let count = (rows_per_rep - first).min(64);
            for cb in 0..row_words {
                for (j, slot) in block.iter_mut().enumerate() {
                    *slot = if j < count {
                        row_bits[(g * rows_per_rep + first + j) * row_words + cb]
                    } else {
                        0
                    };
                }
                transpose64(&mut block);
                for (i, &word) in block.iter().enumerate() {
                    let col = cb * 64 + i;
                    if col >= n {
                        break;
                    }
                    col_bits[(g * n + col) * col_words + rb] = word;
                }
            }
        }
    }

    Ok(MeasurementMatrix {
        seed,
        reps,
        rows_per_rep,
        cols: n,
        row_words,
        row_bits,
        col_words,
        col_bits,
    })
}

/// In-place transpose of a 64×64 bit matrix: bit `j` of `a[i]` moves to bit
/// `i` of `a[j]`.
fn transpose64(a: &mut [u64; 64]) {
    let mut j = 32usize;
    let mut m: u64 = 0x0000_0000_FFFF_FFFF;
    while j != 0 {
        let mut k = 0usize;
        while k < 64 {
            let t = ((a[k] >> j) ^ a[k + j]) & m;
            a[k + j] ^= t;
            a[k] ^= t << j;
            k = (k + j + 1) & !j;
        }
        j >>= 1;
        m ^= m << j;
    }
}

/// `table[ch*256 + b]` is the sum of `values[ch*8 + bit]` over the set bits of
/// `b`; positions past the end count as zero.
fn byte_tables_i64(values: &[i64], chunks: usize) -> Vec<i64> {
    let mut table = vec![0i64; chunks * 256];
    for ch in 0..chunks {
        let t = &mut table[ch * 256..(ch + 1) * 256];
        for b in 1..256usize {
            let low = b.trailing_zeros() as usize;
            let v = values.get(ch * 8 + low).copied().unwrap_or(0);
            t[b] = t[b & (b - 1)] + v;
        }
    }
    table
}

#[inline]
fn masked_sum(words: &[u64], table: &[i64], chunks: usize) -> i64 {
    let mut acc = 0i64;
    for ch in 0..chunks {
        let byte = (words[ch / 8] >> ((ch % 8) * 8)) & 0xff;
        acc += table[ch * 256 + byte as usize];
    }
    acc
}

fn median_i64(v: &mut [i64]) -> i64 {
    let mid = v.len() / 2;
    *v.select_nth_unstable(mid).1
}

impl MeasurementMatrix {
    pub fn seed(&self) -> Seed {
        self.seed
    }

    pub fn reps(&self) -> usize {
        self.reps
    }

    pub fn rows_per_rep(&self) -> usize {
        self.rows_per_rep
    }

    pub fn rows(&self) -> usize {
        self.reps * self.rows_per_rep
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    /// `R[r][i] ∈ {−1, +1}`.
    pub fn entry(&self, r: usize, i: usize) -> i8 {
        let bit = (self.row_bits[r * self.row_words + i / 64] >> (i % 64)) & 1;
        1 - 2 * bit as i8
    }

    fn row_words_of(&self, r: usize) -> &[u64] {
        &self.row_bits[r * self.row_words..(r + 1) * self.row_words]
    }

    fn col_words_of(&self, g: usize, i: usize) -> &[u64] {
        let at = (g * self.cols + i) * self.col_words;
        &self.col_bits[at..at + self.col_words]
    }

    fn check_sketch(&self, s: &Sketch) -> Result<()> {
        if s.values.len() != self.rows() {
            return Err(Error::DimensionMismatch {
                expected: self.rows(),
                actual: s.values.len(),
            });
        }
        if s.matrix_seed != self.seed {
            return Err(Error::InvalidParams(
                "sketch was built with a different matrix".into(),
            ));
        }
        Ok(())
    }

    /// Exact `Rc` over raw coefficients.
    pub fn apply(&self, c: &[i64]) -> Result<Vec<i64>> {
        if c.len() != self.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                actual: c.len(),
            });
        }
        let chunks = self.cols.div_ceil(8);
        let table = byte_tables_i64(c, chunks);
        let total: i64 = c.iter().sum();
        Ok((0..self.rows())
            .map(|r| total - 2 * masked_sum(self.row_words_of(r), &table, chunks))
            .collect())
    }

    /// Per-repetition sums `Σ_{r∈g} R[r][i]·values[r]` for every column.
    /// Result is indexed `[g * cols + i]`.
    fn transpose_sums(&self, values: &[i64]) -> Vec<i64> {
        let m = self.rows_per_rep;
        let chunks = self.col_words * 8;
        let mut out = vec![0i64; self.reps * self.cols];
        for g in 0..self.reps {
            let rows = &values[g * m..(g + 1) * m];
            let table = byte_tables_i64(rows, chunks);
            let total: i64 = rows.iter().sum();
            for i in 0..self.cols {
                out[g * self.cols + i] = total - 2 * masked_sum(self.col_words_of(g, i), &table, chunks);
            }
        }
        out
    }

    /// Median over repetitions of the per-repetition sums, for every column.
    /// The estimate of `c_i` is this value divided by `rows_per_rep`.
    fn median_sums(&self, values: &[i64]) -> Vec<i64> {
        let sums = self.transpose_sums(values);
        let mut buf = vec![0i64; self.reps];
        (0..self.cols)
            .map(|i| {
                for (g, slot) in buf.iter_mut().enumerate() {
                    *slot = sums[g * self.cols + i];
                }
                median_i64(&mut buf)
            })
            .collect()
    }

    fn subtract_terms(&self, values: &mut [i64], terms: &[Term]) {
        let m = self.rows_per_rep;
        for t in terms {
            if t.value == 0 {
                continue;
            }
            for g in 0..self.reps {
                let words = self.col_words_of(g, t.index);
                for (j, v) in values[g * m..(g + 1) * m].iter_mut().enumerate() {
                    let bit = (words[j / 64] >> (j % 64)) & 1;
                    if bit == 0 {
                        *v -= t.value;
                    } else {
                        *v += t.value;
                    }
                }
            }
        }
    }

    /// Median over repetitions of `Σ_{r∈g} s_r²` (the mean of squares times
    /// `rows_per_rep`).
    fn median_square_sum(&self, values: &[i64]) -> i128 {
        let m = self.rows_per_rep;
        let mut per_rep: Vec<i128> = (0..self.reps)
            .map(|g| {
                values[g * m..(g + 1) * m]
                    .iter()
                    .map(|&v| (v as i128) * (v as i128))
                    .sum()
            })
            .collect();
        let mid = per_rep.len() / 2;
        *per_rep.select_nth_unstable(mid).1
    }
}

/// Exact `Rc`.
pub fn sketch(matrix: &MeasurementMatrix, c: &TermVector) -> Result<Sketch> {
    Ok(Sketch {
        matrix_seed: matrix.seed,
        values: matrix.apply(c.values())?,
    })
}

impl Sketch {
    /// Entrywise sum of two sketches under the same matrix.
    pub fn combine(&self, other: &Sketch) -> Result<Sketch> {
        if self.matrix_seed != other.matrix_seed {
            return Err(Error::InvalidParams("sketches use different matrices".into()));
        }
        if self.values.len() != other.values.len() {
            return Err(Error::DimensionMismatch {
                expected: self.values.len(),
                actual: other.values.len(),
            });
        }
        Ok(Sketch {
            matrix_seed: self.matrix_seed,
            values: self.values.iter().zip(&other.values).map(|(x, y)| x + y).collect(),
        })
    }

    pub fn is_zero(&self) -> bool {
        self.values.iter().all(|&v| v == 0)
    }
}

/// `s − R·(Σ terms)`: the sketch of the residual when `s = Rc`.
pub fn sketch_minus_terms(
    matrix: &MeasurementMatrix,
    s: &Sketch,
    terms: &Representation,
) -> Result<Sketch> {
    matrix.check_sketch(s)?;
    for t in terms.terms() {
        if t.index >= matrix.cols {
            return Err(Error::IndexOutOfRange {
                index: t.index,
                len: matrix.cols,
            });
        }
    }
    let mut out = s.clone();
    matrix.subtract_terms(&mut out.values, terms.terms());
    Ok(out)
}

/// Median over repetitions of `(1/rows_per_rep)·Σ_{r∈g} R[r][i]·s_r`.
pub fn estimate_coeff(matrix: &MeasurementMatrix, s: &Sketch, i: usize) -> Result<Rational> {
    matrix.check_sketch(s)?;
    if i >= matrix.cols {
        return Err(Error::IndexOutOfRange {
            index: i,
            len: matrix.cols,
        });
    }
    let m = matrix.rows_per_rep;
    let mut sums: Vec<i64> = (0..matrix.reps)
        .map(|g| {
            let words = matrix.col_words_of(g, i);
            s.values[g * m..(g + 1) * m]
                .iter()
                .enumerate()
                .map(|(j, &v)| if (words[j / 64] >> (j % 64)) & 1 == 0 { v } else { -v })
                .sum()
        })
        .collect();
    Ok(Rational::new(median_i64(&mut sums), m as i64))
}

/// [`estimate_coeff`] for every index at once.
pub fn estimate_all(matrix: &MeasurementMatrix, s: &Sketch) -> Result<Vec<Rational>> {
    matrix.check_sketch(s)?;
    let m = matrix.rows_per_rep as i64;
    Ok(matrix
        .median_sums(&s.values)
        .into_iter()
        .map(|x| Rational::new(x, m))
        .collect())
}

/// Median-of-means estimate of `‖c‖₂²` from `s = Rc`. Unbiased per row; no
/// one-sided correction is applied here.
pub fn squared_norm_estimate(matrix: &MeasurementMatrix, s: &Sketch) -> Result<BigRational> {
    matrix.check_sketch(s)?;
    Ok(BigRational::new(
        BigInt::from(matrix.median_square_sum(&s.values)),
        BigInt::from(matrix.rows_per_rep),
    ))
}

/// Result of [`recover_superset`].
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Recovered {
    /// Accepted indices, earliest pass first and by decreasing estimate within
    /// a pass.
    pub indices: Vec<usize>,
    pub passes: usize,
}

/// Limits for [`recover_superset`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RecoveryLimits {
    /// Maximum number of indices returned (`B′`).
    pub max_indices: usize,
    /// Maximum number of estimate-and-subtract passes.
    pub max_passes: usize,
}

/// Recovers a superset of `Q_{c,B,θ}` from `s = Rc`.
///
/// Each pass estimates every coefficient of the current residual and accepts
/// index `i` when `c̃_i ≠ 0` and `c̃_i² ≥ (θ/2)·ŝ²`, where `ŝ²` is the
/// median-of-means estimate of the residual's squared norm. The rounded
/// estimates of accepted indices (and corrections for previously accepted
/// ones) are subtracted from the sketch before the next pass. The loop ends
/// when a pass accepts nothing new, `max_indices` is reached, or after
/// `max_passes` passes.
pub fn recover_superset(
    matrix: &MeasurementMatrix,
    s: &Sketch,
    theta: &Rational,
    limits: RecoveryLimits,
) -> Result<Recovered> {
    matrix.check_sketch(s)?;
    let m = matrix.rows_per_rep as i128;
    let half_theta = *theta / Rational::from_integer(2);
    let (tn, td) = (*half_theta.numer() as i128, *half_theta.denom() as i128);

    let mut residual = s.values.clone();
    let mut accepted: Vec<usize> = Vec::new();
    let mut is_accepted = vec![false; matrix.cols];
    let mut passes = 0;

    while passes < limits.max_passes && accepted.len() < limits.max_indices {
        passes += 1;
        let norm_sum = matrix.median_square_sum(&residual);
        if norm_sum == 0 {
            break;
        }
        // (sum/m)² ≥ (θ/2)·(norm_sum/m)  ⇔  sum²·td ≥ tn·norm_sum·m
        let rhs = norm_sum.checked_mul(m).and_then(|x| x.checked_mul(tn));
        let passes_threshold = |sum: i64| -> bool {
            if sum == 0 {
                return false;
            }
            let sq = (sum as i128) * (sum as i128);
            match (rhs, sq.checked_mul(td)) {
                (Some(r), Some(l)) => l >= r,
                _ => {
                    BigInt::from(sq) * BigInt::from(td)
                        >= BigInt::from(tn) * BigInt::from(norm_sum) * BigInt::from(m)
                }
            }
        };

        let sums = matrix.median_sums(&residual);
        let mut fresh: Vec<(usize, i64)> = sums
            .iter()
            .enumerate()
            .filter(|&(i, &sum)| !is_accepted[i] && passes_threshold(sum))
            .map(|(i, &sum)| (i, sum))
            .collect();
        if fresh.is_empty() {
            break;
        }
        fresh.sort_by(|x, y| {
            y.1.unsigned_abs()
                .cmp(&x.1.unsigned_abs())
                .then(y.0.cmp(&x.0))
        });
        fresh.truncate(limits.max_indices - accepted.len());

        let round = |sum: i64| Rational::new(sum, m as i64).round().to_integer();
        let mut updates: Vec<Term> = accepted
            .iter()
            .map(|&i| Term::new(i, round(sums[i])))
            .filter(|t| t.value != 0)
            .collect();
        for &(i, sum) in &fresh {
            is_accepted[i] = true;
            accepted.push(i);
            updates.push(Term::new(i, round(sum)));
        }
        matrix.subtract_terms(&mut residual, &updates);
    }

    Ok(Recovered {
        indices: accepted,
        passes,
    })
}
