//! Private Euclidean-norm approximation, modelled by its contract.
//!
//! Ideal mode returns `ŝ² = E·(1+ε)^{−u}` for the exact squared norm `E` and a
//! seed-derived `u ∈ [0, 1)` on a grid of 2^20 levels. The estimate depends on
//! the input only through `E`, so it is simulatable from the norm alone.
//! Sketch mode is a median-of-means estimator over a `±1` sketch, deflated so
//! that it lands in the same one-sided band with high probability.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, ToPrimitive};
use rand::RngCore;
use serde::{Deserialize, Serialize, Serializer};

use crate::error::{Error, Result};
use crate::model::{norm_rows_per_rep, Rational};
use crate::seed::Seed;
use crate::sketch::{squared_norm_estimate, MeasurementMatrix, Sketch};

/// Number of levels `u` is quantized to.
pub const GRID_LEVELS: u32 = 1 << 20;

/// Fractional bits of the `(1+ε)^{−u}` factor.
const FACTOR_BITS: u32 = 52;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    Ideal,
    Sketch,
}

impl std::str::FromStr for NormMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ideal" => Ok(NormMode::Ideal),
            "sketch" => Ok(NormMode::Sketch),
            other => Err(Error::Parse(format!("unknown norm mode {other:?}"))),
        }
    }
}

/// An estimate `ŝ` of a Euclidean norm. `squared` is exact; `value` is its
/// floating-point square root.
#[derive(Debug, Clone, PartialEq)]
pub struct NormEstimate {
    pub squared: BigRational,
    pub value: f64,
    pub mode: NormMode,
    pub seed: Seed,
}

impl NormEstimate {
    fn new(squared: BigRational, mode: NormMode, seed: Seed) -> Self {
        let value = squared.to_f64().unwrap_or(f64::INFINITY).max(0.0).sqrt();
        NormEstimate {
            squared,
            value,
            mode,
            seed,
        }
    }

    pub fn squared_f64(&self) -> f64 {
        self.squared.to_f64().unwrap_or(f64::INFINITY)
    }
}

impl Serialize for NormEstimate {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        use serde::ser::SerializeStruct;
        let mut st = s.serialize_struct("NormEstimate", 5)?;
        st.serialize_field("value", &self.value)?;
        st.serialize_field("squared", &self.squared.to_string())?;
        st.serialize_field("squaredApprox", &self.squared_f64())?;
        st.serialize_field("mode", &self.mode)?;
        st.serialize_field("seed", &self.seed)?;
        st.end()
    }
}

pub(crate) fn big(r: &Rational) -> BigRational {
    BigRational::new(BigInt::from(*r.numer()), BigInt::from(*r.denom()))
}

/// The grid level `u·2^20` drawn from `seed`.
pub fn grid_level(seed: &Seed) -> u32 {
    seed.rng().next_u32() >> 12
}

/// Ideal-mode estimate: `E/(1+ε) ≤ ŝ² ≤ E` always.
pub fn estimate_norm(exact_squared_norm: i128, epsilon: &Rational, seed: Seed) -> Result<NormEstimate> {
    if exact_squared_norm < 0 {
        return Err(Error::NegativeNorm(exact_squared_norm));
    }
    let squared = squared_at_level(exact_squared_norm, epsilon, grid_level(&seed));
    Ok(NormEstimate::new(squared, NormMode::Ideal, seed))
}

/// `E·(1+ε)^{−level/2^20}`, with the factor rounded down to 52 fractional
/// bits and the result clamped into `[E/(1+ε), E]`.
pub(crate) fn squared_at_level(exact_squared_norm: i128, epsilon: &Rational, level: u32) -> BigRational {
    let e = BigRational::from_integer(BigInt::from(exact_squared_norm));
    if exact_squared_norm == 0 || level == 0 {
        return e;
    }
    let u = level as f64 / GRID_LEVELS as f64;
    let one_plus = 1.0 + epsilon.to_f64().unwrap_or(0.0);
    let factor = (-u * one_plus.ln()).exp();
    let scaled = (factor * (1u64 << FACTOR_BITS) as f64).floor() as u64;
    let raw = &e * BigRational::new(BigInt::from(scaled), BigInt::from(1u64 << FACTOR_BITS));
    let floor = &e / (BigRational::one() + big(epsilon));
    raw.clamp(floor, e)
}

/// Sketch-mode estimate from a sketch of the vector under `matrix`.
pub fn estimate_norm_sketch(
    matrix: &MeasurementMatrix,
    sketch: &Sketch,
    epsilon: &Rational,
    k: u32,
) -> Result<NormEstimate> {
    let needed_rows = norm_rows_per_rep(*epsilon);
    let needed_reps = 2 * k as usize + 1;
    if matrix.rows_per_rep() < needed_rows || matrix.reps() < needed_reps {
        return Err(Error::SketchTooSmall {
            needed_rows,
            needed_reps,
            rows: matrix.rows_per_rep(),
            reps: matrix.reps(),
        });
    }
    let raw = squared_norm_estimate(matrix, sketch)?;
    // two-sided (1 ± δ) with δ = ε/(2+ε) maps into [1/(1+ε), 1] after dividing by 1+δ
    let eps = big(epsilon);
    let two = BigRational::from_integer(BigInt::from(2));
    let squared = raw * (&two + &eps) / (&two + &two * &eps);
    Ok(NormEstimate::new(squared, NormMode::Sketch, matrix.seed()))
}

/// Ideal-mode simulator: the estimate for a fresh seed, together with that
/// seed as the simulated matrix seed.
pub fn simulate_norm_estimate(
    exact_squared_norm: i128,
    epsilon: &Rational,
    fresh_seed: Seed,
) -> Result<(NormEstimate, Seed)> {
    let est = estimate_norm(exact_squared_norm, epsilon, fresh_seed)?;
    Ok((est, fresh_seed))
}

/// Whether `ŝ²` lies in `[E/(1+ε), E]`.
pub fn within_band(est: &NormEstimate, exact_squared_norm: i128, epsilon: &Rational) -> bool {
    let e = BigRational::from_integer(BigInt::from(exact_squared_norm));
    let floor = &e / (BigRational::one() + big(epsilon));
    est.squared >= floor && est.squared <= e
}
