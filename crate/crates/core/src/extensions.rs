//! Taxicab heavy hitters by parameter remapping, and heavy hitters in an
//! orthonormal basis (Hadamard or real Fourier) by local transforms.

use num_traits::ToPrimitive;
use rustfft::num_complex::Complex64;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{ProtocolParams, Rational, TermVector};
use crate::norm::NormMode;
use crate::protocol::{run_pehh, PehhOutput};
use crate::seed::Seed;

/// Euclidean `ε` used to meet a taxicab `ε` with `B` terms: `ε²/B`.
pub fn taxicab_epsilon(epsilon: &Rational, b: usize) -> Rational {
    epsilon * epsilon / Rational::from_integer(b as i64)
}

/// Parameters of the inner Euclidean run for taxicab parameters `params`.
pub fn taxicab_params(params: &ProtocolParams) -> Result<ProtocolParams> {
    ProtocolParams::new(
        params.n,
        params.m,
        params.b,
        params.k,
        taxicab_epsilon(&params.epsilon, params.b),
    )
}

/// Heavy hitters under the ℓ₁ error: `params.epsilon` is the taxicab `ε`.
pub fn run_taxicab(
    a: &TermVector,
    b: &TermVector,
    params: &ProtocolParams,
    mode: NormMode,
    session_seed: Seed,
) -> Result<PehhOutput> {
    run_pehh(a, b, &taxicab_params(params)?, mode, session_seed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Basis {
    Identity,
    Hadamard,
    Fourier,
}

impl std::str::FromStr for Basis {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "identity" => Ok(Basis::Identity),
            "hadamard" => Ok(Basis::Hadamard),
            "fourier" => Ok(Basis::Fourier),
            other => Err(Error::Parse(format!("unknown basis {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TransformDirection {
    Forward,
    Inverse,
}

fn check_power_of_two(n: usize) -> Result<()> {
    if n.is_power_of_two() {
        Ok(())
    } else {
        Err(Error::NotPowerOfTwo(n))
    }
}

/// Unnormalized Walsh-Hadamard transform: `H·y` with `H·H = N·I`.
pub fn hadamard_scaled(y: &[i64]) -> Result<Vec<i64>> {
    check_power_of_two(y.len())?;
    let mut v = y.to_vec();
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
    Ok(v)
}

fn hadamard_f64(y: &[f64]) -> Vec<f64> {
    let mut v = y.to_vec();
    let mut h = 1;
    while h < v.len() {
        for block in v.chunks_mut(2 * h) {
            let (lo, hi) = block.split_at_mut(h);
            for (x, y) in lo.iter_mut().zip(hi.iter_mut()) {
                let (s, d) = (*x + *y, *x - *y);
                *x = s;
                *y = d;
            }
        }
        h *= 2;
    }
    let scale = (v.len() as f64).sqrt();
    v.iter().map(|x| x / scale).collect()
}

/// Coefficients in the real orthonormal Fourier basis, laid out as
/// `[DC, cos₁, sin₁, …, cos_{N/2−1}, sin_{N/2−1}, Nyquist]`.
fn fourier_forward(y: &[f64]) -> Vec<f64> {
    let n = y.len();
    if n == 1 {
        return y.to_vec();
    }
    let mut buf: Vec<Complex64> = y.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);
    let root_n = (n as f64).sqrt();
    let pair = (2.0 / n as f64).sqrt();
    let mut x = vec![0.0; n];
    x[0] = buf[0].re / root_n;
    x[n - 1] = buf[n / 2].re / root_n;
    for k in 1..n / 2 {
        x[2 * k - 1] = pair * buf[k].re;
        x[2 * k] = -pair * buf[k].im;
    }
    x
}

fn fourier_inverse(x: &[f64]) -> Vec<f64> {
    let n = x.len();
    if n == 1 {
        return x.to_vec();
    }
    let root_n = (n as f64).sqrt();
    let half = (n as f64 / 2.0).sqrt();
    let mut buf = vec![Complex64::new(0.0, 0.0); n];
    buf[0] = Complex64::new(x[0] * root_n, 0.0);
    buf[n / 2] = Complex64::new(x[n - 1] * root_n, 0.0);
    for k in 1..n / 2 {
        let z = Complex64::new(x[2 * k - 1] * half, -x[2 * k] * half);
        buf[k] = z;
        buf[n - k] = z.conj();
    }
    FftPlanner::new().plan_fft_inverse(n).process(&mut buf);
    buf.iter().map(|z| z.re / n as f64).collect()
}

/// Orthonormal transform of `y`.
pub fn transform(y: &[f64], basis: Basis, direction: TransformDirection) -> Result<Vec<f64>> {
    match basis {
        Basis::Identity => Ok(y.to_vec()),
        Basis::Hadamard => {
            check_power_of_two(y.len())?;
            // symmetric and orthonormal, hence its own inverse
            Ok(hadamard_f64(y))
        }
        Basis::Fourier => {
            check_power_of_two(y.len())?;
            Ok(match direction {
                TransformDirection::Forward => fourier_forward(y),
                TransformDirection::Inverse => fourier_inverse(y),
            })
        }
    }
}

/// Fixed-point scale applied to Fourier coefficients before the integer
/// protocol.
pub const FOURIER_SCALE: f64 = (1u64 << 20) as f64;

/// Terms of a basis-domain run.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct BasisOutput {
    pub basis: Basis,
    /// Integer coefficients entering the protocol are the orthonormal
    /// coefficients times `scale`.
    pub scale: f64,
    /// Orthonormal-basis terms `(position, coefficient)`.
    pub terms: Vec<(usize, f64)>,
    pub inner_params: ProtocolParams,
    pub inner: PehhOutput,
}

impl BasisOutput {
    /// `x̃` as a dense vector of orthonormal coefficients.
    pub fn coefficients(&self, n: usize) -> Vec<f64> {
        let mut x = vec![0.0; n];
        for &(i, v) in &self.terms {
            x[i] = v;
        }
        x
    }

    /// `c̃ = F·x̃` in the original domain.
    pub fn reconstruction(&self, n: usize) -> Result<Vec<f64>> {
        let x = self.coefficients(n);
        match self.basis {
            Basis::Identity => Ok(x),
            Basis::Hadamard => transform(&x, Basis::Hadamard, TransformDirection::Inverse),
            Basis::Fourier => transform(&x, Basis::Fourier, TransformDirection::Inverse),
        }
    }
}

fn scale_for(basis: Basis, n: usize) -> f64 {
    match basis {
        Basis::Identity => 1.0,
        Basis::Hadamard => (n as f64).sqrt(),
        Basis::Fourier => FOURIER_SCALE,
    }
}

/// Parameters of the inner integer run for `basis`.
pub fn basis_params(params: &ProtocolParams, basis: Basis) -> Result<ProtocolParams> {
    let n = params.n;
    match basis {
        Basis::Identity => Ok(params.clone()),
        Basis::Hadamard => {
            check_power_of_two(n)?;
            let m = (n as i64).checked_mul(params.m).ok_or_else(|| {
                Error::InvalidParams("N·M overflows".into())
            })?;
            ProtocolParams::new(n, m, params.b, params.k, params.epsilon)
        }
        Basis::Fourier => {
            check_power_of_two(n)?;
            // |x_k| ≤ √(2N)·M, plus one for rounding
            let bound = (2.0 * n as f64).sqrt() * params.m as f64 * FOURIER_SCALE + 1.0;
            let m = bound.ceil().to_i64().ok_or_else(|| Error::InvalidParams("Fourier bound overflows".into()))?;
            let inner_eps = params.epsilon * Rational::new(7, 8);
            ProtocolParams::new(n, m, params.b, params.k, inner_eps).map_err(|e| {
                Error::Unsupported(format!("Fourier basis at N = {n}, M = {}: {e}", params.m))
            })
        }
    }
}

/// Local transform of one party's input into the integer coefficients the
/// protocol runs on.
pub fn to_basis(v: &TermVector, basis: Basis) -> Result<TermVector> {
    match basis {
        Basis::Identity => Ok(v.clone()),
        Basis::Hadamard => Ok(TermVector(hadamard_scaled(v.values())?)),
        Basis::Fourier => {
            let y: Vec<f64> = v.values().iter().map(|&x| x as f64).collect();
            let x = transform(&y, Basis::Fourier, TransformDirection::Forward)?;
            Ok(TermVector(x.iter().map(|&c| (c * FOURIER_SCALE).round() as i64).collect()))
        }
    }
}

/// Each party transforms its input locally; the protocol runs on the
/// transformed vectors and returns basis-domain terms.
pub fn run_basis_hh(
    a: &TermVector,
    b: &TermVector,
    basis: Basis,
    params: &ProtocolParams,
    mode: NormMode,
    session_seed: Seed,
) -> Result<BasisOutput> {
    params.check_input(a)?;
    params.check_input(b)?;
    let inner_params = basis_params(params, basis)?;
    let xa = to_basis(a, basis)?;
    let xb = to_basis(b, basis)?;
    let inner = run_pehh(&xa, &xb, &inner_params, mode, session_seed)?;
    let scale = scale_for(basis, params.n);
    let terms = inner
        .terms
        .terms()
        .iter()
        .map(|t| (t.index, t.value as f64 / scale))
        .collect();
    Ok(BasisOutput {
        basis,
        scale,
        terms,
        inner_params,
        inner,
    })
}
