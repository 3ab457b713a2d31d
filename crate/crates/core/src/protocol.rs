//! The two-party heavy-hitters protocol.
//!
//! 1. Alice and Bob exchange the seeds of `R₁` (Alice) and `R₂` (Bob) in the
//!    clear.
//! 2. Each sketches its input under `R₁`; an ideal functionality combines
//!    the sketches, recovers a superset `I` of `Q_{c,B,θ/(1+ε)}`, pads it to
//!    exactly `B′` indices and outputs them secret-shared.
//! 3. One Private Sample Sum per index fetches `c_i` in shared form; the terms
//!    are sorted decreasingly inside a second functionality.
//! 4. A third functionality runs the output loop: for `j < B` it estimates the
//!    norm of the residual `r_j` with `R₂^j` and stops as soon as
//!    `|c_{i_j}|² < θ·ŝ²(r_j)`; otherwise it outputs `t_{i_j}`.
//! 5. The seeds are returned as auxiliary output.

use std::collections::BTreeSet;

use num_bigint::BigInt;
use num_rational::BigRational;
use rand::Rng;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::model::{ceil_log2, ProtocolParams, Rational, Representation, Term, TermVector};
use crate::mpc::{
    add_mod, from_field, pss, reconstruct, share, smc_eval, to_field, Direction, IdealFunctionality, Party, Share,
    Transcript,
};
use crate::norm::{big, estimate_norm, estimate_norm_sketch, NormEstimate, NormMode};
use crate::seed::Seed;
use crate::sketch::{gen_matrix, recover_superset, sketch, sketch_minus_terms, RecoveryLimits, Sketch};

/// Bytes charged per secure comparison of two field elements.
pub const COMPARE_GATE_BYTES: u64 = 256;

const SEED_BYTES: u64 = 32;

/// Seeds of the measurement matrices, published as auxiliary output.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct AuxSeeds {
    pub r1: Seed,
    pub r2: Seed,
    /// Seeds of the sub-matrices `R₂^0, R₂^1, …`, derived from `r2`.
    pub r2_parts: Vec<Seed>,
}

impl AuxSeeds {
    pub(crate) fn r2_parts_from(r2: &Seed, count: usize) -> Vec<Seed> {
        (0..count as u64).map(|j| r2.derive("R2", j)).collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PehhOutput {
    pub terms: Representation,
    pub aux_seeds: AuxSeeds,
    pub error_estimate: Option<NormEstimate>,
    pub bytes: u64,
    pub rounds: u32,
    #[serde(skip)]
    pub transcript: Transcript,
}

/// Intermediate values of one run, for tests and diagnostics. Nothing in here
/// is visible to either party in a real execution.
#[derive(Debug, Clone, PartialEq)]
pub struct PehhTrace {
    pub recovered: Vec<usize>,
    pub passes: usize,
    pub padded: Vec<usize>,
    pub sorted: Vec<Term>,
    pub norm_estimates: Vec<NormEstimate>,
}

pub fn run_pehh(
    a: &TermVector,
    b: &TermVector,
    params: &ProtocolParams,
    mode: NormMode,
    session_seed: Seed,
) -> Result<PehhOutput> {
    run_pehh_traced(a, b, params, mode, session_seed, false).map(|(out, _)| out)
}

/// [`run_pehh`] that also outputs an estimate of `‖c̃ − c‖₂`.
pub fn run_pehh_with_error(
    a: &TermVector,
    b: &TermVector,
    params: &ProtocolParams,
    mode: NormMode,
    session_seed: Seed,
) -> Result<PehhOutput> {
    run_pehh_traced(a, b, params, mode, session_seed, true).map(|(out, _)| out)
}

/// Pads `indices` (in priority order) with distinct pseudorandom indices from
/// `[0, n)` up to exactly `b_prime`. Excess indices are dropped from the end.
pub fn pad_index_set(indices: &[usize], b_prime: usize, n: usize, seed: &Seed) -> Result<Vec<usize>> {
    if b_prime > n {
        return Err(Error::InvalidParams(format!("cannot pad to {b_prime} distinct indices out of {n}")));
    }
    let mut seen = BTreeSet::new();
    for &i in indices {
        if i >= n {
            return Err(Error::IndexOutOfRange { index: i, len: n });
        }
        if !seen.insert(i) {
            return Err(Error::DuplicateIndex(i));
        }
    }
    let mut out = indices.to_vec();
    if out.len() > b_prime {
        log::warn!("recovered {} indices, keeping the first {b_prime}", out.len());
        out.truncate(b_prime);
        seen = out.iter().copied().collect();
    }
    let mut rng = seed.rng();
    while out.len() < b_prime {
        let i = rng.random_range(0..n);
        if seen.insert(i) {
            out.push(i);
        }
    }
    Ok(out)
}

pub(crate) struct LoopResult {
    pub emitted: Vec<Term>,
    pub estimates: Vec<NormEstimate>,
    pub exhausted: bool,
}

/// The step-4 loop, shared with the simulator. `estimate(j, emitted)` must
/// return `ŝ²(r_j)` for the residual after removing `emitted`.
pub(crate) fn output_loop<F>(candidates: &[Term], b: usize, theta: &Rational, mut estimate: F) -> Result<LoopResult>
where
    F: FnMut(usize, &[Term]) -> Result<NormEstimate>,
{
    let theta = big(theta);
    let mut emitted = Vec::new();
    let mut estimates = Vec::new();
    for j in 0..b {
        let est = estimate(j, &emitted)?;
        let keep = match candidates.get(j) {
            // strict `<` breaks, so equality outputs the term
            Some(t) if t.value != 0 => {
                BigRational::from_integer(BigInt::from(t.squared())) >= &theta * &est.squared
            }
            _ => false,
        };
        estimates.push(est);
        if !keep {
            return Ok(LoopResult {
                emitted,
                estimates,
                exhausted: false,
            });
        }
        emitted.push(candidates[j]);
    }
    Ok(LoopResult {
        emitted,
        estimates,
        exhausted: true,
    })
}

fn to_words(values: &[i64]) -> Result<Vec<u64>> {
    values.iter().map(|&v| to_field(v)).collect()
}

fn combine_words(xa: &[u64], xb: &[u64]) -> Vec<i64> {
    xa.iter().zip(xb).map(|(&x, &y)| from_field(add_mod(x, y))).collect()
}

fn shares_of(values: &[i64], seed: &Seed, label: &str) -> Result<(Vec<u64>, Vec<u64>)> {
    let mut sa = Vec::with_capacity(values.len());
    let mut sb = Vec::with_capacity(values.len());
    for (j, &v) in values.iter().enumerate() {
        let (x, y) = share(v, &seed.derive(label, j as u64))?;
        sa.push(x.value);
        sb.push(y.value);
    }
    Ok((sa, sb))
}

/// Runs the protocol and returns the trace alongside the output.
pub fn run_pehh_traced(
    a: &TermVector,
    b: &TermVector,
    params: &ProtocolParams,
    mode: NormMode,
    session_seed: Seed,
    with_error: bool,
) -> Result<(PehhOutput, PehhTrace)> {
    params.check_input(a)?;
    params.check_input(b)?;
    let n = params.n;
    let k = params.k;
    let bp = params.b_prime;
    let parts = params.b + with_error as usize;

    let r1_seed = session_seed.derive("alice", 0).derive("R1", 0);
    let r2_seed = session_seed.derive("bob", 0).derive("R2", 0);
    let r2_parts = AuxSeeds::r2_parts_from(&r2_seed, parts);
    let functionality_seed = session_seed.derive("functionality", 0);

    let mut t = Transcript::new();

    // step 1
    t.begin_round();
    t.send_public(Direction::AliceToBob, SEED_BYTES, "seed:R1", r1_seed.to_hex());
    t.send_public(Direction::BobToAlice, SEED_BYTES, "seed:R2", r2_seed.to_hex());

    // step 2
    let r1 = gen_matrix(r1_seed, params.reps(), params.recovery_rows_per_rep(), n)?;
    let sketch_a = to_words(&sketch(&r1, a)?.values)?;
    let sketch_b = to_words(&sketch(&r1, b)?.values)?;
    let rows = r1.rows();
    let recover_f = IdealFunctionality::new(
        "recover",
        (rows, rows),
        (bp, bp),
        rows as u64 * bp as u64 * ceil_log2(n as u128).max(1) as u64,
    );
    let mut recovered = Vec::new();
    let mut passes = 0;
    let mut padded = Vec::new();
    let (idx_a, idx_b) = smc_eval(&mut t, k, &recover_f, &sketch_a, &sketch_b, |xa, xb| {
        let s = Sketch {
            matrix_seed: r1_seed,
            values: combine_words(xa, xb),
        };
        let limits = RecoveryLimits {
            max_indices: bp,
            max_passes: params.pass_cap(),
        };
        let rec = recover_superset(&r1, &s, &params.recovery_theta(), limits)?;
        padded = pad_index_set(&rec.indices, bp, n, &functionality_seed.derive("pad", 0))?;
        recovered = rec.indices;
        passes = rec.passes;
        let as_i64: Vec<i64> = padded.iter().map(|&i| i as i64).collect();
        shares_of(&as_i64, &functionality_seed, "share-I")
    })?;

    // step 3
    t.begin_round();
    let mut val_a = Vec::with_capacity(bp);
    let mut val_b = Vec::with_capacity(bp);
    for j in 0..bp {
        let index = (
            Share {
                value: idx_a[j],
                party: Party::A,
            },
            Share {
                value: idx_b[j],
                party: Party::B,
            },
        );
        let (x, y) = pss(&mut t, k, a, b, index, &functionality_seed.derive("pss", j as u64))?;
        val_a.push(x.value);
        val_b.push(y.value);
    }

    let sort_f = IdealFunctionality::new(
        "sort",
        (2 * bp, 2 * bp),
        (2 * bp, 2 * bp),
        bp as u64 * ceil_log2(bp as u128).max(1) as u64 * COMPARE_GATE_BYTES,
    );
    let mut sorted = Vec::new();
    let in_a = [idx_a, val_a].concat();
    let in_b = [idx_b, val_b].concat();
    let (sorted_a, sorted_b) = smc_eval(&mut t, k, &sort_f, &in_a, &in_b, |xa, xb| {
        let idx = combine_words(&xa[..bp], &xb[..bp]);
        let val = combine_words(&xa[bp..], &xb[bp..]);
        let mut terms: Vec<Term> = idx.iter().zip(&val).map(|(&i, &v)| Term::new(i as usize, v)).collect();
        terms.sort_by(|x, y| crate::model::compare_terms(y, x));
        let flat: Vec<i64> = terms
            .iter()
            .map(|t| t.index as i64)
            .chain(terms.iter().map(|t| t.value))
            .collect();
        sorted = terms;
        shares_of(&flat, &functionality_seed, "share-sorted")
    })?;

    // step 4
    let norm_rows = params.norm_rows_per_rep();
    let r2_matrices = match mode {
        NormMode::Ideal => Vec::new(),
        NormMode::Sketch => r2_parts
            .iter()
            .map(|&s| gen_matrix(s, params.reps(), norm_rows, n))
            .collect::<Result<Vec<_>>>()?,
    };
    let r2_sketches = r2_matrices
        .iter()
        .map(|m| sketch(m, a)?.combine(&sketch(m, b)?))
        .collect::<Result<Vec<_>>>()?;
    let norm_cost = 2 * (params.reps() * norm_rows) as u64 * crate::mpc::WORD_BYTES + COMPARE_GATE_BYTES;
    let loop_f = IdealFunctionality::new(
        "output-loop",
        (2 * bp, 2 * bp),
        (2 * params.b + 1, 2 * params.b + 1),
        parts as u64 * norm_cost,
    );
    let exact_norm = a.add(b)?.l2_norm_squared();
    let estimate = |j: usize, emitted: &[Term]| -> Result<NormEstimate> {
        match mode {
            NormMode::Ideal => {
                let removed: i128 = emitted.iter().map(Term::squared).sum();
                estimate_norm(exact_norm - removed, &params.epsilon, r2_parts[j])
            }
            NormMode::Sketch => {
                let residual = sketch_minus_terms(
                    &r2_matrices[j],
                    &r2_sketches[j],
                    &Representation::new(emitted.to_vec())?,
                )?;
                estimate_norm_sketch(&r2_matrices[j], &residual, &params.epsilon, k)
            }
        }
    };
    let mut result = None;
    smc_eval(&mut t, k, &loop_f, &sorted_a, &sorted_b, |xa, xb| {
        let idx = combine_words(&xa[..bp], &xb[..bp]);
        let val = combine_words(&xa[bp..], &xb[bp..]);
        let candidates: Vec<Term> = idx.iter().zip(&val).map(|(&i, &v)| Term::new(i as usize, v)).collect();
        let mut res = output_loop(&candidates, params.b, &params.theta, &estimate)?;
        if with_error && res.exhausted {
            let extra = estimate(params.b, &res.emitted)?;
            res.estimates.push(extra);
        }
        // the output is public: both parties receive the same words
        let mut words = vec![res.emitted.len() as u64];
        for t in &res.emitted {
            words.push(t.index as u64);
            words.push(to_field(t.value)?);
        }
        words.resize(2 * params.b + 1, 0);
        result = Some(res);
        Ok((words.clone(), words))
    })?;
    let res = result.expect("output loop ran");

    let error_estimate = if with_error {
        res.estimates.last().cloned()
    } else {
        None
    };
    let output = PehhOutput {
        terms: Representation::new(res.emitted)?,
        aux_seeds: AuxSeeds {
            r1: r1_seed,
            r2: r2_seed,
            r2_parts,
        },
        error_estimate,
        bytes: t.total_bytes(),
        rounds: t.rounds(),
        transcript: t,
    };
    let trace = PehhTrace {
        recovered,
        passes,
        padded,
        sorted,
        norm_estimates: res.estimates,
    };
    Ok((output, trace))
}

/// Reconstructs a value from raw share words.
pub fn reconstruct_words(a: u64, b: u64) -> i64 {
    reconstruct(
        Share {
            value: a,
            party: Party::A,
        },
        Share {
            value: b,
            party: Party::B,
        },
    )
}
