//! Simulator for the protocol's output, empirical total-variation testing of
//! real against simulated runs, and adversarial instance generators.

use std::collections::{BTreeSet, HashMap};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::Serialize;
use statrs::distribution::{ChiSquared, ContinuousCDF};

use crate::error::{Error, Result};
use crate::model::{decreasing_rearrangement, top_b, ProtocolParams, Rational, Representation, TermVector};
use crate::norm::{simulate_norm_estimate, NormMode};
use crate::protocol::{output_loop, run_pehh, AuxSeeds};
use crate::seed::Seed;

/// Default number of trials per side.
pub const DEFAULT_TRIALS: usize = 2000;

/// TV distance at or below which a privacy test passes.
pub const TV_THRESHOLD: f64 = 0.05;

/// Norm-blind baseline fails when its TV distance reaches this.
pub const BLIND_FAIL_TV: f64 = 0.5;

/// Seed-uniformity chi-square tests pass above this p-value.
const SEED_P_FLOOR: f64 = 1e-3;

/// What the protocol is allowed to reveal: `c_opt` and `‖c‖₂²`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct LeakageProfile {
    pub c_opt: Representation,
    pub squared_norm: i128,
}

impl LeakageProfile {
    pub fn of(c: &TermVector, b: usize) -> Result<Self> {
        Ok(LeakageProfile {
            c_opt: top_b(c, b)?,
            squared_norm: c.l2_norm_squared(),
        })
    }

    fn check(&self, params: &ProtocolParams) -> Result<()> {
        if self.c_opt.len() != params.b {
            return Err(Error::InconsistentProfile(format!(
                "c_opt has {} terms, B = {}",
                self.c_opt.len(),
                params.b
            )));
        }
        if let Some(t) = self.c_opt.terms().iter().find(|t| t.index >= params.n) {
            return Err(Error::InconsistentProfile(format!("index {} outside [0, {})", t.index, params.n)));
        }
        if self.squared_norm < self.c_opt.squared_norm() {
            return Err(Error::InconsistentProfile(format!(
                "squared norm {} below that of c_opt ({})",
                self.squared_norm,
                self.c_opt.squared_norm()
            )));
        }
        Ok(())
    }
}

/// Simulated output: the emitted terms and the simulated `R₂` seeds.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct SimulatedOutput {
    pub terms: Representation,
    pub r2: Seed,
    pub r2_parts: Vec<Seed>,
}

fn simulate_with_norm(
    c_opt: &Representation,
    squared_norm: i128,
    params: &ProtocolParams,
    sim_seed: Seed,
) -> Result<SimulatedOutput> {
    let r2 = sim_seed.derive("sim-R2", 0);
    let r2_parts = AuxSeeds::r2_parts_from(&r2, params.b);
    let res = output_loop(c_opt.terms(), params.b, &params.theta, |j, emitted| {
        let removed: i128 = emitted.iter().map(|t| t.squared()).sum();
        simulate_norm_estimate(squared_norm - removed, &params.epsilon, r2_parts[j]).map(|(e, _)| e)
    })?;
    Ok(SimulatedOutput {
        terms: Representation::new(res.emitted)?,
        r2,
        r2_parts,
    })
}

/// Replays the output loop from the leakage profile alone.
pub fn simulate_pehh(profile: &LeakageProfile, params: &ProtocolParams, sim_seed: Seed) -> Result<SimulatedOutput> {
    profile.check(params)?;
    simulate_with_norm(&profile.c_opt, profile.squared_norm, params, sim_seed)
}

/// The fixed guess used by the norm-blind baseline: the squared norm of
/// `c_opt` itself.
pub fn norm_blind_guess(c_opt: &Representation) -> i128 {
    c_opt.squared_norm()
}

/// Simulator that sees only `c_opt` and substitutes a fixed norm guess.
pub fn simulate_norm_blind(c_opt: &Representation, params: &ProtocolParams, sim_seed: Seed) -> Result<SimulatedOutput> {
    simulate_with_norm(c_opt, norm_blind_guess(c_opt), params, sim_seed)
}

/// Empirical TV distance between the output histograms of two samplers, each
/// called with trial indices `0..trials`.
pub fn tv_distance<P, Q>(mut sample_p: P, mut sample_q: Q, trials: usize) -> Result<f64>
where
    P: FnMut(usize) -> Result<String>,
    Q: FnMut(usize) -> Result<String>,
{
    if trials == 0 {
        return Err(Error::ZeroTrials);
    }
    let mut hist: HashMap<String, (i64, i64)> = HashMap::new();
    for t in 0..trials {
        hist.entry(sample_p(t)?).or_default().0 += 1;
        hist.entry(sample_q(t)?).or_default().1 += 1;
    }
    let diff: i64 = hist.values().map(|(p, q)| (p - q).abs()).sum();
    Ok(diff as f64 / (2 * trials) as f64)
}

/// Chi-square p-value of the top nibble of the first seed byte against
/// uniform.
pub fn seed_uniformity_p(seeds: &[Seed]) -> f64 {
    if seeds.is_empty() {
        return 1.0;
    }
    let mut buckets = [0u64; 16];
    for s in seeds {
        buckets[(s.as_bytes()[0] >> 4) as usize] += 1;
    }
    let expect = seeds.len() as f64 / 16.0;
    let stat: f64 = buckets.iter().map(|&o| (o as f64 - expect).powi(2) / expect).sum();
    1.0 - ChiSquared::new(15.0).expect("valid dof").cdf(stat)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct PrivacyReport {
    pub instance: String,
    pub trials: usize,
    pub tv: f64,
    pub pass: bool,
    pub threshold: f64,
    /// False in sketch norm mode, where the norm step is not simulatable
    /// exactly.
    pub certifying: bool,
    pub seed_p_real: f64,
    pub seed_p_sim: f64,
    pub real_outcomes: usize,
    pub sim_outcomes: usize,
}

/// Runs the protocol on `trials` session seeds and the simulator on `trials`
/// simulator seeds, and compares the output-term distributions.
pub fn privacy_test(
    name: &str,
    a: &TermVector,
    b: &TermVector,
    params: &ProtocolParams,
    mode: NormMode,
    trials: usize,
    seed: Seed,
) -> Result<PrivacyReport> {
    if trials == 0 {
        return Err(Error::ZeroTrials);
    }
    if mode == NormMode::Sketch {
        log::warn!("privacy test in sketch norm mode is not certifying");
    }
    let profile = LeakageProfile::of(&a.add(b)?, params.b)?;
    let mut real_seeds = Vec::with_capacity(trials);
    let mut sim_seeds = Vec::with_capacity(trials);
    let mut real_set = BTreeSet::new();
    let mut sim_set = BTreeSet::new();
    let tv = tv_distance(
        |t| {
            let out = run_pehh(a, b, params, mode, seed.derive("real", t as u64))?;
            real_seeds.push(out.aux_seeds.r2);
            let key = out.terms.canonical();
            real_set.insert(key.clone());
            Ok(key)
        },
        |t| {
            let out = simulate_pehh(&profile, params, seed.derive("sim", t as u64))?;
            sim_seeds.push(out.r2);
            let key = out.terms.canonical();
            sim_set.insert(key.clone());
            Ok(key)
        },
        trials,
    )?;
    let seed_p_real = seed_uniformity_p(&real_seeds);
    let seed_p_sim = seed_uniformity_p(&sim_seeds);
    Ok(PrivacyReport {
        instance: name.to_string(),
        trials,
        tv,
        pass: tv <= TV_THRESHOLD && seed_p_real >= SEED_P_FLOOR && seed_p_sim >= SEED_P_FLOOR,
        threshold: TV_THRESHOLD,
        certifying: mode == NormMode::Ideal,
        seed_p_real,
        seed_p_sim,
        real_outcomes: real_set.len(),
        sim_outcomes: sim_set.len(),
    })
}

/// TV distance between the real output distributions of two inputs.
pub fn independence_test(
    first: (&TermVector, &TermVector),
    second: (&TermVector, &TermVector),
    params: &ProtocolParams,
    trials: usize,
    seed: Seed,
) -> Result<f64> {
    tv_distance(
        |t| Ok(run_pehh(first.0, first.1, params, NormMode::Ideal, seed.derive("first", t as u64))?.terms.canonical()),
        |t| Ok(run_pehh(second.0, second.1, params, NormMode::Ideal, seed.derive("second", t as u64))?.terms.canonical()),
        trials,
    )
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(rename_all = "camelCase")]
pub struct NormBlindReport {
    pub trials: usize,
    pub tv_case1: f64,
    pub tv_case2: f64,
    pub max_tv: f64,
    /// True when the baseline is distinguishable (`max_tv ≥ 0.5`).
    pub fails: bool,
}

/// Compares real runs on two instances that share `c_opt` against the
/// norm-blind simulator.
pub fn norm_blind_test(
    case1: (&TermVector, &TermVector),
    case2: (&TermVector, &TermVector),
    params: &ProtocolParams,
    trials: usize,
    seed: Seed,
) -> Result<NormBlindReport> {
    let mut tvs = [0.0; 2];
    for (slot, (a, b)) in [case1, case2].into_iter().enumerate() {
        let c_opt = top_b(&a.add(b)?, params.b)?;
        tvs[slot] = tv_distance(
            |t| Ok(run_pehh(a, b, params, NormMode::Ideal, seed.derive("real", t as u64))?.terms.canonical()),
            |t| Ok(simulate_norm_blind(&c_opt, params, seed.derive("blind", t as u64))?.terms.canonical()),
            trials,
        )?;
    }
    let max_tv = tvs[0].max(tvs[1]);
    Ok(NormBlindReport {
        trials,
        tv_case1: tvs[0],
        tv_case2: tvs[1],
        max_tv,
        fails: max_tv >= BLIND_FAIL_TV,
    })
}

/// Random split of `c` into `a + b` with both in `[−m, m]`.
pub fn split_vector(c: &TermVector, m: i64, seed: &Seed) -> Result<(TermVector, TermVector)> {
    let mut rng = seed.rng();
    let mut a = Vec::with_capacity(c.len());
    let mut b = Vec::with_capacity(c.len());
    for (i, &v) in c.values().iter().enumerate() {
        if v.abs() > 2 * m {
            return Err(Error::ValueOutOfRange {
                position: i,
                value: v as i128,
                bound: 2 * m as i128,
            });
        }
        let x = rng.random_range((v - m).max(-m)..=(v + m).min(m));
        a.push(x);
        b.push(v - x);
    }
    Ok((TermVector(a), TermVector(b)))
}

/// Small noise plus up to 12 planted entries of magnitude in `[M/4, M]`,
/// split between the parties.
pub fn gen_planted_instance(n: usize, m: i64, seed: &Seed) -> Result<(TermVector, TermVector)> {
    if n == 0 || m < 4 {
        return Err(Error::InvalidParams(format!("need N ≥ 1 and M ≥ 4, got N = {n}, M = {m}")));
    }
    let mut rng = seed.rng();
    let noise = [1i64, 3, 10][rng.random_range(0..3)].min(m / 4);
    let mut c: Vec<i64> = (0..n).map(|_| rng.random_range(-2 * noise..=2 * noise)).collect();
    for _ in 0..rng.random_range(0..=12) {
        let i = rng.random_range(0..n);
        let v = rng.random_range(m / 4..=m);
        c[i] = if rng.random_bool(0.5) { v } else { -v };
    }
    split_vector(&TermVector(c), m, &seed.derive("split", 0))
}

/// Set-disjointness inputs: `{0,1}` vectors with `N/4` ones each, disjoint
/// supports or exactly one common index.
pub fn gen_disjointness_instance(n: usize, intersecting: bool, seed: &Seed) -> Result<(TermVector, TermVector)> {
    if n == 0 || n % 4 != 0 {
        return Err(Error::InvalidParams(format!("N = {n} must be a positive multiple of 4")));
    }
    let q = n / 4;
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed.rng());
    let mut a = vec![0; n];
    let mut b = vec![0; n];
    for &i in &perm[..q] {
        a[i] = 1;
    }
    let b_support = if intersecting {
        let mut s = vec![perm[0]];
        s.extend_from_slice(&perm[q..2 * q - 1]);
        s
    } else {
        perm[q..2 * q].to_vec()
    };
    for i in b_support {
        b[i] = 1;
    }
    Ok((TermVector(a), TermVector(b)))
}

/// Instances with equal `c_opt` (for `B = 1`) but very different norms:
/// `c` holds `2N`, then `N/2 − 1` copies of `1` (case 1) or `N` (case 2),
/// randomly permuted, split randomly into `a + b` within `[−m, m]`.
pub fn gen_leakage_instance(n: usize, case: u8, m: i64, seed: &Seed) -> Result<(TermVector, TermVector)> {
    if n < 4 || n % 2 != 0 {
        return Err(Error::InvalidParams(format!("N = {n} must be even and at least 4")));
    }
    if m < 2 * n as i64 {
        return Err(Error::InvalidParams(format!("M = {m} must be at least 2N = {}", 2 * n)));
    }
    let filler = match case {
        1 => 1,
        2 => n as i64,
        other => return Err(Error::InvalidParams(format!("case must be 1 or 2, got {other}"))),
    };
    let mut base = vec![0i64; n];
    base[0] = 2 * n as i64;
    for v in &mut base[1..n / 2] {
        *v = filler;
    }
    let mut perm: Vec<usize> = (0..n).collect();
    perm.shuffle(&mut seed.derive("perm", 0).rng());
    let mut c = vec![0i64; n];
    for (i, &p) in perm.iter().enumerate() {
        c[p] = base[i];
    }
    split_vector(&TermVector(c), m, &seed.derive("split", 0))
}

/// Permutes the entries of `c` that are strictly smaller than its `B`-th
/// largest term among their own positions. The result has the same leakage
/// profile as `c`.
pub fn permute_tail(c: &TermVector, b: usize, seed: &Seed) -> Result<TermVector> {
    let order = decreasing_rearrangement(c);
    if b == 0 || b > c.len() {
        return Err(Error::InvalidParams(format!("B = {b} must lie in [1, {}]", c.len())));
    }
    let cutoff = c.term(order[b - 1]).magnitude();
    let movable: Vec<usize> = (0..c.len()).filter(|&i| c.term(i).magnitude() < cutoff).collect();
    let mut values: Vec<i64> = movable.iter().map(|&i| c.values()[i]).collect();
    values.shuffle(&mut seed.rng());
    let mut out = c.clone();
    for (&i, v) in movable.iter().zip(values) {
        out.0[i] = v;
    }
    Ok(out)
}

/// A named instance with its parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct PrivacyInstance {
    pub name: String,
    pub a: TermVector,
    pub b: TermVector,
    pub params: ProtocolParams,
}

const SUITE_N: usize = 256;
const SUITE_K: u32 = 10;

fn instance(name: &str, c: Vec<i64>, m: i64, b: usize, eps: Rational, seed: &Seed) -> Result<PrivacyInstance> {
    let params = ProtocolParams::new(c.len(), m, b, SUITE_K, eps)?;
    let (a, b) = split_vector(&TermVector(c), m, &seed.derive(name, 0))?;
    Ok(PrivacyInstance {
        name: name.to_string(),
        a,
        b,
        params,
    })
}

/// Threshold-boundary instance: `c₀ = 100` plus 183 entries of `10`, `B = 1`,
/// `ε = 1`. Here `ŝ²` straddles `2·c₀²` so the output is a fair coin.
pub fn boundary_instance(seed: &Seed) -> Result<PrivacyInstance> {
    let mut c = vec![0i64; SUITE_N];
    c[0] = 100;
    for v in &mut c[1..184] {
        *v = 10;
    }
    instance("boundary", c, 100, 1, Rational::from_integer(1), seed)
}

/// The five-instance privacy suite at `N = 256`.
pub fn standard_suite(seed: &Seed) -> Result<Vec<PrivacyInstance>> {
    let n = SUITE_N;
    let mut heavy = vec![0i64; n];
    heavy[..4].copy_from_slice(&[100, 2, 1, 1]);

    let flat = vec![2i64; n];

    let mut rng = seed.derive("suite-multi", 0).rng();
    let mut multi: Vec<i64> = (0..n).map(|_| rng.random_range(-3..=3)).collect();
    for (slot, v) in [(3usize, 90i64), (77, -70), (140, 45), (201, 30)] {
        multi[slot] = v;
    }

    let mut sparse = vec![0i64; n];
    sparse[10] = 40;
    sparse[20] = -25;
    sparse[30] = 12;

    Ok(vec![
        instance("single-heavy", heavy, 100, 1, Rational::from_integer(1), seed)?,
        instance("flat", flat, 2, 1, Rational::from_integer(1), seed)?,
        boundary_instance(seed)?,
        instance("multi", multi, 90, 4, Rational::new(1, 2), seed)?,
        instance("sparse", sparse, 40, 4, Rational::from_integer(1), seed)?,
    ])
}

/// Three pairs of distinct inputs with identical leakage profiles.
pub fn matched_profile_pairs(seed: &Seed) -> Result<Vec<(PrivacyInstance, PrivacyInstance)>> {
    let mut pairs = Vec::new();
    for inst in [boundary_instance(seed)?, standard_suite(seed)?.swap_remove(3)] {
        let c = inst.a.add(&inst.b)?;
        let moved = permute_tail(&c, inst.params.b, &seed.derive("tail", pairs.len() as u64))?;
        let (a, b) = split_vector(&moved, inst.params.m, &seed.derive("tail-split", pairs.len() as u64))?;
        let twin = PrivacyInstance {
            name: format!("{}-permuted", inst.name),
            a,
            b,
            params: inst.params.clone(),
        };
        pairs.push((inst, twin));
    }
    // same c, different splits between Alice and Bob
    let inst = boundary_instance(&seed.derive("resplit", 0))?;
    let c = inst.a.add(&inst.b)?;
    let (a, b) = split_vector(&c, inst.params.m, &seed.derive("resplit", 1))?;
    let twin = PrivacyInstance {
        name: "boundary-resplit".into(),
        a,
        b,
        params: inst.params.clone(),
    };
    pairs.push((inst, twin));
    Ok(pairs)
}
