//! Acceptance suite: one PASS/FAIL line per criterion.
//!
//! Run with `cargo test -p hh2pc-core --test acceptance`. Pass criterion
//! numbers as arguments to run a subset, e.g. `-- 3 4`.

use std::collections::BTreeSet;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use hh2pc_core::extensions::{hadamard_scaled, run_basis_hh, run_taxicab, taxicab_epsilon, Basis};
use hh2pc_core::model::{decreasing_rearrangement, residual, top_b, ProtocolParams, Rational, TermVector};
use hh2pc_core::mpc::{pss, reconstruct, share, Transcript};
use hh2pc_core::norm::{estimate_norm, estimate_norm_sketch, within_band, NormMode};
use hh2pc_core::privacy::{
    gen_leakage_instance, independence_test, matched_profile_pairs, norm_blind_test, privacy_test, standard_suite,
    DEFAULT_TRIALS, TV_THRESHOLD,
};
use hh2pc_core::protocol::{run_pehh, run_pehh_with_error, PehhOutput};
use hh2pc_core::qualified::{is_prefix, is_significant_set, qualified_set};
use hh2pc_core::sketch::{gen_matrix, sketch};
use hh2pc_core::{Result, Seed};
use rand::Rng;

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: String) -> Result<Outcome> {
    Ok(Outcome { pass, detail })
}

fn rat(n: i64, d: i64) -> Rational {
    Rational::new(n, d)
}

/// `lhs ≤ (1+ε)·rhs`, exactly.
fn within_factor(lhs: i128, eps: &Rational, rhs: i128) -> bool {
    let (n, d) = (*eps.numer() as i128, *eps.denom() as i128);
    lhs * d <= (d + n) * rhs
}

/// Noise plus a handful of planted heavy entries, split into `a + b`.
fn random_instance(n: usize, m: i64, seed: &Seed) -> (TermVector, TermVector) {
    let mut rng = seed.rng();
    let noise = [1i64, 3, 10][rng.random_range(0..3)];
    let mut a: Vec<i64> = (0..n).map(|_| rng.random_range(-noise..=noise)).collect();
    let mut b: Vec<i64> = (0..n).map(|_| rng.random_range(-noise..=noise)).collect();
    for _ in 0..rng.random_range(0..=12) {
        let i = rng.random_range(0..n);
        let v = rng.random_range(m / 4..=m) * if rng.random_bool(0.5) { 1 } else { -1 };
        a[i] = v / 2;
        b[i] = v - v / 2;
    }
    (TermVector(a), TermVector(b))
}

fn criteria_1_and_2() -> Result<(Outcome, Outcome)> {
    let params = ProtocolParams::new(1024, 100, 8, 20, rat(1, 2))?;
    let prefix_theta = params.recovery_theta();
    let runs = 200;
    let (mut approx_ok, mut prefix_ok) = (0, 0);
    let start = Instant::now();
    for r in 0..runs {
        let (a, b) = random_instance(params.n, params.m, &Seed::from_u64(r).derive("instance", 0));
        let out = run_pehh(&a, &b, &params, NormMode::Ideal, Seed::from_u64(r).derive("session", 0))?;
        let c = a.add(&b)?;
        let err = residual(&c, &out.terms)?.l2_norm_squared();
        let opt = residual(&c, &top_b(&c, params.b)?)?.l2_norm_squared();
        if within_factor(err, &params.epsilon, opt) {
            approx_ok += 1;
        }
        let q = qualified_set(&c, params.b, &prefix_theta).index_set();
        if is_prefix(&out.terms.index_set(), &q, &c) {
            prefix_ok += 1;
        }
    }
    let elapsed = start.elapsed();
    let one = Outcome {
        pass: approx_ok * 100 >= runs * 99 && elapsed < Duration::from_secs(120),
        detail: format!("{approx_ok}/{runs} runs within (1+ε)·opt, {:.1}s (limit 120s)", elapsed.as_secs_f64()),
    };
    let two = Outcome {
        pass: prefix_ok == runs,
        detail: format!("{prefix_ok}/{runs} outputs are prefixes of Q_{{B,ε/(B(1+ε)²)}}"),
    };
    Ok((one, two))
}

/// Visits every vector in `[-3, 3]^n`.
fn for_each_small_vector(n: usize, mut f: impl FnMut(&TermVector)) {
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

/// Qualified set straight from the definitions: the longest prefix (by a
/// locally computed sort) of length at most `ell` that is a significant set
/// and contains no zero entries.
fn qualified_by_definition(c: &TermVector, ell: usize, theta: &Rational) -> BTreeSet<usize> {
    let mut order: Vec<usize> = (0..c.len()).collect();
    order.sort_by_key(|&i| std::cmp::Reverse((c.values()[i].unsigned_abs(), i)));
    let mut best = BTreeSet::new();
    for m in 0..=ell.min(c.len()) {
        let cand: BTreeSet<usize> = order[..m].iter().copied().collect();
        let all: BTreeSet<usize> = (0..c.len()).collect();
        if is_prefix(&cand, &all, c) && is_significant_set(c, &cand, theta) {
            best = cand;
        } else {
            break;
        }
    }
    best
}

fn criterion_3() -> Result<Outcome> {
    let thetas = [rat(1, 4), rat(1, 2), rat(19, 20)];
    let (mut cases, mut agree, mut monotone, mut quality, mut quality_cases) = (0u64, 0u64, true, true, 0u64);
    for n in 1..=5 {
        for_each_small_vector(n, |c| {
            let order = decreasing_rearrangement(c);
            for ell in 0..=3 {
                let sets: Vec<BTreeSet<usize>> =
                    thetas.iter().map(|th| qualified_set(c, ell, th).index_set()).collect();
                for (th, q) in thetas.iter().zip(&sets) {
                    cases += 1;
                    if *q == qualified_by_definition(c, ell, th) {
                        agree += 1;
                    }
                }
                for w in sets.windows(2) {
                    monotone &= w[1].is_subset(&w[0]);
                }
                // θ = ε/(ℓ(1+ε)) ⇔ ε = θℓ/(1 − θℓ)
                if ell == 0 || ell > n {
                    continue;
                }
                let total = c.l2_norm_squared();
                let opt: i128 = total - order[..ell].iter().map(|&i| c.term(i).squared()).sum::<i128>();
                for (th, q) in thetas.iter().zip(&sets) {
                    let tl = *th * Rational::from_integer(ell as i64);
                    if tl >= Rational::from_integer(1) {
                        continue;
                    }
                    let eps = tl / (Rational::from_integer(1) - tl);
                    let err: i128 = total - q.iter().map(|&i| c.term(i).squared()).sum::<i128>();
                    quality_cases += 1;
                    quality &= within_factor(err, &eps, opt);
                }
            }
        });
    }
    outcome(
        agree == cases && monotone && quality,
        format!(
            "{agree}/{cases} agree with the definition checker; monotonicity {}; quality {} over {quality_cases} cases",
            if monotone { "holds" } else { "VIOLATED" },
            if quality { "holds" } else { "VIOLATED" },
        ),
    )
}

fn criterion_4() -> Result<Outcome> {
    let epsilons = [rat(1, 10), rat(1, 2), rat(1, 1), rat(3, 1)];
    let mut rng = Seed::from_u64(4).rng();
    let pairs = 10_000;
    let mut ideal_ok = 0;
    for s in 0..pairs {
        let e: i128 = match s % 4 {
            0 => rng.random_range(0..100),
            1 => rng.random_range(0..1 << 20),
            _ => rng.random_range(0..1i128 << 60),
        };
        let eps = epsilons[(s / 4) % 4];
        let est = estimate_norm(e, &eps, Seed::from_u64(s as u64).derive("ideal", 0))?;
        if within_band(&est, e, &eps) {
            ideal_ok += 1;
        }
    }
    let eps = rat(1, 2);
    let n = 64;
    let trials = 1000;
    let mut detail = format!("ideal {ideal_ok}/{pairs} in band");
    let mut pass = ideal_ok == pairs;
    for k in [4u32, 8] {
        let mut violations = 0;
        for s in 0..trials {
            let mut r = Seed::from_u64(s).derive("sketch-instance", k as u64).rng();
            let c = TermVector((0..n).map(|_| r.random_range(-20..=20)).collect());
            let reps = 2 * k as usize + 1;
            let m = gen_matrix(Seed::from_u64(s).derive("sketch", k as u64), reps, 256, n)?;
            let est = estimate_norm_sketch(&m, &sketch(&m, &c)?, &eps, k)?;
            if !within_band(&est, c.l2_norm_squared(), &eps) {
                violations += 1;
            }
        }
        let limit = 2f64.powi(-(k as i32)) + 0.01;
        let rate = violations as f64 / trials as f64;
        pass &= rate <= limit;
        detail.push_str(&format!("; sketch k={k}: {violations}/{trials} violations (limit {limit:.4})"));
    }
    outcome(pass, detail)
}

fn criterion_5() -> Result<Outcome> {
    let start = Instant::now();
    let mut pass = true;
    let mut parts = Vec::new();
    for inst in standard_suite(&Seed::from_u64(5))? {
        let r = privacy_test(
            &inst.name,
            &inst.a,
            &inst.b,
            &inst.params,
            NormMode::Ideal,
            DEFAULT_TRIALS,
            Seed::from_u64(55),
        )?;
        pass &= r.pass;
        parts.push(format!("{} tv={:.4} ({} outcomes)", r.instance, r.tv, r.real_outcomes));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    outcome(pass, format!("{}; {:.1}s (limit 300s)", parts.join(", "), elapsed.as_secs_f64()))
}

fn criterion_6() -> Result<Outcome> {
    let mut pass = true;
    let mut parts = Vec::new();
    for (x, y) in matched_profile_pairs(&Seed::from_u64(6))? {
        assert_ne!((&x.a, &x.b), (&y.a, &y.b));
        let tv = independence_test((&x.a, &x.b), (&y.a, &y.b), &x.params, DEFAULT_TRIALS, Seed::from_u64(66))?;
        pass &= tv <= TV_THRESHOLD;
        parts.push(format!("{} vs {}: tv={tv:.4}", x.name, y.name));
    }
    outcome(pass, parts.join(", "))
}

fn criterion_7() -> Result<Outcome> {
    let n = 64;
    let m = 2 * n as i64;
    let seed = Seed::from_u64(7);
    let (a1, b1) = gen_leakage_instance(n, 1, m, &seed)?;
    let (a2, b2) = gen_leakage_instance(n, 2, m, &seed)?;
    let params = ProtocolParams::new(n, m, 1, 10, rat(1, 1))?;
    let r = norm_blind_test((&a1, &b1), (&a2, &b2), &params, DEFAULT_TRIALS, Seed::from_u64(77))?;
    outcome(
        r.fails,
        format!("norm-blind baseline: tv case 1 = {:.4}, case 2 = {:.4}", r.tv_case1, r.tv_case2),
    )
}

fn criterion_8() -> Result<Outcome> {
    let mut costs = Vec::new();
    for log_n in [10u32, 13, 16] {
        let n = 1usize << log_n;
        let params = ProtocolParams::new(n, 10, 2, 4, rat(1, 1))?;
        let (a, b) = random_instance(n, params.m, &Seed::from_u64(8).derive("cost", log_n as u64));
        let out = run_pehh(&a, &b, &params, NormMode::Ideal, Seed::from_u64(88))?;
        costs.push((n, out.bytes, out.rounds));
    }
    let rounds_equal = costs.iter().all(|c| c.2 == costs[0].2);
    let ratio = costs[2].1 as f64 / costs[0].1 as f64;
    let detail = costs
        .iter()
        .map(|(n, bytes, rounds)| format!("N={n}: {bytes} B/{rounds} rounds"))
        .collect::<Vec<_>>()
        .join(", ");
    outcome(rounds_equal && ratio <= 8.0, format!("{detail}; bytes ratio {ratio:.2} (limit 8)"))
}

fn criterion_9() -> Result<Outcome> {
    let eps = rat(1, 1);
    let b = 2;
    let params = ProtocolParams::new(6, 3, b, 6, eps)?;
    let eps_e = taxicab_epsilon(&eps, b);
    let bound = 1.0 + (b as f64 * *eps_e.numer() as f64 / *eps_e.denom() as f64).sqrt();
    let (mut euclid_ok, mut l1_ok, mut total) = (0u64, 0u64, 0u64);
    let mut counter = 0u64;
    let mut failure = None;
    for_each_small_vector(6, |c| {
        counter += 1;
        let a = TermVector(c.values().iter().map(|v| v / 2).collect());
        let bb = TermVector(c.values().iter().zip(a.values()).map(|(v, x)| v - x).collect());
        let out = match run_taxicab(&a, &bb, &params, NormMode::Ideal, Seed::from_u64(counter)) {
            Ok(o) => o,
            Err(e) => {
                failure = Some(e);
                return;
            }
        };
        total += 1;
        let opt_rep = top_b(c, b).expect("B ≤ N");
        let r = residual(c, &out.terms).expect("indices in range");
        let ro = residual(c, &opt_rep).expect("indices in range");
        if within_factor(r.l2_norm_squared(), &eps_e, ro.l2_norm_squared()) {
            euclid_ok += 1;
            if r.l1_norm() as f64 <= bound * ro.l1_norm() as f64 {
                l1_ok += 1;
            }
        }
    });
    if let Some(e) = failure {
        return Err(e);
    }
    outcome(
        l1_ok == euclid_ok,
        format!("{l1_ok}/{euclid_ok} Euclidean-good runs meet the ℓ₁ bound (factor {bound}); {euclid_ok}/{total} Euclidean-good"),
    )
}

fn hadamard_row(n: usize, r: usize) -> Vec<i64> {
    (0..n).map(|i| if (i & r).count_ones() % 2 == 0 { 1 } else { -1 }).collect()
}

fn criterion_10() -> Result<Outcome> {
    let mut rng = Seed::from_u64(10).rng();
    let mut exact = true;
    for log_n in 0..=10 {
        let n = 1usize << log_n;
        for _ in 0..20 {
            let y: Vec<i64> = (0..n).map(|_| rng.random_range(-1000..=1000)).collect();
            let hy = hadamard_scaled(&y)?;
            let back: Vec<i64> = hadamard_scaled(&hy)?.iter().map(|v| v / n as i64).collect();
            exact &= back == y;
            exact &= TermVector(hy).l2_norm_squared() == n as i128 * TermVector(y).l2_norm_squared();
        }
    }
    let n = 64;
    let params = ProtocolParams::new(n, 100, 1, 10, rat(1, 2))?;
    let runs = 200;
    let mut hits = 0;
    for s in 0..runs {
        let row = rng.random_range(0..n);
        let c: Vec<i64> = hadamard_row(n, row).iter().map(|v| 50 * v).collect();
        let a: Vec<i64> = (0..n).map(|_| rng.random_range(-50..=50)).collect();
        let b: Vec<i64> = c.iter().zip(&a).map(|(x, y)| x - y).collect();
        let out = run_basis_hh(&TermVector(a), &TermVector(b), Basis::Hadamard, &params, NormMode::Ideal, Seed::from_u64(s))?;
        let expect = 50.0 * (n as f64).sqrt();
        if out.terms.len() == 1 && out.terms[0].0 == row && (out.terms[0].1 - expect).abs() < 1e-9 {
            hits += 1;
        }
    }
    outcome(
        exact && hits * 100 >= runs * 99,
        format!(
            "round trip and Parseval {}; {hits}/{runs} single-vector runs recovered",
            if exact { "exact" } else { "NOT exact" }
        ),
    )
}

const ALLOWED_TAGS: [&str; 6] = ["seed:R1", "seed:R2", "recover", "pss", "sort", "output-loop"];

/// Fails if the transcript carries anything but lengths, fixed tags and the
/// two public seeds, or if any canary value appears in its serialization.
fn transcript_is_clean(out: &PehhOutput, canaries: &[i64]) -> bool {
    let t: &Transcript = &out.transcript;
    let seeds = [out.aux_seeds.r1.to_hex(), out.aux_seeds.r2.to_hex()];
    let shape_ok = t.messages().iter().all(|m| {
        ALLOWED_TAGS.contains(&m.tag.as_str())
            && match &m.payload {
                None => true,
                Some(p) => seeds.contains(p),
            }
    });
    let text = t.to_json_lines().replace(&seeds[0], "").replace(&seeds[1], "");
    let leaked = canaries.iter().any(|v| {
        text.contains(&v.to_string()) || text.contains(&hex_le(*v))
    });
    shape_ok && !leaked
}

fn hex_le(v: i64) -> String {
    v.to_le_bytes().iter().map(|b| format!("{b:02x}")).collect()
}

fn criterion_11() -> Result<Outcome> {
    let mut share_ok = true;
    for x in -100i64..=100 {
        for s in 0..10u64 {
            let (a, b) = share(x, &Seed::from_u64(s).derive("share", x as u64))?;
            share_ok &= reconstruct(a, b) == x;
        }
    }
    let mut pss_ok = true;
    let mut t = Transcript::new();
    let mut rng = Seed::from_u64(11).rng();
    for v in 0..10u64 {
        let a = TermVector((0..8).map(|_| rng.random_range(-1000..=1000)).collect());
        let b = TermVector((0..8).map(|_| rng.random_range(-1000..=1000)).collect());
        for i in 0..8usize {
            let idx = share(i as i64, &Seed::from_u64(v).derive("idx", i as u64))?;
            let (x, y) = pss(&mut t, 4, &a, &b, idx, &Seed::from_u64(v).derive("pss", i as u64))?;
            pss_ok &= reconstruct(x, y) == a.values()[i] + b.values()[i];
        }
    }

    // distinctive input values that must never surface in a transcript
    let canaries = [98_765_431i64, -12_345_678, 55_555_557];
    let n = 16;
    let m = 100_000_000;
    let mut a = TermVector::zeros(n);
    let mut b = TermVector::zeros(n);
    a.0[3] = canaries[0];
    b.0[7] = canaries[1];
    a.0[11] = canaries[2];
    b.0[1] = 424_242;
    let all_canaries: Vec<i64> = canaries.iter().copied().chain([424_242]).collect();
    let params = ProtocolParams::new(n, m, 2, 6, rat(1, 2))?;
    let mut clean = 0;
    let mut checked = 0;
    let mut runs: Vec<PehhOutput> = Vec::new();
    for s in 0..5u64 {
        runs.push(run_pehh(&a, &b, &params, NormMode::Ideal, Seed::from_u64(s))?);
        runs.push(run_pehh(&a, &b, &params, NormMode::Sketch, Seed::from_u64(s))?);
        runs.push(run_pehh_with_error(&a, &b, &params, NormMode::Ideal, Seed::from_u64(s))?);
        runs.push(run_taxicab(&a, &b, &params, NormMode::Ideal, Seed::from_u64(s))?);
    }
    let hp = ProtocolParams::new(n, 1000, 2, 6, rat(1, 2))?;
    let ha = TermVector((0..n).map(|i| if i == 5 { 987 } else { 0 }).collect());
    let hb = TermVector((0..n).map(|i| if i == 9 { -654 } else { 0 }).collect());
    for s in 0..5u64 {
        runs.push(run_basis_hh(&ha, &hb, Basis::Hadamard, &hp, NormMode::Ideal, Seed::from_u64(s))?.inner);
    }
    for out in &runs {
        checked += 1;
        if transcript_is_clean(out, &all_canaries) {
            clean += 1;
        }
    }
    outcome(
        share_ok && pss_ok && clean == checked,
        format!(
            "share/reconstruct {}; PSS {}; {clean}/{checked} transcripts free of secrets",
            if share_ok { "exact" } else { "MISMATCH" },
            if pss_ok { "exact" } else { "MISMATCH" },
        ),
    )
}

fn main() -> ExitCode {
    let selected: BTreeSet<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let wants = |id: u32| selected.is_empty() || selected.contains(&id);
    let names = [
        "approximation guarantee",
        "prefix property",
        "qualified-set oracle",
        "norm contract",
        "privacy (simulatability)",
        "input independence",
        "norm-leakage necessity",
        "cost contracts",
        "taxicab",
        "basis extension",
        "MPC runtime",
    ];
    let mut results: Vec<(u32, Result<Outcome>)> = Vec::new();
    if wants(1) || wants(2) {
        match criteria_1_and_2() {
            Ok((one, two)) => {
                results.push((1, Ok(one)));
                results.push((2, Ok(two)));
            }
            Err(e) => {
                results.push((1, Err(e.clone())));
                results.push((2, Err(e)));
            }
        }
    }
    let rest: [(u32, fn() -> Result<Outcome>); 9] = [
        (3, criterion_3),
        (4, criterion_4),
        (5, criterion_5),
        (6, criterion_6),
        (7, criterion_7),
        (8, criterion_8),
        (9, criterion_9),
        (10, criterion_10),
        (11, criterion_11),
    ];
    for (id, f) in rest {
        if wants(id) {
            let start = Instant::now();
            let r = f();
            eprintln!("  (criterion {id} took {:.1}s)", start.elapsed().as_secs_f64());
            results.push((id, r));
        }
    }
    let mut all = true;
    for (id, r) in results.into_iter().filter(|(id, _)| wants(*id)) {
        let name = names[id as usize - 1];
        match r {
            Ok(o) => {
                all &= o.pass;
                println!("criterion {id:>2} {} {name}: {}", if o.pass { "PASS" } else { "FAIL" }, o.detail);
            }
            Err(e) => {
                all = false;
                println!("criterion {id:>2} FAIL {name}: error: {e}");
            }
        }
    }
    if all {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
