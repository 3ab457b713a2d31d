//! `hh2pc`: experiment driver for the private heavy-hitters protocol.

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde_json::{json, Value};

use hh2pc_core::extensions::{basis_params, run_basis_hh, run_taxicab, taxicab_params, to_basis, Basis};
use hh2pc_core::model::{parse_rational, residual, top_b, ProtocolParams, Representation, TermVector};
use hh2pc_core::norm::NormMode;
use hh2pc_core::privacy::{
    gen_disjointness_instance, gen_leakage_instance, gen_planted_instance, norm_blind_test, privacy_test,
    standard_suite, DEFAULT_TRIALS,
};
use hh2pc_core::protocol::{run_pehh, run_pehh_with_error};
use hh2pc_core::qualified::qualified_set;
use hh2pc_core::vector_io::{read_vector_file, to_lines};
use hh2pc_core::Seed;

/// Largest N for which reports include the brute-force error ratio.
const RATIO_LIMIT: usize = 1 << 16;

#[derive(Parser)]
#[command(name = "hh2pc", version, about = "Private two-party approximate heavy hitters")]
#[command(after_help = "Exit codes: 0 success, 1 guarantee violation (with --self-check), 2 usage error.\n\
Seeds: --seed takes a decimal u64 or 64 hex digits; HH2PC_SEED is used when --seed is absent.")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the protocol once on two input files.
    ///
    /// Output JSON: {terms: [[index, value]...], auxSeeds: {r1, r2, r2Parts},
    /// errorEstimate, bytes, rounds, errorRatio, params}. For --basis other than
    /// identity, terms hold orthonormal-basis coefficients.
    Run(RunArgs),
    /// Run the protocol on generated instances over a list of N values.
    ///
    /// CSV columns: n,trial,bytes,rounds,error_ratio. After the trials for each
    /// N comes an aggregate row with trial = "mean".
    Sweep(SweepArgs),
    /// Compare real runs against the simulator (total-variation distance).
    ///
    /// Output JSON: a list of {instance, trials, tv, pass, ...} reports, or the
    /// norm-blind report {trials, tvCase1, tvCase2, maxTv, fails} with
    /// --norm-blind.
    PrivacyTest(PrivacyArgs),
    /// Write a generated instance as two input files (or JSON {a, b}).
    GenInstance(GenArgs),
    /// Print the exact qualified index set of a + b.
    ///
    /// Output JSON: {indices, ell, theta}.
    QualifiedSet(QualifiedArgs),
}

#[derive(Args, Clone)]
struct SeedArg {
    /// Session seed: decimal u64 or 64 hex digits.
    #[arg(long, env = "HH2PC_SEED", default_value = "0")]
    seed: String,
}

#[derive(Args, Clone)]
struct ParamArgs {
    /// Vector length N.
    #[arg(long)]
    n: usize,
    /// Entry bound M: inputs lie in [-M, M].
    #[arg(long)]
    m: i64,
    /// Number of terms B.
    #[arg(long)]
    b: usize,
    /// Approximation parameter as "p/q".
    #[arg(long, default_value = "1/2")]
    epsilon: String,
    /// Security parameter k.
    #[arg(long, default_value_t = 20)]
    k: u32,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum Metric {
    L2,
    L1,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum ModeArg {
    Ideal,
    Sketch,
}

impl From<ModeArg> for NormMode {
    fn from(m: ModeArg) -> Self {
        match m {
            ModeArg::Ideal => NormMode::Ideal,
            ModeArg::Sketch => NormMode::Sketch,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum BasisArg {
    Identity,
    Hadamard,
    Fourier,
}

impl From<BasisArg> for Basis {
    fn from(b: BasisArg) -> Self {
        match b {
            BasisArg::Identity => Basis::Identity,
            BasisArg::Hadamard => Basis::Hadamard,
            BasisArg::Fourier => Basis::Fourier,
        }
    }
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum OutFormat {
    Json,
}

#[derive(Args)]
struct RunArgs {
    #[command(flatten)]
    params: ParamArgs,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_enum, default_value = "ideal")]
    norm_mode: ModeArg,
    #[arg(long, value_enum, default_value = "l2")]
    metric: Metric,
    #[arg(long, value_enum, default_value = "identity")]
    basis: BasisArg,
    /// Alice's input: one integer per line, or a JSON array.
    #[arg(long)]
    input_a: PathBuf,
    /// Bob's input, same format.
    #[arg(long)]
    input_b: PathBuf,
    /// Also output an estimate of the error norm.
    #[arg(long)]
    with_error: bool,
    /// Exit with status 1 if the approximation guarantee is violated.
    #[arg(long)]
    self_check: bool,
    /// Write the transcript as JSON lines to this file.
    #[arg(long)]
    transcript: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "json")]
    out: OutFormat,
    /// Write the report here instead of stdout.
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct SweepArgs {
    /// Comma-separated list of N values.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    ns: Vec<usize>,
    #[arg(long)]
    m: i64,
    #[arg(long)]
    b: usize,
    #[arg(long, default_value = "1/2")]
    epsilon: String,
    #[arg(long, default_value_t = 4)]
    k: u32,
    /// Trials per N.
    #[arg(long, default_value_t = 1)]
    trials: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_enum, default_value = "ideal")]
    norm_mode: ModeArg,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Args)]
struct PrivacyArgs {
    /// Trials per side.
    #[arg(long, default_value_t = DEFAULT_TRIALS)]
    trials: usize,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, value_enum, default_value = "ideal")]
    norm_mode: ModeArg,
    /// Test the norm-blind baseline on the two leakage instances instead.
    #[arg(long)]
    norm_blind: bool,
    /// N for the norm-blind leakage instances.
    #[arg(long, default_value_t = 64)]
    blind_n: usize,
    /// Test a custom instance (requires the parameter flags).
    #[arg(long, requires_all = ["input_b", "n", "m", "b"])]
    input_a: Option<PathBuf>,
    #[arg(long, requires = "input_a")]
    input_b: Option<PathBuf>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    m: Option<i64>,
    #[arg(long)]
    b: Option<usize>,
    #[arg(long, default_value = "1/1")]
    epsilon: String,
    #[arg(long, default_value_t = 10)]
    k: u32,
    /// Exit with status 1 if any test fails.
    #[arg(long)]
    self_check: bool,
    #[arg(long)]
    output: Option<PathBuf>,
}

#[derive(Copy, Clone, PartialEq, Eq, ValueEnum)]
enum InstanceKind {
    Disjoint,
    Intersecting,
    Leakage1,
    Leakage2,
    Planted,
}

#[derive(Args)]
struct GenArgs {
    #[arg(long, value_enum)]
    kind: InstanceKind,
    #[arg(long)]
    n: usize,
    /// Entry bound (leakage and planted instances).
    #[arg(long, default_value_t = 0)]
    m: i64,
    #[command(flatten)]
    seed: SeedArg,
    #[arg(long, requires = "out_b")]
    out_a: Option<PathBuf>,
    #[arg(long, requires = "out_a")]
    out_b: Option<PathBuf>,
}

#[derive(Args)]
struct QualifiedArgs {
    #[arg(long)]
    n: usize,
    #[arg(long)]
    m: i64,
    #[arg(long)]
    ell: usize,
    #[arg(long)]
    theta: String,
    #[arg(long)]
    input_a: PathBuf,
    /// Optional second summand.
    #[arg(long)]
    input_b: Option<PathBuf>,
}

enum Failure {
    Usage(anyhow::Error),
    Violation(String),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Usage(e)
    }
}

impl From<hh2pc_core::Error> for Failure {
    fn from(e: hh2pc_core::Error) -> Self {
        Failure::Usage(e.into())
    }
}

type CmdResult = Result<(), Failure>;

fn parse_seed(s: &str) -> anyhow::Result<Seed> {
    if let Ok(x) = s.parse::<u64>() {
        return Ok(Seed::from_u64(x));
    }
    s.parse::<Seed>().map_err(|e| anyhow!("bad seed {s:?}: {e}"))
}

fn build_params(p: &ParamArgs) -> anyhow::Result<ProtocolParams> {
    let eps = parse_rational(&p.epsilon)?;
    Ok(ProtocolParams::new(p.n, p.m, p.b, p.k, eps)?)
}

fn emit(text: &str, output: Option<&Path>) -> anyhow::Result<()> {
    match output {
        Some(path) => fs::write(path, text).with_context(|| format!("writing {}", path.display())),
        None => {
            let mut out = std::io::stdout().lock();
            out.write_all(text.as_bytes())?;
            Ok(())
        }
    }
}

fn pretty(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("json value serializes");
    s.push('\n');
    s
}

/// `err/opt` of a representation against the exact top-B optimum, under the
/// squared ℓ₂ error or the ℓ₁ error.
fn error_ratio(c: &TermVector, rep: &Representation, b: usize, metric: Metric) -> hh2pc_core::Result<f64> {
    let err = residual(c, rep)?;
    let opt = residual(c, &top_b(c, b)?)?;
    let (e, o) = match metric {
        Metric::L2 => (err.l2_norm_squared(), opt.l2_norm_squared()),
        Metric::L1 => (err.l1_norm(), opt.l1_norm()),
    };
    Ok(match (e, o) {
        (0, 0) => 1.0,
        (_, 0) => f64::INFINITY,
        _ => e as f64 / o as f64,
    })
}

fn cmd_run(args: RunArgs) -> CmdResult {
    let params = build_params(&args.params)?;
    let seed = parse_seed(&args.seed.seed)?;
    let mode: NormMode = args.norm_mode.into();
    let basis: Basis = args.basis.into();
    let a = read_vector_file(&args.input_a, params.n, params.m)?;
    let b = read_vector_file(&args.input_b, params.n, params.m)?;
    if args.metric == Metric::L1 && basis != Basis::Identity {
        return Err(Failure::Usage(anyhow!("--metric l1 only supports --basis identity")));
    }
    if args.with_error && (args.metric == Metric::L1 || basis != Basis::Identity) {
        return Err(Failure::Usage(anyhow!("--with-error only supports --metric l2 --basis identity")));
    }

    let c = a.add(&b)?;
    let (report, ratio, inner_eps, transcript) = match basis {
        Basis::Identity => {
            let out = match (args.metric, args.with_error) {
                (Metric::L1, _) => run_taxicab(&a, &b, &params, mode, seed)?,
                (Metric::L2, true) => run_pehh_with_error(&a, &b, &params, mode, seed)?,
                (Metric::L2, false) => run_pehh(&a, &b, &params, mode, seed)?,
            };
            let ratio = if params.n <= RATIO_LIMIT {
                Some(error_ratio(&c, &out.terms, params.b, args.metric)?)
            } else {
                None
            };
            let inner_eps = match args.metric {
                Metric::L1 => taxicab_params(&params)?.epsilon,
                Metric::L2 => params.epsilon,
            };
            let mut v = serde_json::to_value(&out).map_err(anyhow::Error::from)?;
            v["metric"] = json!(if args.metric == Metric::L1 { "l1" } else { "l2" });
            (v, ratio, inner_eps, out.transcript.to_json_lines())
        }
        _ => {
            let out = run_basis_hh(&a, &b, basis, &params, mode, seed)?;
            let ratio = if params.n <= RATIO_LIMIT {
                let x = to_basis(&a, basis)?.add(&to_basis(&b, basis)?)?;
                Some(error_ratio(&x, &out.inner.terms, params.b, Metric::L2)?)
            } else {
                None
            };
            let inner_eps = basis_params(&params, basis)?.epsilon;
            let v = json!({
                "basis": out.basis,
                "terms": out.terms,
                "scale": out.scale,
                "auxSeeds": out.inner.aux_seeds,
                "errorEstimate": Value::Null,
                "bytes": out.inner.bytes,
                "rounds": out.inner.rounds,
                "metric": "l2",
            });
            (v, ratio, inner_eps, out.inner.transcript.to_json_lines())
        }
    };
    let mut report = report;
    report["errorRatio"] = json!(ratio);
    report["params"] = serde_json::to_value(&params).map_err(anyhow::Error::from)?;
    report["normMode"] = json!(mode);
    let _ = args.out;
    emit(&pretty(&report), args.output.as_deref())?;
    if let Some(path) = &args.transcript {
        fs::write(path, transcript).with_context(|| format!("writing {}", path.display()))?;
    }

    if args.self_check {
        let Some(r) = ratio else {
            return Err(Failure::Usage(anyhow!("--self-check needs N ≤ {RATIO_LIMIT}")));
        };
        // the l1 guarantee is (1+ε) on the ℓ₁ error; the l2 guarantee is (1+ε) on the squared error
        let eps = match args.metric {
            Metric::L1 => *params.epsilon.numer() as f64 / *params.epsilon.denom() as f64,
            Metric::L2 => *inner_eps.numer() as f64 / *inner_eps.denom() as f64,
        };
        if r > 1.0 + eps + 1e-12 {
            return Err(Failure::Violation(format!("error ratio {r} exceeds 1 + ε = {}", 1.0 + eps)));
        }
    }
    Ok(())
}

fn cmd_sweep(args: SweepArgs) -> CmdResult {
    if args.ns.is_empty() {
        return Err(Failure::Usage(anyhow!("--ns must list at least one N")));
    }
    if args.trials == 0 {
        return Err(Failure::Usage(anyhow!("--trials must be positive")));
    }
    let seed = parse_seed(&args.seed.seed)?;
    let eps = parse_rational(&args.epsilon)?;
    let mode: NormMode = args.norm_mode.into();
    let mut csv = String::from("n,trial,bytes,rounds,error_ratio\n");
    for &n in &args.ns {
        let params = ProtocolParams::new(n, args.m, args.b, args.k, eps)?;
        let (mut bytes_sum, mut rounds_sum, mut ratio_sum) = (0f64, 0f64, 0f64);
        for t in 0..args.trials {
            let inst_seed = seed.derive("sweep-instance", (n as u64) << 20 | t as u64);
            let (a, b) = gen_planted_instance(n, args.m, &inst_seed)?;
            let out = run_pehh(&a, &b, &params, mode, seed.derive("sweep-session", t as u64))?;
            let ratio = if n <= RATIO_LIMIT {
                error_ratio(&a.add(&b)?, &out.terms, args.b, Metric::L2)?
            } else {
                f64::NAN
            };
            bytes_sum += out.bytes as f64;
            rounds_sum += out.rounds as f64;
            ratio_sum += ratio;
            csv.push_str(&format!("{n},{t},{},{},{ratio}\n", out.bytes, out.rounds));
        }
        let k = args.trials as f64;
        csv.push_str(&format!("{n},mean,{},{},{}\n", bytes_sum / k, rounds_sum / k, ratio_sum / k));
    }
    emit(&csv, args.output.as_deref())?;
    Ok(())
}

fn cmd_privacy(args: PrivacyArgs) -> CmdResult {
    if args.trials == 0 {
        return Err(Failure::Usage(anyhow!("--trials must be positive")));
    }
    let seed = parse_seed(&args.seed.seed)?;
    let mode: NormMode = args.norm_mode.into();
    let (report, all_pass) = if args.norm_blind {
        let n = args.blind_n;
        let m = 2 * n as i64;
        let (a1, b1) = gen_leakage_instance(n, 1, m, &seed.derive("leakage", 0))?;
        let (a2, b2) = gen_leakage_instance(n, 2, m, &seed.derive("leakage", 0))?;
        let params = ProtocolParams::new(n, m, 1, args.k, parse_rational(&args.epsilon)?)?;
        let r = norm_blind_test((&a1, &b1), (&a2, &b2), &params, args.trials, seed)?;
        let pass = !r.fails;
        let mut v = serde_json::to_value(&r).map_err(anyhow::Error::from)?;
        v["instance"] = json!("norm-blind leakage pair");
        v["pass"] = json!(pass);
        (v, pass)
    } else if let Some(path_a) = &args.input_a {
        let path_b = args.input_b.as_ref().expect("clap enforces --input-b");
        let p = ParamArgs {
            n: args.n.expect("clap enforces --n"),
            m: args.m.expect("clap enforces --m"),
            b: args.b.expect("clap enforces --b"),
            epsilon: args.epsilon.clone(),
            k: args.k,
        };
        let params = build_params(&p)?;
        let a = read_vector_file(path_a, params.n, params.m)?;
        let b = read_vector_file(path_b, params.n, params.m)?;
        let r = privacy_test("custom", &a, &b, &params, mode, args.trials, seed)?;
        let pass = r.pass;
        (json!([r]), pass)
    } else {
        let mut reports = Vec::new();
        let mut pass = true;
        for inst in standard_suite(&seed.derive("suite", 0))? {
            let r = privacy_test(&inst.name, &inst.a, &inst.b, &inst.params, mode, args.trials, seed)?;
            pass &= r.pass;
            reports.push(r);
        }
        (serde_json::to_value(&reports).map_err(anyhow::Error::from)?, pass)
    };
    emit(&pretty(&report), args.output.as_deref())?;
    if args.self_check && !all_pass {
        return Err(Failure::Violation("privacy test failed".into()));
    }
    Ok(())
}

fn cmd_gen(args: GenArgs) -> CmdResult {
    let seed = parse_seed(&args.seed.seed)?;
    let (a, b) = match args.kind {
        InstanceKind::Disjoint => gen_disjointness_instance(args.n, false, &seed)?,
        InstanceKind::Intersecting => gen_disjointness_instance(args.n, true, &seed)?,
        InstanceKind::Leakage1 | InstanceKind::Leakage2 => {
            let case = if args.kind == InstanceKind::Leakage1 { 1 } else { 2 };
            let m = if args.m == 0 { 2 * args.n as i64 } else { args.m };
            gen_leakage_instance(args.n, case, m, &seed)?
        }
        InstanceKind::Planted => {
            if args.m == 0 {
                bail_usage("--m is required for planted instances")?;
            }
            gen_planted_instance(args.n, args.m, &seed)?
        }
    };
    match (&args.out_a, &args.out_b) {
        (Some(pa), Some(pb)) => {
            fs::write(pa, to_lines(&a)).with_context(|| format!("writing {}", pa.display()))?;
            fs::write(pb, to_lines(&b)).with_context(|| format!("writing {}", pb.display()))?;
        }
        _ => emit(&pretty(&json!({ "a": a, "b": b })), None)?,
    }
    Ok(())
}

fn bail_usage(msg: &str) -> Result<(), Failure> {
    Err(Failure::Usage(anyhow!("{msg}")))
}

fn cmd_qualified(args: QualifiedArgs) -> CmdResult {
    let theta = parse_rational(&args.theta)?;
    let mut c = read_vector_file(&args.input_a, args.n, args.m)?;
    if let Some(pb) = &args.input_b {
        c = c.add(&read_vector_file(pb, args.n, args.m)?)?;
    }
    let q = qualified_set(&c, args.ell, &theta);
    emit(&pretty(&serde_json::to_value(&q).map_err(anyhow::Error::from)?), None)?;
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(a),
        Command::Sweep(a) => cmd_sweep(a),
        Command::PrivacyTest(a) => cmd_privacy(a),
        Command::GenInstance(a) => cmd_gen(a),
        Command::QualifiedSet(a) => cmd_qualified(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Violation(msg)) => {
            eprintln!("hh2pc: guarantee violated: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Usage(e)) => {
            eprintln!("hh2pc: {e:#}");
            ExitCode::from(2)
        }
    }
}
