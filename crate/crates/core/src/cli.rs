//! Command-line front end: instance parsing, subcommands and result documents.

use std::ffi::OsString;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand, ValueEnum};
use num_traits::One;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::apps::{gb_automata, jl_distances, jl_transform, set_discrepancy, DiscrepancyInstance, JlInstance, JlReport};
use crate::automata::{canonical_counter, canonical_full, AutomatonSystem, CanonicalFamily, FooledDistribution};
use crate::bilinear::{reconstruct, wht_table, Junta};
use crate::codes::vandermonde_code;
use crate::ensembles::{eval_s_direct, eval_t, lattice_search, Ensemble};
use crate::error::Error;
use crate::fooling::{err_vs_uniform, fool, ReduceOptions, ReduceReport};
use crate::gbgame::{gb_solve, headline_ceil, scaled_bound_ceil, q_param, SignMatrix};
use crate::mis::{default_c, is_maximal_independent, mis, round_bound, Graph};
use crate::oracles::{dp_abs_expectation, exhaustive_expectation, gb_expected_sprime};
use crate::rat::{fmt_q, parse_rational, qi, to_f64, Q};

#[derive(Parser, Debug)]
#[command(name = "derand", version, about = "Deterministic derandomization by conditional expectations")]
struct Cli {
    /// Emit the structured result document instead of the summary.
    #[arg(long, global = true)]
    json: bool,
    /// Worker threads (results do not depend on it).
    #[arg(long, global = true)]
    threads: Option<usize>,
    #[command(subcommand)]
    cmd: Cmd,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Canon {
    Counter,
    Full,
}

#[derive(Clone, Copy, Debug, ValueEnum, PartialEq, Eq)]
enum Suite {
    Oracles,
    Engine,
    Fool,
    All,
}

#[derive(Subcommand, Debug)]
enum Cmd {
    /// Maximal independent set of an edge-list graph.
    Mis {
        graph: PathBuf,
        #[arg(long)]
        c: Option<String>,
    },
    /// Gale–Berlekamp switching game on a ±1 matrix.
    Gb {
        matrix: PathBuf,
        /// Solve through fooled counter automata instead of the fourth-moment estimator.
        #[arg(long)]
        automata: bool,
        #[arg(long)]
        eps: Option<String>,
    },
    /// Signs with small discrepancy for a {-1,0,1} matrix.
    Setdisc {
        matrix: PathBuf,
        #[arg(long)]
        eps: Option<String>,
    },
    /// Fooling distribution for a counter specification (a file or `builtin:pm`).
    Fool {
        spec: String,
        #[arg(long = "T")]
        horizon: usize,
        #[arg(long)]
        eps: String,
        #[arg(long, value_enum, default_value = "counter")]
        canonical: Canon,
        /// List at most this many support strings.
        #[arg(long, default_value_t = 256)]
        list: u128,
    },
    /// Deterministic Johnson–Lindenstrauss matrix for unit vectors.
    Jl {
        vectors: PathBuf,
        #[arg(long)]
        delta: String,
        #[arg(long)]
        k: Option<usize>,
        #[arg(long)]
        rho: Option<i64>,
        /// Embed normalized pairwise differences instead.
        #[arg(long)]
        distances: bool,
    },
    /// Re-run built-in certifications.
    Verify {
        #[arg(value_enum)]
        suite: Suite,
    },
}

#[derive(Serialize, Debug, Clone)]
pub struct Bound {
    pub name: String,
    pub value: String,
    pub approx: f64,
    pub provenance: &'static str,
    pub holds: bool,
}

#[derive(Serialize, Debug)]
pub struct RunResult {
    pub command: String,
    pub input_sha256: String,
    pub bounds: Vec<Bound>,
    pub solution: Value,
}

fn bound(name: &str, value: &Q, provenance: &'static str, holds: bool) -> Bound {
    Bound { name: name.into(), value: fmt_q(value), approx: to_f64(value), provenance, holds }
}

struct Failure {
    code: i32,
    msg: String,
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = match e {
            Error::Certification(_) => 3,
            Error::Invalid(_) => 2,
            _ => 1,
        };
        Failure { code, msg: e.to_string() }
    }
}

fn parse_err(msg: impl Into<String>) -> Failure {
    Failure { code: 2, msg: msg.into() }
}

fn read(path: &Path) -> Result<(String, String), Failure> {
    let bytes = std::fs::read(path).map_err(|e| parse_err(format!("{}: {}", path.display(), e)))?;
    let digest = hex::encode(Sha256::digest(&bytes));
    let text = String::from_utf8(bytes).map_err(|_| parse_err(format!("{}: not UTF-8", path.display())))?;
    Ok((text, digest))
}

fn content_lines(text: &str) -> impl Iterator<Item = &str> {
    text.lines().map(|l| l.split('#').next().unwrap_or("").trim()).filter(|l| !l.is_empty())
}

fn rat_arg(s: &str) -> Result<Q, Failure> {
    parse_rational(s).ok_or_else(|| parse_err(format!("not a rational: {}", s)))
}

/// "n m" header, then one 0-indexed "u v" edge per line.
pub fn parse_graph(text: &str) -> Result<Graph, String> {
    let mut lines = content_lines(text);
    let header: Vec<usize> = lines
        .next()
        .ok_or("empty graph file")?
        .split_whitespace()
        .map(|t| t.parse().map_err(|_| format!("bad header token {}", t)))
        .collect::<Result<_, _>>()?;
    if header.len() != 2 {
        return Err("header must be \"n m\"".into());
    }
    let (n, m) = (header[0], header[1]);
    let mut edges = Vec::with_capacity(m);
    for l in lines {
        let v: Vec<usize> = l.split_whitespace().map(|t| t.parse().map_err(|_| format!("bad edge token {}", t))).collect::<Result<_, _>>()?;
        if v.len() != 2 || v[0] >= n || v[1] >= n {
            return Err(format!("bad edge line: {}", l));
        }
        edges.push((v[0], v[1]));
    }
    if edges.len() != m {
        return Err(format!("header announces {} edges, found {}", m, edges.len()));
    }
    Graph::from_edges(n, &edges).map_err(|e| e.to_string())
}

/// Whitespace-separated integer rows with entries in {-1, 1} (or {-1, 0, 1}).
pub fn parse_matrix(text: &str, allow_zero: bool) -> Result<Vec<Vec<i8>>, String> {
    let rows: Vec<Vec<i8>> = content_lines(text)
        .map(|l| l.split_whitespace().map(|t| t.parse::<i8>().map_err(|_| format!("bad entry {}", t))).collect::<Result<_, _>>())
        .collect::<Result<_, _>>()?;
    let ok = |v: &i8| *v == 1 || *v == -1 || (allow_zero && *v == 0);
    if rows.is_empty() || rows.iter().flatten().any(|v| !ok(v)) {
        return Err("matrix entries out of range or matrix empty".into());
    }
    Ok(rows)
}

/// Rows of rationals written "p/q" or as finite decimals.
pub fn parse_vectors(text: &str) -> Result<Vec<Vec<Q>>, String> {
    content_lines(text)
        .map(|l| l.split_whitespace().map(|t| parse_rational(t).ok_or_else(|| format!("bad coordinate {}", t))).collect())
        .collect()
}

/// `window LO HI`, then one line per counter; token t of a line is the increment
/// at step t: `c` means −c on bit 0 and +c on bit 1, `a,b` gives both explicitly.
pub fn parse_counter_spec(text: &str, horizon: usize) -> Result<AutomatonSystem, String> {
    let mut lines = content_lines(text);
    let head: Vec<&str> = lines.next().ok_or("empty counter spec")?.split_whitespace().collect();
    if head.len() != 3 || head[0] != "window" {
        return Err("first line must be \"window LO HI\"".into());
    }
    let lo: i64 = head[1].parse().map_err(|_| "bad LO")?;
    let hi: i64 = head[2].parse().map_err(|_| "bad HI")?;
    let mut incs: Vec<Vec<(i64, i64)>> = Vec::new();
    for l in lines {
        let row = l
            .split_whitespace()
            .map(|t| match t.split_once(',') {
                Some((a, b)) => Ok((a.parse().map_err(|_| format!("bad increment {}", t))?, b.parse().map_err(|_| format!("bad increment {}", t))?)),
                None => t.parse::<i64>().map(|c| (-c, c)).map_err(|_| format!("bad increment {}", t)),
            })
            .collect::<Result<Vec<_>, String>>()?;
        incs.push(row);
    }
    if incs.is_empty() {
        return Err("no counters".into());
    }
    let incs = Arc::new(incs);
    AutomatonSystem::counter(
        incs.len(),
        lo,
        hi,
        horizon,
        Arc::new(move |i, t, r| incs[i].get(t).map_or(0, |&(a, b)| if r == 1 { b } else { a })),
    )
    .map_err(|e| e.to_string())
}

fn builtin_spec(name: &str, horizon: usize) -> Option<String> {
    match name {
        "pm" => Some(format!("window -{} {}\n{}\n", horizon, horizon, vec!["1"; horizon].join(" "))),
        _ => None,
    }
}

fn bits_str(s: &[u8]) -> String {
    s.iter().map(|b| if *b == 1 { '1' } else { '0' }).collect()
}

fn reports_json(reports: &[ReduceReport]) -> Value {
    Value::Array(
        reports
            .iter()
            .map(|r| {
                json!({
                    "t": r.t,
                    "h": r.h,
                    "eps": fmt_q(&r.eps),
                    "kind": format!("{:?}", r.kind),
                    "classes": r.classes,
                    "pairs": r.e.to_string(),
                    "size": r.size.to_string(),
                    "err": fmt_q(&r.err),
                    "err_within_eps": r.err <= r.eps,
                })
            })
            .collect(),
    )
}

fn signs(v: &[i8]) -> String {
    v.iter().map(|&s| if s > 0 { '+' } else { '-' }).collect()
}

fn cmd_mis(path: &Path, c: Option<&str>) -> Result<(RunResult, String), Failure> {
    let (text, digest) = read(path)?;
    let g = parse_graph(&text).map_err(parse_err)?;
    let c = match c {
        Some(s) => rat_arg(s)?,
        None => default_c(),
    };
    let out = mis(&g, &c)?;
    let ok = is_maximal_independent(&g, &out.set);
    let rounds_ok = out.rounds.iter().all(|r| r.estimator >= r.expected);
    let limit = round_bound(g.m);
    let bounds = vec![
        Bound { name: "rounds <= 20(1+log2(m+1))".into(), value: out.rounds.len().to_string(), approx: limit, provenance: "paper-headline", holds: (out.rounds.len() as f64) <= limit },
        Bound { name: "estimator >= expectation every round".into(), value: rounds_ok.to_string(), approx: 0.0, provenance: "engine-guarantee", holds: rounds_ok },
        Bound { name: "maximal independent".into(), value: ok.to_string(), approx: 0.0, provenance: "oracle", holds: ok },
    ];
    let solution = json!({
        "n": g.n,
        "m": g.m,
        "set": out.set,
        "rounds": out.rounds.iter().map(|r| json!({
            "n": r.n, "m": r.m, "c": fmt_q(&r.c), "estimator": fmt_q(&r.estimator),
            "expected": fmt_q(&r.expected), "h": r.h, "set_size": r.set_size,
        })).collect::<Vec<_>>(),
    });
    let human = format!("independent set of size {} in {} rounds (n={}, m={}); maximal: {}\n{:?}", out.set.len(), out.rounds.len(), g.n, g.m, ok, out.set);
    if !ok || !rounds_ok {
        return Err(Failure { code: 3, msg: "MIS certification failed".into() });
    }
    Ok((RunResult { command: "mis".into(), input_sha256: digest, bounds, solution }, human))
}

fn cmd_gb(path: &Path, automata: bool, eps: Option<&str>, opts: &ReduceOptions) -> Result<(RunResult, String), Failure> {
    let (text, digest) = read(path)?;
    let a = SignMatrix::new(parse_matrix(&text, false).map_err(parse_err)?).map_err(|e| parse_err(e.to_string()))?;
    let n = a.n;
    if automata {
        let eps = eps.map(rat_arg).transpose()?;
        let out = gb_automata(&a, eps, opts)?;
        let bounds = vec![
            bound("sum_i E|R_i|", &out.expected_abs, "oracle", true),
            bound("certified value lower bound", &out.certified, "engine-guarantee", qi(out.value) >= out.certified),
        ];
        let solution = json!({
            "n": n, "value": out.value, "x": signs(&out.x), "y": signs(&out.y),
            "eps": fmt_q(&out.eps), "support": out.support.to_string(), "reduce": reports_json(&out.reports),
        });
        let human = format!("value {} (certified ≥ {}, Σ E|R_i| = {:.4}); support {}", out.value, fmt_q(&out.certified), to_f64(&out.expected_abs), out.support);
        return Ok((RunResult { command: "gb --automata".into(), input_sha256: digest, bounds, solution }, human));
    }
    let out = gb_solve(&a)?;
    let oracle = gb_expected_sprime(n as u64);
    let qv = q_param(n);
    let cert = scaled_bound_ceil(&oracle, &qv);
    let head = headline_ceil(n);
    let bounds = vec![
        bound("E[S'] (closed form)", &oracle, "oracle", out.expected_s_prime == oracle),
        bound("ceil(3*sqrt(3)/(2*sqrt(q)) * E[S'])", &qi(cert), "engine-guarantee", out.value >= cert),
        bound("ceil(n^{3/2}/sqrt(3))", &qi(head), "paper-headline", out.value >= head),
    ];
    let holds = bounds.iter().all(|b| b.holds);
    let solution = json!({
        "n": n, "value": out.value, "x": signs(&out.x), "y": signs(&out.y),
        "s_prime": fmt_q(&out.s_prime), "expected_s_prime": fmt_q(&out.expected_s_prime),
    });
    let human = format!("value {} (engine bound {}, headline {}); S'(y) = {:.3} ≥ E[S'] = {:.3}", out.value, cert, head, to_f64(&out.s_prime), to_f64(&out.expected_s_prime));
    if !holds {
        return Err(Failure { code: 3, msg: format!("{}\nbound check failed", human) });
    }
    Ok((RunResult { command: "gb".into(), input_sha256: digest, bounds, solution }, human))
}

fn cmd_setdisc(path: &Path, eps: Option<&str>, opts: &ReduceOptions) -> Result<(RunResult, String), Failure> {
    let (text, digest) = read(path)?;
    let inst = DiscrepancyInstance::new(parse_matrix(&text, true).map_err(parse_err)?).map_err(|e| parse_err(e.to_string()))?;
    let eps = eps.map(rat_arg).transpose()?;
    let out = set_discrepancy(&inst, eps, opts)?;
    let bounds = vec![Bound {
        name: "max_j |l_j(x)| <= sqrt(2n ln(4m))".into(),
        value: out.max_abs.to_string(),
        approx: out.lambda,
        provenance: "engine-guarantee",
        holds: out.max_abs as f64 <= out.lambda,
    }];
    let solution = json!({
        "m": inst.m(), "n": inst.n(), "x": signs(&out.x), "discrepancies": out.discrepancies,
        "max_abs": out.max_abs, "eps": fmt_q(&out.eps), "support": out.support.to_string(),
        "scanned": out.scanned, "reduce": reports_json(&out.reports),
    });
    let human = format!("max |l_j(x)| = {} ≤ λ = {:.3}; x = {}; support {} (scanned {})", out.max_abs, out.lambda, signs(&out.x), out.support, out.scanned);
    Ok((RunResult { command: "setdisc".into(), input_sha256: digest, bounds, solution }, human))
}

fn cmd_fool(spec: &str, horizon: usize, eps: &str, canon: Canon, list: u128, opts: &ReduceOptions) -> Result<(RunResult, String), Failure> {
    let (text, digest) = match spec.strip_prefix("builtin:") {
        Some(name) => {
            let t = builtin_spec(name, horizon).ok_or_else(|| parse_err(format!("unknown builtin {}", name)))?;
            let d = hex::encode(Sha256::digest(t.as_bytes()));
            (t, d)
        }
        None => read(Path::new(spec))?,
    };
    let sys = parse_counter_spec(&text, horizon).map_err(parse_err)?;
    let eps = rat_arg(eps)?;
    let fam: CanonicalFamily = match canon {
        Canon::Counter => canonical_counter(&sys)?,
        Canon::Full => canonical_full(sys.eta),
    };
    let out = fool(&sys, 0, horizon, &eps, &fam, opts)?;
    let err = err_vs_uniform(&sys, &out.dist)?;
    let listing = listing(&out.dist, list);
    let bounds = vec![bound("err(D, uniform) <= eps", &err, "oracle", err <= eps)];
    let solution = json!({
        "m": sys.m, "eta": sys.eta, "T": horizon, "eps": fmt_q(&eps),
        "canonical": format!("{:?}", canon).to_lowercase(),
        "support": out.dist.size().to_string(), "lazy_product": out.dist.is_lazy(),
        "err": fmt_q(&err), "strings": listing, "reduce": reports_json(&out.reports),
    });
    let human = format!("support {} strings; err vs exact uniform marginals = {} ({:.6}) ≤ ε = {}", out.dist.size(), fmt_q(&err), to_f64(&err), fmt_q(&eps));
    if err > eps {
        return Err(Failure { code: 3, msg: format!("{}\nerr exceeds ε", human) });
    }
    Ok((RunResult { command: "fool".into(), input_sha256: digest, bounds, solution }, human))
}

fn listing(d: &FooledDistribution, cap: u128) -> Value {
    if d.size() > cap {
        return Value::Null;
    }
    let mut out = Vec::new();
    d.scan(1, &[0], &|_| false, &mut |s, _| {
        out.push(Value::String(bits_str(s)));
        true
    });
    Value::Array(out)
}

fn jl_report_json(r: &JlReport) -> Value {
    json!({
        "k": r.k, "step": fmt_q(&r.step), "certified": r.certified,
        "distortions": r.distortions.iter().map(fmt_q).collect::<Vec<_>>(),
        "max_distortion": fmt_q(&r.max_distortion),
        "quantized_sq_norms": r.quantized.iter().map(fmt_q).collect::<Vec<_>>(),
        "support": r.support.to_string(), "scanned": r.scanned, "diagnostic": r.diagnostic,
        "stage1": reports_json(&r.stage1), "stage2": reports_json(&r.stage2),
    })
}

fn cmd_jl(path: &Path, delta: &str, k: Option<usize>, rho: Option<i64>, distances: bool, opts: &ReduceOptions) -> Result<(RunResult, String), Failure> {
    let (text, digest) = read(path)?;
    let u = parse_vectors(&text).map_err(parse_err)?;
    let delta = rat_arg(delta)?;
    let two_delta = qi(2) * &delta;
    let (l, report, pairs) = if distances {
        let out = jl_distances(&u, delta, k, rho, opts)?;
        let pairs: Vec<Value> = out.pairs.iter().map(|(a, b, d)| json!({"a": a, "b": b, "distortion": fmt_q(d)})).collect();
        (out.l, out.report, Some((pairs, out.skipped)))
    } else {
        let inst = JlInstance::new(u, delta, k, rho).map_err(|e| parse_err(e.to_string()))?;
        let out = jl_transform(&inst, opts)?;
        (out.l, out.report, None)
    };
    let bounds = vec![bound("max |‖φ(u)‖² − 1| <= 2δ", &report.max_distortion, "engine-guarantee", report.max_distortion <= two_delta)];
    let mut solution = json!({
        "matrix": l.iter().map(|r| signs(r)).collect::<Vec<_>>(),
        "report": jl_report_json(&report),
    });
    if let Some((p, skipped)) = pairs {
        solution["pairs"] = Value::Array(p);
        solution["skipped"] = json!(skipped);
    }
    let human = format!(
        "k = {}; max |‖φ(u)‖²−1| = {:.6} (2δ = {}); {}",
        report.k,
        to_f64(&report.max_distortion),
        fmt_q(&two_delta),
        if report.certified { "CERTIFIED".to_string() } else { report.diagnostic.clone() }
    );
    let result = RunResult { command: if distances { "jl --distances" } else { "jl" }.into(), input_sha256: digest, bounds, solution };
    if !report.certified {
        return Err(Failure { code: 3, msg: format!("{}\n{}", human, serde_json::to_string_pretty(&result).unwrap_or_default()) });
    }
    Ok((result, human))
}

/// One named certification: (name, passed, detail).
type Check = (String, bool, String);

fn suite_oracles() -> Vec<Check> {
    let mut out = Vec::new();
    for n in 1..=4usize {
        let qv = q_param(n);
        let f = |y: &[u64]| {
            let r: i64 = y.iter().map(|&b| 1 - 2 * b as i64).sum();
            let r2 = qi(r * r);
            qi(n as i64) * (&r2 - &r2 * &r2 / &qv)
        };
        let ex = exhaustive_expectation(&f, n, 1, None).unwrap_or_else(|_| qi(-1));
        out.push((format!("gb E[S'] closed form n={}", n), ex == gb_expected_sprime(n as u64), fmt_q(&ex)));
    }
    let v = dp_abs_expectation(&[1, 1]).unwrap_or_else(|_| qi(-1));
    out.push(("E|y1+y2| = 1".into(), v == Q::one(), fmt_q(&v)));
    out
}

fn suite_engine() -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut out = Vec::new();
    let mut all = true;
    for _ in 0..20 {
        let n = rng.gen_range(2..=8usize);
        let side = |rng: &mut ChaCha8Rng| -> Vec<(Vec<u32>, Q)> {
            (0..rng.gen_range(1..=4))
                .map(|_| {
                    let k = rng.gen_range(0..=2.min(n));
                    let mut s: Vec<u32> = (0..k).map(|_| rng.gen_range(0..n as u32)).collect();
                    s.sort_unstable();
                    s.dedup();
                    (s, qi(rng.gen_range(-5..=5)))
                })
                .collect()
        };
        let e = Ensemble::new(side(&mut rng), side(&mut rng));
        let code = match vandermonde_code(n, 1, 2) {
            Ok(c) => c,
            Err(_) => {
                all = false;
                continue;
            }
        };
        match lattice_search(std::slice::from_ref(&e), &code, 3) {
            Ok(res) => all &= eval_s_direct(&e, &res.x) >= eval_t(&e),
            Err(_) => all = false,
        }
    }
    out.push(("lattice search S(x) >= T on 20 random ensembles".into(), all, String::new()));
    let mut ok = true;
    for _ in 0..20 {
        let w = rng.gen_range(0..=6u32);
        let table: Vec<Q> = (0..1usize << w).map(|_| qi(rng.gen_range(-9..=9))).collect();
        let j = Junta::new((0..w as usize).collect(), 1, table.clone()).expect("junta");
        ok &= reconstruct(&wht_table(&j)) == table;
    }
    out.push(("WHT roundtrip on 20 random juntas".into(), ok, String::new()));
    out
}

fn suite_fool() -> Vec<Check> {
    let mut out = Vec::new();
    let text = builtin_spec("pm", 8).expect("builtin");
    let res = parse_counter_spec(&text, 8).map_err(Error::Invalid).and_then(|sys| {
        let fam = canonical_counter(&sys)?;
        let d = fool(&sys, 0, 8, &Q::new(1.into(), 2.into()), &fam, &ReduceOptions::default())?;
        err_vs_uniform(&sys, &d.dist)
    });
    match res {
        Ok(e) => out.push(("fool counter T=8 eps=1/2".into(), e <= Q::new(1.into(), 2.into()), fmt_q(&e))),
        Err(e) => out.push(("fool counter T=8 eps=1/2".into(), false, e.to_string())),
    }
    out
}

fn cmd_verify(suite: Suite) -> Result<(RunResult, String), Failure> {
    let mut checks = Vec::new();
    if matches!(suite, Suite::Oracles | Suite::All) {
        checks.extend(suite_oracles());
    }
    if matches!(suite, Suite::Engine | Suite::All) {
        checks.extend(suite_engine());
    }
    if matches!(suite, Suite::Fool | Suite::All) {
        checks.extend(suite_fool());
    }
    let human = checks.iter().map(|(n, ok, d)| format!("{} {}{}", if *ok { "PASS" } else { "FAIL" }, n, if d.is_empty() { String::new() } else { format!(" ({})", d) })).collect::<Vec<_>>().join("\n");
    let all = checks.iter().all(|c| c.1);
    let solution = json!({
        "checks": checks.iter().map(|(n, ok, d)| json!({"name": n, "pass": ok, "detail": d})).collect::<Vec<_>>(),
    });
    let suite_name = format!("{:?}", suite).to_lowercase();
    let result = RunResult { command: format!("verify {}", suite_name), input_sha256: hex::encode(Sha256::digest(suite_name.as_bytes())), bounds: vec![], solution };
    if !all {
        return Err(Failure { code: 3, msg: human });
    }
    Ok((result, human))
}

/// Runs the command line and returns the process exit status.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new().num_threads(cli.threads.unwrap_or(0)).build() {
        Ok(p) => p,
        Err(e) => {
            eprintln!("thread pool: {}", e);
            return 1;
        }
    };
    let opts = ReduceOptions::default();
    let start = Instant::now();
    let res = pool.install(|| match &cli.cmd {
        Cmd::Mis { graph, c } => cmd_mis(graph, c.as_deref()),
        Cmd::Gb { matrix, automata, eps } => cmd_gb(matrix, *automata, eps.as_deref(), &opts),
        Cmd::Setdisc { matrix, eps } => cmd_setdisc(matrix, eps.as_deref(), &opts),
        Cmd::Fool { spec, horizon, eps, canonical, list } => cmd_fool(spec, *horizon, eps, *canonical, *list, &opts),
        Cmd::Jl { vectors, delta, k, rho, distances } => cmd_jl(vectors, delta, *k, *rho, *distances, &opts),
        Cmd::Verify { suite } => cmd_verify(*suite),
    });
    match res {
        Ok((result, human)) => {
            if cli.json {
                println!("{}", serde_json::to_string_pretty(&result).expect("serializable result"));
            } else {
                println!("{}", human);
                for b in &result.bounds {
                    println!("  [{}] {} = {} ({})", if b.holds { "ok" } else { "VIOLATED" }, b.name, b.value, b.provenance);
                }
                println!("wall time {:.3}s", start.elapsed().as_secs_f64());
            }
            0
        }
        Err(f) => {
            eprintln!("error: {}", f.msg);
            f.code
        }
    }
}
