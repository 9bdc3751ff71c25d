//! Set discrepancy, the switching game through counters, and a deterministic
//! Johnson–Lindenstrauss transform, all driven by fooled distributions.

use std::sync::Arc;

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::automata::{canonical_counter, marginals, AutomatonSystem, LazyMarginals, CanonicalFamily, CounterSpec, FooledDistribution, State, SteppingTable};
use crate::error::{Error, Result};
use crate::fooling::{fool, reduce_marginals, shifted, FoolOutcome, ReduceOptions, ReduceReport};
use crate::gbgame::SignMatrix;
use crate::oracles::dp_abs_expectation;
use crate::rat::{qi, to_f64, Q};

/// Largest number of support strings any scan visits.
pub const SCAN_CAP: u64 = 1 << 24;

fn horizon(n: usize) -> usize {
    n.max(1).next_power_of_two()
}

#[derive(Clone, Debug)]
pub struct DiscrepancyInstance {
    pub a: Vec<Vec<i8>>,
}

impl DiscrepancyInstance {
    pub fn new(a: Vec<Vec<i8>>) -> Result<Self> {
        let n = a.first().map_or(0, |r| r.len());
        if a.is_empty() || n == 0 || a.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("coefficient matrix must be rectangular and nonempty".into()));
        }
        if a.iter().flatten().any(|v| !(-1..=1).contains(v)) {
            return Err(Error::Invalid("coefficients must lie in {-1, 0, 1}".into()));
        }
        Ok(DiscrepancyInstance { a })
    }
    pub fn m(&self) -> usize {
        self.a.len()
    }
    pub fn n(&self) -> usize {
        self.a[0].len()
    }
    /// √(2n·ln(4m)).
    pub fn lambda(&self) -> f64 {
        (2.0 * self.n() as f64 * (4.0 * self.m() as f64).ln()).sqrt()
    }
}

/// l_j(x) = Σ_t a_{j,t} x_t.
pub fn discrepancies(a: &[Vec<i8>], x: &[i8]) -> Vec<i64> {
    a.iter().map(|r| r.iter().zip(x).map(|(&c, &s)| c as i64 * s as i64).sum()).collect()
}

#[derive(Clone, Debug)]
pub struct SetDiscOutcome {
    pub x: Vec<i8>,
    pub discrepancies: Vec<i64>,
    pub max_abs: i64,
    pub lambda: f64,
    pub eps: Q,
    pub support: u128,
    pub scanned: u64,
    pub reports: Vec<ReduceReport>,
}

/// Counters l_j(x) on [−R, R] over n driving bits, bit 1 ↦ +1.
fn counter_system(rows: &[Vec<i8>], range: i64) -> Result<AutomatonSystem> {
    let n = rows[0].len();
    let rows: Arc<Vec<Vec<i8>>> = Arc::new(rows.to_vec());
    AutomatonSystem::counter(
        rows.len(),
        -range,
        range,
        horizon(n),
        Arc::new(move |j, t, r| if t < n { rows[j][t] as i64 * (2 * r as i64 - 1) } else { 0 }),
    )
}

fn bits_to_signs(bits: &[u8], n: usize) -> Vec<i8> {
    bits[..n].iter().map(|&b| 2 * b as i8 - 1).collect()
}

pub fn set_discrepancy(inst: &DiscrepancyInstance, eps: Option<Q>, opts: &ReduceOptions) -> Result<SetDiscOutcome> {
    let (m, n) = (inst.m(), inst.n());
    let lambda = inst.lambda();
    let range = lambda.ceil() as i64 + 1;
    let sys = counter_system(&inst.a, range)?;
    let fam = canonical_counter(&sys)?;
    let eps = eps.unwrap_or_else(|| Q::new(BigInt::one(), BigInt::from(2 * m)));
    let FoolOutcome { dist, reports, .. } = fool(&sys, 0, sys.horizon, &eps, &fam, opts)?;
    let spec = sys.counter.clone().expect("counter system");
    let fail = spec.fail() as State;
    let start = vec![sys.start() as State; m];
    // Under the fooled distribution each counter leaves [−λ, λ] with probability at most
    // 2e^{−λ²/2n} + ε/2 = 1/(2m) + 1/(4m), so some string keeps all m inside.
    let mut scanned = 0u64;
    let mut found = None;
    dist.scan(m, &start, &|st| st.contains(&fail), &mut |s, st| {
        scanned += 1;
        if st.iter().all(|&v| (spec.value(v as usize).unwrap().abs() as f64) <= lambda) {
            found = Some(s.to_vec());
            return false;
        }
        scanned < SCAN_CAP
    });
    let bits = found.ok_or_else(|| Error::Certification(format!("no string in the fooled support (size {}) meets λ = {:.3}", dist.size(), lambda)))?;
    let x = bits_to_signs(&bits, n);
    let discrepancies = discrepancies(&inst.a, &x);
    let max_abs = discrepancies.iter().map(|v| v.abs()).max().unwrap_or(0);
    if max_abs as f64 > lambda {
        return Err(Error::Certification("returned signs violate λ".into()));
    }
    Ok(SetDiscOutcome { x, discrepancies, max_abs, lambda, eps, support: dist.size(), scanned, reports })
}

#[derive(Clone, Debug)]
pub struct GbAutomataOutcome {
    pub x: Vec<i8>,
    pub y: Vec<i8>,
    pub value: i64,
    /// Σ_i E_uniform|R_i|.
    pub expected_abs: Q,
    /// Σ_i E_uniform|R_i| − n·ε·n.
    pub certified: Q,
    pub eps: Q,
    pub support: u128,
    pub reports: Vec<ReduceReport>,
}

/// ε = 1/⌈√n⌉.
pub fn gb_default_eps(n: usize) -> Q {
    let mut r = 1usize;
    while r * r < n {
        r += 1;
    }
    Q::new(BigInt::one(), BigInt::from(r))
}

pub fn gb_automata(a: &SignMatrix, eps: Option<Q>, opts: &ReduceOptions) -> Result<GbAutomataOutcome> {
    let n = a.n;
    let sys = counter_system(&a.a, n as i64)?;
    let fam = canonical_counter(&sys)?;
    let eps = eps.unwrap_or_else(|| gb_default_eps(n));
    let FoolOutcome { dist, reports, .. } = fool(&sys, 0, sys.horizon, &eps, &fam, opts)?;
    if dist.size() > SCAN_CAP as u128 {
        return Err(Error::SizeGuard(format!("fooled support of size {} exceeds the scan cap", dist.size())));
    }
    let spec = sys.counter.clone().expect("counter system");
    let start = vec![sys.start() as State; n];
    let mut best: Option<(i64, Vec<u8>)> = None;
    dist.scan(n, &start, &|_| false, &mut |s, st| {
        let v: i64 = st.iter().map(|&x| spec.value(x as usize).unwrap().abs()).sum();
        if best.as_ref().map_or(true, |(bv, _)| v > *bv) {
            best = Some((v, s.to_vec()));
        }
        true
    });
    let (_, bits) = best.expect("nonempty support");
    let y = bits_to_signs(&bits, n);
    let r = crate::gbgame::row_sums(a, &y);
    let x: Vec<i8> = r.iter().map(|&v| if v >= 0 { 1 } else { -1 }).collect();
    let value: i64 = r.iter().map(|v| v.abs()).sum();
    let mut expected_abs = Q::zero();
    for row in &a.a {
        expected_abs += dp_abs_expectation(&row.iter().map(|&v| v as i64).collect::<Vec<_>>())?;
    }
    let certified = &expected_abs - qi((n * n) as i64) * &eps;
    if qi(value) < certified {
        return Err(Error::Certification("switching value below its certified bound".into()));
    }
    Ok(GbAutomataOutcome { x, y, value, expected_abs, certified, eps, support: dist.size(), reports })
}

#[derive(Clone, Debug)]
pub struct JlInstance {
    pub u: Vec<Vec<Q>>,
    pub delta: Q,
    pub k: usize,
    /// Stage-1 window radius in natural units of the row sums.
    pub rho_win: i64,
}

impl JlInstance {
    /// Defaults: k = smallest power of two ≥ 8δ^{-2}·ln(max(n, 2)), ρ_win = ⌈4√(ln(2nk))⌉.
    pub fn new(u: Vec<Vec<Q>>, delta: Q, k: Option<usize>, rho_win: Option<i64>) -> Result<Self> {
        let n = u.len();
        let d = u.first().map_or(0, |r| r.len());
        if n == 0 || d == 0 || u.iter().any(|r| r.len() != d) {
            return Err(Error::Invalid("vectors must be nonempty and of equal dimension".into()));
        }
        if !delta.is_positive() || delta >= Q::one() {
            return Err(Error::Invalid("δ must lie in (0, 1)".into()));
        }
        let tol = Q::new(BigInt::one(), BigInt::one() << 20usize);
        for v in &u {
            let nn: Q = v.iter().map(|x| x * x).sum();
            if (nn - Q::one()).abs() > tol {
                return Err(Error::Invalid("vectors must have unit norm (within 2^-20)".into()));
            }
        }
        let df = to_f64(&delta);
        let k = k.unwrap_or_else(|| (8.0 / (df * df) * (n.max(2) as f64).ln()).ceil() as usize).max(1).next_power_of_two();
        let rho_win = rho_win.unwrap_or_else(|| (4.0 * ((2 * n * k) as f64).ln().sqrt()).ceil() as i64);
        if rho_win < 1 {
            return Err(Error::Invalid("ρ_win must be positive".into()));
        }
        Ok(JlInstance { u, delta, k, rho_win })
    }
    pub fn n(&self) -> usize {
        self.u.len()
    }
    pub fn d(&self) -> usize {
        self.u[0].len()
    }
    /// Quantization step x = δ²/(d·k).
    pub fn step(&self) -> Q {
        &self.delta * &self.delta / qi((self.d() * self.k) as i64)
    }
}

fn round_q(x: &Q) -> i64 {
    (x + Q::new(BigInt::one(), BigInt::from(2))).floor().to_integer().to_i64().expect("small quantized value")
}

#[derive(Clone, Debug)]
pub struct JlReport {
    pub k: usize,
    pub step: Q,
    pub certified: bool,
    /// ‖Lu‖²/k − 1 per vector, exact.
    pub distortions: Vec<Q>,
    pub max_distortion: Q,
    /// (1/k)·Σ ŝ_i² from the accumulators, per vector.
    pub quantized: Vec<Q>,
    pub stage1: Vec<ReduceReport>,
    pub stage2: Vec<ReduceReport>,
    pub support: u128,
    pub scanned: u64,
    pub diagnostic: String,
}

#[derive(Clone, Debug)]
pub struct JlOutcome {
    /// k × d matrix of ±1.
    pub l: Vec<Vec<i8>>,
    pub report: JlReport,
}

/// ‖Lu‖²/k − 1 in exact arithmetic.
pub fn distortion(l: &[Vec<i8>], u: &[Q]) -> Q {
    let k = l.len();
    let nn: Q = l
        .iter()
        .map(|row| {
            let s: Q = row.iter().zip(u).map(|(&a, x)| if a > 0 { x.clone() } else { -x.clone() }).sum();
            &s * &s
        })
        .sum();
    nn / qi(k as i64) - Q::one()
}

const STAGE2_PAIR_CAP: u128 = 1 << 26;

pub fn jl_transform(inst: &JlInstance, opts: &ReduceOptions) -> Result<JlOutcome> {
    let (n, d, k) = (inst.n(), inst.d(), inst.k);
    let x = inst.step();
    // stage 1: counters over the d driving bits of one row, in units of x
    let units: Vec<Vec<i64>> = inst.u.iter().map(|v| v.iter().map(|c| round_q(&(c / &x))).collect()).collect();
    let reach: i64 = units.iter().map(|r| r.iter().map(|v| v.abs()).sum::<i64>()).max().unwrap_or(0);
    let win_cap = (qi(inst.rho_win) / &x).ceil().to_integer().to_i64().unwrap_or(i64::MAX);
    let win = reach.min(win_cap).max(1);
    let uu = Arc::new(units.clone());
    let sys1 = AutomatonSystem::counter(
        n,
        -win,
        win,
        horizon(d),
        Arc::new(move |i, t, r| if t < d { uu[i][t] * (2 * r as i64 - 1) } else { 0 }),
    )?;
    let fam1 = canonical_counter(&sys1)?;
    let eps1 = Q::new(BigInt::one(), BigInt::from(n * k));
    let FoolOutcome { dist: d0, reports: stage1, .. } = fool(&sys1, 0, sys1.horizon, &eps1, &fam1, opts)?;
    let cap = opts.materialize_cap.max(1 << 16);
    if d0.size() > cap {
        return Err(Error::SizeGuard(format!("stage-1 support {} exceeds cap {}", d0.size(), cap)));
    }
    // only the row sums from the start state are needed, not full stepping tables
    let spec1 = sys1.counter.clone().expect("counter system");
    let start1 = sys1.start();
    let mut rows: Vec<(Vec<u8>, Vec<State>)> = Vec::with_capacity(d0.size() as usize);
    d0.scan(n, &vec![start1 as State; n], &|_| false, &mut |s, st| {
        rows.push((s.to_vec(), st.to_vec()));
        true
    });

    // stage 2: accumulators of ŝ² in units of δ²/k, FAIL above (1+2δ)k
    let unit2 = &inst.delta * &inst.delta / qi(k as i64);
    let top = ((Q::one() + qi(2) * &inst.delta) * qi(k as i64) / &unit2).floor().to_integer().to_i64().expect("accumulator range");
    let spec2 = CounterSpec { lo: 0, hi: top, max_step: Arc::new(|_, _| 0) };
    let fail2 = spec2.fail();
    let eta2 = fail2 + 1;
    // exact stage-2 marginals hold up to n·η² state pairs
    let pairs = (n as u128).saturating_mul((eta2 as u128).pow(2));
    if pairs > STAGE2_PAIR_CAP {
        return Err(Error::SizeGuard(format!("stage-2 marginals need {pairs} state pairs (cap {STAGE2_PAIR_CAP}); use a smaller k")));
    }
    let incs: Vec<Vec<Option<i64>>> = rows
        .iter()
        .map(|(_, ends)| {
            (0..n)
                .map(|i| {
                    spec1.value(ends[i] as usize).map(|s| {
                        let sq = qi(s * s) * &x * &x / &unit2;
                        round_q(&sq)
                    })
                })
                .collect()
        })
        .collect();
    let max_inc: i64 = incs.iter().flatten().map(|v| v.unwrap_or(top + 1)).max().unwrap_or(0);
    let spec2 = CounterSpec { max_step: Arc::new(move |_, _| max_inc), ..spec2 };
    let fam2 = CanonicalFamily::Counter { eta: eta2, spec: spec2.clone() };
    let items: Vec<(Vec<u8>, SteppingTable)> = rows
        .iter()
        .zip(&incs)
        .map(|((s, _), inc)| {
            let data = (0..n)
                .flat_map(|i| {
                    let spec2 = &spec2;
                    (0..eta2).map(move |st| match (spec2.value(st), inc[i]) {
                        (Some(v), Some(dv)) => spec2.state(v + dv) as State,
                        _ => fail2 as State,
                    })
                })
                .collect();
            (s.clone(), SteppingTable { t: 0, h: 1, eta: eta2, data })
        })
        .collect();
    let mut di = FooledDistribution::explicit(0, 1, items)?;
    // shifting only retimes the window, so the shifted copy shares these marginals
    let mut mi = LazyMarginals::ready(marginals(&di, n, eta2)?);
    let eps = Q::new(BigInt::one(), BigInt::from(n));
    let mut stage2 = Vec::new();
    let mut h = 1usize;
    while h < k {
        let e_i = &eps * qi(h as i64) / qi(k as i64);
        let (next, rep, next_m) = reduce_marginals(n, eta2, (&di, &mi), (&shifted(&di, h), &mi), &e_i, &fam2, opts)?;
        if rep.err > rep.eps {
            return Err(Error::Certification(format!("stage-2 reduce err {} exceeds {}", rep.err, rep.eps)));
        }
        stage2.push(rep);
        di = next;
        mi = next_m;
        h *= 2;
    }

    // scan for a matrix passing every vector exactly; keep the best worst case otherwise
    let two_delta = qi(2) * &inst.delta;
    let start2 = vec![0 as State; n];
    let mut best: Option<(Q, Vec<u8>, Vec<State>)> = None;
    let mut found: Option<(Vec<u8>, Vec<State>)> = None;
    let tb = horizon(d);
    let to_matrix = |bits: &[u8]| -> Vec<Vec<i8>> { (0..k).map(|r| bits_to_signs(&bits[r * tb..], d)).collect() };
    let mut scanned = 0u64;
    di.scan(n, &start2, &|st| st.iter().any(|&s| s as usize == fail2), &mut |s, st| {
        scanned += 1;
        let l = to_matrix(s);
        let worst = inst.u.iter().map(|v| distortion(&l, v).abs()).max().expect("n ≥ 1");
        if worst <= two_delta {
            found = Some((s.to_vec(), st.to_vec()));
            return false;
        }
        if best.as_ref().map_or(true, |(b, _, _)| worst < *b) {
            best = Some((worst, s.to_vec(), st.to_vec()));
        }
        scanned < SCAN_CAP
    });
    let certified = found.is_some();
    let (bits, states, diagnostic) = match (found, best) {
        (Some((s, st)), _) => (s, st, String::new()),
        (None, Some((w, s, st))) => (
            s,
            st,
            format!(
                "NOT-CERTIFIED: scanned {} of {} support strings; best worst-case distortion {} exceeds 2δ = {}",
                scanned,
                di.size(),
                crate::rat::fmt_q(&w),
                crate::rat::fmt_q(&two_delta)
            ),
        ),
        (None, None) => {
            // every branch reached FAIL: fall back to the first string in the support
            let mut first = None;
            di.scan(n, &start2, &|_| false, &mut |s, st| {
                first = Some((s.to_vec(), st.to_vec()));
                false
            });
            let (s, st) = first.expect("nonempty support");
            (s, st, format!("NOT-CERTIFIED: every support string drives an accumulator into FAIL (scanned {})", scanned))
        }
    };
    let l = to_matrix(&bits);
    let distortions: Vec<Q> = inst.u.iter().map(|v| distortion(&l, v)).collect();
    let max_distortion = distortions.iter().map(|v| v.abs()).max().expect("n ≥ 1");
    let quantized = states
        .iter()
        .map(|&s| match spec2.value(s as usize) {
            Some(v) => qi(v) * &unit2 / qi(k as i64),
            None => qi(-1),
        })
        .collect();
    let report = JlReport {
        k,
        step: x,
        certified,
        distortions,
        max_distortion,
        quantized,
        stage1,
        stage2,
        support: di.size(),
        scanned,
        diagnostic,
    };
    Ok(JlOutcome { l, report })
}

#[derive(Clone, Debug)]
pub struct JlDistancesOutcome {
    pub l: Vec<Vec<i8>>,
    pub report: JlReport,
    /// (a, b, ‖L(u_a − u_b)‖²/(k‖u_a − u_b‖²) − 1), exact.
    pub pairs: Vec<(usize, usize, Q)>,
    pub skipped: Vec<(usize, usize)>,
}

/// Dyadic approximation of 1/√x to 40 bits.
fn inv_sqrt_dyadic(x: &Q) -> Q {
    let f = 1.0 / to_f64(x).sqrt();
    let scale = (1u64 << 40) as f64;
    Q::new(BigInt::from((f * scale).round() as i64), BigInt::one() << 40usize)
}

pub fn jl_distances(u: &[Vec<Q>], delta: Q, k: Option<usize>, rho_win: Option<i64>, opts: &ReduceOptions) -> Result<JlDistancesOutcome> {
    let mut diffs = Vec::new();
    let mut idx = Vec::new();
    let mut skipped = Vec::new();
    for a in 0..u.len() {
        for b in a + 1..u.len() {
            let v: Vec<Q> = u[a].iter().zip(&u[b]).map(|(x, y)| x - y).collect();
            let nn: Q = v.iter().map(|c| c * c).sum();
            if nn.is_zero() {
                skipped.push((a, b));
                continue;
            }
            let s = inv_sqrt_dyadic(&nn);
            diffs.push(v.iter().map(|c| c * &s).collect::<Vec<Q>>());
            idx.push((a, b, v, nn));
        }
    }
    if diffs.is_empty() {
        return Err(Error::Invalid("no nonzero pairwise differences".into()));
    }
    let inst = JlInstance::new(diffs, delta, k, rho_win)?;
    let out = jl_transform(&inst, opts)?;
    let pairs = idx
        .into_iter()
        .map(|(a, b, v, nn)| {
            let kq = qi(out.l.len() as i64);
            let lv: Q = out
                .l
                .iter()
                .map(|row| {
                    let s: Q = row.iter().zip(&v).map(|(&c, x)| if c > 0 { x.clone() } else { -x.clone() }).sum();
                    &s * &s
                })
                .sum();
            (a, b, lv / (kq * nn) - Q::one())
        })
        .collect();
    Ok(JlDistancesOutcome { l: out.l, report: out.report, pairs, skipped })
}
