//! Automaton systems driven by shared coin flips, stepping tables, the Err
//! distance, exact uniform marginals and canonical transition sets.
//!
//! States are `u16`. End-state distributions are kept as integer counts over a
//! common denominator so that products and comparisons stay exact.

use std::collections::BTreeMap;
use std::sync::{Arc, OnceLock};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::Zero;
use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::rat::Q;

pub type State = u16;
pub type StepFn = Arc<dyn Fn(usize, u8, usize, usize) -> usize + Send + Sync>;
pub type IncFn = Arc<dyn Fn(usize, usize, u8) -> i64 + Send + Sync>;
pub type BoundFn = Arc<dyn Fn(usize, usize) -> i64 + Send + Sync>;

/// Counter structure: state s < fail encodes value lo + s; leaving [lo, hi] goes to FAIL = hi − lo + 1.
#[derive(Clone)]
pub struct CounterSpec {
    pub lo: i64,
    pub hi: i64,
    /// Bound on |increment| of automaton i at step t.
    pub max_step: BoundFn,
}

impl CounterSpec {
    pub fn fail(&self) -> usize {
        (self.hi - self.lo + 1) as usize
    }
    pub fn value(&self, s: usize) -> Option<i64> {
        if s < self.fail() {
            Some(self.lo + s as i64)
        } else {
            None
        }
    }
    pub fn state(&self, v: i64) -> usize {
        if v < self.lo || v > self.hi {
            self.fail()
        } else {
            (v - self.lo) as usize
        }
    }
    /// Σ_{k<h} max_step(i, t+k).
    pub fn max_disp(&self, i: usize, t: usize, h: usize) -> i64 {
        (t..t + h).map(|k| (self.max_step)(i, k)).sum()
    }
    /// Interior states cannot reach FAIL within the window.
    pub fn interior(&self, i: usize, t: usize, h: usize, s: usize) -> bool {
        let d = self.max_disp(i, t, h);
        match self.value(s) {
            Some(v) => v - d >= self.lo && v + d <= self.hi,
            None => false,
        }
    }
}

impl std::fmt::Debug for CounterSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "CounterSpec[{}, {}]", self.lo, self.hi)
    }
}

#[derive(Clone)]
pub struct AutomatonSystem {
    pub m: usize,
    pub eta: usize,
    pub horizon: usize,
    pub f: StepFn,
    pub counter: Option<CounterSpec>,
}

impl std::fmt::Debug for AutomatonSystem {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "AutomatonSystem(m={}, eta={}, T={}, counter={:?})", self.m, self.eta, self.horizon, self.counter)
    }
}

impl AutomatonSystem {
    pub fn new(m: usize, eta: usize, horizon: usize, f: StepFn) -> Result<Self> {
        if m == 0 || eta == 0 || eta > State::MAX as usize {
            return Err(Error::Invalid("automaton system needs m ≥ 1 and 1 ≤ η ≤ 65535".into()));
        }
        if !horizon.is_power_of_two() {
            return Err(Error::Invalid("horizon T must be a power of two".into()));
        }
        Ok(AutomatonSystem { m, eta, horizon, f, counter: None })
    }

    /// Counters s ↦ s + inc(i, t, r) on [lo, hi] with an absorbing FAIL state.
    pub fn counter(m: usize, lo: i64, hi: i64, horizon: usize, inc: IncFn) -> Result<Self> {
        if lo > hi || lo > 0 || hi < 0 {
            return Err(Error::Invalid("counter window must contain 0".into()));
        }
        let inc2 = inc.clone();
        let spec = CounterSpec {
            lo,
            hi,
            max_step: Arc::new(move |i, t| inc2(i, t, 0).abs().max(inc2(i, t, 1).abs())),
        };
        let eta = spec.fail() + 1;
        let sp = spec.clone();
        let f: StepFn = Arc::new(move |i, r, s, t| match sp.value(s) {
            None => sp.fail(),
            Some(v) => sp.state(v + inc(i, t, r)),
        });
        let mut sys = AutomatonSystem::new(m, eta, horizon, f)?;
        sys.counter = Some(spec);
        Ok(sys)
    }

    /// State index of counter value 0 (the start state of a counter system is value 0).
    pub fn start(&self) -> usize {
        match &self.counter {
            Some(c) => c.state(0),
            None => 0,
        }
    }

    pub fn step(&self, i: usize, r: u8, s: usize, t: usize) -> usize {
        (self.f)(i, r, s, t)
    }
}

/// F^h(i, r, s, t) for every (i, s), flattened as `i * eta + s`.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct SteppingTable {
    pub t: usize,
    pub h: usize,
    pub eta: usize,
    pub data: Vec<State>,
}

impl SteppingTable {
    pub fn identity(m: usize, eta: usize, t: usize) -> Self {
        SteppingTable { t, h: 0, eta, data: (0..m).flat_map(|_| 0..eta as State).collect() }
    }
    pub fn get(&self, i: usize, s: usize) -> usize {
        self.data[i * self.eta + s] as usize
    }
    pub fn m(&self) -> usize {
        self.data.len() / self.eta
    }
}

pub fn step_table(sys: &AutomatonSystem, r: &[u8], t: usize) -> Result<SteppingTable> {
    if t + r.len() > sys.horizon {
        return Err(Error::Invalid("string runs past the horizon".into()));
    }
    let mut data = Vec::with_capacity(sys.m * sys.eta);
    for i in 0..sys.m {
        for s in 0..sys.eta {
            let mut st = s;
            for (k, &bit) in r.iter().enumerate() {
                st = sys.step(i, bit, st, t + k);
            }
            data.push(st as State);
        }
    }
    Ok(SteppingTable { t, h: r.len(), eta: sys.eta, data })
}

/// Table of running `a` then `b`.
pub fn compose_tables(a: &SteppingTable, b: &SteppingTable) -> Result<SteppingTable> {
    if a.t + a.h != b.t || a.eta != b.eta || a.data.len() != b.data.len() {
        return Err(Error::Invalid("stepping tables do not abut".into()));
    }
    let eta = a.eta;
    let data = a
        .data
        .iter()
        .enumerate()
        .map(|(k, &mid)| b.data[(k / eta) * eta + mid as usize])
        .collect();
    Ok(SteppingTable { t: a.t, h: a.h + b.h, eta, data })
}

/// A uniform multiset of driving strings over window [t, t+h), either explicit
/// (each string with its stepping table) or a lazy product of two halves.
#[derive(Clone, Debug)]
pub enum FooledDistribution {
    Explicit { t: usize, h: usize, items: Vec<(Vec<u8>, SteppingTable)> },
    Product(Box<FooledDistribution>, Box<FooledDistribution>),
}

impl FooledDistribution {
    pub fn explicit(t: usize, h: usize, items: Vec<(Vec<u8>, SteppingTable)>) -> Result<Self> {
        if items.is_empty() {
            return Err(Error::Invalid("distribution must be nonempty".into()));
        }
        if items.iter().any(|(_, tab)| tab.t != t || tab.h != h) {
            return Err(Error::Invalid("stepping table window mismatch".into()));
        }
        Ok(FooledDistribution::Explicit { t, h, items })
    }

    /// Uniform distribution over all strings of length h, explicitly.
    pub fn uniform(sys: &AutomatonSystem, t: usize, h: usize) -> Result<Self> {
        if h > 20 {
            return Err(Error::SizeGuard("explicit uniform distribution limited to h ≤ 20".into()));
        }
        let items = (0..1u32 << h)
            .into_par_iter()
            .map(|r| {
                let bits: Vec<u8> = (0..h).map(|k| ((r >> (h - 1 - k)) & 1) as u8).collect();
                let tab = step_table(sys, &bits, t)?;
                Ok((bits, tab))
            })
            .collect::<Result<Vec<_>>>()?;
        FooledDistribution::explicit(t, h, items)
    }

    pub fn product(a: FooledDistribution, b: FooledDistribution) -> Result<Self> {
        if a.t() + a.h() != b.t() {
            return Err(Error::Invalid("product halves do not abut".into()));
        }
        Ok(FooledDistribution::Product(Box::new(a), Box::new(b)))
    }

    pub fn t(&self) -> usize {
        match self {
            FooledDistribution::Explicit { t, .. } => *t,
            FooledDistribution::Product(a, _) => a.t(),
        }
    }

    pub fn h(&self) -> usize {
        match self {
            FooledDistribution::Explicit { h, .. } => *h,
            FooledDistribution::Product(a, b) => a.h() + b.h(),
        }
    }

    /// Support size, saturating at u128::MAX.
    pub fn size(&self) -> u128 {
        match self {
            FooledDistribution::Explicit { items, .. } => items.len() as u128,
            FooledDistribution::Product(a, b) => a.size().saturating_mul(b.size()),
        }
    }

    pub fn is_lazy(&self) -> bool {
        matches!(self, FooledDistribution::Product(..))
    }

    /// Explicit form with composed tables; product order is (first index, second index).
    pub fn materialize(&self, cap: u128) -> Result<Vec<(Vec<u8>, SteppingTable)>> {
        if self.size() > cap {
            return Err(Error::SizeGuard(format!("distribution of size {} exceeds cap {}", self.size(), cap)));
        }
        match self {
            FooledDistribution::Explicit { items, .. } => Ok(items.clone()),
            FooledDistribution::Product(a, b) => {
                let xa = a.materialize(cap)?;
                let xb = b.materialize(cap)?;
                let mut out = Vec::with_capacity(xa.len() * xb.len());
                for (sa, ta) in &xa {
                    for (sb, tb) in &xb {
                        let mut s = sa.clone();
                        s.extend_from_slice(sb);
                        out.push((s, compose_tables(ta, tb)?));
                    }
                }
                Ok(out)
            }
        }
    }

    pub fn to_explicit(&self, cap: u128) -> Result<FooledDistribution> {
        match self {
            FooledDistribution::Explicit { .. } => Ok(self.clone()),
            _ => FooledDistribution::explicit(self.t(), self.h(), self.materialize(cap)?),
        }
    }

    /// Leaf distributions in string order; the distribution is their product.
    pub fn segments(&self) -> Vec<&[(Vec<u8>, SteppingTable)]> {
        match self {
            FooledDistribution::Explicit { items, .. } => vec![items.as_slice()],
            FooledDistribution::Product(a, b) => {
                let mut v = a.segments();
                v.extend(b.segments());
                v
            }
        }
    }

    /// Length in driving bits of every string.
    pub fn h_bits(&self) -> usize {
        self.segments().iter().map(|s| s[0].0.len()).sum()
    }

    /// Visits support strings in lexicographic order (with multiplicity) together with
    /// the final states from `start`. Branches whose partial states satisfy `dead`
    /// are skipped; `visit` returns false to stop. Returns the number of visited strings.
    pub fn scan(
        &self,
        m: usize,
        start: &[State],
        dead: &dyn Fn(&[State]) -> bool,
        visit: &mut dyn FnMut(&[u8], &[State]) -> bool,
    ) -> u64 {
        let segs = self.segments();
        let order: Vec<Vec<usize>> = segs
            .iter()
            .map(|items| {
                let mut idx: Vec<usize> = (0..items.len()).collect();
                idx.sort_by(|&a, &b| items[a].0.cmp(&items[b].0));
                idx
            })
            .collect();
        let mut prefix = Vec::with_capacity(self.h_bits());
        let mut count = 0u64;
        scan_rec(&segs, &order, 0, m, start, &mut prefix, dead, visit, &mut count);
        count
    }

    /// Lexicographically first string whose final states satisfy `accept`.
    pub fn scan_first(
        &self,
        m: usize,
        start: &[State],
        dead: &dyn Fn(&[State]) -> bool,
        accept: &dyn Fn(&[u8], &[State]) -> bool,
    ) -> Option<(Vec<u8>, Vec<State>)> {
        let mut found = None;
        self.scan(m, start, dead, &mut |s, st| {
            if accept(s, st) {
                found = Some((s.to_vec(), st.to_vec()));
                false
            } else {
                true
            }
        });
        found
    }
}

#[allow(clippy::too_many_arguments)]
fn scan_rec(
    segs: &[&[(Vec<u8>, SteppingTable)]],
    order: &[Vec<usize>],
    depth: usize,
    m: usize,
    states: &[State],
    prefix: &mut Vec<u8>,
    dead: &dyn Fn(&[State]) -> bool,
    visit: &mut dyn FnMut(&[u8], &[State]) -> bool,
    count: &mut u64,
) -> bool {
    if depth == segs.len() {
        *count += 1;
        return visit(prefix, states);
    }
    let mut next = vec![0 as State; m];
    for &k in &order[depth] {
        let (s, tab) = &segs[depth][k];
        for (i, slot) in next.iter_mut().enumerate() {
            *slot = tab.get(i, states[i] as usize) as State;
        }
        if dead(&next) {
            continue;
        }
        let len = prefix.len();
        prefix.extend_from_slice(s);
        let go = scan_rec(segs, order, depth + 1, m, &next, prefix, dead, visit, count);
        prefix.truncate(len);
        if !go {
            return false;
        }
    }
    true
}

/// Exact end-state distributions: counts[i][s] = sorted (s', count), all over `denom`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Marginals {
    pub denom: u128,
    pub counts: Vec<Vec<Vec<(State, u128)>>>,
}

impl Marginals {
    pub fn prob(&self, i: usize, s: usize, s2: usize) -> Q {
        let c = self.counts[i][s].iter().find(|(x, _)| *x as usize == s2).map_or(0, |(_, c)| *c);
        Q::new(BigInt::from(c), BigInt::from(self.denom))
    }

    /// Divides counts and denominator by their common gcd.
    pub fn reduced(&self) -> Marginals {
        let g = self.counts.iter().flatten().flatten().fold(self.denom, |g, &(_, c)| g.gcd(&c));
        if g <= 1 {
            return self.clone();
        }
        let counts = self.counts.iter().map(|rows| rows.iter().map(|row| row.iter().map(|&(s, c)| (s, c / g)).collect()).collect()).collect();
        Marginals { denom: self.denom / g, counts }
    }

    pub fn compose(&self, other: &Marginals) -> Result<Marginals> {
        if self.denom.checked_mul(other.denom).is_none() {
            let (a, b) = (self.reduced(), other.reduced());
            if a.denom.checked_mul(b.denom).is_none() {
                return Err(Error::SizeGuard("marginal denominator exceeds 2^128".into()));
            }
            return a.compose(&b);
        }
        let counts = self
            .counts
            .par_iter()
            .zip(other.counts.par_iter())
            .map(|(rows_a, rows_b)| {
                let mut acc = vec![0u128; rows_b.len()];
                let mut touched: Vec<State> = Vec::new();
                rows_a
                    .iter()
                    .map(|row| {
                        for &(mid, ca) in row {
                            for &(end, cb) in &rows_b[mid as usize] {
                                if acc[end as usize] == 0 {
                                    touched.push(end);
                                }
                                acc[end as usize] += ca * cb;
                            }
                        }
                        touched.sort_unstable();
                        touched.drain(..).map(|end| (end, std::mem::take(&mut acc[end as usize]))).collect()
                    })
                    .collect()
            })
            .collect();
        Ok(Marginals { denom: self.denom * other.denom, counts })
    }
}

/// Marginals of a product tree, composed on first use and then cached.
#[derive(Debug)]
pub struct LazyMarginals {
    cell: OnceLock<Marginals>,
    parts: Option<(Arc<LazyMarginals>, Arc<LazyMarginals>)>,
}

impl LazyMarginals {
    pub fn ready(m: Marginals) -> Arc<Self> {
        Arc::new(LazyMarginals { cell: OnceLock::from(m), parts: None })
    }

    pub fn composed(a: Arc<Self>, b: Arc<Self>) -> Arc<Self> {
        Arc::new(LazyMarginals { cell: OnceLock::new(), parts: Some((a, b)) })
    }

    pub fn get(&self) -> Result<&Marginals> {
        if let Some(m) = self.cell.get() {
            return Ok(m);
        }
        let (a, b) = self.parts.as_ref().expect("unforced marginals have parts");
        let m = a.get()?.compose(b.get()?)?;
        Ok(self.cell.get_or_init(|| m))
    }
}

pub fn marginals(d: &FooledDistribution, m: usize, eta: usize) -> Result<Marginals> {
    match d {
        FooledDistribution::Explicit { items, .. } => {
            let counts = (0..m)
                .into_par_iter()
                .map(|i| {
                    if items.len() >= eta {
                        // many strings per state: one dense η×η pass is cheaper
                        let mut dense = vec![0u128; eta * eta];
                        for (_, tab) in items {
                            for s in 0..eta {
                                dense[s * eta + tab.get(i, s)] += 1;
                            }
                        }
                        return dense
                            .chunks(eta)
                            .map(|row| row.iter().enumerate().filter(|(_, &c)| c != 0).map(|(e, &c)| (e as State, c)).collect())
                            .collect();
                    }
                    let mut acc = vec![0u128; eta];
                    let mut touched: Vec<State> = Vec::new();
                    (0..eta)
                        .map(|s| {
                            for (_, tab) in items {
                                let end = tab.get(i, s);
                                if acc[end] == 0 {
                                    touched.push(end as State);
                                }
                                acc[end] += 1;
                            }
                            touched.sort_unstable();
                            touched.drain(..).map(|end| (end, std::mem::take(&mut acc[end as usize]))).collect()
                        })
                        .collect()
                })
                .collect();
            Ok(Marginals { denom: items.len() as u128, counts })
        }
        FooledDistribution::Product(a, b) => marginals(a, m, eta)?.compose(&marginals(b, m, eta)?),
    }
}

/// DP over time steps for r uniform on {0,1}^h.
pub fn uniform_marginals(sys: &AutomatonSystem, t: usize, h: usize) -> Result<Marginals> {
    if t + h > sys.horizon || h > 100 {
        return Err(Error::Invalid("window runs past the horizon".into()));
    }
    let counts = (0..sys.m)
        .into_par_iter()
        .map(|i| {
            (0..sys.eta)
                .map(|s| {
                    let mut cur: BTreeMap<State, u128> = BTreeMap::new();
                    cur.insert(s as State, 1);
                    for k in 0..h {
                        let mut next: BTreeMap<State, u128> = BTreeMap::new();
                        for (&st, &c) in &cur {
                            for r in 0..2u8 {
                                *next.entry(sys.step(i, r, st as usize, t + k) as State).or_insert(0) += c;
                            }
                        }
                        cur = next;
                    }
                    cur.into_iter().collect()
                })
                .collect()
        })
        .collect();
    Ok(Marginals { denom: 1u128 << h, counts })
}

/// max_{i,s} Σ_{s'} |P_a(s') − P_b(s')|, exact.
pub fn err_marginals(a: &Marginals, b: &Marginals) -> Q {
    if a.denom.checked_mul(b.denom).and_then(|d| d.checked_mul(2)).is_none() {
        return err_marginals_big(a, b);
    }
    let mut best_num: u128 = 0;
    for (ra, rb) in a.counts.iter().zip(&b.counts) {
        for (xa, xb) in ra.iter().zip(rb) {
            let mut tot: u128 = 0;
            let (mut i, mut j) = (0, 0);
            while i < xa.len() || j < xb.len() {
                let ka = xa.get(i).map(|x| x.0);
                let kb = xb.get(j).map(|x| x.0);
                let (ca, cb) = match (ka, kb) {
                    (Some(p), Some(q)) if p == q => {
                        i += 1;
                        j += 1;
                        (xa[i - 1].1, xb[j - 1].1)
                    }
                    (Some(p), Some(q)) if p < q => {
                        i += 1;
                        (xa[i - 1].1, 0)
                    }
                    (Some(_), None) => {
                        i += 1;
                        (xa[i - 1].1, 0)
                    }
                    _ => {
                        j += 1;
                        (0, xb[j - 1].1)
                    }
                };
                let (u, v) = (ca * b.denom, cb * a.denom);
                tot += u.abs_diff(v);
            }
            best_num = best_num.max(tot);
        }
    }
    Q::new(BigInt::from(best_num), BigInt::from(a.denom) * BigInt::from(b.denom))
}

fn err_marginals_big(a: &Marginals, b: &Marginals) -> Q {
    let (da, db) = (BigInt::from(a.denom), BigInt::from(b.denom));
    let mut best = BigInt::zero();
    for (ra, rb) in a.counts.iter().zip(&b.counts) {
        for (xa, xb) in ra.iter().zip(rb) {
            let mut diff: BTreeMap<State, BigInt> = BTreeMap::new();
            for &(s, c) in xa {
                *diff.entry(s).or_insert_with(BigInt::zero) += BigInt::from(c) * &db;
            }
            for &(s, c) in xb {
                *diff.entry(s).or_insert_with(BigInt::zero) -= BigInt::from(c) * &da;
            }
            let tot: BigInt = diff.into_values().map(|d| if d < BigInt::zero() { -d } else { d }).sum();
            if tot > best {
                best = tot;
            }
        }
    }
    Q::new(best, da * db)
}

pub fn err(d1: &FooledDistribution, d2: &FooledDistribution, m: usize, eta: usize) -> Result<Q> {
    if d1.t() != d2.t() || d1.h() != d2.h() {
        return Err(Error::Invalid("err needs distributions on the same window".into()));
    }
    Ok(err_marginals(&marginals(d1, m, eta)?, &marginals(d2, m, eta)?))
}

/// A canonical transition class: label plus a representative state pair whose
/// event {F^h(i, r, s1, t) = s2} equals the class event.
#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Class {
    pub label: Canon,
    pub rep: (State, State),
}

#[derive(Clone, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Canon {
    Pair(State, State),
    /// Counter displacement z, written (0, z) for z ≥ 0 and (−z, 0) otherwise.
    Disp(i64),
}

impl Canon {
    pub fn as_pair(&self) -> (i64, i64) {
        match self {
            Canon::Pair(a, b) => (*a as i64, *b as i64),
            Canon::Disp(z) if *z >= 0 => (0, *z),
            Canon::Disp(z) => (-*z, 0),
        }
    }
}

#[derive(Clone, Debug)]
pub enum CanonicalFamily {
    Full { eta: usize },
    Counter { eta: usize, spec: CounterSpec },
}

pub fn canonical_full(eta: usize) -> CanonicalFamily {
    CanonicalFamily::Full { eta }
}

pub fn canonical_counter(sys: &AutomatonSystem) -> Result<CanonicalFamily> {
    match &sys.counter {
        Some(spec) => Ok(CanonicalFamily::Counter { eta: sys.eta, spec: spec.clone() }),
        None => Err(Error::Invalid("canonical counter family needs a counter system".into())),
    }
}

impl CanonicalFamily {
    pub fn eta(&self) -> usize {
        match self {
            CanonicalFamily::Full { eta } | CanonicalFamily::Counter { eta, .. } => *eta,
        }
    }

    fn first_interior(spec: &CounterSpec, i: usize, t: usize, h: usize) -> Option<usize> {
        (0..spec.fail()).find(|&s| spec.interior(i, t, h, s))
    }

    /// (C2): a class equivalent to (s1, s2).
    pub fn canonical(&self, i: usize, t: usize, h: usize, s1: usize, s2: usize) -> Class {
        match self {
            CanonicalFamily::Full { .. } => Class { label: Canon::Pair(s1 as State, s2 as State), rep: (s1 as State, s2 as State) },
            CanonicalFamily::Counter { spec, .. } => {
                if spec.interior(i, t, h, s1) && s2 != spec.fail() {
                    let z = spec.value(s2).unwrap() - spec.value(s1).unwrap();
                    Self::disp_class(spec, i, t, h, z)
                } else {
                    Class { label: Canon::Pair(s1 as State, s2 as State), rep: (s1 as State, s2 as State) }
                }
            }
        }
    }

    fn disp_class(spec: &CounterSpec, i: usize, t: usize, h: usize, z: i64) -> Class {
        let base = Self::first_interior(spec, i, t, h).expect("interior state exists");
        let v = spec.value(base).unwrap() + z;
        let s2 = spec.state(v);
        Class { label: Canon::Disp(z), rep: (base as State, s2 as State) }
    }

    /// (C1): enumerate the canonical set for automaton i over [t, t+h).
    pub fn classes(&self, i: usize, t: usize, h: usize) -> Vec<Class> {
        let eta = self.eta();
        match self {
            CanonicalFamily::Full { .. } => (0..eta)
                .flat_map(|a| (0..eta).map(move |b| Class { label: Canon::Pair(a as State, b as State), rep: (a as State, b as State) }))
                .collect(),
            CanonicalFamily::Counter { spec, .. } => {
                let mut out = Vec::new();
                let interior: Vec<usize> = (0..eta).filter(|&s| spec.interior(i, t, h, s)).collect();
                if !interior.is_empty() {
                    let d = spec.max_disp(i, t, h).min(spec.hi - spec.lo);
                    for z in -d..=d {
                        out.push(Self::disp_class(spec, i, t, h, z));
                    }
                }
                for s1 in 0..eta {
                    if spec.interior(i, t, h, s1) {
                        out.push(Class { label: Canon::Pair(s1 as State, spec.fail() as State), rep: (s1 as State, spec.fail() as State) });
                    } else {
                        for s2 in 0..eta {
                            out.push(Class { label: Canon::Pair(s1 as State, s2 as State), rep: (s1 as State, s2 as State) });
                        }
                    }
                }
                out.sort();
                out.dedup();
                out
            }
        }
    }

    /// Canonical stepping table: the classes whose event holds for the string with full table `tab`.
    pub fn canonical_table(&self, tab: &SteppingTable, i: usize) -> Vec<Class> {
        self.classes(i, tab.t, tab.h)
            .into_iter()
            .filter(|c| tab.get(i, c.rep.0 as usize) == c.rep.1 as usize)
            .collect()
    }

    /// (C3): F^h(i, r, s, t) from a canonical stepping table.
    pub fn apply(&self, ctab: &[Class], i: usize, t: usize, h: usize, s: usize) -> Option<usize> {
        for c in ctab {
            match (&c.label, self) {
                (Canon::Pair(a, b), _) if *a as usize == s => return Some(*b as usize),
                (Canon::Disp(z), CanonicalFamily::Counter { spec, .. }) if spec.interior(i, t, h, s) => {
                    return Some(spec.state(spec.value(s).unwrap() + z));
                }
                _ => {}
            }
        }
        None
    }

    /// |C_{i,t,h}| without enumerating the classes (they are disjoint by construction).
    pub fn class_count_one(&self, i: usize, t: usize, h: usize) -> usize {
        match self {
            CanonicalFamily::Full { eta } => eta * eta,
            CanonicalFamily::Counter { eta, spec } => {
                let interior = (0..*eta).filter(|&s| spec.interior(i, t, h, s)).count();
                let disp = if interior > 0 { 2 * spec.max_disp(i, t, h).min(spec.hi - spec.lo) as usize + 1 } else { 0 };
                disp + interior + (eta - interior) * eta
            }
        }
    }

    /// Σ_i |C_{i,t,h}|.
    pub fn class_count(&self, m: usize, t: usize, h: usize) -> usize {
        (0..m).map(|i| self.class_count_one(i, t, h)).sum()
    }
}

/// Sparse-distribution view of one marginal row.
pub fn row_map(marg: &Marginals, i: usize, s: usize) -> BTreeMap<usize, Q> {
    marg.counts[i][s]
        .iter()
        .filter(|(_, c)| *c != 0)
        .map(|&(k, c)| (k as usize, Q::new(BigInt::from(c), BigInt::from(marg.denom))))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::oracles::{exhaustive_endstates, l1_distance};
    use crate::rat::{q, qi};

    fn pm_counter(range: i64, horizon: usize) -> AutomatonSystem {
        AutomatonSystem::counter(1, -range, range, horizon, Arc::new(|_, _, r| if r == 1 { 1 } else { -1 })).unwrap()
    }

    #[test]
    fn identity_and_single_step() {
        let sys = pm_counter(4, 8);
        let id = step_table(&sys, &[], 0).unwrap();
        assert_eq!(id, SteppingTable::identity(1, sys.eta, 0));
        let one = step_table(&sys, &[1], 0).unwrap();
        let s0 = sys.start();
        assert_eq!(one.get(0, s0), s0 + 1);
        assert_eq!(one.get(0, sys.eta - 1), sys.eta - 1);
    }

    #[test]
    fn composition_matches_concatenation() {
        let sys = pm_counter(3, 8);
        let r1 = [1, 0, 1];
        let r2 = [1, 1];
        let a = step_table(&sys, &r1, 0).unwrap();
        let b = step_table(&sys, &r2, 3).unwrap();
        let whole = step_table(&sys, &[1, 0, 1, 1, 1], 0).unwrap();
        assert_eq!(compose_tables(&a, &b).unwrap(), whole);
        assert!(compose_tables(&b, &a).is_err());
    }

    #[test]
    fn err_basics() {
        let sys = pm_counter(3, 4);
        let u = FooledDistribution::uniform(&sys, 0, 2).unwrap();
        assert_eq!(err(&u, &u, 1, sys.eta).unwrap(), qi(0));
        let a = FooledDistribution::explicit(0, 2, vec![(vec![1, 1], step_table(&sys, &[1, 1], 0).unwrap())]).unwrap();
        let b = FooledDistribution::explicit(0, 2, vec![(vec![0, 0], step_table(&sys, &[0, 0], 0).unwrap())]).unwrap();
        assert_eq!(err(&a, &b, 1, sys.eta).unwrap(), qi(2));
    }

    #[test]
    fn marginals_match_dp_and_exhaustive() {
        let sys = pm_counter(3, 8);
        let dp = uniform_marginals(&sys, 0, 2).unwrap();
        let s0 = sys.start();
        assert_eq!(dp.prob(0, s0, s0 - 2), q(1, 4));
        assert_eq!(dp.prob(0, s0, s0), q(1, 2));
        assert_eq!(dp.prob(0, s0, s0 + 2), q(1, 4));
        let u = FooledDistribution::uniform(&sys, 0, 6).unwrap();
        let dp6 = uniform_marginals(&sys, 0, 6).unwrap();
        assert_eq!(err_marginals(&marginals(&u, 1, sys.eta).unwrap(), &dp6), qi(0));
        let f = sys.f.clone();
        for s in 0..sys.eta {
            let ex = exhaustive_endstates(&|r, st, t| f(0, r, st, t), s, 0, 6).unwrap();
            assert_eq!(l1_distance(&ex, &row_map(&dp6, 0, s)), qi(0));
        }
    }

    #[test]
    fn lazy_product_marginals() {
        let sys = pm_counter(3, 8);
        let a = FooledDistribution::uniform(&sys, 0, 2).unwrap();
        let b = FooledDistribution::uniform(&sys, 2, 2).unwrap();
        let p = FooledDistribution::product(a, b).unwrap();
        assert_eq!(p.size(), 16);
        let full = FooledDistribution::uniform(&sys, 0, 4).unwrap();
        assert_eq!(err(&p, &full, 1, sys.eta).unwrap(), qi(0));
        assert_eq!(err(&p.to_explicit(1 << 10).unwrap(), &full, 1, sys.eta).unwrap(), qi(0));
    }

    #[test]
    fn class_count_matches_enumeration() {
        let sys = AutomatonSystem::counter(2, -3, 4, 8, Arc::new(|i, t, r| if r == 1 { 1 + (i + t) as i64 % 2 } else { -1 })).unwrap();
        let fam = canonical_counter(&sys).unwrap();
        for (t, h) in [(0, 1), (0, 2), (2, 2), (0, 4), (4, 4), (0, 8)] {
            for i in 0..2 {
                assert_eq!(fam.class_count_one(i, t, h), fam.classes(i, t, h).len());
            }
        }
        assert_eq!(canonical_full(3).class_count(2, 0, 1), 18);
    }

    #[test]
    fn counter_canonical_pairs() {
        let sys = pm_counter(20, 8);
        let fam = canonical_counter(&sys).unwrap();
        let st = |v: i64| sys.counter.as_ref().unwrap().state(v);
        assert_eq!(fam.canonical(0, 0, 2, st(5), st(7)).label.as_pair(), (0, 2));
        assert_eq!(fam.canonical(0, 0, 2, st(7), st(5)).label.as_pair(), (2, 0));
        let full = canonical_full(3);
        assert_eq!(full.canonical(0, 0, 1, 1, 2).label, Canon::Pair(1, 2));
        let noncounter = AutomatonSystem::new(1, 2, 2, Arc::new(|_, r, _, _| r as usize)).unwrap();
        assert!(canonical_counter(&noncounter).is_err());
    }

    #[test]
    fn c2_idempotent_and_c3_consistent() {
        let sys = pm_counter(4, 8);
        let fam = canonical_counter(&sys).unwrap();
        for h in 1..=6usize {
            let classes = fam.classes(0, 0, h);
            for c in &classes {
                let again = fam.canonical(0, 0, h, c.rep.0 as usize, c.rep.1 as usize);
                assert_eq!(&again, c);
            }
            for r in 0..(1u32 << h) {
                let bits: Vec<u8> = (0..h).map(|k| ((r >> k) & 1) as u8).collect();
                let tab = step_table(&sys, &bits, 0).unwrap();
                let ct = fam.canonical_table(&tab, 0);
                for s in 0..sys.eta {
                    assert_eq!(fam.apply(&ct, 0, 0, h, s), Some(tab.get(0, s)));
                }
            }
        }
    }
}
