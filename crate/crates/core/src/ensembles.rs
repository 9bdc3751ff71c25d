//! Ensembles, the objective S_E and benchmark T(E), grouped conditional
//! expectations and the code-driven lattice search.

use std::collections::BTreeMap;
use std::sync::atomic::{AtomicU64, Ordering};

use num_bigint::BigInt;
use num_traits::{Signed, Zero};
use rayon::prelude::*;

use crate::codes::{verify_fools, BinaryCode, Word};
use crate::error::{Error, Result};
use crate::rat::{lcm_denoms, Q};

static FOOL_GUARDS: AtomicU64 = AtomicU64::new(0);
static MONOTONE_STAGES: AtomicU64 = AtomicU64::new(0);

/// Process-wide counts of passed fooling guards and monotonicity-checked stages.
pub fn audit_counts() -> (u64, u64) {
    (FOOL_GUARDS.load(Ordering::Relaxed), MONOTONE_STAGES.load(Ordering::Relaxed))
}

/// A weighted set: sorted, duplicate-free ground ids plus an exact weight.
pub type WSet = (Vec<u32>, Q);

#[derive(Clone, Debug, PartialEq)]
pub struct Ensemble {
    pub side1: Vec<WSet>,
    pub side2: Vec<WSet>,
}

fn canonical_side(items: impl IntoIterator<Item = WSet>) -> Vec<WSet> {
    let mut acc: BTreeMap<Vec<u32>, Q> = BTreeMap::new();
    for (mut s, w) in items {
        s.sort_unstable();
        s.dedup();
        *acc.entry(s).or_insert_with(Q::zero) += w;
    }
    acc.into_iter().filter(|(_, w)| !w.is_zero()).collect()
}

impl Ensemble {
    /// Builds a canonical ensemble: identical sets merge, zero weights drop.
    pub fn new(side1: Vec<WSet>, side2: Vec<WSet>) -> Self {
        Ensemble { side1: canonical_side(side1), side2: canonical_side(side2) }
    }

    /// |E|: total stored set sizes.
    pub fn size(&self) -> usize {
        self.side1.iter().chain(self.side2.iter()).map(|(s, _)| s.len().max(1)).sum()
    }
}

pub fn eval_t(e: &Ensemble) -> Q {
    let (mut i, mut j) = (0, 0);
    let mut acc = Q::zero();
    while i < e.side1.len() && j < e.side2.len() {
        match e.side1[i].0.cmp(&e.side2[j].0) {
            std::cmp::Ordering::Less => i += 1,
            std::cmp::Ordering::Greater => j += 1,
            std::cmp::Ordering::Equal => {
                acc += &e.side1[i].1 * &e.side2[j].1;
                i += 1;
                j += 1;
            }
        }
    }
    acc
}

fn parity_on(x: &[bool], s: &[u32]) -> bool {
    s.iter().filter(|&&g| x[g as usize]).count() % 2 == 1
}

/// The literal double sum over all pairs (quadratic).
pub fn eval_s_direct(e: &Ensemble, x: &[bool]) -> Q {
    let mut acc = Q::zero();
    for (s1, w1) in &e.side1 {
        for (s2, w2) in &e.side2 {
            let sym: Vec<u32> = sym_diff(s1, s2);
            let term = w1 * w2;
            if parity_on(x, &sym) {
                acc -= term;
            } else {
                acc += term;
            }
        }
    }
    acc
}

fn sym_diff(a: &[u32], b: &[u32]) -> Vec<u32> {
    let (mut i, mut j) = (0, 0);
    let mut out = Vec::new();
    while i < a.len() || j < b.len() {
        if j == b.len() || (i < a.len() && a[i] < b[j]) {
            out.push(a[i]);
            i += 1;
        } else if i == a.len() || b[j] < a[i] {
            out.push(b[j]);
            j += 1;
        } else {
            i += 1;
            j += 1;
        }
    }
    out
}

/// Fixed leading code coordinates.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct Prefix {
    pub bits: Vec<bool>,
    pub chunk: usize,
}

impl Prefix {
    pub fn new(bits: Vec<bool>, chunk: usize) -> Self {
        Prefix { bits, chunk }
    }

    pub fn as_word(&self) -> Word {
        self.bits.iter().enumerate().fold(0, |acc, (k, &b)| acc | ((b as Word) << k))
    }
}

fn shr(a: Word, k: usize) -> Word {
    if k >= 128 {
        0
    } else {
        a >> k
    }
}

fn low_mask(k: usize) -> Word {
    if k >= 128 {
        Word::MAX
    } else {
        (1u128 << k) - 1
    }
}

fn parity(w: Word) -> bool {
    w.count_ones() % 2 == 1
}

/// E[Σ_j S_{E_j} | leading code bits fixed], bucketed by projection onto the free coordinates.
pub fn grouped_conditional_expectation(ensembles: &[Ensemble], code: &BinaryCode, prefix: &Prefix) -> Result<Q> {
    if prefix.bits.len() > code.length {
        return Err(Error::Invalid("prefix longer than the code".into()));
    }
    if !verify_fools(code, ensembles) {
        return Err(Error::FoolingGuard);
    }
    let l = prefix.bits.len();
    let y = prefix.as_word();
    let mut total = Q::zero();
    for e in ensembles {
        let mut buckets: BTreeMap<Word, (Q, Q)> = BTreeMap::new();
        for (side, items) in [(0, &e.side1), (1, &e.side2)] {
            for (s, w) in items.iter() {
                let a = code.encode_set(s);
                let entry = buckets.entry(shr(a, l)).or_insert_with(|| (Q::zero(), Q::zero()));
                let slot = if side == 0 { &mut entry.0 } else { &mut entry.1 };
                if parity(a & y & low_mask(l)) {
                    *slot -= w;
                } else {
                    *slot += w;
                }
            }
        }
        for (_, (a, b)) in buckets {
            total += a * b;
        }
    }
    Ok(total)
}

#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub x: Vec<bool>,
    pub y: Prefix,
    /// Conditional expectation before the first stage and after every stage.
    pub trace: Vec<Q>,
}

/// Integer-scaled view of one ensemble: weights times a common side denominator.
struct Scaled {
    items: Vec<(Word, bool, BigInt)>,
    denom: BigInt,
}

fn scaled(code: &BinaryCode, e: &Ensemble) -> Scaled {
    let d1 = lcm_denoms(e.side1.iter().map(|(_, w)| w));
    let d2 = lcm_denoms(e.side2.iter().map(|(_, w)| w));
    let mut items = Vec::with_capacity(e.side1.len() + e.side2.len());
    for (side, items_in, d) in [(false, &e.side1, &d1), (true, &e.side2, &d2)] {
        for (s, w) in items_in.iter() {
            let n = (w * Q::from_integer(d.clone())).to_integer();
            items.push((code.encode_set(s), side, n));
        }
    }
    Scaled { items, denom: d1 * d2 }
}

/// Unnormalized in-place Walsh–Hadamard butterfly.
fn wht_int(v: &mut [BigInt]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for j in i..i + h {
                let a = v[j].clone();
                let b = std::mem::take(&mut v[j + h]);
                v[j + h] = &a - &b;
                v[j] = a + b;
            }
        }
        h *= 2;
    }
}

/// Values of every extension z of the chunk [pos, pos+c) for one ensemble, scaled by its denominator.
fn stage_values(s: &Scaled, y: Word, pos: usize, c: usize) -> Vec<BigInt> {
    let width = 1usize << c;
    let fixed = low_mask(pos);
    let mut keyed: Vec<(Word, bool, usize, BigInt)> = s
        .items
        .iter()
        .filter(|(_, _, n)| !n.is_zero())
        .map(|(a, side, n)| {
            let cbits = (shr(*a, pos) & low_mask(c)) as usize;
            let v = if parity(a & y & fixed) { -n } else { n.clone() };
            (shr(*a, pos + c), *side, cbits, v)
        })
        .collect();
    keyed.sort_unstable_by(|a, b| a.0.cmp(&b.0));
    let mut out = vec![BigInt::zero(); width];
    let mut i = 0;
    while i < keyed.len() {
        let key = keyed[i].0;
        let mut v1 = vec![BigInt::zero(); width];
        let mut v2 = vec![BigInt::zero(); width];
        let (mut has1, mut has2) = (false, false);
        while i < keyed.len() && keyed[i].0 == key {
            let (_, side, cb, ref v) = keyed[i];
            if side {
                v2[cb] += v;
                has2 = true;
            } else {
                v1[cb] += v;
                has1 = true;
            }
            i += 1;
        }
        if has1 && has2 {
            wht_int(&mut v1);
            wht_int(&mut v2);
            for z in 0..width {
                out[z] += &v1[z] * &v2[z];
            }
        }
    }
    out
}

fn bit_reverse(u: usize, c: usize) -> usize {
    (0..c).fold(0, |acc, k| acc | (((u >> (c - 1 - k)) & 1) << k))
}

/// Fixes the code vector `chunk` coordinates at a time, keeping a best extension
/// (lexicographically smallest among ties). Returns x with x_i = A(i)•y.
pub fn lattice_search(ensembles: &[Ensemble], code: &BinaryCode, chunk: usize) -> Result<SearchOutcome> {
    if chunk == 0 {
        return Err(Error::Invalid("chunk must be ≥ 1".into()));
    }
    if !verify_fools(code, ensembles) {
        return Err(Error::FoolingGuard);
    }
    FOOL_GUARDS.fetch_add(1, Ordering::Relaxed);
    let scaled: Vec<Scaled> = ensembles.par_iter().map(|e| scaled(code, e)).collect();
    let start: Q = ensembles.iter().map(eval_t).sum();
    let mut trace = vec![start];
    let mut y: Word = 0;
    let mut pos = 0;
    while pos < code.length {
        let c = chunk.min(code.length - pos);
        let width = 1usize << c;
        let values: Vec<Q> = scaled
            .par_iter()
            .map(|s| {
                stage_values(s, y, pos, c)
                    .into_iter()
                    .map(|v| Q::new(v, s.denom.clone()))
                    .collect::<Vec<Q>>()
            })
            .reduce(
                || vec![Q::zero(); width],
                |mut a, b| {
                    for (x, y) in a.iter_mut().zip(b) {
                        *x += y;
                    }
                    a
                },
            );
        let mut best: Option<(usize, &Q)> = None;
        for u in 0..width {
            let z = bit_reverse(u, c);
            match best {
                Some((_, v)) if &values[z] <= v => {}
                _ => best = Some((z, &values[z])),
            }
        }
        let (z, v) = best.expect("nonempty extension set");
        let prev = trace.last().unwrap();
        debug_assert!(v >= prev, "lattice search stage decreased: {} < {}", v, prev);
        if v < prev {
            return Err(Error::Certification("lattice search monotonicity violated".into()));
        }
        MONOTONE_STAGES.fetch_add(1, Ordering::Relaxed);
        trace.push(v.clone());
        y |= (z as Word) << pos;
        pos += c;
    }
    let bits = (0..code.length).map(|k| (y >> k) & 1 == 1).collect();
    Ok(SearchOutcome { x: code.decode(y), y: Prefix::new(bits, chunk), trace })
}

/// Default chunk min(4, L).
pub fn default_chunk(code: &BinaryCode) -> usize {
    code.length.clamp(1, 4)
}

pub fn abs_total(ensembles: &[Ensemble]) -> Q {
    ensembles
        .iter()
        .flat_map(|e| e.side1.iter().chain(e.side2.iter()))
        .map(|(_, w)| w.abs())
        .sum()
}
