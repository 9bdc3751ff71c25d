//! Brute-force and DP reference computations. Nothing here calls the engines.

use std::collections::BTreeMap;

use num_bigint::BigInt;
use num_traits::{One, Zero};

use crate::error::{Error, Result};
use crate::rat::Q;

const MAX_POINTS_LOG2: u32 = 24;

fn guard(n: usize, b: u32) -> Result<()> {
    if (n as u64) * (b as u64) > MAX_POINTS_LOG2 as u64 {
        return Err(Error::SizeGuard(format!("b·n = {} exceeds {}", n as u64 * b as u64, MAX_POINTS_LOG2)));
    }
    Ok(())
}

/// Point number `idx` in lexicographic order: x_1 holds the most significant digits.
fn point(idx: u64, n: usize, b: u32) -> Vec<u64> {
    let mask = (1u64 << b) - 1;
    (0..n).map(|i| (idx >> ((n - 1 - i) as u32 * b)) & mask).collect()
}

/// Exact expectation over B_b^n. With `p` given (b = 1 only) coordinate i is 1 with probability p_i;
/// otherwise the distribution is uniform.
pub fn exhaustive_expectation(objective: &dyn Fn(&[u64]) -> Q, n: usize, b: u32, p: Option<&[Q]>) -> Result<Q> {
    guard(n, b)?;
    if p.is_some() && b != 1 {
        return Err(Error::Invalid("product Bernoulli weights need b = 1".into()));
    }
    let total = 1u64 << (n as u32 * b);
    let mut acc = Q::zero();
    for idx in 0..total {
        let x = point(idx, n, b);
        let weight = match p {
            Some(p) => x.iter().zip(p).fold(Q::one(), |w, (&xi, pi)| if xi == 1 { w * pi } else { w * (Q::one() - pi) }),
            None => Q::one(),
        };
        if !weight.is_zero() {
            acc += objective(&x) * weight;
        }
    }
    Ok(match p {
        Some(_) => acc,
        None => acc / Q::from_integer(BigInt::from(total)),
    })
}

/// Lexicographically first maximizer over B_b^n.
pub fn exhaustive_argmax(objective: &dyn Fn(&[u64]) -> Q, n: usize, b: u32) -> Result<(Vec<u64>, Q)> {
    guard(n, b)?;
    let mut best: Option<(Vec<u64>, Q)> = None;
    for idx in 0..(1u64 << (n as u32 * b)) {
        let x = point(idx, n, b);
        let v = objective(&x);
        if best.as_ref().map_or(true, |(_, bv)| v > *bv) {
            best = Some((x, v));
        }
    }
    Ok(best.expect("at least one point"))
}

/// n·(n − (3n² − 2n)/q) with q = 3(1 + 3n).
pub fn gb_expected_sprime(n: u64) -> Q {
    let n = BigInt::from(n);
    let q = BigInt::from(3) * (BigInt::one() + BigInt::from(3) * &n);
    let r4 = BigInt::from(3) * &n * &n - BigInt::from(2) * &n;
    Q::from_integer(n.clone()) * (Q::from_integer(n) - Q::new(r4, q))
}

/// E|Σ_j a_j y_j| for independent uniform signs, by counting partial sums.
pub fn dp_abs_expectation(row: &[i64]) -> Result<Q> {
    if row.len() > 64 {
        return Err(Error::SizeGuard("dp_abs_expectation supports n ≤ 64".into()));
    }
    let mut counts: BTreeMap<i64, BigInt> = BTreeMap::new();
    counts.insert(0, BigInt::one());
    for &a in row {
        let mut next: BTreeMap<i64, BigInt> = BTreeMap::new();
        for (s, c) in counts {
            *next.entry(s + a).or_insert_with(BigInt::zero) += &c;
            *next.entry(s - a).or_insert_with(BigInt::zero) += c;
        }
        counts = next;
    }
    let num: BigInt = counts.iter().map(|(s, c)| c * BigInt::from(s.abs())).sum();
    Ok(Q::new(num, BigInt::one() << row.len()))
}

/// Σ over pairwise distinct (i_1..i_k) of Π_u a[u][i_u], by direct enumeration.
pub fn distinct_index_sum(a: &[Vec<Q>]) -> Q {
    fn rec(a: &[Vec<Q>], u: usize, used: &mut Vec<usize>, acc: Q) -> Q {
        if u == a.len() {
            return acc;
        }
        let mut total = Q::zero();
        for i in 0..a[u].len() {
            if used.contains(&i) {
                continue;
            }
            used.push(i);
            total += rec(a, u + 1, used, &acc * &a[u][i]);
            used.pop();
        }
        total
    }
    rec(a, 0, &mut Vec::new(), Q::one())
}

/// End-state distribution of a deterministic stepper over all 2^h strings, from state `s`.
pub fn exhaustive_endstates(step: &dyn Fn(u8, usize, usize) -> usize, s: usize, t: usize, h: usize) -> Result<BTreeMap<usize, Q>> {
    if h > 10 {
        return Err(Error::SizeGuard("exhaustive_endstates supports h ≤ 10".into()));
    }
    let mut out: BTreeMap<usize, Q> = BTreeMap::new();
    let w = Q::new(BigInt::one(), BigInt::one() << h);
    for r in 0..(1u32 << h) {
        let mut st = s;
        for k in 0..h {
            st = step(((r >> (h - 1 - k)) & 1) as u8, st, t + k);
        }
        *out.entry(st).or_insert_with(Q::zero) += &w;
    }
    Ok(out)
}

/// Σ_{s'} |P(s') − P'(s')| for two sparse distributions.
pub fn l1_distance(a: &BTreeMap<usize, Q>, b: &BTreeMap<usize, Q>) -> Q {
    let mut keys: Vec<usize> = a.keys().chain(b.keys()).copied().collect();
    keys.sort_unstable();
    keys.dedup();
    let z = Q::zero();
    keys.into_iter()
        .map(|k| {
            let d = a.get(&k).unwrap_or(&z) - b.get(&k).unwrap_or(&z);
            if d < z {
                -d
            } else {
                d
            }
        })
        .sum()
}
