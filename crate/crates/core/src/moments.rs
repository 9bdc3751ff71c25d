//! Symmetric-moment systems: S(x) = Σ_j Q_j(l_{j,1}(x_1), …, l_{j,n}(x_n)) with
//! each Q_j written in the symmetric-monomial basis, expanded over set partitions
//! and minimized through the bilinear engine.

use std::collections::HashMap;

use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::bilinear::{maximize, Factorization, Group, Junta, Negated};
use crate::error::{Error, Result};
use crate::rat::{pow2_inv, Q};

/// γ · Σ over pairwise distinct (i_1..i_k) of Π_u l_{i_u}^{s_u}. An empty pattern is the constant γ.
#[derive(Clone, Debug, PartialEq)]
pub struct Pattern {
    pub exps: Vec<u32>,
    pub coef: Q,
}

impl Pattern {
    pub fn new(exps: Vec<u32>, coef: Q) -> Self {
        Pattern { exps, coef }
    }

    pub fn from_f64(exps: Vec<u32>, coef: f64) -> Result<Self> {
        let c = Q::from_float(coef).ok_or_else(|| Error::Invalid("non-finite moment coefficient".into()))?;
        Ok(Pattern { exps, coef: c })
    }
}

/// Conditional moments E[l_{j,i}(X_i)^s | X_i⟨1:fixed⟩ = prefix], X_i uniform on B_b.
pub trait Peo: Sync {
    fn moment(&self, j: usize, i: usize, s: u32, fixed: u32, prefix: u64) -> Q;
}

#[derive(Clone, Debug)]
pub struct MomentSystem {
    pub n: usize,
    pub b: u32,
    pub d: u32,
    pub functionals: Vec<Vec<Pattern>>,
    /// tables[j][i][x] = l_{j,i}(x); optional when a custom oracle is supplied.
    pub tables: Option<Vec<Vec<Vec<Q>>>>,
}

impl MomentSystem {
    pub fn new(n: usize, b: u32, functionals: Vec<Vec<Pattern>>, tables: Option<Vec<Vec<Vec<Q>>>>) -> Result<Self> {
        let d = functionals.iter().flatten().map(|p| p.exps.iter().sum::<u32>()).max().unwrap_or(0);
        if d > 4 {
            return Err(Error::Invalid(format!("moment degree {} exceeds 4", d)));
        }
        if functionals.iter().flatten().any(|p| p.exps.len() > 4) {
            return Err(Error::Invalid("at most four distinct indices per pattern".into()));
        }
        if b > 62 {
            return Err(Error::Invalid("at most 62 bit-levels per variable".into()));
        }
        if let Some(t) = &tables {
            let ok = t.len() == functionals.len()
                && t.iter().all(|tj| tj.len() == n && tj.iter().all(|ti| ti.len() == 1usize << b));
            if !ok {
                return Err(Error::Invalid("moment tables must be m × n × 2^b".into()));
            }
        }
        Ok(MomentSystem { n, b, d, functionals, tables })
    }
}

/// Average of the tabulated l^s over all completions of the prefix.
pub struct TablePeo<'a>(pub &'a [Vec<Vec<Q>>]);

impl Peo for TablePeo<'_> {
    fn moment(&self, j: usize, i: usize, s: u32, fixed: u32, prefix: u64) -> Q {
        let t = &self.0[j][i];
        let b = t.len().trailing_zeros();
        let free = b - fixed;
        let lo = (prefix << free) as usize;
        let sum: Q = t[lo..lo + (1usize << free)].iter().map(|v| pow_q(v, s)).sum();
        sum * pow2_inv(free)
    }
}

fn pow_q(v: &Q, s: u32) -> Q {
    let mut acc = Q::one();
    for _ in 0..s {
        acc *= v;
    }
    acc
}

/// One block of a partition: Σ_i Π_{(s, r)} E[l_i^s]^r.
pub type Block = Vec<(u32, u32)>;

#[derive(Clone, Debug, PartialEq)]
pub struct Term {
    pub coef: Q,
    pub blocks: Vec<Block>,
}

/// All set partitions of {0..k}, blocks in order of their smallest element.
pub fn set_partitions(k: usize) -> Vec<Vec<Vec<usize>>> {
    fn rec(u: usize, k: usize, cur: &mut Vec<Vec<usize>>, out: &mut Vec<Vec<Vec<usize>>>) {
        if u == k {
            out.push(cur.clone());
            return;
        }
        for bi in 0..cur.len() {
            cur[bi].push(u);
            rec(u + 1, k, cur, out);
            cur[bi].pop();
        }
        cur.push(vec![u]);
        rec(u + 1, k, cur, out);
        cur.pop();
    }
    let mut out = Vec::new();
    rec(0, k, &mut Vec::new(), &mut out);
    out
}

fn factorial(n: usize) -> i64 {
    (1..=n as i64).product()
}

/// Möbius rewrite of one distinct-index pattern into free-index products.
pub fn expand_pattern(p: &Pattern) -> Result<Vec<Term>> {
    let k = p.exps.len();
    if k > 4 {
        return Err(Error::Invalid("distinct-index expansion supports at most 4 indices".into()));
    }
    if k == 0 {
        return Ok(vec![Term { coef: p.coef.clone(), blocks: vec![] }]);
    }
    Ok(set_partitions(k)
        .into_iter()
        .map(|part| {
            let mu: i64 = part
                .iter()
                .map(|bl| if bl.len() % 2 == 1 { 1 } else { -1 } * factorial(bl.len() - 1))
                .product();
            let blocks = part
                .iter()
                .map(|bl| {
                    let mut counts: Vec<(u32, u32)> = Vec::new();
                    for &u in bl {
                        let s = p.exps[u];
                        match counts.iter_mut().find(|(x, _)| *x == s) {
                            Some(c) => c.1 += 1,
                            None => counts.push((s, 1)),
                        }
                    }
                    counts.sort_unstable();
                    counts
                })
                .collect();
            Term { coef: &p.coef * Q::from_integer(mu.into()), blocks }
        })
        .collect())
}

/// Expanded term lists, one per functional.
pub fn expand_distinct(sys: &MomentSystem) -> Result<Vec<Vec<Term>>> {
    sys.functionals
        .iter()
        .map(|f| Ok(f.iter().map(expand_pattern).collect::<Result<Vec<_>>>()?.concat()))
        .collect()
}

/// Value of an expansion given per-variable moments `a(i, s)`.
pub fn eval_terms(terms: &[Term], n: usize, a: &dyn Fn(usize, u32) -> Q) -> Q {
    terms
        .iter()
        .map(|t| {
            let prod = t.blocks.iter().fold(Q::one(), |acc, bl| {
                let f: Q = (0..n).map(|i| bl.iter().fold(Q::one(), |v, &(s, r)| v * pow_q(&a(i, s), r))).sum();
                acc * f
            });
            &t.coef * prod
        })
        .sum()
}

struct MomentFactorization<'a> {
    sys: &'a MomentSystem,
    terms: Vec<Vec<Term>>,
    peo: &'a dyn Peo,
    width: usize,
}

impl MomentFactorization<'_> {
    /// Per-variable junta values of a block under the current stage, 2^tw entries each.
    fn block_values(&self, j: usize, bl: &Block, fixed: u32, tw: u32, f0: &[u64], cache: &mut HashMap<(usize, u32), Vec<Q>>) -> Vec<Vec<Q>> {
        (0..self.sys.n)
            .map(|i| {
                let mut vals = vec![Q::one(); 1 << tw];
                for &(s, r) in bl {
                    let m = cache.entry((i, s)).or_insert_with(|| {
                        (0..1u64 << tw).map(|z| self.peo.moment(j, i, s, fixed + tw, (f0[i] << tw) | z)).collect()
                    });
                    for (v, mz) in vals.iter_mut().zip(m.iter()) {
                        *v *= pow_q(mz, r);
                    }
                }
                vals
            })
            .collect()
    }
}

fn linear_juntas(vals: &[Vec<Q>], scale: &Q, tw: u32) -> Vec<Junta> {
    vals.iter()
        .enumerate()
        .filter(|(_, v)| v.iter().any(|x| !x.is_zero()))
        .map(|(i, v)| Junta::new(vec![i], tw, (0..v.len()).map(|idx| &v[bit_rev(idx, tw)] * scale).collect()).expect("1-junta"))
        .collect()
}

/// Π of two blocks as 2-juntas over all (i, i') pairs.
fn pair_juntas(a: &[Vec<Q>], b: &[Vec<Q>], tw: u32) -> Vec<Junta> {
    let n = a.len();
    let mut out = Vec::new();
    for i in 0..n {
        for k in 0..n {
            if i == k {
                let t: Vec<Q> = (0..a[i].len()).map(|idx| &a[i][bit_rev(idx, tw)] * &b[i][bit_rev(idx, tw)]).collect();
                if t.iter().any(|x| !x.is_zero()) {
                    out.push(Junta::new(vec![i], tw, t).expect("1-junta"));
                }
                continue;
            }
            let (lo, hi, alo) = if i < k { (i, k, true) } else { (k, i, false) };
            // index bits: low tw bits are the window of `lo`, the next tw bits the window of `hi`
            let t: Vec<Q> = (0..1usize << (2 * tw))
                .map(|idx| {
                    let zl = bit_rev(idx & ((1 << tw) - 1), tw);
                    let zh = bit_rev(idx >> tw, tw);
                    let (za, zb) = if alo { (zl, zh) } else { (zh, zl) };
                    &a[i][za] * &b[k][zb]
                })
                .collect();
            if t.iter().any(|x| !x.is_zero()) {
                out.push(Junta::new(vec![lo, hi], tw, t).expect("2-junta"));
            }
        }
    }
    out
}

/// Table bit l of a variable is window bit l counted from the most significant end.
fn bit_rev(x: usize, tw: u32) -> usize {
    let mut z = 0;
    for l in 0..tw as usize {
        z |= ((x >> l) & 1) << (tw as usize - 1 - l);
    }
    z
}

impl Factorization for MomentFactorization<'_> {
    fn n(&self) -> usize {
        self.sys.n
    }
    fn bits(&self) -> u32 {
        self.sys.b
    }
    fn width(&self) -> usize {
        self.width
    }
    fn groups(&self, fixed: u32, tw: u32, f0: &[u64]) -> Vec<Group> {
        let per: Vec<(Vec<Junta>, Vec<Group>)> = self
            .terms
            .par_iter()
            .enumerate()
            .map(|(j, terms)| {
                let mut cache = HashMap::new();
                let mut linear = Vec::new();
                let mut groups = Vec::new();
                for t in terms {
                    if t.coef.is_zero() {
                        continue;
                    }
                    let vals: Vec<Vec<Vec<Q>>> = t.blocks.iter().map(|bl| self.block_values(j, bl, fixed, tw, f0, &mut cache)).collect();
                    match vals.len() {
                        0 => linear.push(Junta::constant(t.coef.clone())),
                        1 => linear.extend(linear_juntas(&vals[0], &t.coef, tw)),
                        2 => groups.push(Group { left: linear_juntas(&vals[0], &t.coef, tw), right: linear_juntas(&vals[1], &Q::one(), tw) }),
                        3 => groups.push(Group { left: linear_juntas(&vals[0], &t.coef, tw), right: pair_juntas(&vals[1], &vals[2], tw) }),
                        _ => {
                            let mut left = pair_juntas(&vals[0], &vals[1], tw);
                            for jt in left.iter_mut() {
                                for v in jt.table.iter_mut() {
                                    *v *= &t.coef;
                                }
                            }
                            groups.push(Group { left, right: pair_juntas(&vals[2], &vals[3], tw) })
                        }
                    }
                }
                (linear, groups)
            })
            .collect();
        let mut merged = Group { left: Vec::new(), right: vec![Junta::constant(Q::one())] };
        let mut out = Vec::new();
        for (lin, gs) in per {
            merged.left.extend(lin);
            out.extend(gs);
        }
        if !merged.left.is_empty() {
            out.push(merged);
        }
        out
    }
}

#[derive(Clone, Debug)]
pub struct MomentOutcome {
    pub x: Vec<u64>,
    pub value: Q,
    pub expected: Q,
    /// Conditional expectation of S per stage; non-increasing.
    pub trace: Vec<Q>,
    /// E[S] < 1, so every constraint term is below 1 at x.
    pub certified: bool,
}

/// S evaluated exactly through the oracle at full prefixes.
pub fn evaluate(sys: &MomentSystem, peo: &dyn Peo, x: &[u64]) -> Result<Q> {
    let terms = expand_distinct(sys)?;
    Ok(terms
        .iter()
        .enumerate()
        .map(|(j, ts)| eval_terms(ts, sys.n, &|i, s| peo.moment(j, i, s, sys.b, x[i])))
        .sum())
}

pub fn expectation(sys: &MomentSystem, peo: &dyn Peo) -> Result<Q> {
    let terms = expand_distinct(sys)?;
    Ok(terms
        .iter()
        .enumerate()
        .map(|(j, ts)| eval_terms(ts, sys.n, &|i, s| peo.moment(j, i, s, 0, 0)))
        .sum())
}

/// Finds x with S(x) ≤ E[S(X)].
pub fn solve(sys: &MomentSystem, peo: &dyn Peo) -> Result<MomentOutcome> {
    let terms = expand_distinct(sys)?;
    let width = if terms.iter().flatten().any(|t| t.blocks.len() >= 3) { 2 } else { 1 };
    let f = MomentFactorization { sys, terms, peo, width };
    let out = maximize(&Negated(&f))?;
    let trace: Vec<Q> = out.trace.iter().map(|v| -v.clone()).collect();
    let x = out.x.entries;
    let value = evaluate(sys, peo, &x)?;
    let expected = trace[0].clone();
    if value > expected {
        return Err(Error::Certification("moment objective above its expectation".into()));
    }
    let certified = expected < Q::one();
    Ok(MomentOutcome { x, value, expected, trace, certified })
}

/// Q = (Σ_i l_i − μ)²/a²: patterns (1,1), (2), (1) and the constant.
pub fn chebyshev(mu: &Q, a2: &Q) -> Vec<Pattern> {
    let inv = a2.recip();
    vec![
        Pattern::new(vec![1, 1], inv.clone()),
        Pattern::new(vec![2], inv.clone()),
        Pattern::new(vec![1], -(Q::from_integer(2.into()) * mu * &inv)),
        Pattern::new(vec![], mu * mu * &inv),
    ]
}
