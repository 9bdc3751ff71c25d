//! Juntas, the Walsh–Hadamard transform, the bilinear-expectations engine and
//! its Bernoulli reduction.
//!
//! Variables take values in B_b = {0,1}^b; bit-level 1 is the most significant.
//! A stage fixes `tw` bit-levels of every variable at once ("window"). Inside a
//! junta table, index bit `k*tw + l` is window bit `l` (0 = most significant)
//! of the junta's `k`-th support variable. The global ground id of window bit
//! `l` of variable `i` is `i*tw + l`.

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rayon::prelude::*;

use crate::codes::vandermonde_code;
use crate::ensembles::{default_chunk, eval_t, lattice_search, Ensemble, WSet};
use crate::error::{Error, Result};
use crate::rat::{pow2_inv, Q};

#[derive(Clone, Debug, PartialEq)]
pub struct Junta {
    pub support: Vec<usize>,
    /// Window bits per supported variable.
    pub bits: u32,
    pub table: Vec<Q>,
}

impl Junta {
    pub fn new(support: Vec<usize>, bits: u32, table: Vec<Q>) -> Result<Self> {
        let mut s = support.clone();
        s.sort_unstable();
        s.dedup();
        if s != support {
            return Err(Error::Invalid("junta support must be sorted and duplicate-free".into()));
        }
        if table.len() != 1usize << (support.len() * bits as usize) {
            return Err(Error::Invalid("junta table has the wrong length".into()));
        }
        Ok(Junta { support, bits, table })
    }

    pub fn constant(c: Q) -> Self {
        Junta { support: vec![], bits: 0, table: vec![c] }
    }

    /// Tabulates `f` over all window assignments; `f` receives one window value per support variable.
    pub fn from_fn(support: Vec<usize>, bits: u32, f: impl Fn(&[u64]) -> Q) -> Result<Self> {
        let k = support.len();
        let width = k * bits as usize;
        let mut vals = vec![0u64; k];
        let mut table = Vec::with_capacity(1 << width);
        for idx in 0..(1usize << width) {
            for (v, slot) in vals.iter_mut().enumerate() {
                let mut z = 0u64;
                for l in 0..bits as usize {
                    let bit = (idx >> (v * bits as usize + l)) & 1;
                    z |= (bit as u64) << (bits as usize - 1 - l);
                }
                *slot = z;
            }
            table.push(f(&vals));
        }
        Junta::new(support, bits, table)
    }

    pub fn width_bits(&self) -> usize {
        self.support.len() * self.bits as usize
    }
}

/// Exact butterfly transform scaled by 2^-width: F(z) = Σ_e γ(e)(−1)^{z•e}.
/// Returns every coefficient, indexed by the bit mask of e.
pub fn wht_table(j: &Junta) -> Vec<Q> {
    let mut v = j.table.clone();
    butterfly(&mut v);
    let scale = pow2_inv(j.width_bits() as u32);
    v.into_iter().map(|x| x * &scale).collect()
}

fn butterfly(v: &mut [Q]) {
    let n = v.len();
    let mut h = 1;
    while h < n {
        for i in (0..n).step_by(2 * h) {
            for k in i..i + h {
                let a = v[k].clone();
                let b = std::mem::take(&mut v[k + h]);
                v[k + h] = &a - &b;
                v[k] = a + b;
            }
        }
        h *= 2;
    }
}

/// Nonzero Fourier coefficients as (subset of local bit positions, γ).
pub fn wht(j: &Junta) -> Vec<(Vec<usize>, Q)> {
    wht_table(j)
        .into_iter()
        .enumerate()
        .filter(|(_, g)| !g.is_zero())
        .map(|(mask, g)| ((0..j.width_bits()).filter(|p| (mask >> p) & 1 == 1).collect(), g))
        .collect()
}

/// Inverse of [`wht_table`]: evaluates Σ_e γ(e)(−1)^{z•e} at every z.
pub fn reconstruct(coeffs: &[Q]) -> Vec<Q> {
    let mut v = coeffs.to_vec();
    butterfly(&mut v);
    v
}

#[derive(Clone, Debug, Default)]
pub struct Group {
    pub left: Vec<Junta>,
    pub right: Vec<Junta>,
}

/// A bilinear-expectations factorization. For a prefix `f0` of the `fixed`
/// leading bit-levels and the next `tw` levels z, the conditional expectation of
/// the objective must equal Σ_j (Σ left_j(z))·(Σ right_j(z)). `groups` must be a
/// pure function of its arguments.
pub trait Factorization: Sync {
    fn n(&self) -> usize;
    fn bits(&self) -> u32;
    fn width(&self) -> usize;
    fn window(&self) -> u32 {
        self.bits().min(2)
    }
    fn groups(&self, fixed: u32, tw: u32, f0: &[u64]) -> Vec<Group>;
}

/// n entries of b bits each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct BitLevelVector {
    pub b: u32,
    pub entries: Vec<u64>,
}

impl BitLevelVector {
    /// Most significant `j` bits of entry `i` ("v⟨1:j⟩").
    pub fn top(&self, i: usize, j: u32) -> u64 {
        self.entries[i] >> (self.b - j)
    }
}

/// WHT every junta of every group and map local bits to global ids.
pub fn stage_ensembles(groups: &[Group], n: usize, tw: u32, w: usize) -> Result<Vec<Ensemble>> {
    let to_side = |js: &[Junta]| -> Result<Vec<WSet>> {
        let mut out = Vec::new();
        for j in js {
            if j.support.len() > w {
                return Err(Error::Invalid(format!("junta depends on {} > w = {} variables", j.support.len(), w)));
            }
            if !j.support.is_empty() && j.bits != tw {
                return Err(Error::Invalid("junta window size does not match the stage".into()));
            }
            if j.support.iter().any(|&v| v >= n) {
                return Err(Error::Invalid("junta variable out of range".into()));
            }
            for (bits, g) in wht(j) {
                let set = bits
                    .into_iter()
                    .map(|p| (j.support[p / tw as usize] * tw as usize + p % tw as usize) as u32)
                    .collect();
                out.push((set, g));
            }
        }
        Ok(out)
    };
    groups
        .par_iter()
        .map(|g| Ok(Ensemble::new(to_side(&g.left)?, to_side(&g.right)?)))
        .collect()
}

#[derive(Clone, Debug)]
pub struct MaximizeOutcome {
    pub x: BitLevelVector,
    /// Conditional expectation at the start of each stage, then the final value.
    pub trace: Vec<Q>,
    /// Number of ensembles and junta weight W seen per stage.
    pub weights: Vec<usize>,
}

pub fn maximize<F: Factorization + ?Sized>(f: &F) -> Result<MaximizeOutcome> {
    let n = f.n();
    let b = f.bits();
    let t = f.window().max(1);
    let w = f.width().max(1);
    let mut prefix = vec![0u64; n];
    let mut fixed = 0u32;
    let mut trace: Vec<Q> = Vec::new();
    let mut weights = Vec::new();
    // guard: n = 0 or b = 0 means nothing to fix
    if n == 0 || b == 0 {
        let groups = f.groups(0, 0, &prefix);
        let ens = stage_ensembles(&groups, n, 0, w)?;
        trace.push(ens.iter().map(eval_t).sum());
        return Ok(MaximizeOutcome { x: BitLevelVector { b, entries: prefix }, trace, weights });
    }
    let mut last = None;
    while fixed < b {
        let tw = t.min(b - fixed);
        let groups = f.groups(fixed, tw, &prefix);
        weights.push(groups.iter().map(|g| g.left.len() + g.right.len()).sum());
        let ens = stage_ensembles(&groups, n, tw, w)?;
        let start: Q = ens.iter().map(eval_t).sum();
        if let Some(prev) = &last {
            debug_assert!(&start >= prev, "stage expectation decreased: {} < {}", start, prev);
        }
        trace.push(start);
        let code = vandermonde_code(n, tw as usize, w)?;
        let out = lattice_search(&ens, &code, default_chunk(&code))?;
        for i in 0..n {
            let mut z = 0u64;
            for l in 0..tw as usize {
                z |= (out.x[i * tw as usize + l] as u64) << (tw as usize - 1 - l);
            }
            prefix[i] = (prefix[i] << tw) | z;
        }
        last = out.trace.last().cloned();
        fixed += tw;
    }
    trace.push(last.expect("at least one stage"));
    Ok(MaximizeOutcome { x: BitLevelVector { b, entries: prefix }, trace, weights })
}

/// Minimization through the objective −S (negates every left factor).
pub struct Negated<'a, F: Factorization + ?Sized>(pub &'a F);

impl<F: Factorization + ?Sized> Factorization for Negated<'_, F> {
    fn n(&self) -> usize {
        self.0.n()
    }
    fn bits(&self) -> u32 {
        self.0.bits()
    }
    fn width(&self) -> usize {
        self.0.width()
    }
    fn window(&self) -> u32 {
        self.0.window()
    }
    fn groups(&self, fixed: u32, tw: u32, f0: &[u64]) -> Vec<Group> {
        let mut gs = self.0.groups(fixed, tw, f0);
        for g in gs.iter_mut() {
            for j in g.left.iter_mut() {
                for v in j.table.iter_mut() {
                    *v = -std::mem::take(v);
                }
            }
        }
        gs
    }
}

/// `coef · Π_{v ∈ vars} q_v`; a repeated variable contributes a power of q_v.
#[derive(Clone, Debug, PartialEq)]
pub struct QMonomial {
    pub coef: Q,
    pub vars: Vec<usize>,
}

#[derive(Clone, Debug, Default)]
pub struct QGroup {
    pub left: Vec<QMonomial>,
    pub right: Vec<QMonomial>,
}

/// An expectation factorization over product Bernoulli distributions: for every
/// probability vector q, E_{X∼q}[S(X)] = Σ_j (Σ left_j(q))·(Σ right_j(q)).
#[derive(Clone, Debug)]
pub struct ExpectationFactorization {
    pub n: usize,
    pub width: usize,
    pub groups: Vec<QGroup>,
}

impl ExpectationFactorization {
    pub fn expectation(&self, q: &[Q]) -> Q {
        let eval = |ms: &[QMonomial]| -> Q {
            ms.iter().map(|m| m.vars.iter().fold(m.coef.clone(), |acc, &v| acc * &q[v])).sum()
        };
        self.groups.iter().map(|g| eval(&g.left) * eval(&g.right)).sum()
    }
}

/// Marginal P(y < k | leading bits) for y drawn uniformly from the completions.
pub fn threshold_marginal(k: u64, b: u32, fixed: u32, value: u64) -> Q {
    let rem = b - fixed;
    let lo = (value as u128) << rem;
    let span = 1u128 << rem;
    let cnt = (k as u128).saturating_sub(lo).min(span);
    Q::new(BigInt::from(cnt), BigInt::one() << rem as usize)
}

struct BernoulliEngine<'a> {
    ef: &'a ExpectationFactorization,
    ks: Vec<u64>,
    b: u32,
}

impl BernoulliEngine<'_> {
    fn junta(&self, m: &QMonomial, fixed: u32, tw: u32, f0: &[u64]) -> Junta {
        let mut vars = m.vars.clone();
        vars.sort_unstable();
        vars.dedup();
        Junta::from_fn(vars.clone(), tw, |zs| {
            m.vars.iter().fold(m.coef.clone(), |acc, v| {
                let z = zs[vars.binary_search(v).expect("support variable")];
                acc * threshold_marginal(self.ks[*v], self.b, fixed + tw, (f0[*v] << tw) | z)
            })
        })
        .expect("monomial junta is well formed")
    }
}

impl Factorization for BernoulliEngine<'_> {
    fn n(&self) -> usize {
        self.ef.n
    }
    fn bits(&self) -> u32 {
        self.b
    }
    fn width(&self) -> usize {
        self.ef.width
    }
    fn groups(&self, fixed: u32, tw: u32, f0: &[u64]) -> Vec<Group> {
        self.ef
            .groups
            .par_iter()
            .map(|g| Group {
                left: g.left.iter().map(|m| self.junta(m, fixed, tw, f0)).collect(),
                right: g.right.iter().map(|m| self.junta(m, fixed, tw, f0)).collect(),
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct BernoulliOutcome {
    pub x: Vec<bool>,
    pub y: BitLevelVector,
    pub trace: Vec<Q>,
}

/// Finds x ∈ {0,1}^n with S(x) ≥ E_{X∼p}[S(X)], where every p_i = k_i / 2^b.
pub fn maximize_bernoulli(ef: &ExpectationFactorization, p: &[Q], b: u32) -> Result<BernoulliOutcome> {
    if p.len() != ef.n {
        return Err(Error::Invalid("probability vector has the wrong length".into()));
    }
    for g in &ef.groups {
        for m in g.left.iter().chain(g.right.iter()) {
            let mut v = m.vars.clone();
            v.sort_unstable();
            v.dedup();
            if v.len() > ef.width || v.iter().any(|&i| i >= ef.n) {
                return Err(Error::Invalid("monomial variables must be in range and within width".into()));
            }
        }
    }
    let scale = Q::from_integer(BigInt::one() << b as usize);
    let mut ks = Vec::with_capacity(p.len());
    for pi in p {
        let k = pi * &scale;
        if !k.is_integer() || k < Q::zero() || k > scale {
            return Err(Error::Invalid(format!("probability {} is not k/2^{} in [0,1]", pi, b)));
        }
        ks.push(u64::try_from(k.to_integer()).map_err(|_| Error::Invalid("probability too fine".into()))?);
    }
    let engine = BernoulliEngine { ef, ks, b };
    let out = maximize(&engine)?;
    let x = out.x.entries.iter().zip(&engine.ks).map(|(y, k)| y < k).collect();
    Ok(BernoulliOutcome { x, y: out.x, trace: out.trace })
}
