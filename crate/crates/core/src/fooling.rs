//! REDUCE and the recursive FOOL driver.

use std::collections::HashMap;
use std::sync::Arc;

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, ToPrimitive, Zero};

use crate::automata::{
    err_marginals, marginals, AutomatonSystem, CanonicalFamily, FooledDistribution, LazyMarginals, Marginals, State, SteppingTable,
};
use crate::error::{Error, Result};
use crate::moments::{chebyshev, solve, MomentSystem, Peo};
use crate::rat::{qi, Q};

#[derive(Clone, Debug)]
pub struct ReduceOptions {
    /// Largest E · (classes with p > 0) handed to the moment engine; above it the product is kept.
    pub work_cap: u128,
    /// Largest input size materialized for the moment engine.
    pub materialize_cap: u128,
}

impl Default for ReduceOptions {
    fn default() -> Self {
        ReduceOptions { work_cap: 1 << 14, materialize_cap: 1 << 16 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ReduceKind {
    /// E ≥ |D1|·|D2|: the exact product.
    Product,
    /// Product kept because the moment system exceeded the work cap.
    ProductCapped,
    Chebyshev,
}

#[derive(Clone, Debug)]
pub struct ReduceReport {
    pub t: usize,
    pub h: usize,
    pub eps: Q,
    pub classes: usize,
    pub active_classes: usize,
    /// ⌈2·classes·ε^{-2}⌉ rounded up to a power of two.
    pub e: u128,
    pub input_sizes: (u128, u128),
    pub size: u128,
    pub kind: ReduceKind,
    /// E[S] and S(x) of the Chebyshev system.
    pub expected: Option<Q>,
    pub value: Option<Q>,
    /// Exact err(output, product).
    pub err: Q,
}

/// ⌈2·classes·ε^{-2}⌉.
pub fn pair_count(classes: usize, eps: &Q) -> u128 {
    let v = Q::from_integer(BigInt::from(2 * classes as u64)) / (eps * eps);
    v.ceil().to_integer().to_u128().unwrap_or(u128::MAX)
}

fn pow2_ceil(x: u128) -> u128 {
    x.max(1).checked_next_power_of_two().unwrap_or(u128::MAX)
}

fn class_total(family: &CanonicalFamily, m: usize, t: usize, h: usize) -> usize {
    family.class_count(m, t, h)
}

/// Chebyshev oracle: variable z = (x, y), x the top b1 bits indexing D1, y the rest indexing D2.
struct ReducePeo<'a> {
    classes: Vec<(usize, State, State)>,
    d1: &'a [(Vec<u8>, SteppingTable)],
    d2: &'a [(Vec<u8>, SteppingTable)],
    b1: u32,
    b2: u32,
    /// cum[c][x] = Σ_{x' < x} #{y : class c holds for x'#y}.
    cum: Vec<Vec<u64>>,
}

impl<'a> ReducePeo<'a> {
    fn new(classes: Vec<(usize, State, State)>, d1: &'a [(Vec<u8>, SteppingTable)], d2: &'a [(Vec<u8>, SteppingTable)]) -> Self {
        let b1 = d1.len().trailing_zeros();
        let b2 = d2.len().trailing_zeros();
        // transition counts of D2: (i, mid) -> end state -> count
        let mut cnt2: HashMap<(usize, usize), HashMap<usize, u64>> = HashMap::new();
        let mut cum = Vec::with_capacity(classes.len());
        for &(i, s1, s2) in &classes {
            let mut row = Vec::with_capacity(d1.len() + 1);
            let mut acc = 0u64;
            row.push(0);
            for (_, t1) in d1 {
                let mid = t1.get(i, s1 as usize);
                let m = cnt2.entry((i, mid)).or_insert_with(|| {
                    let mut h = HashMap::new();
                    for (_, t2) in d2 {
                        *h.entry(t2.get(i, mid)).or_insert(0) += 1;
                    }
                    h
                });
                acc += m.get(&(s2 as usize)).copied().unwrap_or(0);
                row.push(acc);
            }
            cum.push(row);
        }
        ReducePeo { classes, d1, d2, b1, b2, cum }
    }
}

impl Peo for ReducePeo<'_> {
    fn moment(&self, j: usize, _var: usize, s: u32, fixed: u32, prefix: u64) -> Q {
        if s == 0 {
            return Q::one();
        }
        // indicators: l^s = l
        let (b1, b2) = (self.b1, self.b2);
        if fixed <= b1 {
            let free = b1 - fixed;
            let lo = (prefix << free) as usize;
            let hi = lo + (1usize << free);
            let count = self.cum[j][hi] - self.cum[j][lo];
            Q::new(BigInt::from(count), BigInt::from((1u64 << free) * self.d2.len() as u64))
        } else {
            let (i, s1, s2) = self.classes[j];
            let yfix = fixed - b1;
            let x = (prefix >> yfix) as usize;
            let free = b2 - yfix;
            let ylo = ((prefix & ((1u64 << yfix) - 1)) << free) as usize;
            let mid = self.d1[x].1.get(i, s1 as usize);
            let count = self.d2[ylo..ylo + (1usize << free)].iter().filter(|(_, t2)| t2.get(i, mid) == s2 as usize).count();
            Q::new(BigInt::from(count), BigInt::from(1u64 << free))
        }
    }
}

/// Shifts a distribution to start at time t (for time-invariant automata).
pub fn shifted(d: &FooledDistribution, t: usize) -> FooledDistribution {
    match d {
        FooledDistribution::Explicit { h, items, .. } => FooledDistribution::Explicit {
            t,
            h: *h,
            items: items
                .iter()
                .map(|(s, tab)| {
                    let mut tab = tab.clone();
                    tab.t = t;
                    (s.clone(), tab)
                })
                .collect(),
        },
        FooledDistribution::Product(a, b) => {
            let ha = a.h();
            FooledDistribution::Product(Box::new(shifted(a, t)), Box::new(shifted(b, t + ha)))
        }
    }
}

/// A distribution of size O(classes·ε^{-2}) with err(·, d1 × d2) ≤ ε.
pub fn reduce(
    m: usize,
    eta: usize,
    d1: &FooledDistribution,
    d2: &FooledDistribution,
    eps: &Q,
    family: &CanonicalFamily,
    opts: &ReduceOptions,
) -> Result<(FooledDistribution, ReduceReport)> {
    let (m1, m2) = (LazyMarginals::ready(marginals(d1, m, eta)?), LazyMarginals::ready(marginals(d2, m, eta)?));
    reduce_marginals(m, eta, (d1, &m1), (d2, &m2), eps, family, opts).map(|(d, r, _)| (d, r))
}

/// [`reduce`] with the input marginals supplied; also returns the output's marginals.
pub fn reduce_marginals(
    m: usize,
    eta: usize,
    (d1, m1): (&FooledDistribution, &Arc<LazyMarginals>),
    (d2, m2): (&FooledDistribution, &Arc<LazyMarginals>),
    eps: &Q,
    family: &CanonicalFamily,
    opts: &ReduceOptions,
) -> Result<(FooledDistribution, ReduceReport, Arc<LazyMarginals>)> {
    if d1.t() + d1.h() != d2.t() || d1.h() != d2.h() {
        return Err(Error::Invalid("reduce needs abutting windows of equal length".into()));
    }
    if *eps <= Q::zero() {
        return Err(Error::Invalid("reduce needs ε > 0".into()));
    }
    let eps = if *eps > qi(2) { qi(2) } else { eps.clone() };
    let (t, h2) = (d1.t(), d1.h() + d2.h());
    let classes = class_total(family, m, t, h2);
    let e = pow2_ceil(pair_count(classes, &eps));
    let (n1, n2) = (d1.size(), d2.size());
    let prod_size = n1.saturating_mul(n2);
    let target = LazyMarginals::composed(m1.clone(), m2.clone());
    let mut report = ReduceReport {
        t,
        h: h2,
        eps: eps.clone(),
        classes,
        active_classes: 0,
        e,
        input_sizes: (n1, n2),
        size: prod_size,
        kind: ReduceKind::Product,
        expected: None,
        value: None,
        err: Q::zero(),
    };
    let product = |mut report: ReduceReport| -> Result<(FooledDistribution, ReduceReport, Arc<LazyMarginals>)> {
        // marginals of a product are by definition the composed target, so err is exactly 0
        let p = FooledDistribution::product(d1.clone(), d2.clone())?;
        report.err = Q::zero();
        Ok((p, report, target.clone()))
    };
    if e >= prod_size {
        return product(report);
    }
    let target_m = target.get()?;
    let active: Vec<(usize, State, State, Q)> = (0..m)
        .flat_map(|i| family.classes(i, t, h2).into_iter().map(move |c| (i, c)))
        .filter_map(|(i, c)| {
            let p = target_m.prob(i, c.rep.0 as usize, c.rep.1 as usize);
            (!p.is_zero()).then_some((i, c.rep.0, c.rep.1, p))
        })
        .collect();
    report.active_classes = active.len();
    let pow2 = n1.is_power_of_two() && n2.is_power_of_two();
    if !pow2 || e.saturating_mul(active.len() as u128) > opts.work_cap || n1.max(n2) > opts.materialize_cap {
        report.kind = ReduceKind::ProductCapped;
        return product(report);
    }
    let x1 = d1.materialize(opts.materialize_cap)?;
    let x2 = d2.materialize(opts.materialize_cap)?;
    let b = n1.trailing_zeros() + n2.trailing_zeros();
    let e_us = e as usize;
    let eq = Q::from_integer(BigInt::from(e));
    let functionals = active
        .iter()
        .map(|(_, _, _, p)| chebyshev(&(&eq * p), &(&eq * &eq * &eps * &eps * p)))
        .collect();
    let sys = MomentSystem::new(e_us, b, functionals, None)?;
    let peo = ReducePeo::new(active.iter().map(|&(i, a, c, _)| (i, a, c)).collect(), &x1, &x2);
    let out = solve(&sys, &peo)?;
    if !out.certified {
        return Err(Error::Certification(format!("Chebyshev system has E[S] = {} ≥ 1", out.expected)));
    }
    let b2 = n2.trailing_zeros();
    let items = out
        .x
        .iter()
        .map(|&z| {
            let (xi, yi) = ((z >> b2) as usize, (z & ((1u64 << b2) - 1)) as usize);
            let mut s = x1[xi].0.clone();
            s.extend_from_slice(&x2[yi].0);
            Ok((s, crate::automata::compose_tables(&x1[xi].1, &x2[yi].1)?))
        })
        .collect::<Result<Vec<_>>>()?;
    let dist = FooledDistribution::explicit(t, h2, items)?;
    let out_marg = marginals(&dist, m, eta)?;
    let err = err_marginals(&out_marg, target_m);
    if err > eps {
        return Err(Error::Certification(format!("reduce err {} exceeds ε = {}", err, eps)));
    }
    report.kind = ReduceKind::Chebyshev;
    report.size = e;
    report.expected = Some(out.expected);
    report.value = Some(out.value);
    report.err = err;
    Ok((dist, report, LazyMarginals::ready(out_marg)))
}

#[derive(Clone, Debug)]
pub struct FoolOutcome {
    pub dist: FooledDistribution,
    /// Every REDUCE call, children before parents.
    pub reports: Vec<ReduceReport>,
    pub marginals: Arc<LazyMarginals>,
}

/// Error handed to each half: (ε/2)(1 − 1/h).
pub fn child_eps(eps: &Q, h: usize) -> Q {
    eps / qi(2) * (Q::one() - Q::new(BigInt::one(), BigInt::from(h)))
}

pub fn reduce_eps(eps: &Q, h: usize) -> Q {
    eps / qi(h as i64)
}

pub fn fool(sys: &AutomatonSystem, t: usize, h: usize, eps: &Q, family: &CanonicalFamily, opts: &ReduceOptions) -> Result<FoolOutcome> {
    if !h.is_power_of_two() || t + h > sys.horizon {
        return Err(Error::Invalid("fool needs a power-of-two window inside the horizon".into()));
    }
    if *eps <= Q::zero() {
        return Err(Error::Invalid("fool needs ε > 0".into()));
    }
    if h == 1 {
        let dist = FooledDistribution::uniform(sys, t, 1)?;
        let marg = marginals(&dist, sys.m, sys.eta)?;
        return Ok(FoolOutcome { dist, reports: vec![], marginals: LazyMarginals::ready(marg) });
    }
    let ce = child_eps(eps, h);
    let (a, b) = rayon::join(|| fool(sys, t, h / 2, &ce, family, opts), || fool(sys, t + h / 2, h / 2, &ce, family, opts));
    let (a, b) = (a?, b?);
    let (dist, rep, marg) = reduce_marginals(sys.m, sys.eta, (&a.dist, &a.marginals), (&b.dist, &b.marginals), &reduce_eps(eps, h), family, opts)?;
    let mut reports = a.reports;
    reports.extend(b.reports);
    reports.push(rep);
    Ok(FoolOutcome { dist, reports, marginals: marg })
}

/// ⌈2·classes_T·ε^{-2}⌉ over the whole horizon.
pub fn flat_support_bound(sys: &AutomatonSystem, eps: &Q, family: &CanonicalFamily) -> u128 {
    pair_count(class_total(family, sys.m, 0, sys.horizon), eps)
}

/// Support size of fool(sys, t, h, ε) under the size rule of `reduce`, assuming
/// every class is active; an upper bound on the actual size.
pub fn fool_support_bound(sys: &AutomatonSystem, t: usize, h: usize, eps: &Q, family: &CanonicalFamily, opts: &ReduceOptions) -> u128 {
    if h == 1 {
        return 2;
    }
    let ce = child_eps(eps, h);
    let a = fool_support_bound(sys, t, h / 2, &ce, family, opts);
    let b = fool_support_bound(sys, t + h / 2, h / 2, &ce, family, opts);
    let re = reduce_eps(eps, h);
    let re = if re > qi(2) { qi(2) } else { re };
    let classes = class_total(family, sys.m, t, h);
    let e = pow2_ceil(pair_count(classes, &re));
    let prod = a.saturating_mul(b);
    if e >= prod {
        prod
    } else {
        // a capped product is kept whole; a real reduce gives e
        prod.max(e)
    }
}

/// err(distribution, uniform) from the exact DP marginals.
pub fn err_vs_uniform(sys: &AutomatonSystem, d: &FooledDistribution) -> Result<Q> {
    let u = crate::automata::uniform_marginals(sys, d.t(), d.h())?;
    Ok(err_marginals(&marginals(d, sys.m, sys.eta)?, &u))
}

pub fn marginal_err(a: &Marginals, b: &Marginals) -> Q {
    err_marginals(a, b)
}

/// Exact rational ceiling helper shared with applications.
pub fn ceil_q(x: &Q) -> BigInt {
    let (n, d) = (x.numer(), x.denom());
    n.div_ceil(d)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::automata::{canonical_counter, canonical_full, err, step_table};
    use crate::rat::q;
    use std::sync::Arc;

    fn parity() -> AutomatonSystem {
        AutomatonSystem::new(1, 2, 8, Arc::new(|_, r, s, _| s ^ r as usize)).unwrap()
    }

    fn explicit_range(sys: &AutomatonSystem, t: usize, strings: &[Vec<u8>]) -> FooledDistribution {
        let items = strings.iter().map(|s| (s.clone(), step_table(sys, s, t).unwrap())).collect();
        FooledDistribution::explicit(t, strings[0].len(), items).unwrap()
    }

    fn all_strings(h: usize) -> Vec<Vec<u8>> {
        (0..1u32 << h).map(|r| (0..h).map(|k| ((r >> (h - 1 - k)) & 1) as u8).collect()).collect()
    }

    #[test]
    fn budget_identity() {
        for h in [2usize, 4, 8, 64] {
            for eps in [q(1, 2), qi(1), q(3, 7)] {
                assert_eq!(reduce_eps(&eps, h) + qi(2) * child_eps(&eps, h), eps);
            }
        }
    }

    #[test]
    fn flat_bound_formula() {
        let sys = AutomatonSystem::new(1, 2, 4, Arc::new(|_, r, s, _| s ^ r as usize)).unwrap();
        assert_eq!(flat_support_bound(&sys, &qi(1), &canonical_full(2)), 8);
    }

    #[test]
    fn point_masses_concatenate() {
        let sys = parity();
        let a = explicit_range(&sys, 0, &[vec![1, 0]]);
        let b = explicit_range(&sys, 2, &[vec![1, 1]]);
        let (d, rep) = reduce(1, 2, &a, &b, &q(1, 2), &canonical_full(2), &ReduceOptions::default()).unwrap();
        assert_eq!(rep.kind, ReduceKind::Product);
        let items = d.materialize(16).unwrap();
        assert_eq!(items.len(), 1);
        assert_eq!(items[0].0, vec![1, 0, 1, 1]);
        assert_eq!(err(&d, &FooledDistribution::product(a, b).unwrap(), 1, 2).unwrap(), qi(0));
    }

    #[test]
    fn chebyshev_reduce_parity() {
        // classes = 4; ε = 1 gives E = 8 < 64 pairs, ε = 1/2 gives E = 32
        let sys = parity();
        let a = explicit_range(&sys, 0, &all_strings(3));
        let b = explicit_range(&sys, 3, &all_strings(3));
        for eps in [qi(1), q(1, 2), qi(2)] {
            let (d, rep) = reduce(1, 2, &a, &b, &eps, &canonical_full(2), &ReduceOptions::default()).unwrap();
            assert_eq!(rep.kind, ReduceKind::Chebyshev);
            assert_eq!(d.size(), pow2_ceil(pair_count(4, &eps)));
            let e = rep.expected.clone().unwrap();
            assert!(rep.value.clone().unwrap() <= e && e < qi(1));
            let prod = FooledDistribution::product(a.clone(), b.clone()).unwrap();
            assert_eq!(err(&d, &prod, 1, 2).unwrap(), rep.err);
            assert!(rep.err <= eps);
        }
    }

    #[test]
    fn chebyshev_reduce_canonical_counter() {
        let sys = AutomatonSystem::counter(1, -6, 6, 8, Arc::new(|_, _, r| if r == 1 { 1 } else { -1 })).unwrap();
        let fam = canonical_counter(&sys).unwrap();
        let repeated = |t: usize| explicit_range(&sys, t, &[all_strings(2), all_strings(2), all_strings(2), all_strings(2)].concat());
        let (a, b) = (repeated(0), repeated(2));
        let eps = qi(2);
        let opts = ReduceOptions { work_cap: 1 << 17, materialize_cap: 1 << 10 };
        let (d, rep) = reduce(1, sys.eta, &a, &b, &eps, &fam, &opts).unwrap();
        assert!(rep.classes < sys.eta * sys.eta);
        assert_eq!(rep.kind, ReduceKind::Chebyshev);
        let prod = FooledDistribution::product(a, b).unwrap();
        assert!(err(&d, &prod, 1, sys.eta).unwrap() <= eps);
    }

    #[test]
    fn fool_small_counter() {
        let sys = AutomatonSystem::counter(1, -8, 8, 8, Arc::new(|_, _, r| if r == 1 { 1 } else { -1 })).unwrap();
        let fam = canonical_counter(&sys).unwrap();
        let opts = ReduceOptions::default();
        let out = fool(&sys, 0, 8, &q(1, 2), &fam, &opts).unwrap();
        assert!(err_vs_uniform(&sys, &out.dist).unwrap() <= q(1, 2));
        assert!(out.dist.size() <= fool_support_bound(&sys, 0, 8, &q(1, 2), &fam, &opts));
        assert_eq!(out.reports.len(), 7);
        let h1 = fool(&sys, 3, 1, &q(1, 2), &fam, &opts).unwrap();
        assert_eq!(h1.dist.size(), 2);
        assert_eq!(err_vs_uniform(&sys, &h1.dist).unwrap(), qi(0));
    }

    #[test]
    fn deterministic() {
        let sys = parity();
        let a = explicit_range(&sys, 0, &all_strings(3));
        let b = explicit_range(&sys, 3, &all_strings(3));
        let r1 = reduce(1, 2, &a, &b, &q(1, 2), &canonical_full(2), &ReduceOptions::default()).unwrap().0.materialize(64).unwrap();
        let r2 = reduce(1, 2, &a, &b, &q(1, 2), &canonical_full(2), &ReduceOptions::default()).unwrap().0.materialize(64).unwrap();
        assert_eq!(r1, r2);
    }
}
