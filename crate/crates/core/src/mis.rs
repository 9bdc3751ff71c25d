//! Derandomized Luby maximal independent set.

use num_traits::{One, Zero};

use crate::bilinear::{maximize_bernoulli, ExpectationFactorization, QGroup, QMonomial};
use crate::error::{Error, Result};
use crate::rat::{ceil_log2, dyadic_floor, q, qi, Q};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Graph {
    pub n: usize,
    pub adj: Vec<Vec<usize>>,
    pub m: usize,
}

impl Graph {
    /// Drops self-loops and duplicate edges.
    pub fn from_edges(n: usize, edges: &[(usize, usize)]) -> Result<Self> {
        let mut adj = vec![Vec::new(); n];
        for &(u, v) in edges {
            if u >= n || v >= n {
                return Err(Error::Invalid(format!("edge ({}, {}) out of range for n = {}", u, v, n)));
            }
            if u != v {
                adj[u].push(v);
                adj[v].push(u);
            }
        }
        for a in adj.iter_mut() {
            a.sort_unstable();
            a.dedup();
        }
        let m = adj.iter().map(Vec::len).sum::<usize>() / 2;
        Ok(Graph { n, adj, m })
    }

    pub fn degree(&self, v: usize) -> usize {
        self.adj[v].len()
    }

    pub fn edges(&self) -> Vec<(usize, usize)> {
        (0..self.n).flat_map(|u| self.adj[u].iter().filter(move |&&v| u < v).map(move |&v| (u, v))).collect()
    }

    /// Subgraph induced by `keep` (sorted), relabelled to 0..keep.len().
    pub fn induced(&self, keep: &[usize]) -> Graph {
        let mut index = vec![usize::MAX; self.n];
        for (k, &v) in keep.iter().enumerate() {
            index[v] = k;
        }
        let adj = keep
            .iter()
            .map(|&v| self.adj[v].iter().filter(|&&u| index[u] != usize::MAX).map(|&u| index[u]).collect())
            .collect::<Vec<Vec<usize>>>();
        let m = adj.iter().map(Vec::len).sum::<usize>() / 2;
        Graph { n: keep.len(), adj, m }
    }
}

#[derive(Clone, Debug)]
pub struct MisRoundData {
    /// rank[v]: position of v in the degree order (degree, then index).
    pub rank: Vec<usize>,
    pub g: Vec<Q>,
    pub a: Vec<Q>,
    pub p: Vec<Q>,
    pub c: Q,
    pub bits: u32,
}

pub fn round_data(g: &Graph, c: &Q) -> Result<MisRoundData> {
    if g.m == 0 {
        return Err(Error::Invalid("round_data needs at least one edge".into()));
    }
    if (0..g.n).any(|v| g.degree(v) == 0) {
        return Err(Error::Invalid("round_data needs a graph without isolated vertices".into()));
    }
    let mut order: Vec<usize> = (0..g.n).collect();
    order.sort_by_key(|&v| (g.degree(v), v));
    let mut rank = vec![0; g.n];
    for (k, &v) in order.iter().enumerate() {
        rank[v] = k;
    }
    let gv: Vec<Q> = (0..g.n).map(|v| g.adj[v].iter().map(|&w| q(1, g.degree(w) as i64)).sum()).collect();
    let a: Vec<Q> = gv.iter().map(|x| Q::one().min(x.recip())).collect();
    let bits = ceil_log2(g.n as u64) + 2;
    let p = (0..g.n)
        .map(|v| {
            let raw = Q::one().min(c / qi(g.degree(v) as i64));
            dyadic_floor(&raw, bits)
        })
        .collect();
    Ok(MisRoundData { rank, g: gv, a, p, c: c.clone(), bits })
}

/// S(X) = Σ_v d(v)·S(v, X), evaluated literally.
pub fn estimator_s(g: &Graph, rd: &MisRoundData, x: &[bool]) -> Q {
    let mut total = Q::zero();
    for v in 0..g.n {
        let nb = &g.adj[v];
        let av = &rd.a[v];
        let marked = nb.iter().filter(|&&w| x[w]).count() as i64;
        let pairs = marked * (marked - 1) / 2;
        let mut edge_terms = 0i64;
        for &w in nb {
            if !x[w] {
                continue;
            }
            edge_terms += g.adj[w].iter().filter(|&&u| rd.rank[w] < rd.rank[u] && x[u]).count() as i64;
        }
        let sv = av * qi(marked) - av * av * qi(pairs) - av * qi(edge_terms);
        total += sv * qi(g.degree(v) as i64);
    }
    total
}

/// E_{X∼q}[S(X)] by linearity over independent coordinates.
pub fn expected_s(g: &Graph, rd: &MisRoundData, qv: &[Q]) -> Q {
    let mut total = Q::zero();
    for v in 0..g.n {
        let nb = &g.adj[v];
        let av = &rd.a[v];
        let sum: Q = nb.iter().map(|&w| qv[w].clone()).sum();
        let sq: Q = nb.iter().map(|&w| &qv[w] * &qv[w]).sum();
        let pairs = (&sum * &sum - sq) / qi(2);
        let mut edge_terms = Q::zero();
        for &w in nb {
            for &u in &g.adj[w] {
                if rd.rank[w] < rd.rank[u] {
                    edge_terms += &qv[w] * &qv[u];
                }
            }
        }
        let sv = av * sum - av * av * pairs - av * edge_terms;
        total += sv * qi(g.degree(v) as i64);
    }
    total
}

/// Bilinear expectation factorization of S: one group for all linear, square and
/// edge monomials, and one group per vertex of degree ≥ 2 for the squared neighbour sum.
pub fn factorization(g: &Graph, rd: &MisRoundData) -> ExpectationFactorization {
    let dv = |v: usize| qi(g.degree(v) as i64);
    let mut linear: Vec<QMonomial> = Vec::new();
    let mut groups = Vec::new();
    for w in 0..g.n {
        // Σ_{v ∈ N(w)} d(v) a_v, plus the diagonal correction of the pair terms.
        let lin: Q = g.adj[w].iter().map(|&v| dv(v) * &rd.a[v]).sum();
        linear.push(QMonomial { coef: lin, vars: vec![w] });
        let diag: Q = g.adj[w]
            .iter()
            .filter(|&&v| g.degree(v) >= 2)
            .map(|&v| dv(v) * &rd.a[v] * &rd.a[v] / qi(2))
            .sum();
        if !diag.is_zero() {
            linear.push(QMonomial { coef: diag, vars: vec![w, w] });
        }
        for &u in &g.adj[w] {
            if rd.rank[w] < rd.rank[u] {
                let coef: Q = g.adj[w].iter().map(|&v| dv(v) * &rd.a[v]).sum();
                linear.push(QMonomial { coef: -coef, vars: vec![w, u] });
            }
        }
    }
    groups.push(QGroup { left: linear, right: vec![QMonomial { coef: Q::one(), vars: vec![] }] });
    for v in 0..g.n {
        if g.degree(v) < 2 {
            continue;
        }
        let k = -(dv(v) * &rd.a[v] * &rd.a[v]) / qi(2);
        groups.push(QGroup {
            left: g.adj[v].iter().map(|&w| QMonomial { coef: k.clone(), vars: vec![w] }).collect(),
            right: g.adj[v].iter().map(|&w| QMonomial { coef: Q::one(), vars: vec![w] }).collect(),
        });
    }
    ExpectationFactorization { n: g.n, width: 2, groups }
}

/// Vertices marked in x that have no marked neighbour later in the degree order.
pub fn unmark(g: &Graph, rd: &MisRoundData, x: &[bool]) -> Vec<usize> {
    (0..g.n).filter(|&v| x[v] && !g.adj[v].iter().any(|&u| x[u] && rd.rank[u] > rd.rank[v])).collect()
}

pub fn h_count(g: &Graph, set: &[usize]) -> usize {
    let mut near = vec![false; g.n];
    for &v in set {
        near[v] = true;
        for &u in &g.adj[v] {
            near[u] = true;
        }
    }
    g.edges().into_iter().filter(|&(u, v)| near[u] || near[v]).count()
}

#[derive(Clone, Debug)]
pub struct RoundReport {
    pub n: usize,
    pub m: usize,
    pub c: Q,
    pub estimator: Q,
    pub expected: Q,
    pub h: usize,
    pub set_size: usize,
}

#[derive(Clone, Debug)]
pub struct FindIsOutcome {
    pub x: Vec<bool>,
    pub set: Vec<usize>,
    pub report: RoundReport,
}

pub const MAX_RETRIES: usize = 6;

/// One derandomized FIND-IS round on a graph without isolated vertices.
pub fn find_is_derandomized(g: &Graph, rd: &MisRoundData) -> Result<FindIsOutcome> {
    let expected = expected_s(g, rd, &rd.p);
    if expected <= Q::zero() {
        return Err(Error::Certification("expected estimator is not positive".into()));
    }
    let ef = factorization(g, rd);
    debug_assert_eq!(ef.expectation(&rd.p), expected);
    let out = maximize_bernoulli(&ef, &rd.p, rd.bits)?;
    let estimator = estimator_s(g, rd, &out.x);
    if estimator < expected {
        return Err(Error::Certification(format!("estimator {} below its expectation {}", estimator, expected)));
    }
    let set = unmark(g, rd, &out.x);
    let h = h_count(g, &set);
    let report = RoundReport { n: g.n, m: g.m, c: rd.c.clone(), estimator, expected, h, set_size: set.len() };
    Ok(FindIsOutcome { x: out.x, set, report })
}

/// Runs FIND-IS with c halved on a non-positive expectation, up to MAX_RETRIES times.
pub fn find_is_with_retries(g: &Graph, c: &Q) -> Result<FindIsOutcome> {
    let mut c = c.clone();
    for _ in 0..=MAX_RETRIES {
        let rd = round_data(g, &c)?;
        if expected_s(g, &rd, &rd.p) > Q::zero() {
            return find_is_derandomized(g, &rd);
        }
        c /= qi(2);
    }
    Err(Error::Certification("marking constant retries exhausted".into()))
}

#[derive(Clone, Debug)]
pub struct MisOutcome {
    pub set: Vec<usize>,
    pub rounds: Vec<RoundReport>,
}

pub fn default_c() -> Q {
    q(1, 4)
}

pub fn mis(g: &Graph, c: &Q) -> Result<MisOutcome> {
    let mut alive: Vec<usize> = (0..g.n).collect();
    let mut result = Vec::new();
    let mut rounds = Vec::new();
    loop {
        let sub = g.induced(&alive);
        let (isolated, rest): (Vec<usize>, Vec<usize>) = (0..sub.n).partition(|&v| sub.degree(v) == 0);
        result.extend(isolated.iter().map(|&v| alive[v]));
        if rest.is_empty() {
            break;
        }
        let core_vertices: Vec<usize> = rest.iter().map(|&v| alive[v]).collect();
        let core = g.induced(&core_vertices);
        let out = find_is_with_retries(&core, c)?;
        let mut removed = vec![false; core.n];
        for &v in &out.set {
            removed[v] = true;
            for &u in &core.adj[v] {
                removed[u] = true;
            }
        }
        result.extend(out.set.iter().map(|&v| core_vertices[v]));
        rounds.push(out.report);
        alive = (0..core.n).filter(|&v| !removed[v]).map(|v| core_vertices[v]).collect();
    }
    result.sort_unstable();
    if !is_maximal_independent(g, &result) {
        return Err(Error::Certification("output is not a maximal independent set".into()));
    }
    Ok(MisOutcome { set: result, rounds })
}

/// Exact independence and maximality check.
pub fn is_maximal_independent(g: &Graph, set: &[usize]) -> bool {
    let mut inset = vec![false; g.n];
    for &v in set {
        inset[v] = true;
    }
    let independent = g.edges().iter().all(|&(u, v)| !(inset[u] && inset[v]));
    let maximal = (0..g.n).all(|v| inset[v] || g.adj[v].iter().any(|&u| inset[u]));
    independent && maximal
}

pub fn round_bound(m: usize) -> f64 {
    20.0 * (1.0 + ((m + 1) as f64).log2())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn path(n: usize) -> Graph {
        Graph::from_edges(n, &(0..n - 1).map(|i| (i, i + 1)).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn round_data_examples() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let rd = round_data(&g, &default_c()).unwrap();
        assert_eq!(rd.g, vec![qi(1), qi(1)]);
        assert_eq!(rd.a, vec![qi(1), qi(1)]);
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        let rd = round_data(&star, &default_c()).unwrap();
        assert_eq!(rd.g[0], qi(3));
        assert_eq!(rd.a[0], q(1, 3));
        assert_eq!(rd.g[1], q(1, 3));
        assert_eq!(rd.a[1], qi(1));
        assert!(round_data(&Graph::from_edges(3, &[(0, 1)]).unwrap(), &default_c()).is_err());
    }

    #[test]
    fn estimator_examples() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let rd = round_data(&g, &default_c()).unwrap();
        assert_eq!(estimator_s(&g, &rd, &[false, false]), qi(0));
        assert_eq!(estimator_s(&g, &rd, &[true, false]), qi(1));
        // triangle, all marked: G(v) = 1/2 + 1/2, so a_v = 1 and d = 2.
        let t = Graph::from_edges(3, &[(0, 1), (1, 2), (0, 2)]).unwrap();
        let rd = round_data(&t, &default_c()).unwrap();
        let a = qi(1);
        // ranks are 0,1,2; v=0: N={1,2}: w=1→u∈{2}: 1 term, w=2: none → 1
        // v=1: N={0,2}: w=0→{1,2}: 2 terms; w=2: 0 → 2; v=2: N={0,1}: w=0→2, w=1→1 → 3
        let expect: Q = [1i64, 2, 3].iter().map(|&e| qi(2) * (&a * qi(2) - &a * &a - &a * qi(e))).sum();
        assert_eq!(estimator_s(&t, &rd, &[true, true, true]), expect);
    }

    #[test]
    fn h_count_examples() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        assert_eq!(h_count(&g, &[]), 0);
        assert_eq!(h_count(&g, &[0]), 1);
        let star = Graph::from_edges(4, &[(0, 1), (0, 2), (0, 3)]).unwrap();
        assert_eq!(h_count(&star, &[0]), 3);
    }

    #[test]
    fn factorization_matches_expectation() {
        let g = Graph::from_edges(5, &[(0, 1), (1, 2), (2, 3), (3, 0), (1, 3), (3, 4)]).unwrap();
        let rd = round_data(&g, &default_c()).unwrap();
        let ef = factorization(&g, &rd);
        let qv: Vec<Q> = (0..5).map(|i| q(i + 1, 7)).collect();
        assert_eq!(ef.expectation(&qv), expected_s(&g, &rd, &qv));
    }

    #[test]
    fn small_graphs() {
        let e = Graph::from_edges(4, &[]).unwrap();
        assert_eq!(mis(&e, &default_c()).unwrap().set, vec![0, 1, 2, 3]);
        let k: Vec<(usize, usize)> = (0..5).flat_map(|u| (u + 1..5).map(move |v| (u, v))).collect();
        let k5 = Graph::from_edges(5, &k).unwrap();
        assert_eq!(mis(&k5, &default_c()).unwrap().set.len(), 1);
        let p5 = path(5);
        let out = mis(&p5, &default_c()).unwrap();
        assert!(out.set.len() >= 2);
        assert!(is_maximal_independent(&p5, &out.set));
    }

    #[test]
    fn single_edge_round() {
        let g = Graph::from_edges(2, &[(0, 1)]).unwrap();
        let rd = round_data(&g, &default_c()).unwrap();
        let out = find_is_derandomized(&g, &rd).unwrap();
        assert_eq!(out.set.len(), 1);
    }
}
