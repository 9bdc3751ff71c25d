use std::collections::BTreeSet;
use std::sync::Arc;

use derand::apps::{distortion, gb_automata, jl_transform, set_discrepancy, DiscrepancyInstance, JlInstance};
use derand::automata::{canonical_counter, err, step_table, AutomatonSystem, FooledDistribution};
use derand::bilinear::{reconstruct, wht_table, Junta};
use derand::codes::{vandermonde_code, Gf2Field};
use derand::ensembles::{eval_s_direct, eval_t, grouped_conditional_expectation, lattice_search, Ensemble, Prefix};
use derand::fooling::{err_vs_uniform, fool, fool_support_bound, reduce, ReduceOptions};
use derand::gbgame::{gb_solve, q_param, scaled_bound_ceil, SignMatrix};
use derand::mis::{default_c, h_count, is_maximal_independent, mis, round_bound, Graph};
use derand::moments::{chebyshev, solve, MomentSystem, TablePeo};
use derand::oracles::gb_expected_sprime;
use derand::rat::{q, qi, Q};
use num_traits::{One, Zero};
use proptest::prelude::*;

fn weighted_set(n: u32) -> impl Strategy<Value = (Vec<u32>, Q)> {
    (prop::collection::vec(0..n, 0..=2), -6i64..=6, 1i64..=4).prop_map(|(s, a, b)| (s, q(a, b)))
}

fn ensembles() -> impl Strategy<Value = (usize, Vec<Ensemble>)> {
    (1usize..=12).prop_flat_map(|n| {
        let side = || prop::collection::vec(weighted_set(n as u32), 1..=5);
        (Just(n), prop::collection::vec((side(), side()).prop_map(|(a, b)| Ensemble::new(a, b)), 1..=3))
    })
}

fn graph() -> impl Strategy<Value = Graph> {
    (2usize..=24).prop_flat_map(|n| {
        prop::collection::vec((0..n, 0..n), 0..=3 * n).prop_map(move |pairs| {
            let edges: BTreeSet<(usize, usize)> = pairs.into_iter().filter(|(a, b)| a != b).map(|(a, b)| (a.min(b), a.max(b))).collect();
            Graph::from_edges(n, &edges.into_iter().collect::<Vec<_>>()).unwrap()
        })
    })
}

fn signs(rows: usize, cols: usize) -> impl Strategy<Value = Vec<Vec<i8>>> {
    prop::collection::vec(prop::collection::vec(prop::bool::ANY.prop_map(|b| if b { 1i8 } else { -1 }), cols), rows)
}

fn counter(lo: i64, hi: i64, horizon: usize, steps: Vec<(i64, i64)>) -> AutomatonSystem {
    let steps = Arc::new(steps);
    AutomatonSystem::counter(1, lo, hi, horizon, Arc::new(move |_, t, r| if r == 1 { steps[t].1 } else { steps[t].0 })).unwrap()
}

fn bits(h: usize, v: u32) -> Vec<u8> {
    (0..h).map(|k| ((v >> (h - 1 - k)) & 1) as u8).collect()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn alpha_is_a_single_cycle(r in 1u32..=14) {
        let f = Gf2Field::new(r).unwrap();
        let mut x = 1u64;
        let mut len = 0u64;
        loop {
            x = f.mul(f.alpha, x);
            len += 1;
            if x == 1 {
                break;
            }
            prop_assert!(len < f.order());
        }
        prop_assert_eq!(len, (1u64 << r) - 1);
    }

    #[test]
    fn codewords_distinct(n in 1usize..=40, t in 1usize..=3, w in 1usize..=3) {
        if let Ok(code) = vandermonde_code(n, t, w) {
            let words: BTreeSet<u128> = (0..(n * t) as u32).map(|g| code.encode_set(&[g])).collect();
            prop_assert_eq!(words.len(), n * t);
        }
    }

    #[test]
    fn grouped_expectation_and_search((n, es) in ensembles(), chunk in 1usize..=4, y in any::<u128>()) {
        let code = vandermonde_code(n, 1, 2).unwrap();
        let empty = grouped_conditional_expectation(&es, &code, &Prefix::new(vec![], chunk)).unwrap();
        let t: Q = es.iter().map(eval_t).sum();
        prop_assert_eq!(&empty, &t);
        let full: Vec<bool> = (0..code.length).map(|k| (y >> k) & 1 == 1).collect();
        let p = Prefix::new(full, chunk);
        let grouped = grouped_conditional_expectation(&es, &code, &p).unwrap();
        let x = code.decode(p.as_word());
        prop_assert_eq!(grouped, es.iter().map(|e| eval_s_direct(e, &x)).sum::<Q>());
        let out = lattice_search(&es, &code, chunk).unwrap();
        prop_assert!(out.trace.windows(2).all(|w| w[1] >= w[0]));
        prop_assert!(es.iter().map(|e| eval_s_direct(e, &out.x)).sum::<Q>() >= t);
    }

    #[test]
    fn wht_roundtrip(bits in 1u32..=2, support in prop::collection::btree_set(0usize..20, 0..=4), seed in any::<u64>()) {
        let support: Vec<usize> = support.into_iter().collect();
        let len = 1usize << (support.len() * bits as usize);
        let table: Vec<Q> = (0..len as u64).map(|i| q(((seed ^ i.wrapping_mul(0x9e37_79b9)) % 23) as i64 - 11, 1 + (i % 3) as i64)).collect();
        let j = Junta::new(support, bits, table.clone()).unwrap();
        prop_assert_eq!(reconstruct(&wht_table(&j)), table);
    }

    #[test]
    fn mis_rounds_certified(g in graph()) {
        let out = mis(&g, &default_c()).unwrap();
        prop_assert!(is_maximal_independent(&g, &out.set));
        prop_assert!(out.rounds.len() as f64 <= round_bound(g.m));
        for r in &out.rounds {
            prop_assert!(r.estimator >= r.expected);
            prop_assert!(qi(2 * r.h as i64) >= r.estimator);
        }
        prop_assert!(h_count(&g, &out.set) <= g.m);
    }

    #[test]
    fn gb_meets_scaled_bound(a in (1usize..=7).prop_flat_map(|n| signs(n, n))) {
        let n = a.len();
        let m = SignMatrix::new(a.clone()).unwrap();
        let out = gb_solve(&m).unwrap();
        prop_assert_eq!(&out.expected_s_prime, &gb_expected_sprime(n as u64));
        prop_assert!(out.s_prime >= out.expected_s_prime);
        prop_assert!(out.value >= scaled_bound_ceil(&out.expected_s_prime, &q_param(n)));
        let direct: i64 = a.iter().zip(&out.x).map(|(row, &xi)| row.iter().zip(&out.y).map(|(&v, &yj)| (v * xi * yj) as i64).sum::<i64>()).sum();
        prop_assert_eq!(direct, out.value);
    }

    #[test]
    fn chebyshev_solve_certifies(n in 2usize..=6, b in 1u32..=2, vals in prop::collection::vec(-2i64..=2, 24), a2 in 20i64..=200) {
        let tables: Vec<Vec<Vec<Q>>> = vec![(0..n).map(|i| (0..1usize << b).map(|x| qi(vals[(i * 4 + x) % vals.len()])).collect()).collect()];
        let sys = MomentSystem::new(n, b, vec![chebyshev(&qi(0), &qi(a2))], Some(tables.clone())).unwrap();
        let out = solve(&sys, &TablePeo(sys.tables.as_ref().unwrap())).unwrap();
        prop_assert!(out.trace.windows(2).all(|w| w[1] <= w[0]));
        prop_assert!(out.value <= out.expected);
        let l: i64 = (0..n).map(|i| vals[(i * 4 + out.x[i] as usize) % vals.len()]).sum();
        prop_assert_eq!(&out.value, &q(l * l, a2));
        if out.expected < Q::one() {
            prop_assert!(out.certified && qi(l * l) < qi(a2));
        }
    }

    #[test]
    fn equal_canonical_tables_agree(lo in -4i64..=-1, hi in 1i64..=4, steps in prop::collection::vec((-2i64..=2, -2i64..=2), 8), t in 0usize..=4, h in 1usize..=4) {
        let sys = counter(lo, hi, 8, steps);
        let fam = canonical_counter(&sys).unwrap();
        let all: Vec<_> = (0..1u32 << h).map(|v| step_table(&sys, &bits(h, v), t).unwrap()).collect();
        for a in &all {
            let ca = fam.canonical_table(a, 0);
            for s in 0..sys.eta {
                prop_assert_eq!(fam.apply(&ca, 0, t, h, s), Some(a.get(0, s)));
            }
            for b in &all {
                if fam.canonical_table(b, 0) == ca {
                    prop_assert_eq!(a, b);
                }
            }
        }
        let classes = fam.classes(0, t, h).len();
        for s in 0..sys.eta {
            let reach: BTreeSet<usize> = all.iter().map(|tab| tab.get(0, s)).collect();
            prop_assert!(reach.len() <= classes);
        }
    }

    #[test]
    fn err_triangle_and_subadditivity(picks in prop::collection::vec(prop::collection::vec(0u32..4, 1..=4), 6)) {
        let sys = AutomatonSystem::new(2, 3, 4, Arc::new(|i, r, s, t| (s + r as usize * (1 + i) + (t % 2) * i) % 3)).unwrap();
        let dist = |t: usize, p: &[u32]| {
            let items = p.iter().map(|&v| (bits(2, v), step_table(&sys, &bits(2, v), t).unwrap())).collect();
            FooledDistribution::explicit(t, 2, items).unwrap()
        };
        let (a, b, c) = (dist(0, &picks[0]), dist(0, &picks[1]), dist(0, &picks[2]));
        let ab = err(&a, &b, 2, 3).unwrap();
        prop_assert!(err(&a, &c, 2, 3).unwrap() <= &ab + err(&b, &c, 2, 3).unwrap());
        let (a2, b2) = (dist(2, &picks[3]), dist(2, &picks[4]));
        let pa = FooledDistribution::product(a.clone(), a2.clone()).unwrap();
        let pb = FooledDistribution::product(b.clone(), b2.clone()).unwrap();
        prop_assert!(err(&pa, &pb, 2, 3).unwrap() <= ab + err(&a2, &b2, 2, 3).unwrap());
    }

    #[test]
    fn fool_and_reduce_contracts(lo in -3i64..=-1, hi in 1i64..=3, steps in prop::collection::vec((-1i64..=1, -1i64..=1), 8), num in 1i64..=4) {
        let sys = counter(lo, hi, 8, steps);
        let fam = canonical_counter(&sys).unwrap();
        let eps = q(num, 4);
        let opts = ReduceOptions::default();
        let out = fool(&sys, 0, 8, &eps, &fam, &opts).unwrap();
        prop_assert!(err_vs_uniform(&sys, &out.dist).unwrap() <= eps);
        prop_assert!(out.dist.size() <= fool_support_bound(&sys, 0, 8, &eps, &fam, &opts));
        for r in &out.reports {
            prop_assert!(r.err <= r.eps);
        }
        let again = fool(&sys, 0, 8, &eps, &fam, &opts).unwrap();
        prop_assert_eq!(format!("{:?}", again.dist), format!("{:?}", out.dist));
        let half = |t: usize| fool(&sys, t, 4, &eps, &fam, &opts).unwrap().dist;
        let (d1, d2) = (half(0), half(4));
        let (r, rep) = reduce(1, sys.eta, &d1, &d2, &eps, &fam, &opts).unwrap();
        let prod = FooledDistribution::product(d1, d2).unwrap();
        let e = err(&r, &prod, 1, sys.eta).unwrap();
        prop_assert!(e <= eps);
        prop_assert_eq!(e, rep.err);
    }

    #[test]
    fn set_discrepancy_within_lambda(a in (1usize..=4, 2usize..=12).prop_flat_map(|(m, n)| prop::collection::vec(prop::collection::vec(-1i8..=1, n), m))) {
        let inst = DiscrepancyInstance::new(a.clone()).unwrap();
        let out = set_discrepancy(&inst, None, &ReduceOptions::default()).unwrap();
        let worst = a.iter().map(|row| row.iter().zip(&out.x).map(|(&v, &s)| (v * s) as i64).sum::<i64>().abs()).max().unwrap();
        prop_assert_eq!(worst, out.max_abs);
        prop_assert!(worst as f64 <= inst.lambda());
    }

    #[test]
    fn gb_automata_bound_holds(a in (1usize..=4).prop_flat_map(|n| signs(n, n))) {
        let m = SignMatrix::new(a.clone()).unwrap();
        let out = gb_automata(&m, None, &ReduceOptions::default()).unwrap();
        let direct: i64 = a.iter().zip(&out.x).map(|(row, &xi)| row.iter().zip(&out.y).map(|(&v, &yj)| (v * xi * yj) as i64).sum::<i64>()).sum();
        prop_assert_eq!(direct, out.value);
        prop_assert!(out.certified <= qi(out.value));
    }
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 6, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn jl_distortions_exact(coords in prop::collection::vec(-8i64..=8, 4), sign in prop::bool::ANY) {
        // unit vectors with dyadic coordinates: one basis vector plus a normalized pair
        let mut u = vec![vec![Q::zero(); 4]; 2];
        u[0][coords[0].unsigned_abs() as usize % 4] = if sign { qi(1) } else { qi(-1) };
        u[1][0] = q(3, 5);
        u[1][1 + coords[1].unsigned_abs() as usize % 3] = q(4, 5);
        let inst = JlInstance::new(u.clone(), q(1, 2), Some(4), None).unwrap();
        let out = jl_transform(&inst, &ReduceOptions::default()).unwrap();
        for (v, d) in u.iter().zip(&out.report.distortions) {
            prop_assert_eq!(&distortion(&out.l, v), d);
        }
        if out.report.certified {
            prop_assert!(out.report.max_distortion <= qi(1));
        } else {
            prop_assert!(!out.report.diagnostic.is_empty());
        }
    }
}

#[test]
fn fourth_moment_pointwise() {
    use derand::gbgame::fourth_moment_holds;
    for qv in [12i64, 39, 99] {
        for z in -100..=100 {
            assert!(fourth_moment_holds(z, &qi(qv)), "z={} q={}", z, qv);
        }
    }
}
