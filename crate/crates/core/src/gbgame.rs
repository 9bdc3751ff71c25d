//! Gale–Berlekamp switching game by the fourth-moment method.

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

use crate::bilinear::{maximize, Factorization, Group, Junta};
use crate::error::{Error, Result};
use crate::rat::{qi, Q};

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct SignMatrix {
    pub n: usize,
    pub a: Vec<Vec<i8>>,
}

impl SignMatrix {
    pub fn new(a: Vec<Vec<i8>>) -> Result<Self> {
        let n = a.len();
        if n == 0 || a.iter().any(|r| r.len() != n) {
            return Err(Error::Invalid("sign matrix must be square and nonempty".into()));
        }
        if a.iter().flatten().any(|&v| v != 1 && v != -1) {
            return Err(Error::Invalid("sign matrix entries must be ±1".into()));
        }
        Ok(SignMatrix { n, a })
    }
}

pub fn row_sums(a: &SignMatrix, y: &[i8]) -> Vec<i64> {
    a.a.iter().map(|row| row.iter().zip(y).map(|(&x, &y)| x as i64 * y as i64).sum()).collect()
}

/// q = 3(1 + 3n).
pub fn q_param(n: usize) -> Q {
    qi(3 * (1 + 3 * n as i64))
}

/// S'(y) = Σ_i (R_i² − R_i⁴/q).
pub fn s_prime(a: &SignMatrix, y: &[i8]) -> Q {
    let q = q_param(a.n);
    row_sums(a, y)
        .into_iter()
        .map(|r| {
            let r2 = qi(r * r);
            &r2 - &r2 * &r2 / &q
        })
        .sum()
}

struct GbFactorization<'a> {
    a: &'a SignMatrix,
    q: Q,
}

fn sign_pair(j1: usize, j2: usize, c: Q) -> Junta {
    Junta::from_fn(vec![j1, j2], 1, |z| if (z[0] ^ z[1]) == 1 { -c.clone() } else { c.clone() })
        .expect("pair junta")
}

impl Factorization for GbFactorization<'_> {
    fn n(&self) -> usize {
        self.a.n
    }
    fn bits(&self) -> u32 {
        1
    }
    fn width(&self) -> usize {
        2
    }
    fn window(&self) -> u32 {
        1
    }
    fn groups(&self, _fixed: u32, _tw: u32, _f0: &[u64]) -> Vec<Group> {
        let n = self.a.n;
        let qinv = self.q.recip();
        self.a
            .a
            .iter()
            .map(|row| {
                // R² = n + 2Σ_{j1<j2} a_{j1}a_{j2} y_{j1}y_{j2}; ordered pairs merged.
                let mut left = vec![Junta::constant(qi(n as i64))];
                let mut right = vec![Junta::constant(Q::one() - qi(n as i64) * &qinv)];
                for j1 in 0..n {
                    for j2 in j1 + 1..n {
                        let s = qi(2 * row[j1] as i64 * row[j2] as i64);
                        right.push(sign_pair(j1, j2, -(&s * &qinv)));
                        left.push(sign_pair(j1, j2, s));
                    }
                }
                Group { left, right }
            })
            .collect()
    }
}

#[derive(Clone, Debug)]
pub struct GbOutcome {
    pub x: Vec<i8>,
    pub y: Vec<i8>,
    pub value: i64,
    pub s_prime: Q,
    pub expected_s_prime: Q,
    pub trace: Vec<Q>,
}

pub fn gb_solve(a: &SignMatrix) -> Result<GbOutcome> {
    let f = GbFactorization { a, q: q_param(a.n) };
    let out = maximize(&f)?;
    let y: Vec<i8> = out.x.entries.iter().map(|&b| 1 - 2 * b as i8).collect();
    let r = row_sums(a, &y);
    let x: Vec<i8> = r.iter().map(|&ri| if ri >= 0 { 1 } else { -1 }).collect();
    let value = r.iter().map(|ri| ri.abs()).sum();
    let sp = s_prime(a, &y);
    let expected = out.trace[0].clone();
    if sp < expected {
        return Err(Error::Certification("S'(y) below its expectation".into()));
    }
    Ok(GbOutcome { x, y, value, s_prime: sp, expected_s_prime: expected, trace: out.trace })
}

/// Smallest integer k ≥ 0 with k ≥ (3√3/(2√q))·e, i.e. 4q·k² ≥ 27e².
pub fn scaled_bound_ceil(e: &Q, q: &Q) -> i64 {
    if e <= &Q::zero() {
        return 0;
    }
    let target = qi(27) * e * e / (qi(4) * q);
    ceil_sqrt(&target)
}

/// Smallest integer k ≥ 0 with k² ≥ x.
pub fn ceil_sqrt(x: &Q) -> i64 {
    let approx = crate::rat::to_f64(x).sqrt().floor() as i64;
    let mut k = (approx - 2).max(0);
    while qi(k * k) < *x {
        k += 1;
    }
    k
}

/// ⌈n^{3/2}/√3⌉: smallest k with 3k² ≥ n³.
pub fn headline_ceil(n: usize) -> i64 {
    let n3 = BigInt::from(n as u64).pow(3);
    ceil_sqrt(&Q::new(n3, BigInt::from(3)))
}

pub fn scale_factor(q: &Q) -> f64 {
    3.0 * 3f64.sqrt() / (2.0 * crate::rat::to_f64(q).sqrt())
}

/// Exact check of |z| ≥ (3√3/(2√q))(z² − z⁴/q).
pub fn fourth_moment_holds(z: i64, q: &Q) -> bool {
    let z2 = qi(z * z);
    let poly = &z2 - &z2 * &z2 / q;
    if !poly.is_positive() {
        return true;
    }
    let lhs = qi(4) * q * &z2;
    let rhs = qi(27) * &poly * &poly;
    lhs >= rhs
}
