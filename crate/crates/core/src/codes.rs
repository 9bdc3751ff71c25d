//! GF(2^r) arithmetic and the van der Monde fooling code.
//!
//! Codewords are at most 128 bits; coordinate `k` of a word is bit `k`.

use crate::ensembles::Ensemble;
use crate::error::{Error, Result};

/// Codeword / code-vector type.
pub type Word = u128;

/// (modulus, primitive element) for r = 1..=32; re-verified on construction.
const FIELD_TABLE: [(u64, u64); 32] = [
    (0x3, 0x1),
    (0x7, 0x2),
    (0xB, 0x2),
    (0x13, 0x2),
    (0x25, 0x2),
    (0x43, 0x2),
    (0x83, 0x2),
    (0x11D, 0x2),
    (0x211, 0x2),
    (0x409, 0x2),
    (0x805, 0x2),
    (0x1053, 0x2),
    (0x201B, 0x2),
    (0x4443, 0x2),
    (0x8003, 0x2),
    (0x1100B, 0x2),
    (0x20009, 0x2),
    (0x40081, 0x2),
    (0x80027, 0x2),
    (0x100009, 0x2),
    (0x200005, 0x2),
    (0x400003, 0x2),
    (0x800021, 0x2),
    (0x1000087, 0x2),
    (0x2000009, 0x2),
    (0x4000047, 0x2),
    (0x8000027, 0x2),
    (0x10000009, 0x2),
    (0x20000005, 0x2),
    (0x40800007, 0x2),
    (0x80000009, 0x2),
    (0x100400007, 0x2),
];

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Gf2Field {
    pub r: u32,
    pub modulus: u64,
    pub alpha: u64,
}

fn deg(p: u64) -> i32 {
    63 - p.leading_zeros() as i32
}

/// Remainder of carryless polynomial division.
fn poly_mod(mut a: u64, m: u64) -> u64 {
    let dm = deg(m);
    while a != 0 && deg(a) >= dm {
        a ^= m << (deg(a) - dm);
    }
    a
}

fn is_irreducible(m: u64) -> bool {
    let r = deg(m);
    if r < 1 {
        return false;
    }
    // every divisor of degree 1..=r/2
    for d in 1..=(r / 2) {
        for p in (1u64 << d)..(1u64 << (d + 1)) {
            if poly_mod(m, p) == 0 {
                return false;
            }
        }
    }
    true
}

fn prime_factors(mut n: u64) -> Vec<u64> {
    let mut out = Vec::new();
    let mut p = 2;
    while p * p <= n {
        if n % p == 0 {
            out.push(p);
            while n % p == 0 {
                n /= p;
            }
        }
        p += 1;
    }
    if n > 1 {
        out.push(n);
    }
    out
}

impl Gf2Field {
    /// Field for `r` bits from the built-in table, with both properties re-checked.
    pub fn new(r: u32) -> Result<Self> {
        if !(1..=32).contains(&r) {
            return Err(Error::NoPrimitive(r));
        }
        let (modulus, alpha) = FIELD_TABLE[r as usize - 1];
        Self::with_params(r, modulus, alpha).or_else(|_| {
            let size = 1u64 << r;
            (1..size)
                .find_map(|a| Self::with_params(r, modulus, a).ok())
                .ok_or(Error::NoPrimitive(r))
        })
    }

    pub fn with_params(r: u32, modulus: u64, alpha: u64) -> Result<Self> {
        if deg(modulus) != r as i32 || !is_irreducible(modulus) || alpha == 0 || alpha >> r != 0 {
            return Err(Error::NoPrimitive(r));
        }
        let f = Gf2Field { r, modulus, alpha };
        if !f.alpha_is_primitive() {
            return Err(Error::NoPrimitive(r));
        }
        Ok(f)
    }

    pub fn order(&self) -> u64 {
        (1u64 << self.r) - 1
    }

    fn alpha_is_primitive(&self) -> bool {
        let ord = self.order();
        if self.r <= 20 {
            let mut x = self.alpha;
            let mut k = 1u64;
            while x != 1 {
                x = self.mul(x, self.alpha);
                k += 1;
                if k > ord {
                    return false;
                }
            }
            k == ord
        } else {
            if self.pow(self.alpha, ord) != 1 {
                return false;
            }
            prime_factors(ord).into_iter().all(|p| self.pow(self.alpha, ord / p) != 1)
        }
    }

    pub fn add(&self, a: u64, b: u64) -> u64 {
        a ^ b
    }

    pub fn mul(&self, a: u64, b: u64) -> u64 {
        debug_assert!(a >> self.r == 0 && b >> self.r == 0);
        let mut acc = 0u64;
        let mut a = a;
        let mut b = b;
        let top = 1u64 << self.r;
        while b != 0 {
            if b & 1 == 1 {
                acc ^= a;
            }
            b >>= 1;
            a <<= 1;
            if a & top != 0 {
                a ^= self.modulus;
            }
        }
        acc
    }

    pub fn pow(&self, a: u64, mut e: u64) -> u64 {
        let mut base = a;
        let mut acc = 1u64;
        while e > 0 {
            if e & 1 == 1 {
                acc = self.mul(acc, base);
            }
            base = self.mul(base, base);
            e >>= 1;
        }
        acc
    }
}

/// A binary code over ground ids `0..words.len()`.
#[derive(Clone, Debug)]
pub struct BinaryCode {
    pub length: usize,
    pub words: Vec<Word>,
    /// Ground shape `(n, t)`: id `i*t + j` is element `(i, j)`; `t = 1` for plain `[n]`.
    pub shape: (usize, usize),
}

impl BinaryCode {
    pub fn tabulated(length: usize, words: Vec<Word>) -> Result<Self> {
        if length > 128 {
            return Err(Error::CodeTooLong(length));
        }
        let n = words.len();
        Ok(BinaryCode { length, words, shape: (n, 1) })
    }

    pub fn encode_set(&self, e: &[u32]) -> Word {
        e.iter().fold(0, |acc, &g| acc ^ self.words[g as usize])
    }

    /// Parity of `A(i)•y` for every ground id.
    pub fn decode(&self, y: Word) -> Vec<bool> {
        self.words.iter().map(|w| (w & y).count_ones() % 2 == 1).collect()
    }
}

/// Field exponent `r` used for a `(n, t)` ground set.
///
/// Smallest r with 2^r ≥ n·t, raised when needed so that the n variable
/// exponents stay distinct mod 2^r − 1 and the t window powers stay
/// linearly independent (t ≤ r).
pub fn vandermonde_r(n: usize, t: usize) -> u32 {
    let mut r = 1u32;
    while (1u128 << r) < (n as u128) * (t as u128) {
        r += 1;
    }
    while ((1u128 << r) - 1) < n as u128 || (r as usize) < t {
        r += 1;
    }
    r
}

/// Word for (i, j) is (α^j, α^{j+i}, …, α^{j+2wi}) with exponents mod 2^r − 1.
pub fn vandermonde_code(n: usize, t: usize, w: usize) -> Result<BinaryCode> {
    if n == 0 || t == 0 || w == 0 {
        return Err(Error::Invalid("vandermonde_code needs n, t, w ≥ 1".into()));
    }
    let r = vandermonde_r(n, t);
    let field = Gf2Field::new(r)?;
    let length = r as usize * (2 * w + 1);
    if length > 128 {
        return Err(Error::CodeTooLong(length));
    }
    let ord = field.order();
    let mut words = Vec::with_capacity(n * t);
    for i in 0..n as u64 {
        for j in 0..t as u64 {
            let mut word: Word = 0;
            for blk in 0..=(2 * w as u64) {
                let e = (j + blk * i) % ord;
                let v = field.pow(field.alpha, e) as Word;
                word |= v << (blk as usize * r as usize);
            }
            words.push(word);
        }
    }
    Ok(BinaryCode { length, words, shape: (n, t) })
}

/// True iff `encode_set` is injective on each ensemble's support union.
pub fn verify_fools(code: &BinaryCode, ensembles: &[Ensemble]) -> bool {
    ensembles.iter().all(|e| {
        let mut enc: Vec<(Word, &[u32])> = e
            .side1
            .iter()
            .chain(e.side2.iter())
            .map(|(s, _)| (code.encode_set(s), s.as_slice()))
            .collect();
        enc.sort_unstable();
        enc.windows(2).all(|p| p[0].0 != p[1].0 || p[0].1 == p[1].1)
    })
}
