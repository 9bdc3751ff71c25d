//! Exact rational helpers shared by every module.

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Q = BigRational;

pub fn q(n: i64, d: i64) -> Q {
    Q::new(BigInt::from(n), BigInt::from(d))
}

pub fn qi(n: i64) -> Q {
    Q::from_integer(BigInt::from(n))
}

pub fn zero() -> Q {
    Q::zero()
}

pub fn one() -> Q {
    Q::one()
}

/// 2^-k as an exact rational.
pub fn pow2_inv(k: u32) -> Q {
    Q::new(BigInt::one(), BigInt::one() << k as usize)
}

pub fn pow2(k: u32) -> Q {
    Q::from_integer(BigInt::one() << k as usize)
}

pub fn to_f64(x: &Q) -> f64 {
    match (x.numer().to_f64(), x.denom().to_f64()) {
        (Some(n), Some(d)) if n.is_finite() && d.is_finite() => n / d,
        _ => {
            // Very large operands: scale down by bit length first.
            let shift = x.denom().bits().max(x.numer().bits()).saturating_sub(1000);
            let n = (x.numer() >> shift as usize).to_f64().unwrap_or(f64::NAN);
            let d = (x.denom() >> shift as usize).to_f64().unwrap_or(f64::NAN);
            n / d
        }
    }
}

/// Parse "p/q", an integer, or a finite decimal such as "-0.125" exactly.
pub fn parse_rational(s: &str) -> Option<Q> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    if let Some((a, b)) = s.split_once('/') {
        let n: BigInt = a.trim().parse().ok()?;
        let d: BigInt = b.trim().parse().ok()?;
        if d.is_zero() {
            return None;
        }
        return Some(Q::new(n, d));
    }
    let (neg, body) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return None;
    }
    let digits = format!("{}{}", int_part, frac_part);
    let n: BigInt = if digits.is_empty() { BigInt::zero() } else { digits.parse().ok()? };
    let d = num_traits::pow(BigInt::from(10), frac_part.len());
    let v = Q::new(n, d);
    Some(if neg { -v } else { v })
}

pub fn fmt_q(x: &Q) -> String {
    if x.is_integer() {
        x.numer().to_string()
    } else {
        format!("{}/{}", x.numer(), x.denom())
    }
}

/// True iff the denominator is a power of two no larger than 2^b.
pub fn is_dyadic_with(x: &Q, b: u32) -> bool {
    let d = x.denom();
    let bits = d.bits();
    d == &(BigInt::one() << (bits as usize - 1)) && bits as u32 - 1 <= b
}

/// Largest k/2^b not exceeding x, for x ≥ 0.
pub fn dyadic_floor(x: &Q, b: u32) -> Q {
    let scaled = x * pow2(b);
    Q::new(scaled.floor().to_integer(), BigInt::one() << b as usize)
}

pub fn ceil_to_u64(x: &Q) -> Option<u64> {
    x.ceil().to_integer().to_u64()
}

pub fn abs(x: &Q) -> Q {
    x.abs()
}

/// Least common multiple of the denominators.
pub fn lcm_denoms<'a, I: IntoIterator<Item = &'a Q>>(it: I) -> BigInt {
    let mut l = BigInt::one();
    for x in it {
        if !x.denom().is_one() {
            l = l.lcm(x.denom());
        }
    }
    l
}

pub fn ceil_log2(n: u64) -> u32 {
    if n <= 1 {
        0
    } else {
        64 - (n - 1).leading_zeros()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_fractions_and_decimals() {
        assert_eq!(parse_rational("3/4"), Some(q(3, 4)));
        assert_eq!(parse_rational("-0.125"), Some(q(-1, 8)));
        assert_eq!(parse_rational("2"), Some(qi(2)));
        assert_eq!(parse_rational(".5"), Some(q(1, 2)));
        assert_eq!(parse_rational("1/0"), None);
        assert_eq!(parse_rational("abc"), None);
    }

    #[test]
    fn dyadic_helpers() {
        assert!(is_dyadic_with(&q(3, 8), 3));
        assert!(!is_dyadic_with(&q(3, 8), 2));
        assert!(!is_dyadic_with(&q(1, 3), 10));
        assert_eq!(dyadic_floor(&q(1, 3), 3), q(2, 8));
        assert_eq!(ceil_log2(1), 0);
        assert_eq!(ceil_log2(5), 3);
        assert_eq!(ceil_log2(8), 3);
    }
}
