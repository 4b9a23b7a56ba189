//! Exact rational scalars and the handful of piecewise-linear primitives
//! (truncations, dyadic rounding) every other crate builds on.

use num_bigint::{BigInt, Sign};
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, Zero};

use crate::error::CircuitError;

/// Arbitrary-precision exact rational. `num_rational` keeps every value in
/// lowest terms with a positive denominator.
pub type Rational = BigRational;

/// Builds `n / d` from machine integers. Panics on `d == 0`.
pub fn rat(n: i64, d: i64) -> Rational {
    Rational::new(BigInt::from(n), BigInt::from(d))
}

/// Builds the integer `n` as a rational.
pub fn int(n: i64) -> Rational {
    Rational::from_integer(BigInt::from(n))
}

/// `2^e` for any integer exponent.
pub fn pow2(e: i64) -> Rational {
    let base = BigInt::one() << (e.unsigned_abs() as usize);
    if e >= 0 {
        Rational::from_integer(base)
    } else {
        Rational::new(BigInt::one(), base)
    }
}

/// Integer power of a rational (negative exponents invert).
pub fn rpow(r: &Rational, e: i32) -> Rational {
    num_traits::pow::Pow::pow(r, e)
}

/// Parses an optional-sign `p/q` or integer token.
pub fn parse_rational(token: &str) -> Result<Rational, CircuitError> {
    let bad = || CircuitError::BadRational(token.to_string());
    let (num, den) = match token.split_once('/') {
        Some((n, d)) => (n, Some(d)),
        None => (token, None),
    };
    let digits_ok = |s: &str, signed: bool| {
        let body = if signed {
            s.strip_prefix(['+', '-']).unwrap_or(s)
        } else {
            s
        };
        !body.is_empty() && body.bytes().all(|b| b.is_ascii_digit())
    };
    if !digits_ok(num, true) {
        return Err(bad());
    }
    let n: BigInt = num.trim_start_matches('+').parse().map_err(|_| bad())?;
    let d: BigInt = match den {
        Some(d) => {
            if !digits_ok(d, false) {
                return Err(bad());
            }
            d.parse().map_err(|_| bad())?
        }
        None => BigInt::one(),
    };
    if d.is_zero() {
        return Err(bad());
    }
    Ok(Rational::new(n, d))
}

/// Canonical token: `p/q` in lowest terms, or a bare integer.
pub fn fmt_rational(r: &Rational) -> String {
    r.to_string()
}

/// `trunc(v) = min(1, max(0, v))`.
pub fn trunc01(v: &Rational) -> Rational {
    if v.is_negative() {
        Rational::zero()
    } else if *v > Rational::one() {
        Rational::one()
    } else {
        v.clone()
    }
}

/// `min(hi, max(lo, v))`.
pub fn trunc_interval(lo: &Rational, hi: &Rational, v: &Rational) -> Rational {
    if v < lo {
        lo.clone()
    } else if v > hi {
        hi.clone()
    } else {
        v.clone()
    }
}

/// Rounds `v` to the nearest multiple of `2^-bits`; exact halves go toward zero.
pub fn round_dyadic(v: &Rational, bits: u32) -> Rational {
    let scale = BigInt::one() << bits as usize;
    let scaled = v * Rational::from_integer(scale.clone());
    let mag = scaled.abs();
    let floor = mag.floor();
    let frac = &mag - &floor;
    let half = rat(1, 2);
    let rounded = if frac > half {
        floor + Rational::one()
    } else {
        floor
    };
    let signed = if v.is_negative() { -rounded } else { rounded };
    signed / Rational::from_integer(scale)
}

/// Rounds toward `-inf` onto the grid `2^-bits`.
pub fn floor_dyadic(v: &Rational, bits: u32) -> Rational {
    let scale = Rational::from_integer(BigInt::one() << bits as usize);
    (v * &scale).floor() / scale
}

/// Rounds toward `+inf` onto the grid `2^-bits`.
pub fn ceil_dyadic(v: &Rational, bits: u32) -> Rational {
    let scale = Rational::from_integer(BigInt::one() << bits as usize);
    (v * &scale).ceil() / scale
}

/// True when the denominator is a power of two.
pub fn is_dyadic(v: &Rational) -> bool {
    let d = v.denom();
    let tz = d.trailing_zeros().unwrap_or(0);
    (d >> tz as usize).is_one()
}

/// Number of fractional binary digits of a dyadic rational (`None` if the
/// denominator is not a power of two).
pub fn dyadic_bits(v: &Rational) -> Option<u32> {
    if !is_dyadic(v) {
        return None;
    }
    Some(v.denom().trailing_zeros().unwrap_or(0) as u32)
}

/// Smallest integer `e` with `2^e >= v` for positive `v`.
pub fn ceil_log2(v: &Rational) -> i64 {
    assert!(v.is_positive(), "ceil_log2 of a non-positive value");
    let mut e: i64 = (v.numer().bits() as i64) - (v.denom().bits() as i64);
    while pow2(e) < *v {
        e += 1;
    }
    while pow2(e - 1) >= *v {
        e -= 1;
    }
    e
}

/// `ceil(sqrt(n))` of a non-negative integer.
pub fn ceil_sqrt(n: &BigInt) -> BigInt {
    assert!(n.sign() != Sign::Minus, "ceil_sqrt of a negative integer");
    let r = n.sqrt();
    if &r * &r == *n {
        r
    } else {
        r + 1
    }
}

/// Least common multiple of the denominators of `values` (1 if empty).
pub fn denominator_lcm<'a>(values: impl IntoIterator<Item = &'a Rational>) -> BigInt {
    values
        .into_iter()
        .fold(BigInt::one(), |acc, v| acc.lcm(v.denom()))
}

/// Short digest-style description of a possibly enormous rational: bit
/// lengths of numerator and denominator. Decimal rendering of
/// million-bit integers is slow, so reports use this instead.
pub fn describe_size(v: &Rational) -> String {
    format!(
        "{}numerator {} bits / denominator {} bits",
        if v.is_negative() { "-" } else { "" },
        v.numer().bits(),
        v.denom().bits()
    )
}
