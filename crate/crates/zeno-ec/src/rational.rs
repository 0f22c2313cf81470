//! Exact rational arithmetic helpers on top of `num_rational::BigRational`.
//!
//! Time points, fluent values and constraint coefficients are all reduced
//! fractions of arbitrary-precision integers, so decimal literals in the
//! surface syntax (`16.25`, `0.000001`) stay exact.

use num_bigint::BigInt;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rat = num_rational::BigRational;

/// Integer-valued rational.
pub fn rat(n: i64) -> Rat {
    Rat::from_integer(BigInt::from(n))
}

/// `n / d` as a reduced rational. Panics on `d == 0`.
pub fn ratio(n: i64, d: i64) -> Rat {
    Rat::new(BigInt::from(n), BigInt::from(d))
}

/// Parse a decimal literal such as `18.125` into the exact fraction 145/8.
/// Accepts an optional leading sign and requires digits on both sides of
/// the point when a point is present.
pub fn parse_decimal(s: &str) -> Option<Rat> {
    let (sign, rest) = match s.as_bytes().first() {
        Some(b'-') => (-1i64, &s[1..]),
        Some(b'+') => (1, &s[1..]),
        _ => (1, s),
    };
    let (int_part, frac_part) = match rest.split_once('.') {
        Some((i, f)) => (i, f),
        None => (rest, ""),
    };
    if int_part.is_empty() || !int_part.bytes().all(|b| b.is_ascii_digit()) {
        return None;
    }
    if rest.contains('.') && (frac_part.is_empty() || !frac_part.bytes().all(|b| b.is_ascii_digit()))
    {
        return None;
    }
    let mut num: BigInt = int_part.parse().ok()?;
    let mut den = BigInt::one();
    for b in frac_part.bytes() {
        num = num * 10 + (b - b'0');
        den *= 10;
    }
    Some(Rat::new(num * sign, den))
}

/// Parse either a decimal literal (`19.5`) or a fraction (`145/8`),
/// with an optional leading sign on the numerator.
pub fn parse_rat(s: &str) -> Option<Rat> {
    match s.split_once('/') {
        Some((n, d)) => {
            let num = parse_decimal(n.trim())?;
            let den = parse_decimal(d.trim())?;
            if den.is_zero() || !num.denom().is_one() || !den.denom().is_one() {
                return None;
            }
            Some(num / den)
        }
        None => parse_decimal(s.trim()),
    }
}

/// Render a rational exactly: as a finite decimal when the reduced
/// denominator is of the form 2^a * 5^b, otherwise as `p/q`.
pub fn format_rat(r: &Rat) -> String {
    let num = r.numer();
    let den = r.denom();
    if den.is_one() {
        return num.to_string();
    }
    // Strip factors of 2 and 5 from the denominator.
    let two = BigInt::from(2);
    let five = BigInt::from(5);
    let mut rest = den.clone();
    let (mut a, mut b) = (0u32, 0u32);
    while (&rest % &two).is_zero() {
        rest /= &two;
        a += 1;
    }
    while (&rest % &five).is_zero() {
        rest /= &five;
        b += 1;
    }
    if !rest.is_one() {
        return format!("{num}/{den}");
    }
    let k = a.max(b);
    // Scale numerator so the denominator becomes 10^k.
    let scale = two.pow(k - a) * five.pow(k - b);
    let scaled = (num * scale).abs();
    let digits = scaled.to_string();
    let digits = if digits.len() <= k as usize {
        format!("{}{}", "0".repeat(k as usize + 1 - digits.len()), digits)
    } else {
        digits
    };
    let point = digits.len() - k as usize;
    let sign = if num.is_negative() { "-" } else { "" };
    format!("{}{}.{}", sign, &digits[..point], &digits[point..])
}

/// Lossy f64 view, used only for diagnostics and stats, never for reasoning.
pub fn to_f64(r: &Rat) -> f64 {
    r.numer()
        .to_f64()
        .and_then(|n| r.denom().to_f64().map(|d| n / d))
        .unwrap_or(f64::NAN)
}
