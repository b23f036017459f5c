//! Exact rational arithmetic helpers.
//!
//! Every measure, width, and breakpoint in this crate is a rational number
//! kept in reduced canonical form with a positive denominator. The backing
//! type already guarantees canonical form on every operation; this module
//! adds the constructors and the `p/q` text form shared by the file formats.

use num_bigint::BigInt;
use num_traits::Zero;

/// Arbitrary-precision rational in reduced canonical form.
pub type Ratio = num_rational::BigRational;

/// Builds `n/d`. Panics if `d == 0`.
pub fn rat(n: i64, d: i64) -> Ratio {
    Ratio::new(BigInt::from(n), BigInt::from(d))
}

/// Builds the integer `n` as a rational.
pub fn rat_int(n: i64) -> Ratio {
    Ratio::from_integer(BigInt::from(n))
}

/// Formats as `p/q`, always spelling the denominator (`3` prints as `3/1`).
pub fn fmt_ratio(r: &Ratio) -> String {
    format!("{}/{}", r.numer(), r.denom())
}

/// Parses `p/q` or a bare integer `p`. Surrounding whitespace is ignored;
/// the result is reduced and sign-normalized.
pub fn parse_ratio(s: &str) -> Result<Ratio, String> {
    let s = s.trim();
    if s.is_empty() {
        return Err("empty rational".to_string());
    }
    let (num_s, den_s) = match s.split_once('/') {
        Some((n, d)) => (n, d),
        None => (s, "1"),
    };
    let num: BigInt = num_s
        .trim()
        .parse()
        .map_err(|_| format!("bad numerator in {s:?}"))?;
    let den: BigInt = den_s
        .trim()
        .parse()
        .map_err(|_| format!("bad denominator in {s:?}"))?;
    if den.is_zero() {
        return Err(format!("zero denominator in {s:?}"));
    }
    Ok(Ratio::new(num, den))
}
