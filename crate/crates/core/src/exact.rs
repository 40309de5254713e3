//! Exact numbers of the form `A + B·π²` with rational `A`, `B`.
//!
//! Lengths are entered either as rationals (`"3/2"`, `"6.5"`) or as rational
//! multiples of π (`"pi"`, `"2*pi"`, `"pi/2"`). Squared lengths, squared
//! wavenumbers and the critical values all live in the field `Q + Q·π²`, and
//! since π² is irrational two such numbers are equal exactly when both
//! components agree.

use std::fmt;
use std::ops::{Add, Mul, Sub};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

use crate::error::{KsError, Result};

/// Exact length: `factor` or `factor·π`.
#[derive(Clone, Debug, PartialEq)]
pub struct ExactLength {
    pub factor: BigRational,
    pub times_pi: bool,
}

impl ExactLength {
    pub fn to_f64(&self) -> f64 {
        let f = self.factor.to_f64().unwrap_or(f64::NAN);
        if self.times_pi { f * std::f64::consts::PI } else { f }
    }

    /// Exact value of `(m π / L)²`.
    pub fn wavenumber_sq(&self, m: u64) -> PiQuad {
        let m2 = BigRational::from_integer(BigInt::from(m) * BigInt::from(m));
        let inv = (self.factor.clone() * self.factor.clone()).recip();
        if self.times_pi {
            PiQuad { rat: m2 * inv, pi2: BigRational::zero() }
        } else {
            PiQuad { rat: BigRational::zero(), pi2: m2 * inv }
        }
    }
}

/// `rat + pi2·π²`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PiQuad {
    pub rat: BigRational,
    pub pi2: BigRational,
}

impl PiQuad {
    pub fn zero() -> Self {
        PiQuad { rat: BigRational::zero(), pi2: BigRational::zero() }
    }

    pub fn rational(r: BigRational) -> Self {
        PiQuad { rat: r, pi2: BigRational::zero() }
    }

    pub fn to_f64(&self) -> f64 {
        let p2 = std::f64::consts::PI * std::f64::consts::PI;
        self.rat.to_f64().unwrap_or(f64::NAN) + self.pi2.to_f64().unwrap_or(f64::NAN) * p2
    }

    pub fn scale(&self, s: i64) -> PiQuad {
        let s = BigRational::from_integer(BigInt::from(s));
        PiQuad { rat: self.rat.clone() * s.clone(), pi2: self.pi2.clone() * s }
    }
}

impl Add for PiQuad {
    type Output = PiQuad;
    fn add(self, o: PiQuad) -> PiQuad {
        PiQuad { rat: self.rat + o.rat, pi2: self.pi2 + o.pi2 }
    }
}

impl Sub for PiQuad {
    type Output = PiQuad;
    fn sub(self, o: PiQuad) -> PiQuad {
        PiQuad { rat: self.rat - o.rat, pi2: self.pi2 - o.pi2 }
    }
}

impl Mul<&BigRational> for PiQuad {
    type Output = PiQuad;
    fn mul(self, s: &BigRational) -> PiQuad {
        PiQuad { rat: self.rat * s, pi2: self.pi2 * s }
    }
}

impl fmt::Display for PiQuad {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (self.rat.is_zero(), self.pi2.is_zero()) {
            (_, true) => write!(f, "{}", self.rat),
            (true, false) => write!(f, "{}*pi^2", self.pi2),
            _ => write!(f, "{} + {}*pi^2", self.rat, self.pi2),
        }
    }
}

/// Parses an exact rational from `"p"`, `"p/q"` or a finite decimal such as `"-6.25"` or `"1e-3"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || KsError::InvalidInput(format!("cannot parse `{s}` as an exact rational"));
    if let Some((p, q)) = s.split_once('/') {
        let p = parse_rational(p)?;
        let q = parse_rational(q)?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(p / q);
    }
    let (mant, exp) = match s.find(['e', 'E']) {
        Some(i) => (&s[..i], s[i + 1..].parse::<i32>().map_err(|_| bad())?),
        None => (s, 0),
    };
    let (neg, mant) = match mant.strip_prefix('-') {
        Some(m) => (true, m),
        None => (false, mant.strip_prefix('+').unwrap_or(mant)),
    };
    let (int_part, frac_part) = mant.split_once('.').unwrap_or((mant, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(bad());
    }
    if !int_part.chars().chain(frac_part.chars()).all(|c| c.is_ascii_digit()) {
        return Err(bad());
    }
    let digits = format!("{int_part}{frac_part}");
    let num: BigInt = digits.parse().map_err(|_| bad())?;
    let scale = exp - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut r = BigRational::from_integer(num);
    if scale >= 0 {
        r *= BigRational::from_integer(num_traits::pow(ten, scale as usize));
    } else {
        r /= BigRational::from_integer(num_traits::pow(ten, (-scale) as usize));
    }
    Ok(if neg { -r } else { r })
}

/// Parses a length literal: a rational, `pi`, `c*pi`, `pi*c`, `pi/c`, `c*pi/d`.
pub fn parse_length(s: &str) -> Result<ExactLength> {
    let t: String = s.chars().filter(|c| !c.is_whitespace()).collect::<String>().to_lowercase();
    if !t.contains("pi") {
        let f = parse_rational(&t)?;
        return Ok(ExactLength { factor: f, times_pi: false });
    }
    let (before, after) = t.split_once("pi").unwrap();
    if after.contains("pi") {
        return Err(KsError::InvalidInput(format!("length `{s}` may mention pi at most once")));
    }
    let mut factor = BigRational::one();
    if !before.is_empty() {
        let b = before.strip_suffix('*').unwrap_or(before);
        factor *= parse_rational(b)?;
    }
    if !after.is_empty() {
        if let Some(d) = after.strip_prefix('/') {
            factor /= parse_rational(d)?;
        } else if let Some(m) = after.strip_prefix('*') {
            factor *= parse_rational(m)?;
        } else {
            return Err(KsError::InvalidInput(format!("cannot parse length `{s}`")));
        }
    }
    Ok(ExactLength { factor, times_pi: true })
}

/// Returns true when the rational is strictly positive.
pub fn is_positive(r: &BigRational) -> bool {
    r.is_positive()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(p: i64, d: i64) -> BigRational {
        BigRational::new(BigInt::from(p), BigInt::from(d))
    }

    #[test]
    fn parses_rationals_and_decimals() {
        assert_eq!(parse_rational("7/1").unwrap(), q(7, 1));
        assert_eq!(parse_rational("6.5").unwrap(), q(13, 2));
        assert_eq!(parse_rational("-0.25").unwrap(), q(-1, 4));
        assert_eq!(parse_rational("1e-3").unwrap(), q(1, 1000));
        assert_eq!(parse_rational("2.5e1").unwrap(), q(25, 1));
        assert!(parse_rational("abc").is_err());
        assert!(parse_rational("1/0").is_err());
    }

    #[test]
    fn parses_lengths() {
        let l = parse_length("pi").unwrap();
        assert!(l.times_pi && l.factor == q(1, 1));
        let l = parse_length("2*pi").unwrap();
        assert!(l.times_pi && l.factor == q(2, 1));
        let l = parse_length("3pi/2").unwrap();
        assert!(l.times_pi && l.factor == q(3, 2));
        let l = parse_length("1.5").unwrap();
        assert!(!l.times_pi && l.factor == q(3, 2));
        assert!((parse_length("pi/2").unwrap().to_f64() - std::f64::consts::FRAC_PI_2).abs() < 1e-15);
    }

    #[test]
    fn wavenumbers_land_in_the_right_component() {
        let a = parse_length("pi").unwrap();
        assert_eq!(a.wavenumber_sq(3), PiQuad::rational(q(9, 1)));
        let b = parse_length("1").unwrap();
        let w = b.wavenumber_sq(2);
        assert!(w.rat.is_zero() && w.pi2 == q(4, 1));
    }
}
