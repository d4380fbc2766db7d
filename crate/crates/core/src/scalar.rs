//! Scalar field abstraction shared by every solver in the crate.
//!
//! Two implementations are provided: [`Rational`] (arbitrary precision,
//! exact) and `f64`. Sign and zero tests take a tolerance that the exact
//! type ignores.

use std::fmt::{Debug, Display};
use std::ops::{Add, Div, Mul, Neg, Sub};
use std::str::FromStr;

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use thiserror::Error;

/// Exact rational number used by the reference solver mode.
pub type Rational = BigRational;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("cannot parse {text:?} as a number")]
pub struct ParseScalarError {
    pub text: String,
}

/// Scalar mode selector, mostly used by the CLI and file loaders.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub enum Mode {
    #[default]
    Rational,
    Float,
}

impl FromStr for Mode {
    type Err = ParseScalarError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "rational" => Ok(Mode::Rational),
            "float" => Ok(Mode::Float),
            _ => Err(ParseScalarError { text: s.to_string() }),
        }
    }
}

impl Display for Mode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Mode::Rational => f.write_str("rational"),
            Mode::Float => f.write_str("float"),
        }
    }
}

pub trait Scalar:
    Clone
    + Debug
    + Display
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Zero
    + One
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
{
    /// `true` when arithmetic is exact and tolerances are ignored.
    const EXACT: bool;
    const MODE: Mode;

    fn from_i64(v: i64) -> Self;

    fn ratio(num: i64, den: i64) -> Self {
        Self::from_i64(num) / Self::from_i64(den)
    }

    /// Converts a float. Rationals take the exact binary value of `v`.
    fn from_f64(v: f64) -> Option<Self>;

    fn to_f64(&self) -> f64;

    /// Parses `"p/q"`, integers, decimals and scientific notation.
    fn parse_scalar(text: &str) -> Result<Self, ParseScalarError>;

    /// Canonical text form: `"p/q"` or `"p"` for rationals, shortest
    /// round-tripping decimal for floats.
    fn to_text(&self) -> String {
        self.to_string()
    }

    fn abs(&self) -> Self;

    fn add_ref(&self, other: &Self) -> Self;
    fn sub_ref(&self, other: &Self) -> Self;
    fn mul_ref(&self, other: &Self) -> Self;
    fn div_ref(&self, other: &Self) -> Self;

    /// `self -= a * b`, the tableau update kernel.
    fn sub_mul_assign(&mut self, a: &Self, b: &Self);

    fn is_zero_tol(&self, tol: f64) -> bool;

    fn is_pos_tol(&self, tol: f64) -> bool;

    fn is_neg_tol(&self, tol: f64) -> bool;

    fn approx_eq(&self, other: &Self, tol: f64) -> bool {
        self.sub_ref(other).is_zero_tol(tol)
    }

    /// `self <= other` up to `tol`.
    fn le_tol(&self, other: &Self, tol: f64) -> bool {
        !self.sub_ref(other).is_pos_tol(tol)
    }

    fn is_finite_value(&self) -> bool;
}

impl Scalar for Rational {
    const EXACT: bool = true;
    const MODE: Mode = Mode::Rational;

    fn from_i64(v: i64) -> Self {
        Rational::from_integer(BigInt::from(v))
    }

    fn ratio(num: i64, den: i64) -> Self {
        Rational::new(BigInt::from(num), BigInt::from(den))
    }

    fn from_f64(v: f64) -> Option<Self> {
        Rational::from_float(v)
    }

    fn to_f64(&self) -> f64 {
        ToPrimitive::to_f64(self).unwrap_or(f64::NAN)
    }

    fn parse_scalar(text: &str) -> Result<Self, ParseScalarError> {
        parse_rational(text).ok_or_else(|| ParseScalarError {
            text: text.to_string(),
        })
    }

    fn abs(&self) -> Self {
        Signed::abs(self)
    }

    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }

    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }

    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }

    fn div_ref(&self, other: &Self) -> Self {
        self / other
    }

    fn sub_mul_assign(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }

    fn is_zero_tol(&self, _tol: f64) -> bool {
        self.is_zero()
    }

    fn is_pos_tol(&self, _tol: f64) -> bool {
        self.is_positive()
    }

    fn is_neg_tol(&self, _tol: f64) -> bool {
        self.is_negative()
    }

    fn is_finite_value(&self) -> bool {
        true
    }
}

impl Scalar for f64 {
    const EXACT: bool = false;
    const MODE: Mode = Mode::Float;

    fn from_i64(v: i64) -> Self {
        v as f64
    }

    fn from_f64(v: f64) -> Option<Self> {
        v.is_finite().then_some(v)
    }

    fn to_f64(&self) -> f64 {
        *self
    }

    fn parse_scalar(text: &str) -> Result<Self, ParseScalarError> {
        let err = || ParseScalarError {
            text: text.to_string(),
        };
        let t = text.trim();
        let v = match t.split_once('/') {
            Some((n, d)) => {
                let n: f64 = n.trim().parse().map_err(|_| err())?;
                let d: f64 = d.trim().parse().map_err(|_| err())?;
                if d == 0.0 {
                    return Err(err());
                }
                n / d
            }
            None => t.parse().map_err(|_| err())?,
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(err())
        }
    }

    fn abs(&self) -> Self {
        f64::abs(*self)
    }

    fn add_ref(&self, other: &Self) -> Self {
        self + other
    }

    fn sub_ref(&self, other: &Self) -> Self {
        self - other
    }

    fn mul_ref(&self, other: &Self) -> Self {
        self * other
    }

    fn div_ref(&self, other: &Self) -> Self {
        self / other
    }

    fn sub_mul_assign(&mut self, a: &Self, b: &Self) {
        *self -= a * b;
    }

    fn is_zero_tol(&self, tol: f64) -> bool {
        f64::abs(*self) <= tol
    }

    fn is_pos_tol(&self, tol: f64) -> bool {
        *self > tol
    }

    fn is_neg_tol(&self, tol: f64) -> bool {
        *self < -tol
    }

    fn is_finite_value(&self) -> bool {
        self.is_finite()
    }
}

/// Exact parse of `p/q`, `123`, `-1.25`, `3e-2`, `1.5E+3`.
fn parse_rational(text: &str) -> Option<Rational> {
    let t = text.trim();
    if t.is_empty() {
        return None;
    }
    if let Some((n, d)) = t.split_once('/') {
        let n = parse_rational(n)?;
        let d = parse_rational(d)?;
        if d.is_zero() {
            return None;
        }
        return Some(n / d);
    }
    let (mantissa, exponent) = match t.find(['e', 'E']) {
        Some(pos) => (&t[..pos], t[pos + 1..].parse::<i32>().ok()?),
        None => (t, 0),
    };
    let (negative, digits) = match mantissa.as_bytes().first()? {
        b'-' => (true, &mantissa[1..]),
        b'+' => (false, &mantissa[1..]),
        _ => (false, mantissa),
    };
    let (int_part, frac_part) = digits.split_once('.').unwrap_or((digits, ""));
    if int_part.is_empty() && frac_part.is_empty() {
        return None;
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return None;
    }
    let all: String = format!("{int_part}{frac_part}");
    let numer: BigInt = if all.is_empty() { BigInt::zero() } else { all.parse().ok()? };
    let scale = exponent - frac_part.len() as i32;
    let ten = BigInt::from(10);
    let mut value = if scale >= 0 {
        Rational::from_integer(numer * num_traits::pow(ten, scale as usize))
    } else {
        Rational::new(numer, num_traits::pow(ten, (-scale) as usize))
    };
    if negative {
        value = -value;
    }
    Some(value)
}

/// Dot product of two equally long slices.
pub fn dot<S: Scalar>(a: &[S], b: &[S]) -> S {
    a.iter()
        .zip(b)
        .fold(S::zero(), |acc, (x, y)| acc + x.mul_ref(y))
}

pub fn unit_vector<S: Scalar>(dim: usize, axis: usize) -> Vec<S> {
    (0..dim)
        .map(|i| if i == axis { S::one() } else { S::zero() })
        .collect()
}

pub fn scale<S: Scalar>(v: &[S], k: &S) -> Vec<S> {
    v.iter().map(|x| x.mul_ref(k)).collect()
}

pub fn add_vec<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.add_ref(y)).collect()
}

pub fn sub_vec<S: Scalar>(a: &[S], b: &[S]) -> Vec<S> {
    a.iter().zip(b).map(|(x, y)| x.sub_ref(y)).collect()
}

/// Converts an exact vector into another scalar mode.
pub fn convert<S: Scalar, U: Scalar>(v: &S) -> U {
    if S::EXACT && U::EXACT {
        U::parse_scalar(&v.to_text()).expect("exact text always parses")
    } else {
        U::from_f64(v.to_f64()).unwrap_or_else(U::zero)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(n: i64, d: i64) -> Rational {
        Rational::ratio(n, d)
    }

    #[test]
    fn parses_fractions_and_decimals_exactly() {
        assert_eq!(Rational::parse_scalar("37/30").unwrap(), q(37, 30));
        assert_eq!(Rational::parse_scalar("0.1").unwrap(), q(1, 10));
        assert_eq!(Rational::parse_scalar("-1.25").unwrap(), q(-5, 4));
        assert_eq!(Rational::parse_scalar("3e-2").unwrap(), q(3, 100));
        assert_eq!(Rational::parse_scalar("1.5E+3").unwrap(), q(1500, 1));
        assert_eq!(Rational::parse_scalar(".5").unwrap(), q(1, 2));
        assert_eq!(Rational::parse_scalar("2/4").unwrap(), q(1, 2));
        assert!(Rational::parse_scalar("1/0").is_err());
        assert!(Rational::parse_scalar("abc").is_err());
        assert!(Rational::parse_scalar("").is_err());
        assert!(Rational::parse_scalar("-").is_err());
    }

    #[test]
    fn float_parse_accepts_fractions() {
        assert_eq!(f64::parse_scalar("1/4").unwrap(), 0.25);
        assert_eq!(f64::parse_scalar("1e-9").unwrap(), 1e-9);
        assert!(f64::parse_scalar("inf").is_err());
    }

    #[test]
    fn text_round_trip() {
        for s in ["37/30", "-7/3", "5", "0"] {
            let v = Rational::parse_scalar(s).unwrap();
            assert_eq!(v.to_text(), s);
        }
        let x = 0.1f64 + 0.2;
        assert_eq!(f64::parse_scalar(&x.to_text()).unwrap(), x);
    }

    #[test]
    fn tolerance_semantics() {
        assert!(1e-12f64.is_zero_tol(1e-9));
        assert!(!q(1, 1_000_000_000_000).is_zero_tol(1e-9));
        assert!(!q(1, 1_000_000_000_000).is_neg_tol(1e-9));
        assert!(q(-1, 1_000_000_000_000).is_neg_tol(1e-3));
    }

    #[test]
    fn convert_between_modes() {
        let v: f64 = convert(&q(1, 4));
        assert_eq!(v, 0.25);
        let r: Rational = convert(&q(2, 3));
        assert_eq!(r, q(2, 3));
    }
}
