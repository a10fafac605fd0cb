//! Exact rational values.
//!
//! Every score in the engine is a rational number. Two wrappers exist:
//!
//! - [`Fraction`] is the input form used by rulebooks and the marketplace for
//!   factors such as conditional levels or royalty rates. It reads JSON
//!   numbers (`0.6`), decimal strings (`"0.6"`) and ratio strings (`"3/5"`).
//! - [`Exact`] is the output form. It renders as a decimal rounded to two
//!   places next to the raw numerator and denominator so audits can check the
//!   unrounded value.

use std::cmp::Ordering;
use std::fmt;
use std::str::FromStr;

use num_bigint::BigInt;
use num_integer::Integer;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::de::{self, Visitor};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid rational literal {0:?}")]
pub struct ParseRationalError(pub String);

/// Parses `"12"`, `"-0.25"`, `"3/5"` into an exact rational.
pub fn parse_rational(text: &str) -> Result<BigRational, ParseRationalError> {
    let err = || ParseRationalError(text.to_string());
    let s = text.trim();
    if s.is_empty() {
        return Err(err());
    }
    if let Some((n, d)) = s.split_once('/') {
        let n: BigInt = n.trim().parse().map_err(|_| err())?;
        let d: BigInt = d.trim().parse().map_err(|_| err())?;
        if d.is_zero() {
            return Err(err());
        }
        return Ok(BigRational::new(n, d));
    }
    let (negative, digits) = match s.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, s.strip_prefix('+').unwrap_or(s)),
    };
    let (int_part, frac_part) = match digits.split_once('.') {
        Some((i, f)) => (i, f),
        None => (digits, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.bytes().chain(frac_part.bytes()).all(|b| b.is_ascii_digit()) {
        return Err(err());
    }
    let mut numer: BigInt = format!("0{int_part}{frac_part}").parse().map_err(|_| err())?;
    if negative {
        numer = -numer;
    }
    let denom = num_traits::pow(BigInt::from(10u8), frac_part.len());
    Ok(BigRational::new(numer, denom))
}

/// Renders `value` as a decimal with `places` digits, rounding half away from zero.
pub fn to_decimal_string(value: &BigRational, places: usize) -> String {
    let scale = num_traits::pow(BigInt::from(10u8), places);
    let scaled = value.abs() * BigRational::from_integer(scale.clone());
    let (q, r) = scaled.numer().div_rem(scaled.denom());
    let twice = r * 2u8;
    let rounded = if &twice >= scaled.denom() { q + 1u8 } else { q };
    let (int_part, frac_part) = rounded.div_rem(&scale);
    let sign = if value.is_negative() && !rounded_is_zero(&int_part, &frac_part) {
        "-"
    } else {
        ""
    };
    if places == 0 {
        return format!("{sign}{int_part}");
    }
    format!("{sign}{int_part}.{:0>width$}", frac_part.to_string(), width = places)
}

fn rounded_is_zero(a: &BigInt, b: &BigInt) -> bool {
    a.is_zero() && b.is_zero()
}

/// Exact decimal expansion when the denominator only has factors 2 and 5.
fn terminating_decimal(value: &BigRational) -> Option<String> {
    let mut d = value.denom().clone();
    let two = BigInt::from(2u8);
    let five = BigInt::from(5u8);
    let mut twos = 0usize;
    let mut fives = 0usize;
    while d.is_even() {
        d /= &two;
        twos += 1;
    }
    while (&d % &five).is_zero() {
        d /= &five;
        fives += 1;
    }
    if !d.is_one() {
        return None;
    }
    Some(to_decimal_string(value, twos.max(fives)))
}

/// A rational factor read from configuration.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Fraction(BigRational);

impl Fraction {
    pub fn new(numer: i64, denom: i64) -> Self {
        Fraction(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_integer(value: i64) -> Self {
        Fraction(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        Fraction(BigRational::zero())
    }

    pub fn one() -> Self {
        Fraction(BigRational::one())
    }

    pub fn ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn into_ratio(self) -> BigRational {
        self.0
    }

    pub fn is_unit_interval(&self) -> bool {
        !self.0.is_negative() && self.0 <= BigRational::one()
    }

    pub fn is_one(&self) -> bool {
        self.0.is_one()
    }

    /// Lossy conversion, for display and plotting only.
    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }
}

impl From<BigRational> for Fraction {
    fn from(value: BigRational) -> Self {
        Fraction(value)
    }
}

impl FromStr for Fraction {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rational(s).map(Fraction)
    }
}

impl fmt::Display for Fraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match terminating_decimal(&self.0) {
            Some(s) => f.write_str(&s),
            None => write!(f, "{}/{}", self.0.numer(), self.0.denom()),
        }
    }
}

impl PartialOrd for Fraction {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Fraction {
    fn cmp(&self, other: &Self) -> Ordering {
        self.0.cmp(&other.0)
    }
}

impl Serialize for Fraction {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        // Short terminating decimals survive an f64 round trip through the
        // shortest-representation printer; anything else goes out as text.
        if let Some(text) = terminating_decimal(&self.0) {
            let significant = text.bytes().filter(u8::is_ascii_digit).count();
            if significant <= 15 {
                if let Ok(v) = text.parse::<f64>() {
                    if self.0.is_integer() {
                        if let Some(i) = self.0.to_integer().to_i64() {
                            return serializer.serialize_i64(i);
                        }
                    }
                    return serializer.serialize_f64(v);
                }
            }
        }
        serializer.serialize_str(&format!("{}/{}", self.0.numer(), self.0.denom()))
    }
}

impl<'de> Deserialize<'de> for Fraction {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        struct FractionVisitor;

        impl Visitor<'_> for FractionVisitor {
            type Value = Fraction;

            fn expecting(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str("a number, a decimal string or a ratio string like \"3/5\"")
            }

            fn visit_i64<E: de::Error>(self, v: i64) -> Result<Fraction, E> {
                Ok(Fraction::from_integer(v))
            }

            fn visit_u64<E: de::Error>(self, v: u64) -> Result<Fraction, E> {
                Ok(Fraction(BigRational::from_integer(v.into())))
            }

            fn visit_f64<E: de::Error>(self, v: f64) -> Result<Fraction, E> {
                if !v.is_finite() {
                    return Err(E::custom("non-finite number"));
                }
                // `Display` for f64 prints the shortest decimal that reads back
                // to the same double, which recovers the literal in the file.
                parse_rational(&format!("{v}")).map(Fraction).map_err(E::custom)
            }

            fn visit_str<E: de::Error>(self, v: &str) -> Result<Fraction, E> {
                parse_rational(v).map(Fraction).map_err(E::custom)
            }
        }

        deserializer.deserialize_any(FractionVisitor)
    }
}

/// An exact computed value (points or a derived factor).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Exact(BigRational);

impl Exact {
    pub fn new(numer: i64, denom: i64) -> Self {
        Exact(BigRational::new(numer.into(), denom.into()))
    }

    pub fn from_integer(value: i64) -> Self {
        Exact(BigRational::from_integer(value.into()))
    }

    pub fn zero() -> Self {
        Exact(BigRational::zero())
    }

    pub fn ratio(&self) -> &BigRational {
        &self.0
    }

    pub fn into_ratio(self) -> BigRational {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.0.is_negative()
    }

    /// Two-place decimal, half away from zero.
    pub fn to_decimal(&self) -> String {
        to_decimal_string(&self.0, 2)
    }

    pub fn to_f64(&self) -> f64 {
        self.0.to_f64().unwrap_or(f64::NAN)
    }

    pub fn sum<'a>(values: impl IntoIterator<Item = &'a Exact>) -> Exact {
        Exact(values.into_iter().map(|v| &v.0).fold(BigRational::zero(), |acc, v| acc + v))
    }
}

impl From<BigRational> for Exact {
    fn from(value: BigRational) -> Self {
        Exact(value)
    }
}

impl From<&Fraction> for Exact {
    fn from(value: &Fraction) -> Self {
        Exact(value.0.clone())
    }
}

impl FromStr for Exact {
    type Err = ParseRationalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_rational(s).map(Exact)
    }
}

impl fmt::Display for Exact {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_decimal())
    }
}

#[derive(Serialize, Deserialize)]
struct ExactRepr {
    value: String,
    numerator: String,
    denominator: String,
}

impl Serialize for Exact {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        ExactRepr {
            value: self.to_decimal(),
            numerator: self.0.numer().to_string(),
            denominator: self.0.denom().to_string(),
        }
        .serialize(serializer)
    }
}

impl<'de> Deserialize<'de> for Exact {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let repr = ExactRepr::deserialize(deserializer)?;
        let n: BigInt = repr.numerator.parse().map_err(de::Error::custom)?;
        let d: BigInt = repr.denominator.parse().map_err(de::Error::custom)?;
        if d.is_zero() {
            return Err(de::Error::custom("zero denominator"));
        }
        Ok(Exact(BigRational::new(n, d)))
    }
}
