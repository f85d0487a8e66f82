//! Fixed-point money and fractional quantities.
//!
//! Prices compare exactly: [`Money`] holds ten-thousandths of a currency unit
//! and [`Qty`] holds millionths of a resource unit. Predicted demand is
//! fractional (spread or LP-relaxed), so curves use [`Qty`] while committed
//! resources stay integral.

use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Mul, Sub, SubAssign};
use std::str::FromStr;

use serde::{Deserialize, Deserializer, Serialize, Serializer};

const MONEY_SCALE: i64 = 10_000;
const QTY_SCALE: i64 = 1_000_000;

/// Amount of money with exactly four decimal places.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_raw(ten_thousandths: i64) -> Self {
        Money(ten_thousandths)
    }

    pub const fn from_units(units: i64) -> Self {
        Money(units * MONEY_SCALE)
    }

    pub const fn raw(self) -> i64 {
        self.0
    }

    /// Nearest representable amount, ties away from zero.
    pub fn from_f64(value: f64) -> Self {
        Money((value * MONEY_SCALE as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / MONEY_SCALE as f64
    }

    /// Divides by a positive integer, rounding half away from zero.
    pub fn div_round(self, divisor: u64) -> Money {
        assert!(divisor > 0, "division of money by zero");
        let d = divisor as i128;
        let n = self.0 as i128;
        let q = if n >= 0 { (2 * n + d) / (2 * d) } else { -((-2 * n + d) / (2 * d)) };
        Money(q as i64)
    }

    /// Multiplies by a nonnegative ratio, rounding to the nearest ten-thousandth.
    pub fn scale(self, ratio: f64) -> Money {
        Money::from_f64(self.to_f64() * ratio)
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl fmt::Display for Money {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let scale = MONEY_SCALE as u64;
        write!(f, "{sign}{}.{:04}", abs / scale, abs % scale)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
#[error("invalid decimal amount {0:?}")]
pub struct ParseDecimalError(pub String);

fn parse_fixed(s: &str, places: u32) -> Result<i64, ParseDecimalError> {
    let err = || ParseDecimalError(s.to_string());
    let t = s.trim();
    let (neg, body) = match t.strip_prefix('-') {
        Some(rest) => (true, rest),
        None => (false, t.strip_prefix('+').unwrap_or(t)),
    };
    let (int_part, frac_part) = match body.split_once('.') {
        Some((i, f)) => (i, f),
        None => (body, ""),
    };
    if int_part.is_empty() && frac_part.is_empty() {
        return Err(err());
    }
    if !int_part.chars().all(|c| c.is_ascii_digit()) || !frac_part.chars().all(|c| c.is_ascii_digit()) {
        return Err(err());
    }
    if frac_part.len() > places as usize {
        return Err(err());
    }
    let scale = 10i64.pow(places);
    let int: i64 = if int_part.is_empty() { 0 } else { int_part.parse().map_err(|_| err())? };
    let mut frac: i64 = if frac_part.is_empty() { 0 } else { frac_part.parse().map_err(|_| err())? };
    frac *= 10i64.pow(places - frac_part.len() as u32);
    let value = int.checked_mul(scale).and_then(|v| v.checked_add(frac)).ok_or_else(err)?;
    Ok(if neg { -value } else { value })
}

impl FromStr for Money {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed(s, 4).map(Money)
    }
}

impl Serialize for Money {
    fn serialize<S: Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for Money {
    fn deserialize<D: Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Repr {
            Text(String),
            Int(i64),
            Float(f64),
        }
        match Repr::deserialize(deserializer)? {
            Repr::Text(s) => s.parse().map_err(serde::de::Error::custom),
            Repr::Int(i) => Ok(Money::from_units(i)),
            Repr::Float(x) => Ok(Money::from_f64(x)),
        }
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0 + rhs.0)
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        self.0 += rhs.0;
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0 - rhs.0)
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        self.0 -= rhs.0;
    }
}

impl Mul<u64> for Money {
    type Output = Money;
    fn mul(self, rhs: u64) -> Money {
        Money(self.0 * rhs as i64)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, Add::add)
    }
}

impl<'a> Sum<&'a Money> for Money {
    fn sum<I: Iterator<Item = &'a Money>>(iter: I) -> Money {
        iter.copied().sum()
    }
}

/// A unit price that may be unbounded.
///
/// `Infinite` is both the "any price sells zero" answer of an inverse query
/// and the reject sentinel for units that cannot be promised at all.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Price {
    Finite(Money),
    Infinite,
}

impl Price {
    pub fn finite(self) -> Option<Money> {
        match self {
            Price::Finite(m) => Some(m),
            Price::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, Price::Infinite)
    }
}

impl fmt::Display for Price {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Price::Finite(m) => m.fmt(f),
            Price::Infinite => f.write_str("inf"),
        }
    }
}

/// Fractional resource quantity in millionths of a unit.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Qty(i64);

impl Qty {
    pub const ZERO: Qty = Qty(0);

    pub const fn from_micros(micros: i64) -> Self {
        Qty(micros)
    }

    pub const fn from_units(units: i64) -> Self {
        Qty(units * QTY_SCALE)
    }

    pub const fn micros(self) -> i64 {
        self.0
    }

    /// Rounds to the nearest millionth; this also snaps solver noise.
    pub fn from_f64(value: f64) -> Self {
        Qty((value * QTY_SCALE as f64).round() as i64)
    }

    pub fn to_f64(self) -> f64 {
        self.0 as f64 / QTY_SCALE as f64
    }

    /// `numerator / denominator` rounded to the nearest millionth.
    pub fn ratio(numerator: u64, denominator: u64) -> Qty {
        assert!(denominator > 0);
        let n = numerator as i128 * QTY_SCALE as i128;
        let d = denominator as i128;
        Qty(((2 * n + d) / (2 * d)) as i64)
    }

    pub fn is_positive(self) -> bool {
        self.0 > 0
    }

    pub fn is_negative(self) -> bool {
        self.0 < 0
    }
}

impl fmt::Display for Qty {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        let scale = QTY_SCALE as u64;
        write!(f, "{sign}{}.{:06}", abs / scale, abs % scale)
    }
}

impl FromStr for Qty {
    type Err = ParseDecimalError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        parse_fixed(s, 6).map(Qty)
    }
}

impl Add for Qty {
    type Output = Qty;
    fn add(self, rhs: Qty) -> Qty {
        Qty(self.0 + rhs.0)
    }
}

impl AddAssign for Qty {
    fn add_assign(&mut self, rhs: Qty) {
        self.0 += rhs.0;
    }
}

impl Sub for Qty {
    type Output = Qty;
    fn sub(self, rhs: Qty) -> Qty {
        Qty(self.0 - rhs.0)
    }
}

impl Sum for Qty {
    fn sum<I: Iterator<Item = Qty>>(iter: I) -> Qty {
        iter.fold(Qty::ZERO, Add::add)
    }
}
