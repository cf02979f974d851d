//! Integer money. All balances, stakes and transfers are minor units (cents)
//! so accounting is exact; floating point never touches an account.

use serde::{Deserialize, Serialize};
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Neg, Sub, SubAssign};

/// An amount of money in minor units (cents). May be negative when used as a
/// delta; account balances themselves never go below zero.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Default, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Money(i64);

impl Money {
    pub const ZERO: Money = Money(0);

    pub const fn from_cents(cents: i64) -> Self {
        Money(cents)
    }

    /// Whole currency units (dollars) to cents.
    pub const fn from_units(units: i64) -> Self {
        Money(units * 100)
    }

    /// Parses a decimal currency amount, e.g. from config files. Rounds to
    /// the nearest cent (half away from zero).
    pub fn from_decimal(units: f64) -> Self {
        Money((units * 100.0).round() as i64)
    }

    pub const fn cents(self) -> i64 {
        self.0
    }

    pub fn is_zero(self) -> bool {
        self.0 == 0
    }

    pub fn min(self, other: Money) -> Money {
        Money(self.0.min(other.0))
    }

    pub fn max(self, other: Money) -> Money {
        Money(self.0.max(other.0))
    }

    /// `self * num / den`, rounding the quotient up. Used for lay liability,
    /// which is always rounded against the layer.
    pub fn mul_div_ceil(self, num: i64, den: i64) -> Money {
        debug_assert!(den > 0 && num >= 0 && self.0 >= 0);
        let prod = self.0 as i128 * num as i128;
        let den = den as i128;
        Money(((prod + den - 1) / den) as i64)
    }

    /// `self * num / den`, rounding the quotient down. Used for commission,
    /// which is always rounded in the bettor's favour.
    pub fn mul_div_floor(self, num: i64, den: i64) -> Money {
        debug_assert!(den > 0 && num >= 0 && self.0 >= 0);
        Money((self.0 as i128 * num as i128 / den as i128) as i64)
    }
}

impl Add for Money {
    type Output = Money;
    fn add(self, rhs: Money) -> Money {
        Money(self.0.checked_add(rhs.0).expect("money overflow"))
    }
}

impl Sub for Money {
    type Output = Money;
    fn sub(self, rhs: Money) -> Money {
        Money(self.0.checked_sub(rhs.0).expect("money underflow"))
    }
}

impl AddAssign for Money {
    fn add_assign(&mut self, rhs: Money) {
        *self = *self + rhs;
    }
}

impl SubAssign for Money {
    fn sub_assign(&mut self, rhs: Money) {
        *self = *self - rhs;
    }
}

impl Neg for Money {
    type Output = Money;
    fn neg(self) -> Money {
        Money(-self.0)
    }
}

impl Sum for Money {
    fn sum<I: Iterator<Item = Money>>(iter: I) -> Money {
        iter.fold(Money::ZERO, |a, b| a + b)
    }
}

impl fmt::Display for Money {
    /// Decimal units with two places, e.g. `12.34` or `-0.05`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let sign = if self.0 < 0 { "-" } else { "" };
        let abs = self.0.unsigned_abs();
        write!(f, "{sign}{}.{:02}", abs / 100, abs % 100)
    }
}
