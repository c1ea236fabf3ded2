//! Exact rational load levels.
//!
//! Load levels are kept as fractions of the full load so that sums of
//! implicit and explicit increments reproduce the total load exactly.

use std::fmt;

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct LoadFraction {
    num: u64,
    den: u64,
}

fn gcd(mut a: u128, mut b: u128) -> u128 {
    while b != 0 {
        (a, b) = (b, a % b);
    }
    a
}

impl LoadFraction {
    pub const ZERO: LoadFraction = LoadFraction { num: 0, den: 1 };
    pub const ONE: LoadFraction = LoadFraction { num: 1, den: 1 };

    pub fn new(num: u64, den: u64) -> Self {
        assert!(den > 0, "zero denominator");
        Self::reduced(num as u128, den as u128)
    }

    fn reduced(num: u128, den: u128) -> Self {
        let g = gcd(num, den).max(1);
        let (num, den) = (num / g, den / g);
        Self {
            num: u64::try_from(num).expect("load fraction numerator overflow"),
            den: u64::try_from(den).expect("load fraction denominator overflow"),
        }
    }

    pub fn num(self) -> u64 {
        self.num
    }

    pub fn den(self) -> u64 {
        self.den
    }

    pub fn value(self) -> f64 {
        if self.num == self.den {
            1.0
        } else {
            self.num as f64 / self.den as f64
        }
    }

    /// `self + (to − self)·k/parts`, for `self ≤ to`.
    pub fn lerp(self, to: LoadFraction, k: u64, parts: u64) -> LoadFraction {
        assert!(parts > 0);
        let (a, b) = (self.num as u128 * to.den as u128, to.num as u128 * self.den as u128);
        assert!(a <= b, "load fractions must increase");
        let den = self.den as u128 * to.den as u128 * parts as u128;
        let num = a * parts as u128 + (b - a) * k as u128;
        Self::reduced(num, den)
    }

    pub fn add(self, other: LoadFraction) -> LoadFraction {
        let num = self.num as u128 * other.den as u128 + other.num as u128 * self.den as u128;
        Self::reduced(num, self.den as u128 * other.den as u128)
    }

    /// `self − other`, for `other ≤ self`.
    pub fn sub(self, other: LoadFraction) -> LoadFraction {
        let (a, b) = (self.num as u128 * other.den as u128, other.num as u128 * self.den as u128);
        assert!(b <= a, "negative load fraction");
        Self::reduced(a - b, self.den as u128 * other.den as u128)
    }

    /// `self · num / den`.
    pub fn scale(self, num: u64, den: u64) -> LoadFraction {
        assert!(den > 0, "zero denominator");
        Self::reduced(self.num as u128 * num as u128, self.den as u128 * den as u128)
    }

    pub fn is_one(self) -> bool {
        self.num == self.den
    }
}

impl fmt::Display for LoadFraction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/{}", self.num, self.den)
    }
}
