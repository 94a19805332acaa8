//! Exact dyadic rationals `num / 2^log2_den` for laminate weights.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::Add;

use serde::{Deserialize, Serialize};

/// Largest supported denominator exponent; keeps every sum of weights exact
/// in a `u128` numerator.
pub const MAX_LOG2_DEN: u32 = 127;

/// Nonnegative dyadic rational kept in lowest terms.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Dyadic {
    #[serde(rename = "w_num")]
    num: u128,
    #[serde(rename = "w_log2_den")]
    log2_den: u32,
}

impl Dyadic {
    pub const ZERO: Dyadic = Dyadic { num: 0, log2_den: 0 };
    pub const ONE: Dyadic = Dyadic { num: 1, log2_den: 0 };

    /// `num / 2^log2_den`; panics if the denominator exceeds [`MAX_LOG2_DEN`].
    pub fn new(num: u128, log2_den: u32) -> Self {
        assert!(log2_den <= MAX_LOG2_DEN, "dyadic denominator 2^{log2_den} too large");
        Dyadic { num, log2_den }.reduced()
    }

    /// `2^{-k}`.
    pub fn pow2_inv(k: u32) -> Self {
        Self::new(1, k)
    }

    pub fn numerator(&self) -> u128 {
        self.num
    }

    pub fn log2_denominator(&self) -> u32 {
        self.log2_den
    }

    pub fn is_zero(&self) -> bool {
        self.num == 0
    }

    /// Multiplies by `2^{-k}`.
    pub fn shr(&self, k: u32) -> Self {
        if self.num == 0 {
            return Self::ZERO;
        }
        Self::new(self.num, self.log2_den + k)
    }

    pub fn to_f64(&self) -> f64 {
        self.num as f64 * (-(self.log2_den as f64)).exp2()
    }

    fn reduced(mut self) -> Self {
        if self.num == 0 {
            return Self::ZERO;
        }
        let tz = self.num.trailing_zeros().min(self.log2_den);
        self.num >>= tz;
        self.log2_den -= tz;
        self
    }

    fn aligned(a: Self, b: Self) -> (u128, u128, u32) {
        let den = a.log2_den.max(b.log2_den);
        let an = a
            .num
            .checked_shl(den - a.log2_den)
            .filter(|x| x >> (den - a.log2_den) == a.num)
            .expect("dyadic numerator overflow");
        let bn = b
            .num
            .checked_shl(den - b.log2_den)
            .filter(|x| x >> (den - b.log2_den) == b.num)
            .expect("dyadic numerator overflow");
        (an, bn, den)
    }
}

impl Add for Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: Dyadic) -> Dyadic {
        let (a, b, den) = Self::aligned(self, rhs);
        Dyadic::new(a.checked_add(b).expect("dyadic numerator overflow"), den)
    }
}

impl Sum for Dyadic {
    fn sum<I: Iterator<Item = Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |a, b| a + b)
    }
}

impl<'a> Sum<&'a Dyadic> for Dyadic {
    fn sum<I: Iterator<Item = &'a Dyadic>>(iter: I) -> Dyadic {
        iter.fold(Dyadic::ZERO, |a, b| a + *b)
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let (a, b, _) = Self::aligned(*self, *other);
        a.cmp(&b)
    }
}

impl fmt::Display for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.log2_den == 0 {
            write!(f, "{}", self.num)
        } else {
            write!(f, "{}/2^{}", self.num, self.log2_den)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn basic_arithmetic() {
        let q = Dyadic::pow2_inv(2);
        assert_eq!(q + q + q + q, Dyadic::ONE);
        assert_eq!(Dyadic::new(4, 3), Dyadic::pow2_inv(1));
        assert_eq!(Dyadic::ONE.shr(4).to_f64(), 1.0 / 16.0);
        assert!(Dyadic::pow2_inv(3) < Dyadic::pow2_inv(2));
        assert_eq!(format!("{}", Dyadic::new(3, 4)), "3/2^4");
    }

    #[test]
    fn deepest_weights_still_sum_exactly() {
        let w = Dyadic::pow2_inv(MAX_LOG2_DEN);
        let half: Dyadic = (0..4).map(|_| Dyadic::pow2_inv(2)).sum();
        assert_eq!(half, Dyadic::ONE);
        assert_eq!((Dyadic::ONE + w).log2_denominator(), MAX_LOG2_DEN);
    }

    #[test]
    fn json_roundtrip() {
        let w = Dyadic::new(5, 100);
        let s = serde_json::to_string(&w).unwrap();
        assert_eq!(s, r#"{"w_num":5,"w_log2_den":100}"#);
        let back: Dyadic = serde_json::from_str(&s).unwrap();
        assert_eq!(back, w);
    }

    proptest! {
        #[test]
        fn splitting_into_halves_preserves_mass(depths in proptest::collection::vec(0u32..20, 1..12)) {
            // split ONE repeatedly, always halving the last piece
            let mut pieces = vec![Dyadic::ONE];
            for d in depths {
                let last = pieces.pop().unwrap();
                for _ in 0..(1u32 << (d % 3)) {
                    pieces.push(last.shr(d % 3));
                }
            }
            let total: Dyadic = pieces.iter().sum();
            prop_assert_eq!(total, Dyadic::ONE);
        }
    }
}
