//! Exact dyadic-rational arithmetic with a lexicographic tie-break channel.
//!
//! Every weight, dual value and message in the solver is a [`Dyadic`]
//! (an arbitrary-precision integer times a power of two) or a
//! [`TieBreakCost`] (a dyadic paired with an integer tie-break channel).
//! There is no floating point anywhere; comparisons and sums are exact.

use std::cmp::Ordering;
use std::fmt;
use std::ops::{Add, Neg, Sub};

use num_bigint::BigInt;
use num_traits::{One, Signed, Zero};

/// Exact rational of the form `numerator / 2^exponent`.
///
/// Canonical form: the numerator is odd whenever `exponent > 0`, and zero
/// is stored as `0 / 2^0`. Closed under addition, negation and halving,
/// which is all the solver ever needs: duals are produced by repeatedly
/// halving integer combinations of weights.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Dyadic {
    numerator: BigInt,
    exponent: u32,
}

impl Dyadic {
    pub fn new(numerator: BigInt, exponent: u32) -> Self {
        let mut d = Dyadic {
            numerator,
            exponent,
        };
        d.normalize();
        d
    }

    pub fn zero() -> Self {
        Dyadic {
            numerator: BigInt::zero(),
            exponent: 0,
        }
    }

    pub fn from_int(v: i64) -> Self {
        Dyadic {
            numerator: BigInt::from(v),
            exponent: 0,
        }
    }

    pub fn from_bigint(v: BigInt) -> Self {
        Dyadic {
            numerator: v,
            exponent: 0,
        }
    }

    pub fn numerator(&self) -> &BigInt {
        &self.numerator
    }

    pub fn exponent(&self) -> u32 {
        self.exponent
    }

    pub fn is_zero(&self) -> bool {
        self.numerator.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self.numerator.is_negative()
    }

    /// Exact half. An even numerator (possible at exponent 0) renormalizes.
    pub fn halve(&self) -> Self {
        Dyadic::new(self.numerator.clone(), self.exponent + 1)
    }

    /// Exact `2 * self`.
    pub fn double(&self) -> Self {
        if self.exponent > 0 {
            Dyadic {
                numerator: self.numerator.clone(),
                exponent: self.exponent - 1,
            }
        } else {
            Dyadic {
                numerator: &self.numerator * 2,
                exponent: 0,
            }
        }
    }

    fn normalize(&mut self) {
        if self.numerator.is_zero() {
            self.exponent = 0;
            return;
        }
        while self.exponent > 0 && (&self.numerator % 2u8).is_zero() {
            self.numerator /= 2;
            self.exponent -= 1;
        }
    }

    /// Numerator after raising both operands to a common exponent.
    fn aligned(&self, exp: u32) -> BigInt {
        debug_assert!(exp >= self.exponent);
        &self.numerator << (exp - self.exponent)
    }
}

impl Add for &Dyadic {
    type Output = Dyadic;
    fn add(self, rhs: &Dyadic) -> Dyadic {
        let exp = self.exponent.max(rhs.exponent);
        Dyadic::new(self.aligned(exp) + rhs.aligned(exp), exp)
    }
}

impl Sub for &Dyadic {
    type Output = Dyadic;
    fn sub(self, rhs: &Dyadic) -> Dyadic {
        let exp = self.exponent.max(rhs.exponent);
        Dyadic::new(self.aligned(exp) - rhs.aligned(exp), exp)
    }
}

impl Neg for &Dyadic {
    type Output = Dyadic;
    fn neg(self) -> Dyadic {
        Dyadic {
            numerator: -&self.numerator,
            exponent: self.exponent,
        }
    }
}

impl PartialOrd for Dyadic {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Dyadic {
    fn cmp(&self, other: &Self) -> Ordering {
        let exp = self.exponent.max(other.exponent);
        self.aligned(exp).cmp(&other.aligned(exp))
    }
}

impl fmt::Display for Dyadic {
    /// Decimal rendering used in traces: `-19/4` prints as `-4.75`.
    /// A binary fraction always has a finite decimal expansion
    /// (multiply the fractional part by `5^exponent`).
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.numerator.is_negative() {
            write!(f, "-")?;
        }
        let mag = self.numerator.abs();
        if self.exponent == 0 {
            return write!(f, "{}", mag);
        }
        let int_part = &mag >> self.exponent;
        let frac = &mag - (&int_part << self.exponent);
        let digits = frac * BigInt::from(5u8).pow(self.exponent);
        write!(
            f,
            "{}.{:0>width$}",
            int_part,
            digits.to_string(),
            width = self.exponent as usize
        )
    }
}

impl fmt::Debug for Dyadic {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}/2^{}", self.numerator, self.exponent)
    }
}

impl serde::Serialize for Dyadic {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

/// A dyadic primary cost with an integer secondary channel, ordered
/// lexicographically. The secondary channel realizes the infinitesimal
/// perturbation that separates the two copies of a duplicated edge: it
/// never influences a comparison unless the primaries are exactly equal.
#[derive(Clone, PartialEq, Eq, Hash, Debug)]
pub struct TieBreakCost {
    pub primary: Dyadic,
    pub secondary: BigInt,
}

impl TieBreakCost {
    pub fn new(primary: Dyadic, secondary: i64) -> Self {
        TieBreakCost {
            primary,
            secondary: BigInt::from(secondary),
        }
    }

    pub fn zero() -> Self {
        TieBreakCost {
            primary: Dyadic::zero(),
            secondary: BigInt::zero(),
        }
    }

    pub fn is_zero(&self) -> bool {
        self.primary.is_zero() && self.secondary.is_zero()
    }

    pub fn is_negative(&self) -> bool {
        self < &TieBreakCost::zero()
    }
}

/// Lexicographic minimum together with how the operands compared.
pub fn cost_min<'a>(a: &'a TieBreakCost, b: &'a TieBreakCost) -> (&'a TieBreakCost, Ordering) {
    match a.cmp(b) {
        Ordering::Greater => (b, Ordering::Greater),
        ord => (a, ord),
    }
}

impl Add for &TieBreakCost {
    type Output = TieBreakCost;
    fn add(self, rhs: &TieBreakCost) -> TieBreakCost {
        TieBreakCost {
            primary: &self.primary + &rhs.primary,
            secondary: &self.secondary + &rhs.secondary,
        }
    }
}

impl Sub for &TieBreakCost {
    type Output = TieBreakCost;
    fn sub(self, rhs: &TieBreakCost) -> TieBreakCost {
        TieBreakCost {
            primary: &self.primary - &rhs.primary,
            secondary: &self.secondary - &rhs.secondary,
        }
    }
}

impl Neg for &TieBreakCost {
    type Output = TieBreakCost;
    fn neg(self) -> TieBreakCost {
        TieBreakCost {
            primary: -&self.primary,
            secondary: -&self.secondary,
        }
    }
}

impl PartialOrd for TieBreakCost {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for TieBreakCost {
    fn cmp(&self, other: &Self) -> Ordering {
        self.primary
            .cmp(&other.primary)
            .then_with(|| self.secondary.cmp(&other.secondary))
    }
}

impl fmt::Display for TieBreakCost {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.secondary.is_zero() {
            write!(f, "{}", self.primary)
        } else {
            write!(f, "{}+{}ε", self.primary, self.secondary)
        }
    }
}

#[allow(unused)]
fn _assert_one() {
    // keep num-traits' One in scope for BigInt::pow-style helpers in tests
    let _ = BigInt::one();
}

#[cfg(test)]
mod tests {
    use super::*;

    fn dy(num: i64, exp: u32) -> Dyadic {
        Dyadic::new(BigInt::from(num), exp)
    }

    #[test]
    fn add_halves_to_one() {
        assert_eq!(&dy(1, 1) + &dy(1, 1), dy(1, 0));
    }

    #[test]
    fn add_mixed_fractions() {
        // 3/4 + (-1/4) = 1/2
        assert_eq!(&dy(3, 2) + &dy(-1, 2), dy(1, 1));
        // 10 + (-1/2) = 19/2
        assert_eq!(&dy(10, 0) + &dy(-1, 1), dy(19, 1));
    }

    #[test]
    fn halve_examples() {
        assert_eq!(dy(1, 0).halve(), dy(1, 1));
        assert_eq!(Dyadic::zero().halve(), Dyadic::zero());
        assert_eq!(dy(19, 1).halve(), dy(19, 2));
    }

    #[test]
    fn canonical_form() {
        // 4/2^2 normalizes to 1
        let d = dy(4, 2);
        assert_eq!(d, dy(1, 0));
        assert_eq!(d.exponent(), 0);
        // zero always has exponent 0
        assert_eq!(Dyadic::new(BigInt::zero(), 7).exponent(), 0);
    }

    #[test]
    fn double_inverts_halve() {
        let d = dy(19, 3);
        assert_eq!(d.halve().double(), d);
        assert_eq!(dy(5, 0).double(), dy(10, 0));
    }

    #[test]
    fn ordering_is_exact() {
        assert!(dy(1, 1) < dy(3, 2)); // 1/2 < 3/4
        assert!(dy(-1, 1) < Dyadic::zero());
        assert_eq!(dy(2, 1), dy(1, 0));
    }

    #[test]
    fn decimal_rendering() {
        assert_eq!(dy(19, 1).to_string(), "9.5");
        assert_eq!(dy(19, 2).to_string(), "4.75");
        assert_eq!(dy(-19, 2).to_string(), "-4.75");
        assert_eq!(dy(5, 0).to_string(), "5");
        assert_eq!(Dyadic::zero().to_string(), "0");
        assert_eq!(dy(1, 3).to_string(), "0.125");
        assert_eq!(dy(-1, 10).to_string(), "-0.0009765625");
    }

    fn tb(primary: Dyadic, secondary: i64) -> TieBreakCost {
        TieBreakCost::new(primary, secondary)
    }

    #[test]
    fn cost_min_examples() {
        // (5, 0) vs (5, 1): secondary decides
        let a = tb(dy(5, 0), 0);
        let b = tb(dy(5, 0), 1);
        let (m, ord) = cost_min(&a, &b);
        assert_eq!(m, &a);
        assert_eq!(ord, Ordering::Less);

        // (9/2, 7) vs (5, 0): primary decides, secondary ignored
        let a = tb(dy(9, 1), 7);
        let b = tb(dy(5, 0), 0);
        let (m, ord) = cost_min(&a, &b);
        assert_eq!(m, &a);
        assert_eq!(ord, Ordering::Less);

        // exact equality is reported
        let a = tb(dy(5, 0), 3);
        let b = tb(dy(5, 0), 3);
        let (_, ord) = cost_min(&a, &b);
        assert_eq!(ord, Ordering::Equal);
    }

    #[test]
    fn tie_break_addition_is_componentwise() {
        let a = tb(dy(1, 1), 2);
        let b = tb(dy(1, 1), -5);
        let s = &a + &b;
        assert_eq!(s.primary, dy(1, 0));
        assert_eq!(s.secondary, BigInt::from(-3));
    }
}
