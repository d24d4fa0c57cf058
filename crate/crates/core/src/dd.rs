//! Double-word arithmetic: a value is the unevaluated sum `hi + lo` of two
//! doubles with `hi = fl(hi + lo)`, giving roughly 106 significant bits.
//!
//! Addition and multiplication are built from the error-free transformations
//! `two_sum` and `two_prod` (the latter through a fused multiply-add), in the
//! accurate variants with relative error bounded by 3u² and 4u² respectively.

use std::cmp::Ordering;
use std::fmt;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

use crate::error::{RbError, Result};
use crate::scalar::{Precision, Real};

/// `s + e = a + b` exactly, `s = fl(a + b)`.
#[inline]
pub fn two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let bb = s - a;
    let e = (a - (s - bb)) + (b - bb);
    (s, e)
}

/// As [`two_sum`], valid when `|a| >= |b|` or `a == 0`.
#[inline]
pub fn fast_two_sum(a: f64, b: f64) -> (f64, f64) {
    let s = a + b;
    let e = b - (s - a);
    (s, e)
}

/// `p + e = a * b` exactly, `p = fl(a * b)`.
#[inline]
pub fn two_prod(a: f64, b: f64) -> (f64, f64) {
    let p = a * b;
    let e = a.mul_add(b, -p);
    (p, e)
}

#[derive(Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct DoubleWord {
    pub hi: f64,
    pub lo: f64,
}

impl fmt::Debug for DoubleWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "DoubleWord({:e} + {:e})", self.hi, self.lo)
    }
}

impl fmt::Display for DoubleWord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:e}", self.hi)
    }
}

impl DoubleWord {
    pub const ZERO: DoubleWord = DoubleWord { hi: 0.0, lo: 0.0 };
    pub const ONE: DoubleWord = DoubleWord { hi: 1.0, lo: 0.0 };

    /// Exact embedding of a finite double.
    pub fn promote(x: f64) -> Result<Self> {
        if !x.is_finite() {
            return Err(RbError::NonFinite(format!("cannot promote {x}")));
        }
        Ok(DoubleWord { hi: x, lo: 0.0 })
    }

    /// Nearest double (the leading word of a normalized pair).
    #[inline]
    pub fn demote(self) -> f64 {
        self.hi
    }

    /// Builds a normalized pair from an arbitrary unevaluated sum.
    #[inline]
    pub fn from_sum(a: f64, b: f64) -> Self {
        let (hi, lo) = two_sum(a, b);
        DoubleWord { hi, lo }
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.hi.is_finite() && self.lo.is_finite()
    }

    pub fn checked_add(self, o: Self) -> Result<Self> {
        let r = self + o;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(RbError::NonFinite(format!("{self:?} + {o:?} overflowed")))
        }
    }

    pub fn checked_mul(self, o: Self) -> Result<Self> {
        let r = self * o;
        if r.is_finite() {
            Ok(r)
        } else {
            Err(RbError::NonFinite(format!("{self:?} * {o:?} overflowed")))
        }
    }

    #[inline]
    fn add_dw(self, o: Self) -> Self {
        let (sh, sl) = two_sum(self.hi, o.hi);
        let (th, tl) = two_sum(self.lo, o.lo);
        let c = sl + th;
        let (vh, vl) = fast_two_sum(sh, c);
        let w = tl + vl;
        let (hi, lo) = fast_two_sum(vh, w);
        if hi.is_finite() {
            DoubleWord { hi, lo }
        } else {
            // keep the overflow visible in `hi` instead of a NaN pair
            DoubleWord { hi: self.hi + o.hi, lo: 0.0 }
        }
    }

    #[inline]
    fn mul_dw(self, o: Self) -> Self {
        let (ch, cl1) = two_prod(self.hi, o.hi);
        let tl0 = self.lo * o.lo;
        let tl1 = self.hi.mul_add(o.lo, tl0);
        let cl2 = self.lo.mul_add(o.hi, tl1);
        let cl3 = cl1 + cl2;
        let (hi, lo) = fast_two_sum(ch, cl3);
        if hi.is_finite() {
            DoubleWord { hi, lo }
        } else {
            DoubleWord { hi: ch, lo: 0.0 }
        }
    }

    #[inline]
    fn mul_f64(self, b: f64) -> Self {
        let (ch, cl1) = two_prod(self.hi, b);
        let cl3 = self.lo.mul_add(b, cl1);
        let (hi, lo) = fast_two_sum(ch, cl3);
        DoubleWord { hi, lo }
    }

    #[inline]
    fn div_dw(self, o: Self) -> Self {
        let q1 = self.hi / o.hi;
        if !q1.is_finite() {
            return DoubleWord { hi: q1, lo: 0.0 };
        }
        let r = self - o.mul_f64(q1);
        let q2 = r.hi / o.hi;
        let r = r - o.mul_f64(q2);
        let q3 = r.hi / o.hi;
        let (h, l) = fast_two_sum(q1, q2);
        DoubleWord { hi: h, lo: l } + DoubleWord { hi: q3, lo: 0.0 }
    }

    fn sqrt_dw(self) -> Self {
        if self.hi <= 0.0 {
            return DoubleWord { hi: f64::sqrt(self.hi), lo: 0.0 };
        }
        let q = self.hi.sqrt();
        let (ph, pl) = two_prod(q, q);
        let r = self - DoubleWord { hi: ph, lo: pl };
        let e = r.hi / (2.0 * q);
        let (hi, lo) = fast_two_sum(q, e);
        DoubleWord { hi, lo }
    }
}

impl From<f64> for DoubleWord {
    fn from(x: f64) -> Self {
        DoubleWord { hi: x, lo: 0.0 }
    }
}

impl Add for DoubleWord {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        self.add_dw(o)
    }
}

impl Sub for DoubleWord {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        self.add_dw(-o)
    }
}

impl Mul for DoubleWord {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        self.mul_dw(o)
    }
}

impl Div for DoubleWord {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        self.div_dw(o)
    }
}

impl Neg for DoubleWord {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        DoubleWord { hi: -self.hi, lo: -self.lo }
    }
}

impl AddAssign for DoubleWord {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl SubAssign for DoubleWord {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl MulAssign for DoubleWord {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl DivAssign for DoubleWord {
    #[inline]
    fn div_assign(&mut self, o: Self) {
        *self = *self / o;
    }
}

impl PartialOrd for DoubleWord {
    fn partial_cmp(&self, o: &Self) -> Option<Ordering> {
        match self.hi.partial_cmp(&o.hi) {
            Some(Ordering::Equal) => self.lo.partial_cmp(&o.lo),
            ord => ord,
        }
    }
}

impl Sum for DoubleWord {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(DoubleWord::ZERO, |a, b| a + b)
    }
}

impl Real for DoubleWord {
    const PRECISION: Precision = Precision::Extended;

    #[inline]
    fn zero() -> Self {
        DoubleWord::ZERO
    }
    #[inline]
    fn one() -> Self {
        DoubleWord::ONE
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        DoubleWord { hi: x, lo: 0.0 }
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self.hi
    }
    #[inline]
    fn sqrt(self) -> Self {
        self.sqrt_dw()
    }
    #[inline]
    fn abs(self) -> Self {
        if self.hi < 0.0 || (self.hi == 0.0 && self.lo < 0.0) {
            -self
        } else {
            self
        }
    }
    #[inline]
    fn is_finite(self) -> bool {
        DoubleWord::is_finite(self)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn promote_cases() {
        assert_eq!(DoubleWord::promote(0.0).unwrap(), DoubleWord { hi: 0.0, lo: 0.0 });
        assert_eq!(DoubleWord::promote(1.0).unwrap(), DoubleWord { hi: 1.0, lo: 0.0 });
        let x = DoubleWord::promote(0.1).unwrap();
        assert_eq!(x.lo, 0.0);
        assert_eq!(x.demote(), 0.1);
        assert!(DoubleWord::promote(f64::NAN).is_err());
        assert!(DoubleWord::promote(f64::INFINITY).is_err());
    }

    #[test]
    fn exact_cancellation() {
        let r = DoubleWord::ONE + DoubleWord::from(-1.0);
        assert_eq!(r.hi, 0.0);
        assert_eq!(r.lo, 0.0);
    }

    #[test]
    fn tiny_addend_is_kept_in_low_word() {
        let tiny = f64::powi(2.0, -60);
        let r = DoubleWord::ONE + DoubleWord::from(tiny);
        assert_eq!(r.demote(), 1.0);
        assert_eq!(r.lo, tiny);
    }

    #[test]
    fn overflow_is_flagged() {
        let big = DoubleWord::from(f64::MAX);
        assert!(big.checked_add(big).is_err());
        assert!(big.checked_mul(DoubleWord::from(2.0)).is_err());
        assert!(!(big * big).is_finite());
    }

    #[test]
    fn division_and_sqrt_round_trip() {
        let three = DoubleWord::from(3.0);
        let third = DoubleWord::ONE / three;
        let back = third * three - DoubleWord::ONE;
        assert!(back.hi.abs() < 1e-31);
        let two = DoubleWord::from(2.0);
        let s = two.sqrt();
        let err = s * s - two;
        assert!(err.hi.abs() < 1e-30);
    }

    #[test]
    fn ordering_uses_low_word() {
        let a = DoubleWord::from_sum(1.0, 1e-20);
        let b = DoubleWord::from_sum(1.0, 2e-20);
        assert!(a < b);
    }
}
