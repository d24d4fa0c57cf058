//! Scalar formats the numerical routines are generic over.
//!
//! Every offline/online routine downstream of the truth solver is written
//! against [`Real`], so the same estimator code runs in single, double and
//! double-word ("extended") precision. Complex values are [`Cplx`] pairs of
//! the generic real type.

use std::fmt::Debug;
use std::iter::Sum;
use std::ops::{Add, AddAssign, Div, DivAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use serde::{Deserialize, Serialize};

pub use crate::dd::DoubleWord;

/// Scalar format tag.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Precision {
    Single,
    Double,
    Extended,
}

impl Precision {
    /// Documented machine precision of the format.
    ///
    /// The double value is the customary 5e-16 reference figure rather than
    /// the unit roundoff 2^-53; see [`Precision::unit_roundoff`].
    pub fn eps(self) -> f64 {
        match self {
            Precision::Single => 6.0e-8,
            Precision::Double => 5.0e-16,
            Precision::Extended => 1.0e-31,
        }
    }

    /// Unit roundoff of round-to-nearest arithmetic in the format.
    pub fn unit_roundoff(self) -> f64 {
        match self {
            Precision::Single => f64::powi(2.0, -24),
            Precision::Double => f64::powi(2.0, -53),
            Precision::Extended => f64::powi(2.0, -104),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Precision::Single => "single",
            Precision::Double => "double",
            Precision::Extended => "extended",
        }
    }
}

impl std::str::FromStr for Precision {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "single" => Ok(Precision::Single),
            "double" => Ok(Precision::Double),
            "extended" => Ok(Precision::Extended),
            other => Err(format!("unknown precision '{other}'")),
        }
    }
}

/// Real scalar format.
pub trait Real:
    Copy
    + Debug
    + Default
    + PartialEq
    + PartialOrd
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
    + DivAssign
    + Sum
{
    const PRECISION: Precision;

    fn zero() -> Self;
    fn one() -> Self;
    /// Conversion from a double. Exact for double and extended formats.
    fn from_f64(x: f64) -> Self;
    /// Nearest double.
    fn to_f64(self) -> f64;
    fn sqrt(self) -> Self;
    fn abs(self) -> Self;
    fn is_finite(self) -> bool;

    fn max(self, other: Self) -> Self {
        if other > self {
            other
        } else {
            self
        }
    }
}

impl Real for f64 {
    const PRECISION: Precision = Precision::Double;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self
    }
    #[inline]
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f64::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f64::is_finite(self)
    }
}

impl Real for f32 {
    const PRECISION: Precision = Precision::Single;

    #[inline]
    fn zero() -> Self {
        0.0
    }
    #[inline]
    fn one() -> Self {
        1.0
    }
    #[inline]
    fn from_f64(x: f64) -> Self {
        x as f32
    }
    #[inline]
    fn to_f64(self) -> f64 {
        self as f64
    }
    #[inline]
    fn sqrt(self) -> Self {
        f32::sqrt(self)
    }
    #[inline]
    fn abs(self) -> Self {
        f32::abs(self)
    }
    #[inline]
    fn is_finite(self) -> bool {
        f32::is_finite(self)
    }
}

/// Complex number over a generic real format.
///
/// Multiplication uses the plain four-product formula at every precision.
#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Cplx<T> {
    pub re: T,
    pub im: T,
}

pub type C64 = Cplx<f64>;

impl<T: Real> Cplx<T> {
    #[inline]
    pub fn new(re: T, im: T) -> Self {
        Cplx { re, im }
    }

    #[inline]
    pub fn real(re: T) -> Self {
        Cplx { re, im: T::zero() }
    }

    #[inline]
    pub fn zero() -> Self {
        Cplx { re: T::zero(), im: T::zero() }
    }

    #[inline]
    pub fn one() -> Self {
        Cplx { re: T::one(), im: T::zero() }
    }

    #[inline]
    pub fn conj(self) -> Self {
        Cplx { re: self.re, im: -self.im }
    }

    #[inline]
    pub fn norm_sqr(self) -> T {
        self.re * self.re + self.im * self.im
    }

    #[inline]
    pub fn abs(self) -> T {
        self.norm_sqr().sqrt()
    }

    /// |re| + |im|, used for pivoting and argmax scans.
    #[inline]
    pub fn abs1(self) -> T {
        self.re.abs() + self.im.abs()
    }

    #[inline]
    pub fn scale(self, s: T) -> Self {
        Cplx { re: self.re * s, im: self.im * s }
    }

    #[inline]
    pub fn is_zero(self) -> bool {
        self.re == T::zero() && self.im == T::zero()
    }

    #[inline]
    pub fn is_finite(self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }

    #[inline]
    pub fn from_c64(z: C64) -> Self {
        Cplx { re: T::from_f64(z.re), im: T::from_f64(z.im) }
    }

    #[inline]
    pub fn to_c64(self) -> C64 {
        Cplx { re: self.re.to_f64(), im: self.im.to_f64() }
    }

    #[inline]
    pub fn cast<U: Real>(self) -> Cplx<U> {
        Cplx::<U>::from_c64(self.to_c64())
    }
}

impl<T: Real> Add for Cplx<T> {
    type Output = Self;
    #[inline]
    fn add(self, o: Self) -> Self {
        Cplx { re: self.re + o.re, im: self.im + o.im }
    }
}

impl<T: Real> Sub for Cplx<T> {
    type Output = Self;
    #[inline]
    fn sub(self, o: Self) -> Self {
        Cplx { re: self.re - o.re, im: self.im - o.im }
    }
}

impl<T: Real> Mul for Cplx<T> {
    type Output = Self;
    #[inline]
    fn mul(self, o: Self) -> Self {
        Cplx {
            re: self.re * o.re - self.im * o.im,
            im: self.re * o.im + self.im * o.re,
        }
    }
}

impl<T: Real> Div for Cplx<T> {
    type Output = Self;
    #[inline]
    fn div(self, o: Self) -> Self {
        let d = o.norm_sqr();
        let n = self * o.conj();
        Cplx { re: n.re / d, im: n.im / d }
    }
}

impl<T: Real> Neg for Cplx<T> {
    type Output = Self;
    #[inline]
    fn neg(self) -> Self {
        Cplx { re: -self.re, im: -self.im }
    }
}

impl<T: Real> AddAssign for Cplx<T> {
    #[inline]
    fn add_assign(&mut self, o: Self) {
        self.re += o.re;
        self.im += o.im;
    }
}

impl<T: Real> SubAssign for Cplx<T> {
    #[inline]
    fn sub_assign(&mut self, o: Self) {
        self.re -= o.re;
        self.im -= o.im;
    }
}

impl<T: Real> MulAssign for Cplx<T> {
    #[inline]
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<T: Real> Sum for Cplx<T> {
    fn sum<I: Iterator<Item = Self>>(iter: I) -> Self {
        iter.fold(Cplx::zero(), |a, b| a + b)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eps_ordering() {
        assert!(Precision::Single.eps() > Precision::Double.eps());
        assert!(Precision::Double.eps() > Precision::Extended.eps());
        assert_eq!(Precision::Double.eps(), 5.0e-16);
    }

    #[test]
    fn complex_mul_is_naive_formula() {
        let a = Cplx::new(1.5f64, -2.0);
        let b = Cplx::new(0.25f64, 3.0);
        let p = a * b;
        assert_eq!(p.re, 1.5 * 0.25 - (-2.0) * 3.0);
        assert_eq!(p.im, 1.5 * 3.0 + (-2.0) * 0.25);
    }

    #[test]
    fn self_division_is_one() {
        let z = Cplx::new(0.3f64, -7.1);
        assert_eq!(z / z, Cplx::one());
    }

    #[test]
    fn parse_precision() {
        assert_eq!("extended".parse::<Precision>().unwrap(), Precision::Extended);
        assert!("quad".parse::<Precision>().is_err());
    }
}
