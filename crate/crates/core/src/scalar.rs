//! Exact coefficients: rationals and the quadratic extension `Q(√2)`.

use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, AddAssign, Mul, MulAssign, Neg, Sub, SubAssign};

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};

pub type Rational = BigRational;

pub fn rat(num: i64, den: i64) -> Rational {
    Rational::new(BigInt::from(num), BigInt::from(den))
}

pub fn int(v: i64) -> Rational {
    Rational::from_integer(BigInt::from(v))
}

/// An element `rational + surd·√2` of `Q(√2)`.
///
/// Every exact coefficient in the crate lives here. Most values have a zero
/// surd part, and the arithmetic short-circuits that case.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Scalar {
    pub rational: Rational,
    pub surd: Rational,
}

impl Scalar {
    pub fn new(rational: Rational, surd: Rational) -> Self {
        Scalar { rational, surd }
    }

    pub fn from_rational(r: Rational) -> Self {
        Scalar { rational: r, surd: Rational::zero() }
    }

    pub fn from_int(v: i64) -> Self {
        Scalar::from_rational(int(v))
    }

    pub fn from_ratio(num: i64, den: i64) -> Self {
        Scalar::from_rational(rat(num, den))
    }

    pub fn sqrt2() -> Self {
        Scalar { rational: Rational::zero(), surd: Rational::one() }
    }

    pub fn zero() -> Self {
        Scalar::default()
    }

    pub fn one() -> Self {
        Scalar::from_int(1)
    }

    pub fn is_zero(&self) -> bool {
        self.rational.is_zero() && self.surd.is_zero()
    }

    pub fn is_one(&self) -> bool {
        self.surd.is_zero() && self.rational.is_one()
    }

    pub fn is_rational(&self) -> bool {
        self.surd.is_zero()
    }

    /// Algebraic conjugate `a − b√2`.
    pub fn conjugate(&self) -> Self {
        Scalar { rational: self.rational.clone(), surd: -self.surd.clone() }
    }

    /// Field norm `a² − 2b²`.
    pub fn norm(&self) -> Rational {
        &self.rational * &self.rational - int(2) * &self.surd * &self.surd
    }

    pub fn inverse(&self) -> Option<Self> {
        if self.is_zero() {
            return None;
        }
        if self.surd.is_zero() {
            return Some(Scalar::from_rational(self.rational.recip()));
        }
        let n = self.norm();
        let c = self.conjugate();
        Some(Scalar { rational: c.rational / &n, surd: c.surd / n })
    }

    pub fn div(&self, other: &Scalar) -> Option<Self> {
        other.inverse().map(|inv| self * &inv)
    }

    /// Exact sign in the real embedding with `√2 > 0`.
    pub fn signum(&self) -> Ordering {
        let sa = sign_of(&self.rational);
        let sb = sign_of(&self.surd);
        match (sa, sb) {
            (Ordering::Equal, s) | (s, Ordering::Equal) => s,
            (x, y) if x == y => x,
            (sa, _) => {
                // opposite signs: compare a² with 2b²
                let a2 = &self.rational * &self.rational;
                let b2 = int(2) * &self.surd * &self.surd;
                match a2.cmp(&b2) {
                    Ordering::Greater => sa,
                    Ordering::Less => sa.reverse(),
                    Ordering::Equal => Ordering::Equal,
                }
            }
        }
    }

    pub fn abs(&self) -> Self {
        if self.signum() == Ordering::Less {
            -self.clone()
        } else {
            self.clone()
        }
    }

    pub fn to_f64(&self) -> f64 {
        let a = self.rational.to_f64().unwrap_or(f64::NAN);
        if self.surd.is_zero() {
            a
        } else {
            a + self.surd.to_f64().unwrap_or(f64::NAN) * core::f64::consts::SQRT_2
        }
    }

    /// A rational number `≥ |self|`.
    pub fn abs_upper_bound(&self) -> Rational {
        self.rational.abs() + self.surd.abs() * rat(3, 2)
    }

    pub fn pow(&self, e: u32) -> Self {
        let mut acc = Scalar::one();
        for _ in 0..e {
            acc = &acc * self;
        }
        acc
    }
}

fn sign_of(r: &Rational) -> Ordering {
    if r.is_zero() {
        Ordering::Equal
    } else if r.is_positive() {
        Ordering::Greater
    } else {
        Ordering::Less
    }
}

impl fmt::Debug for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Scalar {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.surd.is_zero() {
            write!(f, "{}", self.rational)
        } else if self.rational.is_zero() {
            write!(f, "{}√2", self.surd)
        } else {
            write!(f, "({} + {}√2)", self.rational, self.surd)
        }
    }
}

impl From<Rational> for Scalar {
    fn from(r: Rational) -> Self {
        Scalar::from_rational(r)
    }
}

impl From<i64> for Scalar {
    fn from(v: i64) -> Self {
        Scalar::from_int(v)
    }
}

impl<'a> Add<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    fn add(self, rhs: &'a Scalar) -> Scalar {
        Scalar { rational: &self.rational + &rhs.rational, surd: &self.surd + &rhs.surd }
    }
}

impl<'a> Sub<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    fn sub(self, rhs: &'a Scalar) -> Scalar {
        Scalar { rational: &self.rational - &rhs.rational, surd: &self.surd - &rhs.surd }
    }
}

impl<'a> Mul<&'a Scalar> for &'a Scalar {
    type Output = Scalar;
    fn mul(self, rhs: &'a Scalar) -> Scalar {
        if self.surd.is_zero() && rhs.surd.is_zero() {
            return Scalar::from_rational(&self.rational * &rhs.rational);
        }
        let ac = &self.rational * &rhs.rational;
        let bd = &self.surd * &rhs.surd;
        let ad = &self.rational * &rhs.surd;
        let bc = &self.surd * &rhs.rational;
        Scalar { rational: ac + int(2) * bd, surd: ad + bc }
    }
}

impl Add for Scalar {
    type Output = Scalar;
    fn add(self, rhs: Scalar) -> Scalar {
        &self + &rhs
    }
}

impl Sub for Scalar {
    type Output = Scalar;
    fn sub(self, rhs: Scalar) -> Scalar {
        &self - &rhs
    }
}

impl Mul for Scalar {
    type Output = Scalar;
    fn mul(self, rhs: Scalar) -> Scalar {
        &self * &rhs
    }
}

impl Neg for Scalar {
    type Output = Scalar;
    fn neg(self) -> Scalar {
        Scalar { rational: -self.rational, surd: -self.surd }
    }
}

impl AddAssign<&Scalar> for Scalar {
    fn add_assign(&mut self, rhs: &Scalar) {
        self.rational += &rhs.rational;
        self.surd += &rhs.surd;
    }
}

impl SubAssign<&Scalar> for Scalar {
    fn sub_assign(&mut self, rhs: &Scalar) {
        self.rational -= &rhs.rational;
        self.surd -= &rhs.surd;
    }
}

impl MulAssign<&Scalar> for Scalar {
    fn mul_assign(&mut self, rhs: &Scalar) {
        *self = &*self * rhs;
    }
}
