//! The three real domains on which expressions live, with their radical
//! generators.

use alloc::vec::Vec;
use core::fmt;

use crate::poly::Poly;
use crate::scalar::{int, Rational};

/// A working domain for `h`.
///
/// Each chart carries the polynomials whose square roots may appear in
/// coefficients. All generators are strictly positive on the open interval,
/// so every represented function is real-valued there.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Chart {
    /// `h ∈ (0, +∞)`, generators `h` and `1 + h`.
    PosAxis,
    /// `h ∈ (−∞, −1)`, generator `h² + h`.
    NegBranch,
    /// `h ∈ (0, 1)`, generators `h` and `1 − h`.
    UnitInterval,
}

/// Real interval; `None` is infinite. Endpoints are open unless flagged.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Interval {
    pub lo: Option<Rational>,
    pub hi: Option<Rational>,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl Interval {
    pub fn new(lo: Option<Rational>, hi: Option<Rational>) -> Self {
        Interval { lo, hi, lo_closed: false, hi_closed: false }
    }

    pub fn bounded(lo: Rational, hi: Rational) -> Self {
        Interval::new(Some(lo), Some(hi))
    }

    /// Same interval with the (finite) right endpoint included.
    pub fn close_hi(mut self) -> Self {
        self.hi_closed = self.hi.is_some();
        self
    }

    /// Same interval with both endpoints open.
    pub fn interior(&self) -> Interval {
        Interval::new(self.lo.clone(), self.hi.clone())
    }

    pub fn is_bounded(&self) -> bool {
        self.lo.is_some() && self.hi.is_some()
    }

    pub fn lo_f64(&self) -> f64 {
        self.lo.as_ref().map_or(f64::NEG_INFINITY, to_f64)
    }

    pub fn hi_f64(&self) -> f64 {
        self.hi.as_ref().map_or(f64::INFINITY, to_f64)
    }

    pub fn contains_f64(&self, x: f64) -> bool {
        let lo_ok = x > self.lo_f64() || (self.lo_closed && x == self.lo_f64());
        let hi_ok = x < self.hi_f64() || (self.hi_closed && x == self.hi_f64());
        lo_ok && hi_ok
    }

    pub fn contains(&self, x: &Rational) -> bool {
        let lo_ok = match &self.lo {
            None => true,
            Some(a) => x > a || (self.lo_closed && x == a),
        };
        let hi_ok = match &self.hi {
            None => true,
            Some(b) => x < b || (self.hi_closed && x == b),
        };
        lo_ok && hi_ok
    }

    /// Whether `self ⊆ other`.
    pub fn is_within(&self, other: &Interval) -> bool {
        let lo_ok = match (&other.lo, &self.lo) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => b >= a,
        };
        let hi_ok = match (&other.hi, &self.hi) {
            (None, _) => true,
            (Some(_), None) => false,
            (Some(a), Some(b)) => b <= a,
        };
        lo_ok && hi_ok
    }
}

fn to_f64(r: &Rational) -> f64 {
    num_traits::ToPrimitive::to_f64(r).unwrap_or(f64::NAN)
}

impl fmt::Display for Interval {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let open = if self.lo_closed { '[' } else { '(' };
        let close = if self.hi_closed { ']' } else { ')' };
        match &self.lo {
            None => write!(f, "(-inf, ")?,
            Some(a) => write!(f, "{}{}, ", open, a)?,
        }
        match &self.hi {
            None => write!(f, "+inf)"),
            Some(b) => write!(f, "{}{}", b, close),
        }
    }
}

impl Chart {
    pub const ALL: [Chart; 3] = [Chart::PosAxis, Chart::NegBranch, Chart::UnitInterval];

    pub fn name(self) -> &'static str {
        match self {
            Chart::PosAxis => "PosAxis",
            Chart::NegBranch => "NegBranch",
            Chart::UnitInterval => "UnitInterval",
        }
    }

    pub fn from_name(s: &str) -> Option<Chart> {
        Chart::ALL.into_iter().find(|c| c.name() == s)
    }

    pub fn interval(self) -> Interval {
        match self {
            Chart::PosAxis => Interval::new(Some(int(0)), None),
            Chart::NegBranch => Interval::new(None, Some(int(-1))),
            Chart::UnitInterval => Interval::bounded(int(0), int(1)),
        }
    }

    pub fn contains(self, h: f64) -> bool {
        match self {
            Chart::PosAxis => h > 0.0 && h.is_finite(),
            Chart::NegBranch => h < -1.0 && h.is_finite(),
            Chart::UnitInterval => h > 0.0 && h < 1.0,
        }
    }

    pub fn generators(self) -> Vec<Poly> {
        match self {
            Chart::PosAxis => alloc::vec![Poly::h(), Poly::from_ints(&[1, 1])],
            Chart::NegBranch => alloc::vec![Poly::from_ints(&[0, 1, 1])],
            Chart::UnitInterval => alloc::vec![Poly::h(), Poly::from_ints(&[1, -1])],
        }
    }

    pub fn generator_count(self) -> usize {
        match self {
            Chart::NegBranch => 1,
            _ => 2,
        }
    }

    /// Index of the generator equal to `p` up to a positive constant.
    pub fn generator_index(self, p: &Poly) -> Option<usize> {
        let m = p.normalize_positive();
        self.generators().iter().position(|g| g.normalize_positive() == m)
    }

    /// Human-readable radical for generator `g`.
    pub fn generator_label(self, g: usize) -> &'static str {
        match (self, g) {
            (Chart::PosAxis, 0) | (Chart::UnitInterval, 0) => "√h",
            (Chart::PosAxis, _) => "√(1+h)",
            (Chart::UnitInterval, _) => "√(1-h)",
            (Chart::NegBranch, _) => "√(h²+h)",
        }
    }

    /// Value of generator `g` at `h` (not its square root).
    pub fn generator_value(self, g: usize, h: f64) -> f64 {
        match (self, g) {
            (Chart::PosAxis, 0) | (Chart::UnitInterval, 0) => h,
            (Chart::PosAxis, _) => 1.0 + h,
            (Chart::UnitInterval, _) => 1.0 - h,
            (Chart::NegBranch, _) => h * h + h,
        }
    }
}

impl fmt::Display for Chart {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}
