//! Expressions `Σ_T a_T(h)·T(h)` over the fixed transcendental basis.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::algebraic::{AlgebraicElement, RadicalMonomial};
use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::ratfunc::RatFunc;
use crate::scalar::Scalar;

/// Basis functions multiplying the algebraic parts of an expression.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Transcendental {
    One,
    LnH,
    LnOneMinusH,
    ArcTanSqrtH,
    ArcSinSqrtH,
    /// `ln((1+√h)/(1−√h))`
    LnHalfAngle,
    /// `ln|2√(h²+h)+2h+1|`
    LnConic,
}

impl Transcendental {
    pub const ALL: [Transcendental; 7] = [
        Transcendental::One,
        Transcendental::LnH,
        Transcendental::LnOneMinusH,
        Transcendental::ArcTanSqrtH,
        Transcendental::ArcSinSqrtH,
        Transcendental::LnHalfAngle,
        Transcendental::LnConic,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Transcendental::One => "One",
            Transcendental::LnH => "LnH",
            Transcendental::LnOneMinusH => "LnOneMinusH",
            Transcendental::ArcTanSqrtH => "ArcTanSqrtH",
            Transcendental::ArcSinSqrtH => "ArcSinSqrtH",
            Transcendental::LnHalfAngle => "LnHalfAngle",
            Transcendental::LnConic => "LnConic",
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        Transcendental::ALL.into_iter().find(|t| t.name() == s)
    }

    pub fn admissible_on(self, chart: Chart) -> bool {
        use Chart::*;
        use Transcendental::*;
        match self {
            One => true,
            LnH | ArcTanSqrtH => matches!(chart, PosAxis | UnitInterval),
            LnOneMinusH | ArcSinSqrtH | LnHalfAngle => chart == UnitInterval,
            LnConic => matches!(chart, PosAxis | NegBranch),
        }
    }

    /// `T'(h)` as an element of the coefficient field.
    pub fn derivative(self, chart: Chart) -> AlgebraicElement {
        let rf = |num: Poly, den: Poly| RatFunc::new(num, &den).expect("nonzero denominator");
        let one = Poly::one;
        let h = Poly::h;
        match self {
            Transcendental::One => AlgebraicElement::zero(chart),
            Transcendental::LnH => AlgebraicElement::from_ratfunc(chart, rf(one(), h())),
            Transcendental::LnOneMinusH => {
                AlgebraicElement::from_ratfunc(chart, rf(one(), Poly::from_ints(&[-1, 1])))
            }
            // √h / (2h(1+h))
            Transcendental::ArcTanSqrtH => AlgebraicElement::from_term(
                chart,
                RadicalMonomial::single(0),
                rf(one(), Poly::from_ints(&[0, 2, 2])),
            ),
            // √h√(1−h) / (2h(1−h))
            Transcendental::ArcSinSqrtH => AlgebraicElement::from_term(
                chart,
                RadicalMonomial(0b11),
                rf(one(), Poly::from_ints(&[0, 2, -2])),
            ),
            // √h / (h(1−h))
            Transcendental::LnHalfAngle => AlgebraicElement::from_term(
                chart,
                RadicalMonomial::single(0),
                rf(one(), Poly::from_ints(&[0, 1, -1])),
            ),
            // 1/√(h²+h) on both charts where it is admissible
            Transcendental::LnConic => match chart {
                Chart::NegBranch => AlgebraicElement::from_term(
                    chart,
                    RadicalMonomial::single(0),
                    rf(one(), Poly::from_ints(&[0, 1, 1])),
                ),
                _ => AlgebraicElement::from_term(
                    chart,
                    RadicalMonomial(0b11),
                    rf(one(), Poly::from_ints(&[0, 1, 1])),
                ),
            },
        }
    }

    /// f64 value; the caller guarantees `h` lies inside an admissible chart.
    pub fn value_f64(self, h: f64) -> f64 {
        match self {
            Transcendental::One => 1.0,
            Transcendental::LnH => libm::log(h),
            Transcendental::LnOneMinusH => libm::log1p(-h),
            Transcendental::ArcTanSqrtH => libm::atan(libm::sqrt(h)),
            Transcendental::ArcSinSqrtH => libm::asin(libm::sqrt(h)),
            Transcendental::LnHalfAngle => 2.0 * libm::atanh(libm::sqrt(h)),
            Transcendental::LnConic => {
                let s = 2.0 * libm::sqrt(h * h + h);
                if h > 0.0 {
                    libm::log(s + 2.0 * h + 1.0)
                } else {
                    // |2√(h²+h)+2h+1| = 1/(|2h+1| + 2√(h²+h)) for h < −1
                    -libm::log(libm::fabs(2.0 * h + 1.0) + s)
                }
            }
        }
    }
}

impl fmt::Display for Transcendental {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Transcendental::One => "1",
            Transcendental::LnH => "ln h",
            Transcendental::LnOneMinusH => "ln(1-h)",
            Transcendental::ArcTanSqrtH => "arctan√h",
            Transcendental::ArcSinSqrtH => "arcsin√h",
            Transcendental::LnHalfAngle => "ln((1+√h)/(1-√h))",
            Transcendental::LnConic => "ln|2√(h²+h)+2h+1|",
        })
    }
}

/// A function of `h` on a chart: algebraic coefficients times basis
/// transcendentals. Absent parts are zero; stored parts are never zero.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct Expression {
    chart: Chart,
    parts: BTreeMap<Transcendental, AlgebraicElement>,
}

impl Expression {
    pub fn zero(chart: Chart) -> Self {
        Expression { chart, parts: BTreeMap::new() }
    }

    pub fn constant(chart: Chart, c: Scalar) -> Self {
        Expression::algebraic(AlgebraicElement::constant(chart, c))
    }

    pub fn poly(chart: Chart, p: Poly) -> Self {
        Expression::algebraic(AlgebraicElement::from_poly(chart, p))
    }

    pub fn algebraic(a: AlgebraicElement) -> Self {
        let chart = a.chart();
        let mut parts = BTreeMap::new();
        if !a.is_zero() {
            parts.insert(Transcendental::One, a);
        }
        Expression { chart, parts }
    }

    /// `coefficient · T`.
    pub fn term(t: Transcendental, coefficient: AlgebraicElement) -> Result<Self> {
        let chart = coefficient.chart();
        if !t.admissible_on(chart) {
            return Err(Error::InadmissibleTranscendental { tag: t.name(), chart });
        }
        let mut parts = BTreeMap::new();
        if !coefficient.is_zero() {
            parts.insert(t, coefficient);
        }
        Ok(Expression { chart, parts })
    }

    /// The bare basis function `T`.
    pub fn transcendental(chart: Chart, t: Transcendental) -> Result<Self> {
        Expression::term(t, AlgebraicElement::constant(chart, Scalar::one()))
    }

    pub fn from_parts(
        chart: Chart,
        parts: impl IntoIterator<Item = (Transcendental, AlgebraicElement)>,
    ) -> Result<Self> {
        let mut out = Expression::zero(chart);
        for (t, a) in parts {
            if a.chart() != chart {
                return Err(Error::ChartMismatch { left: chart, right: a.chart() });
            }
            out = out.add(&Expression::term(t, a)?)?;
        }
        Ok(out)
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn parts(&self) -> &BTreeMap<Transcendental, AlgebraicElement> {
        &self.parts
    }

    pub fn part(&self, t: Transcendental) -> Option<&AlgebraicElement> {
        self.parts.get(&t)
    }

    pub fn is_zero(&self) -> bool {
        self.parts.is_empty()
    }

    /// True when only the `One` part is present.
    pub fn is_algebraic(&self) -> bool {
        self.parts.keys().all(|t| *t == Transcendental::One)
    }

    pub fn algebraic_part(&self) -> AlgebraicElement {
        self.parts.get(&Transcendental::One).cloned().unwrap_or_else(|| AlgebraicElement::zero(self.chart))
    }

    fn check(&self, other: &Expression) -> Result<()> {
        if self.chart != other.chart {
            return Err(Error::ChartMismatch { left: self.chart, right: other.chart });
        }
        Ok(())
    }

    fn insert(&mut self, t: Transcendental, a: AlgebraicElement) {
        if a.is_zero() {
            return;
        }
        let merged = match self.parts.remove(&t) {
            Some(old) => old.add(&a).expect("same chart"),
            None => a,
        };
        if !merged.is_zero() {
            self.parts.insert(t, merged);
        }
    }

    pub fn add(&self, other: &Expression) -> Result<Expression> {
        self.check(other)?;
        let mut out = self.clone();
        for (t, a) in &other.parts {
            out.insert(*t, a.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> Expression {
        Expression {
            chart: self.chart,
            parts: self.parts.iter().map(|(t, a)| (*t, a.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &Expression) -> Result<Expression> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Scalar) -> Expression {
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            out.insert(*t, a.scale(c));
        }
        out
    }

    /// Multiply every part by an algebraic element.
    pub fn mul_algebraic(&self, f: &AlgebraicElement) -> Result<Expression> {
        if f.chart() != self.chart {
            return Err(Error::ChartMismatch { left: self.chart, right: f.chart() });
        }
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            out.insert(*t, a.mul(f)?);
        }
        Ok(out)
    }

    pub fn mul_poly(&self, p: &Poly) -> Expression {
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            out.insert(*t, a.mul_poly(p));
        }
        out
    }

    pub fn div_poly_pow(&self, p: &Poly, k: u32) -> Expression {
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            out.insert(*t, a.div_poly_pow(p, k));
        }
        out
    }

    pub fn mul_generator_power(&self, g: usize, halves: i64) -> Expression {
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            out.insert(*t, a.mul_generator_power(g, halves));
        }
        out
    }

    /// Product; at most one operand may carry a non-`One` part.
    pub fn mul(&self, other: &Expression) -> Result<Expression> {
        self.check(other)?;
        if self.is_algebraic() {
            return other.mul_algebraic(&self.algebraic_part());
        }
        if other.is_algebraic() {
            return self.mul_algebraic(&other.algebraic_part());
        }
        Err(Error::UnsupportedProduct)
    }

    /// Exact derivative; the class is closed under differentiation.
    pub fn differentiate(&self) -> Expression {
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            out.insert(*t, a.derivative());
            if *t != Transcendental::One {
                let dt = t.derivative(self.chart);
                out.insert(Transcendental::One, a.mul(&dt).expect("same chart"));
            }
        }
        out
    }

    pub fn differentiate_n(&self, m: u32) -> Expression {
        let mut e = self.clone();
        for _ in 0..m {
            e = e.differentiate();
        }
        e
    }

    /// Canonical form: every coefficient rebuilt from its expanded
    /// numerator and denominator. Idempotent.
    pub fn normalize(&self) -> Result<Expression> {
        let mut out = Expression::zero(self.chart);
        for (t, a) in &self.parts {
            let mut terms = Vec::new();
            for (e, r) in a.terms() {
                let rebuilt = RatFunc::new(r.numerator().clone(), &r.denominator()).ok_or_else(|| {
                    Error::MalformedExpression("denominator is identically zero".into())
                })?;
                terms.push((*e, rebuilt));
            }
            out.insert(*t, AlgebraicElement::from_terms(self.chart, terms)?);
        }
        Ok(out)
    }

    /// Uncertified f64 value.
    pub fn eval_f64(&self, h: f64) -> f64 {
        self.parts.iter().map(|(t, a)| a.eval_f64(h) * t.value_f64(h)).sum()
    }
}

impl fmt::Debug for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Expression {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.parts.is_empty() {
            return write!(f, "0");
        }
        for (i, (t, a)) in self.parts.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            if *t == Transcendental::One {
                write!(f, "{{{}}}", a)?;
            } else {
                write!(f, "{{{}}}·{}", a, t)?;
            }
        }
        Ok(())
    }
}
