//! Elements of the coefficient field: rational functions times radical
//! monomials in the chart generators.

use alloc::collections::BTreeMap;
use alloc::vec::Vec;
use core::fmt;

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::ratfunc::RatFunc;
use crate::scalar::Scalar;

/// Bit `g` set means the monomial contains `√r_g`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub struct RadicalMonomial(pub u8);

impl RadicalMonomial {
    pub const ONE: RadicalMonomial = RadicalMonomial(0);

    pub fn single(g: usize) -> Self {
        RadicalMonomial(1 << g)
    }

    pub fn contains(self, g: usize) -> bool {
        self.0 & (1 << g) != 0
    }

    pub fn generators(self) -> impl Iterator<Item = usize> {
        (0..8).filter(move |g| self.0 & (1 << g) != 0)
    }

    /// Exponent vector over `k` generators.
    pub fn exponents(self, k: usize) -> Vec<u8> {
        (0..k).map(|g| u8::from(self.contains(g))).collect()
    }

    pub fn from_exponents(e: &[u8]) -> Option<Self> {
        let mut bits = 0u8;
        for (g, &x) in e.iter().enumerate() {
            match x {
                0 => {}
                1 => bits |= 1 << g,
                _ => return None,
            }
        }
        Some(RadicalMonomial(bits))
    }
}

/// `Σ_e c_e(h)·ρ_e` with `ρ_e` a product of square roots of chart generators.
#[derive(Clone, PartialEq, Eq, Hash)]
pub struct AlgebraicElement {
    chart: Chart,
    terms: BTreeMap<RadicalMonomial, RatFunc>,
}

impl AlgebraicElement {
    pub fn zero(chart: Chart) -> Self {
        AlgebraicElement { chart, terms: BTreeMap::new() }
    }

    pub fn from_ratfunc(chart: Chart, r: RatFunc) -> Self {
        AlgebraicElement::from_term(chart, RadicalMonomial::ONE, r)
    }

    pub fn from_poly(chart: Chart, p: Poly) -> Self {
        AlgebraicElement::from_ratfunc(chart, RatFunc::from_poly(p))
    }

    pub fn constant(chart: Chart, c: Scalar) -> Self {
        AlgebraicElement::from_poly(chart, Poly::constant(c))
    }

    pub fn from_term(chart: Chart, e: RadicalMonomial, r: RatFunc) -> Self {
        let mut terms = BTreeMap::new();
        if !r.is_zero() {
            terms.insert(e, r);
        }
        AlgebraicElement { chart, terms }
    }

    /// The single radical `√r_g`.
    pub fn radical(chart: Chart, g: usize) -> Self {
        AlgebraicElement::from_term(chart, RadicalMonomial::single(g), RatFunc::one())
    }

    /// Build from raw terms, rejecting out-of-range radical exponents.
    pub fn from_terms(
        chart: Chart,
        terms: impl IntoIterator<Item = (RadicalMonomial, RatFunc)>,
    ) -> Result<Self> {
        let mut out = AlgebraicElement::zero(chart);
        for (e, r) in terms {
            if e.0 >> chart.generator_count() != 0 {
                return Err(Error::MalformedExpression(alloc::format!(
                    "radical monomial {:#b} has no generator on {}",
                    e.0,
                    chart
                )));
            }
            out.add_term(e, r);
        }
        Ok(out)
    }

    fn add_term(&mut self, e: RadicalMonomial, r: RatFunc) {
        if r.is_zero() {
            return;
        }
        let merged = match self.terms.remove(&e) {
            Some(old) => old.add(&r),
            None => r,
        };
        if !merged.is_zero() {
            self.terms.insert(e, merged);
        }
    }

    pub fn chart(&self) -> Chart {
        self.chart
    }

    pub fn terms(&self) -> &BTreeMap<RadicalMonomial, RatFunc> {
        &self.terms
    }

    pub fn term(&self, e: RadicalMonomial) -> Option<&RatFunc> {
        self.terms.get(&e)
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Whether the element is `c(h)` with no radicals.
    pub fn is_rational_function(&self) -> bool {
        self.terms.keys().all(|e| *e == RadicalMonomial::ONE)
    }

    pub fn as_ratfunc(&self) -> Option<RatFunc> {
        if self.is_zero() {
            return Some(RatFunc::zero());
        }
        if self.is_rational_function() {
            self.terms.get(&RadicalMonomial::ONE).cloned()
        } else {
            None
        }
    }

    fn check(&self, other: &AlgebraicElement) -> Result<()> {
        if self.chart != other.chart {
            return Err(Error::ChartMismatch { left: self.chart, right: other.chart });
        }
        Ok(())
    }

    pub fn add(&self, other: &AlgebraicElement) -> Result<AlgebraicElement> {
        self.check(other)?;
        let mut out = self.clone();
        for (e, r) in &other.terms {
            out.add_term(*e, r.clone());
        }
        Ok(out)
    }

    pub fn neg(&self) -> AlgebraicElement {
        AlgebraicElement {
            chart: self.chart,
            terms: self.terms.iter().map(|(e, r)| (*e, r.neg())).collect(),
        }
    }

    pub fn sub(&self, other: &AlgebraicElement) -> Result<AlgebraicElement> {
        self.add(&other.neg())
    }

    pub fn scale(&self, c: &Scalar) -> AlgebraicElement {
        if c.is_zero() {
            return AlgebraicElement::zero(self.chart);
        }
        AlgebraicElement {
            chart: self.chart,
            terms: self.terms.iter().map(|(e, r)| (*e, r.scale(c))).collect(),
        }
    }

    pub fn mul_ratfunc(&self, f: &RatFunc) -> AlgebraicElement {
        let mut out = AlgebraicElement::zero(self.chart);
        for (e, r) in &self.terms {
            out.add_term(*e, r.mul(f));
        }
        out
    }

    pub fn mul_poly(&self, p: &Poly) -> AlgebraicElement {
        let mut out = AlgebraicElement::zero(self.chart);
        for (e, r) in &self.terms {
            out.add_term(*e, r.mul_poly(p));
        }
        out
    }

    pub fn div_poly_pow(&self, p: &Poly, k: u32) -> AlgebraicElement {
        let mut out = AlgebraicElement::zero(self.chart);
        for (e, r) in &self.terms {
            out.add_term(*e, r.div_poly_pow(p, k));
        }
        out
    }

    /// Multiply by `r_g^{halves/2}` for a signed number of half powers.
    pub fn mul_generator_power(&self, g: usize, halves: i64) -> AlgebraicElement {
        let r = &self.chart.generators()[g];
        let mut out = AlgebraicElement::zero(self.chart);
        for (e, c) in &self.terms {
            let total = halves + i64::from(e.contains(g));
            let whole = total.div_euclid(2);
            let odd = total.rem_euclid(2) == 1;
            let bits = if odd { e.0 | (1 << g) } else { e.0 & !(1 << g) };
            let c = if whole >= 0 {
                c.mul_poly(&r.pow(whole as u32))
            } else {
                c.div_poly_pow(r, (-whole) as u32)
            };
            out.add_term(RadicalMonomial(bits), c);
        }
        out
    }

    pub fn mul(&self, other: &AlgebraicElement) -> Result<AlgebraicElement> {
        self.check(other)?;
        let gens = self.chart.generators();
        let mut out = AlgebraicElement::zero(self.chart);
        for (ea, ra) in &self.terms {
            for (eb, rb) in &other.terms {
                let mut prod = ra.mul(rb);
                // √r·√r folds into r
                for g in RadicalMonomial(ea.0 & eb.0).generators() {
                    prod = prod.mul_poly(&gens[g]);
                }
                out.add_term(RadicalMonomial(ea.0 ^ eb.0), prod);
            }
        }
        Ok(out)
    }

    /// Exact derivative; `(c·ρ_e)' = (c' + c·Σ_{g∈e} r_g'/(2 r_g))·ρ_e`.
    pub fn derivative(&self) -> AlgebraicElement {
        let gens = self.chart.generators();
        let mut out = AlgebraicElement::zero(self.chart);
        for (e, c) in &self.terms {
            let radicals: Vec<Poly> = e.generators().map(|g| gens[g].clone()).collect();
            if let Some(d) = c.derivative_under_radicals(&radicals) {
                out.add_term(*e, d);
                continue;
            }
            let mut d = c.derivative();
            for g in e.generators() {
                let log_deriv = RatFunc::new(
                    gens[g].derivative().scale(&Scalar::from_ratio(1, 2)),
                    &gens[g],
                )
                .expect("generator is nonzero");
                d = d.add(&c.mul(&log_deriv));
            }
            out.add_term(*e, d);
        }
        out
    }

    /// Plain f64 evaluation without error tracking.
    pub fn eval_f64(&self, h: f64) -> f64 {
        self.terms
            .iter()
            .map(|(e, r)| {
                let rad: f64 = e
                    .generators()
                    .map(|g| libm::sqrt(self.chart.generator_value(g, h)))
                    .product();
                r.eval_f64(h) * rad
            })
            .sum()
    }
}

impl fmt::Debug for AlgebraicElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for AlgebraicElement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.terms.is_empty() {
            return write!(f, "0");
        }
        for (i, (e, r)) in self.terms.iter().enumerate() {
            if i > 0 {
                write!(f, " + ")?;
            }
            write!(f, "[{}]", r)?;
            for g in e.generators() {
                write!(f, "·{}", self.chart.generator_label(g))?;
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sqrt_h_squared_is_h() {
        let s = AlgebraicElement::radical(Chart::PosAxis, 0);
        let sq = s.mul(&s).unwrap();
        assert_eq!(sq, AlgebraicElement::from_poly(Chart::PosAxis, Poly::h()));
    }

    #[test]
    fn joint_monomial_on_pos_axis() {
        let a = AlgebraicElement::radical(Chart::PosAxis, 0);
        let b = AlgebraicElement::radical(Chart::PosAxis, 1);
        let ab = a.mul(&b).unwrap();
        assert_eq!(ab.terms().keys().copied().collect::<Vec<_>>(), [RadicalMonomial(0b11)]);
        let v = ab.eval_f64(3.0);
        assert!((v - (12.0f64).sqrt()).abs() < 1e-14);
    }

    #[test]
    fn generator_half_powers() {
        // √h·√h·√(1+h) → h·√(1+h)
        let e = AlgebraicElement::radical(Chart::PosAxis, 1).mul_generator_power(0, 2);
        assert_eq!(
            e,
            AlgebraicElement::from_term(
                Chart::PosAxis,
                RadicalMonomial::single(1),
                RatFunc::from_poly(Poly::h())
            )
        );
        let back = e.mul_generator_power(0, -2);
        assert_eq!(back, AlgebraicElement::radical(Chart::PosAxis, 1));
    }

    #[test]
    fn chart_mismatch_is_rejected() {
        let a = AlgebraicElement::radical(Chart::PosAxis, 0);
        let b = AlgebraicElement::radical(Chart::UnitInterval, 0);
        assert!(matches!(a.add(&b), Err(Error::ChartMismatch { .. })));
    }
}
