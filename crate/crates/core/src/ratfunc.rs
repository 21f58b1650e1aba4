//! Reduced rational functions with a factored denominator.
//!
//! Denominators are kept as products of powers of monic, pairwise coprime
//! polynomials. Differentiation and addition then never need a full
//! numerator/denominator gcd, only cheap divisibility tests against the
//! (low-degree) factors.

use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;

use crate::poly::Poly;
use crate::scalar::{Rational, Scalar};

#[derive(Clone, PartialEq, Eq, Hash)]
pub struct RatFunc {
    num: Poly,
    /// Monic, nonconstant, pairwise coprime, canonically sorted, exponents ≥ 1.
    den: Vec<(Poly, u32)>,
}

impl Default for RatFunc {
    fn default() -> Self {
        RatFunc::zero()
    }
}

/// Total order on polynomials used only to make factor lists canonical.
pub(crate) fn canonical_cmp(a: &Poly, b: &Poly) -> Ordering {
    a.degree().cmp(&b.degree()).then_with(|| {
        for (x, y) in a.coeffs().iter().zip(b.coeffs()).rev() {
            let o = x.rational.cmp(&y.rational).then_with(|| x.surd.cmp(&y.surd));
            if o != Ordering::Equal {
                return o;
            }
        }
        Ordering::Equal
    })
}

/// Refine a list of polynomials into a pairwise coprime monic base such that
/// each input is a constant times a product of powers of base elements.
pub(crate) fn coprime_base(polys: impl IntoIterator<Item = Poly>) -> Vec<Poly> {
    let mut base: Vec<Poly> = Vec::new();
    for p in polys {
        let mut work = alloc::vec![p.monic()];
        'outer: while let Some(q) = work.pop() {
            if q.degree().unwrap_or(0) == 0 {
                continue;
            }
            for i in 0..base.len() {
                if base[i] == q {
                    continue 'outer;
                }
                if coprime_fast(&base[i], &q) {
                    continue;
                }
                let g = base[i].gcd(&q);
                if g.degree().unwrap_or(0) > 0 {
                    let b = base.remove(i);
                    work.push(b.exact_div(&g).expect("gcd divides").monic());
                    work.push(q.exact_div(&g).expect("gcd divides").monic());
                    work.push(g);
                    continue 'outer;
                }
            }
            base.push(q);
        }
    }
    base.sort_by(canonical_cmp);
    base
}

/// Cheap sufficient test for coprimality of two distinct monic polynomials.
fn coprime_fast(a: &Poly, b: &Poly) -> bool {
    match (a.degree(), b.degree()) {
        (Some(1), Some(1)) => a != b,
        (Some(1), Some(_)) => !b.eval(&(-a.coeff(0))).is_zero(),
        (Some(_), Some(1)) => !a.eval(&(-b.coeff(0))).is_zero(),
        _ => false,
    }
}

/// Multiplicity of `b` as a factor of `f`.
fn multiplicity(f: &Poly, b: &Poly) -> (u32, Poly) {
    let mut k = 0;
    let mut rest = f.clone();
    while rest.degree().unwrap_or(0) >= b.degree().unwrap_or(0) && !rest.is_zero() {
        match rest.exact_div(b) {
            Some(q) => {
                rest = q;
                k += 1;
            }
            None => break,
        }
    }
    (k, rest)
}

/// Re-express `Π f^k` over `base`, returning `(leftover constant, exponents)`.
fn express_over(factors: &[(Poly, u32)], base: &[Poly]) -> (Scalar, Vec<u32>) {
    let mut exps = alloc::vec![0u32; base.len()];
    let mut constant = Scalar::one();
    for (f, k) in factors {
        let mut rest = f.clone();
        for (i, b) in base.iter().enumerate() {
            if b == f {
                exps[i] += *k;
                rest = Poly::one();
                break;
            }
            let (m, r) = multiplicity(&rest, b);
            exps[i] += m * *k;
            rest = r;
        }
        debug_assert!(rest.is_constant(), "base does not cover factor");
        constant = &constant * &rest.coeff(0).pow(*k);
    }
    (constant, exps)
}

/// Put several rational functions over one denominator.
///
/// Returns the factored common denominator `D` (monic, coprime factors) and
/// the numerators `N_i` with `r_i = N_i / D`.
pub fn common_denominator(items: &[&RatFunc]) -> (Vec<(Poly, u32)>, Vec<Poly>) {
    let base = coprime_base(items.iter().flat_map(|r| r.den.iter().map(|(f, _)| f.clone())));
    let expressed: Vec<(Scalar, Vec<u32>)> = items.iter().map(|r| express_over(&r.den, &base)).collect();
    let mut max = alloc::vec![0u32; base.len()];
    for (_, exps) in &expressed {
        for (m, e) in max.iter_mut().zip(exps) {
            *m = (*m).max(*e);
        }
    }
    let nums = items
        .iter()
        .zip(&expressed)
        .map(|(r, (c, exps))| {
            let mut n = r.num.scale(&c.inverse().expect("nonzero content"));
            for ((b, m), e) in base.iter().zip(&max).zip(exps) {
                if m > e {
                    n = &n * &b.pow(m - e);
                }
            }
            n
        })
        .collect();
    let den = base.into_iter().zip(max).filter(|(_, k)| *k > 0).collect();
    (den, nums)
}

impl RatFunc {
    pub fn zero() -> Self {
        RatFunc { num: Poly::zero(), den: Vec::new() }
    }

    pub fn one() -> Self {
        RatFunc::from_poly(Poly::one())
    }

    pub fn from_poly(p: Poly) -> Self {
        RatFunc { num: p, den: Vec::new() }
    }

    pub fn constant(c: Scalar) -> Self {
        RatFunc::from_poly(Poly::constant(c))
    }

    /// `num / den`; `None` if `den` is the zero polynomial.
    pub fn new(num: Poly, den: &Poly) -> Option<Self> {
        if den.is_zero() {
            return None;
        }
        let lead = den.leading().expect("nonzero").clone();
        let num = num.scale(&lead.inverse().expect("nonzero"));
        let factors = den.square_free_decomposition();
        Some(RatFunc::from_factored(num, factors))
    }

    /// `num / Π f^k` for arbitrary nonconstant `f`; normalizes and reduces.
    pub fn from_factored(num: Poly, factors: Vec<(Poly, u32)>) -> Self {
        let factors: Vec<(Poly, u32)> =
            factors.into_iter().filter(|(f, k)| *k > 0 && !f.is_constant()).collect();
        let base = coprime_base(factors.iter().map(|(f, _)| f.clone()));
        let (c, exps) = express_over(&factors, &base);
        let num = num.scale(&c.inverse().expect("nonzero factor content"));
        let den = base.into_iter().zip(exps).filter(|(_, k)| *k > 0).collect();
        let mut r = RatFunc { num, den };
        r.reduce();
        r
    }

    fn reduce(&mut self) {
        if self.num.is_zero() {
            self.den.clear();
            return;
        }
        let mut i = 0;
        while i < self.den.len() {
            let (f, k) = self.den[i].clone();
            let (q, r) = self.num.div_rem(&f);
            if r.is_zero() {
                self.num = q;
                if k == 1 {
                    self.den.remove(i);
                } else {
                    self.den[i].1 = k - 1;
                }
                continue;
            }
            if f.degree().unwrap_or(0) > 1 {
                let g = f.gcd(&r);
                if g.degree().unwrap_or(0) > 0 {
                    // partial common factor: split and rebuild the base
                    let mut factors = self.den.clone();
                    factors[i] = (g.clone(), k);
                    factors.push((f.exact_div(&g).expect("gcd divides"), k));
                    let rebuilt = RatFunc::from_factored(self.num.clone(), factors);
                    *self = rebuilt;
                    return;
                }
            }
            i += 1;
        }
    }

    pub fn is_zero(&self) -> bool {
        self.num.is_zero()
    }

    pub fn is_polynomial(&self) -> bool {
        self.den.is_empty()
    }

    pub fn numerator(&self) -> &Poly {
        &self.num
    }

    pub fn denominator_factors(&self) -> &[(Poly, u32)] {
        &self.den
    }

    /// The monic expanded denominator.
    pub fn denominator(&self) -> Poly {
        self.den.iter().fold(Poly::one(), |acc, (f, k)| &acc * &f.pow(*k))
    }

    pub fn scale(&self, c: &Scalar) -> RatFunc {
        if c.is_zero() {
            return RatFunc::zero();
        }
        RatFunc { num: self.num.scale(c), den: self.den.clone() }
    }

    pub fn neg(&self) -> RatFunc {
        RatFunc { num: -&self.num, den: self.den.clone() }
    }

    pub fn mul_poly(&self, p: &Poly) -> RatFunc {
        let mut r = RatFunc { num: &self.num * p, den: self.den.clone() };
        r.reduce();
        r
    }

    /// Divide by `p^k`.
    pub fn div_poly_pow(&self, p: &Poly, k: u32) -> RatFunc {
        if k == 0 || self.is_zero() {
            return self.clone();
        }
        let mut factors = self.den.clone();
        let lead = p.leading().expect("nonzero divisor").clone();
        factors.push((p.monic(), k));
        let num = self.num.scale(&lead.pow(k).inverse().expect("nonzero"));
        RatFunc::from_factored(num, factors)
    }

    fn common_base(&self, other: &RatFunc) -> (Vec<Poly>, Vec<u32>, Vec<u32>) {
        if self.den == other.den {
            let base: Vec<Poly> = self.den.iter().map(|(f, _)| f.clone()).collect();
            let e: Vec<u32> = self.den.iter().map(|(_, k)| *k).collect();
            return (base, e.clone(), e);
        }
        let base =
            coprime_base(self.den.iter().chain(other.den.iter()).map(|(f, _)| f.clone()));
        let (ca, ea) = express_over(&self.den, &base);
        let (cb, eb) = express_over(&other.den, &base);
        debug_assert!(ca.is_one() && cb.is_one());
        (base, ea, eb)
    }

    pub fn add(&self, other: &RatFunc) -> RatFunc {
        if self.is_zero() {
            return other.clone();
        }
        if other.is_zero() {
            return self.clone();
        }
        if self.den == other.den {
            let mut r = RatFunc { num: &self.num + &other.num, den: self.den.clone() };
            r.reduce();
            return r;
        }
        let (base, ea, eb) = self.common_base(other);
        let mut na = self.num.clone();
        let mut nb = other.num.clone();
        let mut den = Vec::with_capacity(base.len());
        for ((b, a), c) in base.into_iter().zip(ea).zip(eb) {
            let m = a.max(c);
            if m > a {
                na = &na * &b.pow(m - a);
            }
            if m > c {
                nb = &nb * &b.pow(m - c);
            }
            if m > 0 {
                den.push((b, m));
            }
        }
        let mut r = RatFunc { num: &na + &nb, den };
        r.reduce();
        r
    }

    pub fn sub(&self, other: &RatFunc) -> RatFunc {
        self.add(&other.neg())
    }

    pub fn mul(&self, other: &RatFunc) -> RatFunc {
        if self.is_zero() || other.is_zero() {
            return RatFunc::zero();
        }
        if other.den.is_empty() {
            return self.mul_poly(&other.num);
        }
        if self.den.is_empty() {
            return other.mul_poly(&self.num);
        }
        let (base, ea, eb) = self.common_base(other);
        let den = base
            .into_iter()
            .zip(ea.into_iter().zip(eb))
            .map(|(b, (a, c))| (b, a + c))
            .filter(|(_, k)| *k > 0)
            .collect();
        let mut r = RatFunc { num: &self.num * &other.num, den };
        r.reduce();
        r
    }

    /// Exact derivative.
    pub fn derivative(&self) -> RatFunc {
        if self.den.is_empty() {
            return RatFunc::from_poly(self.num.derivative());
        }
        // (N/Πf^k)' = [N'·Πf − N·Σ k f' Π_{j≠i} f_j] / Π f^{k+1}
        let prod: Poly = self.den.iter().fold(Poly::one(), |acc, (f, _)| &acc * f);
        let mut num = &self.num.derivative() * &prod;
        for (i, (f, k)) in self.den.iter().enumerate() {
            let others = self
                .den
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .fold(Poly::one(), |acc, (_, (g, _))| &acc * g);
            let term = &(&self.num * &f.derivative().scale(&Scalar::from_int(*k as i64))) * &others;
            num = &num - &term;
        }
        let den = self.den.iter().map(|(f, k)| (f.clone(), k + 1)).collect();
        let mut r = RatFunc { num, den };
        r.reduce();
        r
    }

    /// `(r·Π√g)' / Π√g` in one pass, where the `g` are pairwise coprime and
    /// each is either a denominator factor (up to scaling) or coprime to all
    /// of them. Returns `None` when that precondition fails.
    pub(crate) fn derivative_under_radicals(&self, radicals: &[Poly]) -> Option<RatFunc> {
        if radicals.is_empty() {
            return Some(self.derivative());
        }
        if self.num.is_zero() {
            return Some(RatFunc::zero());
        }
        // factors φ with exponents a (as powers of the numerator, doubled)
        let mut factors: Vec<(Poly, i64)> = self.den.iter().map(|(f, k)| (f.clone(), -2 * i64::from(*k))).collect();
        for g in radicals {
            let g = g.monic();
            match factors.iter_mut().find(|(f, _)| *f == g) {
                Some((_, a)) => *a += 1,
                None => {
                    if !self.den.iter().all(|(f, _)| coprime_fast(f, &g) || f.gcd(&g).degree() == Some(0)) {
                        return None;
                    }
                    factors.push((g, 1));
                }
            }
        }
        let prod: Poly = factors.iter().fold(Poly::one(), |acc, (f, _)| &acc * f);
        let mut num = &self.num.derivative() * &prod;
        let half_n = self.num.scale(&Scalar::from_ratio(1, 2));
        for (i, (f, a)) in factors.iter().enumerate() {
            let others = factors
                .iter()
                .enumerate()
                .filter(|(j, _)| *j != i)
                .fold(Poly::one(), |acc, (_, (g, _))| &acc * g);
            let term = &(&half_n * &f.derivative().scale(&Scalar::from_int(*a))) * &others;
            num = &num + &term;
        }
        let mut den: Vec<(Poly, u32)> = self.den.iter().map(|(f, k)| (f.clone(), k + 1)).collect();
        for (f, _) in &factors[self.den.len()..] {
            den.push((f.clone(), 1));
        }
        den.sort_by(|a, b| canonical_cmp(&a.0, &b.0));
        let mut r = RatFunc { num, den };
        r.reduce();
        Some(r)
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        let d: f64 = self.den.iter().map(|(f, k)| libm::pow(f.eval_f64(x), *k as f64)).product();
        self.num.eval_f64(x) / d
    }

    /// Exact value at a rational point, `None` at a pole.
    pub fn eval_rational(&self, x: &Rational) -> Option<Scalar> {
        let mut d = Scalar::one();
        for (f, k) in &self.den {
            d = &d * &f.eval_rational(x).pow(*k);
        }
        self.num.eval_rational(x).div(&d)
    }
}

impl fmt::Debug for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for RatFunc {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.den.is_empty() {
            return write!(f, "{}", self.num);
        }
        write!(f, "({})/(", self.num)?;
        for (i, (p, k)) in self.den.iter().enumerate() {
            if i > 0 {
                write!(f, "·")?;
            }
            if *k == 1 {
                write!(f, "({})", p)?;
            } else {
                write!(f, "({})^{}", p, k)?;
            }
        }
        write!(f, ")")
    }
}
