//! Dense univariate polynomials in `h` over `Q(√2)`.

use alloc::vec;
use alloc::vec::Vec;
use core::cmp::Ordering;
use core::fmt;
use core::ops::{Add, Mul, Neg, Sub};

use num_bigint::BigInt;
use num_integer::Integer;
use num_traits::{One, Zero};

use crate::scalar::{Rational, Scalar};

/// Coefficients indexed by power of `h`; the highest stored coefficient is
/// nonzero, and the zero polynomial is the empty list.
#[derive(Clone, PartialEq, Eq, Hash, Default)]
pub struct Poly {
    coeffs: Vec<Scalar>,
}

impl Poly {
    pub fn new(coeffs: Vec<Scalar>) -> Self {
        let mut p = Poly { coeffs };
        p.trim();
        p
    }

    pub fn from_rationals(coeffs: &[Rational]) -> Self {
        Poly::new(coeffs.iter().cloned().map(Scalar::from_rational).collect())
    }

    pub fn from_ints(coeffs: &[i64]) -> Self {
        Poly::new(coeffs.iter().map(|&c| Scalar::from_int(c)).collect())
    }

    pub fn zero() -> Self {
        Poly { coeffs: Vec::new() }
    }

    pub fn one() -> Self {
        Poly::constant(Scalar::one())
    }

    pub fn constant(c: Scalar) -> Self {
        Poly::new(vec![c])
    }

    /// The identity polynomial `h`.
    pub fn h() -> Self {
        Poly::from_ints(&[0, 1])
    }

    /// `c·h^k`.
    pub fn monomial(c: Scalar, k: usize) -> Self {
        let mut coeffs = vec![Scalar::zero(); k + 1];
        coeffs[k] = c;
        Poly::new(coeffs)
    }

    fn trim(&mut self) {
        while self.coeffs.last().is_some_and(Scalar::is_zero) {
            self.coeffs.pop();
        }
    }

    pub fn coeffs(&self) -> &[Scalar] {
        &self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Scalar> {
        self.coeffs
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.is_empty()
    }

    pub fn is_one(&self) -> bool {
        self.coeffs.len() == 1 && self.coeffs[0].is_one()
    }

    pub fn is_constant(&self) -> bool {
        self.coeffs.len() <= 1
    }

    /// Degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<usize> {
        self.coeffs.len().checked_sub(1)
    }

    pub fn leading(&self) -> Option<&Scalar> {
        self.coeffs.last()
    }

    pub fn coeff(&self, k: usize) -> Scalar {
        self.coeffs.get(k).cloned().unwrap_or_default()
    }

    pub fn has_rational_coeffs(&self) -> bool {
        self.coeffs.iter().all(Scalar::is_rational)
    }

    pub fn scale(&self, c: &Scalar) -> Poly {
        if c.is_zero() {
            return Poly::zero();
        }
        Poly::new(self.coeffs.iter().map(|a| a * c).collect())
    }

    /// Divide by the leading coefficient.
    pub fn monic(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some(l) if l.is_one() => self.clone(),
            Some(l) => self.scale(&l.inverse().expect("nonzero leading coefficient")),
        }
    }

    /// Divide by the absolute value of the leading coefficient; keeps signs.
    pub fn normalize_positive(&self) -> Poly {
        match self.leading() {
            None => Poly::zero(),
            Some(l) => self.scale(&l.abs().inverse().expect("nonzero leading coefficient")),
        }
    }

    pub fn derivative(&self) -> Poly {
        if self.coeffs.len() <= 1 {
            return Poly::zero();
        }
        Poly::new(
            self.coeffs
                .iter()
                .enumerate()
                .skip(1)
                .map(|(k, c)| c * &Scalar::from_int(k as i64))
                .collect(),
        )
    }

    pub fn pow(&self, e: u32) -> Poly {
        let mut acc = Poly::one();
        let mut base = self.clone();
        let mut e = e;
        while e > 0 {
            if e & 1 == 1 {
                acc = &acc * &base;
            }
            e >>= 1;
            if e > 0 {
                base = &base * &base;
            }
        }
        acc
    }

    /// Multiply by `h^k`.
    pub fn shift(&self, k: usize) -> Poly {
        if self.is_zero() {
            return Poly::zero();
        }
        let mut coeffs = vec![Scalar::zero(); k];
        coeffs.extend(self.coeffs.iter().cloned());
        Poly { coeffs }
    }

    /// Euclidean division; panics on a zero divisor.
    pub fn div_rem(&self, divisor: &Poly) -> (Poly, Poly) {
        let dd = divisor.degree().expect("division by the zero polynomial");
        let lead_inv = divisor.coeffs[dd].inverse().expect("nonzero leading coefficient");
        let mut rem = self.coeffs.clone();
        if rem.len() <= dd {
            return (Poly::zero(), self.clone());
        }
        let mut quot = vec![Scalar::zero(); rem.len() - dd];
        for k in (0..quot.len()).rev() {
            let c = &rem[k + dd] * &lead_inv;
            if !c.is_zero() {
                for (j, d) in divisor.coeffs.iter().enumerate() {
                    let t = &c * d;
                    rem[k + j] -= &t;
                }
            }
            quot[k] = c;
        }
        rem.truncate(dd);
        (Poly::new(quot), Poly::new(rem))
    }

    /// Quotient if `divisor` divides `self` exactly.
    pub fn exact_div(&self, divisor: &Poly) -> Option<Poly> {
        let (q, r) = self.div_rem(divisor);
        r.is_zero().then_some(q)
    }

    /// Monic greatest common divisor (`gcd(0, 0) = 0`).
    pub fn gcd(&self, other: &Poly) -> Poly {
        let mut a = self.clone();
        let mut b = other.clone();
        while !b.is_zero() {
            let (_, r) = a.div_rem(&b);
            a = b;
            b = r.normalize_positive();
        }
        a.monic()
    }

    /// Yun's square-free decomposition: monic factors `f_j` with multiplicity
    /// `j` such that `self = c·Π f_j^j`. Constant factors are omitted.
    pub fn square_free_decomposition(&self) -> Vec<(Poly, u32)> {
        let mut out = Vec::new();
        if self.degree().unwrap_or(0) == 0 {
            return out;
        }
        let f = self.monic();
        let df = f.derivative();
        let mut a = f.gcd(&df);
        let mut b = f.exact_div(&a).expect("gcd divides");
        let mut c = df.exact_div(&a).expect("gcd divides derivative");
        let mut d = &c - &b.derivative();
        let mut j = 1;
        loop {
            a = b.gcd(&d);
            if !a.is_constant() {
                out.push((a.clone(), j));
            }
            b = b.exact_div(&a).expect("gcd divides");
            if b.is_constant() {
                break;
            }
            c = d.exact_div(&a).expect("gcd divides");
            d = &c - &b.derivative();
            j += 1;
        }
        out
    }

    /// Product of the distinct irreducible factors.
    pub fn square_free_part(&self) -> Poly {
        if self.degree().unwrap_or(0) == 0 {
            return self.clone();
        }
        let g = self.gcd(&self.derivative());
        self.exact_div(&g).expect("gcd divides").monic()
    }

    pub fn eval(&self, x: &Scalar) -> Scalar {
        let mut acc = Scalar::zero();
        for c in self.coeffs.iter().rev() {
            acc = &(&acc * x) + c;
        }
        acc
    }

    pub fn eval_rational(&self, x: &Rational) -> Scalar {
        self.eval(&Scalar::from_rational(x.clone()))
    }

    pub fn sign_at(&self, x: &Rational) -> Ordering {
        self.eval_rational(x).signum()
    }

    /// Sign as `h → +∞` (`toward_positive`) or `h → −∞`.
    pub fn sign_at_infinity(&self, toward_positive: bool) -> Ordering {
        match (self.leading(), self.degree()) {
            (None, _) => Ordering::Equal,
            (Some(l), Some(d)) => {
                let s = l.signum();
                if toward_positive || d % 2 == 0 {
                    s
                } else {
                    s.reverse()
                }
            }
            _ => unreachable!(),
        }
    }

    pub fn eval_f64(&self, x: f64) -> f64 {
        self.coeffs.iter().rev().fold(0.0, |acc, c| acc * x + c.to_f64())
    }

    pub fn to_f64_coeffs(&self) -> Vec<f64> {
        self.coeffs.iter().map(Scalar::to_f64).collect()
    }

    /// `Σ |a_k|`, as a rational upper bound.
    pub fn abs_coeff_sum_bound(&self) -> Rational {
        self.coeffs.iter().map(Scalar::abs_upper_bound).fold(Rational::default(), |a, b| a + b)
    }

    /// Cauchy-type bound: every real root has absolute value below the result.
    pub fn root_bound(&self) -> Rational {
        let d = match self.degree() {
            Some(d) if d > 0 => d,
            _ => return Rational::from_integer(1.into()),
        };
        let lead = self.coeffs[d].abs();
        // |lead| ≥ lower rational bound via its norm-free estimate
        let lead_lower = lower_abs_bound(&lead);
        let mut s = Rational::default();
        for c in &self.coeffs[..d] {
            s += c.abs_upper_bound();
        }
        Rational::from_integer(1.into()) + s / lead_lower
    }
}

/// Positive rational below `|x|` for nonzero `x`.
fn lower_abs_bound(x: &Scalar) -> Rational {
    use num_traits::Signed;
    if x.is_rational() {
        return x.rational.abs();
    }
    // |a + b√2| = |a² − 2b²| / |a − b√2|
    let n = x.norm().abs();
    let conj_upper = x.conjugate().abs_upper_bound();
    n / conj_upper
}

impl fmt::Debug for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fmt::Display::fmt(self, f)
    }
}

impl fmt::Display for Poly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.is_zero() {
            return write!(f, "0");
        }
        let mut first = true;
        for (k, c) in self.coeffs.iter().enumerate().rev() {
            if c.is_zero() {
                continue;
            }
            if !first {
                write!(f, " + ")?;
            }
            first = false;
            match k {
                0 => write!(f, "{}", c)?,
                1 => write!(f, "{}·h", c)?,
                _ => write!(f, "{}·h^{}", c, k)?,
            }
        }
        Ok(())
    }
}

impl<'a> Add<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn add(self, rhs: &'a Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            match (self.coeffs.get(k), rhs.coeffs.get(k)) {
                (Some(a), Some(b)) => out.push(a + b),
                (Some(a), None) => out.push(a.clone()),
                (None, Some(b)) => out.push(b.clone()),
                (None, None) => unreachable!(),
            }
        }
        Poly::new(out)
    }
}

impl<'a> Sub<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn sub(self, rhs: &'a Poly) -> Poly {
        let n = self.coeffs.len().max(rhs.coeffs.len());
        let mut out = Vec::with_capacity(n);
        for k in 0..n {
            match (self.coeffs.get(k), rhs.coeffs.get(k)) {
                (Some(a), Some(b)) => out.push(a - b),
                (Some(a), None) => out.push(a.clone()),
                (None, Some(b)) => out.push(-b.clone()),
                (None, None) => unreachable!(),
            }
        }
        Poly::new(out)
    }
}

/// Integer numerators of the rational and surd parts over one denominator.
fn integer_parts(p: &Poly) -> (Vec<BigInt>, Vec<BigInt>, BigInt, bool) {
    let mut den = BigInt::one();
    let mut has_surd = false;
    for c in &p.coeffs {
        den = den.lcm(c.rational.denom());
        if !c.surd.is_zero() {
            has_surd = true;
            den = den.lcm(c.surd.denom());
        }
    }
    let scale = |r: &Rational| r.numer() * (&den / r.denom());
    let rational = p.coeffs.iter().map(|c| scale(&c.rational)).collect();
    let surd = if has_surd { p.coeffs.iter().map(|c| scale(&c.surd)).collect() } else { Vec::new() };
    (rational, surd, den, has_surd)
}

fn convolve(a: &[BigInt], b: &[BigInt], out: &mut [BigInt], factor: i32) {
    for (i, x) in a.iter().enumerate() {
        if x.is_zero() {
            continue;
        }
        for (j, y) in b.iter().enumerate() {
            if y.is_zero() {
                continue;
            }
            let t = x * y;
            if factor == 1 {
                out[i + j] += t;
            } else {
                out[i + j] += t * factor;
            }
        }
    }
}

impl<'a> Mul<&'a Poly> for &'a Poly {
    type Output = Poly;
    fn mul(self, rhs: &'a Poly) -> Poly {
        if self.is_zero() || rhs.is_zero() {
            return Poly::zero();
        }
        let n = self.coeffs.len() + rhs.coeffs.len() - 1;
        let (ar, as_, ad, a_surd) = integer_parts(self);
        let (br, bs, bd, b_surd) = integer_parts(rhs);
        let mut rational = vec![BigInt::zero(); n];
        convolve(&ar, &br, &mut rational, 1);
        if a_surd && b_surd {
            convolve(&as_, &bs, &mut rational, 2);
        }
        let mut surd = vec![BigInt::zero(); n];
        if b_surd {
            convolve(&ar, &bs, &mut surd, 1);
        }
        if a_surd {
            convolve(&as_, &br, &mut surd, 1);
        }
        let den = ad * bd;
        let out = rational
            .into_iter()
            .zip(surd)
            .map(|(r, s)| Scalar::new(Rational::new(r, den.clone()), Rational::new(s, den.clone())))
            .collect();
        Poly::new(out)
    }
}

impl Add for Poly {
    type Output = Poly;
    fn add(self, rhs: Poly) -> Poly {
        &self + &rhs
    }
}

impl Sub for Poly {
    type Output = Poly;
    fn sub(self, rhs: Poly) -> Poly {
        &self - &rhs
    }
}

impl Mul for Poly {
    type Output = Poly;
    fn mul(self, rhs: Poly) -> Poly {
        &self * &rhs
    }
}

impl Neg for Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        Poly::new(self.coeffs.into_iter().map(|c| -c).collect())
    }
}

impl Neg for &Poly {
    type Output = Poly;
    fn neg(self) -> Poly {
        -self.clone()
    }
}
