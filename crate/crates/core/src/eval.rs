//! Certified numeric evaluation with a precision ladder.
//!
//! Values are carried together with a running absolute error bound. The
//! double-precision rung works on a precompiled copy of the expression; when
//! the result is small compared with the sum of term magnitudes, evaluation
//! is repeated with 128-bit and then 256-bit software floats.

use alloc::vec::Vec;
use core::cell::{OnceCell, RefCell};

use astro_float::{BigFloat, Consts, RoundingMode, Sign};
use num_bigint::BigInt;
use num_traits::{Signed, Zero};

use crate::chart::Chart;
use crate::error::{Error, Result};
use crate::expr::{Expression, Transcendental};
use crate::algebraic::RadicalMonomial;
use crate::scalar::{Rational, Scalar};

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord)]
pub enum Rung {
    Double,
    Bits128,
    Bits256,
}

impl Rung {
    fn bits(self) -> usize {
        match self {
            Rung::Double => 53,
            Rung::Bits128 => 128,
            Rung::Bits256 => 256,
        }
    }

    fn next(self) -> Option<Rung> {
        match self {
            Rung::Double => Some(Rung::Bits128),
            Rung::Bits128 => Some(Rung::Bits256),
            Rung::Bits256 => None,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EvalPolicy {
    /// Escalate when `|value| < guard · Σ|term|`.
    pub guard: f64,
    pub max_rung: Rung,
    /// Fail with `PrecisionExhausted` if the sign is still undetermined at
    /// the top rung.
    pub require_sign: bool,
}

impl Default for EvalPolicy {
    fn default() -> Self {
        EvalPolicy { guard: 1e-3, max_rung: Rung::Bits256, require_sign: false }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Evaluation {
    pub value: f64,
    pub error_bound: f64,
    /// Sum of absolute values of all monomial contributions.
    pub magnitude: f64,
    pub rung: Rung,
}

impl Evaluation {
    /// Sign if it is certain under the error bound.
    pub fn certain_sign(&self) -> Option<i8> {
        if self.value.abs() > self.error_bound {
            Some(if self.value > 0.0 { 1 } else { -1 })
        } else {
            None
        }
    }
}

/// Arithmetic backend; errors are tracked outside as f64 absolute bounds.
trait Backend {
    type V: Clone;
    /// Unit roundoff.
    fn unit(&self) -> f64;
    fn lit(&mut self, x: f64) -> Self::V;
    fn add(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn sub(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn mul(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn div(&mut self, a: &Self::V, b: &Self::V) -> Self::V;
    fn neg(&mut self, a: &Self::V) -> Self::V;
    fn sqrt(&mut self, a: &Self::V) -> Self::V;
    fn ln(&mut self, a: &Self::V) -> Self::V;
    fn atan(&mut self, a: &Self::V) -> Self::V;
    fn asin(&mut self, a: &Self::V) -> Self::V;
    fn atanh(&mut self, a: &Self::V) -> Self::V;
    fn to_f64(&self, a: &Self::V) -> f64;
}

#[derive(Clone)]
struct A<V> {
    v: V,
    e: f64,
}

struct F64Backend;

impl Backend for F64Backend {
    type V = f64;
    fn unit(&self) -> f64 {
        f64::EPSILON / 2.0
    }
    fn lit(&mut self, x: f64) -> f64 {
        x
    }
    fn add(&mut self, a: &f64, b: &f64) -> f64 {
        a + b
    }
    fn sub(&mut self, a: &f64, b: &f64) -> f64 {
        a - b
    }
    fn mul(&mut self, a: &f64, b: &f64) -> f64 {
        a * b
    }
    fn div(&mut self, a: &f64, b: &f64) -> f64 {
        a / b
    }
    fn neg(&mut self, a: &f64) -> f64 {
        -a
    }
    fn sqrt(&mut self, a: &f64) -> f64 {
        libm::sqrt(*a)
    }
    fn ln(&mut self, a: &f64) -> f64 {
        libm::log(*a)
    }
    fn atan(&mut self, a: &f64) -> f64 {
        libm::atan(*a)
    }
    fn asin(&mut self, a: &f64) -> f64 {
        libm::asin(*a)
    }
    fn atanh(&mut self, a: &f64) -> f64 {
        libm::atanh(*a)
    }
    fn to_f64(&self, a: &f64) -> f64 {
        *a
    }
}

struct BigBackend {
    p: usize,
    cc: Consts,
}

const RM: RoundingMode = RoundingMode::ToEven;

impl BigBackend {
    fn new(bits: usize) -> Self {
        BigBackend { p: bits, cc: Consts::new().expect("constants cache") }
    }

    fn from_bigint(&self, n: &BigInt) -> BigFloat {
        let p = self.p + 64;
        let two64 = BigFloat::from_u64(1 << 32, p).mul(&BigFloat::from_u64(1 << 32, p), p, RM);
        let (sign, digits) = n.to_u64_digits();
        let mut acc = BigFloat::from_u64(0, p);
        for d in digits.iter().rev() {
            acc = acc.mul(&two64, p, RM).add(&BigFloat::from_u64(*d, p), p, RM);
        }
        if sign == num_bigint::Sign::Minus {
            acc = acc.neg();
        }
        acc
    }

    fn from_rational(&self, r: &Rational) -> BigFloat {
        let n = self.from_bigint(r.numer());
        let d = self.from_bigint(r.denom());
        n.div(&d, self.p + 32, RM)
    }

    fn from_scalar(&mut self, s: &Scalar) -> A<BigFloat> {
        let a = self.from_rational(&s.rational);
        let unit = self.unit();
        if s.surd.is_zero() {
            let mag = big_to_f64(&a).abs();
            return A { v: a, e: unit * mag };
        }
        let b = self.from_rational(&s.surd);
        let two = BigFloat::from_u64(2, self.p);
        let r2 = two.sqrt(self.p + 32, RM);
        let bs = b.mul(&r2, self.p + 32, RM);
        let v = a.add(&bs, self.p, RM);
        let mag = big_to_f64(&a).abs() + big_to_f64(&bs).abs();
        A { v, e: 2.0 * unit * mag }
    }
}

fn big_to_f64(x: &BigFloat) -> f64 {
    match x.as_raw_parts() {
        None => f64::NAN,
        Some((words, _, sign, exp, _)) => {
            if x.is_zero() {
                return 0.0;
            }
            let top = *words.last().unwrap_or(&0) as f64;
            let next = if words.len() > 1 { words[words.len() - 2] as f64 } else { 0.0 };
            let m = top + next / 18446744073709551616.0;
            let v = m * libm::exp2(f64::from(exp) - 64.0);
            if sign == Sign::Neg {
                -v
            } else {
                v
            }
        }
    }
}

impl Backend for BigBackend {
    type V = BigFloat;
    fn unit(&self) -> f64 {
        libm::exp2(-(self.p as f64) + 1.0)
    }
    fn lit(&mut self, x: f64) -> BigFloat {
        BigFloat::from_f64(x, self.p)
    }
    fn add(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.add(b, self.p, RM)
    }
    fn sub(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.sub(b, self.p, RM)
    }
    fn mul(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.mul(b, self.p, RM)
    }
    fn div(&mut self, a: &BigFloat, b: &BigFloat) -> BigFloat {
        a.div(b, self.p, RM)
    }
    fn neg(&mut self, a: &BigFloat) -> BigFloat {
        a.neg()
    }
    fn sqrt(&mut self, a: &BigFloat) -> BigFloat {
        a.sqrt(self.p, RM)
    }
    fn ln(&mut self, a: &BigFloat) -> BigFloat {
        a.ln(self.p, RM, &mut self.cc)
    }
    fn atan(&mut self, a: &BigFloat) -> BigFloat {
        a.atan(self.p, RM, &mut self.cc)
    }
    fn asin(&mut self, a: &BigFloat) -> BigFloat {
        a.asin(self.p, RM, &mut self.cc)
    }
    fn atanh(&mut self, a: &BigFloat) -> BigFloat {
        a.atanh(self.p, RM, &mut self.cc)
    }
    fn to_f64(&self, a: &BigFloat) -> f64 {
        big_to_f64(a)
    }
}

/// Running-error arithmetic on top of a backend.
struct Ops<'b, B: Backend> {
    b: &'b mut B,
}

impl<B: Backend> Ops<'_, B> {
    fn mag(&self, x: &A<B::V>) -> f64 {
        self.b.to_f64(&x.v).abs()
    }
    fn exact(&mut self, x: f64) -> A<B::V> {
        A { v: self.b.lit(x), e: 0.0 }
    }
    fn add(&mut self, x: &A<B::V>, y: &A<B::V>) -> A<B::V> {
        let v = self.b.add(&x.v, &y.v);
        let e = x.e + y.e + self.b.unit() * self.b.to_f64(&v).abs();
        A { v, e }
    }
    fn sub(&mut self, x: &A<B::V>, y: &A<B::V>) -> A<B::V> {
        let v = self.b.sub(&x.v, &y.v);
        let e = x.e + y.e + self.b.unit() * self.b.to_f64(&v).abs();
        A { v, e }
    }
    fn mul(&mut self, x: &A<B::V>, y: &A<B::V>) -> A<B::V> {
        let v = self.b.mul(&x.v, &y.v);
        let (mx, my) = (self.mag(x), self.mag(y));
        let e = mx * y.e + my * x.e + x.e * y.e + self.b.unit() * self.b.to_f64(&v).abs();
        A { v, e }
    }
    fn div(&mut self, x: &A<B::V>, y: &A<B::V>) -> A<B::V> {
        let v = self.b.div(&x.v, &y.v);
        let my = self.mag(y);
        let mv = self.b.to_f64(&v).abs();
        let e = if my > y.e {
            (x.e + mv * y.e) / (my - y.e) + self.b.unit() * mv
        } else {
            f64::INFINITY
        };
        A { v, e }
    }
    fn sqrt(&mut self, x: &A<B::V>) -> A<B::V> {
        let v = self.b.sqrt(&x.v);
        let mx = self.b.to_f64(&x.v);
        let mv = self.b.to_f64(&v).abs();
        let lo = libm::sqrt((mx - x.e).max(0.0));
        let denom = mv + lo;
        let e = if x.e == 0.0 { 0.0 } else if denom > 0.0 { x.e / denom } else { libm::sqrt(x.e) };
        A { v, e: e + self.b.unit() * mv }
    }
    fn ln(&mut self, x: &A<B::V>) -> A<B::V> {
        let v = self.b.ln(&x.v);
        let mx = self.b.to_f64(&x.v);
        let e = if mx > x.e { x.e / (mx - x.e) } else { f64::INFINITY };
        let mv = self.b.to_f64(&v).abs();
        A { v, e: e + 2.0 * self.b.unit() * (mv + 1.0) }
    }
    fn atan(&mut self, x: &A<B::V>) -> A<B::V> {
        let v = self.b.atan(&x.v);
        let mv = self.b.to_f64(&v).abs();
        A { v, e: x.e + 2.0 * self.b.unit() * mv }
    }
    fn asin(&mut self, x: &A<B::V>) -> A<B::V> {
        let v = self.b.asin(&x.v);
        let mx = self.mag(x) + x.e;
        let e = if x.e == 0.0 {
            0.0
        } else if mx < 1.0 {
            x.e / libm::sqrt(1.0 - mx * mx)
        } else {
            core::f64::consts::FRAC_PI_2 * libm::sqrt(2.0 * x.e)
        };
        let mv = self.b.to_f64(&v).abs();
        A { v, e: e + 2.0 * self.b.unit() * mv }
    }
    fn atanh(&mut self, x: &A<B::V>) -> A<B::V> {
        let v = self.b.atanh(&x.v);
        let mx = self.mag(x) + x.e;
        let e = if x.e == 0.0 {
            0.0
        } else if mx < 1.0 {
            x.e / (1.0 - mx * mx)
        } else {
            f64::INFINITY
        };
        let mv = self.b.to_f64(&v).abs();
        A { v, e: e + 2.0 * self.b.unit() * mv }
    }
}

/// Polynomial with backend coefficients and their conversion errors.
#[derive(Clone)]
struct CPoly<V> {
    coeffs: Vec<A<V>>,
    abs: Vec<f64>,
}

impl<V> CPoly<V> {
    /// `Σ |a_k|·|h|^k`, the scale against which cancellation is judged.
    fn abs_eval(&self, h: f64) -> f64 {
        let x = h.abs();
        self.abs.iter().rev().fold(0.0, |acc, c| acc * x + c)
    }
}

#[derive(Clone)]
struct CTerm<V> {
    radical: RadicalMonomial,
    num: CPoly<V>,
    den: Vec<(CPoly<V>, u32)>,
}

#[derive(Clone)]
struct Compiled<V> {
    chart: Chart,
    parts: Vec<(Transcendental, Vec<CTerm<V>>)>,
}

fn compile<B: Backend>(
    e: &Expression,
    conv: &mut dyn FnMut(&Scalar) -> A<B::V>,
) -> Compiled<B::V> {
    let cpoly = |p: &crate::poly::Poly, conv: &mut dyn FnMut(&Scalar) -> A<B::V>| CPoly {
        coeffs: p.coeffs().iter().map(|c| conv(c)).collect(),
        abs: p.coeffs().iter().map(|c| c.to_f64().abs()).collect(),
    };
    let parts = e
        .parts()
        .iter()
        .map(|(t, a)| {
            let terms = a
                .terms()
                .iter()
                .map(|(rad, r)| CTerm {
                    radical: *rad,
                    num: cpoly(r.numerator(), conv),
                    den: r
                        .denominator_factors()
                        .iter()
                        .map(|(f, k)| (cpoly(f, conv), *k))
                        .collect(),
                })
                .collect();
            (*t, terms)
        })
        .collect();
    Compiled { chart: e.chart(), parts }
}

fn horner<B: Backend>(ops: &mut Ops<'_, B>, p: &CPoly<B::V>, h: &A<B::V>) -> A<B::V> {
    let mut acc = ops.exact(0.0);
    for c in p.coeffs.iter().rev() {
        let t = ops.mul(&acc, h);
        acc = ops.add(&t, c);
    }
    acc
}

fn generator_value<B: Backend>(ops: &mut Ops<'_, B>, chart: Chart, g: usize, h: &A<B::V>) -> A<B::V> {
    let one = ops.exact(1.0);
    match (chart, g) {
        (Chart::PosAxis, 0) | (Chart::UnitInterval, 0) => h.clone(),
        (Chart::PosAxis, _) => ops.add(&one, h),
        (Chart::UnitInterval, _) => ops.sub(&one, h),
        (Chart::NegBranch, _) => {
            let hh = ops.mul(h, h);
            ops.add(&hh, h)
        }
    }
}

fn transcendental_value<B: Backend>(
    ops: &mut Ops<'_, B>,
    chart: Chart,
    t: Transcendental,
    h: &A<B::V>,
) -> A<B::V> {
    match t {
        Transcendental::One => ops.exact(1.0),
        Transcendental::LnH => ops.ln(h),
        Transcendental::LnOneMinusH => {
            let one = ops.exact(1.0);
            let x = ops.sub(&one, h);
            ops.ln(&x)
        }
        Transcendental::ArcTanSqrtH => {
            let s = ops.sqrt(h);
            ops.atan(&s)
        }
        Transcendental::ArcSinSqrtH => {
            let s = ops.sqrt(h);
            ops.asin(&s)
        }
        Transcendental::LnHalfAngle => {
            let s = ops.sqrt(h);
            let a = ops.atanh(&s);
            let two = ops.exact(2.0);
            ops.mul(&two, &a)
        }
        Transcendental::LnConic => {
            let one = ops.exact(1.0);
            let two = ops.exact(2.0);
            let hh = ops.mul(h, h);
            let q = ops.add(&hh, h);
            let s = ops.sqrt(&q);
            let s2 = ops.mul(&two, &s);
            let h2 = ops.mul(&two, h);
            let lin = ops.add(&h2, &one);
            if chart == Chart::NegBranch {
                // −ln(|2h+1| + 2√(h²+h))
                let abs_lin = A { v: ops.b.neg(&lin.v), e: lin.e };
                let arg = ops.add(&abs_lin, &s2);
                let l = ops.ln(&arg);
                A { v: ops.b.neg(&l.v), e: l.e }
            } else {
                let arg = ops.add(&s2, &lin);
                ops.ln(&arg)
            }
        }
    }
}

fn run<B: Backend>(b: &mut B, c: &Compiled<B::V>, h: f64) -> (f64, f64, f64) {
    let mut ops = Ops { b };
    let hv = ops.exact(h);
    let mut total = ops.exact(0.0);
    let mut magnitude = 0.0;
    let ngen = c.chart.generator_count();
    let mut roots: Vec<A<B::V>> = Vec::with_capacity(ngen);
    for g in 0..ngen {
        let r = generator_value(&mut ops, c.chart, g, &hv);
        roots.push(ops.sqrt(&r));
    }
    for (t, terms) in &c.parts {
        let tv = transcendental_value(&mut ops, c.chart, *t, &hv);
        for term in terms {
            let mut val = horner(&mut ops, &term.num, &hv);
            let mut scale = term.num.abs_eval(h);
            for (f, k) in &term.den {
                let fv = horner(&mut ops, f, &hv);
                let mut pw = fv.clone();
                for _ in 1..*k {
                    pw = ops.mul(&pw, &fv);
                }
                val = ops.div(&val, &pw);
                scale /= ops.mag(&pw);
            }
            for g in term.radical.generators() {
                val = ops.mul(&val, &roots[g]);
                scale *= ops.mag(&roots[g]);
            }
            val = ops.mul(&val, &tv);
            scale *= ops.mag(&tv);
            magnitude += scale;
            total = ops.add(&total, &val);
        }
    }
    let v = ops.b.to_f64(&total.v);
    // final rounding to f64
    let e = total.e + f64::EPSILON * v.abs();
    (v, e, magnitude)
}

/// Big-float program for one rung, built on first use.
struct BigProgram {
    backend: RefCell<BigBackend>,
    compiled: Compiled<BigFloat>,
}

impl BigProgram {
    fn new(e: &Expression, rung: Rung) -> Self {
        let mut b = BigBackend::new(rung.bits());
        let compiled = {
            let mut conv = |s: &Scalar| b.from_scalar(s);
            compile::<BigBackend>(e, &mut conv)
        };
        BigProgram { backend: RefCell::new(b), compiled }
    }

    fn eval(&self, h: f64, rung: Rung) -> Evaluation {
        let (value, error_bound, magnitude) = run(&mut *self.backend.borrow_mut(), &self.compiled, h);
        Evaluation { value, error_bound, magnitude, rung }
    }
}

/// Evaluator with coefficients converted once per precision rung.
pub struct CompiledExpression {
    source: Expression,
    compiled: Compiled<f64>,
    big: [OnceCell<BigProgram>; 2],
}

impl Clone for CompiledExpression {
    fn clone(&self) -> Self {
        CompiledExpression { source: self.source.clone(), compiled: self.compiled.clone(), big: Default::default() }
    }
}

impl CompiledExpression {
    pub fn new(e: &Expression) -> Self {
        let unit = f64::EPSILON / 2.0;
        let mut conv = |s: &Scalar| {
            let v = s.to_f64();
            let e = if s.is_rational() { unit * v.abs() } else { 4.0 * unit * s.abs_upper_bound_f64() };
            A { v, e }
        };
        CompiledExpression { source: e.clone(), compiled: compile::<F64Backend>(e, &mut conv), big: Default::default() }
    }

    pub fn expression(&self) -> &Expression {
        &self.source
    }

    pub fn chart(&self) -> Chart {
        self.compiled.chart
    }

    /// Double-precision rung only.
    pub fn eval_double(&self, h: f64) -> Evaluation {
        let (value, error_bound, magnitude) = run(&mut F64Backend, &self.compiled, h);
        Evaluation { value, error_bound, magnitude, rung: Rung::Double }
    }

    /// Fast uncertified value.
    pub fn value(&self, h: f64) -> f64 {
        self.eval_double(h).value
    }

    pub fn evaluate(&self, h: f64, policy: &EvalPolicy) -> Result<Evaluation> {
        let chart = self.compiled.chart;
        if !chart.contains(h) {
            return Err(Error::OutsideChart { h, chart });
        }
        let mut ev = self.eval_double(h);
        let mut rung = Rung::Double;
        while needs_escalation(&ev, policy) && rung < policy.max_rung {
            rung = rung.next().expect("below max");
            let slot = if rung == Rung::Bits128 { 0 } else { 1 };
            ev = self.big[slot].get_or_init(|| BigProgram::new(&self.source, rung)).eval(h, rung);
        }
        if policy.require_sign && ev.certain_sign().is_none() {
            return Err(Error::PrecisionExhausted { h, value: ev.value, bound: ev.error_bound });
        }
        Ok(ev)
    }
}

fn needs_escalation(ev: &Evaluation, policy: &EvalPolicy) -> bool {
    !ev.value.is_finite() || ev.value.abs() < policy.guard * ev.magnitude || ev.error_bound >= ev.value.abs()
}

/// Evaluate with the escalating precision ladder.
pub fn evaluate(e: &Expression, h: f64, policy: &EvalPolicy) -> Result<Evaluation> {
    CompiledExpression::new(e).evaluate(h, policy)
}

impl Scalar {
    pub(crate) fn abs_upper_bound_f64(&self) -> f64 {
        use num_traits::ToPrimitive;
        self.rational.abs().to_f64().unwrap_or(f64::INFINITY)
            + self.surd.abs().to_f64().unwrap_or(f64::INFINITY) * core::f64::consts::SQRT_2
    }
}
