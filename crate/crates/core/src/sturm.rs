//! Exact real-root counting and isolation for polynomials over `Q(√2)`.

use alloc::vec::Vec;
use core::cmp::Ordering;

use num_traits::One;

use crate::chart::Interval;
use crate::error::{Error, Result};
use crate::poly::Poly;
use crate::scalar::{int, Rational};
#[cfg(test)]
use crate::scalar::Scalar;

/// Negated remainder sequence of `P` and `P′`, each term rescaled by a
/// positive constant.
#[derive(Clone, Debug)]
pub struct SturmChain {
    polys: Vec<Poly>,
}

impl SturmChain {
    pub fn new(p: &Poly) -> Result<Self> {
        if p.is_zero() {
            return Err(Error::IdenticallyZero);
        }
        let mut polys = alloc::vec![p.normalize_positive()];
        let d = p.derivative();
        if !d.is_zero() {
            polys.push(d.normalize_positive());
            loop {
                let n = polys.len();
                let (_, r) = polys[n - 2].div_rem(&polys[n - 1]);
                if r.is_zero() {
                    break;
                }
                polys.push((-&r).normalize_positive());
            }
        }
        Ok(SturmChain { polys })
    }

    pub fn polys(&self) -> &[Poly] {
        &self.polys
    }

    fn variations(signs: impl Iterator<Item = Ordering>) -> usize {
        let mut last = Ordering::Equal;
        let mut v = 0;
        for s in signs {
            if s == Ordering::Equal {
                continue;
            }
            if last != Ordering::Equal && s != last {
                v += 1;
            }
            last = s;
        }
        v
    }

    /// Sign variations at a finite point.
    pub fn variations_at(&self, x: &Rational) -> usize {
        Self::variations(self.polys.iter().map(|p| p.sign_at(x)))
    }

    /// Sign variations at `±∞`.
    pub fn variations_at_infinity(&self, positive: bool) -> usize {
        Self::variations(self.polys.iter().map(|p| p.sign_at_infinity(positive)))
    }

    fn variations_lo(&self, lo: &Option<Rational>) -> usize {
        match lo {
            Some(a) => self.variations_at(a),
            None => self.variations_at_infinity(false),
        }
    }

    fn variations_hi(&self, hi: &Option<Rational>) -> usize {
        match hi {
            Some(b) => self.variations_at(b),
            None => self.variations_at_infinity(true),
        }
    }

    /// Distinct roots in `(lo, hi]`, provided `lo` is not a root.
    fn count_half_open(&self, lo: &Option<Rational>, hi: &Option<Rational>) -> usize {
        self.variations_lo(lo).saturating_sub(self.variations_hi(hi))
    }
}

/// Divide out every factor `(h − a)` for a rational endpoint root `a`.
fn strip_root(p: &Poly, a: &Rational) -> Poly {
    let lin = Poly::from_rationals(&[-a.clone(), Rational::one()]);
    let mut q = p.clone();
    while !q.is_zero() && q.eval_rational(a).is_zero() {
        q = q.exact_div(&lin).expect("root divides");
    }
    q
}

/// Number of distinct real roots of `p` in the interval (endpoint flags honored).
pub fn sturm_count(p: &Poly, interval: &Interval) -> Result<usize> {
    if p.is_zero() {
        return Err(Error::IdenticallyZero);
    }
    let mut extra = 0;
    let mut q = p.clone();
    for (end, closed) in [(&interval.lo, interval.lo_closed), (&interval.hi, interval.hi_closed)] {
        if let Some(a) = end {
            if q.eval_rational(a).is_zero() {
                if closed {
                    extra += 1;
                }
                q = strip_root(&q, a);
            }
        }
    }
    if let (Some(a), Some(b)) = (&interval.lo, &interval.hi) {
        if a >= b {
            return Ok(extra.min(usize::from(a == b && interval.lo_closed && interval.hi_closed)));
        }
    }
    let chain = SturmChain::new(&q)?;
    Ok(chain.count_half_open(&interval.lo, &interval.hi) + extra)
}

/// A root located either exactly or inside an open rational interval
/// containing no other root.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IsolatedRoot {
    Exact(Rational),
    Bracket(Rational, Rational),
}

impl IsolatedRoot {
    pub fn bounds(&self) -> (Rational, Rational) {
        match self {
            IsolatedRoot::Exact(x) => (x.clone(), x.clone()),
            IsolatedRoot::Bracket(a, b) => (a.clone(), b.clone()),
        }
    }

    pub fn midpoint_f64(&self) -> f64 {
        let (a, b) = self.bounds();
        num_traits::ToPrimitive::to_f64(&((a + b) / int(2))).unwrap_or(f64::NAN)
    }

    pub fn width(&self) -> Rational {
        let (a, b) = self.bounds();
        b - a
    }
}

/// Finite rational bounds enclosing every root of `p` within the interval.
fn finite_bounds(p: &Poly, interval: &Interval) -> (Rational, Rational) {
    let rb = p.root_bound();
    let lo = interval.lo.clone().unwrap_or_else(|| -rb.clone());
    let hi = interval.hi.clone().unwrap_or(rb);
    (lo, hi)
}

/// Isolate the distinct roots of `p` in the open interval.
pub fn isolate_roots(p: &Poly, interval: &Interval) -> Result<Vec<IsolatedRoot>> {
    if p.is_zero() {
        return Err(Error::IdenticallyZero);
    }
    let mut q = p.clone();
    for a in [&interval.lo, &interval.hi].into_iter().flatten() {
        q = strip_root(&q, a);
    }
    let chain = SturmChain::new(&q)?;
    let (lo, hi) = finite_bounds(&q, interval);
    let mut out = Vec::new();
    let mut stack = alloc::vec![(lo, hi)];
    while let Some((a, b)) = stack.pop() {
        // roots in (a, b); neither endpoint is a root here
        let n = chain.variations_at(&a).saturating_sub(chain.variations_at(&b));
        match n {
            0 => {}
            1 => out.push(IsolatedRoot::Bracket(a, b)),
            _ => {
                let m = (&a + &b) / int(2);
                if q.eval_rational(&m).is_zero() {
                    out.push(IsolatedRoot::Exact(m.clone()));
                    let eps = (&b - &a) / int(1 << 20);
                    let mut l = &m - &eps;
                    let mut r = &m + &eps;
                    // shrink until the exact root is alone in (l, r)
                    loop {
                        let left = chain.variations_at(&l);
                        let right = chain.variations_at(&r);
                        if left.saturating_sub(right) == 1
                            && !q.eval_rational(&l).is_zero()
                            && !q.eval_rational(&r).is_zero()
                        {
                            break;
                        }
                        l = (&l + &m) / int(2);
                        r = (&r + &m) / int(2);
                    }
                    stack.push((a, l));
                    stack.push((r, b));
                } else {
                    stack.push((a, m.clone()));
                    stack.push((m, b));
                }
            }
        }
    }
    out.sort_by(|x, y| x.bounds().0.cmp(&y.bounds().0));
    Ok(out)
}

/// Shrink a bracket by bisection until its width is below `width`; `p` must
/// change sign across the bracket.
pub fn refine_root(p: &Poly, root: &IsolatedRoot, width: &Rational) -> IsolatedRoot {
    let (mut a, mut b) = match root {
        IsolatedRoot::Exact(_) => return root.clone(),
        IsolatedRoot::Bracket(a, b) => (a.clone(), b.clone()),
    };
    let sa = p.sign_at(&a);
    while &(&b - &a) > width {
        let m = (&a + &b) / int(2);
        let sm = p.sign_at(&m);
        if sm == Ordering::Equal {
            return IsolatedRoot::Exact(m);
        }
        if sm == sa {
            a = m;
        } else {
            b = m;
        }
    }
    IsolatedRoot::Bracket(a, b)
}

/// Bisect once more while keeping the root isolated; needs `p` square-free
/// on the bracket (a sign change across it).
fn bisect_once(p: &Poly, a: &Rational, b: &Rational) -> IsolatedRoot {
    let m = (a + b) / int(2);
    let sm = p.sign_at(&m);
    if sm == Ordering::Equal {
        IsolatedRoot::Exact(m)
    } else if sm == p.sign_at(a) {
        IsolatedRoot::Bracket(m, b.clone())
    } else {
        IsolatedRoot::Bracket(a.clone(), m)
    }
}

/// Mixed algebraic form `(A + B·√r)`, with `r > 0` on the working interval.
#[derive(Clone, Debug, PartialEq)]
pub struct MixedForm {
    pub a: Poly,
    pub b: Poly,
    pub r: Poly,
}

impl MixedForm {
    pub fn new(a: Poly, b: Poly, r: Poly) -> Self {
        MixedForm { a, b, r }
    }

    /// `A² − r·B²`, vanishing wherever the form vanishes.
    pub fn conjugate_product(&self) -> Poly {
        &(&self.a * &self.a) - &(&self.r * &(&self.b * &self.b))
    }

    /// Degree of the conjugate product when it is nonzero.
    pub fn degree_bound(&self) -> Result<usize> {
        let n = self.conjugate_product();
        n.degree().ok_or(Error::IdenticallyZero)
    }

    pub fn eval_f64(&self, h: f64) -> f64 {
        self.a.eval_f64(h) + self.b.eval_f64(h) * libm::sqrt(self.r.eval_f64(h))
    }
}

/// Whether the isolated root of `A² − rB²` is a zero of `A + B√r`.
///
/// Common roots of `A` and `B` are kept; otherwise the root is kept when
/// `A·B < 0` there, which is exactly the branch `A = −B√r`. `sqf` must be a
/// square-free polynomial having this root alone in the bracket.
fn mixed_root_is_zero(f: &MixedForm, g: &Poly, sqf: &Poly, root: IsolatedRoot) -> Result<bool> {
    let has_common = g.degree().unwrap_or(0) > 0;
    let mut root = root;
    loop {
        let (lo, hi) = root.bounds();
        if let IsolatedRoot::Exact(x) = &root {
            if has_common && g.eval_rational(x).is_zero() {
                return Ok(true);
            }
            let sa = f.a.sign_at(x);
            let sb = f.b.sign_at(x);
            // A(x) = 0 with B(x) ≠ 0 cannot be a root when r(x) > 0
            return Ok(sa != Ordering::Equal && sb != Ordering::Equal && sa != sb);
        }
        let span = Interval::bounded(lo.clone(), hi.clone());
        if has_common && sturm_count(g, &span)? > 0 {
            // the single root of `sqf` in the bracket is a common root
            return Ok(true);
        }
        if sturm_count(&f.a, &span)? == 0 && sturm_count(&f.b, &span)? == 0 {
            let mid = (&lo + &hi) / int(2);
            return Ok(f.a.sign_at(&mid) != f.b.sign_at(&mid));
        }
        root = bisect_once(sqf, &lo, &hi);
    }
}

/// Zeros of `A + B√r` in the open interval, each with an upper bound on its
/// multiplicity (its multiplicity as a root of `A² − rB²`, exact when `B = 0`).
pub fn mixed_zeros(f: &MixedForm, interval: &Interval) -> Result<Vec<(IsolatedRoot, u32)>> {
    let open = interval.interior();
    let (n, filtered) = if f.b.is_zero() {
        if f.a.is_zero() {
            return Err(Error::IdenticallyZero);
        }
        (f.a.clone(), false)
    } else {
        let n = f.conjugate_product();
        if n.is_zero() {
            return Err(Error::IdenticallyZero);
        }
        (n, true)
    };
    let g = f.a.gcd(&f.b);
    let mut out = Vec::new();
    for (part, mult) in n.square_free_decomposition() {
        if part.degree().unwrap_or(0) == 0 {
            continue;
        }
        for root in isolate_roots(&part, &open)? {
            if !filtered || mixed_root_is_zero(f, &g, &part, root.clone())? {
                out.push((root, mult));
            }
        }
    }
    out.sort_by(|x, y| x.0.bounds().0.cmp(&y.0.bounds().0));
    Ok(out)
}

/// Exact number of distinct zeros of `A + B√r` in the open interval.
pub fn count_zeros_mixed(f: &MixedForm, interval: &Interval) -> Result<usize> {
    Ok(mixed_zeros(f, interval)?.len())
}

/// Multiplicity of the rational point `x` as a root of `p`.
pub fn root_multiplicity(p: &Poly, x: &Rational) -> u32 {
    let lin = Poly::from_rationals(&[-x.clone(), Rational::one()]);
    let mut q = p.clone();
    let mut k = 0;
    while !q.is_zero() && q.eval_rational(x).is_zero() {
        q = q.exact_div(&lin).expect("root divides");
        k += 1;
    }
    k
}

/// Roots of `p` in the open interval, counted with multiplicity.
pub fn count_with_multiplicity(p: &Poly, interval: &Interval) -> Result<usize> {
    if p.is_zero() {
        return Err(Error::IdenticallyZero);
    }
    let open = interval.interior();
    let mut total = 0;
    for (part, mult) in p.square_free_decomposition() {
        if part.degree().unwrap_or(0) > 0 {
            total += sturm_count(&part, &open)? * mult as usize;
        }
    }
    Ok(total)
}

/// Sign of `p` at the rational point, as −1, 0, 1.
pub fn sign_at(p: &Poly, x: &Rational) -> i8 {
    match p.sign_at(x) {
        Ordering::Less => -1,
        Ordering::Equal => 0,
        Ordering::Greater => 1,
    }
}

/// Whether `p` has no root in the open interval and is nonzero there.
pub fn has_constant_sign(p: &Poly, interval: &Interval) -> Result<bool> {
    Ok(sturm_count(p, &interval.interior())? == 0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

    fn iv(a: i64, b: i64) -> Interval {
        Interval::bounded(int(a), int(b))
    }

    #[test]
    fn counts_simple_roots() {
        let p = Poly::from_ints(&[2, -3, 1]);
        assert_eq!(sturm_count(&p, &iv(0, 3)).unwrap(), 2);
        assert_eq!(sturm_count(&p, &iv(1, 2)).unwrap(), 0);
        assert_eq!(sturm_count(&p, &iv(1, 2).close_hi()).unwrap(), 1);
        let q = Poly::from_ints(&[1, 0, 1]);
        assert_eq!(sturm_count(&q, &iv(-10, 10)).unwrap(), 0);
    }

    #[test]
    fn repeated_roots_counted_once() {
        // (h − 1)²(h − 3)
        let p = &Poly::from_ints(&[1, -2, 1]) * &Poly::from_ints(&[-3, 1]);
        assert_eq!(sturm_count(&p, &iv(0, 5)).unwrap(), 2);
        let roots = isolate_roots(&p, &iv(0, 5)).unwrap();
        assert_eq!(roots.len(), 2);
    }

    #[test]
    fn unbounded_intervals() {
        let p = Poly::from_ints(&[-4, 0, 1]);
        let pos = Interval::new(Some(int(0)), None);
        let neg = Interval::new(None, Some(int(-1)));
        assert_eq!(sturm_count(&p, &pos).unwrap(), 1);
        assert_eq!(sturm_count(&p, &neg).unwrap(), 1);
        assert_eq!(sturm_count(&p, &Interval::new(None, None)).unwrap(), 2);
    }

    #[test]
    fn surd_coefficients() {
        // h² − 2 = (h − √2)(h + √2) written as h·h − 2, and h − √2
        let p = Poly::new(alloc::vec![-Scalar::sqrt2(), Scalar::one()]);
        assert_eq!(sturm_count(&p, &iv(1, 2)).unwrap(), 1);
        assert_eq!(sturm_count(&p, &iv(0, 1)).unwrap(), 0);
    }

    #[test]
    fn isolation_refines() {
        let p = Poly::from_ints(&[-2, 0, 1]);
        let roots = isolate_roots(&p, &iv(0, 4)).unwrap();
        assert_eq!(roots.len(), 1);
        let r = refine_root(&p, &roots[0], &rat(1, 1_000_000));
        assert!((r.midpoint_f64() - core::f64::consts::SQRT_2).abs() < 1e-6);
    }

    #[test]
    fn mixed_form_examples() {
        let h = Poly::h();
        let f = MixedForm::new(Poly::from_ints(&[1, -1]), Poly::zero(), h.clone());
        assert_eq!(count_zeros_mixed(&f, &iv(0, 2)).unwrap(), 1);
        let f = MixedForm::new(Poly::from_ints(&[-1]), Poly::from_ints(&[1]), h.clone());
        assert_eq!(count_zeros_mixed(&f, &iv(0, 4)).unwrap(), 1);
        assert_eq!(f.degree_bound().unwrap(), 1);
        let f = MixedForm::new(Poly::from_ints(&[-2, 1]), Poly::from_ints(&[1]), h.clone());
        assert_eq!(count_zeros_mixed(&f, &iv(0, 5)).unwrap(), 1);
        let f = MixedForm::new(Poly::from_ints(&[3]), Poly::zero(), h);
        assert_eq!(count_zeros_mixed(&f, &iv(0, 5)).unwrap(), 0);
    }

    #[test]
    fn zero_polynomial_is_flagged() {
        assert_eq!(sturm_count(&Poly::zero(), &iv(0, 1)), Err(Error::IdenticallyZero));
    }
}
