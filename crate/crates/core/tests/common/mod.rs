//! Seeded generators shared by the integration tests.
#![allow(dead_code)]

use melnikov_core::algebraic::{AlgebraicElement, RadicalMonomial};
use melnikov_core::scalar::{int, rat, Rational};
use melnikov_core::sturm::MixedForm;
use melnikov_core::{Chart, Expression, Poly, RatFunc, Scalar, Transcendental};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const CHARTS: [Chart; 3] = [Chart::PosAxis, Chart::NegBranch, Chart::UnitInterval];

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rational(rng: &mut ChaCha8Rng) -> Rational {
    rat(rng.gen_range(-9..=9), rng.gen_range(1..=5))
}

pub fn scalar(rng: &mut ChaCha8Rng) -> Scalar {
    let surd = if rng.gen_bool(0.2) { rational(rng) } else { rat(0, 1) };
    let s = Scalar::new(rational(rng), surd);
    if s.is_zero() { Scalar::one() } else { s }
}

pub fn poly(rng: &mut ChaCha8Rng, max_degree: usize) -> Poly {
    let d = rng.gen_range(0..=max_degree);
    Poly::new((0..=d).map(|_| scalar(rng)).collect())
}

/// A factor with no zeros on the chart's closed working region.
fn safe_factor(chart: Chart, rng: &mut ChaCha8Rng) -> Poly {
    let gens = chart.generators();
    if rng.gen_bool(0.7) {
        gens[rng.gen_range(0..gens.len())].clone()
    } else {
        match chart {
            Chart::PosAxis => Poly::from_ints(&[2, 1]),
            Chart::NegBranch => Poly::from_ints(&[-1, 1]),
            Chart::UnitInterval => Poly::from_ints(&[1, 1]),
        }
    }
}

pub fn algebraic(chart: Chart, rng: &mut ChaCha8Rng) -> AlgebraicElement {
    let terms = rng.gen_range(1..=2);
    let monomials = 1u8 << chart.generator_count();
    let parts: Vec<(RadicalMonomial, RatFunc)> = (0..terms)
        .map(|_| {
            let e = RadicalMonomial(rng.gen_range(0..monomials));
            let den = if rng.gen_bool(0.5) { vec![(safe_factor(chart, rng), rng.gen_range(1..=2))] } else { vec![] };
            (e, RatFunc::from_factored(poly(rng, 3), den))
        })
        .collect();
    AlgebraicElement::from_terms(chart, parts).expect("monomials fit the chart")
}

/// Random nonzero expression in the closed differentiation class.
pub fn expression(chart: Chart, rng: &mut ChaCha8Rng) -> Expression {
    loop {
        let tags: Vec<Transcendental> =
            Transcendental::ALL.iter().copied().filter(|t| t.admissible_on(chart)).collect();
        let parts: Vec<(Transcendental, AlgebraicElement)> = (0..rng.gen_range(1..=3))
            .map(|_| (tags[rng.gen_range(0..tags.len())], algebraic(chart, rng)))
            .collect();
        let e = Expression::from_parts(chart, parts).expect("admissible tags");
        if !e.is_zero() {
            return e;
        }
    }
}

/// Interior point bounded away from the chart's endpoints.
pub fn interior_point(chart: Chart, rng: &mut ChaCha8Rng) -> f64 {
    match chart {
        Chart::PosAxis => 0.05 * (400.0f64).powf(rng.gen::<f64>()),
        Chart::NegBranch => -1.05 * (20.0f64).powf(rng.gen::<f64>()),
        Chart::UnitInterval => rng.gen_range(0.05..0.95),
    }
}

/// `G = Π (h − r_i)^{k_i}` with distinct roots `r_i = j/7` in `(0, 1)`.
pub fn divisor(rng: &mut impl Rng) -> (Poly, usize) {
    let mut roots: Vec<i64> = (1..7).collect();
    let mut g = Poly::from_ints(&[rng.gen_range(1..5)]);
    let mut p = 0;
    for _ in 0..rng.gen_range(0..=3) {
        let j = roots.remove(rng.gen_range(0..roots.len()));
        let k = rng.gen_range(1..=2);
        let factor = Poly::new(vec![Scalar::from_ratio(-j, 7), Scalar::one()]);
        g = &g * &factor.pow(k);
        p += k as usize;
    }
    (g, p)
}

pub fn linear(root: Rational) -> Poly {
    Poly::from_rationals(&[-root, int(1)])
}

/// Either dense random coefficients or a product of planted roots in (0, 1),
/// sometimes repeated, times a random cofactor. Degree at most 12.
pub fn random_poly(rng: &mut ChaCha8Rng) -> Poly {
    if rng.gen_bool(0.5) {
        loop {
            let p = poly(rng, 12);
            if p.degree().unwrap_or(0) > 0 {
                return p;
            }
        }
    }
    let mut p = Poly::from_rationals(&[int(1)]);
    let mut roots: Vec<i64> = Vec::new();
    for _ in 0..rng.gen_range(1..=5) {
        let k = rng.gen_range(1..50);
        if roots.contains(&k) {
            continue;
        }
        roots.push(k);
        let f = linear(rat(k, 50));
        p = &p * &f;
        if rng.gen_bool(0.2) {
            p = &p * &f;
        }
    }
    let room = 12 - p.degree().unwrap();
    let cofactor = poly(rng, room.min(3));
    if cofactor.is_zero() { p } else { &p * &cofactor }
}

pub fn mixed_expression(f: &MixedForm, g: usize) -> Expression {
    let chart = Chart::UnitInterval;
    let el = AlgebraicElement::from_terms(
        chart,
        vec![
            (RadicalMonomial(0), RatFunc::from_poly(f.a.clone())),
            (RadicalMonomial::single(g), RatFunc::from_poly(f.b.clone())),
        ],
    )
    .unwrap();
    Expression::algebraic(el)
}

/// `A + B√r` on `(0, 1)` with `r ∈ {h, 1 − h}`; half of the forms get a
/// planted zero at a point where `r` is a rational square.
pub fn random_mixed(rng: &mut ChaCha8Rng) -> (MixedForm, usize) {
    let g = rng.gen_range(0..2);
    let r = Chart::UnitInterval.generators()[g].clone();
    loop {
        let b = poly(rng, 6);
        let mut a = poly(rng, 6);
        if rng.gen_bool(0.5) && !b.is_zero() {
            // r(h0) = t², so A(h0) = −B(h0)·t makes h0 a zero
            let t = rat(rng.gen_range(1..10), 10);
            let h0 = if g == 0 { &t * &t } else { int(1) - &t * &t };
            let shift = &a.eval_rational(&h0) + &(&b.eval_rational(&h0) * &Scalar::from_rational(t));
            a = &a - &Poly::new(vec![shift]);
        }
        let f = MixedForm::new(a, b, r.clone());
        if !f.conjugate_product().is_zero() && !(f.a.is_zero() && f.b.is_zero()) {
            return (f, g);
        }
    }
}
