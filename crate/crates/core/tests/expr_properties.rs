mod common;

use melnikov_core::instances::log_power_derivative_coefficient;
use melnikov_core::scalar::Rational;
use melnikov_core::{evaluate, Chart, EvalPolicy, Expression, Poly, Scalar, Transcendental};
use num_bigint::BigInt;
use proptest::prelude::*;

fn value(e: &Expression, h: f64) -> (f64, f64) {
    let ev = evaluate(e, h, &EvalPolicy::default()).unwrap();
    (ev.value, ev.error_bound.max(ev.magnitude * 1e-12))
}

fn factorial(k: u32) -> BigInt {
    (1..=k).map(BigInt::from).product()
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 64, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn differentiation_is_linear(seed in any::<u64>(), chart in 0usize..3, a in -20i64..20, b in 1i64..20) {
        let chart = common::CHARTS[chart];
        let mut rng = common::rng(seed);
        let (e1, e2) = (common::expression(chart, &mut rng), common::expression(chart, &mut rng));
        let (sa, sb) = (Scalar::from_int(a), Scalar::from_ratio(1, b));
        let combined = e1.scale(&sa).add(&e2.scale(&sb)).unwrap().differentiate();
        let (d1, d2) = (e1.differentiate(), e2.differentiate());
        for _ in 0..50 {
            let h = common::interior_point(chart, &mut rng);
            let (l, el) = value(&combined, h);
            let (v1, e1b) = value(&d1, h);
            let (v2, e2b) = value(&d2, h);
            let r = a as f64 * v1 + v2 / b as f64;
            let slack = el + a.unsigned_abs() as f64 * e1b + e2b / b as f64;
            prop_assert!((l - r).abs() <= 4.0 * slack + 1e-12 * r.abs(), "h={h}: {l} vs {r}");
        }
    }

    #[test]
    fn derivative_matches_central_difference(seed in any::<u64>(), chart in 0usize..3) {
        let chart = common::CHARTS[chart];
        let mut rng = common::rng(seed);
        let e = common::expression(chart, &mut rng);
        let d = e.differentiate();
        for _ in 0..10 {
            let h = common::interior_point(chart, &mut rng);
            let step = 1e-5 * h.abs().max(1.0);
            let fd = (value(&e, h + step).0 - value(&e, h - step).0) / (2.0 * step);
            let ev = evaluate(&d, h, &EvalPolicy::default()).unwrap();
            // Relative to the derivative's own term magnitude, so that
            // cancelling sums are not held to an impossible standard.
            let scale = ev.value.abs().max(ev.magnitude * 1e-3);
            prop_assert!((fd - ev.value).abs() <= 1e-6 * scale, "h={h}: fd {fd} vs {}", ev.value);
        }
    }

    #[test]
    fn normalize_is_idempotent_and_value_preserving(seed in any::<u64>(), chart in 0usize..3) {
        let chart = common::CHARTS[chart];
        let mut rng = common::rng(seed);
        let e = common::expression(chart, &mut rng);
        let n = e.normalize().unwrap();
        prop_assert_eq!(&n.normalize().unwrap(), &n);
        for _ in 0..10 {
            let h = common::interior_point(chart, &mut rng);
            let ((a, ea), (b, eb)) = (value(&e, h), value(&n, h));
            prop_assert!((a - b).abs() <= 4.0 * (ea + eb));
        }
    }
}

#[test]
fn log_derivatives_have_closed_form() {
    for chart in [Chart::PosAxis, Chart::UnitInterval] {
        let ln = Expression::transcendental(chart, Transcendental::LnH).unwrap();
        for m in 1..=8u32 {
            let sign = if m % 2 == 1 { 1 } else { -1 };
            let c = Rational::from_integer(factorial(m - 1) * sign);
            let closed = Expression::poly(chart, Poly::one())
                .div_poly_pow(&Poly::h(), m)
                .scale(&Scalar::from_rational(c))
                .normalize()
                .unwrap();
            assert_eq!(ln.differentiate_n(m).normalize().unwrap(), closed, "m = {m}");
        }
    }
}

#[test]
fn log_power_derivatives_match_coefficients() {
    let chart = Chart::PosAxis;
    let ln = Expression::transcendental(chart, Transcendental::LnH).unwrap();
    for m in 2..=8u32 {
        for i in 1..m {
            let d = ln.mul_poly(&Poly::h().pow(i)).differentiate_n(m).normalize().unwrap();
            assert!(d.part(Transcendental::LnH).is_none(), "m={m} i={i}");
            // (h^i ln h)^(m) = (-1)^(m-i-1) i! (m-i-1)! / h^(m-i) for m > i.
            let sign = if (m - i - 1) % 2 == 0 { 1 } else { -1 };
            let b = factorial(i) * factorial(m - i - 1) * sign;
            assert_eq!(log_power_derivative_coefficient(m, i), b, "m={m} i={i}");
            let expected = Expression::poly(chart, Poly::one())
                .div_poly_pow(&Poly::h(), m - i)
                .scale(&Scalar::from_rational(Rational::from_integer(b)))
                .normalize()
                .unwrap();
            assert_eq!(d, expected, "m={m} i={i}");
        }
    }
    assert_eq!(log_power_derivative_coefficient(3, 1), BigInt::from(-1));
}
