//! Built instances stay in the differentiation class and keep their
//! structural features for every seed.

mod common;

use melnikov_core::algebraic::RadicalMonomial;
use melnikov_core::instances::{build, sample, FamilyId, FamilySpec, SampleConfig};
use melnikov_core::{Expression, Transcendental};
use proptest::prelude::*;

fn families() -> Vec<FamilySpec> {
    FamilyId::ALL
        .iter()
        .flat_map(|&id| (1..=8).filter_map(move |n| FamilySpec::new(id, n).ok()))
        .collect()
}

fn built(family: &FamilySpec, seed: u64) -> Expression {
    build(&sample(family, seed, &SampleConfig::default())).unwrap()
}

fn central(e: &Expression, h: f64, step: f64) -> f64 {
    (e.eval_f64(h + step) - e.eval_f64(h - step)) / (2.0 * step)
}

proptest! {
    #![proptest_config(ProptestConfig { cases: 24, failure_persistence: None, ..ProptestConfig::default() })]

    #[test]
    fn derivatives_stay_closed(seed in any::<u64>(), pick in any::<prop::sample::Index>()) {
        let all = families();
        let family = &all[pick.index(all.len())];
        let e = built(family, seed);
        let d = e.differentiate().normalize().unwrap();
        prop_assert_eq!(d.chart(), e.chart());
        let higher = e.differentiate_n(family.n + 2).normalize();
        prop_assert!(higher.is_ok());

        let mut rng = common::rng(seed);
        let h = common::interior_point(e.chart(), &mut rng);
        let step = 1e-5 * h.abs().max(1e-2);
        let fd = central(&e, h, step);
        let exact = d.eval_f64(h);
        let scale = exact.abs().max(e.eval_f64(h).abs() / h.abs().max(1.0)).max(1e-8);
        prop_assert!((fd - exact).abs() <= 1e-5 * scale, "{}: h={} fd={} exact={}", family.id, h, fd, exact);
    }
}

#[test]
fn whs_vanishes_at_the_loop_end() {
    for k in 1..=3u8 {
        for n in 2..=8 {
            let family = FamilySpec::new(FamilyId::Whs(k), n).unwrap();
            for seed in 0..5 {
                let e = built(&family, seed);
                let slope = e.differentiate().eval_f64(1.0 - 1e-6);
                let v = e.eval_f64(1.0 - 1e-6);
                assert!(v.abs() <= 1e-6 * (slope.abs() * 1.001 + 1.0), "WHs-{k} n={n} seed {seed}: M={v} slope={slope}");
            }
        }
    }
}

#[test]
fn whs_polynomial_part_degree() {
    for k in 1..=4u8 {
        for n in 2..=8 {
            let family = FamilySpec::new(FamilyId::Whs(k), n).unwrap();
            for seed in 0..5 {
                let e = built(&family, seed).normalize().unwrap();
                let one = e.part(Transcendental::One).expect("polynomial part");
                assert_eq!(one.terms().len(), 1, "no radicals on the WHs chart part");
                let r = one.term(RadicalMonomial(0)).unwrap();
                assert!(r.denominator_factors().is_empty(), "WHs-{k}: polynomial part has a denominator");
                let d = r.numerator().degree().unwrap_or(0);
                assert!(d <= n as usize + 2, "WHs-{k} n={n} seed {seed}: degree {d}");
            }
        }
    }
}
