//! Exact and numeric zero counts cross-checked on seeded random inputs.

mod common;

use melnikov_core::instances::{build, sample, FamilyId, FamilySpec, SampleConfig};
use melnikov_core::scalar::rat;
use melnikov_core::sturm::{count_with_multiplicity, count_zeros_mixed, isolate_roots};
use melnikov_core::zeros::{count_zeros_numeric, ZeroConfig, ZeroReport};
use melnikov_core::{Chart, Expression, Interval, Scalar};

/// The part of `(0, 1)` the numeric counter actually searches at the default ε.
fn searched() -> Interval {
    Interval::bounded(rat(1, 1_000_000), rat(999_999, 1_000_000))
}

fn numeric(e: &Expression) -> ZeroReport {
    count_zeros_numeric(e, None, &ZeroConfig::default()).unwrap()
}

#[test]
fn sturm_matches_numeric_on_polynomials() {
    let mut disagreements = Vec::new();
    for seed in 0..200 {
        let mut rng = common::rng(seed);
        let p = common::random_poly(&mut rng);
        let exact = count_with_multiplicity(&p, &searched()).unwrap();
        let report = numeric(&Expression::poly(Chart::UnitInterval, p.clone()));
        if report.count() != exact && report.flagged_count() == 0 {
            disagreements.push((seed, exact, report.count()));
        }
    }
    assert!(disagreements.is_empty(), "(seed, sturm, numeric): {:?}", disagreements);
}

#[test]
fn mixed_forms_match_numeric() {
    let mut disagreements = Vec::new();
    let mut with_zeros = 0;
    for seed in 0..200 {
        let mut rng = common::rng(1000 + seed);
        let (f, g) = common::random_mixed(&mut rng);
        let exact = count_zeros_mixed(&f, &searched()).unwrap();
        with_zeros += usize::from(exact > 0);
        let report = numeric(&common::mixed_expression(&f, g));
        if report.zeros.len() != exact && report.flagged_count() == 0 {
            disagreements.push((seed, exact, report.zeros.len()));
        }
    }
    assert!(disagreements.is_empty(), "(seed, exact, numeric): {:?}", disagreements);
    assert!(with_zeros >= 50, "only {with_zeros} forms had zeros");
}

#[test]
fn halving_tolerance_only_narrows_brackets() {
    for seed in 0..40 {
        let mut rng = common::rng(2000 + seed);
        let p = common::random_poly(&mut rng);
        let e = Expression::poly(Chart::UnitInterval, p.clone());
        let mut previous: Option<ZeroReport> = None;
        for k in 0..4 {
            let cfg = ZeroConfig { tol: 1e-6 / f64::powi(2.0, k), grid: 4000, ..ZeroConfig::default() };
            let r = count_zeros_numeric(&e, None, &cfg).unwrap();
            for z in r.zeros.iter().filter(|z| z.odd) {
                assert!(z.width() <= cfg.tol * 1.0001, "seed {seed}: width {} at tol {}", z.width(), cfg.tol);
            }
            if let Some(prev) = &previous {
                assert_eq!(prev.count(), r.count(), "seed {seed}");
                for (a, b) in prev.zeros.iter().zip(&r.zeros).filter(|(a, _)| a.odd) {
                    assert!(b.lo >= a.lo - 1e-15 && b.hi <= a.hi + 1e-15, "seed {seed}: bracket moved");
                }
            }
            previous = Some(r);
        }
    }
}

#[test]
fn numeric_brackets_contain_isolated_roots() {
    for seed in 0..40 {
        let mut rng = common::rng(3000 + seed);
        let p = common::random_poly(&mut rng);
        let roots = isolate_roots(&p.square_free_part(), &searched()).unwrap();
        let report = numeric(&Expression::poly(Chart::UnitInterval, p));
        for z in report.zeros.iter().filter(|z| z.odd) {
            let hit = roots.iter().any(|r| {
                let (lo, hi) = r.bounds();
                let (lo, hi) = (Scalar::from_rational(lo).to_f64(), Scalar::from_rational(hi).to_f64());
                lo <= z.hi + 1e-12 && z.lo <= hi + 1e-12
            });
            assert!(hit, "seed {seed}: bracket [{}, {}] holds no exact root", z.lo, z.hi);
        }
    }
}

#[test]
fn whs_counts_are_stable_as_eps_shrinks() {
    for k in 1..=4u8 {
        for n in [2, 3, 5] {
            let family = FamilySpec::new(FamilyId::Whs(k), n).unwrap();
            for seed in 0..10 {
                let e = build(&sample(&family, seed, &SampleConfig::default())).unwrap();
                let counts: Vec<usize> = [1e-4, 1e-6, 1e-8]
                    .iter()
                    .map(|&eps| count_zeros_numeric(&e, None, &ZeroConfig { eps, ..ZeroConfig::default() }).unwrap().count())
                    .collect();
                assert!(counts.windows(2).all(|w| w[0] == w[1]), "WHs-{k} n={n} seed {seed}: {counts:?}");
            }
        }
    }
}

