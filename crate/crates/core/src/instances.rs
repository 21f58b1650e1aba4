//! Concrete Melnikov-function families, their coefficient slots, seeded
//! sampling, and the reduction strategies that bound their zeros.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_bigint::BigInt;
use num_traits::{One, Zero};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::algebraic::{AlgebraicElement, RadicalMonomial};
use crate::chart::{Chart, Interval};
use crate::error::{Error, Result};
use crate::expr::{Expression, Transcendental};
use crate::poly::Poly;
use crate::ratfunc::RatFunc;
use crate::reduction::{self, BoundCertificate, ClearingFactor, ReductionStage, TerminalRule};
use crate::scalar::{int, Rational, Scalar};

/// `[(n+1)/2]`, the number of logarithmic coefficients of the WHs families.
pub fn half_ceil(n: u32) -> u32 {
    (n + 1) / 2
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FamilyId {
    /// Piecewise Hamiltonian with homoclinic loop, cases 1 to 4.
    Whs(u8),
    Ruh2Pos,
    Ruh2Neg,
    Yruh2High,
    Yruh2Low,
}

impl FamilyId {
    pub const ALL: [FamilyId; 8] = [
        FamilyId::Whs(1),
        FamilyId::Whs(2),
        FamilyId::Whs(3),
        FamilyId::Whs(4),
        FamilyId::Ruh2Pos,
        FamilyId::Ruh2Neg,
        FamilyId::Yruh2High,
        FamilyId::Yruh2Low,
    ];

    pub fn name(self) -> String {
        match self {
            FamilyId::Whs(k) => alloc::format!("WHs-case-{}", k),
            FamilyId::Ruh2Pos => "ruh2-pos".into(),
            FamilyId::Ruh2Neg => "ruh2-neg".into(),
            FamilyId::Yruh2High => "yruh2-high".into(),
            FamilyId::Yruh2Low => "yruh2-low".into(),
        }
    }

    pub fn from_name(s: &str) -> Option<FamilyId> {
        FamilyId::ALL.into_iter().find(|f| f.name().eq_ignore_ascii_case(s))
    }

    pub fn chart(self) -> Chart {
        match self {
            FamilyId::Ruh2Pos => Chart::PosAxis,
            FamilyId::Ruh2Neg => Chart::NegBranch,
            _ => Chart::UnitInterval,
        }
    }

    pub fn admits(self, n: u32) -> bool {
        match self {
            FamilyId::Whs(k) => (1..=4).contains(&k) && n >= 2,
            FamilyId::Ruh2Pos | FamilyId::Ruh2Neg => n >= 1,
            FamilyId::Yruh2High => n >= 3,
            FamilyId::Yruh2Low => n == 1 || n == 2,
        }
    }

    /// Families covering a user-facing family name at degree `n`
    /// (`ruh2` expands to both branches, `yruh2` picks by degree).
    pub fn resolve(name: &str, n: u32) -> Option<Vec<FamilyId>> {
        match name.to_ascii_lowercase().as_str() {
            "ruh2" => Some(alloc::vec![FamilyId::Ruh2Pos, FamilyId::Ruh2Neg]),
            "yruh2" => Some(alloc::vec![if n >= 3 { FamilyId::Yruh2High } else { FamilyId::Yruh2Low }]),
            _ => FamilyId::from_name(name).map(|f| alloc::vec![f]),
        }
    }
}

impl fmt::Display for FamilyId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.name())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum SlotVariable {
    /// Coefficients of a polynomial in `h`.
    H,
    /// Coefficients of a polynomial in `√h`.
    SqrtH,
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct Slot {
    pub name: String,
    pub max_degree: usize,
    pub variable: SlotVariable,
}

impl Slot {
    fn h(name: impl Into<String>, max_degree: usize) -> Self {
        Slot { name: name.into(), max_degree, variable: SlotVariable::H }
    }

    fn sqrt_h(name: impl Into<String>, max_degree: usize) -> Self {
        Slot { name: name.into(), max_degree, variable: SlotVariable::SqrtH }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct FamilySpec {
    pub id: FamilyId,
    pub n: u32,
    pub slots: Vec<Slot>,
    /// Named structural constants of the blocks (`a_i`, `c_i`, ...).
    pub constants: Vec<String>,
}

impl FamilySpec {
    pub fn new(id: FamilyId, n: u32) -> Result<Self> {
        if !id.admits(n) {
            return Err(Error::InvalidSpec(alloc::format!("{} is not defined for n = {}", id, n)));
        }
        let nu = n as usize;
        let q = half_ceil(n) as usize;
        let mut slots = Vec::new();
        let mut constants = Vec::new();
        match id {
            FamilyId::Whs(k) => {
                let top = if k == 4 { nu } else { nu + 1 };
                slots.extend((0..=top).map(|i| Slot::h(alloc::format!("u{}", i), 0)));
                slots.extend((1..=nu).map(|i| Slot::h(alloc::format!("v{}", i), 0)));
                slots.extend((1..=q).map(|i| Slot::h(alloc::format!("r{}", i), 0)));
            }
            FamilyId::Ruh2Pos => {
                let (da, db, dg, dd) = if n >= 3 { (nu - 2, nu - 2, nu - 1, 2) } else { (0, 1, 1, 1) };
                for i in 1..=2 {
                    slots.push(Slot::h(alloc::format!("alpha{}", i), da));
                    slots.push(Slot::h(alloc::format!("beta{}", i), db));
                    slots.push(Slot::h(alloc::format!("gamma{}", i), dg));
                    slots.push(Slot::h(alloc::format!("delta{}", i), dd));
                }
                slots.push(Slot::sqrt_h("P", 2 * nu - 1));
                constants.extend(["a1", "a2", "c1", "c2"].map(String::from));
            }
            FamilyId::Ruh2Neg => {
                let (da, db, dg, dd) = if n >= 3 { (nu - 1, nu - 1, nu - 3, 2) } else { (2, 1, 1, 1) };
                slots.push(Slot::h("alpha3", da));
                slots.push(Slot::h("beta3", db));
                slots.push(Slot::h("gamma3", dg));
                slots.push(Slot::h("delta3", dd));
                // Constant Melnikov term (the period contribution at the
                // isochronous center); absent from the four blocks above.
                slots.push(Slot::h("kappa3", 0));
                constants.push("c3".into());
            }
            FamilyId::Yruh2High | FamilyId::Yruh2Low => {
                let (dad, dbg, dp) = if n >= 3 { (nu - 2, nu - 1, 3 * nu - 3) } else { (1, 2, 5) };
                for i in 1..=2 {
                    slots.push(Slot::h(alloc::format!("alpha{}", i), dad));
                    slots.push(Slot::h(alloc::format!("beta{}", i), dbg));
                    slots.push(Slot::h(alloc::format!("gamma{}", i), dbg));
                    slots.push(Slot::h(alloc::format!("delta{}", i), dad));
                }
                slots.push(Slot::sqrt_h("P", dp));
                constants.extend(["atilde1", "atilde2", "btilde1", "btilde2"].map(String::from));
            }
        }
        Ok(FamilySpec { id, n, slots, constants })
    }

    pub fn chart(&self) -> Chart {
        self.id.chart()
    }

    pub fn slot(&self, name: &str) -> Option<&Slot> {
        self.slots.iter().find(|s| s.name == name)
    }

    /// Number of free scalar coefficients.
    pub fn dimension(&self) -> usize {
        self.slots.iter().map(|s| s.max_degree + 1).sum()
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct InstanceSpec {
    pub family: FamilySpec,
    /// Slot → ascending coefficient list; missing slots are zero.
    pub coefficients: BTreeMap<String, Vec<Rational>>,
    /// Structural constants; missing ones are zero.
    pub constants: BTreeMap<String, Rational>,
    pub seed: Option<u64>,
    /// Set by sampling when every coefficient came out zero.
    pub degenerate: bool,
}

impl InstanceSpec {
    pub fn new(family: FamilySpec) -> Self {
        InstanceSpec {
            family,
            coefficients: BTreeMap::new(),
            constants: BTreeMap::new(),
            seed: None,
            degenerate: false,
        }
    }

    pub fn with(mut self, slot: &str, coeffs: &[Rational]) -> Self {
        self.coefficients.insert(slot.into(), coeffs.to_vec());
        self
    }

    pub fn with_constant(mut self, name: &str, value: Rational) -> Self {
        self.constants.insert(name.into(), value);
        self
    }

    pub fn validate(&self) -> Result<()> {
        for (name, coeffs) in &self.coefficients {
            let slot = self
                .family
                .slot(name)
                .ok_or_else(|| Error::InvalidSpec(alloc::format!("{} has no slot {}", self.family.id, name)))?;
            let used = coeffs.iter().rposition(|c| !c.is_zero()).map_or(0, |k| k + 1);
            if used > slot.max_degree + 1 {
                return Err(Error::InvalidSpec(alloc::format!(
                    "slot {} has degree {} above its limit {}",
                    name,
                    used - 1,
                    slot.max_degree
                )));
            }
        }
        for name in self.constants.keys() {
            if !self.family.constants.contains(name) {
                return Err(Error::InvalidSpec(alloc::format!("{} has no constant {}", self.family.id, name)));
            }
        }
        Ok(())
    }

    fn constant(&self, name: &str) -> Rational {
        self.constants.get(name).cloned().unwrap_or_else(Rational::zero)
    }

    pub fn is_zero(&self) -> bool {
        self.coefficients.values().flatten().all(Zero::is_zero)
    }
}

/// One additive part of a block: `constant · expression`, or a bare
/// expression when the constant is `None`.
struct Piece {
    constant: Option<String>,
    expr: Expression,
}

fn piece(constant: Option<&str>, expr: Expression) -> Piece {
    Piece { constant: constant.map(String::from), expr }
}

fn poly_expr(chart: Chart, coeffs: &[i64]) -> Expression {
    Expression::poly(chart, Poly::from_ints(coeffs))
}

/// `p(h) · Π √generators` for the radical monomial with the given bits.
fn radical_expr(chart: Chart, bits: u8, p: Poly) -> Expression {
    Expression::algebraic(AlgebraicElement::from_term(chart, RadicalMonomial(bits), RatFunc::from_poly(p)))
}

fn transcendental_expr(chart: Chart, t: Transcendental, p: Poly) -> Expression {
    Expression::term(t, AlgebraicElement::from_poly(chart, p)).expect("admissible by construction")
}

/// Basis function `h^k` of a slot in `h`, or `(√h)^k` in `√h`.
fn slot_monomial(chart: Chart, variable: SlotVariable, k: usize) -> Expression {
    match variable {
        SlotVariable::H => Expression::poly(chart, Poly::monomial(Scalar::one(), k)),
        SlotVariable::SqrtH => {
            let p = Poly::monomial(Scalar::one(), k / 2);
            if k % 2 == 0 {
                Expression::poly(chart, p)
            } else {
                radical_expr(chart, 0b1, p)
            }
        }
    }
}

fn pieces(family: &FamilySpec, slot: &str) -> Vec<Piece> {
    let chart = family.chart();
    let sqrt2 = Scalar::sqrt2();
    let index = slot.chars().last().and_then(|c| c.to_digit(10)).unwrap_or(0);
    // b_1 = 1, b_2 = −1 and the same signs for c̃_i
    let sign = Scalar::from_int(if index == 2 { -1 } else { 1 });
    let h = || Poly::h();
    let h2h = || Poly::from_ints(&[0, 1, 1]);
    match family.id {
        FamilyId::Whs(k) => {
            let base = match slot.as_bytes()[0] {
                b'u' => {
                    let i: u32 = slot[1..].parse().expect("slot index");
                    return alloc::vec![piece(None, poly_expr(chart, &[1, -1]).mul_poly(&Poly::from_ints(&[1, -1]).pow(i)))];
                }
                b'v' => Expression::poly(chart, Poly::one()),
                _ => transcendental_expr(chart, Transcendental::LnH, Poly::one()),
            };
            let i: usize = slot[1..].parse().expect("slot index");
            let mut e = base.mul_poly(&Poly::monomial(Scalar::one(), i));
            if k != 4 {
                e = e.mul_poly(&Poly::from_ints(&[1, -1]));
            }
            alloc::vec![piece(None, e)]
        }
        FamilyId::Ruh2Pos => {
            let a = alloc::format!("a{}", index);
            let c = alloc::format!("c{}", index);
            let b_sqrt2 = &sign * &sqrt2;
            let arctan = |p: Poly| transcendental_expr(chart, Transcendental::ArcTanSqrtH, p);
            match &slot[..slot.len() - 1] {
                "alpha" => alloc::vec![
                    piece(Some(&a), Expression::poly(chart, h2h())),
                    piece(
                        None,
                        radical_expr(chart, 0b01, h()).add(&arctan(h2h())).unwrap().scale(&-b_sqrt2),
                    ),
                ],
                "beta" => alloc::vec![
                    piece(Some(&c), radical_expr(chart, 0b11, Poly::one())),
                    piece(None, Expression::poly(chart, h()).scale(&(&sign * &Scalar::from_int(-2)))),
                ],
                "gamma" => alloc::vec![
                    piece(Some(&a), Expression::poly(chart, h())),
                    piece(
                        None,
                        arctan(Poly::from_ints(&[1, 1]))
                            .sub(&radical_expr(chart, 0b01, Poly::one()))
                            .unwrap()
                            .scale(&-b_sqrt2),
                    ),
                ],
                "delta" => alloc::vec![piece(
                    Some(&c),
                    transcendental_expr(chart, Transcendental::LnConic, Poly::one()).scale(&Scalar::from_ratio(1, 2)),
                )],
                _ => alloc::vec![piece(None, Expression::poly(chart, Poly::one()))],
            }
        }
        FamilyId::Ruh2Neg => match slot {
            "alpha3" => alloc::vec![piece(None, radical_expr(chart, 0b1, Poly::from_ints(&[-4])))],
            "beta3" => alloc::vec![piece(Some("c3"), Expression::poly(chart, h()))],
            "gamma3" => alloc::vec![piece(Some("c3"), Expression::poly(chart, h2h()))],
            "kappa3" => alloc::vec![piece(None, poly_expr(chart, &[1, 2]))],
            _ => alloc::vec![piece(
                None,
                radical_expr(chart, 0b1, Poly::from_ints(&[4]))
                    .add(&transcendental_expr(chart, Transcendental::LnConic, Poly::from_ints(&[-2, -4])))
                    .unwrap(),
            )],
        },
        FamilyId::Yruh2High | FamilyId::Yruh2Low => {
            let at = alloc::format!("atilde{}", index);
            let bt = alloc::format!("btilde{}", index);
            let one_minus = || Poly::from_ints(&[1, -1]);
            match &slot[..slot.len() - 1] {
                "alpha" => alloc::vec![piece(Some(&at), Expression::poly(chart, h()))],
                "beta" => alloc::vec![piece(Some(&bt), radical_expr(chart, 0b01, Poly::one()))],
                "gamma" => alloc::vec![
                    piece(
                        Some(&at),
                        poly_expr(chart, &[2]).add(&radical_expr(chart, 0b10, Poly::from_ints(&[-2]))).unwrap(),
                    ),
                    piece(
                        None,
                        radical_expr(chart, 0b01, Poly::one())
                            .sub(&Expression::term(
                                Transcendental::ArcSinSqrtH,
                                AlgebraicElement::radical(chart, 1),
                            )
                            .unwrap())
                            .unwrap()
                            .scale(&(&sign * &sqrt2)),
                    ),
                ],
                "delta" => alloc::vec![
                    piece(
                        Some(&bt),
                        radical_expr(chart, 0b01, Poly::from_ints(&[2]))
                            .sub(&transcendental_expr(chart, Transcendental::LnHalfAngle, one_minus()))
                            .unwrap(),
                    ),
                    piece(
                        None,
                        transcendental_expr(chart, Transcendental::LnOneMinusH, one_minus())
                            .add(&Expression::poly(chart, h()))
                            .unwrap()
                            .scale(&sign),
                    ),
                ],
                _ => alloc::vec![piece(None, Expression::poly(chart, Poly::one()))],
            }
        }
    }
}

/// Polynomial prefactor `D` such that `M = (Σ slots·blocks) / D`.
pub fn prefactor(family: &FamilySpec) -> Option<(Poly, u32)> {
    match family.id {
        FamilyId::Ruh2Neg => Some((Poly::from_ints(&[1, 2]), 1)),
        FamilyId::Yruh2High if family.n > 2 => Some((Poly::from_ints(&[-1, 1]), family.n - 2)),
        FamilyId::Yruh2Low => Some((Poly::from_ints(&[-1, 1]), 1)),
        _ => None,
    }
}

fn apply_prefactor(family: &FamilySpec, e: Expression) -> Expression {
    match prefactor(family) {
        Some((d, k)) if k > 0 => e.div_poly_pow(&d, k),
        _ => e,
    }
}

/// The Melnikov function of an instance, on its family's chart.
pub fn build(spec: &InstanceSpec) -> Result<Expression> {
    spec.validate()?;
    let family = &spec.family;
    let chart = family.chart();
    let mut total = Expression::zero(chart);
    for slot in &family.slots {
        let Some(coeffs) = spec.coefficients.get(&slot.name) else { continue };
        if coeffs.iter().all(Zero::is_zero) {
            continue;
        }
        let mut block = Expression::zero(chart);
        for p in pieces(family, &slot.name) {
            let factor = match &p.constant {
                Some(name) => spec.constant(name),
                None => Rational::one(),
            };
            if !factor.is_zero() {
                block = block.add(&p.expr.scale(&Scalar::from_rational(factor)))?;
            }
        }
        for (k, c) in coeffs.iter().enumerate() {
            if c.is_zero() {
                continue;
            }
            let term = slot_monomial(chart, slot.variable, k).mul(&block)?;
            total = total.add(&term.scale(&Scalar::from_rational(c.clone())))?;
        }
    }
    apply_prefactor(family, total).normalize()
}

#[derive(Clone, Debug, PartialEq)]
pub struct BasisElement {
    pub label: String,
    pub expr: Expression,
}

/// Functions whose span contains every instance of the family, for every
/// value of the structural constants.
pub fn basis(family: &FamilySpec) -> Result<Vec<BasisElement>> {
    let chart = family.chart();
    let mut out = Vec::new();
    for slot in &family.slots {
        for (j, p) in pieces(family, &slot.name).into_iter().enumerate() {
            for k in 0..=slot.max_degree {
                let e = apply_prefactor(family, slot_monomial(chart, slot.variable, k).mul(&p.expr)?).normalize()?;
                let label = match &p.constant {
                    Some(c) => alloc::format!("{}[{}]·{}", slot.name, k, c),
                    None if j > 0 => alloc::format!("{}[{}]·rest", slot.name, k),
                    None => alloc::format!("{}[{}]", slot.name, k),
                };
                out.push(BasisElement { label, expr: e });
            }
        }
    }
    Ok(out)
}

/// Coefficients `A_i` with `Σ_{i≤q} r_i h^i (1−h) ln h = Σ_{i≤q+1} A_i h^i ln h`.
pub fn log_recombination(r: &[Rational]) -> Vec<Rational> {
    let q = r.len();
    let mut a = alloc::vec![Rational::zero(); q + 1];
    for i in 0..q {
        a[i] += &r[i];
        a[i + 1] -= &r[i];
    }
    a
}

/// `B_{m,i}` with `(h^i ln h)^{(m)} = B_{m,i} / h^{m−i}` for `m ≥ i+1`.
pub fn log_power_derivative_coefficient(m: u32, i: u32) -> BigInt {
    let mut total = BigInt::zero();
    for j in 0..=i.min(m) {
        let binom = binomial(m, j);
        let falling: BigInt = (0..j).map(|s| BigInt::from(i - s)).product();
        let k = m - j;
        if k == 0 {
            continue;
        }
        let fact: BigInt = (1..k).map(BigInt::from).product();
        let sign = if (k - 1) % 2 == 0 { BigInt::one() } else { -BigInt::one() };
        total += binom * falling * fact * sign;
    }
    total
}

fn binomial(n: u32, k: u32) -> BigInt {
    let mut b = BigInt::one();
    for s in 0..k {
        b = b * BigInt::from(n - s) / BigInt::from(s + 1);
    }
    b
}

/// Distribution of sampled rational coefficients `p/q` with
/// `|p| ≤ numerator_bound`, `1 ≤ q ≤ denominator_bound`.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct SampleConfig {
    pub numerator_bound: i64,
    pub denominator_bound: i64,
}

impl Default for SampleConfig {
    fn default() -> Self {
        SampleConfig { numerator_bound: 20, denominator_bound: 10 }
    }
}

fn draw(rng: &mut ChaCha8Rng, cfg: &SampleConfig) -> Rational {
    let p = if cfg.numerator_bound > 0 { rng.gen_range(-cfg.numerator_bound..=cfg.numerator_bound) } else { 0 };
    let q = rng.gen_range(1..=cfg.denominator_bound.max(1));
    Rational::new(BigInt::from(p), BigInt::from(q))
}

/// Deterministic random instance: every slot filled to its maximal degree.
pub fn sample(family: &FamilySpec, seed: u64, cfg: &SampleConfig) -> InstanceSpec {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut spec = InstanceSpec::new(family.clone());
    for slot in &family.slots {
        let coeffs: Vec<Rational> = (0..=slot.max_degree).map(|_| draw(&mut rng, cfg)).collect();
        spec.coefficients.insert(slot.name.clone(), coeffs);
    }
    for c in &family.constants {
        let v = draw(&mut rng, cfg);
        spec.constants.insert(c.clone(), v);
    }
    spec.seed = Some(seed);
    spec.degenerate = spec.is_zero();
    spec
}

/// Built-in reduction strategy of a family.
#[derive(Clone, Debug, PartialEq)]
pub struct Strategy {
    pub stages: Vec<ReductionStage>,
    /// Endpoints where every instance vanishes.
    pub forced_zeros: Vec<Rational>,
}

impl Strategy {
    /// Interval the stages work on (possibly closed at a forced zero).
    pub fn working_interval(&self) -> &Interval {
        &self.stages[0].interval
    }
}

/// Interval on which zeros are counted for the family.
pub fn target_interval(family: &FamilySpec) -> Interval {
    family.chart().interval()
}

pub fn strategy(family: &FamilySpec) -> Strategy {
    let n = family.n;
    let q = half_ceil(n);
    let chart_iv = family.chart().interval();
    match family.id {
        FamilyId::Whs(k) if k != 4 => Strategy {
            stages: alloc::vec![ReductionStage::derivative(q + 2, chart_iv.close_hi())],
            forced_zeros: alloc::vec![int(1)],
        },
        FamilyId::Whs(_) => Strategy { stages: alloc::vec![ReductionStage::derivative(q + 1, chart_iv)], forced_zeros: Vec::new() },
        FamilyId::Ruh2Pos => {
            let m = if n >= 3 { n + 1 } else { 3 };
            Strategy { stages: alloc::vec![ReductionStage::derivative(m, chart_iv)], forced_zeros: Vec::new() }
        }
        FamilyId::Ruh2Neg => {
            let m = if n >= 3 { n + 1 } else { 4 };
            Strategy {
                stages: alloc::vec![ReductionStage::derivative(m, chart_iv)
                    .with_premultiplier(ClearingFactor::poly(Poly::from_ints(&[1, 2])))],
                forced_zeros: Vec::new(),
            }
        }
        FamilyId::Yruh2High | FamilyId::Yruh2Low => {
            let (first, m, t) = if family.id == FamilyId::Yruh2High {
                let m = n + (n - 1) / 2;
                (ClearingFactor::power(Poly::from_ints(&[-1, 1]), 2 * (i64::from(n) - 2)), m, n + m - 1)
            } else {
                (ClearingFactor::poly(Poly::from_ints(&[-1, 1])), 3, 5)
            };
            let second = ClearingFactor::power(Poly::from_ints(&[1, -1]), 2 * i64::from(m) - 1)
                .times(Poly::h(), 2 * (i64::from(m) - 1));
            Strategy {
                stages: alloc::vec![
                    ReductionStage::derivative(m, chart_iv.clone()).with_premultiplier(first),
                    ReductionStage::derivative(t, chart_iv).with_premultiplier(second),
                ],
                forced_zeros: Vec::new(),
            }
        }
    }
}

/// Certificate valid for every instance of the family.
pub fn certify_family(family: &FamilySpec) -> Result<BoundCertificate> {
    let basis: Vec<Expression> = basis(family)?.into_iter().map(|b| b.expr).collect();
    let s = strategy(family);
    reduction::certify_span(&basis, &s.stages, TerminalRule::DegreeBound, &s.forced_zeros)
}

/// Certificate for one instance; `ExactCount` gives a sharper terminal.
pub fn certify_instance(spec: &InstanceSpec, rule: TerminalRule) -> Result<BoundCertificate> {
    let m = build(spec)?;
    let s = strategy(&spec.family);
    reduction::certify(&m, &s.stages, rule, &s.forced_zeros)
}

/// Bound stated for the family in closed form, for cross-checking.
pub fn expected_bound(family: &FamilySpec) -> usize {
    let n = family.n as usize;
    let q = half_ceil(family.n) as usize;
    match family.id {
        FamilyId::Whs(4) => n + 1 + q,
        FamilyId::Whs(_) => n + 2 + q,
        FamilyId::Ruh2Pos if n >= 3 => 5 * n + 1,
        FamilyId::Ruh2Pos => 11,
        FamilyId::Ruh2Neg if n >= 3 => 3 * n + 1,
        FamilyId::Ruh2Neg => 10,
        FamilyId::Yruh2High if n % 2 == 0 => 15 * n - 13,
        FamilyId::Yruh2High => 15 * n - 11,
        FamilyId::Yruh2Low => 28,
    }
}

impl fmt::Display for InstanceSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} n={}", self.family.id, self.family.n)?;
        if let Some(s) = self.seed {
            write!(f, " seed={}", s)?;
        }
        Ok(())
    }
}

impl Slot {
    pub fn describe(&self) -> String {
        match self.variable {
            SlotVariable::H => alloc::format!("{}: deg ≤ {} in h", self.name, self.max_degree),
            SlotVariable::SqrtH => alloc::format!("{}: deg ≤ {} in √h", self.name, self.max_degree),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::rat;

fn sum(chart: Chart, items: impl IntoIterator<Item = Expression>) -> Expression {
    items.into_iter().fold(Expression::zero(chart), |acc, e| acc.add(&e).expect("same chart"))
}

    fn fam(id: FamilyId, n: u32) -> FamilySpec {
        FamilySpec::new(id, n).unwrap()
    }

    #[test]
    fn single_slot_examples() {
        let e = build(&InstanceSpec::new(fam(FamilyId::Whs(4), 2)).with("v1", &[int(1)])).unwrap();
        assert_eq!(e, Expression::poly(Chart::UnitInterval, Poly::h()));

        let e = build(&InstanceSpec::new(fam(FamilyId::Whs(1), 2)).with("r1", &[int(1)])).unwrap();
        let want = transcendental_expr(Chart::UnitInterval, Transcendental::LnH, Poly::from_ints(&[0, 1, -1]));
        assert_eq!(e, want);
    }

    #[test]
    fn ruh2_alpha_block() {
        let spec = InstanceSpec::new(fam(FamilyId::Ruh2Pos, 3)).with("alpha1", &[int(1)]).with_constant("a1", rat(3, 2));
        let e = build(&spec).unwrap();
        for h in [0.1f64, 1.0, 7.5] {
            let want = 1.5 * (h * h + h) - 2f64.sqrt() * h.powf(1.5) - 2f64.sqrt() * (h * h + h) * h.sqrt().atan();
            assert!((e.eval_f64(h) - want).abs() < 1e-12 * want.abs().max(1.0));
        }
    }

    #[test]
    fn degree_constraints_match_tables() {
        let pos = fam(FamilyId::Ruh2Pos, 5);
        assert_eq!(pos.slot("alpha1").unwrap().max_degree, 3);
        assert_eq!(pos.slot("gamma2").unwrap().max_degree, 4);
        assert_eq!(pos.slot("delta1").unwrap().max_degree, 2);
        assert_eq!(pos.slot("P").unwrap().max_degree, 9);
        let neg = fam(FamilyId::Ruh2Neg, 5);
        assert_eq!(neg.slot("gamma3").unwrap().max_degree, 2);
        assert_eq!(fam(FamilyId::Ruh2Neg, 2).slot("alpha3").unwrap().max_degree, 2);
        assert_eq!(fam(FamilyId::Ruh2Pos, 1).slot("alpha2").unwrap().max_degree, 0);
        let y = fam(FamilyId::Yruh2High, 4);
        assert_eq!(y.slot("delta1").unwrap().max_degree, 2);
        assert_eq!(y.slot("P").unwrap().max_degree, 9);
        assert!(FamilySpec::new(FamilyId::Yruh2High, 2).is_err());
    }

    #[test]
    fn rejects_degree_violation() {
        let spec = InstanceSpec::new(fam(FamilyId::Ruh2Neg, 3)).with("gamma3", &[int(1), int(1)]);
        assert!(matches!(build(&spec), Err(Error::InvalidSpec(_))));
        let spec = InstanceSpec::new(fam(FamilyId::Whs(1), 2)).with("w1", &[int(1)]);
        assert!(build(&spec).is_err());
    }

    #[test]
    fn sampling_is_deterministic() {
        let f = fam(FamilyId::Whs(1), 3);
        assert_eq!(sample(&f, 0, &SampleConfig::default()), sample(&f, 0, &SampleConfig::default()));
        assert_ne!(sample(&f, 0, &SampleConfig::default()), sample(&f, 1, &SampleConfig::default()));
        let zero = sample(&f, 5, &SampleConfig { numerator_bound: 0, denominator_bound: 3 });
        assert!(zero.degenerate);
        assert!(build(&zero).unwrap().is_zero());
    }

    #[test]
    fn recombination_matches_expansion() {
        let r = [rat(2, 3), int(-1), int(5)];
        let a = log_recombination(&r);
        let c = Chart::UnitInterval;
        let direct = sum(
            c,
            r.iter().enumerate().map(|(i, ri)| {
                transcendental_expr(c, Transcendental::LnH, Poly::monomial(Scalar::one(), i + 1) * Poly::from_ints(&[1, -1]))
                    .scale(&Scalar::from_rational(ri.clone()))
            }),
        );
        let recombined = sum(
            c,
            a.iter().enumerate().map(|(i, ai)| {
                transcendental_expr(c, Transcendental::LnH, Poly::monomial(Scalar::from_rational(ai.clone()), i + 1))
            }),
        );
        assert_eq!(direct, recombined);
        assert_eq!(a[0], r[0]);
        assert_eq!(a[3], -r[2].clone());
    }

    #[test]
    fn log_power_coefficients() {
        assert_eq!(log_power_derivative_coefficient(3, 1), BigInt::from(-1));
        let c = Chart::UnitInterval;
        for m in 2..=8u32 {
            for i in 1..m {
                let e = transcendental_expr(c, Transcendental::LnH, Poly::monomial(Scalar::one(), i as usize));
                let d = e.differentiate_n(m).normalize().unwrap();
                let b = Rational::from_integer(log_power_derivative_coefficient(m, i));
                let want = Expression::poly(c, Poly::constant(Scalar::from_rational(b)))
                    .div_poly_pow(&Poly::h(), m - i)
                    .normalize()
                    .unwrap();
                assert_eq!(d, want, "m={} i={}", m, i);
            }
        }
    }

    #[test]
    fn whs_forced_zero_at_one() {
        for k in 1..=3 {
            let spec = sample(&fam(FamilyId::Whs(k), 4), 11, &SampleConfig::default());
            let e = build(&spec).unwrap();
            assert!(e.eval_f64(1.0 - 1e-6).abs() < 1e-3);
            assert_eq!(reduction::exact_value_at(&e, &int(1)), Some(Scalar::zero()));
        }
    }

    #[test]
    fn instances_lie_in_basis_span() {
        let f = fam(FamilyId::Yruh2Low, 2);
        let spec = sample(&f, 3, &SampleConfig::default());
        let e = build(&spec).unwrap();
        assert!(e.differentiate_n(3).normalize().is_ok());
        assert!(!basis(&f).unwrap().is_empty());
    }
}
