//! Staged derivative reductions and auditable zero-count bounds.
//!
//! A stage replaces `M` by `F̃ = (M·W / G)^{(m)} · G^{m+1}`. Zeros of `M` on
//! the working interval then satisfy `λ ≤ μ + m·p + m`, where `μ` counts the
//! zeros of `F̃` and `p` those of `G`, all with multiplicity. Chaining stages
//! and back-substituting gives the final bound; the last output must be free
//! of transcendental parts so that `μ` can be bounded by conjugate products.

use alloc::collections::BTreeMap;
use alloc::string::String;
use alloc::vec::Vec;
use core::fmt;

use num_traits::{One, Signed, Zero};

use crate::algebraic::{AlgebraicElement, RadicalMonomial};
use crate::chart::{Chart, Interval};
use crate::error::{Error, Result};
use crate::expr::{Expression, Transcendental};
use crate::poly::Poly;
use crate::ratfunc::{common_denominator, RatFunc};
use crate::scalar::{Rational, Scalar};
use crate::sturm::{self, MixedForm};

/// `Π f_i^{k_i/2}` with signed half-integer exponents.
#[derive(Clone, Debug, PartialEq, Eq, Hash, Default)]
pub struct ClearingFactor {
    /// `(f, k)` stands for `f^{k/2}`.
    factors: Vec<(Poly, i64)>,
}

impl ClearingFactor {
    pub fn one() -> Self {
        ClearingFactor::default()
    }

    /// `p^{halves/2}`.
    pub fn power(p: Poly, halves: i64) -> Self {
        ClearingFactor::one().times(p, halves)
    }

    pub fn poly(p: Poly) -> Self {
        ClearingFactor::power(p, 2)
    }

    pub fn times(mut self, p: Poly, halves: i64) -> Self {
        if halves == 0 || p.is_one() {
            return self;
        }
        match self.factors.iter_mut().find(|(f, _)| *f == p) {
            Some((_, k)) => *k += halves,
            None => self.factors.push((p, halves)),
        }
        self.factors.retain(|(_, k)| *k != 0);
        self
    }

    pub fn factors(&self) -> &[(Poly, i64)] {
        &self.factors
    }

    pub fn is_one(&self) -> bool {
        self.factors.is_empty()
    }

    pub fn pow(&self, k: u32) -> Self {
        ClearingFactor {
            factors: self.factors.iter().map(|(f, e)| (f.clone(), e * i64::from(k))).collect(),
        }
    }

    pub fn inverse(&self) -> Self {
        ClearingFactor { factors: self.factors.iter().map(|(f, e)| (f.clone(), -e)).collect() }
    }

    /// Multiply an expression by this factor.
    pub fn apply(&self, e: &Expression) -> Result<Expression> {
        let chart = e.chart();
        let gens = chart.generators();
        let mut out = e.clone();
        for (f, halves) in &self.factors {
            if f.is_constant() {
                if halves % 2 != 0 {
                    return Err(Error::InvalidStage(alloc::format!("half power of constant {}", f)));
                }
                let c = f.coeff(0).pow(halves.unsigned_abs() as u32 / 2);
                let c = if *halves < 0 { c.inverse().ok_or(Error::InvalidStage("zero constant".into()))? } else { c };
                out = out.scale(&c);
            } else if let Some(g) = gens.iter().position(|r| r == f) {
                out = out.mul_generator_power(g, *halves);
            } else if halves % 2 != 0 {
                return Err(Error::InvalidStage(alloc::format!(
                    "half-integer power of {} which is not a radical generator on {}",
                    f,
                    chart
                )));
            } else if *halves > 0 {
                out = out.mul_poly(&f.pow((*halves / 2) as u32));
            } else {
                out = out.div_poly_pow(f, (-*halves / 2) as u32);
            }
        }
        Ok(out)
    }

    /// Check admissibility on the interval: half powers only of chart
    /// generators that do not vanish on it, no poles inside it.
    pub fn validate(&self, chart: Chart, interval: &Interval) -> Result<()> {
        let gens = chart.generators();
        for (f, halves) in &self.factors {
            if f.is_zero() {
                return Err(Error::InvalidStage("zero factor".into()));
            }
            if f.is_constant() {
                continue;
            }
            let zeros = sturm::sturm_count(f, interval)?;
            if halves % 2 != 0 {
                if !gens.contains(f) {
                    return Err(Error::InvalidStage(alloc::format!(
                        "{} is not a radical generator on {}",
                        f,
                        chart
                    )));
                }
                if zeros > 0 {
                    return Err(Error::InvalidStage(alloc::format!(
                        "half power of {} vanishes on {}",
                        f,
                        interval
                    )));
                }
            } else if *halves < 0 && zeros > 0 {
                return Err(Error::NonIsolatableZeros(alloc::format!(
                    "negative power of {} has poles on {}",
                    f,
                    interval
                )));
            }
        }
        Ok(())
    }

    /// `(p, s)`: zeros on the interval with multiplicity, and distinct zeros.
    pub fn zero_count(&self, interval: &Interval) -> Result<(usize, usize)> {
        let mut p = 0;
        let mut roots: Vec<Poly> = Vec::new();
        for (f, halves) in &self.factors {
            if *halves <= 0 || f.is_constant() {
                continue;
            }
            if halves % 2 != 0 {
                // validated: nonvanishing on the interval
                continue;
            }
            let k = (*halves / 2) as usize;
            for (part, mult) in f.square_free_decomposition() {
                if part.degree().unwrap_or(0) == 0 {
                    continue;
                }
                let c = sturm::sturm_count(&part, interval)?;
                p += c * mult as usize * k;
                if c > 0 {
                    roots.push(part);
                }
            }
        }
        let s = if roots.is_empty() {
            0
        } else {
            let prod = roots.iter().fold(Poly::one(), |acc, r| &acc * r);
            sturm::sturm_count(&prod.square_free_part(), interval)?
        };
        Ok((p, s))
    }
}

impl fmt::Display for ClearingFactor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.factors.is_empty() {
            return write!(f, "1");
        }
        for (i, (p, k)) in self.factors.iter().enumerate() {
            if i > 0 {
                write!(f, "·")?;
            }
            if k % 2 == 0 {
                write!(f, "({})^{}", p, k / 2)?;
            } else {
                write!(f, "({})^({}/2)", p, k)?;
            }
        }
        Ok(())
    }
}

/// One application of the bound rule.
#[derive(Clone, Debug, PartialEq)]
pub struct ReductionStage {
    /// `W`: multiplies the input; must not have poles on the interval.
    pub premultiplier: ClearingFactor,
    /// `G` of the rule; its zeros are paid for with `m` each.
    pub divisor: ClearingFactor,
    pub m: u32,
    pub interval: Interval,
}

impl ReductionStage {
    pub fn derivative(m: u32, interval: Interval) -> Self {
        ReductionStage { premultiplier: ClearingFactor::one(), divisor: ClearingFactor::one(), m, interval }
    }

    pub fn with_premultiplier(mut self, w: ClearingFactor) -> Self {
        self.premultiplier = w;
        self
    }

    pub fn with_divisor(mut self, g: ClearingFactor) -> Self {
        self.divisor = g;
        self
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct StageRecord {
    pub stage: ReductionStage,
    /// One output per input expression (a single one for an instance).
    pub outputs: Vec<Expression>,
    pub m: u32,
    /// Zeros of the divisor on the interval, with multiplicity.
    pub p: usize,
    /// Distinct zeros of the divisor.
    pub distinct: usize,
    pub justification: Vec<String>,
}

fn check_stage(chart: Chart, stage: &ReductionStage) -> Result<Vec<String>> {
    if stage.m == 0 {
        return Err(Error::InvalidStage("derivative order must be at least 1".into()));
    }
    if !stage.interval.is_within(&chart.interval()) {
        return Err(Error::InvalidStage(alloc::format!("{} is not inside {}", stage.interval, chart)));
    }
    stage.premultiplier.validate(chart, &stage.interval)?;
    stage.divisor.validate(chart, &stage.interval)?;
    let mut notes = Vec::new();
    if !stage.premultiplier.is_one() {
        notes.push(alloc::format!(
            "premultiplier {} has no poles on {}, so zeros of the input are zeros of the product",
            stage.premultiplier,
            stage.interval
        ));
    }
    for (f, k) in stage.divisor.factors().iter().chain(stage.premultiplier.factors()) {
        if k % 2 != 0 {
            notes.push(alloc::format!("half power of {} is smooth and nonvanishing on the open interval", f));
        }
    }
    Ok(notes)
}

fn stage_output(m: &Expression, stage: &ReductionStage) -> Result<Expression> {
    let input = stage.premultiplier.apply(m)?;
    let quotient = stage.divisor.inverse().apply(&input)?;
    let d = quotient.differentiate_n(stage.m);
    stage.divisor.pow(stage.m + 1).apply(&d)?.normalize()
}

/// Apply one stage to `M`, returning `F̃` and the stage record.
pub fn apply_stage(m: &Expression, stage: &ReductionStage) -> Result<(Expression, StageRecord)> {
    let notes = check_stage(m.chart(), stage)?;
    let out = stage_output(m, stage)?;
    let (p, distinct) = stage.divisor.zero_count(&stage.interval)?;
    let record = StageRecord {
        stage: stage.clone(),
        outputs: alloc::vec![out.clone()],
        m: stage.m,
        p,
        distinct,
        justification: notes,
    };
    Ok((out, record))
}

/// Zeros of `f` given those of `f′`, with multiplicity.
pub fn rolle_step_bound(derivative_zeros: usize) -> usize {
    derivative_zeros + 1
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum TerminalRule {
    /// Degree of the conjugate product (valid for every coefficient choice
    /// of the input family).
    DegreeBound,
    /// Exact Sturm count with multiplicity bounds, for a fixed instance.
    ExactCount,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Grade {
    Bound,
    Exact,
}

impl Grade {
    pub fn name(self) -> &'static str {
        match self {
            Grade::Bound => "bound",
            Grade::Exact => "exact",
        }
    }
}

/// `(A + B·√r) / D` with `D` nonvanishing on the working interval.
#[derive(Clone, Debug, PartialEq)]
pub struct AlgebraicForm {
    pub form: MixedForm,
    pub denominator: ClearingFactor,
}

/// Degree bound and exact distinct count of zeros of the form.
pub fn algebraic_zero_bound(f: &AlgebraicForm, chart: Chart, interval: &Interval) -> Result<(usize, usize)> {
    f.denominator.validate(chart, interval)?;
    for (d, k) in f.denominator.factors() {
        if *k > 0 && !d.is_constant() && sturm::sturm_count(d, interval)? > 0 {
            return Err(Error::NonIsolatableZeros(alloc::format!("denominator factor {} vanishes", d)));
        }
    }
    let degree = f.form.degree_bound()?;
    let exact = sturm::count_zeros_mixed(&f.form, interval)?;
    Ok((degree, exact))
}

#[derive(Clone, Debug, PartialEq)]
pub struct TerminalRecord {
    pub grade: Grade,
    pub mu: usize,
    /// Positive radical monomial the terminal expression was multiplied by.
    pub multiplier: RadicalMonomial,
    /// Common denominator, factored, nonvanishing on the interval.
    pub denominator: Vec<(Poly, u32)>,
    /// Radical monomial → numerator degree (maximum over inputs).
    pub numerator_degrees: Vec<(RadicalMonomial, usize)>,
    /// Degree of the full conjugate product.
    pub norm_degree: usize,
    /// Exact form for single-input certificates with at most one radical.
    pub form: Option<MixedForm>,
    pub justification: String,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct LedgerEntry {
    pub stage: usize,
    pub m: u32,
    pub p: usize,
    /// Bound on zeros of the stage output.
    pub lambda_output: usize,
    /// Bound on zeros of the stage input: `λ_out + m·p + m`.
    pub lambda_input: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct BoundCertificate {
    pub chart: Chart,
    pub interval: Interval,
    pub stages: Vec<StageRecord>,
    pub terminal: TerminalRecord,
    pub ledger: Vec<LedgerEntry>,
    /// Endpoints where every input vanishes exactly; each one is removed
    /// from the count on the open interval.
    pub forced_zeros: Vec<Rational>,
    /// Interval the final bound refers to.
    pub final_interval: Interval,
    pub bound: usize,
}

impl BoundCertificate {
    /// `μ + Σ (m_k·p_k + m_k) − #forced`, recomputed from the records.
    pub fn recompute(&self) -> usize {
        let total: usize = self.terminal.mu
            + self.stages.iter().map(|s| s.m as usize * s.p + s.m as usize).sum::<usize>();
        total.saturating_sub(self.forced_zeros.len())
    }

    pub fn ledger_consistent(&self) -> bool {
        let mut lambda = self.terminal.mu;
        for (entry, stage) in self.ledger.iter().rev().zip(self.stages.iter().rev()) {
            if entry.lambda_output != lambda || entry.m != stage.m || entry.p != stage.p {
                return false;
            }
            lambda = lambda + stage.m as usize * stage.p + stage.m as usize;
            if entry.lambda_input != lambda {
                return false;
            }
        }
        self.ledger.len() == self.stages.len() && self.bound == self.recompute()
    }

    pub fn grade(&self) -> Grade {
        self.terminal.grade
    }

    /// Human-readable ledger, one line per step.
    pub fn ledger_lines(&self) -> Vec<String> {
        let mut out = Vec::new();
        out.push(alloc::format!(
            "terminal μ = {} ({}) on {}: {}",
            self.terminal.mu,
            self.terminal.grade.name(),
            self.interval,
            self.terminal.justification
        ));
        for e in self.ledger.iter().rev() {
            out.push(alloc::format!(
                "stage {}: λ ≤ {} + {}·{} + {} = {}",
                e.stage + 1,
                e.lambda_output,
                e.m,
                e.p,
                e.m,
                e.lambda_input
            ));
        }
        for z in &self.forced_zeros {
            out.push(alloc::format!("forced zero at h = {}: bound on {} is {} − 1", z, self.final_interval, self.bound + 1));
        }
        out.push(alloc::format!("final bound on {}: {}", self.final_interval, self.bound));
        out
    }
}

/// Certificate for a single expression.
pub fn certify(
    m: &Expression,
    strategy: &[ReductionStage],
    rule: TerminalRule,
    forced_zeros: &[Rational],
) -> Result<BoundCertificate> {
    certify_span(core::slice::from_ref(m), strategy, rule, forced_zeros)
}

/// Certificate valid for every linear combination of `basis`.
///
/// All stages are linear in the input, so each basis element is reduced on
/// its own and the terminal numerator degrees are maxima over the basis.
pub fn certify_span(
    basis: &[Expression],
    strategy: &[ReductionStage],
    rule: TerminalRule,
    forced_zeros: &[Rational],
) -> Result<BoundCertificate> {
    let chart = basis.first().ok_or(Error::NoCertificate("empty input".into()))?.chart();
    if basis.iter().any(|b| b.chart() != chart) {
        return Err(Error::NoCertificate("inputs live on different charts".into()));
    }
    if rule == TerminalRule::ExactCount && basis.len() != 1 {
        return Err(Error::NoCertificate("exact counts need a single instance".into()));
    }
    let normalized: Vec<Expression> = basis.iter().map(Expression::normalize).collect::<Result<_>>()?;
    if normalized.iter().all(Expression::is_zero) {
        return Err(Error::IdenticallyZero);
    }
    let interval = strategy
        .first()
        .map(|s| s.interval.clone())
        .ok_or_else(|| Error::NoCertificate("empty strategy".into()))?;
    if strategy.iter().any(|s| s.interval != interval) {
        return Err(Error::InvalidStage("all stages must share the working interval".into()));
    }

    let mut forced = Vec::new();
    for z in forced_zeros {
        let on_edge = (interval.hi_closed && interval.hi.as_ref() == Some(z))
            || (interval.lo_closed && interval.lo.as_ref() == Some(z));
        if !on_edge {
            return Err(Error::NoCertificate(alloc::format!("forced zero {} is not a closed endpoint of {}", z, interval)));
        }
        for b in &normalized {
            match exact_value_at(b, z) {
                Some(v) if v.is_zero() => {}
                _ => {
                    return Err(Error::NoCertificate(alloc::format!(
                        "could not verify a zero at h = {} for every input",
                        z
                    )))
                }
            }
        }
        forced.push(z.clone());
    }

    let mut current = normalized;
    let mut records = Vec::new();
    for stage in strategy {
        let notes = check_stage(chart, stage)?;
        let outputs: Vec<Expression> = current.iter().map(|e| stage_output(e, stage)).collect::<Result<_>>()?;
        let (p, distinct) = stage.divisor.zero_count(&stage.interval)?;
        records.push(StageRecord {
            stage: stage.clone(),
            outputs: outputs.clone(),
            m: stage.m,
            p,
            distinct,
            justification: notes,
        });
        current = outputs;
    }

    let terminal = terminal_bound(chart, &interval, &current, rule)?;
    let mut ledger = Vec::new();
    let mut lambda = terminal.mu;
    for (i, r) in records.iter().enumerate().rev() {
        let out = lambda;
        lambda = out + r.m as usize * r.p + r.m as usize;
        ledger.push(LedgerEntry { stage: i, m: r.m, p: r.p, lambda_output: out, lambda_input: lambda });
    }
    ledger.reverse();
    let mut final_interval = interval.clone();
    for z in &forced {
        if final_interval.hi.as_ref() == Some(z) {
            final_interval.hi_closed = false;
        }
        if final_interval.lo.as_ref() == Some(z) {
            final_interval.lo_closed = false;
        }
    }
    let bound = lambda.saturating_sub(forced.len());
    Ok(BoundCertificate {
        chart,
        interval,
        stages: records,
        terminal,
        ledger,
        forced_zeros: forced,
        final_interval,
        bound,
    })
}

/// Numerators over a common denominator after multiplying by `ρ`.
struct Cleared {
    denominator: Vec<(Poly, u32)>,
    /// Per input: radical monomial → numerator.
    numerators: Vec<BTreeMap<RadicalMonomial, Poly>>,
}

fn clear(chart: Chart, elements: &[AlgebraicElement], rho: RadicalMonomial) -> Result<Cleared> {
    let rho_elem = AlgebraicElement::from_term(chart, rho, RatFunc::one());
    let multiplied: Vec<AlgebraicElement> =
        elements.iter().map(|e| e.mul(&rho_elem)).collect::<Result<_>>()?;
    let mut keys = Vec::new();
    let mut items: Vec<&RatFunc> = Vec::new();
    for (i, e) in multiplied.iter().enumerate() {
        for (k, r) in e.terms() {
            keys.push((i, *k));
            items.push(r);
        }
    }
    let (denominator, nums) = common_denominator(&items);
    let mut numerators = alloc::vec![BTreeMap::new(); elements.len()];
    for ((i, k), n) in keys.into_iter().zip(nums) {
        numerators[i].insert(k, n);
    }
    Ok(Cleared { denominator, numerators })
}

/// Degree bound of the product of all conjugates, by max-plus propagation.
pub fn norm_degree_bound(chart: Chart, degrees: &BTreeMap<RadicalMonomial, usize>) -> Option<usize> {
    let gens = chart.generators();
    let mut f: BTreeMap<RadicalMonomial, usize> = degrees.clone();
    for g in 0..chart.generator_count() {
        if !f.keys().any(|e| e.contains(g)) {
            continue;
        }
        let mut next: BTreeMap<RadicalMonomial, usize> = BTreeMap::new();
        for (e1, d1) in &f {
            for (e2, d2) in &f {
                let e = RadicalMonomial(e1.0 ^ e2.0);
                if e.contains(g) {
                    continue;
                }
                let fold: usize = RadicalMonomial(e1.0 & e2.0)
                    .generators()
                    .map(|k| gens[k].degree().unwrap_or(0))
                    .sum();
                let d = d1 + d2 + fold;
                let slot = next.entry(e).or_insert(d);
                *slot = (*slot).max(d);
            }
        }
        f = next;
    }
    f.get(&RadicalMonomial::ONE).copied()
}

/// Exact product of all conjugates of `Σ N_e ρ_e`.
pub fn norm_poly(chart: Chart, numerators: &BTreeMap<RadicalMonomial, Poly>) -> Result<Poly> {
    let mut f = AlgebraicElement::from_terms(
        chart,
        numerators.iter().map(|(e, p)| (*e, RatFunc::from_poly(p.clone()))),
    )?;
    for g in 0..chart.generator_count() {
        if !f.terms().keys().any(|e| e.contains(g)) {
            continue;
        }
        let conj = AlgebraicElement::from_terms(
            chart,
            f.terms().iter().map(|(e, r)| (*e, if e.contains(g) { r.neg() } else { r.clone() })),
        )?;
        f = f.mul(&conj)?;
        if f.terms().keys().any(|e| e.contains(g)) {
            return Err(Error::MalformedExpression("conjugate product kept a radical".into()));
        }
    }
    match f.as_ratfunc() {
        Some(r) if r.is_polynomial() => Ok(r.numerator().clone()),
        _ => Err(Error::MalformedExpression("conjugate product is not a polynomial".into())),
    }
}

/// Single-radical view `A + B√r` of cleared numerators, if possible.
fn as_mixed(chart: Chart, numerators: &BTreeMap<RadicalMonomial, Poly>) -> Option<MixedForm> {
    let gens = chart.generators();
    let others: Vec<&RadicalMonomial> = numerators.keys().filter(|e| **e != RadicalMonomial::ONE).collect();
    let a = numerators.get(&RadicalMonomial::ONE).cloned().unwrap_or_else(Poly::zero);
    match others.as_slice() {
        [] => Some(MixedForm::new(a, Poly::zero(), Poly::one())),
        [e] => {
            let r = e.generators().fold(Poly::one(), |acc, g| &acc * &gens[g]);
            Some(MixedForm::new(a, numerators[*e].clone(), r))
        }
        _ => None,
    }
}

fn terminal_bound(
    chart: Chart,
    interval: &Interval,
    outputs: &[Expression],
    rule: TerminalRule,
) -> Result<TerminalRecord> {
    let mut elements = Vec::new();
    for e in outputs {
        if e.parts().keys().any(|t| *t != Transcendental::One) {
            return Err(Error::NoCertificate(alloc::format!(
                "terminal expression still has transcendental parts: {}",
                e.parts().keys().map(|t| t.name()).collect::<Vec<_>>().join(", ")
            )));
        }
        elements.push(e.algebraic_part());
    }
    if elements.iter().all(AlgebraicElement::is_zero) {
        return Err(Error::NoCertificate("terminal expression is identically zero".into()));
    }
    let mut present: Vec<RadicalMonomial> = alloc::vec![RadicalMonomial::ONE];
    for e in &elements {
        for k in e.terms().keys() {
            if !present.contains(k) {
                present.push(*k);
            }
        }
    }

    // choose the positive radical multiplier giving the smallest degree bound
    let mut best: Option<(usize, RadicalMonomial, Cleared, BTreeMap<RadicalMonomial, usize>)> = None;
    for rho in present {
        let cleared = clear(chart, &elements, rho)?;
        let mut degs: BTreeMap<RadicalMonomial, usize> = BTreeMap::new();
        for nums in &cleared.numerators {
            for (k, p) in nums {
                if let Some(d) = p.degree() {
                    let slot = degs.entry(*k).or_insert(d);
                    *slot = (*slot).max(d);
                }
            }
        }
        let Some(nd) = norm_degree_bound(chart, &degs) else { continue };
        if best.as_ref().is_none_or(|b| nd < b.0) {
            best = Some((nd, rho, cleared, degs));
        }
    }
    let (norm_degree, rho, cleared, degs) =
        best.ok_or_else(|| Error::NoCertificate("no radical multiplier clears the terminal form".into()))?;

    for (d, _) in &cleared.denominator {
        if sturm::sturm_count(d, interval)? > 0 {
            return Err(Error::NoCertificate(alloc::format!(
                "terminal denominator factor {} vanishes on {}",
                d,
                interval
            )));
        }
    }
    let numerator_degrees: Vec<(RadicalMonomial, usize)> = degs.iter().map(|(k, d)| (*k, *d)).collect();
    let form = if cleared.numerators.len() == 1 { as_mixed(chart, &cleared.numerators[0]) } else { None };
    let deg_text = numerator_degrees
        .iter()
        .map(|(k, d)| {
            let label: Vec<&str> = k.generators().map(|g| chart.generator_label(g)).collect();
            if label.is_empty() {
                alloc::format!("deg A = {}", d)
            } else {
                alloc::format!("deg B[{}] = {}", label.join("·"), d)
            }
        })
        .collect::<Vec<_>>()
        .join(", ");

    match rule {
        TerminalRule::DegreeBound => Ok(TerminalRecord {
            grade: Grade::Bound,
            mu: norm_degree,
            multiplier: rho,
            denominator: cleared.denominator,
            numerator_degrees,
            norm_degree,
            form,
            justification: alloc::format!("degree of the conjugate product ≤ {} ({})", norm_degree, deg_text),
        }),
        TerminalRule::ExactCount => {
            let nums = &cleared.numerators[0];
            let (mu, how) = match &form {
                Some(f) => {
                    let zeros = sturm::mixed_zeros(f, interval)?;
                    let mut mu: usize = zeros.iter().map(|(_, k)| *k as usize).sum();
                    mu += closed_endpoint_roots(&f.conjugate_product_or_a(), interval);
                    (mu, "Sturm count of the conjugate product, sign-filtered, with multiplicities")
                }
                None => {
                    let n = norm_poly(chart, nums)?;
                    let mut mu = sturm::count_with_multiplicity(&n, interval)?;
                    mu += closed_endpoint_roots(&n, interval);
                    (mu, "Sturm count of the full conjugate product with multiplicities (unfiltered)")
                }
            };
            Ok(TerminalRecord {
                grade: Grade::Exact,
                mu,
                multiplier: rho,
                denominator: cleared.denominator,
                numerator_degrees,
                norm_degree,
                form,
                justification: alloc::format!("{}; {}", how, deg_text),
            })
        }
    }
}

impl MixedForm {
    fn conjugate_product_or_a(&self) -> Poly {
        if self.b.is_zero() {
            self.a.clone()
        } else {
            self.conjugate_product()
        }
    }
}

/// Multiplicities of closed finite endpoints as roots of `p`.
fn closed_endpoint_roots(p: &Poly, interval: &Interval) -> usize {
    let mut k = 0;
    if interval.lo_closed {
        if let Some(a) = &interval.lo {
            k += sturm::root_multiplicity(p, a) as usize;
        }
    }
    if interval.hi_closed {
        if let Some(b) = &interval.hi {
            k += sturm::root_multiplicity(p, b) as usize;
        }
    }
    k
}

fn rational_sqrt(x: &Rational) -> Option<Rational> {
    if x.is_negative() {
        return None;
    }
    let (n, d) = (x.numer(), x.denom());
    let (sn, sd) = (n.sqrt(), d.sqrt());
    if &(&sn * &sn) == n && &(&sd * &sd) == d {
        Some(Rational::new(sn, sd))
    } else {
        None
    }
}

fn transcendental_exact(chart: Chart, t: Transcendental, x: &Rational) -> Option<Scalar> {
    let zero = x.is_zero();
    let one = x.is_one();
    match t {
        Transcendental::One => Some(Scalar::one()),
        Transcendental::LnH if one => Some(Scalar::zero()),
        Transcendental::LnOneMinusH if zero => Some(Scalar::zero()),
        Transcendental::ArcTanSqrtH | Transcendental::ArcSinSqrtH | Transcendental::LnHalfAngle if zero => {
            Some(Scalar::zero())
        }
        Transcendental::LnConic if zero || (chart == Chart::NegBranch && *x == -Rational::one()) => {
            Some(Scalar::zero())
        }
        _ => None,
    }
}

fn algebraic_exact(a: &AlgebraicElement, x: &Rational) -> Option<Scalar> {
    let chart = a.chart();
    let gens = chart.generators();
    let mut total = Scalar::zero();
    for (e, r) in a.terms() {
        let v = r.eval_rational(x)?;
        let mut rad = Scalar::one();
        for g in e.generators() {
            let gv = gens[g].eval_rational(x);
            if !gv.is_rational() {
                return None;
            }
            rad = &rad * &Scalar::from_rational(rational_sqrt(&gv.rational)?);
        }
        total += &(&v * &rad);
    }
    Some(total)
}

/// Exact value of the continuous extension at a rational point, when every
/// part can be evaluated in closed form.
pub fn exact_value_at(e: &Expression, x: &Rational) -> Option<Scalar> {
    let mut total = Scalar::zero();
    for (t, a) in e.parts() {
        let c = algebraic_exact(a, x)?;
        if c.is_zero() {
            continue;
        }
        let tv = transcendental_exact(e.chart(), *t, x)?;
        total += &(&c * &tv);
    }
    Some(total)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scalar::{int, rat};

    fn unit_open() -> Interval {
        Chart::UnitInterval.interval()
    }

    #[test]
    fn polynomial_derivative_stage() {
        let e = Expression::poly(Chart::UnitInterval, Poly::from_ints(&[1, 2, 3]));
        let (out, rec) = apply_stage(&e, &ReductionStage::derivative(1, unit_open())).unwrap();
        assert_eq!(out, Expression::poly(Chart::UnitInterval, Poly::from_ints(&[2, 6])));
        assert_eq!((rec.p, rec.m), (0, 1));
    }

    #[test]
    fn divisor_zeros_are_counted_with_multiplicity() {
        let g = ClearingFactor::power(Poly::from_rationals(&[rat(-1, 2), int(1)]), 4);
        assert_eq!(g.zero_count(&unit_open()).unwrap(), (2, 1));
        let half = ClearingFactor::power(Poly::from_ints(&[1, -1]), 3);
        assert_eq!(half.zero_count(&unit_open()).unwrap(), (0, 0));
        assert!(half.validate(Chart::UnitInterval, &unit_open()).is_ok());
        assert!(half.validate(Chart::UnitInterval, &unit_open().close_hi()).is_err());
    }

    #[test]
    fn half_powers_only_of_generators() {
        let bad = ClearingFactor::power(Poly::from_ints(&[2, 1]), 1);
        assert!(bad.validate(Chart::UnitInterval, &unit_open()).is_err());
    }

    #[test]
    fn mixed_zero_bound_examples() {
        let f = AlgebraicForm {
            form: MixedForm::new(Poly::from_ints(&[-1]), Poly::from_ints(&[1]), Poly::h()),
            denominator: ClearingFactor::one(),
        };
        let iv = Interval::new(Some(int(0)), None);
        assert_eq!(algebraic_zero_bound(&f, Chart::PosAxis, &iv).unwrap(), (1, 1));
        let f = AlgebraicForm {
            form: MixedForm::new(Poly::from_ints(&[5]), Poly::zero(), Poly::h()),
            denominator: ClearingFactor::one(),
        };
        assert_eq!(algebraic_zero_bound(&f, Chart::PosAxis, &iv).unwrap(), (0, 0));
    }

    #[test]
    fn rolle_step() {
        assert_eq!(rolle_step_bound(0), 1);
        assert_eq!((0..3).fold(7, |c, _| rolle_step_bound(c)), 10);
    }

    #[test]
    fn norm_degree_matches_single_radical_rule() {
        let mut d = BTreeMap::new();
        d.insert(RadicalMonomial::ONE, 4);
        d.insert(RadicalMonomial::single(1), 3);
        // max(2·4, 1 + 2·3)
        assert_eq!(norm_degree_bound(Chart::PosAxis, &d), Some(8));
    }

    #[test]
    fn exact_norm_of_two_radicals() {
        // 1 + √h − √(1−h): norm over both generators
        let mut n = BTreeMap::new();
        n.insert(RadicalMonomial::ONE, Poly::one());
        n.insert(RadicalMonomial::single(0), Poly::one());
        n.insert(RadicalMonomial::single(1), -Poly::one());
        let p = norm_poly(Chart::UnitInterval, &n).unwrap();
        // 1 + √h − √(1−h) vanishes at h = 0
        assert!(p.eval_rational(&int(0)).is_zero());
        let degs = n.keys().map(|k| (*k, 0)).collect();
        assert!(p.degree().unwrap() <= norm_degree_bound(Chart::UnitInterval, &degs).unwrap());
    }

    #[test]
    fn exact_value_of_log_family_at_one() {
        // h(1−h) ln h vanishes at 1
        let e = Expression::term(
            Transcendental::LnH,
            AlgebraicElement::from_poly(Chart::UnitInterval, Poly::from_ints(&[0, 1, -1])),
        )
        .unwrap();
        assert_eq!(exact_value_at(&e, &int(1)), Some(Scalar::zero()));
        let s = Expression::algebraic(AlgebraicElement::radical(Chart::UnitInterval, 1));
        assert_eq!(exact_value_at(&s, &int(1)), Some(Scalar::zero()));
        assert_eq!(exact_value_at(&s, &rat(3, 4)), Some(Scalar::from_ratio(1, 2)));
    }

    #[test]
    fn identically_zero_is_rejected() {
        let z = Expression::zero(Chart::UnitInterval);
        let r = certify(&z, &[ReductionStage::derivative(1, unit_open())], TerminalRule::DegreeBound, &[]);
        assert_eq!(r.unwrap_err(), Error::IdenticallyZero);
    }

    #[test]
    fn ledger_back_substitution() {
        // h³ − h on (0, 2): one stage m = 2 leaves 6h with one zero at 0 (outside)
        let e = Expression::poly(Chart::PosAxis, Poly::from_ints(&[0, -1, 0, 1]));
        let iv = Interval::bounded(int(0), int(2));
        let cert = certify(&e, &[ReductionStage::derivative(2, iv)], TerminalRule::ExactCount, &[]).unwrap();
        assert_eq!(cert.terminal.mu, 0);
        assert_eq!(cert.bound, 2);
        assert!(cert.ledger_consistent());
    }
}
