//! JSON documents and CSV tables for the command-line tools.
//!
//! Exact values are written as decimal strings (`"-3/4"`, `"2"`), so every
//! document round-trips bit for bit.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;

use melnikov_core::algebraic::{AlgebraicElement, RadicalMonomial};
use melnikov_core::instances::{FamilyId, FamilySpec, InstanceSpec};
use melnikov_core::integrator::{BivariatePoly, FitReport, PiecewiseSystem, SystemId};
use melnikov_core::reduction::{BoundCertificate, ClearingFactor};
use melnikov_core::zeros::ZeroReport;
use melnikov_core::{Chart, Expression, Interval, Poly, RatFunc, Rational, Scalar, Transcendental};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const EXPRESSION_VERSION: u32 = 1;
pub const INSTANCE_VERSION: u32 = 1;
pub const CERTIFICATE_VERSION: u32 = 1;
pub const SYSTEM_VERSION: u32 = 1;

#[derive(Debug)]
pub struct FormatError(pub String);

impl fmt::Display for FormatError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for FormatError {}

fn bad(msg: impl Into<String>) -> FormatError {
    FormatError(msg.into())
}

fn parse_rational(s: &str) -> Result<Rational, FormatError> {
    s.trim().parse::<Rational>().map_err(|_| bad(format!("not a rational: {s:?}")))
}

/// A coefficient of `Q(√2)`: a plain rational string, or both components.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ScalarDoc {
    Rational(String),
    Extended { rational: String, sqrt2: String },
}

impl ScalarDoc {
    pub fn from_scalar(s: &Scalar) -> Self {
        if s.is_rational() {
            ScalarDoc::Rational(s.rational.to_string())
        } else {
            ScalarDoc::Extended { rational: s.rational.to_string(), sqrt2: s.surd.to_string() }
        }
    }

    pub fn to_scalar(&self) -> Result<Scalar, FormatError> {
        match self {
            ScalarDoc::Rational(r) => Ok(Scalar::from_rational(parse_rational(r)?)),
            ScalarDoc::Extended { rational, sqrt2 } => Ok(Scalar::new(parse_rational(rational)?, parse_rational(sqrt2)?)),
        }
    }
}

fn poly_doc(p: &Poly) -> Vec<ScalarDoc> {
    p.coeffs().iter().map(ScalarDoc::from_scalar).collect()
}

fn poly_from(coeffs: &[ScalarDoc]) -> Result<Poly, FormatError> {
    Ok(Poly::new(coeffs.iter().map(ScalarDoc::to_scalar).collect::<Result<_, _>>()?))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FactorDoc {
    pub coeffs: Vec<ScalarDoc>,
    pub power: u32,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TermDoc {
    pub radical_exponents: Vec<u8>,
    pub numerator_coeffs: Vec<ScalarDoc>,
    /// Factored denominator; empty for polynomial terms.
    #[serde(default)]
    pub denominator: Vec<FactorDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PartDoc {
    pub transcendental: String,
    pub terms: Vec<TermDoc>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExpressionDoc {
    pub version: u32,
    pub chart: String,
    pub parts: Vec<PartDoc>,
}

impl ExpressionDoc {
    pub fn from_expression(e: &Expression) -> Self {
        let k = e.chart().generator_count();
        let parts = e
            .parts()
            .iter()
            .map(|(t, a)| PartDoc {
                transcendental: t.name().to_string(),
                terms: a
                    .terms()
                    .iter()
                    .map(|(m, r)| TermDoc {
                        radical_exponents: m.exponents(k),
                        numerator_coeffs: poly_doc(r.numerator()),
                        denominator: r
                            .denominator_factors()
                            .iter()
                            .map(|(f, p)| FactorDoc { coeffs: poly_doc(f), power: *p })
                            .collect(),
                    })
                    .collect(),
            })
            .collect();
        ExpressionDoc { version: EXPRESSION_VERSION, chart: e.chart().name().to_string(), parts }
    }

    pub fn to_expression(&self) -> Result<Expression, FormatError> {
        if self.version != EXPRESSION_VERSION {
            return Err(bad(format!("unsupported expression version {}", self.version)));
        }
        let chart = Chart::from_name(&self.chart).ok_or_else(|| bad(format!("unknown chart {:?}", self.chart)))?;
        let mut parts = Vec::new();
        for part in &self.parts {
            let t = Transcendental::from_name(&part.transcendental)
                .ok_or_else(|| bad(format!("unknown transcendental {:?}", part.transcendental)))?;
            let mut terms = Vec::new();
            for term in &part.terms {
                if term.radical_exponents.len() != chart.generator_count() {
                    return Err(bad(format!("{} radical exponents on {}", term.radical_exponents.len(), chart)));
                }
                let m = RadicalMonomial::from_exponents(&term.radical_exponents)
                    .ok_or_else(|| bad("radical exponents must be 0 or 1"))?;
                let den = term
                    .denominator
                    .iter()
                    .map(|f| Ok((poly_from(&f.coeffs)?, f.power)))
                    .collect::<Result<Vec<_>, FormatError>>()?;
                terms.push((m, RatFunc::from_factored(poly_from(&term.numerator_coeffs)?, den)));
            }
            let a = AlgebraicElement::from_terms(chart, terms).map_err(|e| bad(e.to_string()))?;
            parts.push((t, a));
        }
        Expression::from_parts(chart, parts).map_err(|e| bad(e.to_string()))
    }
}

/// Canonical compact JSON of an expression.
pub fn expression_json(e: &Expression) -> String {
    serde_json::to_string(&ExpressionDoc::from_expression(e)).expect("plain data serializes")
}

pub fn parse_expression(s: &str) -> Result<Expression, FormatError> {
    let doc: ExpressionDoc = serde_json::from_str(s).map_err(|e| bad(e.to_string()))?;
    doc.to_expression()
}

/// SHA-256 of the canonical JSON, lower-case hex.
pub fn digest(e: &Expression) -> String {
    format!("{:x}", Sha256::digest(expression_json(e).as_bytes()))
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct InstanceDoc {
    pub version: u32,
    pub family: String,
    pub n: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    pub coefficients: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub constants: BTreeMap<String, String>,
}

impl InstanceDoc {
    pub fn from_spec(spec: &InstanceSpec) -> Self {
        InstanceDoc {
            version: INSTANCE_VERSION,
            family: spec.family.id.name(),
            n: spec.family.n,
            seed: spec.seed,
            coefficients: spec
                .coefficients
                .iter()
                .map(|(k, v)| (k.clone(), v.iter().map(ToString::to_string).collect()))
                .collect(),
            constants: spec.constants.iter().map(|(k, v)| (k.clone(), v.to_string())).collect(),
        }
    }

    pub fn to_spec(&self) -> Result<InstanceSpec, FormatError> {
        if self.version != INSTANCE_VERSION {
            return Err(bad(format!("unsupported instance version {}", self.version)));
        }
        let id = FamilyId::from_name(&self.family).ok_or_else(|| bad(format!("unknown family {:?}", self.family)))?;
        let family = FamilySpec::new(id, self.n).map_err(|e| bad(e.to_string()))?;
        let mut spec = InstanceSpec::new(family);
        for (slot, coeffs) in &self.coefficients {
            let c = coeffs.iter().map(|s| parse_rational(s)).collect::<Result<Vec<_>, _>>()?;
            spec = spec.with(slot, &c);
        }
        for (name, v) in &self.constants {
            spec = spec.with_constant(name, parse_rational(v)?);
        }
        spec.seed = self.seed;
        spec.validate().map_err(|e| bad(e.to_string()))?;
        Ok(spec)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalDoc {
    /// `null` for an infinite end.
    pub lo: Option<String>,
    pub hi: Option<String>,
    pub lo_closed: bool,
    pub hi_closed: bool,
}

impl IntervalDoc {
    pub fn from_interval(i: &Interval) -> Self {
        IntervalDoc {
            lo: i.lo.as_ref().map(ToString::to_string),
            hi: i.hi.as_ref().map(ToString::to_string),
            lo_closed: i.lo_closed,
            hi_closed: i.hi_closed,
        }
    }

    pub fn to_interval(&self) -> Result<Interval, FormatError> {
        let lo = self.lo.as_deref().map(parse_rational).transpose()?;
        let hi = self.hi.as_deref().map(parse_rational).transpose()?;
        Ok(Interval { lo, hi, lo_closed: self.lo_closed, hi_closed: self.hi_closed })
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ClearingDoc {
    /// `f^(halves/2)` for each entry.
    pub factors: Vec<(Vec<ScalarDoc>, i64)>,
    pub display: String,
}

fn clearing_doc(c: &ClearingFactor) -> ClearingDoc {
    ClearingDoc { factors: c.factors().iter().map(|(f, k)| (poly_doc(f), *k)).collect(), display: c.to_string() }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageDoc {
    pub m: u32,
    pub p: usize,
    pub distinct: usize,
    pub premultiplier: ClearingDoc,
    pub divisor: ClearingDoc,
    pub justification: Vec<String>,
    /// SHA-256 of each stage output.
    pub output_digests: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TerminalDoc {
    pub grade: String,
    pub mu: usize,
    pub norm_degree: usize,
    pub justification: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LedgerDoc {
    pub stage: usize,
    pub m: u32,
    pub p: usize,
    pub lambda_output: usize,
    pub lambda_input: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CertificateDoc {
    pub version: u32,
    pub family: String,
    pub n: u32,
    pub chart: String,
    pub interval: IntervalDoc,
    pub stages: Vec<StageDoc>,
    pub terminal: TerminalDoc,
    pub ledger: Vec<LedgerDoc>,
    pub forced_zeros: Vec<String>,
    pub final_interval: IntervalDoc,
    pub bound: usize,
}

impl CertificateDoc {
    pub fn from_certificate(family: &FamilySpec, c: &BoundCertificate) -> Self {
        CertificateDoc {
            version: CERTIFICATE_VERSION,
            family: family.id.name(),
            n: family.n,
            chart: c.chart.name().to_string(),
            interval: IntervalDoc::from_interval(&c.interval),
            stages: c
                .stages
                .iter()
                .map(|s| StageDoc {
                    m: s.m,
                    p: s.p,
                    distinct: s.distinct,
                    premultiplier: clearing_doc(&s.stage.premultiplier),
                    divisor: clearing_doc(&s.stage.divisor),
                    justification: s.justification.clone(),
                    output_digests: s.outputs.iter().map(digest).collect(),
                })
                .collect(),
            terminal: TerminalDoc {
                grade: c.terminal.grade.name().to_string(),
                mu: c.terminal.mu,
                norm_degree: c.terminal.norm_degree,
                justification: c.terminal.justification.clone(),
            },
            ledger: c
                .ledger
                .iter()
                .map(|e| LedgerDoc {
                    stage: e.stage,
                    m: e.m,
                    p: e.p,
                    lambda_output: e.lambda_output,
                    lambda_input: e.lambda_input,
                })
                .collect(),
            forced_zeros: c.forced_zeros.iter().map(ToString::to_string).collect(),
            final_interval: IntervalDoc::from_interval(&c.final_interval),
            bound: c.bound,
        }
    }

    /// `μ + Σ (m·p + m) − #forced` from the stage records.
    pub fn recompute(&self) -> usize {
        let total = self.terminal.mu + self.stages.iter().map(|s| s.m as usize * (s.p + 1)).sum::<usize>();
        total.saturating_sub(self.forced_zeros.len())
    }

    /// Problems that make the stated bound untrustworthy.
    pub fn audit(&self) -> Vec<String> {
        let mut out = Vec::new();
        if self.version != CERTIFICATE_VERSION {
            out.push(format!("unsupported certificate version {}", self.version));
        }
        if self.recompute() != self.bound {
            out.push(format!("stated bound {} but the stages give {}", self.bound, self.recompute()));
        }
        if self.ledger.len() != self.stages.len() {
            out.push(format!("{} ledger entries for {} stages", self.ledger.len(), self.stages.len()));
        }
        let mut lambda = self.terminal.mu;
        for (entry, stage) in self.ledger.iter().rev().zip(self.stages.iter().rev()) {
            let next = lambda + stage.m as usize * (stage.p + 1);
            if entry.lambda_output != lambda || entry.lambda_input != next || entry.m != stage.m || entry.p != stage.p {
                out.push(format!("ledger entry for stage {} does not add up", entry.stage + 1));
            }
            lambda = next;
        }
        out
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroDoc {
    pub lo: f64,
    pub hi: f64,
    pub odd: bool,
    pub multiplicity: u32,
    pub flagged: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ZeroReportDoc {
    pub interval: IntervalDoc,
    pub searched: (f64, f64),
    pub eps: f64,
    pub count: usize,
    pub zeros: Vec<ZeroDoc>,
    pub notes: Vec<String>,
    pub inconclusive: bool,
}

impl ZeroReportDoc {
    pub fn from_report(r: &ZeroReport) -> Self {
        ZeroReportDoc {
            interval: IntervalDoc::from_interval(&r.interval),
            searched: r.searched,
            eps: r.eps,
            count: r.count(),
            zeros: r
                .zeros
                .iter()
                .map(|z| ZeroDoc { lo: z.lo, hi: z.hi, odd: z.odd, multiplicity: z.multiplicity, flagged: z.flagged })
                .collect(),
            notes: r.notes.clone(),
            inconclusive: r.inconclusive,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FitReportDoc {
    pub basis: String,
    pub labels: Vec<String>,
    pub samples: usize,
    pub coefficients: Vec<f64>,
    pub relative_residual: f64,
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub condition: f64,
    pub rank_deficient: bool,
}

impl FitReportDoc {
    pub fn from_report(r: &FitReport) -> Self {
        FitReportDoc {
            basis: r.basis.clone(),
            labels: r.labels.clone(),
            samples: r.h.len(),
            coefficients: r.coefficients.clone(),
            relative_residual: r.relative_residual,
            singular_values: r.singular_values.clone(),
            rank: r.rank,
            condition: r.condition,
            rank_deficient: r.rank_deficient(),
        }
    }
}

/// Perturbation polynomial as `[[i, j, coefficient], ...]` for `x^i y^j`.
pub type PolyTable = Vec<(u32, u32, f64)>;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SystemDoc {
    pub version: u32,
    pub id: String,
    pub n: u32,
    /// Per-zone `λ_k` (WHs only).
    #[serde(default = "default_lambda")]
    pub lambda: [f64; 4],
    /// Per-zone `w_k` (WHs only).
    #[serde(default = "default_lambda")]
    pub w: [f64; 4],
    /// Per-zone weights of the arc integrals.
    #[serde(default = "default_lambda")]
    pub weights: [f64; 4],
    pub p: [PolyTable; 4],
    pub q: [PolyTable; 4],
}

fn default_lambda() -> [f64; 4] {
    [1.0; 4]
}

fn table(p: &BivariatePoly) -> PolyTable {
    p.terms.iter().map(|(&(i, j), &c)| (i, j, c)).collect()
}

fn from_table(t: &PolyTable) -> BivariatePoly {
    let mut p = BivariatePoly::zero();
    for &(i, j, c) in t {
        p.set(i, j, c);
    }
    p
}

impl SystemDoc {
    pub fn from_system(s: &PiecewiseSystem) -> Self {
        SystemDoc {
            version: SYSTEM_VERSION,
            id: s.id.name(),
            n: s.n,
            lambda: s.lambda,
            w: s.w,
            weights: s.weights,
            p: s.p.each_ref().map(table),
            q: s.q.each_ref().map(table),
        }
    }

    pub fn to_system(&self) -> Result<PiecewiseSystem, FormatError> {
        if self.version != SYSTEM_VERSION {
            return Err(bad(format!("unsupported system version {}", self.version)));
        }
        let id = SystemId::from_name(&self.id).ok_or_else(|| bad(format!("unknown system {:?}", self.id)))?;
        let mut s = PiecewiseSystem::new(id, self.n);
        s.lambda = self.lambda;
        s.w = self.w;
        s.weights = self.weights;
        s.p = self.p.each_ref().map(from_table);
        s.q = self.q.each_ref().map(from_table);
        s.validate().map_err(|e| bad(e.to_string()))?;
        Ok(s)
    }
}

/// `x` with 17 significant digits, the shortest width that always
/// round-trips an `f64`.
pub fn float17(x: f64) -> String {
    if x.is_finite() {
        format!("{:.16e}", x)
    } else {
        x.to_string()
    }
}

/// CSV writer with an optional leading comment line.
pub fn csv_writer<W: Write>(mut out: W, header_comment: Option<&str>) -> std::io::Result<csv::Writer<W>> {
    if let Some(c) = header_comment {
        writeln!(out, "# {c}")?;
    }
    Ok(csv::Writer::from_writer(out))
}

#[cfg(test)]
mod tests {
    use super::*;
    use melnikov_core::instances::{build, sample, SampleConfig};

    #[test]
    fn expressions_round_trip_bit_exactly() {
        for id in FamilyId::ALL {
            let n = if id == FamilyId::Yruh2Low { 2 } else { 3 };
            let spec = sample(&FamilySpec::new(id, n).unwrap(), 5, &SampleConfig::default());
            let e = build(&spec).unwrap().differentiate();
            let text = expression_json(&e);
            let back = parse_expression(&text).unwrap();
            assert_eq!(back, e, "{id}");
            assert_eq!(expression_json(&back), text);
        }
    }

    #[test]
    fn surds_survive() {
        let e = Expression::constant(Chart::PosAxis, Scalar::new(Rational::from_integer(3.into()), Rational::new(1.into(), 2.into())));
        let text = expression_json(&e);
        assert!(text.contains("\"sqrt2\":\"1/2\""), "{text}");
        assert_eq!(parse_expression(&text).unwrap(), e);
    }

    #[test]
    fn instances_round_trip() {
        let spec = sample(&FamilySpec::new(FamilyId::Ruh2Neg, 2).unwrap(), 9, &SampleConfig::default());
        let doc = InstanceDoc::from_spec(&spec);
        let text = serde_json::to_string(&doc).unwrap();
        let back: InstanceDoc = serde_json::from_str(&text).unwrap();
        let spec2 = back.to_spec().unwrap();
        assert_eq!(build(&spec2).unwrap(), build(&spec).unwrap());
    }

    #[test]
    fn corrupted_bound_fails_audit() {
        let family = FamilySpec::new(FamilyId::Whs(4), 2).unwrap();
        let cert = melnikov_core::instances::certify_family(&family).unwrap();
        let mut doc = CertificateDoc::from_certificate(&family, &cert);
        assert!(doc.audit().is_empty(), "{:?}", doc.audit());
        doc.bound -= 1;
        assert!(!doc.audit().is_empty());
    }

    #[test]
    fn systems_round_trip() {
        let s = PiecewiseSystem::random(SystemId::Whs(2), 3, 4);
        let doc = SystemDoc::from_system(&s);
        let text = serde_json::to_string(&doc).unwrap();
        let back: SystemDoc = serde_json::from_str(&text).unwrap();
        assert_eq!(back.to_system().unwrap(), s);
    }

    #[test]
    fn seventeen_digits() {
        assert_eq!(float17(0.1), "1.0000000000000001e-1");
        assert_eq!(float17(0.1).parse::<f64>().unwrap(), 0.1);
    }
}
