//! Numerical first-order Melnikov functions along piecewise level curves,
//! and least-squares fits of sampled values against symbolic bases.

use alloc::collections::BTreeMap;
use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;
use core::f64::consts::{FRAC_PI_2, PI, SQRT_2};

use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::eval::CompiledExpression;
use crate::instances::BasisElement;

/// Which unperturbed system the perturbation is attached to.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SystemId {
    /// Quadrant-switched system; zones `1..=k` carry hyperbolic Hamiltonians,
    /// the remaining zones carry circular ones.
    Whs(u8),
    Ruh2,
    Yruh2,
}

impl SystemId {
    pub fn name(self) -> String {
        match self {
            SystemId::Whs(k) => format!("WHs-case-{k}"),
            SystemId::Ruh2 => "ruh2".into(),
            SystemId::Yruh2 => "yruh2".into(),
        }
    }

    pub fn from_name(s: &str) -> Option<Self> {
        match s {
            "ruh2" => Some(SystemId::Ruh2),
            "yruh2" => Some(SystemId::Yruh2),
            _ => {
                let k: u8 = s.strip_prefix("WHs-case-")?.parse().ok()?;
                (1..=4).contains(&k).then_some(SystemId::Whs(k))
            }
        }
    }

    /// Whether `h` labels a periodic orbit of the unperturbed system.
    pub fn admits(self, h: f64) -> bool {
        if !h.is_finite() {
            return false;
        }
        match self {
            SystemId::Whs(_) | SystemId::Yruh2 => h > 0.0 && h < 1.0,
            SystemId::Ruh2 => h > 0.0 || h < -1.0,
        }
    }
}

/// Sparse bivariate polynomial with `f64` coefficients, keyed by `(i, j)`
/// for the monomial `x^i y^j`.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct BivariatePoly {
    pub terms: BTreeMap<(u32, u32), f64>,
}

impl BivariatePoly {
    pub fn zero() -> Self {
        Self::default()
    }

    pub fn monomial(i: u32, j: u32, c: f64) -> Self {
        let mut p = Self::zero();
        p.set(i, j, c);
        p
    }

    pub fn set(&mut self, i: u32, j: u32, c: f64) {
        if c == 0.0 {
            self.terms.remove(&(i, j));
        } else {
            self.terms.insert((i, j), c);
        }
    }

    pub fn is_zero(&self) -> bool {
        self.terms.is_empty()
    }

    /// Total degree; `None` for the zero polynomial.
    pub fn degree(&self) -> Option<u32> {
        self.terms.keys().map(|&(i, j)| i + j).max()
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        self.eval_with_magnitude(x, y).0
    }

    /// Value together with the sum of absolute term values, which bounds
    /// the rounding error of the evaluation up to a small multiple of eps.
    pub fn eval_with_magnitude(&self, x: f64, y: f64) -> (f64, f64) {
        let (mut v, mut m) = (0.0, 0.0);
        for (&(i, j), &c) in &self.terms {
            let t = c * libm::pow(x, f64::from(i)) * libm::pow(y, f64::from(j));
            v += t;
            m += t.abs();
        }
        (v, m)
    }
}

/// A perturbed piecewise system
/// `x' = P_k(x, y) + eps p_k(x, y)`, `y' = Q_k(x, y) + eps q_k(x, y)` on zone `k`.
///
/// Zones are indexed `0..4`. For WHs they are the open quadrants in
/// counter-clockwise order starting at `x > 0, y > 0`; for ruh2 and yruh2
/// they are `x > 1, y > 0`, `x > 1, y < 0`, `x < 1, y < 0`, `x < 1, y > 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PiecewiseSystem {
    pub id: SystemId,
    pub n: u32,
    /// Hyperbolic parameters `lambda_k` (WHs only).
    pub lambda: [f64; 4],
    /// Circular parameters `w_k` (WHs only).
    pub w: [f64; 4],
    /// Cross-zone assembly weights applied to the raw arc integrals.
    pub weights: [f64; 4],
    /// Horizontal perturbation per zone.
    pub p: [BivariatePoly; 4],
    /// Vertical perturbation per zone.
    pub q: [BivariatePoly; 4],
}

impl PiecewiseSystem {
    /// An unperturbed system with unit parameters and unit weights.
    pub fn new(id: SystemId, n: u32) -> Self {
        Self {
            id,
            n,
            lambda: [1.0; 4],
            w: [1.0; 4],
            weights: [1.0; 4],
            p: Default::default(),
            q: Default::default(),
        }
    }

    /// The same perturbation on every zone.
    pub fn with_uniform(mut self, p: BivariatePoly, q: BivariatePoly) -> Self {
        self.p = [p.clone(), p.clone(), p.clone(), p];
        self.q = [q.clone(), q.clone(), q.clone(), q];
        self
    }

    pub fn validate(&self) -> Result<()> {
        if let SystemId::Whs(k) = self.id {
            if !(1..=4).contains(&k) {
                return Err(Error::InvalidSpec(format!("WHs case {k} is not in 1..=4")));
            }
            for zone in 0..4 {
                let v = if self.hyperbolic(zone) { self.lambda[zone] } else { self.w[zone] };
                if !(v.is_finite() && v > 0.0) {
                    return Err(Error::InvalidSpec(format!(
                        "zone {} parameter must be positive, got {v}",
                        zone + 1
                    )));
                }
            }
        }
        for zone in 0..4 {
            for poly in [&self.p[zone], &self.q[zone]] {
                if poly.degree().is_some_and(|d| d > self.n) {
                    return Err(Error::InvalidSpec(format!(
                        "zone {} perturbation exceeds degree {}",
                        zone + 1,
                        self.n
                    )));
                }
                if poly.terms.values().any(|c| !c.is_finite()) {
                    return Err(Error::InvalidSpec("non-finite perturbation coefficient".into()));
                }
            }
            if !self.weights[zone].is_finite() {
                return Err(Error::InvalidSpec("non-finite assembly weight".into()));
            }
        }
        Ok(())
    }

    /// Seeded perturbation: every coefficient of `p_k`, `q_k` up to degree
    /// `n` drawn uniformly from `[-1, 1]`, independently per zone.
    pub fn random(id: SystemId, n: u32, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut sys = Self::new(id, n);
        for zone in 0..4 {
            for poly in [&mut sys.p[zone], &mut sys.q[zone]] {
                for d in 0..=n {
                    for i in 0..=d {
                        poly.set(i, d - i, rng.gen_range(-1.0..=1.0));
                    }
                }
            }
        }
        sys
    }

    fn hyperbolic(&self, zone: usize) -> bool {
        matches!(self.id, SystemId::Whs(k) if zone < usize::from(k))
    }

    /// Zone of a point off the switching lines.
    pub fn zone_of(&self, x: f64, y: f64) -> usize {
        match self.id {
            SystemId::Whs(_) => match (x > 0.0, y > 0.0) {
                (true, true) => 0,
                (false, true) => 1,
                (false, false) => 2,
                (true, false) => 3,
            },
            SystemId::Ruh2 | SystemId::Yruh2 => match (x > 1.0, y > 0.0) {
                (true, true) => 0,
                (true, false) => 1,
                (false, false) => 2,
                (false, true) => 3,
            },
        }
    }

    /// First integral of zone `zone`.
    pub fn first_integral(&self, zone: usize, x: f64, y: f64) -> f64 {
        match self.id {
            SystemId::Whs(_) => {
                let l = self.lambda[zone];
                if !self.hyperbolic(zone) {
                    return -0.5 * self.w[zone] * (x * x + y * y);
                }
                match zone {
                    0 => l * (x - 1.0) * (y - 1.0),
                    1 => -l * (x + 1.0) * (y - 1.0),
                    2 => l * (x + 1.0) * (y + 1.0),
                    _ => -l * (x - 1.0) * (y + 1.0),
                }
            }
            SystemId::Ruh2 => (0.5 * y * y + 0.25 * (x - 1.0) * (x - 1.0)) / x,
            SystemId::Yruh2 => (0.5 * y * y + (x - 1.0) * (x - 1.0)) / (x * x),
        }
    }

    /// Value of the first integral on the orbit labelled `h`.
    pub fn level_value(&self, zone: usize, h: f64) -> f64 {
        match self.id {
            SystemId::Whs(_) if self.hyperbolic(zone) => self.lambda[zone] * h,
            SystemId::Whs(_) => -0.5 * self.w[zone] * (1.0 - h) * (1.0 - h),
            _ => h,
        }
    }

    /// Unperturbed vector field on zone `zone`.
    pub fn vector_field(&self, zone: usize, x: f64, y: f64) -> (f64, f64) {
        match self.id {
            SystemId::Whs(_) => {
                let l = self.lambda[zone];
                if !self.hyperbolic(zone) {
                    let w = self.w[zone];
                    return (-w * y, w * x);
                }
                match zone {
                    0 => (l * (x - 1.0), -l * (y - 1.0)),
                    1 => (-l * (x + 1.0), l * (y - 1.0)),
                    2 => (l * (x + 1.0), -l * (y + 1.0)),
                    _ => (-l * (x - 1.0), l * (y + 1.0)),
                }
            }
            SystemId::Ruh2 => (SQRT_2 * x * y, SQRT_2 / 4.0 * (1.0 - x * x + 2.0 * y * y)),
            SystemId::Yruh2 => (SQRT_2 / 2.0 * x * y, SQRT_2 / 2.0 * (2.0 - 2.0 * x + y * y)),
        }
    }

    /// Integrating factor `mu` with `H_y = mu P` and `-H_x = mu Q`.
    pub fn integrating_factor(&self, x: f64) -> f64 {
        match self.id {
            SystemId::Whs(_) => 1.0,
            SystemId::Ruh2 => 1.0 / (SQRT_2 * x * x),
            SystemId::Yruh2 => SQRT_2 / (x * x * x),
        }
    }
}

/// Parametrization of one arc over `t`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum ArcShape {
    /// `(r cos t, r sin t)`.
    Circle { radius: f64 },
    /// `(c - a cos t, b sin t)`: the conic `y^2 = kappa (x - x_l)(x_r - x)`
    /// by angle, smooth through both turning points.
    Ellipse { center: f64, a: f64, b: f64 },
    /// Graph `y = y0 + s h / (x - x0)` over `x = t`.
    Hyperbola { x0: f64, y0: f64, s: f64, h: f64 },
}

impl ArcShape {
    /// Point and tangent at parameter `t`.
    pub fn point(&self, t: f64) -> (f64, f64, f64, f64) {
        match *self {
            ArcShape::Circle { radius } => {
                let (s, c) = libm::sincos(t);
                (radius * c, radius * s, -radius * s, radius * c)
            }
            ArcShape::Ellipse { center, a, b } => {
                let (s, c) = libm::sincos(t);
                (center - a * c, b * s, a * s, b * c)
            }
            ArcShape::Hyperbola { x0, y0, s, h } => {
                let d = t - x0;
                (t, y0 + s * h / d, 1.0, -s * h / (d * d))
            }
        }
    }
}

/// One arc of a level curve, traversed from `t0` to `t1`.
#[derive(Clone, Debug, PartialEq)]
pub struct Arc {
    pub zone: usize,
    pub shape: ArcShape,
    pub t0: f64,
    pub t1: f64,
    pub start: (f64, f64),
    pub end: (f64, f64),
}

impl Arc {
    fn new(zone: usize, shape: ArcShape, t0: f64, t1: f64) -> Self {
        let (x0, y0, _, _) = shape.point(t0);
        let (x1, y1, _, _) = shape.point(t1);
        Self { zone, shape, t0, t1, start: (x0, y0), end: (x1, y1) }
    }

    fn reversed(&self) -> Self {
        Self {
            zone: self.zone,
            shape: self.shape,
            t0: self.t1,
            t1: self.t0,
            start: self.end,
            end: self.start,
        }
    }
}

pub const CLOSURE_TOLERANCE: f64 = 1e-12;

/// A closed level curve split at the switching lines, with arcs ordered
/// and oriented along the unperturbed flow.
#[derive(Clone, Debug, PartialEq)]
pub struct LevelCurve {
    pub h: f64,
    pub arcs: Vec<Arc>,
}

impl LevelCurve {
    /// Largest gap between consecutive arc endpoints, wrapping around.
    pub fn closure_gap(&self) -> f64 {
        let k = self.arcs.len();
        (0..k)
            .map(|i| {
                let (a, b) = (self.arcs[i].end, self.arcs[(i + 1) % k].start);
                libm::hypot(a.0 - b.0, a.1 - b.1)
            })
            .fold(0.0, f64::max)
    }

    /// Largest distance between two sampled points of the curve.
    pub fn diameter(&self) -> f64 {
        let pts: Vec<(f64, f64)> = self
            .arcs
            .iter()
            .flat_map(|a| {
                (0..=16).map(move |i| {
                    let t = a.t0 + (a.t1 - a.t0) * f64::from(i) / 16.0;
                    let (x, y, _, _) = a.shape.point(t);
                    (x, y)
                })
            })
            .collect();
        let mut d: f64 = 0.0;
        for p in &pts {
            for q in &pts {
                d = d.max(libm::hypot(p.0 - q.0, p.1 - q.1));
            }
        }
        d
    }
}

/// Split the orbit labelled `h` into zone arcs oriented along the flow.
pub fn level_curve(system: &PiecewiseSystem, h: f64) -> Result<LevelCurve> {
    system.validate()?;
    if !system.id.admits(h) {
        return Err(Error::Geometry(format!(
            "h = {h} does not label a periodic orbit of {}",
            system.id.name()
        )));
    }
    let arcs = match system.id {
        SystemId::Whs(_) => whs_arcs(system, h),
        SystemId::Ruh2 => {
            let disc = libm::sqrt(h * h + h);
            conic_arcs(1.0 + 2.0 * h - 2.0 * disc, 1.0 + 2.0 * h + 2.0 * disc, 0.5)
        }
        SystemId::Yruh2 => {
            let s = libm::sqrt(h);
            conic_arcs(1.0 / (1.0 + s), 1.0 / (1.0 - s), 2.0 * (1.0 - h))
        }
    };
    let arcs = orient(system, arcs)?;
    let curve = LevelCurve { h, arcs };
    let gap = curve.closure_gap();
    if !(gap <= CLOSURE_TOLERANCE * (1.0 + curve.diameter())) {
        return Err(Error::Geometry(format!("level curve does not close (gap {gap:e})")));
    }
    Ok(curve)
}

fn whs_arcs(system: &PiecewiseSystem, h: f64) -> Vec<Arc> {
    let r = 1.0 - h;
    (0..4)
        .map(|zone| {
            if !system.hyperbolic(zone) {
                let t0 = FRAC_PI_2 * zone as f64;
                return Arc::new(zone, ArcShape::Circle { radius: r }, t0, t0 + FRAC_PI_2);
            }
            // Counter-clockwise geometric order, matching the circle arcs.
            let (x0, y0, s, t0, t1) = match zone {
                0 => (1.0, 1.0, 1.0, r, 0.0),
                1 => (-1.0, 1.0, -1.0, 0.0, -r),
                2 => (-1.0, -1.0, 1.0, -r, 0.0),
                _ => (1.0, -1.0, -1.0, 0.0, r),
            };
            let mut arc = Arc::new(zone, ArcShape::Hyperbola { x0, y0, s, h }, t0, t1);
            // Pin the switching-line endpoints exactly.
            arc.start = snap(arc.start);
            arc.end = snap(arc.end);
            arc
        })
        .collect()
}

fn snap(p: (f64, f64)) -> (f64, f64) {
    let z = |v: f64| if v.abs() < 1e-15 { 0.0 } else { v };
    (z(p.0), z(p.1))
}

/// Arcs of `y^2 = kappa (x - xl)(xr - x)` split by `x = 1` and `y = 0`, in
/// order of increasing angle.
fn conic_arcs(xl: f64, xr: f64, kappa: f64) -> Vec<Arc> {
    let a = 0.5 * (xr - xl);
    let center = 0.5 * (xl + xr);
    let shape = ArcShape::Ellipse { center, a, b: libm::sqrt(kappa) * a };
    let (upper, lower) = if xr < 1.0 { (3, 2) } else { (0, 1) };
    if xr < 1.0 || xl > 1.0 {
        return alloc::vec![Arc::new(upper, shape, 0.0, PI), Arc::new(lower, shape, PI, 2.0 * PI)];
    }
    let cross = libm::acos((center - 1.0) / a);
    alloc::vec![
        Arc::new(3, shape, 0.0, cross),
        Arc::new(0, shape, cross, PI),
        Arc::new(1, shape, PI, 2.0 * PI - cross),
        Arc::new(2, shape, 2.0 * PI - cross, 2.0 * PI),
    ]
}

/// Orient every arc along the unperturbed flow of its zone; arcs given in a
/// consistent geometric order must all agree or all disagree with it.
fn orient(system: &PiecewiseSystem, arcs: Vec<Arc>) -> Result<Vec<Arc>> {
    let mut forward = 0;
    for arc in &arcs {
        let t = 0.5 * (arc.t0 + arc.t1);
        let (x, y, dx, dy) = arc.shape.point(t);
        let (u, v) = system.vector_field(arc.zone, x, y);
        let dot = (u * dx + v * dy) * (arc.t1 - arc.t0).signum();
        if dot > 0.0 {
            forward += 1;
        } else if !(dot < 0.0) {
            return Err(Error::Geometry(format!("unperturbed flow is not transverse on arc in zone {}", arc.zone + 1)));
        }
    }
    if forward == arcs.len() {
        Ok(arcs)
    } else if forward == 0 {
        Ok(arcs.iter().rev().map(Arc::reversed).collect())
    } else {
        Err(Error::Geometry("unperturbed flow does not circulate along the level curve".into()))
    }
}

/// Traversal direction relative to the unperturbed flow.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum Orientation {
    #[default]
    Flow,
    Reversed,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QuadratureConfig {
    pub rel_tol: f64,
    /// Absolute floor so that arcs with vanishing integrals terminate.
    pub abs_tol: f64,
    pub max_depth: u32,
    /// Number of Gauss-Legendre nodes per panel.
    pub nodes: usize,
    pub orientation: Orientation,
}

impl Default for QuadratureConfig {
    fn default() -> Self {
        Self { rel_tol: 1e-10, abs_tol: 1e-14, max_depth: 30, nodes: 10, orientation: Orientation::Flow }
    }
}

/// Gauss-Legendre nodes and weights on `[-1, 1]`.
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        let n = n.max(1);
        let mut nodes = alloc::vec![0.0; n];
        let mut weights = alloc::vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = libm::cos(PI * (i as f64 + 0.75) / (n as f64 + 0.5));
            let mut dp = 1.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d.is_finite() {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn integrate(&self, f: &mut impl FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
        self.integrate_with_magnitude(&mut |t| (f(t), 0.0), a, b).0
    }

    /// Integrals of `f` and of a magnitude `g >= |f|` from the same nodes,
    /// where `f` returns the pair `(f, g)`.
    pub fn integrate_with_magnitude(&self, f: &mut impl FnMut(f64) -> (f64, f64), a: f64, b: f64) -> (f64, f64) {
        let (mid, half) = (0.5 * (a + b), 0.5 * (b - a));
        let (mut sum, mut abs) = (0.0, 0.0);
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            let (v, g) = f(mid + half * x);
            sum += w * v;
            abs += w * g.max(v.abs());
        }
        (half * sum, half.abs() * abs)
    }
}

/// `P_n(x)` and `P_n'(x)` by the three-term recurrence.
fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let k = k as f64;
        let p2 = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    (p1, n as f64 * (x * p1 - p0) / (x * x - 1.0))
}

/// Panels whose error is within this many ulps of their magnitude integral
/// are accepted: cancellation leaves no more accuracy to gain.
const ROUNDOFF_FACTOR: f64 = 100.0;

/// Integral and error estimate; `Err` carries the unresolved error.
fn adaptive(
    rule: &GaussLegendre,
    f: &mut impl FnMut(f64) -> (f64, f64),
    a: f64,
    b: f64,
    cfg: &QuadratureConfig,
) -> core::result::Result<(f64, f64), f64> {
    let (whole, magnitude) = rule.integrate_with_magnitude(f, a, b);
    if !whole.is_finite() {
        return Err(f64::INFINITY);
    }
    let tol = (cfg.rel_tol * whole.abs()).max(ROUNDOFF_FACTOR * f64::EPSILON * magnitude).max(cfg.abs_tol);
    let width = (b - a).abs();
    let (mut total, mut err, mut refined_magnitude) = (0.0, 0.0, 0.0);
    let mut stack = alloc::vec![(a, b, whole, 0u32)];
    while let Some((lo, hi, coarse, depth)) = stack.pop() {
        let mid = 0.5 * (lo + hi);
        let (left, left_abs) = rule.integrate_with_magnitude(f, lo, mid);
        let (right, right_abs) = rule.integrate_with_magnitude(f, mid, hi);
        let fine = left + right;
        if !fine.is_finite() {
            return Err(f64::INFINITY);
        }
        let diff = (fine - coarse).abs();
        let share = (tol * (hi - lo).abs() / width).max(ROUNDOFF_FACTOR * f64::EPSILON * (left_abs + right_abs));
        // Panels at the depth cap are kept; only the accumulated error decides.
        if diff <= share || depth >= cfg.max_depth {
            total += fine;
            refined_magnitude += left_abs + right_abs;
            err += diff;
        } else {
            stack.push((mid, hi, right, depth + 1));
            stack.push((lo, mid, left, depth + 1));
        }
    }
    let tol = (cfg.rel_tol * total.abs()).max(ROUNDOFF_FACTOR * f64::EPSILON * refined_magnitude).max(cfg.abs_tol);
    if err > tol {
        Err(err)
    } else {
        Ok((total, err))
    }
}

/// Raw integral over one arc, before weighting.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ArcIntegral {
    pub zone: usize,
    pub value: f64,
    pub error: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MelnikovValue {
    pub h: f64,
    pub value: f64,
    pub error: f64,
    pub arcs: Vec<ArcIntegral>,
}

/// Integral of `mu (q dx - p dy)` over one arc, oriented along the arc.
pub fn arc_integral(
    system: &PiecewiseSystem,
    arc: &Arc,
    rule: &GaussLegendre,
    cfg: &QuadratureConfig,
) -> core::result::Result<(f64, f64), f64> {
    let (p, q) = (&system.p[arc.zone], &system.q[arc.zone]);
    if p.is_zero() && q.is_zero() {
        return Ok((0.0, 0.0));
    }
    let mut f = |t: f64| {
        let (x, y, dx, dy) = arc.shape.point(t);
        let mu = system.integrating_factor(x);
        let ((qv, qm), (pv, pm)) = (q.eval_with_magnitude(x, y), p.eval_with_magnitude(x, y));
        (mu * (qv * dx - pv * dy), (mu * (qm * dx.abs() + pm * dy.abs())).abs())
    };
    adaptive(rule, &mut f, arc.t0, arc.t1, cfg)
}

/// First-order Melnikov function at `h`: weighted sum of the arc integrals.
pub fn melnikov_numeric(system: &PiecewiseSystem, h: f64, cfg: &QuadratureConfig) -> Result<MelnikovValue> {
    let curve = level_curve(system, h)?;
    let rule = GaussLegendre::new(cfg.nodes);
    melnikov_on_curve(system, &curve, &rule, cfg)
}

pub fn melnikov_on_curve(
    system: &PiecewiseSystem,
    curve: &LevelCurve,
    rule: &GaussLegendre,
    cfg: &QuadratureConfig,
) -> Result<MelnikovValue> {
    let sign = match cfg.orientation {
        Orientation::Flow => 1.0,
        Orientation::Reversed => -1.0,
    };
    let mut arcs = Vec::with_capacity(curve.arcs.len());
    let (mut value, mut error) = (0.0, 0.0);
    for (i, arc) in curve.arcs.iter().enumerate() {
        let (v, e) = arc_integral(system, arc, rule, cfg).map_err(|error| Error::Quadrature { arc: i, error })?;
        let v = sign * v;
        let wt = system.weights[arc.zone];
        value += wt * v;
        error += wt.abs() * e;
        arcs.push(ArcIntegral { zone: arc.zone, value: v, error: e });
    }
    Ok(MelnikovValue { h: curve.h, value, error, arcs })
}

#[derive(Clone, Debug, PartialEq)]
pub struct FitReport {
    pub basis: String,
    pub labels: Vec<String>,
    pub h: Vec<f64>,
    pub coefficients: Vec<f64>,
    /// `|A c - m| / |m|`, or the absolute residual norm when `m = 0`.
    pub relative_residual: f64,
    /// Singular values of the column-scaled design matrix, descending.
    pub singular_values: Vec<f64>,
    pub rank: usize,
    pub condition: f64,
}

impl FitReport {
    pub fn rank_deficient(&self) -> bool {
        self.rank < self.labels.len()
    }
}

/// Relative cutoff below which scaled singular values count as zero.
pub const RANK_TOLERANCE: f64 = 1e-12;

/// Least-squares fit of `samples` by the span of `basis`, via SVD of the
/// design matrix with unit-norm columns.
pub fn fit_basis(descriptor: &str, samples: &[(f64, f64)], basis: &[BasisElement]) -> Result<FitReport> {
    let (m, k) = (samples.len(), basis.len());
    if k == 0 {
        return Err(Error::Fit("empty basis".into()));
    }
    if m < 2 * k {
        return Err(Error::Fit(format!("{m} samples for {k} basis functions; need at least {}", 2 * k)));
    }
    let compiled: Vec<CompiledExpression> = basis.iter().map(|b| CompiledExpression::new(&b.expr)).collect();
    let mut a = DMatrix::<f64>::zeros(m, k);
    for (i, &(h, _)) in samples.iter().enumerate() {
        for (j, c) in compiled.iter().enumerate() {
            let v = c.value(h);
            if !v.is_finite() {
                return Err(Error::Fit(format!("basis function {} is not finite at h = {h}", basis[j].label)));
            }
            a[(i, j)] = v;
        }
    }
    let b = DVector::from_iterator(m, samples.iter().map(|s| s.1));
    if b.iter().any(|v| !v.is_finite()) {
        return Err(Error::Fit("non-finite sample value".into()));
    }
    let scale: Vec<f64> = (0..k)
        .map(|j| {
            let n = a.column(j).norm();
            if n > 0.0 { n } else { 1.0 }
        })
        .collect();
    for (j, s) in scale.iter().enumerate() {
        a.column_mut(j).scale_mut(1.0 / s);
    }
    let svd = a.clone().svd(true, true);
    let mut sv: Vec<f64> = svd.singular_values.iter().copied().collect();
    sv.sort_by(|x, y| y.total_cmp(x));
    let cutoff = sv[0] * RANK_TOLERANCE;
    let rank = sv.iter().filter(|&&s| s > cutoff).count();
    let y = svd.solve(&b, cutoff).map_err(|e| Error::Fit(e.into()))?;
    let residual = (&a * &y - &b).norm();
    let bn = b.norm();
    let smallest = sv.iter().rev().copied().find(|&s| s > cutoff).unwrap_or(0.0);
    Ok(FitReport {
        basis: descriptor.into(),
        labels: basis.iter().map(|b| b.label.clone()).collect(),
        h: samples.iter().map(|s| s.0).collect(),
        coefficients: y.iter().zip(&scale).map(|(c, s)| c / s).collect(),
        relative_residual: if bn > 0.0 { residual / bn } else { residual },
        condition: if smallest > 0.0 { sv[0] / smallest } else { f64::INFINITY },
        singular_values: sv,
        rank,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::instances::{basis, FamilyId, FamilySpec};
    use num_rational::Ratio;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol * (1.0 + a.abs().max(b.abs()))
    }

    #[test]
    fn whs_case_one_endpoints() {
        let sys = PiecewiseSystem::new(SystemId::Whs(1), 2);
        let c = level_curve(&sys, 0.5).unwrap();
        let hyp = c.arcs.iter().find(|a| a.zone == 0).unwrap();
        let mut ends = [hyp.start, hyp.end];
        ends.sort_by(|a, b| a.0.total_cmp(&b.0));
        assert_eq!(ends, [(0.0, 0.5), (0.5, 0.0)]);
        for a in c.arcs.iter().filter(|a| a.zone != 0) {
            assert_eq!(a.shape, ArcShape::Circle { radius: 0.5 });
        }
        assert!(c.closure_gap() < CLOSURE_TOLERANCE);
    }

    #[test]
    fn yruh2_crossings() {
        let sys = PiecewiseSystem::new(SystemId::Yruh2, 3);
        let c = level_curve(&sys, 0.25).unwrap();
        let mut xs: Vec<f64> = c
            .arcs
            .iter()
            .flat_map(|a| [a.start, a.end])
            .filter(|p| p.1.abs() < 1e-14)
            .map(|p| p.0)
            .collect();
        xs.sort_by(f64::total_cmp);
        xs.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
        assert_eq!(xs.len(), 2);
        assert!(close(xs[0], 2.0 / 3.0, 1e-14) && close(xs[1], 2.0, 1e-14));
    }

    #[test]
    fn arcs_lie_on_level_and_in_zone() {
        let cases = [
            (SystemId::Whs(1), 0.3),
            (SystemId::Whs(2), 0.7),
            (SystemId::Whs(3), 0.05),
            (SystemId::Whs(4), 0.5),
            (SystemId::Ruh2, 0.4),
            (SystemId::Ruh2, 15.0),
            (SystemId::Ruh2, -3.0),
            (SystemId::Yruh2, 0.6),
        ];
        for (id, h) in cases {
            let mut sys = PiecewiseSystem::new(id, 1);
            sys.lambda = [1.5, 0.5, 2.0, 1.0];
            sys.w = [0.7, 1.1, 3.0, 0.2];
            let c = level_curve(&sys, h).unwrap();
            assert!(c.closure_gap() < CLOSURE_TOLERANCE, "{id:?} {h}");
            for a in &c.arcs {
                for i in 1..20 {
                    let t = a.t0 + (a.t1 - a.t0) * f64::from(i) / 20.0;
                    let (x, y, _, _) = a.shape.point(t);
                    assert_eq!(sys.zone_of(x, y), a.zone);
                    let level = sys.level_value(a.zone, h);
                    assert!(close(sys.first_integral(a.zone, x, y), level, 1e-12), "{id:?} {h}");
                }
                for (x, y) in [a.start, a.end] {
                    let on_line = match id {
                        SystemId::Whs(_) => x.abs() < 1e-12 || y.abs() < 1e-12,
                        _ => (x - 1.0).abs() < 1e-12 || y.abs() < 1e-12,
                    };
                    assert!(on_line, "{id:?} {h} endpoint ({x}, {y})");
                }
            }
        }
    }

    #[test]
    fn ruh2_crosses_x_equal_one_at_root_two_h() {
        let sys = PiecewiseSystem::new(SystemId::Ruh2, 1);
        for h in [0.1, 1.0, 7.5] {
            let c = level_curve(&sys, h).unwrap();
            let mut ys: Vec<f64> = c
                .arcs
                .iter()
                .flat_map(|a| [a.start, a.end])
                .filter(|p| (p.0 - 1.0).abs() < 1e-12)
                .map(|p| p.1)
                .collect();
            ys.sort_by(f64::total_cmp);
            ys.dedup_by(|a, b| (*a - *b).abs() < 1e-12);
            let r = libm::sqrt(2.0 * h);
            assert!(close(ys[0], -r, 1e-13) && close(ys[1], r, 1e-13));
        }
    }

    #[test]
    fn whs_curve_shrinks_to_origin() {
        let sys = PiecewiseSystem::new(SystemId::Whs(2), 2);
        let d: Vec<f64> = [0.9, 0.99, 0.999].iter().map(|&h| level_curve(&sys, h).unwrap().diameter()).collect();
        assert!(d[0] > d[1] && d[1] > d[2] && d[2] < 3e-3);
    }

    #[test]
    fn rejects_inadmissible_levels() {
        for (id, h) in [(SystemId::Whs(1), 1.0), (SystemId::Ruh2, -0.5), (SystemId::Yruh2, 1.2), (SystemId::Ruh2, f64::NAN)] {
            assert!(matches!(level_curve(&PiecewiseSystem::new(id, 1), h), Err(Error::Geometry(_))));
        }
        let mut sys = PiecewiseSystem::new(SystemId::Whs(1), 1);
        sys.lambda[0] = 0.0;
        assert!(level_curve(&sys, 0.5).is_err());
        let sys = PiecewiseSystem::new(SystemId::Ruh2, 1).with_uniform(BivariatePoly::monomial(2, 0, 1.0), BivariatePoly::zero());
        assert!(matches!(sys.validate(), Err(Error::InvalidSpec(_))));
    }

    type Biv = BTreeMap<(u32, u32), Ratio<i64>>;

    fn biv(terms: &[(u32, u32, i64)]) -> Biv {
        let mut p = Biv::new();
        for &(i, j, c) in terms {
            *p.entry((i, j)).or_insert(Ratio::from_integer(0)) += Ratio::from_integer(c);
        }
        p.retain(|_, c| *c != Ratio::from_integer(0));
        p
    }

    fn add(a: &Biv, b: &Biv, sb: i64) -> Biv {
        let mut out = a.clone();
        for (k, c) in b {
            *out.entry(*k).or_insert(Ratio::from_integer(0)) += *c * sb;
        }
        out.retain(|_, c| *c != Ratio::from_integer(0));
        out
    }

    fn mul(a: &Biv, b: &Biv) -> Biv {
        let mut out = Biv::new();
        for (&(i, j), c) in a {
            for (&(k, l), d) in b {
                *out.entry((i + k, j + l)).or_insert(Ratio::from_integer(0)) += *c * *d;
            }
        }
        out.retain(|_, c| *c != Ratio::from_integer(0));
        out
    }

    fn dx(a: &Biv) -> Biv {
        a.iter().filter(|((i, _), _)| *i > 0).map(|(&(i, j), c)| ((i - 1, j), *c * i64::from(i))).collect()
    }

    fn dy(a: &Biv) -> Biv {
        a.iter().filter(|((_, j), _)| *j > 0).map(|(&(i, j), c)| ((i, j - 1), *c * i64::from(j))).collect()
    }

    /// With `H = N / (c x^e)`, `P = s P0`, `Q = s Q0` and `mu = 1 / (s x^f)`,
    /// the identities `H_y = mu P`, `-H_x = mu Q` reduce to polynomial ones
    /// after clearing `c x^(e+1)`, with the irrational `s` cancelling.
    fn integrating_factor_identities(n: &Biv, c: i64, e: u32, f: u32, p0: &Biv, q0: &Biv) {
        let x = |k: u32| biv(&[(k, 0, 1)]);
        let cst = |k: i64| biv(&[(0, 0, k)]);
        // H_y c x^(e+1) = x N_y ; mu P c x^(e+1) = c x^(e+1-f) P0.
        assert_eq!(mul(&x(1), &dy(n)), mul(&cst(c), &mul(&x(e + 1 - f), p0)));
        // -H_x c x^(e+1) = e N - x N_x ; mu Q c x^(e+1) = c x^(e+1-f) Q0.
        assert_eq!(add(&mul(&cst(i64::from(e)), n), &mul(&x(1), &dx(n)), -1), mul(&cst(c), &mul(&x(e + 1 - f), q0)));
    }

    #[test]
    fn integrating_factors_are_exact() {
        // ruh2: H = (2y^2 + x^2 - 2x + 1) / (4x), P = sqrt2 (xy),
        // Q = sqrt2 (1 - x^2 + 2y^2) / 4, mu = 1 / (sqrt2 x^2).
        let n = biv(&[(0, 2, 2), (2, 0, 1), (1, 0, -2), (0, 0, 1)]);
        let p0 = biv(&[(1, 1, 1)]);
        let q4 = biv(&[(0, 0, 1), (2, 0, -1), (0, 2, 2)]);
        // Q0 = q4 / 4, so compare against c = 4 with Q0 scaled back by 4.
        let q0: Biv = q4.iter().map(|(k, v)| (*k, *v / 4)).collect();
        integrating_factor_identities(&n, 4, 1, 2, &p0, &q0);
        // yruh2: H = (y^2 + 2(x-1)^2) / (2x^2), P = (sqrt2/2) xy,
        // Q = (sqrt2/2)(2 - 2x + y^2), mu = sqrt2 / x^3 = 1 / ((sqrt2/2) x^3).
        let n = biv(&[(0, 2, 1), (2, 0, 2), (1, 0, -4), (0, 0, 2)]);
        let p0 = biv(&[(1, 1, 1)]);
        let q0 = biv(&[(0, 0, 2), (1, 0, -2), (0, 2, 1)]);
        integrating_factor_identities(&n, 2, 2, 3, &p0, &q0);
    }

    #[test]
    fn integrating_factor_matches_numeric_gradient() {
        for id in [SystemId::Ruh2, SystemId::Yruh2] {
            let sys = PiecewiseSystem::new(id, 1);
            for &(x, y) in &[(0.3, 0.7), (1.7, -0.4), (2.5, 1.9), (-0.8, 0.2)] {
                let step = 1e-6;
                let z = sys.zone_of(x, y);
                let hx = (sys.first_integral(z, x + step, y) - sys.first_integral(z, x - step, y)) / (2.0 * step);
                let hy = (sys.first_integral(z, x, y + step) - sys.first_integral(z, x, y - step)) / (2.0 * step);
                let (p, q) = sys.vector_field(z, x, y);
                let mu = sys.integrating_factor(x);
                assert!(close(hy, mu * p, 1e-8) && close(-hx, mu * q, 1e-8), "{id:?} ({x}, {y})");
            }
        }
    }

    #[test]
    fn gauss_legendre_is_exact_for_degree_2n_minus_1() {
        let rule = GaussLegendre::new(10);
        let v = rule.integrate(&mut |x: f64| libm::pow(x, 19.0) + libm::pow(x, 18.0), -1.0, 1.0);
        assert!(close(v, 2.0 / 19.0, 1e-14));
        let w: f64 = rule.weights.iter().sum();
        assert!(close(w, 2.0, 1e-15));
    }

    #[test]
    fn zero_perturbation_vanishes() {
        for (id, h) in [(SystemId::Whs(3), 0.4), (SystemId::Ruh2, 2.0), (SystemId::Yruh2, 0.3)] {
            let m = melnikov_numeric(&PiecewiseSystem::new(id, 2), h, &QuadratureConfig::default()).unwrap();
            assert_eq!(m.value, 0.0);
        }
    }

    #[test]
    fn exact_form_integrates_to_zero() {
        let sys = PiecewiseSystem::new(SystemId::Ruh2, 1).with_uniform(BivariatePoly::zero(), BivariatePoly::monomial(1, 0, 1.0));
        for h in [0.05, 1.0, 20.0, -1.5, -10.0] {
            let m = melnikov_numeric(&sys, h, &QuadratureConfig::default()).unwrap();
            let scale: f64 = m.arcs.iter().map(|a| a.value.abs()).sum();
            assert!(scale > 0.1, "arcs should not vanish individually");
            assert!(m.value.abs() < 1e-10 * scale, "h = {h}: {}", m.value);
        }
    }

    #[test]
    fn refinement_levels_agree() {
        let sys = PiecewiseSystem::new(SystemId::Ruh2, 0).with_uniform(BivariatePoly::monomial(0, 0, 1.0), BivariatePoly::zero());
        let coarse = QuadratureConfig { rel_tol: 1e-9, nodes: 6, ..Default::default() };
        let fine = QuadratureConfig { rel_tol: 1e-13, nodes: 20, ..Default::default() };
        let a = melnikov_numeric(&sys, 1.0, &coarse).unwrap().value;
        let b = melnikov_numeric(&sys, 1.0, &fine).unwrap().value;
        assert!(a.abs() > 1e-3);
        assert!((a - b).abs() < 1e-8);
    }

    #[test]
    fn reversal_negates() {
        let sys = PiecewiseSystem::random(SystemId::Yruh2, 3, 7);
        let f = melnikov_numeric(&sys, 0.4, &QuadratureConfig::default()).unwrap().value;
        let r = melnikov_numeric(&sys, 0.4, &QuadratureConfig { orientation: Orientation::Reversed, ..Default::default() })
            .unwrap()
            .value;
        assert_eq!(f, -r);
    }

    #[test]
    fn circle_arc_matches_antiderivative() {
        let mut sys = PiecewiseSystem::new(SystemId::Whs(1), 1);
        sys.q[2] = BivariatePoly::monomial(1, 0, 1.0);
        let c = level_curve(&sys, 0.35).unwrap();
        let arc = c.arcs.iter().find(|a| a.zone == 2).unwrap();
        let (v, _) = arc_integral(&sys, arc, &GaussLegendre::new(10), &QuadratureConfig::default()).unwrap();
        let exact = 0.5 * (arc.end.0 * arc.end.0 - arc.start.0 * arc.start.0);
        assert!((v - exact).abs() < 1e-10);
    }

    #[test]
    fn whs_weights_scale_arcs() {
        let mut sys = PiecewiseSystem::random(SystemId::Whs(2), 2, 3);
        let base = melnikov_numeric(&sys, 0.5, &QuadratureConfig::default()).unwrap();
        sys.weights = [2.0, 0.0, -1.0, 0.5];
        let m = melnikov_numeric(&sys, 0.5, &QuadratureConfig::default()).unwrap();
        let expected: f64 = base.arcs.iter().map(|a| sys.weights[a.zone] * a.value).sum();
        assert!(close(m.value, expected, 1e-14));
    }

    #[test]
    fn depth_limit_reports_arc() {
        let sys = PiecewiseSystem::random(SystemId::Ruh2, 2, 1);
        let cfg = QuadratureConfig { rel_tol: 1e-300, abs_tol: 0.0, max_depth: 2, nodes: 2, ..Default::default() };
        assert!(matches!(melnikov_numeric(&sys, 1.0, &cfg), Err(Error::Quadrature { .. })));
    }

    fn samples(f: impl Fn(f64) -> f64, lo: f64, hi: f64, k: usize) -> Vec<(f64, f64)> {
        (0..k)
            .map(|i| {
                let h = lo * libm::pow(hi / lo, i as f64 / (k - 1) as f64);
                (h, f(h))
            })
            .collect()
    }

    #[test]
    fn in_span_round_trip() {
        let full = basis(&FamilySpec::new(FamilyId::Whs(2), 3).unwrap()).unwrap();
        let probe = samples(|h| h, 0.02, 0.98, 4 * full.len());
        let mut b: Vec<BasisElement> = Vec::new();
        for e in full {
            b.push(e);
            let r = fit_basis("probe", &probe, &b).unwrap();
            if r.rank_deficient() {
                b.pop();
            }
        }
        assert!(b.len() >= 4);
        let coeffs: Vec<f64> = (0..b.len()).map(|i| (i as f64 + 1.0) * if i % 2 == 0 { 1.0 } else { -0.5 }).collect();
        let compiled: Vec<CompiledExpression> = b.iter().map(|e| CompiledExpression::new(&e.expr)).collect();
        let f = |h: f64| compiled.iter().zip(&coeffs).map(|(c, k)| k * c.value(h)).sum();
        let s = samples(f, 0.02, 0.98, 4 * b.len());
        let r = fit_basis("whs", &s, &b).unwrap();
        assert!(!r.rank_deficient(), "condition {}", r.condition);
        assert!(r.relative_residual < 1e-10);
        for (c, k) in r.coefficients.iter().zip(&coeffs) {
            assert!((c - k).abs() < 1e-8 * (1.0 + k.abs()), "{c} vs {k}");
        }
    }

    #[test]
    fn exponential_is_out_of_span() {
        let b = basis(&FamilySpec::new(FamilyId::Ruh2Pos, 1).unwrap()).unwrap();
        let r = fit_basis("ruh2", &samples(libm::exp, 0.05, 20.0, 200), &b).unwrap();
        assert!(r.relative_residual > 1e-3, "{}", r.relative_residual);
    }

    #[test]
    fn fit_rejects_short_sample() {
        let b = basis(&FamilySpec::new(FamilyId::Ruh2Pos, 1).unwrap()).unwrap();
        assert!(matches!(fit_basis("x", &samples(libm::exp, 0.1, 1.0, b.len()), &b), Err(Error::Fit(_))));
    }

    #[test]
    fn ruh2_numeric_lies_in_closed_form_span() {
        let sys = PiecewiseSystem::random(SystemId::Ruh2, 1, 11);
        let cfg = QuadratureConfig::default();
        let s = samples(|h| melnikov_numeric(&sys, h, &cfg).unwrap().value, 0.05, 20.0, 200);
        let b = basis(&FamilySpec::new(FamilyId::Ruh2Pos, 1).unwrap()).unwrap();
        let r = fit_basis("ruh2-pos", &s, &b).unwrap();
        assert!(r.relative_residual < 1e-5, "{}", r.relative_residual);
    }

    #[test]
    fn ruh2_negative_branch_needs_constant_term() {
        let mut sys = PiecewiseSystem::new(SystemId::Ruh2, 1);
        sys.p[2] = BivariatePoly::monomial(1, 0, 1.0);
        let cfg = QuadratureConfig::default();
        // M is affine in h here; (2h + 1) M then has a constant term that
        // no other block supplies.
        let m = |h: f64| melnikov_numeric(&sys, h, &cfg).unwrap().value;
        let slope = (m(-9.0) - m(-2.0)) / -7.0;
        assert!(close(m(-1.5), m(-2.0) + 0.5 * slope, 1e-10));
        let intercept = m(-2.0) + 2.0 * slope;
        assert!(intercept.abs() > 1.0);
        let sys = PiecewiseSystem::random(SystemId::Ruh2, 2, 5);
        let s = samples(|h| melnikov_numeric(&sys, -h, &cfg).unwrap().value, 1.05, 20.0, 120);
        let s: Vec<(f64, f64)> = s.into_iter().map(|(h, m)| (-h, m)).collect();
        let b = basis(&FamilySpec::new(FamilyId::Ruh2Neg, 2).unwrap()).unwrap();
        assert!(fit_basis("ruh2-neg", &s, &b).unwrap().relative_residual < 1e-9);
    }
}
