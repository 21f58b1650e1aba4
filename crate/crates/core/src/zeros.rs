//! Numeric zero counting on a working interval.
//!
//! Odd zeros are found by certified sign changes on a log-densified grid
//! followed by bisection. Even zeros can only be detected heuristically: a
//! local minimum of `|f|` below the touch threshold counts as a double zero
//! and is flagged. Missing a tangency under-counts, never over-counts.

use alloc::string::String;
use alloc::vec::Vec;

use crate::chart::Interval;
use crate::error::{Error, Result};
use crate::eval::{CompiledExpression, EvalPolicy, Evaluation};
use crate::expr::Expression;

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroConfig {
    /// Distance kept from every finite endpoint.
    pub eps: f64,
    pub grid: usize,
    /// Bisection stops at width `tol · max(1, |h|)`.
    pub tol: f64,
    /// `|f| < touch · Σ|terms|` at a local minimum counts as a double zero.
    pub touch: f64,
    /// Cut-off for infinite endpoints.
    pub truncation: f64,
    pub policy: EvalPolicy,
}

impl Default for ZeroConfig {
    fn default() -> Self {
        ZeroConfig {
            eps: 1e-6,
            grid: 20_000,
            tol: 1e-12,
            touch: 1e-9,
            truncation: 1e12,
            policy: EvalPolicy::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroRecord {
    pub lo: f64,
    pub hi: f64,
    /// Sign change across the bracket.
    pub odd: bool,
    pub multiplicity: u32,
    /// Detected by the touch heuristic or at a point of undetermined sign.
    pub flagged: bool,
}

impl ZeroRecord {
    pub fn width(&self) -> f64 {
        self.hi - self.lo
    }

    pub fn location(&self) -> f64 {
        0.5 * (self.lo + self.hi)
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ZeroReport {
    pub interval: Interval,
    /// Range actually searched after ε and infinite truncation.
    pub searched: (f64, f64),
    pub eps: f64,
    pub zeros: Vec<ZeroRecord>,
    pub notes: Vec<String>,
    /// Some sign could not be certified.
    pub inconclusive: bool,
}

impl ZeroReport {
    /// Count with multiplicity (odd zeros as 1, touch zeros as 2).
    pub fn count(&self) -> usize {
        self.zeros.iter().map(|z| z.multiplicity as usize).sum()
    }

    pub fn odd_count(&self) -> usize {
        self.zeros.iter().filter(|z| z.odd).count()
    }

    pub fn flagged_count(&self) -> usize {
        self.zeros.iter().filter(|z| z.flagged).count()
    }
}

/// Searched range and grid for the interval.
pub fn sample_grid(interval: &Interval, cfg: &ZeroConfig) -> Result<(f64, f64, Vec<f64>)> {
    let n = cfg.grid.max(16);
    let (lo, hi) = (interval.lo_f64(), interval.hi_f64());
    let mut pts = Vec::with_capacity(n + 8);
    let (a, b) = match (lo.is_finite(), hi.is_finite()) {
        (true, true) => {
            if hi - lo <= 2.0 * cfg.eps {
                return Err(Error::InvalidInterval(alloc::format!("{}", interval)));
            }
            let (a, b) = (lo + cfg.eps, hi - cfg.eps);
            let half = n / 2;
            for i in 0..=half {
                pts.push(a + (b - a) * i as f64 / half as f64);
            }
            // geometric clustering toward both endpoints
            let quarter = (n - half) / 2;
            let w = 0.5 * (hi - lo);
            for i in 0..=quarter {
                let d = cfg.eps * libm::pow(w / cfg.eps, i as f64 / quarter as f64);
                pts.push(lo + d);
                pts.push(hi - d);
            }
            (a, b)
        }
        (true, false) | (false, true) => {
            let t = cfg.truncation;
            let (origin, dir) = if lo.is_finite() { (lo, 1.0) } else { (hi, -1.0) };
            let span = t - origin * dir;
            if span <= cfg.eps {
                return Err(Error::InvalidInterval(alloc::format!("{}", interval)));
            }
            for i in 0..=n {
                let d = cfg.eps * libm::pow(span / cfg.eps, i as f64 / n as f64);
                pts.push(origin + dir * d);
            }
            if dir > 0.0 {
                (origin + cfg.eps, origin + span)
            } else {
                (origin - span, origin - cfg.eps)
            }
        }
        (false, false) => {
            return Err(Error::InvalidInterval(alloc::format!("{} needs a finite endpoint", interval)))
        }
    };
    pts.retain(|x| *x >= a && *x <= b && interval.contains_f64(*x));
    pts.sort_by(f64::total_cmp);
    pts.dedup();
    Ok((a, b, pts))
}

struct Probe<'a> {
    f: &'a dyn Fn(f64) -> Evaluation,
}

impl Probe<'_> {
    fn eval(&self, h: f64) -> Evaluation {
        (self.f)(h)
    }

    fn sign(&self, h: f64) -> Option<i8> {
        self.eval(h).certain_sign()
    }
}

/// Count zeros of `e` on the interval (the chart's interval if `None`).
pub fn count_zeros_numeric(
    e: &Expression,
    interval: Option<&Interval>,
    cfg: &ZeroConfig,
) -> Result<ZeroReport> {
    let e = e.normalize()?;
    if e.is_zero() {
        return Err(Error::IdenticallyZero);
    }
    let interval = interval.cloned().unwrap_or_else(|| e.chart().interval()).interior();
    if !interval.is_within(&e.chart().interval()) {
        return Err(Error::InvalidInterval(alloc::format!("{} is not inside {}", interval, e.chart())));
    }
    let compiled = CompiledExpression::new(&e);
    count_zeros_compiled(&compiled, &interval, cfg)
}

/// As [`count_zeros_numeric`] for an already compiled, nonzero expression.
pub fn count_zeros_compiled(
    f: &CompiledExpression,
    interval: &Interval,
    cfg: &ZeroConfig,
) -> Result<ZeroReport> {
    let policy = EvalPolicy { require_sign: false, ..cfg.policy };
    // double first, the precision ladder only when the sign is unsure
    let eval = |h: f64| {
        let ev = f.eval_double(h);
        if ev.certain_sign().is_some() && ev.value.is_finite() {
            return ev;
        }
        f.evaluate(h, &policy).unwrap_or(ev)
    };
    count_zeros_fn(&eval, interval, cfg)
}

/// Zero counting for any function with certified evaluations.
pub fn count_zeros_fn(
    f: &dyn Fn(f64) -> Evaluation,
    interval: &Interval,
    cfg: &ZeroConfig,
) -> Result<ZeroReport> {
    let (a, b, grid) = sample_grid(interval, cfg)?;
    let probe = Probe { f };
    let evals: Vec<Evaluation> = grid.iter().map(|&h| probe.eval(h)).collect();
    let mut report = ZeroReport {
        interval: interval.clone(),
        searched: (a, b),
        eps: cfg.eps,
        zeros: Vec::new(),
        notes: Vec::new(),
        inconclusive: false,
    };

    // walk over the certified signs; runs of undecided points sit between them
    let mut last: Option<(usize, i8)> = None;
    let mut undecided_run = 0usize;
    for (i, ev) in evals.iter().enumerate() {
        let s = match ev.certain_sign() {
            Some(s) if ev.value.is_finite() => s,
            _ => {
                undecided_run += 1;
                continue;
            }
        };
        if let Some((j, t)) = last {
            if s != t {
                report.zeros.push(bisect(&probe, grid[j], grid[i], t, cfg, undecided_run > 0));
            } else if undecided_run > 0 {
                report.zeros.push(ZeroRecord {
                    lo: grid[j],
                    hi: grid[i],
                    odd: false,
                    multiplicity: 2,
                    flagged: true,
                });
            } else if i >= 2 && j == i - 1 {
                if let Some(z) = touch_check(&probe, &grid, &evals, i - 1, cfg) {
                    report.zeros.extend(z);
                }
            }
        } else if undecided_run > 0 {
            report.notes.push(alloc::format!(
                "{} leading grid points with undetermined sign near {:e}",
                undecided_run,
                grid[0]
            ));
            report.inconclusive = true;
        }
        last = Some((i, s));
        undecided_run = 0;
    }
    if undecided_run > 0 {
        report.notes.push(alloc::format!("{} trailing grid points with undetermined sign", undecided_run));
        report.inconclusive = true;
    }
    if last.is_none() {
        report.notes.push("sign undetermined on the whole grid".into());
        report.inconclusive = true;
    }
    if report.zeros.iter().any(|z| z.flagged) {
        report.notes.push(alloc::format!(
            "{} zero(s) flagged by the touch heuristic",
            report.zeros.iter().filter(|z| z.flagged).count()
        ));
    }
    tail_check(&probe, interval, cfg, &grid, &evals, &mut report);
    report.zeros.sort_by(|x, y| x.lo.total_cmp(&y.lo));
    Ok(report)
}

fn bisect(probe: &Probe<'_>, mut lo: f64, mut hi: f64, s_lo: i8, cfg: &ZeroConfig, flagged: bool) -> ZeroRecord {
    let mut flagged = flagged;
    for _ in 0..200 {
        let width = cfg.tol * lo.abs().max(hi.abs()).max(1.0);
        if hi - lo <= width {
            break;
        }
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        match probe.sign(mid) {
            Some(s) if s == s_lo => lo = mid,
            Some(_) => hi = mid,
            None => {
                // sign not certified: keep the bracket around the unresolved point
                flagged = flagged || hi - lo > 1e3 * cfg.tol * lo.abs().max(1.0);
                break;
            }
        }
    }
    ZeroRecord { lo, hi, odd: true, multiplicity: 1, flagged }
}

/// Required ratio between the refined minimum and the neighbouring samples.
const TOUCH_DEPTH: f64 = 1e-6;

/// Minimum of the parabola through three points, or `+inf` if it opens
/// downward or is degenerate.
fn parabola_floor((x0, y0): (f64, f64), (x1, y1): (f64, f64), (x2, y2): (f64, f64)) -> f64 {
    let d01 = (y1 - y0) / (x1 - x0);
    let d12 = (y2 - y1) / (x2 - x1);
    let a = (d12 - d01) / (x2 - x0);
    if !(a > 0.0) {
        return f64::INFINITY;
    }
    let b = d01 - a * (x0 + x1);
    let c = y0 - x0 * (a * x0 + b);
    c - b * b / (4.0 * a)
}

/// Golden-section search for a tangency near grid index `k`.
fn touch_check(
    probe: &Probe<'_>,
    grid: &[f64],
    evals: &[Evaluation],
    k: usize,
    cfg: &ZeroConfig,
) -> Option<Vec<ZeroRecord>> {
    if k == 0 || k + 1 >= grid.len() {
        return None;
    }
    let (vl, vm, vr) = (evals[k - 1].value.abs(), evals[k].value.abs(), evals[k + 1].value.abs());
    if !(vm <= vl && vm <= vr) {
        return None;
    }
    let s0 = evals[k].certain_sign()?;
    if evals[k - 1].certain_sign() != Some(s0) || evals[k + 1].certain_sign() != Some(s0) {
        return None;
    }
    // A tangency makes the parabola through the three samples dip to ~0,
    // unless a sample already sits so close to it that the fit is noise.
    let deep = vm < 1e-3 * vl.min(vr);
    if !deep && parabola_floor((grid[k - 1], vl), (grid[k], vm), (grid[k + 1], vr)) > 0.25 * vm {
        return None;
    }
    let (mut a, mut b) = (grid[k - 1], grid[k + 1]);
    const INV_PHI: f64 = 0.618_033_988_749_895;
    let mut c = b - INV_PHI * (b - a);
    let mut d = a + INV_PHI * (b - a);
    let mut fc = probe.eval(c);
    let mut fd = probe.eval(d);
    for _ in 0..120 {
        for (x, ev) in [(c, &fc), (d, &fd)] {
            match ev.certain_sign() {
                Some(s) if s != s0 => {
                    // a real crossing pair: two odd zeros around x
                    let left = bisect(probe, grid[k - 1], x, s0, cfg, false);
                    let right = bisect(probe, x, grid[k + 1], s, cfg, false);
                    return Some(alloc::vec![left, right]);
                }
                None => {
                    return Some(alloc::vec![ZeroRecord {
                        lo: grid[k - 1],
                        hi: grid[k + 1],
                        odd: false,
                        multiplicity: 2,
                        flagged: true,
                    }]);
                }
                _ => {}
            }
        }
        if fc.value.abs() < fd.value.abs() {
            b = d;
            d = c;
            fd = fc;
            c = b - INV_PHI * (b - a);
            fc = probe.eval(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + INV_PHI * (b - a);
            fd = probe.eval(d);
        }
        if b - a <= cfg.tol * a.abs().max(1.0) {
            break;
        }
    }
    let best = if fc.value.abs() < fd.value.abs() { &fc } else { &fd };
    // Small against the term magnitude alone also fires on cancellation
    // noise; a tangency is also small against the neighbouring samples.
    if best.value.abs() < cfg.touch * best.magnitude && best.value.abs() < TOUCH_DEPTH * vl.max(vr) {
        Some(alloc::vec![ZeroRecord { lo: a, hi: b, odd: false, multiplicity: 2, flagged: true }])
    } else {
        None
    }
}

/// Sign probes beyond an infinite truncation. A certified sign change
/// between probes is bisected and counted as a zero.
fn tail_check(
    probe: &Probe<'_>,
    interval: &Interval,
    cfg: &ZeroConfig,
    grid: &[f64],
    evals: &[Evaluation],
    report: &mut ZeroReport,
) {
    let toward_pos = interval.hi.is_none();
    if !toward_pos && interval.lo.is_some() {
        return;
    }
    let signed = |(h, e): (&f64, &Evaluation)| e.certain_sign().map(|s| (*h, s));
    let edge =
        if toward_pos { grid.iter().zip(evals).rev().find_map(signed) } else { grid.iter().zip(evals).find_map(signed) };
    let dir = if toward_pos { 1.0 } else { -1.0 };
    let mut changes = 0;
    let mut last = edge;
    for i in 1..=48 {
        let h = dir * cfg.truncation * libm::pow(10.0, f64::from(i) / 4.0);
        if let Some(s) = probe.sign(h) {
            if let Some((h0, s0)) = last.filter(|&(_, t)| t != s) {
                let z = if h0 < h { bisect(probe, h0, h, s0, cfg, false) } else { bisect(probe, h, h0, s, cfg, false) };
                report.zeros.push(z);
                changes += 1;
            }
            last = Some((h, s));
        }
    }
    report.notes.push(alloc::format!(
        "infinite endpoint truncated at {:e}; tail probed to {:e}",
        dir * cfg.truncation,
        dir * cfg.truncation * 1e12
    ));
    if changes > 0 {
        report.notes.push(alloc::format!("{} zero(s) found by the tail probes", changes));
    }
}
