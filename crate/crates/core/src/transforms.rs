//! Integral transforms `K`, `F`, `F-hat` and `H`, with their inverses.
//!
//! Each transform is a [`Primitive`] of a positive integrand: either an
//! exact power law, or a table of log-spaced nodes interpolated by a cubic
//! Hermite spline in `(ln y, ln P)` coordinates with exact slopes (so power
//! laws are reproduced exactly), refined until every segment midpoint agrees
//! with quadrature. Outside the tabulated range values come from direct
//! quadrature.

use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::{monomials, Expr, PowerLaw, ProblemSpec, Profile};
use crate::quadrature::{integrate, integrate_strict, QuadOptions};
use crate::roots::{bracket_increasing, solve_increasing};

const NODES_PER_DECADE: f64 = 4.0;
const REFINE_TOL: f64 = 1e-12;
const MAX_DEPTH: usize = 40;
const MAX_NODES: usize = 50_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum TransformKind {
    K,
    F,
    Fhat,
    Hint,
    /// Integrals used by barrier constructions.
    Barrier,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Anchor {
    /// `P(x) = int_{x0}^{x} g`, increasing, domain `x >= x0`.
    From(f64),
    /// `P(x) = int_{x}^{inf} g`, decreasing, domain `x > 0`.
    Tail,
}

/// Snapshot of a tabulated transform.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TransformTable {
    pub kind: TransformKind,
    pub nodes: Vec<f64>,
    pub values: Vec<f64>,
    pub closed_form: Option<PowerLaw>,
}

pub type Integrand = Arc<dyn Fn(f64) -> Result<f64> + Send + Sync>;

#[derive(Debug, Clone, Copy)]
struct Node {
    /// `ln y` where `y = x - x0` (or `x` for tails).
    u: f64,
    /// `ln P`.
    v: f64,
    /// `dv/du`.
    d: f64,
    p: f64,
}

/// Antiderivative of a positive integrand with fast evaluation and
/// inversion.
#[derive(Clone)]
pub struct Primitive {
    kind: TransformKind,
    integrand: Integrand,
    anchor: Anchor,
    closed: Option<PowerLaw>,
    nodes: Vec<Node>,
    opts: QuadOptions,
    root_rel: f64,
}

impl std::fmt::Debug for Primitive {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Primitive")
            .field("kind", &self.kind)
            .field("anchor", &self.anchor)
            .field("closed", &self.closed)
            .field("nodes", &self.nodes.len())
            .finish()
    }
}

fn segment_opts() -> QuadOptions {
    QuadOptions { abs_tol: 1e-300, rel_tol: 1e-13, node_budget: 4_000 }
}

impl Primitive {
    /// Builds the primitive. `closed` asserts the integrand is exactly
    /// `c s^a`; `range` is the tabulated interval of `y = x - x0` (or `x`
    /// for tails). A table that cannot be built (e.g. the integrand
    /// vanishes somewhere) is dropped in favour of direct quadrature, but
    /// a divergent tail is an error.
    pub fn new(
        kind: TransformKind,
        integrand: Integrand,
        anchor: Anchor,
        closed: Option<PowerLaw>,
        range: (f64, f64),
        opts: QuadOptions,
        root_rel: f64,
    ) -> Result<Self> {
        let closed = match (closed, anchor) {
            (Some(c), Anchor::From(x0)) if c.c > 0.0 && (c.a > -1.0 || (x0 > 0.0 && c.a != -1.0)) => Some(c),
            (Some(c), Anchor::Tail) if c.a < -1.0 && c.c > 0.0 => Some(c),
            _ => None,
        };
        let mut prim = Primitive { kind, integrand, anchor, closed, nodes: Vec::new(), opts, root_rel };
        if prim.closed.is_none() {
            match prim.build_table(range) {
                Ok(nodes) => prim.nodes = nodes,
                Err(e @ Error::Quadrature(_)) if anchor == Anchor::Tail => return Err(e),
                Err(_) => {}
            }
        }
        Ok(prim)
    }

    pub fn kind(&self) -> TransformKind {
        self.kind
    }

    pub fn closed_form(&self) -> Option<PowerLaw> {
        self.closed
    }

    pub fn integrand(&self, x: f64) -> Result<f64> {
        let v = (self.integrand)(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow(format!("{:?} integrand is {v} at {x}", self.kind)))
        }
    }

    fn origin(&self) -> f64 {
        match self.anchor {
            Anchor::From(x0) => x0,
            Anchor::Tail => 0.0,
        }
    }

    pub fn table(&self) -> Option<TransformTable> {
        if self.nodes.is_empty() {
            return None;
        }
        Some(TransformTable {
            kind: self.kind,
            nodes: self.nodes.iter().map(|n| self.origin() + n.u.exp()).collect(),
            values: self.nodes.iter().map(|n| n.p).collect(),
            closed_form: self.closed,
        })
    }

    /// Direct quadrature with a purely relative tolerance: the integrand is
    /// positive, and tails can be far below any absolute floor. Values
    /// feed other tables as integrands, so the tolerance is kept tight.
    fn quad(&self, a: f64, b: f64) -> Result<f64> {
        let opts = QuadOptions { abs_tol: 1e-300, rel_tol: self.opts.rel_tol.min(1e-12), ..self.opts };
        integrate_strict(|s| self.integrand(s), a, b, &opts)
    }

    /// Segment integral at near machine precision, falling back to the
    /// best estimate when roundoff stalls the error estimate.
    fn segment(&self, a: f64, b: f64) -> Result<f64> {
        let r = integrate(|s| self.integrand(s), a, b, &segment_opts())?;
        if r.converged || r.abs_error_estimate <= 1e-10 * r.value.abs() {
            Ok(r.value)
        } else {
            Err(Error::Quadrature(format!("segment [{a}, {b}] did not converge")))
        }
    }

    fn node(&self, y: f64, p: f64) -> Result<Node> {
        if !(p > 0.0) || !p.is_finite() {
            return Err(Error::Domain(format!("transform value {p} at {y} is not positive")));
        }
        let x = self.origin() + y;
        let g = self.integrand(x)?;
        let slope = y * g / p;
        let d = match self.anchor {
            Anchor::From(_) => slope,
            Anchor::Tail => -slope,
        };
        Ok(Node { u: y.ln(), v: p.ln(), d, p })
    }

    fn build_table(&self, (lo, hi): (f64, f64)) -> Result<Vec<Node>> {
        let x0 = self.origin();
        let (llo, lhi) = (lo.log10(), hi.log10());
        let count = ((lhi - llo) * NODES_PER_DECADE).ceil().max(1.0) as usize;
        let ys: Vec<f64> = (0..=count).map(|k| 10f64.powf(llo + (lhi - llo) * k as f64 / count as f64)).collect();
        let mut ys = ys;
        let mut ps = vec![0.0; ys.len()];
        match self.anchor {
            Anchor::From(_) => {
                ps[0] = self.segment(x0, x0 + ys[0])?;
                for k in 1..ys.len() {
                    // Past the core range the table simply stops where the
                    // primitive or its integrand leaves the floats.
                    let next = self.segment(x0 + ys[k - 1], x0 + ys[k]).map(|s| ps[k - 1] + s);
                    match next {
                        // Headroom below f64::MAX keeps the Hermite
                        // interpolant itself finite.
                        Ok(p) if p < 1e300 => ps[k] = p,
                        Ok(_) | Err(_) if ys[k - 1] >= CORE_HI && k >= 2 => {
                            ys.truncate(k);
                            ps.truncate(k);
                            break;
                        }
                        Ok(p) => return Err(Error::Overflow(format!("transform value {p} at {}", x0 + ys[k]))),
                        Err(e) => return Err(e),
                    }
                }
            }
            Anchor::Tail => {
                let last = ys.len() - 1;
                ps[last] = self.segment(ys[last], f64::INFINITY)?;
                for k in (0..last).rev() {
                    ps[k] = ps[k + 1] + self.segment(ys[k], ys[k + 1])?;
                }
            }
        }
        let mut coarse = Vec::with_capacity(ys.len());
        for (&y, &p) in ys.iter().zip(&ps) {
            match self.node(y, p) {
                Ok(n) => coarse.push(n),
                Err(_) if y > CORE_HI && coarse.len() >= 2 => break,
                Err(e) => return Err(e),
            }
        }
        let mut nodes = vec![coarse[0]];
        for w in coarse.windows(2) {
            self.refine(w[0], w[1], 0, &mut nodes)?;
            if nodes.len() > MAX_NODES {
                return Err(Error::Quadrature("transform table exceeded its node budget".into()));
            }
        }
        Ok(nodes)
    }

    /// Appends the refined nodes of `(a, b]` to `out`.
    fn refine(&self, a: Node, b: Node, depth: usize, out: &mut Vec<Node>) -> Result<()> {
        let um = 0.5 * (a.u + b.u);
        let ym = um.exp();
        let x0 = self.origin();
        let pm = match self.anchor {
            Anchor::From(_) => a.p + self.segment(x0 + a.u.exp(), x0 + ym)?,
            Anchor::Tail => b.p + self.segment(ym, b.u.exp())?,
        };
        let interp = hermite(&a, &b, um).0.exp();
        // Near a shifted origin, x = x0 + y resolves y only to ulp(x0).
        let tol = REFINE_TOL.max(8.0 * f64::EPSILON * x0.abs() / ym);
        if depth >= MAX_DEPTH || out.len() > MAX_NODES || (interp - pm).abs() <= tol * pm {
            out.push(b);
            return Ok(());
        }
        let mid = self.node(ym, pm)?;
        self.refine(a, mid, depth + 1, out)?;
        self.refine(mid, b, depth + 1, out)
    }

    /// `P(x)` per the anchor.
    pub fn eval(&self, x: f64) -> Result<f64> {
        let v = self.eval_unchecked(x)?;
        if v.is_finite() {
            Ok(v)
        } else {
            Err(Error::Overflow(format!("{:?} transform is {v} at {x}", self.kind)))
        }
    }

    fn eval_unchecked(&self, x: f64) -> Result<f64> {
        let x0 = self.origin();
        match self.anchor {
            Anchor::From(_) if x < x0 => return Err(Error::Domain(format!("transform evaluated at {x} < {x0}"))),
            Anchor::From(_) if x == x0 => return Ok(0.0),
            Anchor::Tail if !(x > 0.0) => return Err(Error::Domain(format!("tail integral from {x} <= 0"))),
            _ => {}
        }
        if x == f64::INFINITY {
            return match self.anchor {
                Anchor::Tail => Ok(0.0),
                Anchor::From(_) => Err(Error::Overflow("transform at infinity".into())),
            };
        }
        if let Some(c) = self.closed {
            let b = c.a + 1.0;
            return Ok(match self.anchor {
                Anchor::Tail => -c.c * x.powf(b) / b,
                Anchor::From(_) if x0 == 0.0 => c.c * x.powf(b) / b,
                // x0^b (exp(b ln(x/x0)) - 1) without cancellation.
                Anchor::From(_) => c.c * x0.powf(b) * (b * (x / x0).ln()).exp_m1() / b,
            });
        }
        let y = x - x0;
        if let (Some(first), Some(last)) = (self.nodes.first(), self.nodes.last()) {
            let u = y.ln();
            if u >= first.u && u <= last.u {
                let i = self.segment_index(|n| n.u <= u);
                return Ok(hermite(&self.nodes[i], &self.nodes[i + 1], u).0.exp());
            }
            let (ylo, yhi) = (first.u.exp(), last.u.exp());
            return match (self.anchor, u < first.u) {
                (Anchor::From(_), true) => self.quad(x0, x),
                (Anchor::From(_), false) => Ok(last.p + self.quad(x0 + yhi, x)?),
                (Anchor::Tail, true) => Ok(first.p + self.quad(x, ylo)?),
                (Anchor::Tail, false) => self.quad(x, f64::INFINITY),
            };
        }
        match self.anchor {
            Anchor::From(_) => self.quad(x0, x),
            Anchor::Tail => self.quad(x, f64::INFINITY),
        }
    }

    /// Index `i` of the segment `[i, i+1]` for the last node satisfying
    /// `pred` (monotone along the table).
    fn segment_index(&self, pred: impl Fn(&Node) -> bool) -> usize {
        let k = self.nodes.partition_point(pred);
        k.saturating_sub(1).min(self.nodes.len() - 2)
    }

    /// Solves `P(x) = value`.
    pub fn inverse(&self, value: f64) -> Result<f64> {
        if !(value >= 0.0) || value.is_nan() {
            return Err(Error::Domain(format!("transform inverse of {value}")));
        }
        let x0 = self.origin();
        if value == 0.0 {
            return match self.anchor {
                Anchor::From(_) => Ok(x0),
                Anchor::Tail => Ok(f64::INFINITY),
            };
        }
        if let Some(c) = self.closed {
            let b = c.a + 1.0;
            return match self.anchor {
                Anchor::Tail => Ok((-value * b / c.c).powf(1.0 / b)),
                Anchor::From(_) if x0 == 0.0 => Ok((value * b / c.c).powf(1.0 / b)),
                Anchor::From(_) => {
                    let r = value * b / (c.c * x0.powf(b));
                    if r <= -1.0 {
                        return Err(Error::Domain(format!("{value} exceeds the supremum of the transform")));
                    }
                    Ok(x0 * (r.ln_1p() / b).exp())
                }
            };
        }
        if self.nodes.len() >= 2 {
            let v = value.ln();
            let (first, last) = (self.nodes[0], self.nodes[self.nodes.len() - 1]);
            let (lo_v, hi_v) = if first.v <= last.v { (first.v, last.v) } else { (last.v, first.v) };
            if v >= lo_v && v <= hi_v {
                let i = match self.anchor {
                    Anchor::From(_) => self.segment_index(|n| n.v <= v),
                    Anchor::Tail => self.segment_index(|n| n.v >= v),
                };
                let u = invert_segment(&self.nodes[i], &self.nodes[i + 1], v);
                return Ok(x0 + u.exp());
            }
        }
        // Direct path: increasing function of y = x - x0.
        let sign = match self.anchor {
            Anchor::From(_) => 1.0,
            Anchor::Tail => -1.0,
        };
        let f = |y: f64| Ok(sign * self.eval(x0 + y)?);
        let df = |y: f64| self.integrand(x0 + y);
        let start = self.nodes.first().map(|n| n.u.exp()).unwrap_or(1.0);
        let (lo, hi) = bracket_increasing(f, sign * value, start)?;
        let y = solve_increasing(f, Some(df), sign * value, lo, hi, self.root_rel)?;
        Ok(x0 + y)
    }
}

/// Cubic Hermite value and slope in log coordinates.
fn hermite(a: &Node, b: &Node, u: f64) -> (f64, f64) {
    let w = b.u - a.u;
    let s = (u - a.u) / w;
    let (s2, s3) = (s * s, s * s * s);
    let v = (2.0 * s3 - 3.0 * s2 + 1.0) * a.v
        + (s3 - 2.0 * s2 + s) * w * a.d
        + (-2.0 * s3 + 3.0 * s2) * b.v
        + (s3 - s2) * w * b.d;
    let dv = (6.0 * s2 - 6.0 * s) * (a.v - b.v) / w + (3.0 * s2 - 4.0 * s + 1.0) * a.d + (3.0 * s2 - 2.0 * s) * b.d;
    (v, dv)
}

/// Solves `hermite(u) = v` on the segment by Newton safeguarded with
/// bisection.
fn invert_segment(a: &Node, b: &Node, v: f64) -> f64 {
    let increasing = b.v >= a.v;
    let (mut lo, mut hi) = (a.u, b.u);
    let mut u = if (b.v - a.v) != 0.0 { a.u + (v - a.v) / (b.v - a.v) * (b.u - a.u) } else { 0.5 * (lo + hi) };
    for _ in 0..100 {
        let (val, slope) = hermite(a, b, u);
        let diff = if increasing { val - v } else { v - val };
        if diff == 0.0 {
            return u;
        }
        if diff < 0.0 {
            lo = u;
        } else {
            hi = u;
        }
        let newton = u - (val - v) / slope;
        let next = if slope != 0.0 && newton > lo && newton < hi { newton } else { 0.5 * (lo + hi) };
        if (next - u).abs() <= 1e-15 * u.abs().max(1.0) {
            return next;
        }
        u = next;
    }
    u
}

/// `c t^a` when `e` is exactly one monomial with positive coefficient.
fn exact_power(e: &Expr) -> Option<PowerLaw> {
    monomials(e)?.single().filter(|m| m.c > 0.0)
}

/// The expression `t phi'(t) / l(t)`.
fn k_integrand_expr(phi: &Profile, l: Option<&Profile>) -> Expr {
    let num = Expr::Mul(Box::new(Expr::Var), Box::new(phi.deriv_expr().clone()));
    match l {
        Some(l) => Expr::Div(Box::new(num), Box::new(l.expr().clone())),
        None => num,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum FVariant {
    Plain,
    Hat,
}

/// Tables run from `1e-12` up to where the primitive overflows, capped at
/// `1e300`; failures are fatal only inside `[1e-12, CORE_HI]`.
const TABLE_RANGE: (f64, f64) = (1e-12, 1e300);
const CORE_HI: f64 = 1e15;

/// Cached transforms of one problem specification.
#[derive(Debug, Clone)]
pub struct Transforms {
    k: Primitive,
    f: Primitive,
    h: Option<Primitive>,
    fhat: Option<Primitive>,
    theta: Option<f64>,
    opts: QuadOptions,
    root_rel: f64,
}

impl Transforms {
    pub fn new(spec: &ProblemSpec) -> Result<Self> {
        let opts = QuadOptions::from(&spec.tolerances);
        let root_rel = spec.tolerances.root_rel;
        let phi = spec.phi.clone();
        let l = spec.rhs.l().cloned();
        let k_closed = exact_power(&k_integrand_expr(&phi, l.as_ref()));
        let k_fn: Integrand = Arc::new(move |s: f64| {
            let num = s * phi.deriv(s)?;
            match &l {
                Some(l) => Ok(num / l.eval(s)?),
                None => Ok(num),
            }
        });
        let k = Primitive::new(TransformKind::K, k_fn, Anchor::From(0.0), k_closed, TABLE_RANGE, opts, root_rel)?;

        let fprof = spec.rhs.f().clone();
        let f_closed = fprof.exact_monomial().filter(|m| m.c > 0.0);
        let f_src = fprof.clone();
        let f = Primitive::new(
            TransformKind::F,
            Arc::new(move |s| f_src.eval(s)),
            Anchor::From(0.0),
            f_closed,
            TABLE_RANGE,
            opts,
            root_rel,
        )?;

        let theta = spec.constants.theta;
        let (h, fhat) = match spec.rhs.h() {
            Some(hp) if !hp.is_identically_zero() => {
                let hs = hp.clone();
                let h = Primitive::new(
                    TransformKind::Hint,
                    Arc::new(move |s| hs.eval(s)),
                    Anchor::From(0.0),
                    hp.exact_monomial().filter(|m| m.c > 0.0),
                    TABLE_RANGE,
                    opts,
                    root_rel,
                )?;
                let fhat = match theta {
                    Some(theta) => {
                        let hh = h.clone();
                        let ff = fprof.clone();
                        Some(Primitive::new(
                            TransformKind::Fhat,
                            Arc::new(move |s| Ok(ff.eval(s)? * ((2.0 - theta) * hh.eval(s)?).exp())),
                            Anchor::From(0.0),
                            None,
                            TABLE_RANGE,
                            opts,
                            root_rel,
                        )?)
                    }
                    None => None,
                };
                (Some(h), fhat)
            }
            _ => (None, None),
        };
        Ok(Transforms { k, f, h, fhat, theta, opts, root_rel })
    }

    pub fn quad_options(&self) -> QuadOptions {
        self.opts
    }

    pub fn root_rel(&self) -> f64 {
        self.root_rel
    }

    pub fn k_primitive(&self) -> &Primitive {
        &self.k
    }

    pub fn f_primitive(&self) -> &Primitive {
        &self.f
    }

    pub fn big_k(&self, t: f64) -> Result<f64> {
        self.k.eval(t)
    }

    pub fn big_k_inverse(&self, u: f64) -> Result<f64> {
        self.k.inverse(u)
    }

    /// `K'(t) = t phi'(t)/l(t)`.
    pub fn k_prime(&self, t: f64) -> Result<f64> {
        self.k.integrand(t)
    }

    /// `H(t) = int_0^t h`; zero when the rhs has no (or a zero) `h`.
    pub fn big_h(&self, t: f64) -> Result<f64> {
        match &self.h {
            Some(h) => h.eval(t),
            None => Ok(0.0),
        }
    }

    pub fn has_h(&self) -> bool {
        self.h.is_some()
    }

    pub fn big_f(&self, t: f64, variant: FVariant) -> Result<f64> {
        match variant {
            FVariant::Plain => self.f.eval(t),
            FVariant::Hat => match (&self.h, &self.fhat) {
                (None, _) => self.f.eval(t),
                (Some(_), Some(fh)) => fh.eval(t),
                (Some(_), None) => Err(Error::Missing("constant theta for F-hat".into())),
            },
        }
    }

    pub fn theta(&self) -> Option<f64> {
        self.theta
    }

    pub fn tables(&self) -> Vec<TransformTable> {
        [Some(&self.k), Some(&self.f), self.h.as_ref(), self.fhat.as_ref()]
            .into_iter()
            .flatten()
            .filter_map(Primitive::table)
            .collect()
    }
}

/// `K(t) = int_0^t s phi'(s)/l(s) ds` by closed form or direct quadrature.
pub fn big_k(spec: &ProblemSpec, t: f64) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("K evaluated at {t}")));
    }
    if let Some(c) = exact_power(&k_integrand_expr(&spec.phi, spec.rhs.l())) {
        if c.a > -1.0 {
            return Ok(c.c * t.powf(c.a + 1.0) / (c.a + 1.0));
        }
    }
    let opts = QuadOptions::from(&spec.tolerances);
    integrate_strict(|s| Ok(s * spec.phi.deriv(s)? / spec.l_eval(s)?), 0.0, t, &opts)
}

/// Increasing inverse of [`big_k`].
pub fn big_k_inverse(spec: &ProblemSpec, u: f64) -> Result<f64> {
    if !(u >= 0.0) {
        return Err(Error::Domain(format!("K inverse of {u}")));
    }
    if u == 0.0 {
        return Ok(0.0);
    }
    let rel = spec.tolerances.root_rel;
    let (lo, hi) = bracket_increasing(|t| big_k(spec, t), u, 1.0)?;
    let df = |t: f64| Ok(t * spec.phi.deriv(t)? / spec.l_eval(t)?);
    solve_increasing(|t| big_k(spec, t), Some(df), u, lo, hi, rel)
}

/// `F(t)` or `F-hat(t)` by closed form or direct (nested) quadrature.
pub fn big_f(spec: &ProblemSpec, t: f64, variant: FVariant) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(Error::Domain(format!("F evaluated at {t}")));
    }
    let f = spec.rhs.f();
    let opts = QuadOptions::from(&spec.tolerances);
    let h = spec.rhs.h().filter(|h| !h.is_identically_zero());
    match (variant, h) {
        (FVariant::Plain, _) | (FVariant::Hat, None) => {
            if let Some(m) = f.exact_monomial().filter(|m| m.c > 0.0 && m.a > -1.0) {
                return Ok(m.c * t.powf(m.a + 1.0) / (m.a + 1.0));
            }
            integrate_strict(|s| f.eval(s), 0.0, t, &opts)
        }
        (FVariant::Hat, Some(h)) => {
            let theta = spec.constants.require(crate::profile::ConstantName::Theta)?;
            integrate_strict(
                |s| {
                    let hs = integrate_strict(|x| h.eval(x), 0.0, s, &opts)?;
                    Ok(f.eval(s)? * ((2.0 - theta) * hs).exp())
                },
                0.0,
                t,
                &opts,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::Geometry;
    use crate::profile::Constants;

    const H1: Geometry = Geometry::Heisenberg { m: 1 };

    fn spec(phi: &str, f: &str, l: &str) -> ProblemSpec {
        let tight = crate::profile::Tolerances { quad_rel: 1e-13, quad_abs: 1e-300, ..Default::default() };
        ProblemSpec::product(H1, phi, f, l, Constants::default()).unwrap().with_tolerances(tight)
    }

    #[test]
    fn k_for_p_laplacian() {
        let s = spec("t", "t^2", "1");
        assert_eq!(big_k(&s, 2.0).unwrap(), 2.0);
        assert_eq!(big_k(&s, 0.0).unwrap(), 0.0);
        let s3 = spec("t^2", "t^2", "1");
        // (p-1) t^p / p with p = 3
        assert!((big_k(&s3, 1.5).unwrap() - 2.0 * 1.5f64.powi(3) / 3.0).abs() < 1e-15);
        let tr = Transforms::new(&s).unwrap();
        assert_eq!(tr.big_k_inverse(2.0).unwrap(), 2.0);
        assert_eq!(tr.big_k_inverse(0.0).unwrap(), 0.0);
        assert!((big_k_inverse(&s, 2.0).unwrap() - 2.0).abs() < 1e-10);
    }

    #[test]
    fn f_closed_form_and_hat() {
        let s = spec("t", "t^2", "1");
        assert!((big_f(&s, 3.0, FVariant::Plain).unwrap() - 9.0).abs() < 1e-14);
        assert_eq!(big_f(&s, 0.0, FVariant::Plain).unwrap(), 0.0);
        let c = Constants { theta: Some(0.5), ..Default::default() };
        let d = ProblemSpec::difference(H1, "t", "t^2", "0", "t^2", c).unwrap();
        let tr = Transforms::new(&d).unwrap();
        for t in [0.1, 1.0, 7.0] {
            assert_eq!(tr.big_f(t, FVariant::Hat).unwrap(), tr.big_f(t, FVariant::Plain).unwrap());
        }
    }

    #[test]
    fn table_matches_direct_quadrature() {
        let s = spec("t + t^3", "exp(t) - 1", "1 + 0.5*t^0.3");
        let tr = Transforms::new(&s).unwrap();
        assert!(tr.k_primitive().table().is_some());
        for t in [1e-3, 0.37, 1.0, 5.5, 120.0, 3e4] {
            let a = tr.big_k(t).unwrap();
            let b = big_k(&s, t).unwrap();
            assert!((a - b).abs() <= 1e-9 * b, "K({t}): {a} vs {b}");
            let x = tr.big_k_inverse(a).unwrap();
            assert!((x - t).abs() <= 1e-9 * t);
        }
        for t in [1e-2, 0.5, 3.0, 20.0] {
            let a = tr.big_f(t, FVariant::Plain).unwrap();
            let b = big_f(&s, t, FVariant::Plain).unwrap();
            assert!((a - b).abs() <= 1e-9 * b, "F({t}): {a} vs {b}");
        }
    }

    #[test]
    fn fhat_table_matches_nested_quadrature() {
        let c = Constants { theta: Some(0.0), ..Default::default() };
        let d = ProblemSpec::difference(H1, "t", "t^2", "exp(-t)", "t^2", c).unwrap();
        let tr = Transforms::new(&d).unwrap();
        for t in [0.2, 1.0, 4.0] {
            let a = tr.big_f(t, FVariant::Hat).unwrap();
            let b = big_f(&d, t, FVariant::Hat).unwrap();
            assert!((a - b).abs() <= 1e-8 * b, "{a} vs {b}");
            let h = tr.big_h(t).unwrap();
            assert!((h - (1.0 - (-t).exp())).abs() < 1e-12);
        }
    }

    #[test]
    fn values_past_the_float_range_are_overflow_errors() {
        let c = Constants { theta: Some(0.0), ..Default::default() };
        let d = ProblemSpec::difference(H1, "t", "t^1.3", "exp(-t)", "t^2", c).unwrap();
        let tr = Transforms::new(&d).unwrap();
        assert!(tr.big_f(1e120, FVariant::Hat).unwrap().is_finite());
        assert!(matches!(tr.big_f(1e200, FVariant::Hat), Err(Error::Overflow(_))));
    }

    #[test]
    fn tail_primitive_and_inverse() {
        let g: Integrand = Arc::new(|s: f64| Ok(1.0 / (s * s + s.powi(3))));
        let p =
            Primitive::new(TransformKind::Barrier, g, Anchor::Tail, None, (0.1, 1e6), QuadOptions::default(), 1e-12)
                .unwrap();
        // int_x^inf ds/(s^2(1+s)) = 1/x - ln(1 + 1/x)
        for x in [0.05f64, 0.3, 2.0, 40.0, 1e7] {
            let exact = if x > 1e3 {
                (2..8).map(|k| (-1f64).powi(k) / (k as f64 * x.powi(k))).sum()
            } else {
                1.0 / x - (1.0 + 1.0 / x).ln()
            };
            let v = p.eval(x).unwrap();
            assert!((v - exact).abs() <= 1e-9 * exact, "{x}: {v} vs {exact}");
            let back = p.inverse(v).unwrap();
            assert!((back - x).abs() <= 1e-8 * x);
        }
    }

    #[test]
    fn shifted_forward_primitive() {
        let g: Integrand = Arc::new(|s: f64| Ok(s.sqrt()));
        let p = Primitive::new(
            TransformKind::Barrier,
            g,
            Anchor::From(1.0),
            None,
            (1e-6, 1e4),
            QuadOptions::default(),
            1e-12,
        )
        .unwrap();
        let exact = |x: f64| 2.0 / 3.0 * (1.5 * (x - 1.0).ln_1p()).exp_m1();
        for x in [1.0 + 1e-8, 1.001, 2.0, 100.0, 1e5] {
            let v = p.eval(x).unwrap();
            assert!((v - exact(x)).abs() <= 1e-10 * exact(x), "{x}: {v} vs {}", exact(x));
            assert!((p.inverse(exact(x)).unwrap() - x).abs() <= 1e-9 * x);
        }
    }

    #[test]
    fn divergent_tail_is_an_error() {
        let g: Integrand = Arc::new(|s: f64| Ok(1.0 / s));
        let opts = QuadOptions { node_budget: 5_000, ..Default::default() };
        assert!(Primitive::new(TransformKind::Barrier, g, Anchor::Tail, None, (1.0, 1e3), opts, 1e-12).is_err());
    }
}
