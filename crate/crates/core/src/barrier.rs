//! Explicit radial barriers: blow-up and bounded supersolutions, the
//! gradient-term supersolution, the glued p-Laplacian subsolution and the
//! phi-harmonic annulus profile.
//!
//! Every profile is defined implicitly by an integral equation in its value
//! and evaluated by inverting a cached [`Primitive`]; first and second
//! derivatives come from the differentiated equation, never from
//! differences.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::heisenberg::RadialProfile;
use crate::ko::{decide_ko_with, Verdict};
use crate::profile::{PowerLaw, ProblemSpec, Profile};
use crate::quadrature::{integrate_strict, QuadOptions};
use crate::roots::{bracket_increasing, solve_increasing};
use crate::transforms::{Anchor, FVariant, Primitive, TransformKind, Transforms};
use crate::validate::c_monotone_estimate;

/// Points checked against the differential inequality inside sigma loops.
const LOOP_AUDIT_POINTS: usize = 200;
/// Decades of `T - t` covered by the audit grid of blow-up profiles.
const BLOWUP_DECADES: f64 = 6.0;
const RESIDUAL_SLACK: f64 = 1e-9;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum BarrierKind {
    SupersolutionKO,
    SupersolutionBounded,
    SupersolutionGradient,
    SubsolutionP,
    AnnulusHarmonic,
}

/// Right-hand side a radial profile is compared against.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "type")]
pub enum RadialRhs {
    /// `factor f(alpha) l(alpha')`.
    Scaled {
        factor: f64,
    },
    /// `f(alpha)/D - h(alpha) alpha'^2 phi'(alpha')`.
    Gradient {
        inv_d: f64,
    },
    Zero,
}

type Jet = Arc<dyn Fn(f64) -> Result<[f64; 3]> + Send + Sync>;

/// A radial profile `alpha` on `[t0, t_end)` with its first two derivatives.
#[derive(Clone)]
pub struct Barrier {
    kind: BarrierKind,
    kappa: f64,
    rhs: RadialRhs,
    sigma: Option<f64>,
    iterations: usize,
    t0: f64,
    t_end: f64,
    ceiling: Option<f64>,
    eps: Option<f64>,
    eta: Option<f64>,
    t1: Option<f64>,
    annulus_c: Option<f64>,
    jet: Jet,
}

impl fmt::Debug for Barrier {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Barrier")
            .field("kind", &self.kind)
            .field("sigma", &self.sigma)
            .field("t0", &self.t0)
            .field("t_end", &self.t_end)
            .field("ceiling", &self.ceiling)
            .finish()
    }
}

/// Serializable description of a constructed barrier.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BarrierSummary {
    pub kind: BarrierKind,
    pub sigma: Option<f64>,
    pub sigma_iterations: usize,
    pub t0: f64,
    /// Blow-up time, time at which the ceiling is reached, or outer radius.
    pub t_end: Option<f64>,
    pub ceiling: Option<f64>,
    pub eps: Option<f64>,
    pub eta: Option<f64>,
    pub t1: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub annulus_c: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub t_sigma: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub s0: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub gluing_rate: Option<f64>,
}

impl Barrier {
    pub fn kind(&self) -> BarrierKind {
        self.kind
    }

    pub fn sigma(&self) -> Option<f64> {
        self.sigma
    }

    pub fn t0(&self) -> f64 {
        self.t0
    }

    /// `T_sigma` (or the outer radius); infinite for the subsolution.
    pub fn t_end(&self) -> f64 {
        self.t_end
    }

    pub fn ceiling(&self) -> Option<f64> {
        self.ceiling
    }

    pub fn eps(&self) -> Option<f64> {
        self.eps
    }

    /// Coefficient of `phi(alpha')/t` in the radial operator.
    pub fn kappa(&self) -> f64 {
        self.kappa
    }

    pub fn rhs(&self) -> RadialRhs {
        self.rhs
    }

    pub fn sigma_iterations(&self) -> usize {
        self.iterations
    }

    pub fn alpha(&self, t: f64) -> Result<f64> {
        Ok(self.jet(t)?[0])
    }

    pub fn alpha_prime(&self, t: f64) -> Result<f64> {
        Ok(self.jet(t)?[1])
    }

    pub fn alpha_second(&self, t: f64) -> Result<f64> {
        Ok(self.jet(t)?[2])
    }

    pub fn jet(&self, t: f64) -> Result<[f64; 3]> {
        (self.jet)(t)
    }

    pub fn summary(&self) -> BarrierSummary {
        BarrierSummary {
            kind: self.kind,
            sigma: self.sigma,
            sigma_iterations: self.iterations,
            t0: self.t0,
            t_end: self.t_end.is_finite().then_some(self.t_end),
            ceiling: self.ceiling,
            eps: self.eps,
            eta: self.eta,
            t1: self.t1,
            annulus_c: self.annulus_c,
            t_sigma: None,
            theta: None,
            s0: None,
            gluing_rate: None,
        }
    }

    /// `n` points of the domain: uniform for bounded domains, and
    /// geometrically clustered towards the blow-up time otherwise.
    pub fn audit_grid(&self, n: usize) -> Vec<f64> {
        let n = n.max(2);
        let (a, b) = (self.t0, self.t_end);
        if !b.is_finite() {
            // Subsolution: interior of the inner ball, then log-spaced out.
            let half = n / 2;
            let mut g: Vec<f64> = (1..=half).map(|j| a * j as f64 / (half + 1) as f64).collect();
            g.extend((0..n - half).map(|j| a * 10f64.powf(4.0 * j as f64 / (n - half - 1).max(1) as f64)));
            return g;
        }
        if self.ceiling.is_some() || self.kind == BarrierKind::AnnulusHarmonic {
            return (0..n).map(|j| (a + (b - a) * j as f64 / (n - 1) as f64).min(b)).collect();
        }
        (0..n).map(|j| b - (b - a) * 10f64.powf(-BLOWUP_DECADES * j as f64 / (n - 1) as f64)).collect()
    }

    /// Samples `(t, alpha, alpha', alpha'')` on the audit grid, leaving out
    /// points where the profile has left the float range.
    pub fn sample(&self, n: usize) -> Result<Vec<[f64; 4]>> {
        let mut out = Vec::with_capacity(n);
        for t in self.audit_grid(n) {
            match self.jet(t) {
                Ok([a, d, dd]) => out.push([t, a, d, dd]),
                Err(Error::Overflow(_)) => {}
                Err(e) => return Err(e),
            }
        }
        Ok(out)
    }

    /// `phi'(a') a'' + kappa/t phi(a') - rhs` at `t`, with the magnitude of
    /// the largest term for scaling slacks.
    pub fn residual_at(&self, spec: &ProblemSpec, t: f64) -> Result<(f64, f64)> {
        let [a, d, dd] = self.jet(t)?;
        radial_residual_terms(spec, self.kappa, self.rhs, t, a, d, dd)
    }
}

impl RadialProfile for Barrier {
    fn jet(&self, t: f64) -> Result<[f64; 3]> {
        Barrier::jet(self, t)
    }
}

pub(crate) fn radial_residual_terms(
    spec: &ProblemSpec,
    kappa: f64,
    rhs: RadialRhs,
    t: f64,
    a: f64,
    d: f64,
    dd: f64,
) -> Result<(f64, f64)> {
    let phi = &spec.phi;
    let g = d.abs();
    let second = if dd == 0.0 { 0.0 } else { phi.deriv(g)? * dd };
    let first = if kappa == 0.0 || d == 0.0 { 0.0 } else { kappa / t * d.signum() * phi.eval(g)? };
    let r = match rhs {
        RadialRhs::Scaled { factor } => factor * spec.rhs.f().eval(a)? * spec.l_eval(g)?,
        RadialRhs::Gradient { inv_d } => {
            let h = spec.rhs.h().map(|h| h.eval(a)).transpose()?.unwrap_or(0.0);
            inv_d * spec.rhs.f().eval(a)? - h * d * d * phi.deriv(g)?
        }
        RadialRhs::Zero => 0.0,
    };
    let scale = second.abs().max(first.abs()).max(r.abs());
    Ok((second + first - r, scale))
}

/// Integrand `e^{H(s)} / K^{-1}(sigma F(s))` (`H = 0` for the plain variant).
fn barrier_integrand(
    tr: &Arc<Transforms>,
    sigma: f64,
    variant: FVariant,
) -> Arc<dyn Fn(f64) -> Result<f64> + Send + Sync> {
    let tr = Arc::clone(tr);
    Arc::new(move |s: f64| {
        let k = tr.big_k_inverse(sigma * tr.big_f(s, variant)?)?;
        if !(k > 0.0) {
            return Err(Error::Domain(format!("K^-1(sigma F({s})) = {k}")));
        }
        let eh = if variant == FVariant::Hat { tr.big_h(s)?.exp() } else { 1.0 };
        Ok(eh / k)
    })
}

/// Exact power law of the plain integrand when `K` and `F` are power laws:
/// `K = Ck t^bk`, `F = Cf t^bf` give `(sigma Cf/Ck)^(-1/bk) s^(-bf/bk)`.
fn closed_integrand(tr: &Transforms, sigma: f64) -> Option<PowerLaw> {
    let k = tr.k_primitive().closed_form()?;
    let f = tr.f_primitive().closed_form()?;
    let (bk, bf) = (k.a + 1.0, f.a + 1.0);
    let (ck, cf) = (k.c / bk, f.c / bf);
    Some(PowerLaw { c: (sigma * cf / ck).powf(-1.0 / bk), a: -bf / bk })
}

fn barrier_opts(spec: &ProblemSpec) -> QuadOptions {
    let t = &spec.tolerances;
    QuadOptions { abs_tol: 1e-300, rel_tol: t.quad_rel.min(1e-12), node_budget: t.node_budget }
}

fn primitive(
    spec: &ProblemSpec,
    tr: &Arc<Transforms>,
    sigma: f64,
    variant: FVariant,
    anchor: Anchor,
    lo: f64,
) -> Result<Primitive> {
    let closed = if variant == FVariant::Plain || !tr.has_h() { closed_integrand(tr, sigma) } else { None };
    let range = match anchor {
        Anchor::From(_) => (1e-9 * lo, 1e9 * lo),
        Anchor::Tail => (lo, 1e15 * lo),
    };
    Primitive::new(
        TransformKind::Barrier,
        barrier_integrand(tr, sigma, variant),
        anchor,
        closed,
        range,
        barrier_opts(spec),
        spec.tolerances.root_rel,
    )
}

fn check_super_params(eps: f64, eta: f64, t0: f64, t1: f64) -> Result<()> {
    if !(eps > 0.0 && eps < eta) {
        return Err(Error::Invalid(format!("need 0 < eps < eta, got eps={eps}, eta={eta}")));
    }
    if !(t0 > 0.0 && t0 < t1) {
        return Err(Error::Invalid(format!("need 0 < t0 < t1, got t0={t0}, t1={t1}")));
    }
    Ok(())
}

fn c_monotone(spec: &ProblemSpec) -> Result<f64> {
    match (spec.constants.c_monotone, spec.rhs.l()) {
        (Some(c), _) => Ok(c),
        (None, Some(l)) => c_monotone_estimate(l, spec.tolerances.grid_n),
        (None, None) => Ok(1.0),
    }
}

/// Outcome of the shared sigma-halving loop.
struct Halving {
    sigma: f64,
    iterations: usize,
    prim: Primitive,
}

/// Halves sigma from 1 until the bracket bound is at most `target`, the
/// profile stays below `eta` up to `t1`, and `accept` agrees.
#[allow(clippy::too_many_arguments)]
fn halve_sigma(
    spec: &ProblemSpec,
    tr: &Arc<Transforms>,
    variant: FVariant,
    anchor: Anchor,
    (eps, eta, t0, t1): (f64, f64, f64, f64),
    target: f64,
    bracket: impl Fn(f64) -> Result<f64>,
    mut accept: impl FnMut(f64, &Primitive) -> Result<bool>,
) -> Result<Halving> {
    let budget = spec.tolerances.sigma_budget_super;
    let opts = barrier_opts(spec);
    let mut last = String::from("no iteration ran");
    for k in 0..=budget {
        let sigma = 0.5f64.powi(k as i32);
        let b = bracket(sigma)?;
        if !(b <= target) {
            last = format!("bracket bound {b:.6e} exceeds {target:.6e}");
            continue;
        }
        let g = barrier_integrand(tr, sigma, variant);
        let reach = integrate_strict(|s| g(s), eps, eta, &opts)?;
        if !(reach > t1 - t0) {
            last = format!("int_eps^eta = {reach:.6e} does not exceed t1 - t0");
            continue;
        }
        let prim = primitive(spec, tr, sigma, variant, anchor, eps)?;
        if !accept(sigma, &prim)? {
            last = "audit-grid residual is positive".into();
            continue;
        }
        return Ok(Halving { sigma, iterations: k, prim });
    }
    Err(Error::SigmaExhausted { iterations: budget, reason: last })
}

fn require_ko_not_failing(spec: &ProblemSpec, tr: &Transforms) -> Result<()> {
    let v = decide_ko_with(spec, tr);
    if v.verdict == Verdict::Fails {
        return Err(Error::Invalid("the Keller-Osserman condition fails: no blow-up supersolution exists".into()));
    }
    Ok(())
}

/// Blow-up supersolution `alpha` on `[t0, T_sigma)` with
/// `[phi(alpha')]' + kappa/t phi(alpha') <= Btilde f(alpha) l(alpha')`,
/// `alpha(t0) = eps`, `alpha(t1) <= eta`.
pub fn build_supersolution(spec: &ProblemSpec, eps: f64, eta: f64, t0: f64, t1: f64, btilde: f64) -> Result<Barrier> {
    check_super_params(eps, eta, t0, t1)?;
    if !(btilde > 0.0) {
        return Err(Error::Invalid(format!("Btilde must be positive, got {btilde}")));
    }
    let l = spec.rhs.l().ok_or_else(|| Error::Invalid("supersolution needs the product form".into()))?.clone();
    let tr = Arc::new(Transforms::new(spec)?);
    require_ko_not_failing(spec, &tr)?;
    let kappa = spec.geometry.gauge_constant();
    let c = c_monotone(spec)?;
    let phi = spec.phi.clone();
    let f = spec.rhs.f().clone();
    let bracket = {
        let (tr, phi, f, l) = (Arc::clone(&tr), phi.clone(), f.clone(), l.clone());
        move |sigma: f64| -> Result<f64> {
            let d0 = tr.big_k_inverse(sigma * tr.big_f(eps, FVariant::Plain)?)?;
            Ok(c * (kappa / t0 * phi.eval(d0)? / (f.eval(eps)? * l.eval(d0)?) + (kappa + 1.0) * sigma))
        }
    };
    let h =
        halve_sigma(spec, &tr, FVariant::Plain, Anchor::Tail, (eps, eta, t0, t1), btilde, bracket, |_, _| Ok(true))?;
    let t_end = t0 + h.prim.eval(eps)?;
    let jet = tail_jet(h.prim, Arc::clone(&tr), phi, f, Some(l), h.sigma, t0, t_end, eps);
    Ok(Barrier {
        kind: BarrierKind::SupersolutionKO,
        kappa,
        rhs: RadialRhs::Scaled { factor: btilde },
        sigma: Some(h.sigma),
        iterations: h.iterations,
        t0,
        t_end,
        ceiling: None,
        eps: Some(eps),
        eta: Some(eta),
        t1: Some(t1),
        annulus_c: None,
        jet,
    })
}

/// `alpha = P^{-1}(T - t)` for a tail primitive `P`, with
/// `alpha' = K^{-1}(sigma F(alpha))` and
/// `alpha'' = sigma f(alpha) l(alpha') / phi'(alpha')`.
#[allow(clippy::too_many_arguments)]
fn tail_jet(
    prim: Primitive,
    tr: Arc<Transforms>,
    phi: Profile,
    f: Profile,
    l: Option<Profile>,
    sigma: f64,
    t0: f64,
    t_end: f64,
    eps: f64,
) -> Jet {
    Arc::new(move |t: f64| {
        if !(t >= t0 && t < t_end) {
            return Err(Error::Domain(format!("t = {t} outside [{t0}, {t_end})")));
        }
        let a = if t == t0 { eps } else { prim.inverse(t_end - t)? };
        plain_jet(&tr, &phi, &f, l.as_ref(), sigma, a)
    })
}

fn plain_jet(tr: &Transforms, phi: &Profile, f: &Profile, l: Option<&Profile>, sigma: f64, a: f64) -> Result<[f64; 3]> {
    let d = tr.big_k_inverse(sigma * tr.big_f(a, FVariant::Plain)?)?;
    let lv = match l {
        Some(l) => l.eval(d)?,
        None => 1.0,
    };
    let dd = sigma * f.eval(a)? * lv / phi.deriv(d)?;
    Ok([a, d, dd])
}

/// Supersolution reaching the finite ceiling `A` at `T_sigma`:
/// `T_sigma - t = int_alpha^A ds / K^{-1}(sigma F(s))`.
#[allow(clippy::too_many_arguments)]
pub fn build_supersolution_bounded(
    spec: &ProblemSpec,
    eps: f64,
    eta: f64,
    t0: f64,
    t1: f64,
    btilde: f64,
    ceiling: f64,
) -> Result<Barrier> {
    check_super_params(eps, eta, t0, t1)?;
    if !(ceiling > eta) {
        return Err(Error::Invalid(format!("need A > eta, got A={ceiling}, eta={eta}")));
    }
    if !(btilde > 0.0) {
        return Err(Error::Invalid(format!("Btilde must be positive, got {btilde}")));
    }
    let l = spec.rhs.l().ok_or_else(|| Error::Invalid("supersolution needs the product form".into()))?.clone();
    let tr = Arc::new(Transforms::new(spec)?);
    let kappa = spec.geometry.gauge_constant();
    let c = c_monotone(spec)?;
    let phi = spec.phi.clone();
    let f = spec.rhs.f().clone();
    let bracket = {
        let (tr, phi, f, l) = (Arc::clone(&tr), phi.clone(), f.clone(), l.clone());
        move |sigma: f64| -> Result<f64> {
            let d0 = tr.big_k_inverse(sigma * tr.big_f(eps, FVariant::Plain)?)?;
            Ok(c * (kappa / t0 * phi.eval(d0)? / (f.eval(eps)? * l.eval(d0)?) + (kappa + 1.0) * sigma))
        }
    };
    let h = halve_sigma(spec, &tr, FVariant::Plain, Anchor::From(eps), (eps, eta, t0, t1), btilde, bracket, |_, _| {
        Ok(true)
    })?;
    let t_end = t0 + h.prim.eval(ceiling)?;
    let (prim, trc, sigma) = (h.prim, Arc::clone(&tr), h.sigma);
    let jet: Jet = Arc::new(move |t: f64| {
        if !(t >= t0 && t <= t_end) {
            return Err(Error::Domain(format!("t = {t} outside [{t0}, {t_end}]")));
        }
        let a = if t == t0 { eps } else { prim.inverse(t - t0)? };
        plain_jet(&trc, &phi, &f, Some(&l), sigma, a)
    });
    Ok(Barrier {
        kind: BarrierKind::SupersolutionBounded,
        kappa,
        rhs: RadialRhs::Scaled { factor: btilde },
        sigma: Some(sigma),
        iterations: h.iterations,
        t0,
        t_end,
        ceiling: Some(ceiling),
        eps: Some(eps),
        eta: Some(eta),
        t1: Some(t1),
        annulus_c: None,
        jet,
    })
}

/// Blow-up supersolution for `f(u) - h(u) g(|grad u|)`:
/// `T_sigma - t = int_alpha^inf e^{H(s)} / K^{-1}(sigma F-hat(s)) ds`, with
/// `phi'(a') a'' + kappa/t phi(a') <= f(a)/D - h(a) a'^2 phi'(a')`.
pub fn build_supersolution_gradient(spec: &ProblemSpec, eps: f64, eta: f64, t0: f64, t1: f64) -> Result<Barrier> {
    check_super_params(eps, eta, t0, t1)?;
    let hprof =
        spec.rhs.h().ok_or_else(|| Error::Invalid("gradient supersolution needs the difference form".into()))?.clone();
    let d = spec.constant(crate::profile::ConstantName::D)?;
    let b = if hprof.is_identically_zero() {
        spec.constants.b.unwrap_or(1.0)
    } else {
        spec.constant(crate::profile::ConstantName::B)?
    };
    let tr = Arc::new(Transforms::new(spec)?);
    let kappa = spec.geometry.gauge_constant();
    let phi = spec.phi.clone();
    let f = spec.rhs.f().clone();
    let theta = tr.theta().unwrap_or(0.0);
    let bracket = {
        let (tr, phi, f) = (Arc::clone(&tr), phi.clone(), f.clone());
        move |sigma: f64| -> Result<f64> {
            let d0 = tr.big_k_inverse(sigma * tr.big_f(eps, FVariant::Hat)?)? * (-tr.big_h(eps)?).exp();
            Ok(kappa / t0 * phi.eval(d0)? / f.eval(eps)? + (kappa + 1.0) * sigma / b)
        }
    };
    let make_jet = {
        let (tr, phi, f, hprof) = (Arc::clone(&tr), phi.clone(), f.clone(), hprof.clone());
        move |prim: Primitive, sigma: f64, t_end: f64| -> Jet {
            let (tr, phi, f, hprof) = (Arc::clone(&tr), phi.clone(), f.clone(), hprof.clone());
            Arc::new(move |t: f64| {
                if !(t >= t0 && t < t_end) {
                    return Err(Error::Domain(format!("t = {t} outside [{t0}, {t_end})")));
                }
                let a = if t == t0 { eps } else { prim.inverse(t_end - t)? };
                let big_h = tr.big_h(a)?;
                let kinv = tr.big_k_inverse(sigma * tr.big_f(a, FVariant::Hat)?)?;
                let da = kinv * (-big_h).exp();
                let dd = sigma * f.eval(a)? * (-theta * big_h).exp() / phi.deriv(kinv)? - da * da * hprof.eval(a)?;
                Ok([a, da, dd])
            })
        }
    };
    let inv_d = 1.0 / d;
    let h = halve_sigma(spec, &tr, FVariant::Hat, Anchor::Tail, (eps, eta, t0, t1), inv_d, bracket, |sigma, prim| {
        let t_end = t0 + prim.eval(eps)?;
        let candidate = Barrier {
            kind: BarrierKind::SupersolutionGradient,
            kappa,
            rhs: RadialRhs::Gradient { inv_d },
            sigma: Some(sigma),
            iterations: 0,
            t0,
            t_end,
            ceiling: None,
            eps: Some(eps),
            eta: Some(eta),
            t1: Some(t1),
            annulus_c: None,
            jet: make_jet(prim.clone(), sigma, t_end),
        };
        for t in candidate.audit_grid(LOOP_AUDIT_POINTS) {
            // Points this close to the blow-up leave the float range.
            let (r, scale) = match candidate.residual_at(spec, t) {
                Err(Error::Overflow(_)) => continue,
                other => other?,
            };
            if r > RESIDUAL_SLACK * scale.max(1.0) {
                return Ok(false);
            }
        }
        Ok(true)
    })?;
    let t_end = t0 + h.prim.eval(eps)?;
    Ok(Barrier {
        kind: BarrierKind::SupersolutionGradient,
        kappa,
        rhs: RadialRhs::Gradient { inv_d },
        sigma: Some(h.sigma),
        iterations: h.iterations,
        t0,
        t_end,
        ceiling: None,
        eps: Some(eps),
        eta: Some(eta),
        t1: Some(t1),
        annulus_c: None,
        jet: make_jet(h.prim, h.sigma, t_end),
    })
}

/// `phi^{-1}(v)` refined by Newton steps, so that quadratures of it see a
/// smooth integrand rather than the bisection tolerance.
fn polished_inverse(phi: &Profile, v: f64, rel_tol: f64) -> Result<f64> {
    let mut x = phi.inverse(v, rel_tol)?;
    for _ in 0..3 {
        let d = phi.deriv(x)?;
        if !(d > 0.0) {
            break;
        }
        let next = x - (phi.eval(x)? - v) / d;
        if !(next > 0.0) || next == x {
            break;
        }
        x = next;
    }
    Ok(x)
}

/// Phi-harmonic profile on `[R/2, R]`:
/// `z(t) = a + int_{R/2}^t phi^{-1}(c / s^kappa) ds` with `z(R) = u_star`.
pub fn build_annulus_profile(spec: &ProblemSpec, r: f64, a: f64, u_star: f64) -> Result<Barrier> {
    if !(r > 0.0) || !(a < u_star) {
        return Err(Error::Invalid(format!("need R > 0 and a < u_star, got R={r}, a={a}, u_star={u_star}")));
    }
    let kappa = spec.geometry.gauge_constant();
    let (lo, gap) = (0.5 * r, u_star - a);
    let phi = spec.phi.clone();
    let root_rel = spec.tolerances.root_rel;
    let opts = QuadOptions { abs_tol: 1e-300, rel_tol: 1e-13, node_budget: spec.tolerances.node_budget };

    let (c, jet): (f64, Jet) = match phi.exact_monomial().filter(|m| m.c > 0.0 && m.a > 0.0) {
        Some(pm) => {
            // z' = (c/c0)^(1/a) t^e with e = -kappa/a.
            let e = -kappa / pm.a;
            let unit = move |t: f64| {
                if e == -1.0 {
                    (t / lo).ln()
                } else {
                    lo.powf(e + 1.0) * ((e + 1.0) * (t / lo).ln()).exp_m1() / (e + 1.0)
                }
            };
            let scale = gap / unit(r);
            let c = pm.c * scale.powf(pm.a);
            let jet: Jet = Arc::new(move |t: f64| {
                if !(t >= lo && t <= r) {
                    return Err(Error::Domain(format!("t = {t} outside [{lo}, {r}]")));
                }
                let d = scale * t.powf(e);
                Ok([a + scale * unit(t), d, e * d / t])
            });
            (c, jet)
        }
        None => {
            let reach = |c: f64| -> Result<f64> {
                let p = phi.clone();
                integrate_strict(|s| polished_inverse(&p, c / s.powf(kappa), root_rel), lo, r, &opts)
            };
            let (clo, chi) = bracket_increasing(reach, gap, 1.0)?;
            let c = solve_increasing(reach, None::<fn(f64) -> Result<f64>>, gap, clo, chi, root_rel)?;
            let jet: Jet = Arc::new(move |t: f64| {
                if !(t >= lo && t <= r) {
                    return Err(Error::Domain(format!("t = {t} outside [{lo}, {r}]")));
                }
                let p = phi.clone();
                let z = a + integrate_strict(|s| polished_inverse(&p, c / s.powf(kappa), root_rel), lo, t, &opts)?;
                let d = polished_inverse(&phi, c / t.powf(kappa), root_rel)?;
                let dd = -kappa * c / t.powf(kappa + 1.0) / phi.deriv(d)?;
                Ok([z, d, dd])
            });
            (c, jet)
        }
    };
    Ok(Barrier {
        kind: BarrierKind::AnnulusHarmonic,
        kappa,
        rhs: RadialRhs::Zero,
        sigma: None,
        iterations: 0,
        t0: lo,
        t_end: r,
        ceiling: Some(u_star),
        eps: None,
        eta: None,
        t1: None,
        annulus_c: Some(c),
        jet,
    })
}

/// Default rate of the exponential gluing map.
pub const DEFAULT_GLUING_RATE: f64 = 1.0;

/// Subsolution `u(z, t) = U(|z|)` for the p-Laplacian: the Cauchy profile
/// `alpha` on `[0, t_sigma]` glued to `gamma(w_sigma)` beyond.
#[derive(Debug, Clone)]
pub struct GluedSubsolution {
    pub sigma: f64,
    pub sigma_iterations: usize,
    pub eps: f64,
    pub t_sigma: f64,
    pub theta: f64,
    pub gluing_rate: f64,
    /// `gamma'` at the junction, `alpha'(t_sigma)/w'(t_sigma)`.
    pub s0: f64,
    /// `w_sigma(t_sigma) = 2 eps`.
    pub w0: f64,
    /// `alpha(t_sigma)`.
    pub alpha_junction: f64,
    pub p: f64,
    barrier: Barrier,
    parts: Arc<SubParts>,
}

struct SubParts {
    tr: Arc<Transforms>,
    prim: Primitive,
    phi: Profile,
    f: Profile,
    l: Profile,
    sigma: f64,
    /// `(Theta/c)^(1/(p-1))` for `phi = c t^(p-1)`.
    inner_scale: f64,
    q: f64,
    t_sigma: f64,
    w0: f64,
    s0: f64,
    k: f64,
    alpha_junction: f64,
}

impl fmt::Debug for SubParts {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SubParts").field("sigma", &self.sigma).field("t_sigma", &self.t_sigma).finish()
    }
}

impl SubParts {
    /// `alpha(t) = int_0^t phi^{-1}(Theta s) ds` in closed form.
    fn inner(&self, t: f64) -> [f64; 3] {
        let q = self.q;
        let (a, d) = (self.inner_scale * t.powf(q + 1.0) / (q + 1.0), self.inner_scale * t.powf(q));
        let dd = if t == 0.0 && q < 1.0 { f64::INFINITY } else { q * self.inner_scale * t.powf(q - 1.0) };
        [a, d, dd]
    }

    /// `w_sigma` and its derivatives from `x = int_eps^w ds / K^{-1}(sigma F)`.
    fn w(&self, x: f64) -> Result<[f64; 3]> {
        let w = if x == self.t_sigma { self.w0 } else { self.prim.inverse(x)? };
        plain_jet(&self.tr, &self.phi, &self.f, Some(&self.l), self.sigma, w)
    }

    fn gamma(&self, y: f64) -> [f64; 3] {
        let (k, s0) = (self.k, self.s0);
        let x = y - self.w0;
        let decay = (-k * x).exp();
        [self.alpha_junction + x + (1.0 - s0) * (-k * x).exp_m1() / k, 1.0 - (1.0 - s0) * decay, k * (1.0 - s0) * decay]
    }

    fn outer(&self, x: f64) -> Result<[f64; 3]> {
        let [w, dw, ddw] = self.w(x)?;
        let [g, dg, ddg] = self.gamma(w);
        Ok([g, dg * dw, ddg * dw * dw + dg * ddw])
    }

    fn jet(&self, x: f64) -> Result<[f64; 3]> {
        if !(x >= 0.0) {
            return Err(Error::Domain(format!("|z| = {x} is negative")));
        }
        if x <= self.t_sigma {
            Ok(self.inner(x))
        } else {
            self.outer(x)
        }
    }
}

impl GluedSubsolution {
    pub fn barrier(&self) -> &Barrier {
        &self.barrier
    }

    pub fn jet(&self, x: f64) -> Result<[f64; 3]> {
        self.parts.jet(x)
    }

    pub fn inner_jet(&self, x: f64) -> [f64; 3] {
        self.parts.inner(x)
    }

    pub fn outer_jet(&self, x: f64) -> Result<[f64; 3]> {
        self.parts.outer(x)
    }

    /// `[gamma, gamma', gamma'']` at `y >= w0`.
    pub fn gamma(&self, y: f64) -> [f64; 3] {
        self.parts.gamma(y)
    }

    pub fn w_jet(&self, x: f64) -> Result<[f64; 3]> {
        self.parts.w(x)
    }

    /// Absolute value and slope mismatch of the two branches at `t_sigma`.
    pub fn junction_mismatch(&self) -> Result<(f64, f64)> {
        let i = self.parts.inner(self.t_sigma);
        let o = self.parts.outer(self.t_sigma)?;
        Ok(((i[0] - o[0]).abs(), (i[1] - o[1]).abs()))
    }

    pub fn summary(&self) -> BarrierSummary {
        BarrierSummary {
            t_sigma: Some(self.t_sigma),
            theta: Some(self.theta),
            s0: Some(self.s0),
            gluing_rate: Some(self.gluing_rate),
            ..self.barrier.summary()
        }
    }
}

impl RadialProfile for GluedSubsolution {
    fn jet(&self, t: f64) -> Result<[f64; 3]> {
        self.parts.jet(t)
    }
}

/// Smallest power of two with `K^{-1}(F(eps)) > 1`, i.e. `F(eps) > K(1)`.
pub fn auto_eps(tr: &Transforms) -> Result<f64> {
    let k1 = tr.big_k(1.0)?;
    for e in -60..=60 {
        let eps = 2f64.powi(e);
        if tr.big_f(eps, FVariant::Plain)? > k1 {
            return Ok(eps);
        }
    }
    Err(Error::Bracket("no eps in [2^-60, 2^60] with K^-1(F(eps)) > 1".into()))
}

/// Glued subsolution for `phi = c t^(p-1)` when the Keller-Osserman
/// condition fails. `eps = None` selects it automatically.
pub fn build_subsolution_p(spec: &ProblemSpec, eps: Option<f64>, gluing_rate: f64) -> Result<GluedSubsolution> {
    let pm = spec
        .phi
        .exact_monomial()
        .filter(|m| m.c > 0.0 && m.a > 0.0)
        .ok_or_else(|| Error::Invalid("the glued subsolution needs phi = c t^(p-1)".into()))?;
    let p = pm.a + 1.0;
    if !(gluing_rate > 0.0) {
        return Err(Error::Invalid(format!("gluing rate must be positive, got {gluing_rate}")));
    }
    let l = spec.rhs.l().ok_or_else(|| Error::Invalid("subsolution needs the product form".into()))?.clone();
    let tr = Arc::new(Transforms::new(spec)?);
    if decide_ko_with(spec, &tr).verdict == Verdict::Holds {
        return Err(Error::Invalid("the Keller-Osserman condition holds: no entire subsolution exists".into()));
    }
    let eps = match eps {
        Some(e) if e > 0.0 => e,
        Some(e) => return Err(Error::Invalid(format!("eps must be positive, got {e}"))),
        None => auto_eps(&tr)?,
    };
    let threshold = c_monotone(spec)? * spec.constants.lambda.unwrap_or(1.0).max(1.0);
    let (phi, f) = (spec.phi.clone(), spec.rhs.f().clone());
    let q = 1.0 / pm.a;
    let budget = spec.tolerances.sigma_budget_sub;
    let mut last = String::from("no iteration ran");
    for k in 0..=budget {
        let sigma = 2f64.powi(k as i32);
        let prim = primitive(spec, &tr, sigma, FVariant::Plain, Anchor::From(eps), eps)?;
        let t_sigma = prim.eval(2.0 * eps)?;
        let theta = phi.eval(1.0)? / t_sigma;
        let inner_scale = (theta / pm.c).powf(q);
        let s0 = 1.0 / tr.big_k_inverse(sigma * tr.big_f(2.0 * eps, FVariant::Plain)?)?;
        let parts = SubParts {
            tr: Arc::clone(&tr),
            prim,
            phi: phi.clone(),
            f: f.clone(),
            l: l.clone(),
            sigma,
            inner_scale,
            q,
            t_sigma,
            w0: 2.0 * eps,
            s0,
            k: gluing_rate,
            alpha_junction: 0.0,
        };
        let alpha_junction = parts.inner(t_sigma)[0];
        // (a) the inner profile stays below eps.
        if !(alpha_junction < eps) {
            last = format!("alpha(t_sigma) = {alpha_junction:.6e} >= eps");
            continue;
        }
        // (b) f(alpha) l(alpha') <= Theta on [0, t_sigma].
        let mut inner_ok = true;
        for j in 0..=LOOP_AUDIT_POINTS {
            let t = t_sigma * j as f64 / LOOP_AUDIT_POINTS as f64;
            let [a, d, _] = parts.inner(t);
            if f.eval(a)? * l.eval(d)? > theta {
                inner_ok = false;
                break;
            }
        }
        if !inner_ok {
            last = "f(alpha) l(alpha') exceeds Theta on [0, t_sigma]".into();
            continue;
        }
        // (c) sigma s0^(p-1) dominates the constants of the outer estimate.
        let outer = sigma * s0.powf(p - 1.0);
        if !(outer >= threshold) {
            last = format!("sigma s0^(p-1) = {outer:.6e} < {threshold:.6e}");
            continue;
        }
        let parts = Arc::new(SubParts { alpha_junction, ..parts });
        let pj = Arc::clone(&parts);
        let barrier = Barrier {
            kind: BarrierKind::SubsolutionP,
            kappa: spec.geometry.stationary_constant(),
            rhs: RadialRhs::Scaled { factor: 1.0 },
            sigma: Some(sigma),
            iterations: k,
            t0: t_sigma,
            t_end: f64::INFINITY,
            ceiling: None,
            eps: Some(eps),
            eta: None,
            t1: None,
            annulus_c: None,
            jet: Arc::new(move |x| pj.jet(x)),
        };
        return Ok(GluedSubsolution {
            sigma,
            sigma_iterations: k,
            eps,
            t_sigma,
            theta,
            gluing_rate,
            s0,
            w0: 2.0 * eps,
            alpha_junction,
            p,
            barrier,
            parts,
        });
    }
    Err(Error::SigmaExhausted { iterations: budget, reason: last })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::heisenberg::Geometry;
    use crate::profile::Constants;

    const H1: Geometry = Geometry::Heisenberg { m: 1 };

    fn p2(f: &str) -> ProblemSpec {
        ProblemSpec::product(H1, "t", f, "1", Constants::default()).unwrap()
    }

    fn assert_consistent(b: &Barrier, points: &[f64]) {
        for &t in points {
            let room = (t - b.t0()).min(b.t_end() - t);
            let h = 1e-3 * room.min(t);
            let [_, d, dd] = b.jet(t).unwrap();
            let (p, m) = (b.jet(t + h).unwrap(), b.jet(t - h).unwrap());
            let fd1 = (p[0] - m[0]) / (2.0 * h);
            let fd2 = (p[1] - m[1]) / (2.0 * h);
            assert!((fd1 - d).abs() <= 1e-5 * d.abs(), "alpha' at {t}: {fd1} vs {d}");
            assert!((fd2 - dd).abs() <= 1e-4 * dd.abs().max(1e-12), "alpha'' at {t}: {fd2} vs {dd}");
        }
    }

    #[test]
    fn supersolution_quadratic() {
        let b = build_supersolution(&p2("t^2"), 0.1, 0.2, 1.0, 2.0, 1.0).unwrap();
        assert_eq!(b.alpha(1.0).unwrap(), 0.1);
        assert!(b.alpha(2.0).unwrap() <= 0.2);
        let t_end = b.t_end();
        assert!(b.alpha(t_end - 1e-6).unwrap() > 1e5);
        // For K^-1(v) = sqrt(2v), F = t^3/3 the profile is explicit:
        // alpha = 6 / (sigma (T - t)^2) / 4 ... checked through its integral.
        let sigma = b.sigma().unwrap();
        let c = (2.0 * sigma / 3.0f64).powf(-0.5);
        for t in [1.5, 10.0, t_end - 1.0] {
            let a = b.alpha(t).unwrap();
            let tail = 2.0 * c / a.sqrt();
            assert!((tail - (t_end - t)).abs() <= 1e-10 * (t_end - t), "t = {t}");
        }
        for t in b.audit_grid(1000) {
            let (r, _) = b.residual_at(&p2("t^2"), t).unwrap();
            assert!(r <= 0.0, "residual {r} at {t}");
        }
        let g = b.audit_grid(50);
        assert_consistent(&b, &g[1..45]);
    }

    #[test]
    fn bounded_audit_grid_stays_in_the_domain() {
        // `t0 + (t_end - t0)` rounds one ulp past `t_end` for this profile.
        let b = build_supersolution_bounded(&p2("t^1.3447771558222126"), 0.1, 0.2, 1.0, 2.0, 1.0, 10.0).unwrap();
        let grid = b.audit_grid(200);
        assert_eq!(*grid.last().unwrap(), b.t_end());
        for t in grid {
            b.jet(t).unwrap();
        }
    }

    #[test]
    fn bounded_reaches_ceiling() {
        let b = build_supersolution_bounded(&p2("t^2"), 0.1, 0.2, 1.0, 2.0, 1.0, 10.0).unwrap();
        assert_eq!(b.alpha(1.0).unwrap(), 0.1);
        assert!((b.alpha(b.t_end()).unwrap() - 10.0).abs() <= 1e-8);
        let g = b.audit_grid(40);
        assert_consistent(&b, &g[1..39]);
    }

    #[test]
    fn supersolution_refuses_failing_ko() {
        let e = build_supersolution(&p2("t^0.5"), 0.1, 0.2, 1.0, 2.0, 1.0).unwrap_err();
        assert!(matches!(e, Error::Invalid(_)), "{e}");
    }

    #[test]
    fn gradient_without_h_matches_plain() {
        let c = Constants { d: Some(2.0), ..Default::default() };
        let spec = ProblemSpec::difference(H1, "t", "t^2", "0", "t^2", c).unwrap();
        let g = build_supersolution_gradient(&spec, 0.1, 0.2, 1.0, 2.0).unwrap();
        let b = build_supersolution(&p2("t^2"), 0.1, 0.2, 1.0, 2.0, 0.5).unwrap();
        assert_eq!(g.sigma(), b.sigma());
        for t in [1.0, 1.7, 3.0] {
            let (x, y) = (g.alpha(t).unwrap(), b.alpha(t).unwrap());
            assert!((x - y).abs() <= 1e-10 * y, "{x} vs {y}");
        }
    }

    #[test]
    fn gradient_with_slowly_decaying_integrand() {
        // The integrand decays like s^-1.15, so the profile leaves the float
        // range well inside the audit grid.
        let c = Constants { d: Some(1.0), b: Some(1.0), theta: Some(0.0), ..Default::default() };
        let spec = ProblemSpec::difference(H1, "t", "t^1.3", "exp(-t)", "t^2", c).unwrap();
        let b = build_supersolution_gradient(&spec, 0.1, 0.2, 1.0, 2.0).unwrap();
        let rows = b.sample(200).unwrap();
        assert!(rows.len() >= 100, "{} rows", rows.len());
        assert!(rows.windows(2).all(|w| w[1][1] > w[0][1]));
    }

    #[test]
    fn gradient_with_decaying_h() {
        let c = Constants { d: Some(1.0), b: Some(1.0), theta: Some(0.0), ..Default::default() };
        let spec = ProblemSpec::difference(H1, "t", "t^2", "exp(-t)", "t^2", c).unwrap();
        let b = build_supersolution_gradient(&spec, 0.1, 0.2, 1.0, 2.0).unwrap();
        assert!(b.alpha(2.0).unwrap() <= 0.2);
        for t in b.audit_grid(300) {
            let (r, scale) = b.residual_at(&spec, t).unwrap();
            assert!(r <= 1e-9 * scale.max(1.0), "residual {r} at {t}");
        }
        let g = b.audit_grid(40);
        assert_consistent(&b, &g[1..30]);
    }

    #[test]
    fn annulus_kohn_closed_form() {
        let spec = p2("t^2");
        let (r, a, u) = (2.0, 1.0, 3.0);
        let b = build_annulus_profile(&spec, r, a, u).unwrap();
        let c = b.summary().annulus_c.unwrap();
        let expect = (u - a) * 2.0 / ((r / 2.0f64).powi(-2) - r.powi(-2));
        assert!((c - expect).abs() <= 1e-12 * expect);
        assert!((b.alpha(1.0).unwrap() - a).abs() <= 1e-12);
        assert!((b.alpha(2.0).unwrap() - u).abs() <= 1e-12);
        for t in b.audit_grid(50) {
            let (res, _) = b.residual_at(&spec, t).unwrap();
            assert!(res.abs() <= 1e-10, "{res}");
        }
    }

    #[test]
    fn annulus_general_phi_by_quadrature() {
        let spec = ProblemSpec::product(H1, "t + t^3", "t^2", "1", Constants::default()).unwrap();
        let b = build_annulus_profile(&spec, 2.0, 0.0, 1.0).unwrap();
        assert!((b.alpha(2.0).unwrap() - 1.0).abs() <= 1e-9);
        for t in [1.1, 1.5, 1.9] {
            let (res, scale) = b.residual_at(&spec, t).unwrap();
            assert!(res.abs() <= 1e-8 * scale.max(1.0), "{res}");
        }
    }

    #[test]
    fn subsolution_sqrt() {
        let s = build_subsolution_p(&p2("t^0.5"), None, DEFAULT_GLUING_RATE).unwrap();
        assert_eq!(s.eps, 1.0);
        let (dv, dd) = s.junction_mismatch().unwrap();
        assert!(dv <= 1e-9 && dd <= 1e-9, "{dv} {dd}");
        // s0 = 1/K^-1(sigma F(2 eps)) with K^-1(v) = sqrt(2 v).
        let f2 = 2.0 / 3.0 * 2f64.powf(1.5);
        assert!((s.s0 - 1.0 / (2.0 * s.sigma * f2).sqrt()).abs() <= 1e-12);
        assert!(s.s0 < 1.0);
        assert!(s.jet(1e3).unwrap()[0] > 1e2);
        // gamma(y) - y <= alpha(t_sigma) - 2 eps < 0
        for y in [2.0, 3.0, 10.0, 1e3] {
            let [g, dg, ddg] = s.gamma(y);
            assert!(g - y <= s.alpha_junction - 2.0 * s.eps + 1e-12);
            assert!(dg > 0.0 && dg <= 1.0 && ddg >= 0.0);
        }
    }

    #[test]
    fn subsolution_ratio_grows_with_sigma() {
        let spec = p2("t^0.5");
        let tr = Transforms::new(&spec).unwrap();
        let ratio = |sigma: f64| sigma / tr.big_k_inverse(sigma * tr.big_f(2.0, FVariant::Plain).unwrap()).unwrap();
        let mut prev = 0.0;
        for k in 0..8 {
            let r = ratio(2f64.powi(k));
            assert!(r > prev);
            prev = r;
        }
    }

    #[test]
    fn subsolution_needs_monomial_phi() {
        let spec = ProblemSpec::product(H1, "t + t^2", "t^0.5", "1", Constants::default()).unwrap();
        assert!(matches!(build_subsolution_p(&spec, None, 1.0), Err(Error::Invalid(_))));
    }
}
