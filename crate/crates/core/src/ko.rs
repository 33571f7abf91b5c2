//! Decision of the Keller-Osserman conditions
//! `1/K^{-1}(F) in L^1(+inf)` and `e^H/K^{-1}(F-hat) in L^1(+inf)`.
//!
//! Power-law data are decided exactly by exponent arithmetic. Anything else
//! goes through a numeric tail test whose verdicts are only ever "likely":
//! integrability at infinity cannot be settled from finitely many samples.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::profile::{ConstantName, ProblemSpec};
use crate::quadrature::{integrate, integrate_strict, QuadOptions};
use crate::transforms::{FVariant, Transforms};

/// First point of the numeric tail grid.
pub const TAIL_START: f64 = 10.0;
/// Number of doublings of the tail grid.
pub const TAIL_DOUBLINGS: usize = 12;
/// Slope tolerance around the critical value -1.
pub const SLOPE_DELTA: f64 = 0.05;
/// Consecutive slopes that must agree.
pub const STABILITY_WINDOW: usize = 4;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Condition {
    KO,
    KOhat,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Verdict {
    Holds,
    Fails,
    Inconclusive,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Tier {
    ExactPowerLaw,
    NumericTail,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type")]
pub enum Evidence {
    /// `K'(t) ~ t^k_integrand_exponent`, `F(t) ~ t^f_growth`; the integrand
    /// decays like `t^-ratio` with `ratio = f_growth / k_growth`.
    ExponentComparison {
        k_integrand_exponent: f64,
        k_growth: f64,
        f_growth: f64,
        ratio: f64,
    },
    /// Tail grid `t_k`, partial integrals from `t_0`, and the log-log slopes
    /// of the mean integrand over each doubling.
    TailSlopes {
        t: Vec<f64>,
        partial_integrals: Vec<f64>,
        slopes: Vec<f64>,
        window: usize,
        delta: f64,
    },
    /// The hat condition was reduced to the plain one.
    Reduction {
        reason: String,
        hat_tail: Option<Box<Evidence>>,
    },
    Unavailable {
        reason: String,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KoVerdict {
    pub condition: Condition,
    pub verdict: Verdict,
    pub tier: Tier,
    pub evidence: Evidence,
    pub sigma_used: f64,
}

impl KoVerdict {
    fn inconclusive(condition: Condition, reason: String) -> Self {
        KoVerdict {
            condition,
            verdict: Verdict::Inconclusive,
            tier: Tier::NumericTail,
            evidence: Evidence::Unavailable { reason },
            sigma_used: 1.0,
        }
    }
}

/// Exponent arithmetic when `phi'`, `l` and `f` all have power-law
/// asymptotes at infinity.
fn exact_tier(spec: &ProblemSpec) -> Option<KoVerdict> {
    let dphi = spec.phi.deriv_asymptote()?;
    let a_l = match spec.rhs.l() {
        Some(l) => l.asymptote()?.a,
        None => 0.0,
    };
    let f = spec.rhs.f().asymptote()?;
    let b = dphi.a + 1.0 - a_l;
    let k_growth = b + 1.0;
    let f_growth = f.a + 1.0;
    if k_growth <= 0.0 || f_growth <= 0.0 {
        // K or F bounded: the transform composition is not eventually a
        // power law of the required kind.
        return None;
    }
    let ratio = f_growth / k_growth;
    let verdict = if ratio > 1.0 {
        Verdict::Holds
    } else if ratio < 1.0 {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };
    Some(KoVerdict {
        condition: Condition::KO,
        verdict,
        tier: Tier::ExactPowerLaw,
        evidence: Evidence::ExponentComparison { k_integrand_exponent: b, k_growth, f_growth, ratio },
        sigma_used: 1.0,
    })
}

/// Numeric tail test on `integrand` over `t_k = 10 * 2^k`.
fn tail_test<G>(condition: Condition, mut integrand: G, opts: &QuadOptions) -> KoVerdict
where
    G: FnMut(f64) -> Result<f64>,
{
    let ts: Vec<f64> = (0..=TAIL_DOUBLINGS).map(|k| TAIL_START * 2f64.powi(k as i32)).collect();
    let opts = QuadOptions { abs_tol: 1e-300, ..*opts };
    let mut increments = Vec::with_capacity(TAIL_DOUBLINGS);
    for w in ts.windows(2) {
        match integrate_strict(&mut integrand, w[0], w[1], &opts) {
            Ok(v) if v > 0.0 => increments.push(v),
            Ok(v) => return KoVerdict::inconclusive(condition, format!("non-positive tail increment {v}")),
            Err(e) => return KoVerdict::inconclusive(condition, format!("tail integral failed: {e}")),
        }
    }
    let mut partial = vec![0.0];
    for inc in &increments {
        partial.push(partial.last().unwrap() + inc);
    }
    // Mean integrand over [t_{k-1}, t_k] behaves like t^slope.
    let means: Vec<f64> = increments.iter().zip(&ts[1..]).map(|(i, t)| i / t).collect();
    let slopes: Vec<f64> = means.windows(2).map(|w| (w[1] / w[0]).ln() / 2f64.ln()).collect();
    let tail = &slopes[slopes.len() - STABILITY_WINDOW..];
    let verdict = if tail.iter().all(|s| *s <= -1.0 - SLOPE_DELTA) {
        Verdict::Holds
    } else if tail.iter().all(|s| *s >= -1.0 + SLOPE_DELTA) {
        Verdict::Fails
    } else {
        Verdict::Inconclusive
    };
    KoVerdict {
        condition,
        verdict,
        tier: Tier::NumericTail,
        evidence: Evidence::TailSlopes {
            t: ts,
            partial_integrals: partial,
            slopes,
            window: STABILITY_WINDOW,
            delta: SLOPE_DELTA,
        },
        sigma_used: 1.0,
    }
}

fn numeric_ko(spec: &ProblemSpec, tr: Option<&Transforms>) -> KoVerdict {
    let owned;
    let tr = match tr {
        Some(t) => t,
        None => match Transforms::new(spec) {
            Ok(t) => {
                owned = t;
                &owned
            }
            Err(e) => return KoVerdict::inconclusive(Condition::KO, format!("transforms unavailable: {e}")),
        },
    };
    let opts = tr.quad_options();
    tail_test(Condition::KO, |s| Ok(1.0 / tr.big_k_inverse(tr.big_f(s, FVariant::Plain)?)?), &opts)
}

/// Decides `1/K^{-1}(F(t)) in L^1(+inf)`.
pub fn decide_ko(spec: &ProblemSpec) -> KoVerdict {
    exact_tier(spec).unwrap_or_else(|| numeric_ko(spec, None))
}

/// [`decide_ko`] reusing prebuilt transforms for the numeric tier.
pub fn decide_ko_with(spec: &ProblemSpec, tr: &Transforms) -> KoVerdict {
    exact_tier(spec).unwrap_or_else(|| numeric_ko(spec, Some(tr)))
}

/// How `h in L^1(+inf)` was established, if it was.
fn h_integrable(spec: &ProblemSpec) -> Option<String> {
    let h = spec.rhs.h()?;
    if let Some(a) = h.asymptote() {
        return (a.a < -1.0).then(|| format!("h ~ {} t^{}", a.c, a.a));
    }
    let opts = QuadOptions { node_budget: 20_000, ..QuadOptions::from(&spec.tolerances) };
    let r = integrate(|s| Ok(h.eval(s)?.abs()), 0.0, f64::INFINITY, &opts).ok()?;
    r.converged.then(|| format!("int |h| = {:.6e} by quadrature", r.value))
}

/// Decides `e^{H(t)}/K^{-1}(F-hat(t)) in L^1(+inf)`.
///
/// With `h = 0` this is the plain condition. With `h in L^1(+inf)` the two
/// conditions are equivalent, so the plain verdict (and tier) is reported
/// and the hat tail is attached as corroboration. Otherwise the numeric
/// tail test runs on the hat integrand.
pub fn decide_ko_hat(spec: &ProblemSpec) -> Result<KoVerdict> {
    let h = spec.rhs.h().ok_or_else(|| Error::Invalid("the hat condition needs the difference form f - h g".into()))?;
    if h.is_identically_zero() {
        let mut v = decide_ko(spec);
        v.condition = Condition::KOhat;
        return Ok(v);
    }
    spec.constants.require(ConstantName::Theta)?;
    let tr = match Transforms::new(spec) {
        Ok(t) => t,
        Err(e) => return Ok(KoVerdict::inconclusive(Condition::KOhat, format!("transforms unavailable: {e}"))),
    };
    let opts = tr.quad_options();
    let hat =
        tail_test(Condition::KOhat, |s| Ok(tr.big_h(s)?.exp() / tr.big_k_inverse(tr.big_f(s, FVariant::Hat)?)?), &opts);
    if let Some(reason) = h_integrable(spec) {
        let mut v = decide_ko_with(spec, &tr);
        v.condition = Condition::KOhat;
        v.evidence = Evidence::Reduction {
            reason: format!("h in L^1(+inf): {reason}; equivalent to the plain condition, which gives {:?}", v.verdict),
            hat_tail: Some(Box::new(hat.evidence)),
        };
        return Ok(v);
    }
    Ok(hat)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SigmaCheck {
    pub sigma: f64,
    pub lhs: f64,
    pub rhs: f64,
    pub holds: bool,
}

fn tail_integral<G: FnMut(f64) -> Result<f64>>(g: G, t_lo: f64, opts: &QuadOptions) -> Result<f64> {
    if !(t_lo > 0.0) {
        return Err(Error::Invalid(format!("tail lower limit must be positive, got {t_lo}")));
    }
    integrate_strict(g, t_lo, f64::INFINITY, &QuadOptions { abs_tol: 1e-300, ..*opts })
}

/// Relative slack granted to numerically equal sides.
fn slack(opts: &QuadOptions) -> f64 {
    10.0 * opts.rel_tol
}

/// Compares `int_{t_lo}^inf ds/K^{-1}(sigma F(s))` with
/// `sigma^{-1} int_{t_lo}^inf ds/K^{-1}(F(s))`.
pub fn sigma_scaling_check(spec: &ProblemSpec, sigma: f64, t_lo: f64) -> Result<SigmaCheck> {
    sigma_scaling_check_with(&Transforms::new(spec)?, sigma, t_lo)
}

pub fn sigma_scaling_check_with(tr: &Transforms, sigma: f64, t_lo: f64) -> Result<SigmaCheck> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::Invalid(format!("sigma must lie in (0, 1], got {sigma}")));
    }
    let opts = tr.quad_options();
    let g = |k: f64| move |s: f64| Ok(1.0 / tr.big_k_inverse(k * tr.big_f(s, FVariant::Plain)?)?);
    let lhs = tail_integral(g(sigma), t_lo, &opts)?;
    let rhs = tail_integral(g(1.0), t_lo, &opts)? / sigma;
    Ok(SigmaCheck { sigma, lhs, rhs, holds: lhs <= rhs * (1.0 + slack(&opts)) })
}

/// Compares `int e^H/K^{-1}(sigma F-hat)` with
/// `(B sigma)^{-1/(2-theta)} int e^H/K^{-1}(F-hat)` over `[t_lo, inf)`.
pub fn ko_hat_sigma_bound(spec: &ProblemSpec, sigma: f64, t_lo: f64) -> Result<SigmaCheck> {
    if !(sigma > 0.0 && sigma <= 1.0) {
        return Err(Error::Invalid(format!("sigma must lie in (0, 1], got {sigma}")));
    }
    let b = spec.constant(ConstantName::B)?;
    let theta = spec.constant(ConstantName::Theta)?;
    let tr = Transforms::new(spec)?;
    let opts = tr.quad_options();
    let g = |k: f64| {
        let tr = &tr;
        move |s: f64| Ok(tr.big_h(s)?.exp() / tr.big_k_inverse(k * tr.big_f(s, FVariant::Hat)?)?)
    };
    let lhs = tail_integral(g(sigma), t_lo, &opts)?;
    let rhs = (b * sigma).powf(-1.0 / (2.0 - theta)) * tail_integral(g(1.0), t_lo, &opts)?;
    Ok(SigmaCheck { sigma, lhs, rhs, holds: lhs <= rhs * (1.0 + slack(&opts)) })
}
