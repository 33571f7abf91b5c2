//! Scalar profiles (phi, f, l, h, g) and the problem specification that
//! bundles them with geometry and structural constants.

mod diff;
mod expr;
mod normal;

pub use diff::differentiate;
pub use expr::{parse, Expr};
pub use normal::{asymptotic_power, monomials, End, MonomialSum, PowerLaw};

use std::fmt;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::heisenberg::Geometry;

#[derive(Debug)]
struct ProfileInner {
    source: String,
    expr: Expr,
    deriv: Expr,
    asymptote: Option<PowerLaw>,
    zero_limit: Option<PowerLaw>,
    deriv_asymptote: Option<PowerLaw>,
    deriv_zero_limit: Option<PowerLaw>,
    monomials: Option<MonomialSum>,
}

/// A parsed profile with its symbolic derivative and power-law normal
/// forms, computed once. Cheap to clone.
#[derive(Debug, Clone)]
pub struct Profile(Arc<ProfileInner>);

impl Profile {
    pub fn parse(source: &str) -> Result<Self> {
        let expr = parse(source)?;
        Ok(Self::build(source.trim().to_string(), expr))
    }

    pub fn from_expr(expr: Expr) -> Self {
        Self::build(expr.to_string(), expr)
    }

    fn build(source: String, expr: Expr) -> Self {
        let deriv = differentiate(&expr);
        Profile(Arc::new(ProfileInner {
            asymptote: asymptotic_power(&expr, End::AtInfinity),
            zero_limit: asymptotic_power(&expr, End::AtZero),
            deriv_asymptote: asymptotic_power(&deriv, End::AtInfinity),
            deriv_zero_limit: asymptotic_power(&deriv, End::AtZero),
            monomials: monomials(&expr),
            source,
            expr,
            deriv,
        }))
    }

    pub fn source(&self) -> &str {
        &self.0.source
    }

    pub fn expr(&self) -> &Expr {
        &self.0.expr
    }

    pub fn deriv_expr(&self) -> &Expr {
        &self.0.deriv
    }

    pub fn eval(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("profile '{}' evaluated at t = {t} < 0", self.0.source)));
        }
        self.0.expr.eval(t)
    }

    pub fn deriv(&self, t: f64) -> Result<f64> {
        if !(t >= 0.0) {
            return Err(Error::Domain(format!("profile '{}' derivative at t = {t} < 0", self.0.source)));
        }
        self.0.deriv.eval(t)
    }

    /// `expr(t) ~ c t^a` as t -> infinity.
    pub fn asymptote(&self) -> Option<PowerLaw> {
        self.0.asymptote
    }

    /// `expr(t) ~ c t^a` as t -> 0+.
    pub fn zero_limit(&self) -> Option<PowerLaw> {
        self.0.zero_limit
    }

    pub fn deriv_asymptote(&self) -> Option<PowerLaw> {
        self.0.deriv_asymptote
    }

    pub fn deriv_zero_limit(&self) -> Option<PowerLaw> {
        self.0.deriv_zero_limit
    }

    pub fn monomials(&self) -> Option<&MonomialSum> {
        self.0.monomials.as_ref()
    }

    /// The profile is exactly `c t^a`.
    pub fn exact_monomial(&self) -> Option<PowerLaw> {
        self.0.monomials.as_ref()?.single()
    }

    pub fn is_identically_zero(&self) -> bool {
        self.0.monomials.as_ref().is_some_and(MonomialSum::is_zero)
    }

    /// Inverse of an increasing profile on `[0, inf)`, by bracketing and
    /// bisection on the derivative-free monotone root finder.
    pub fn inverse(&self, value: f64, rel_tol: f64) -> Result<f64> {
        if let Some(m) = self.exact_monomial() {
            if m.c > 0.0 && m.a > 0.0 && value >= 0.0 {
                return Ok((value / m.c).powf(1.0 / m.a));
            }
        }
        crate::roots::invert_increasing(|x| self.eval(x), value, 0.0, 1.0, rel_tol)
    }
}

impl fmt::Display for Profile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0.source)
    }
}

impl PartialEq for Profile {
    fn eq(&self, other: &Self) -> bool {
        self.0.expr == other.0.expr
    }
}

impl Serialize for Profile {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.0.source)
    }
}

/// Right-hand side of the inequality.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "form", rename_all = "lowercase")]
pub enum Rhs {
    /// `f(u) l(|grad u|)`.
    #[serde(rename = "product")]
    GradientProduct { f: Profile, l: Profile },
    /// `f(u) - h(u) g(|grad u|)`.
    #[serde(rename = "difference")]
    GradientDifference { f: Profile, h: Profile, g: Profile },
}

impl Rhs {
    pub fn f(&self) -> &Profile {
        match self {
            Rhs::GradientProduct { f, .. } | Rhs::GradientDifference { f, .. } => f,
        }
    }

    pub fn l(&self) -> Option<&Profile> {
        match self {
            Rhs::GradientProduct { l, .. } => Some(l),
            Rhs::GradientDifference { .. } => None,
        }
    }

    pub fn h(&self) -> Option<&Profile> {
        match self {
            Rhs::GradientDifference { h, .. } => Some(h),
            Rhs::GradientProduct { .. } => None,
        }
    }

    pub fn g(&self) -> Option<&Profile> {
        match self {
            Rhs::GradientDifference { g, .. } => Some(g),
            Rhs::GradientProduct { .. } => None,
        }
    }

    /// Evaluates the right-hand side at `u` with gradient modulus `grad`.
    pub fn eval(&self, u: f64, grad: f64) -> Result<f64> {
        match self {
            Rhs::GradientProduct { f, l } => Ok(f.eval(u)? * l.eval(grad)?),
            Rhs::GradientDifference { f, h, g } => Ok(f.eval(u)? - h.eval(u)? * g.eval(grad)?),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum ConstantName {
    C,
    Tau,
    D,
    Lambda,
    Theta,
    B,
    Mu,
    B1,
    B2,
    Dtilde,
}

/// Structural constants. Any of them may be absent; operations that need
/// one report it as missing.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Constants {
    #[serde(rename = "C", default, skip_serializing_if = "Option::is_none")]
    pub c_monotone: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(rename = "D", default, skip_serializing_if = "Option::is_none")]
    pub d: Option<f64>,
    #[serde(rename = "Lambda", default, skip_serializing_if = "Option::is_none")]
    pub lambda: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub theta: Option<f64>,
    #[serde(rename = "B", default, skip_serializing_if = "Option::is_none")]
    pub b: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub mu: Option<f64>,
    #[serde(rename = "B1", default, skip_serializing_if = "Option::is_none")]
    pub b1: Option<f64>,
    #[serde(rename = "B2", default, skip_serializing_if = "Option::is_none")]
    pub b2: Option<f64>,
    #[serde(rename = "Dtilde", default, skip_serializing_if = "Option::is_none")]
    pub d_tilde: Option<f64>,
}

impl Constants {
    pub fn get(&self, name: ConstantName) -> Option<f64> {
        match name {
            ConstantName::C => self.c_monotone,
            ConstantName::Tau => self.tau,
            ConstantName::D => self.d,
            ConstantName::Lambda => self.lambda,
            ConstantName::Theta => self.theta,
            ConstantName::B => self.b,
            ConstantName::Mu => self.mu,
            ConstantName::B1 => self.b1,
            ConstantName::B2 => self.b2,
            ConstantName::Dtilde => self.d_tilde,
        }
    }

    pub fn require(&self, name: ConstantName) -> Result<f64> {
        self.get(name).ok_or_else(|| Error::Missing(format!("constant {name:?}")))
    }

    /// Range checks for every constant that is present.
    pub fn check(&self) -> Result<()> {
        let checks: [(ConstantName, fn(f64) -> bool, &str); 10] = [
            (ConstantName::C, |v| v >= 1.0, "C >= 1"),
            (ConstantName::Tau, |v| v >= 0.0, "tau >= 0"),
            (ConstantName::D, |v| v > 0.0, "D > 0"),
            (ConstantName::Lambda, |v| v > 0.0, "Lambda > 0"),
            (ConstantName::Theta, |v| v < 2.0, "theta < 2"),
            (ConstantName::B, |v| v > 0.0, "B > 0"),
            (ConstantName::Mu, |v| (0.0..1.0).contains(&v), "0 <= mu < 1"),
            (ConstantName::B1, |v| v > 0.0, "B1 > 0"),
            (ConstantName::B2, |v| v > 0.0, "B2 > 0"),
            (ConstantName::Dtilde, |v| v > 0.0, "Dtilde > 0"),
        ];
        for (name, ok, rule) in checks {
            if let Some(v) = self.get(name) {
                if !v.is_finite() || !ok(v) {
                    return Err(Error::Spec(format!("constant {name:?} = {v} violates {rule}")));
                }
            }
        }
        Ok(())
    }
}

/// Numerical tolerances and budgets shared by every numerical routine.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Tolerances {
    pub quad_abs: f64,
    pub quad_rel: f64,
    pub root_rel: f64,
    pub fd_step: f64,
    pub node_budget: usize,
    pub grid_n: usize,
    pub sigma_budget_super: usize,
    pub sigma_budget_sub: usize,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances {
            quad_abs: 1e-10,
            quad_rel: 1e-8,
            root_rel: 1e-10,
            fd_step: 1e-4,
            node_budget: 200_000,
            grid_n: 40,
            sigma_budget_super: 80,
            sigma_budget_sub: 60,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProblemSpec {
    pub geometry: Geometry,
    pub phi: Profile,
    pub rhs: Rhs,
    pub constants: Constants,
    pub tolerances: Tolerances,
}

impl ProblemSpec {
    pub fn new(geometry: Geometry, phi: Profile, rhs: Rhs, constants: Constants) -> Result<Self> {
        constants.check()?;
        Ok(ProblemSpec { geometry, phi, rhs, constants, tolerances: Tolerances::default() })
    }

    /// Convenience constructor for the product form `f(u) l(|grad u|)`.
    pub fn product(geometry: Geometry, phi: &str, f: &str, l: &str, constants: Constants) -> Result<Self> {
        Self::new(
            geometry,
            Profile::parse(phi)?,
            Rhs::GradientProduct { f: Profile::parse(f)?, l: Profile::parse(l)? },
            constants,
        )
    }

    /// Convenience constructor for the difference form `f(u) - h(u) g(|grad u|)`.
    pub fn difference(geometry: Geometry, phi: &str, f: &str, h: &str, g: &str, constants: Constants) -> Result<Self> {
        Self::new(
            geometry,
            Profile::parse(phi)?,
            Rhs::GradientDifference { f: Profile::parse(f)?, h: Profile::parse(h)?, g: Profile::parse(g)? },
            constants,
        )
    }

    pub fn with_tolerances(mut self, tolerances: Tolerances) -> Self {
        self.tolerances = tolerances;
        self
    }

    pub fn constant(&self, name: ConstantName) -> Result<f64> {
        self.constants.require(name)
    }

    /// The exponent `p` when phi is exactly `c t^(p-1)` with `c > 0`, `p > 1`.
    pub fn p_laplacian_exponent(&self) -> Option<f64> {
        let m = self.phi.exact_monomial()?;
        (m.c > 0.0 && m.a > 0.0).then_some(m.a + 1.0)
    }

    /// `l` when the rhs has one, otherwise the constant 1 used by the
    /// difference form.
    pub fn l_eval(&self, t: f64) -> Result<f64> {
        match self.rhs.l() {
            Some(l) => l.eval(t),
            None => Ok(1.0),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn profile_derivative_and_normal_forms() {
        let p = Profile::parse("t^2").unwrap();
        assert_eq!(p.eval(3.0).unwrap(), 9.0);
        assert_eq!(p.deriv(3.0).unwrap(), 6.0);
        assert_eq!(p.exact_monomial(), Some(PowerLaw { c: 1.0, a: 2.0 }));
        assert_eq!(p.deriv_asymptote(), Some(PowerLaw { c: 2.0, a: 1.0 }));
        assert!(Profile::parse("0").unwrap().is_identically_zero());
        assert!(Profile::parse("t").unwrap().eval(-1.0).is_err());
    }

    #[test]
    fn monomial_inverse_is_closed_form() {
        let phi = Profile::parse("t^2").unwrap();
        assert_eq!(phi.inverse(9.0, 1e-12).unwrap(), 3.0);
        let phi = Profile::parse("t + t^3").unwrap();
        let x = phi.inverse(10.0, 1e-13).unwrap();
        assert!((x - 2.0).abs() < 1e-10);
    }

    #[test]
    fn constants_range_checked() {
        let bad = Constants { c_monotone: Some(0.5), ..Default::default() };
        assert!(bad.check().is_err());
        let bad = Constants { mu: Some(1.0), ..Default::default() };
        assert!(bad.check().is_err());
        let good = Constants { theta: Some(-3.0), mu: Some(0.3), ..Default::default() };
        assert!(good.check().is_ok());
        assert!(matches!(good.require(ConstantName::D), Err(Error::Missing(_))));
    }
}
