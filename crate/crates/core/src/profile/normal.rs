//! Power-law normal forms: finite sums of monomials `c * t^a`.

use serde::{Deserialize, Serialize};

use super::expr::Expr;

/// `c * t^a`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLaw {
    pub c: f64,
    pub a: f64,
}

impl PowerLaw {
    pub fn eval(&self, t: f64) -> f64 {
        if self.a == 0.0 {
            self.c
        } else {
            self.c * t.powf(self.a)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum End {
    AtInfinity,
    AtZero,
}

/// Monomials sorted by ascending exponent, like terms combined, zero
/// coefficients dropped. An empty sum is the zero function.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonomialSum(pub Vec<PowerLaw>);

impl MonomialSum {
    fn from_terms(mut terms: Vec<PowerLaw>) -> Self {
        terms.sort_by(|x, y| x.a.total_cmp(&y.a));
        let mut out: Vec<PowerLaw> = Vec::with_capacity(terms.len());
        for term in terms {
            match out.last_mut() {
                Some(last) if last.a == term.a => {
                    let scale = last.c.abs().max(term.c.abs());
                    last.c += term.c;
                    if last.c.abs() <= 1e-14 * scale {
                        last.c = 0.0;
                    }
                }
                _ => out.push(term),
            }
        }
        out.retain(|m| m.c != 0.0);
        MonomialSum(out)
    }

    pub fn is_zero(&self) -> bool {
        self.0.is_empty()
    }

    pub fn single(&self) -> Option<PowerLaw> {
        match self.0.as_slice() {
            [m] => Some(*m),
            _ => None,
        }
    }

    pub fn leading(&self, end: End) -> Option<PowerLaw> {
        match end {
            End::AtInfinity => self.0.last().copied(),
            End::AtZero => self.0.first().copied(),
        }
    }

    fn scale(&self, k: f64) -> Self {
        Self::from_terms(self.0.iter().map(|m| PowerLaw { c: m.c * k, a: m.a }).collect())
    }

    fn product(&self, other: &Self) -> Self {
        let mut terms = Vec::with_capacity(self.0.len() * other.0.len());
        for x in &self.0 {
            for y in &other.0 {
                terms.push(PowerLaw { c: x.c * y.c, a: x.a + y.a });
            }
        }
        Self::from_terms(terms)
    }

    fn powf(&self, n: f64) -> Option<Self> {
        if n == 0.0 {
            return Some(Self::from_terms(vec![PowerLaw { c: 1.0, a: 0.0 }]));
        }
        if let Some(m) = self.single() {
            if m.c < 0.0 && n.fract() != 0.0 {
                return None;
            }
            return Some(Self::from_terms(vec![PowerLaw { c: m.c.powf(n), a: m.a * n }]));
        }
        if self.is_zero() {
            return if n > 0.0 { Some(self.clone()) } else { None };
        }
        // Multi-term sums expand only under small non-negative integer powers.
        if n.fract() == 0.0 && n > 0.0 && n <= 16.0 {
            let mut acc = self.clone();
            for _ in 1..(n as usize) {
                acc = acc.product(self);
            }
            return Some(acc);
        }
        None
    }
}

/// Normalizes `e` to a finite sum of monomials, or `None` when the tree
/// contains factors (exp, log, division by a sum, ...) that do not reduce.
pub fn monomials(e: &Expr) -> Option<MonomialSum> {
    if e.is_constant() {
        let v = e.eval(0.0).ok()?;
        return Some(MonomialSum::from_terms(vec![PowerLaw { c: v, a: 0.0 }]));
    }
    match e {
        Expr::Num(_) => unreachable!("constants handled above"),
        Expr::Var => Some(MonomialSum(vec![PowerLaw { c: 1.0, a: 1.0 }])),
        Expr::Add(a, b) => {
            let mut terms = monomials(a)?.0;
            terms.extend(monomials(b)?.0);
            Some(MonomialSum::from_terms(terms))
        }
        Expr::Sub(a, b) => {
            let mut terms = monomials(a)?.0;
            terms.extend(monomials(b)?.scale(-1.0).0);
            Some(MonomialSum::from_terms(terms))
        }
        Expr::Neg(a) => Some(monomials(a)?.scale(-1.0)),
        Expr::Mul(a, b) => Some(monomials(a)?.product(&monomials(b)?)),
        Expr::Div(a, b) => {
            let den = monomials(b)?.single()?;
            let inv = MonomialSum(vec![PowerLaw { c: 1.0 / den.c, a: -den.a }]);
            Some(monomials(a)?.product(&inv))
        }
        Expr::Pow(a, n) => monomials(a)?.powf(*n),
        Expr::Sqrt(a) => {
            let m = monomials(a)?.single()?;
            if m.c < 0.0 {
                return None;
            }
            Some(MonomialSum(vec![PowerLaw { c: m.c.sqrt(), a: m.a / 2.0 }]))
        }
        Expr::Exp(_) | Expr::Log(_) => None,
    }
}

/// Leading monomial at the requested end, when the expression normalizes to
/// a finite monomial sum with positive leading coefficient. Never guesses.
pub fn asymptotic_power(e: &Expr, end: End) -> Option<PowerLaw> {
    let lead = monomials(e)?.leading(end)?;
    (lead.c > 0.0).then_some(lead)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::expr::parse;

    fn asym(src: &str, end: End) -> Option<PowerLaw> {
        asymptotic_power(&parse(src).unwrap(), end)
    }

    #[test]
    fn leading_term_at_infinity() {
        assert_eq!(asym("3*t^2 + t", End::AtInfinity), Some(PowerLaw { c: 3.0, a: 2.0 }));
    }

    #[test]
    fn leading_term_at_zero() {
        assert_eq!(asym("1 + 0.5*t^0.3", End::AtZero), Some(PowerLaw { c: 1.0, a: 0.0 }));
        assert_eq!(asym("1 + 0.5*t^0.3", End::AtInfinity), Some(PowerLaw { c: 0.5, a: 0.3 }));
    }

    #[test]
    fn exponentials_are_not_power_laws() {
        assert_eq!(asym("exp(t)", End::AtInfinity), None);
        assert_eq!(asym("t^2*log(t)", End::AtInfinity), None);
        assert_eq!(asym("1/(1 + t)", End::AtInfinity), None);
    }

    #[test]
    fn expansions_and_cancellation() {
        let m = monomials(&parse("(1 + t)^2 - t^2").unwrap()).unwrap();
        assert_eq!(m.0, vec![PowerLaw { c: 1.0, a: 0.0 }, PowerLaw { c: 2.0, a: 1.0 }]);
        let z = monomials(&parse("t - t").unwrap()).unwrap();
        assert!(z.is_zero());
        let s = monomials(&parse("sqrt(4*t^3)/t").unwrap()).unwrap();
        assert_eq!(s.single(), Some(PowerLaw { c: 2.0, a: 0.5 }));
    }

    #[test]
    fn negative_leading_coefficient_is_absent() {
        assert_eq!(asym("1 - t^2", End::AtInfinity), None);
    }

    #[test]
    fn constant_functions_fold() {
        assert_eq!(asym("exp(1)", End::AtInfinity), Some(PowerLaw { c: std::f64::consts::E, a: 0.0 }));
    }
}
