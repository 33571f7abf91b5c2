//! Symbolic differentiation with light simplification (constant folding and
//! zero/one elimination only).

use super::expr::Expr;

fn num(v: f64) -> Expr {
    Expr::Num(v)
}

pub(crate) fn add(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => num(x + y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => b,
        (a, b) => Expr::Add(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn sub(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => num(x - y),
        (a, b) if b.is_zero() => a,
        (a, b) if a.is_zero() => neg(b),
        (a, b) => Expr::Sub(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn mul(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) => num(x * y),
        (a, b) if a.is_zero() || b.is_zero() => num(0.0),
        (a, b) if a.is_one() => b,
        (a, b) if b.is_one() => a,
        (a, b) => Expr::Mul(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn div(a: Expr, b: Expr) -> Expr {
    match (a, b) {
        (Expr::Num(x), Expr::Num(y)) if y != 0.0 => num(x / y),
        (a, _) if a.is_zero() => num(0.0),
        (a, b) if b.is_one() => a,
        (a, b) => Expr::Div(Box::new(a), Box::new(b)),
    }
}

pub(crate) fn neg(a: Expr) -> Expr {
    match a {
        Expr::Num(x) => num(-x),
        Expr::Neg(inner) => *inner,
        a => Expr::Neg(Box::new(a)),
    }
}

pub(crate) fn pow(a: Expr, n: f64) -> Expr {
    if n == 0.0 {
        return num(1.0);
    }
    if n == 1.0 {
        return a;
    }
    match a {
        Expr::Num(x) if !(x < 0.0 && n.fract() != 0.0) && !(x == 0.0 && n < 0.0) => num(x.powf(n)),
        a => Expr::Pow(Box::new(a), n),
    }
}

/// Derivative with respect to `t`.
pub fn differentiate(e: &Expr) -> Expr {
    match e {
        Expr::Num(_) => num(0.0),
        Expr::Var => num(1.0),
        Expr::Add(a, b) => add(differentiate(a), differentiate(b)),
        Expr::Sub(a, b) => sub(differentiate(a), differentiate(b)),
        Expr::Mul(a, b) => add(mul(differentiate(a), (**b).clone()), mul((**a).clone(), differentiate(b))),
        Expr::Div(a, b) => {
            let da = differentiate(a);
            let db = differentiate(b);
            if db.is_zero() {
                div(da, (**b).clone())
            } else {
                div(sub(mul(da, (**b).clone()), mul((**a).clone(), db)), pow((**b).clone(), 2.0))
            }
        }
        Expr::Pow(a, n) => mul(mul(num(*n), pow((**a).clone(), n - 1.0)), differentiate(a)),
        Expr::Neg(a) => neg(differentiate(a)),
        Expr::Exp(a) => mul(e.clone(), differentiate(a)),
        Expr::Log(a) => div(differentiate(a), (**a).clone()),
        Expr::Sqrt(a) => div(differentiate(a), mul(num(2.0), e.clone())),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::profile::expr::parse;

    fn central(e: &Expr, t: f64) -> f64 {
        let h = 1e-6 * t.max(1e-3);
        (e.eval(t + h).unwrap() - e.eval(t - h).unwrap()) / (2.0 * h)
    }

    #[test]
    fn power_rule() {
        let d = differentiate(&parse("t^3.5").unwrap());
        assert_eq!(d, Expr::Mul(Box::new(Expr::Num(3.5)), Box::new(Expr::Pow(Box::new(Expr::Var), 2.5))));
    }

    #[test]
    fn exp_is_its_own_derivative() {
        assert_eq!(differentiate(&parse("exp(t)").unwrap()), parse("exp(t)").unwrap());
    }

    #[test]
    fn t_log_t_derivative_matches_finite_differences() {
        let d = differentiate(&parse("t*log(t)").unwrap());
        for t in [0.1f64, 1.0, 2.5, 40.0] {
            let expected = t.ln() + 1.0;
            assert!((d.eval(t).unwrap() - expected).abs() < 1e-12);
            assert!((central(&parse("t*log(t)").unwrap(), t) - expected).abs() < 1e-6);
        }
    }

    #[test]
    fn constants_differentiate_to_zero() {
        assert!(differentiate(&parse("3 + exp(2)").unwrap()).is_zero());
    }
}
