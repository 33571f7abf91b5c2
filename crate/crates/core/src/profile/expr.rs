//! Expression trees for scalar profiles of one variable `t`.
//!
//! Grammar (whitespace ignored, standard precedence, left associative):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | factor
//! factor := base ('^' exponent)?
//! base   := number | 't' | '(' expr ')' | ('exp' | 'log' | 'sqrt') '(' expr ')'
//! exponent := signed-number | '(' constant expr ')'
//! ```

use std::fmt;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var,
    Add(Box<Expr>, Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Mul(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    /// Power with a constant exponent.
    Pow(Box<Expr>, f64),
    Neg(Box<Expr>),
    Exp(Box<Expr>),
    Log(Box<Expr>),
    Sqrt(Box<Expr>),
}

impl Expr {
    pub fn is_constant(&self) -> bool {
        match self {
            Expr::Num(_) => true,
            Expr::Var => false,
            Expr::Add(a, b) | Expr::Sub(a, b) | Expr::Mul(a, b) | Expr::Div(a, b) => a.is_constant() && b.is_constant(),
            Expr::Pow(a, _) | Expr::Neg(a) | Expr::Exp(a) | Expr::Log(a) | Expr::Sqrt(a) => a.is_constant(),
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 0.0)
    }

    pub fn is_one(&self) -> bool {
        matches!(self, Expr::Num(v) if *v == 1.0)
    }

    /// Evaluates the tree at `t`, reporting domain violations and overflow
    /// instead of returning non-finite values.
    pub fn eval(&self, t: f64) -> Result<f64> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Var => t,
            Expr::Add(a, b) => a.eval(t)? + b.eval(t)?,
            Expr::Sub(a, b) => a.eval(t)? - b.eval(t)?,
            Expr::Mul(a, b) => a.eval(t)? * b.eval(t)?,
            Expr::Div(a, b) => {
                let den = b.eval(t)?;
                if den == 0.0 {
                    return Err(Error::Domain(format!("division by zero in {self} at t = {t}")));
                }
                a.eval(t)? / den
            }
            Expr::Pow(a, n) => {
                let base = a.eval(t)?;
                if base < 0.0 && n.fract() != 0.0 {
                    return Err(Error::Domain(format!("negative base {base} to non-integer power {n} at t = {t}")));
                }
                if base == 0.0 && *n < 0.0 {
                    return Err(Error::Domain(format!("zero to negative power {n} at t = {t}")));
                }
                if *n == 0.0 {
                    1.0
                } else {
                    base.powf(*n)
                }
            }
            Expr::Neg(a) => -a.eval(t)?,
            Expr::Exp(a) => a.eval(t)?.exp(),
            Expr::Log(a) => {
                let x = a.eval(t)?;
                if x <= 0.0 {
                    return Err(Error::Domain(format!("log of non-positive {x} at t = {t}")));
                }
                x.ln()
            }
            Expr::Sqrt(a) => {
                let x = a.eval(t)?;
                if x < 0.0 {
                    return Err(Error::Domain(format!("sqrt of negative {x} at t = {t}")));
                }
                x.sqrt()
            }
        };
        if v.is_nan() {
            return Err(Error::Domain(format!("{self} is undefined at t = {t}")));
        }
        if !v.is_finite() {
            return Err(Error::Overflow(format!("{self} at t = {t}")));
        }
        Ok(v)
    }

    fn precedence(&self) -> u8 {
        match self {
            Expr::Add(..) | Expr::Sub(..) => 1,
            Expr::Mul(..) | Expr::Div(..) => 2,
            Expr::Neg(..) => 3,
            Expr::Pow(..) => 4,
            Expr::Num(v) if v.is_sign_negative() => 0,
            _ => 5,
        }
    }
}

fn fmt_num(v: f64, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if v.is_sign_negative() {
        write!(f, "({v:?})")
    } else {
        write!(f, "{v:?}")
    }
}

fn fmt_child(e: &Expr, min_prec: u8, f: &mut fmt::Formatter<'_>) -> fmt::Result {
    if e.precedence() < min_prec {
        write!(f, "({e})")
    } else {
        write!(f, "{e}")
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => fmt_num(*v, f),
            Expr::Var => write!(f, "t"),
            Expr::Add(a, b) => {
                fmt_child(a, 1, f)?;
                write!(f, " + ")?;
                fmt_child(b, 2, f)
            }
            Expr::Sub(a, b) => {
                fmt_child(a, 1, f)?;
                write!(f, " - ")?;
                fmt_child(b, 2, f)
            }
            Expr::Mul(a, b) => {
                fmt_child(a, 2, f)?;
                write!(f, "*")?;
                fmt_child(b, 3, f)
            }
            Expr::Div(a, b) => {
                fmt_child(a, 2, f)?;
                write!(f, "/")?;
                fmt_child(b, 3, f)
            }
            Expr::Neg(a) => match **a {
                // Parenthesized so the parser does not fold it into a literal.
                Expr::Num(v) if !v.is_sign_negative() => write!(f, "-({v:?})"),
                _ => {
                    write!(f, "-")?;
                    fmt_child(a, 3, f)
                }
            },
            Expr::Pow(a, n) => {
                fmt_child(a, 5, f)?;
                write!(f, "^{n:?}")
            }
            Expr::Exp(a) => write!(f, "exp({a})"),
            Expr::Log(a) => write!(f, "log({a})"),
            Expr::Sqrt(a) => write!(f, "sqrt({a})"),
        }
    }
}

pub fn parse(source: &str) -> Result<Expr> {
    let mut p = Parser { src: source.as_bytes(), pos: 0 };
    let e = p.expr()?;
    p.skip_ws();
    if p.pos < p.src.len() {
        return Err(p.error("unexpected trailing input"));
    }
    Ok(e)
}

struct Parser<'a> {
    src: &'a [u8],
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, message: &str) -> Error {
        Error::Syntax { offset: self.pos, message: message.to_string() }
    }

    fn skip_ws(&mut self) {
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_whitespace() {
            self.pos += 1;
        }
    }

    /// Accepts ASCII '-' and U+2212 MINUS SIGN.
    fn eat_minus(&mut self) -> bool {
        self.skip_ws();
        if self.src[self.pos..].starts_with(b"-") {
            self.pos += 1;
            true
        } else if self.src[self.pos..].starts_with("\u{2212}".as_bytes()) {
            self.pos += 3;
            true
        } else {
            false
        }
    }

    fn eat(&mut self, c: u8) -> bool {
        self.skip_ws();
        if self.pos < self.src.len() && self.src[self.pos] == c {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: u8) -> Result<()> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(&format!("expected '{}'", c as char)))
        }
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        loop {
            if self.eat(b'+') {
                lhs = Expr::Add(Box::new(lhs), Box::new(self.term()?));
            } else if self.eat_minus() {
                lhs = Expr::Sub(Box::new(lhs), Box::new(self.term()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        loop {
            if self.eat(b'*') {
                lhs = Expr::Mul(Box::new(lhs), Box::new(self.unary()?));
            } else if self.eat(b'/') {
                lhs = Expr::Div(Box::new(lhs), Box::new(self.unary()?));
            } else {
                return Ok(lhs);
            }
        }
    }

    fn unary(&mut self) -> Result<Expr> {
        if self.eat_minus() {
            // A negated bare literal is folded so that printed negative
            // literals parse back to the same node; `-(2)` stays a negation.
            self.skip_ws();
            let bare = self.peek_is_number();
            return Ok(match self.unary()? {
                Expr::Num(v) if bare => Expr::Num(-v),
                e => Expr::Neg(Box::new(e)),
            });
        }
        self.factor()
    }

    fn factor(&mut self) -> Result<Expr> {
        let base = self.base()?;
        if self.eat(b'^') {
            self.skip_ws();
            let at = self.pos;
            let exponent = if self.eat(b'(') {
                let e = self.expr()?;
                self.expect(b')')?;
                if !e.is_constant() {
                    return Err(Error::NonConstantExponent { offset: at });
                }
                e.eval(0.0).map_err(|_| Error::Syntax {
                    offset: at,
                    message: "exponent does not evaluate to a finite number".into(),
                })?
            } else {
                let neg = self.eat_minus();
                self.skip_ws();
                if self.peek_is_number() {
                    let v = self.number()?;
                    if neg {
                        -v
                    } else {
                        v
                    }
                } else {
                    return Err(Error::NonConstantExponent { offset: at });
                }
            };
            return Ok(Expr::Pow(Box::new(base), exponent));
        }
        Ok(base)
    }

    fn peek_is_number(&self) -> bool {
        self.pos < self.src.len() && (self.src[self.pos].is_ascii_digit() || self.src[self.pos] == b'.')
    }

    fn number(&mut self) -> Result<f64> {
        let start = self.pos;
        let s = self.src;
        while self.pos < s.len() && (s[self.pos].is_ascii_digit() || s[self.pos] == b'.') {
            self.pos += 1;
        }
        if self.pos < s.len() && (s[self.pos] == b'e' || s[self.pos] == b'E') {
            let save = self.pos;
            self.pos += 1;
            if self.pos < s.len() && (s[self.pos] == b'+' || s[self.pos] == b'-') {
                self.pos += 1;
            }
            if self.pos < s.len() && s[self.pos].is_ascii_digit() {
                while self.pos < s.len() && s[self.pos].is_ascii_digit() {
                    self.pos += 1;
                }
            } else {
                // "2exp(t)" style juxtaposition is not part of the grammar,
                // but do not swallow the 'e' of a following identifier.
                self.pos = save;
            }
        }
        let text = std::str::from_utf8(&s[start..self.pos]).expect("ascii");
        text.parse::<f64>().map_err(|_| Error::Syntax { offset: start, message: format!("bad number '{text}'") })
    }

    fn base(&mut self) -> Result<Expr> {
        self.skip_ws();
        if self.pos >= self.src.len() {
            return Err(self.error("unexpected end of input"));
        }
        if self.peek_is_number() {
            return Ok(Expr::Num(self.number()?));
        }
        if self.eat(b'(') {
            let e = self.expr()?;
            self.expect(b')')?;
            return Ok(e);
        }
        let start = self.pos;
        while self.pos < self.src.len() && self.src[self.pos].is_ascii_alphabetic() {
            self.pos += 1;
        }
        let ident = std::str::from_utf8(&self.src[start..self.pos]).expect("ascii");
        let func: fn(Box<Expr>) -> Expr = match ident {
            "t" => return Ok(Expr::Var),
            "exp" => Expr::Exp,
            "log" => Expr::Log,
            "sqrt" => Expr::Sqrt,
            "" => return Err(Error::Syntax { offset: start, message: "expected an operand".into() }),
            other => return Err(Error::Syntax { offset: start, message: format!("unknown identifier '{other}'") }),
        };
        self.expect(b'(')?;
        let arg = self.expr()?;
        self.expect(b')')?;
        Ok(func(Box::new(arg)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_power_node() {
        assert_eq!(parse("t^2").unwrap(), Expr::Pow(Box::new(Expr::Var), 2.0));
    }

    #[test]
    fn parses_sum_of_literal_and_scaled_power() {
        let e = parse("1 + 0.5*t^0.3").unwrap();
        let expected = Expr::Add(
            Box::new(Expr::Num(1.0)),
            Box::new(Expr::Mul(Box::new(Expr::Num(0.5)), Box::new(Expr::Pow(Box::new(Expr::Var), 0.3)))),
        );
        assert_eq!(e, expected);
    }

    #[test]
    fn rejects_non_constant_exponent() {
        assert!(matches!(parse("t^t"), Err(Error::NonConstantExponent { offset: 2 })));
        assert!(matches!(parse("t^(t+1)"), Err(Error::NonConstantExponent { .. })));
    }

    #[test]
    fn constant_parenthesized_exponent_is_folded() {
        assert_eq!(parse("t^(1/2)").unwrap(), Expr::Pow(Box::new(Expr::Var), 0.5));
        assert_eq!(parse("t^-1").unwrap(), Expr::Pow(Box::new(Expr::Var), -1.0));
    }

    #[test]
    fn syntax_errors_carry_offsets() {
        match parse("1 + * t") {
            Err(Error::Syntax { offset, .. }) => assert_eq!(offset, 4),
            other => panic!("{other:?}"),
        }
        assert!(matches!(parse("foo(t)"), Err(Error::Syntax { offset: 0, .. })));
        assert!(matches!(parse("(t"), Err(Error::Syntax { .. })));
        assert!(matches!(parse("t t"), Err(Error::Syntax { offset: 2, .. })));
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(parse("2 - 3 - 4").unwrap().eval(0.0).unwrap(), -5.0);
        assert_eq!(parse("8 / 4 / 2").unwrap().eval(0.0).unwrap(), 1.0);
        assert_eq!(parse("-t^2").unwrap().eval(3.0).unwrap(), -9.0);
        assert_eq!(parse("2*t^3").unwrap().eval(2.0).unwrap(), 16.0);
        assert_eq!(parse("exp(\u{2212}t)").unwrap().eval(0.0).unwrap(), 1.0);
    }

    #[test]
    fn eval_examples() {
        assert_eq!(parse("t^1").unwrap().eval(2.0).unwrap(), 2.0);
        assert_eq!(parse("1 + 0.5*t^0.3").unwrap().eval(0.0).unwrap(), 1.0);
        assert_eq!(parse("t^2").unwrap().eval(3.0).unwrap(), 9.0);
    }

    #[test]
    fn eval_reports_domain_and_overflow() {
        assert!(matches!(parse("log(t)").unwrap().eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(parse("sqrt(t - 1)").unwrap().eval(0.0), Err(Error::Domain(_))));
        assert!(matches!(parse("exp(t)").unwrap().eval(1000.0), Err(Error::Overflow(_))));
        assert!(matches!(parse("t^-1").unwrap().eval(0.0), Err(Error::Domain(_))));
    }

    #[test]
    fn display_round_trips() {
        for src in ["1 + 0.5*t^0.3", "-(t + 1)*exp(-t)", "t/(1 + t)^2", "log(t)*sqrt(t) - 3e-7", "2 - (3 - t)"] {
            let e = parse(src).unwrap();
            assert_eq!(parse(&e.to_string()).unwrap(), e, "{src} -> {e}");
        }
    }
}
