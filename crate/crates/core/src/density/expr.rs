//! Closed-form expressions in one variable `z`, written in prefix notation.
//!
//! Grammar:
//!
//! ```text
//! expr := NUMBER | "z" | "(" op expr+ ")"
//! op   := "+" | "*"            n-ary, at least one argument
//!       | "-"                  one argument (negation) or two (difference)
//!       | "/"                  two arguments
//!       | "exp" | "abs"        one argument
//!       | "pow"                expr followed by an integer literal exponent
//! ```
//!
//! `(* 0.5 z (exp (- z)))` is `z e^{-z} / 2`. Printing an [`Expr`] with
//! `Display` yields text that parses back to an identical tree.

use std::fmt;

use super::DensityError;

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var,
    Add(Vec<Expr>),
    Mul(Vec<Expr>),
    Neg(Box<Expr>),
    Sub(Box<Expr>, Box<Expr>),
    Div(Box<Expr>, Box<Expr>),
    Exp(Box<Expr>),
    Abs(Box<Expr>),
    Pow(Box<Expr>, i32),
}

impl Expr {
    pub fn eval(&self, z: f64) -> f64 {
        match self {
            Expr::Const(c) => *c,
            Expr::Var => z,
            Expr::Add(xs) => xs.iter().map(|e| e.eval(z)).sum(),
            Expr::Mul(xs) => xs.iter().map(|e| e.eval(z)).product(),
            Expr::Neg(e) => -e.eval(z),
            Expr::Sub(a, b) => a.eval(z) - b.eval(z),
            Expr::Div(a, b) => a.eval(z) / b.eval(z),
            Expr::Exp(e) => e.eval(z).exp(),
            Expr::Abs(e) => e.eval(z).abs(),
            Expr::Pow(e, k) => e.eval(z).powi(*k),
        }
    }

    pub fn parse(src: &str) -> Result<Expr, DensityError> {
        let mut p = Parser { src, pos: 0 };
        let e = p.expr()?;
        p.skip_ws();
        if p.pos != src.len() {
            return Err(p.error("trailing input"));
        }
        Ok(e)
    }
}

impl std::str::FromStr for Expr {
    type Err = DensityError;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Expr::parse(s)
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        fn list(f: &mut fmt::Formatter<'_>, op: &str, xs: &[&Expr]) -> fmt::Result {
            write!(f, "({op}")?;
            for x in xs {
                write!(f, " {x}")?;
            }
            write!(f, ")")
        }
        match self {
            // `{:?}` keeps a decimal point on integral values and round-trips.
            Expr::Const(c) => write!(f, "{c:?}"),
            Expr::Var => write!(f, "z"),
            Expr::Add(xs) => list(f, "+", &xs.iter().collect::<Vec<_>>()),
            Expr::Mul(xs) => list(f, "*", &xs.iter().collect::<Vec<_>>()),
            Expr::Neg(e) => list(f, "-", &[e]),
            Expr::Sub(a, b) => list(f, "-", &[a, b]),
            Expr::Div(a, b) => list(f, "/", &[a, b]),
            Expr::Exp(e) => list(f, "exp", &[e]),
            Expr::Abs(e) => list(f, "abs", &[e]),
            Expr::Pow(e, k) => write!(f, "(pow {e} {k})"),
        }
    }
}

struct Parser<'a> {
    src: &'a str,
    pos: usize,
}

impl Parser<'_> {
    fn error(&self, msg: impl Into<String>) -> DensityError {
        DensityError::Parse {
            pos: self.pos,
            msg: msg.into(),
        }
    }

    fn skip_ws(&mut self) {
        let rest = &self.src[self.pos..];
        self.pos += rest.len() - rest.trim_start().len();
    }

    fn peek(&self) -> Option<char> {
        self.src[self.pos..].chars().next()
    }

    fn token(&mut self) -> &str {
        let rest = &self.src[self.pos..];
        let len = rest
            .find(|c: char| c.is_whitespace() || c == '(' || c == ')')
            .unwrap_or(rest.len());
        self.pos += len;
        &rest[..len]
    }

    fn expr(&mut self) -> Result<Expr, DensityError> {
        self.skip_ws();
        match self.peek() {
            None => Err(self.error("unexpected end of input")),
            Some(')') => Err(self.error("unexpected ')'")),
            Some('(') => {
                self.pos += 1;
                self.skip_ws();
                let start = self.pos;
                let op = self.token().to_string();
                let mut args = Vec::new();
                loop {
                    self.skip_ws();
                    match self.peek() {
                        Some(')') => {
                            self.pos += 1;
                            break;
                        }
                        None => return Err(self.error("missing ')'")),
                        _ if op == "pow" && args.len() == 1 => {
                            let at = self.pos;
                            let tok = self.token();
                            let k: i32 = tok.parse().map_err(|_| DensityError::Parse {
                                pos: at,
                                msg: format!("pow exponent must be an integer literal, got `{tok}`"),
                            })?;
                            args.push(Expr::Const(k as f64));
                        }
                        _ => args.push(self.expr()?),
                    }
                }
                let arity = |ok: bool| {
                    if ok {
                        Ok(())
                    } else {
                        Err(DensityError::Parse {
                            pos: start,
                            msg: format!("wrong number of arguments ({}) for `{op}`", args.len()),
                        })
                    }
                };
                let mut it = args.clone().into_iter();
                let mut next = || Box::new(it.next().expect("arity checked"));
                match op.as_str() {
                    "+" => arity(!args.is_empty()).map(|_| Expr::Add(args.clone())),
                    "*" => arity(!args.is_empty()).map(|_| Expr::Mul(args.clone())),
                    "-" if args.len() == 1 => Ok(Expr::Neg(next())),
                    "-" => arity(args.len() == 2).map(|_| Expr::Sub(next(), next())),
                    "/" => arity(args.len() == 2).map(|_| Expr::Div(next(), next())),
                    "exp" => arity(args.len() == 1).map(|_| Expr::Exp(next())),
                    "abs" => arity(args.len() == 1).map(|_| Expr::Abs(next())),
                    "pow" => arity(args.len() == 2).map(|_| {
                        let base = next();
                        let Expr::Const(k) = *next() else { unreachable!() };
                        Expr::Pow(base, k as i32)
                    }),
                    other => Err(DensityError::Parse {
                        pos: start,
                        msg: format!("unknown operator `{other}`"),
                    }),
                }
            }
            Some(_) => {
                let at = self.pos;
                let tok = self.token();
                if tok == "z" {
                    return Ok(Expr::Var);
                }
                match tok.parse::<f64>() {
                    Ok(v) if v.is_finite() => Ok(Expr::Const(v)),
                    _ => Err(DensityError::Parse {
                        pos: at,
                        msg: format!("expected a finite number or `z`, got `{tok}`"),
                    }),
                }
            }
        }
    }
}
