//! A tiny arithmetic expression language used for membership grades,
//! their gradients and parametrized matrix entries.
//!
//! Grammar (standard precedence, left associative):
//!
//! ```text
//! expr    := term (('+' | '-') term)*
//! term    := unary (('*' | '/') unary)*
//! unary   := ('-' | '+') unary | primary
//! primary := number | symbol | func '(' expr (',' expr)* ')' | '(' expr ')'
//! func    := sin | cos | exp | abs | min | max
//! ```
//!
//! Symbols are resolved against a caller-supplied table at parse time, so
//! evaluation is a plain tree walk over a slice of values. `pi` is accepted
//! as a named literal.

use std::fmt;

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
#[error("{message} at position {position} in `{source_text}`")]
pub struct ParseError {
    pub position: usize,
    pub message: String,
    pub source_text: String,
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("division by zero")]
    DivisionByZero,
    #[error("non-finite result")]
    NonFinite,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Sin,
    Cos,
    Exp,
    Abs,
    Min,
    Max,
}

impl Func {
    fn from_name(name: &str) -> Option<Func> {
        Some(match name {
            "sin" => Func::Sin,
            "cos" => Func::Cos,
            "exp" => Func::Exp,
            "abs" => Func::Abs,
            "min" => Func::Min,
            "max" => Func::Max,
            _ => return None,
        })
    }

    fn arity(self) -> usize {
        match self {
            Func::Min | Func::Max => 2,
            _ => 1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Func::Sin => "sin",
            Func::Cos => "cos",
            Func::Exp => "exp",
            Func::Abs => "abs",
            Func::Min => "min",
            Func::Max => "max",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Sym(usize),
    Neg(Box<Expr>),
    Binary(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

impl Expr {
    pub fn eval(&self, vars: &[f64]) -> Result<f64, EvalError> {
        let v = match self {
            Expr::Num(v) => *v,
            Expr::Sym(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars)?,
            Expr::Binary(op, a, b) => {
                let a = a.eval(vars)?;
                let b = b.eval(vars)?;
                match op {
                    BinOp::Add => a + b,
                    BinOp::Sub => a - b,
                    BinOp::Mul => a * b,
                    BinOp::Div => {
                        if b == 0.0 {
                            return Err(EvalError::DivisionByZero);
                        }
                        a / b
                    }
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(vars)?;
                match f {
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                    Func::Exp => a.exp(),
                    Func::Abs => a.abs(),
                    Func::Min => a.min(args[1].eval(vars)?),
                    Func::Max => a.max(args[1].eval(vars)?),
                }
            }
        };
        if v.is_finite() {
            Ok(v)
        } else {
            Err(EvalError::NonFinite)
        }
    }

    /// Evaluates an expression that references no symbols.
    pub fn eval_const(&self) -> Result<f64, EvalError> {
        self.eval(&[])
    }

    /// Largest symbol index referenced, if any.
    pub fn max_symbol(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Sym(i) => Some(*i),
            Expr::Neg(e) => e.max_symbol(),
            Expr::Binary(_, a, b) => a.max_symbol().max(b.max_symbol()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_symbol).max(),
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Expr::Num(v) => write!(f, "{v}"),
            Expr::Sym(i) => write!(f, "${i}"),
            Expr::Neg(e) => write!(f, "(-{e})"),
            Expr::Binary(op, a, b) => {
                let c = match op {
                    BinOp::Add => '+',
                    BinOp::Sub => '-',
                    BinOp::Mul => '*',
                    BinOp::Div => '/',
                };
                write!(f, "({a} {c} {b})")
            }
            Expr::Call(func, args) => {
                write!(f, "{}(", func.name())?;
                for (k, a) in args.iter().enumerate() {
                    if k > 0 {
                        write!(f, ", ")?;
                    }
                    write!(f, "{a}")?;
                }
                write!(f, ")")
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<(usize, Tok)>, (usize, String)> {
    let bytes = src.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
            continue;
        }
        let start = i;
        if c.is_ascii_digit() || c == '.' {
            while i < bytes.len() && (bytes[i].is_ascii_digit() || bytes[i] == b'.') {
                i += 1;
            }
            if i < bytes.len() && (bytes[i] == b'e' || bytes[i] == b'E') {
                let mut j = i + 1;
                if j < bytes.len() && (bytes[j] == b'+' || bytes[j] == b'-') {
                    j += 1;
                }
                if j < bytes.len() && bytes[j].is_ascii_digit() {
                    i = j;
                    while i < bytes.len() && bytes[i].is_ascii_digit() {
                        i += 1;
                    }
                }
            }
            let text = &src[start..i];
            let v: f64 = text
                .parse()
                .map_err(|_| (start, format!("malformed number `{text}`")))?;
            out.push((start, Tok::Num(v)));
        } else if c.is_ascii_alphabetic() || c == '_' {
            while i < bytes.len() && (bytes[i].is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(src[start..i].to_string())));
        } else {
            let tok = match c {
                '+' | '-' | '*' | '/' => Tok::Op(c),
                '(' => Tok::LParen,
                ')' => Tok::RParen,
                ',' => Tok::Comma,
                _ => return Err((start, format!("unexpected character `{c}`"))),
            };
            out.push((start, tok));
            i += 1;
        }
    }
    Ok(out)
}

struct Parser<'a> {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
    symbols: &'a [&'a str],
}

impl Parser<'_> {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map_or(self.end, |(p, _)| *p)
    }

    fn fail<T>(&self, msg: impl Into<String>) -> Result<T, (usize, String)> {
        Err((self.offset(), msg.into()))
    }

    fn expr(&mut self) -> Result<Expr, (usize, String)> {
        let mut lhs = self.term()?;
        while let Some(Tok::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr, (usize, String)> {
        let mut lhs = self.unary()?;
        while let Some(Tok::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Binary(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr, (usize, String)> {
        match self.peek() {
            Some(Tok::Op('-')) => {
                self.pos += 1;
                Ok(Expr::Neg(Box::new(self.unary()?)))
            }
            Some(Tok::Op('+')) => {
                self.pos += 1;
                self.unary()
            }
            _ => self.primary(),
        }
    }

    fn primary(&mut self) -> Result<Expr, (usize, String)> {
        match self.peek().cloned() {
            Some(Tok::Num(v)) => {
                self.pos += 1;
                Ok(Expr::Num(v))
            }
            Some(Tok::LParen) => {
                self.pos += 1;
                let e = self.expr()?;
                self.expect(Tok::RParen, "expected `)`")?;
                Ok(e)
            }
            Some(Tok::Ident(name)) => {
                if let Some(func) = Func::from_name(&name) {
                    self.pos += 1;
                    self.expect(Tok::LParen, format!("expected `(` after `{name}`"))?;
                    let mut args = vec![self.expr()?];
                    while self.peek() == Some(&Tok::Comma) {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    if args.len() != func.arity() {
                        return self.fail(format!(
                            "`{name}` takes {} argument(s), got {}",
                            func.arity(),
                            args.len()
                        ));
                    }
                    self.expect(Tok::RParen, "expected `)`")?;
                    Ok(Expr::Call(func, args))
                } else if let Some(idx) = self.symbols.iter().position(|s| *s == name) {
                    self.pos += 1;
                    Ok(Expr::Sym(idx))
                } else if name == "pi" {
                    self.pos += 1;
                    Ok(Expr::Num(std::f64::consts::PI))
                } else {
                    self.fail(format!("unknown symbol `{name}`"))
                }
            }
            Some(t) => self.fail(format!("unexpected token {t:?}")),
            None => self.fail("unexpected end of input"),
        }
    }

    fn expect(&mut self, tok: Tok, msg: impl Into<String>) -> Result<(), (usize, String)> {
        if self.peek() == Some(&tok) {
            self.pos += 1;
            Ok(())
        } else {
            self.fail(msg)
        }
    }
}

/// Parses `src`, resolving identifiers against `symbols` (index = position
/// in the slice).
pub fn parse(src: &str, symbols: &[&str]) -> Result<Expr, ParseError> {
    let wrap = |(position, message): (usize, String)| ParseError {
        position,
        message,
        source_text: src.to_string(),
    };
    let toks = tokenize(src).map_err(wrap)?;
    let mut p = Parser {
        toks,
        pos: 0,
        end: src.len(),
        symbols,
    };
    let e = p.expr().map_err(wrap)?;
    if p.pos != p.toks.len() {
        return Err(wrap((p.offset(), "trailing input".into())));
    }
    Ok(e)
}

/// Symbol table `x1..xn` used for state expressions.
pub fn state_symbols(n: usize) -> Vec<String> {
    (1..=n).map(|k| format!("x{k}")).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(src: &str, syms: &[&str], vals: &[f64]) -> f64 {
        parse(src, syms).unwrap().eval(vals).unwrap()
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", &[], &[]), 7.0);
        assert_eq!(ev("(1 + 2) * 3", &[], &[]), 9.0);
        assert_eq!(ev("8 / 4 / 2", &[], &[]), 1.0);
        assert_eq!(ev("10 - 3 - 2", &[], &[]), 5.0);
        assert_eq!(ev("-2 * -3", &[], &[]), 6.0);
        assert_eq!(ev("1.5e2 + 2E-1", &[], &[]), 150.2);
    }

    #[test]
    fn functions_and_symbols() {
        let x = [0.3, -1.2];
        let s = ["x1", "x2"];
        assert_eq!(ev("0.5*(1+sin(x1))", &s, &x), 0.5 * (1.0 + 0.3f64.sin()));
        assert_eq!(ev("max(x1, x2) + min(x1, x2)", &s, &x), 0.3 - 1.2);
        assert_eq!(ev("abs(x2) * exp(0) + cos(0)", &s, &x), 2.2);
        assert!((ev("1.35*pi", &[], &[]) - 1.35 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn errors_carry_positions() {
        let e = parse("1 + y", &["x1"]).unwrap_err();
        assert_eq!(e.position, 4);
        assert!(e.message.contains("unknown symbol"));
        let e = parse("sin(1, 2)", &[]).unwrap_err();
        assert!(e.message.contains("argument"));
        let e = parse("(1 + 2", &[]).unwrap_err();
        assert_eq!(e.position, 6);
        let e = parse("2 $ 3", &[]).unwrap_err();
        assert_eq!(e.position, 2);
        assert!(parse("1 2", &[]).is_err());
        assert!(parse("", &[]).is_err());
        assert!(parse("x1^2", &["x1"]).is_err());
    }

    #[test]
    fn eval_faults() {
        let e = parse("1 / (x1 - 1)", &["x1"]).unwrap();
        assert_eq!(e.eval(&[1.0]), Err(EvalError::DivisionByZero));
        let e = parse("exp(1000)", &[]).unwrap();
        assert_eq!(e.eval(&[]), Err(EvalError::NonFinite));
    }

    #[test]
    fn max_symbol_tracks_references() {
        assert_eq!(parse("3", &[]).unwrap().max_symbol(), None);
        let s = ["a", "b", "c"];
        assert_eq!(parse("a + min(c, b)", &s).unwrap().max_symbol(), Some(2));
    }
}
