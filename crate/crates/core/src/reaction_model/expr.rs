//! Arithmetic expression interpreter for user-defined models and initial
//! data.
//!
//! Grammar (whitespace insensitive):
//!
//! ```text
//! expr   := term (('+' | '-') term)*
//! term   := unary (('*' | '/') unary)*
//! unary  := '-' unary | power
//! power  := atom ('^' unary)?          right associative
//! atom   := number | name | name '(' expr (',' expr)* ')' | '(' expr ')'
//! ```
//!
//! Functions: `max(a, b)`, `min(a, b)`, `pos(a)` (= `max(a, 0)`), `abs`,
//! `exp`, `log`, `sqrt`, `sin`, `cos`. Names resolve to variables or named
//! constants through a caller-supplied resolver.

use crate::error::{Error, Result};
use crate::scalar::Real;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
    Pow,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Func {
    Max,
    Min,
    Pos,
    Abs,
    Exp,
    Log,
    Sqrt,
    Sin,
    Cos,
}

impl Func {
    fn lookup(name: &str) -> Option<(Func, usize)> {
        Some(match name {
            "max" => (Func::Max, 2),
            "min" => (Func::Min, 2),
            "pos" => (Func::Pos, 1),
            "abs" => (Func::Abs, 1),
            "exp" => (Func::Exp, 1),
            "log" => (Func::Log, 1),
            "sqrt" => (Func::Sqrt, 1),
            "sin" => (Func::Sin, 1),
            "cos" => (Func::Cos, 1),
            _ => return None,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Num(f64),
    Var(usize),
    Neg(Box<Expr>),
    Bin(BinOp, Box<Expr>, Box<Expr>),
    Call(Func, Vec<Expr>),
}

/// What a bare name refers to.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Binding {
    Var(usize),
    Const(f64),
}

#[derive(Debug, Clone, PartialEq)]
enum Token {
    Num(f64),
    Ident(String),
    Op(char),
    LParen,
    RParen,
    Comma,
}

fn tokenize(src: &str) -> Result<Vec<Token>> {
    let mut out = Vec::new();
    let chars: Vec<char> = src.chars().collect();
    let mut i = 0;
    while i < chars.len() {
        let c = chars[i];
        match c {
            c if c.is_whitespace() => i += 1,
            '+' | '-' | '*' | '/' | '^' => {
                out.push(Token::Op(c));
                i += 1;
            }
            '(' => {
                out.push(Token::LParen);
                i += 1;
            }
            ')' => {
                out.push(Token::RParen);
                i += 1;
            }
            ',' => {
                out.push(Token::Comma);
                i += 1;
            }
            c if c.is_ascii_digit() || c == '.' => {
                let start = i;
                while i < chars.len() && (chars[i].is_ascii_digit() || chars[i] == '.') {
                    i += 1;
                }
                // Exponent part: 1e-3, 2.5E+4.
                if i < chars.len() && (chars[i] == 'e' || chars[i] == 'E') {
                    let mut j = i + 1;
                    if j < chars.len() && (chars[j] == '+' || chars[j] == '-') {
                        j += 1;
                    }
                    if j < chars.len() && chars[j].is_ascii_digit() {
                        i = j;
                        while i < chars.len() && chars[i].is_ascii_digit() {
                            i += 1;
                        }
                    }
                }
                let text: String = chars[start..i].iter().collect();
                let value = text
                    .parse::<f64>()
                    .map_err(|_| Error::Expr(format!("bad number `{text}` in `{src}`")))?;
                out.push(Token::Num(value));
            }
            c if c.is_alphabetic() || c == '_' => {
                let start = i;
                while i < chars.len() && (chars[i].is_alphanumeric() || chars[i] == '_') {
                    i += 1;
                }
                out.push(Token::Ident(chars[start..i].iter().collect()));
            }
            other => {
                return Err(Error::Expr(format!("unexpected character `{other}` in `{src}`")));
            }
        }
    }
    Ok(out)
}

struct Parser<'a, R> {
    tokens: Vec<Token>,
    pos: usize,
    src: &'a str,
    resolve: R,
}

impl<R: Fn(&str) -> Option<Binding>> Parser<'_, R> {
    fn peek(&self) -> Option<&Token> {
        self.tokens.get(self.pos)
    }

    fn next(&mut self) -> Option<Token> {
        let t = self.tokens.get(self.pos).cloned();
        self.pos += 1;
        t
    }

    fn err(&self, what: &str) -> Error {
        Error::Expr(format!("{what} at token {} in `{}`", self.pos, self.src))
    }

    fn expr(&mut self) -> Result<Expr> {
        let mut lhs = self.term()?;
        while let Some(Token::Op(c @ ('+' | '-'))) = self.peek() {
            let op = if *c == '+' { BinOp::Add } else { BinOp::Sub };
            self.pos += 1;
            let rhs = self.term()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn term(&mut self) -> Result<Expr> {
        let mut lhs = self.unary()?;
        while let Some(Token::Op(c @ ('*' | '/'))) = self.peek() {
            let op = if *c == '*' { BinOp::Mul } else { BinOp::Div };
            self.pos += 1;
            let rhs = self.unary()?;
            lhs = Expr::Bin(op, Box::new(lhs), Box::new(rhs));
        }
        Ok(lhs)
    }

    fn unary(&mut self) -> Result<Expr> {
        if let Some(Token::Op('-')) = self.peek() {
            self.pos += 1;
            return Ok(Expr::Neg(Box::new(self.unary()?)));
        }
        if let Some(Token::Op('+')) = self.peek() {
            self.pos += 1;
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Expr> {
        let base = self.atom()?;
        if let Some(Token::Op('^')) = self.peek() {
            self.pos += 1;
            let exponent = self.unary()?;
            return Ok(Expr::Bin(BinOp::Pow, Box::new(base), Box::new(exponent)));
        }
        Ok(base)
    }

    fn atom(&mut self) -> Result<Expr> {
        match self.next() {
            Some(Token::Num(x)) => Ok(Expr::Num(x)),
            Some(Token::LParen) => {
                let e = self.expr()?;
                match self.next() {
                    Some(Token::RParen) => Ok(e),
                    _ => Err(self.err("expected `)`")),
                }
            }
            Some(Token::Ident(name)) => {
                if let Some(Token::LParen) = self.peek() {
                    let (func, arity) = Func::lookup(&name)
                        .ok_or_else(|| Error::Expr(format!("unknown function `{name}` in `{}`", self.src)))?;
                    self.pos += 1;
                    let mut args = vec![self.expr()?];
                    while let Some(Token::Comma) = self.peek() {
                        self.pos += 1;
                        args.push(self.expr()?);
                    }
                    match self.next() {
                        Some(Token::RParen) => {}
                        _ => return Err(self.err("expected `)` after arguments")),
                    }
                    if args.len() != arity {
                        return Err(Error::Expr(format!(
                            "`{name}` takes {arity} argument(s), got {} in `{}`",
                            args.len(),
                            self.src
                        )));
                    }
                    return Ok(Expr::Call(func, args));
                }
                match (self.resolve)(&name) {
                    Some(Binding::Var(i)) => Ok(Expr::Var(i)),
                    Some(Binding::Const(c)) => Ok(Expr::Num(c)),
                    None => Err(Error::Expr(format!("unknown name `{name}` in `{}`", self.src))),
                }
            }
            _ => Err(self.err("expected a number, name or `(`")),
        }
    }
}

pub fn parse(src: &str, resolve: impl Fn(&str) -> Option<Binding>) -> Result<Expr> {
    let tokens = tokenize(src)?;
    if tokens.is_empty() {
        return Err(Error::Expr("empty expression".into()));
    }
    let mut p = Parser {
        tokens,
        pos: 0,
        src,
        resolve,
    };
    let e = p.expr()?;
    if p.pos != p.tokens.len() {
        return Err(p.err("trailing input"));
    }
    Ok(e)
}

impl Expr {
    pub fn eval<T: Real>(&self, vars: &[T]) -> T {
        match self {
            Expr::Num(x) => T::lit(*x),
            Expr::Var(i) => vars[*i],
            Expr::Neg(e) => -e.eval(vars),
            Expr::Bin(op, a, b) => {
                let x = a.eval(vars);
                match op {
                    BinOp::Add => x + b.eval(vars),
                    BinOp::Sub => x - b.eval(vars),
                    BinOp::Mul => x * b.eval(vars),
                    BinOp::Div => x / b.eval(vars),
                    BinOp::Pow => match **b {
                        Expr::Num(n) if n.fract() == 0.0 && n.abs() <= 64.0 => x.powi(n as i32),
                        _ => x.powf(b.eval(vars)),
                    },
                }
            }
            Expr::Call(f, args) => {
                let a = args[0].eval(vars);
                match f {
                    Func::Max => a.max(args[1].eval(vars)),
                    Func::Min => a.min(args[1].eval(vars)),
                    Func::Pos => a.max(T::zero()),
                    Func::Abs => a.abs(),
                    Func::Exp => a.exp(),
                    Func::Log => a.ln(),
                    Func::Sqrt => a.sqrt(),
                    Func::Sin => a.sin(),
                    Func::Cos => a.cos(),
                }
            }
        }
    }

    /// Largest variable index referenced, if any.
    pub fn max_var(&self) -> Option<usize> {
        match self {
            Expr::Num(_) => None,
            Expr::Var(i) => Some(*i),
            Expr::Neg(e) => e.max_var(),
            Expr::Bin(_, a, b) => a.max_var().max(b.max_var()),
            Expr::Call(_, args) => args.iter().filter_map(Expr::max_var).max(),
        }
    }

    pub fn references(&self, var: usize) -> bool {
        match self {
            Expr::Num(_) => false,
            Expr::Var(i) => *i == var,
            Expr::Neg(e) => e.references(var),
            Expr::Bin(_, a, b) => a.references(var) || b.references(var),
            Expr::Call(_, args) => args.iter().any(|a| a.references(var)),
        }
    }
}

/// Resolver for initial-data expressions over `r`, `theta`, `x`, `y`
/// (variables 0..4) plus `pi`.
pub fn spatial_resolver(name: &str) -> Option<Binding> {
    Some(match name {
        "r" => Binding::Var(0),
        "theta" => Binding::Var(1),
        "x" => Binding::Var(2),
        "y" => Binding::Var(3),
        "pi" => Binding::Const(std::f64::consts::PI),
        _ => return None,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn vars(name: &str) -> Option<Binding> {
        match name {
            "u" => Some(Binding::Var(0)),
            "v" => Some(Binding::Var(1)),
            "k" => Some(Binding::Const(2.0)),
            _ => None,
        }
    }

    fn ev(src: &str, u: f64, v: f64) -> f64 {
        parse(src, vars).unwrap().eval(&[u, v])
    }

    #[test]
    fn precedence_and_associativity() {
        assert_eq!(ev("1 + 2 * 3", 0.0, 0.0), 7.0);
        assert_eq!(ev("-u^2", 3.0, 0.0), -9.0);
        assert_eq!(ev("2^3^2", 0.0, 0.0), 512.0);
        assert_eq!(ev("(1 + 2) * 3", 0.0, 0.0), 9.0);
        assert_eq!(ev("u - v - 1", 5.0, 2.0), 2.0);
        assert_eq!(ev("8 / 4 / 2", 0.0, 0.0), 1.0);
        assert_eq!(ev("u^-1", 4.0, 0.0), 0.25);
    }

    #[test]
    fn functions_and_constants() {
        assert_eq!(ev("pos(u - v)", 1.0, 3.0), 0.0);
        assert_eq!(ev("max(u, v)", 1.0, 3.0), 3.0);
        assert_eq!(ev("k * u^2 * v^2", 2.0, 3.0), 72.0);
        assert!((ev("exp(u)", 1.0, 0.0) - std::f64::consts::E).abs() < 1e-15);
        assert_eq!(ev("1e-3 * 2E+2", 0.0, 0.0), 0.2);
    }

    #[test]
    fn errors_are_reported() {
        assert!(parse("", vars).is_err());
        assert!(parse("u +", vars).is_err());
        assert!(parse("w * 2", vars).is_err());
        assert!(parse("foo(u)", vars).is_err());
        assert!(parse("max(u)", vars).is_err());
        assert!(parse("(u", vars).is_err());
        assert!(parse("u $ v", vars).is_err());
        assert!(parse("u v", vars).is_err());
    }

    #[test]
    fn variable_introspection() {
        let e = parse("u * k + 1", vars).unwrap();
        assert_eq!(e.max_var(), Some(0));
        assert!(e.references(0));
        assert!(!e.references(1));
    }
}
