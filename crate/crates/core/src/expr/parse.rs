use thiserror::Error;

use super::eval::{evaluate, Bindings};
use super::{Expr, UnaryOp, Var};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("syntax error at {pos}: {message}")]
    Syntax { pos: usize, message: String },
    #[error("non-integer exponent `{text}` at {pos}")]
    NonIntegerExponent { pos: usize, text: String },
    #[error("divisor at {pos} is not a constant")]
    NonConstantDivisor { pos: usize },
    #[error("unknown identifier `{name}` at {pos}")]
    UnknownIdentifier { pos: usize, name: String },
}

impl ParseError {
    pub fn position(&self) -> usize {
        match self {
            ParseError::Syntax { pos, .. }
            | ParseError::NonIntegerExponent { pos, .. }
            | ParseError::NonConstantDivisor { pos }
            | ParseError::UnknownIdentifier { pos, .. } => *pos,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
enum Tok {
    Num(f64, String),
    Ident(String),
    Sym(char),
}

fn lex(text: &str) -> Result<Vec<(usize, Tok)>, ParseError> {
    let bytes = text.as_bytes();
    let mut out = Vec::new();
    let mut i = 0;
    while i < bytes.len() {
        let c = bytes[i] as char;
        if c.is_ascii_whitespace() {
            i += 1;
        } else if c.is_ascii_digit() || c == '.' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_digit() || bytes[i] == b'.') {
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
            let s = &text[start..i];
            let v: f64 = s.parse().map_err(|_| ParseError::Syntax {
                pos: start,
                message: format!("malformed number `{s}`"),
            })?;
            if !v.is_finite() {
                return Err(ParseError::Syntax { pos: start, message: "number overflows".into() });
            }
            out.push((start, Tok::Num(v, s.to_string())));
        } else if c.is_ascii_alphabetic() || c == '_' {
            let start = i;
            while i < bytes.len() && ((bytes[i] as char).is_ascii_alphanumeric() || bytes[i] == b'_') {
                i += 1;
            }
            out.push((start, Tok::Ident(text[start..i].to_string())));
        } else if "+-*/^()".contains(c) {
            out.push((i, Tok::Sym(c)));
            i += 1;
        } else {
            return Err(ParseError::Syntax { pos: i, message: format!("unexpected character `{c}`") });
        }
    }
    Ok(out)
}

/// Intermediate result that keeps enough shape to recognise `I1 - 3`.
enum Term {
    /// A bare `I1` / `I2` identifier (value `U + 3`).
    Invariant(Var),
    /// A bare numeric literal.
    Literal(f64),
    Expr(Expr),
}

impl Term {
    fn into_expr(self) -> Expr {
        match self {
            Term::Invariant(v) => Expr::add(Expr::var(v), Expr::Const(3.0)),
            Term::Literal(c) => Expr::Const(c),
            Term::Expr(e) => e,
        }
    }
}

fn negate(e: Expr) -> Expr {
    match e {
        Expr::Const(c) => Expr::Const(-c),
        other => Expr::mul(Expr::Const(-1.0), other),
    }
}

struct Parser {
    toks: Vec<(usize, Tok)>,
    pos: usize,
    end: usize,
}

impl Parser {
    fn peek(&self) -> Option<&Tok> {
        self.toks.get(self.pos).map(|(_, t)| t)
    }

    fn offset(&self) -> usize {
        self.toks.get(self.pos).map(|(p, _)| *p).unwrap_or(self.end)
    }

    fn eat(&mut self, c: char) -> bool {
        if self.peek() == Some(&Tok::Sym(c)) {
            self.pos += 1;
            true
        } else {
            false
        }
    }

    fn expect(&mut self, c: char) -> Result<(), ParseError> {
        if self.eat(c) {
            Ok(())
        } else {
            Err(self.error(format!("expected `{c}`")))
        }
    }

    fn error(&self, message: String) -> ParseError {
        ParseError::Syntax { pos: self.offset(), message }
    }

    fn sum(&mut self) -> Result<Expr, ParseError> {
        let mut terms = vec![(false, self.product()?)];
        loop {
            let negative = if self.eat('+') {
                false
            } else if self.eat('-') {
                true
            } else {
                break;
            };
            terms.push((negative, self.product()?));
        }
        // Pair `+I_k` with `-3` into the shifted invariant.
        let mut slots: Vec<Option<(bool, Term)>> = terms.into_iter().map(Some).collect();
        for i in 0..slots.len() {
            let var = match &slots[i] {
                Some((false, Term::Invariant(v))) => *v,
                _ => continue,
            };
            let three = slots
                .iter()
                .position(|s| matches!(s, Some((true, Term::Literal(c))) if *c == 3.0));
            if let Some(j) = three {
                slots[j] = None;
                slots[i] = Some((false, Term::Expr(Expr::var(var))));
            }
        }
        let mut acc: Option<Expr> = None;
        for (negative, term) in slots.into_iter().flatten() {
            let e = term.into_expr();
            let e = if negative { negate(e) } else { e };
            acc = Some(match acc {
                None => e,
                Some(a) => Expr::add(a, e),
            });
        }
        Ok(acc.expect("sum has at least one term"))
    }

    fn product(&mut self) -> Result<Term, ParseError> {
        let first = self.unary()?;
        if !matches!(self.peek(), Some(Tok::Sym('*')) | Some(Tok::Sym('/'))) {
            return Ok(first);
        }
        let mut acc = first.into_expr();
        loop {
            if self.eat('*') {
                acc = Expr::mul(acc, self.unary()?.into_expr());
            } else if self.peek() == Some(&Tok::Sym('/')) {
                self.pos += 1;
                let at = self.offset();
                let divisor = self.unary()?.into_expr();
                let value = if divisor.variables().is_empty() {
                    evaluate(&divisor, &Bindings::new()).ok()
                } else {
                    None
                };
                match value {
                    Some(d) if d != 0.0 && (1.0 / d).is_finite() => {
                        acc = Expr::mul(acc, Expr::Const(1.0 / d));
                    }
                    _ => return Err(ParseError::NonConstantDivisor { pos: at }),
                }
            } else {
                break;
            }
        }
        Ok(Term::Expr(acc))
    }

    fn unary(&mut self) -> Result<Term, ParseError> {
        if self.eat('-') {
            let inner = self.unary()?.into_expr();
            return Ok(Term::Expr(negate(inner)));
        }
        if self.eat('+') {
            return self.unary();
        }
        self.power()
    }

    fn power(&mut self) -> Result<Term, ParseError> {
        let base = self.atom()?;
        if !self.eat('^') {
            return Ok(base);
        }
        let at = self.offset();
        let paren = self.eat('(');
        let negative = self.eat('-');
        let (value, text) = match self.peek() {
            Some(Tok::Num(v, s)) => (*v, s.clone()),
            _ => return Err(self.error("exponent must be an integer literal".into())),
        };
        self.pos += 1;
        if paren {
            self.expect(')')?;
        }
        if value.fract() != 0.0 || value > i32::MAX as f64 {
            let text = if negative { format!("-{text}") } else { text };
            return Err(ParseError::NonIntegerExponent { pos: at, text });
        }
        let n = if negative { -(value as i32) } else { value as i32 };
        Ok(Term::Expr(Expr::pow_int(base.into_expr(), n)))
    }

    fn atom(&mut self) -> Result<Term, ParseError> {
        let at = self.offset();
        match self.peek().cloned() {
            Some(Tok::Num(v, _)) => {
                self.pos += 1;
                Ok(Term::Literal(v))
            }
            Some(Tok::Sym('(')) => {
                self.pos += 1;
                let e = self.sum()?;
                self.expect(')')?;
                Ok(Term::Expr(e))
            }
            Some(Tok::Ident(name)) => {
                self.pos += 1;
                let func = match name.as_str() {
                    "exp" => Some(UnaryOp::Exp),
                    "square" => Some(UnaryOp::Square),
                    "cube" => Some(UnaryOp::Cube),
                    "ln1m" | "ln_x" => Some(UnaryOp::LnX),
                    _ => None,
                };
                if let Some(op) = func {
                    self.expect('(')?;
                    let arg = self.sum()?;
                    self.expect(')')?;
                    return Ok(Term::Expr(Expr::unary(op, arg)));
                }
                let var = match name.as_str() {
                    "I1" => return Ok(Term::Invariant(Var::U1)),
                    "I2" => return Ok(Term::Invariant(Var::U2)),
                    "l1" => Var::L1,
                    "l2" => Var::L2,
                    "l3" => Var::L3,
                    "e1" => Var::E1,
                    "e2" => Var::E2,
                    "e3" => Var::E3,
                    _ => return Err(ParseError::UnknownIdentifier { pos: at, name }),
                };
                Ok(Term::Expr(Expr::var(var)))
            }
            Some(Tok::Sym(c)) => Err(self.error(format!("unexpected `{c}`"))),
            None => Err(self.error("unexpected end of input".into())),
        }
    }
}

/// Parses the expression DSL.
///
/// Infix `+ - * / ^`, calls `exp square cube ln1m`, variables
/// `I1 I2 l1 l2 l3 e1 e2 e3` and decimal constants. `a - b` becomes
/// `a + (-1)*b`, division is only allowed by constants, and `^` takes an
/// integer literal. `I1 - 3` / `I2 - 3` map onto the shifted invariant
/// variables; a lone `I1` reads as `(I1 - 3) + 3`.
pub fn parse_expr(text: &str) -> Result<Expr, ParseError> {
    let toks = lex(text)?;
    if toks.is_empty() {
        return Err(ParseError::Syntax { pos: 0, message: "empty expression".into() });
    }
    let mut p = Parser { toks, pos: 0, end: text.len() };
    let e = p.sum()?;
    if p.pos != p.toks.len() {
        return Err(p.error("trailing input".into()));
    }
    Ok(e)
}
