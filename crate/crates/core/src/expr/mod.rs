//! Expression trees for strain energy candidates.
//!
//! An [`Expr`] is an immutable tree of constants, variables and the operator
//! set used by the search: `exp`, `square`, `cube`, `ln1m` (`-ln(1 - x)`),
//! `+`, `*` and `pow_int` (integer power with a constant exponent).
//!
//! Invariant-based models are written in the shifted invariants `I1 - 3` and
//! `I2 - 3` ([`Var::U1`], [`Var::U2`]); stretch- and strain-based models are
//! written as the single-principal term `f(l1)` / `f(e1)` of an additive
//! energy `Ψ = Σᵢ f(λᵢ)`.

mod diff;
mod eval;
mod format;
mod grammar;
mod parse;
mod simplify;
mod skeleton;

use std::fmt;

pub use diff::differentiate;
pub use eval::{evaluate, evaluate_batch, Bindings, Columns, EvalError, MAX_MAGNITUDE};
pub use format::{format_expr, format_human};
pub use grammar::{check_constraints, complexity, ComplexityError, Grammar, NestedRule, Violation};
pub use parse::{parse_expr, ParseError};
pub use simplify::simplify;
pub use skeleton::{canonical_form, constants_match, form_matches, skeleton, CanonicalForm};

/// Variables understood by the DSL and the evaluator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Var {
    /// Shifted first invariant, `I1 - 3`.
    U1,
    /// Shifted second invariant, `I2 - 3`.
    U2,
    L1,
    L2,
    L3,
    E1,
    E2,
    E3,
}

impl Var {
    pub const ALL: [Var; 8] = [
        Var::U1,
        Var::U2,
        Var::L1,
        Var::L2,
        Var::L3,
        Var::E1,
        Var::E2,
        Var::E3,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    /// DSL spelling. Shifted invariants print as `(I1-3)`.
    pub fn dsl_name(self) -> &'static str {
        match self {
            Var::U1 => "(I1-3)",
            Var::U2 => "(I2-3)",
            Var::L1 => "l1",
            Var::L2 => "l2",
            Var::L3 => "l3",
            Var::E1 => "e1",
            Var::E2 => "e2",
            Var::E3 => "e3",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum UnaryOp {
    Exp,
    Square,
    Cube,
    /// `ln_x(x) = -ln(1 - x)`.
    LnX,
}

impl UnaryOp {
    pub const ALL: [UnaryOp; 4] = [UnaryOp::Exp, UnaryOp::Square, UnaryOp::Cube, UnaryOp::LnX];

    pub fn name(self) -> &'static str {
        match self {
            UnaryOp::Exp => "exp",
            UnaryOp::Square => "square",
            UnaryOp::Cube => "cube",
            UnaryOp::LnX => "ln1m",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum BinaryOp {
    Add,
    Mul,
}

impl BinaryOp {
    pub fn symbol(self) -> char {
        match self {
            BinaryOp::Add => '+',
            BinaryOp::Mul => '*',
        }
    }
}

/// Operator identity used by grammar tables.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Op {
    Exp,
    Square,
    Cube,
    LnX,
    Add,
    Mul,
    PowInt,
}

impl Op {
    pub const ALL: [Op; 7] = [
        Op::Exp,
        Op::Square,
        Op::Cube,
        Op::LnX,
        Op::Add,
        Op::Mul,
        Op::PowInt,
    ];

    pub fn index(self) -> usize {
        self as usize
    }

    pub fn name(self) -> &'static str {
        match self {
            Op::Exp => "exp",
            Op::Square => "square",
            Op::Cube => "cube",
            Op::LnX => "ln_x",
            Op::Add => "+",
            Op::Mul => "*",
            Op::PowInt => "pow_int",
        }
    }

    pub fn from_name(name: &str) -> Option<Op> {
        Some(match name {
            "exp" => Op::Exp,
            "square" => Op::Square,
            "cube" => Op::Cube,
            "ln_x" | "ln1m" => Op::LnX,
            "+" | "add" => Op::Add,
            "*" | "mul" => Op::Mul,
            "pow_int" | "^" => Op::PowInt,
            _ => return None,
        })
    }
}

impl From<UnaryOp> for Op {
    fn from(op: UnaryOp) -> Op {
        match op {
            UnaryOp::Exp => Op::Exp,
            UnaryOp::Square => Op::Square,
            UnaryOp::Cube => Op::Cube,
            UnaryOp::LnX => Op::LnX,
        }
    }
}

impl From<BinaryOp> for Op {
    fn from(op: BinaryOp) -> Op {
        match op {
            BinaryOp::Add => Op::Add,
            BinaryOp::Mul => Op::Mul,
        }
    }
}

/// Expression tree node.
///
/// `PowInt` holds its exponent as an integer: the tree-level constant of
/// `pow_int(x, y)` is resolved with [`round_exponent`] when the node is built,
/// and it still counts as one constant node for complexity.
#[derive(Debug, Clone, PartialEq)]
pub enum Expr {
    Const(f64),
    Var(Var),
    Unary(UnaryOp, Box<Expr>),
    Binary(BinaryOp, Box<Expr>, Box<Expr>),
    PowInt(Box<Expr>, i32),
}

/// `ceiling(y - 0.5)`: round half down.
pub fn round_exponent(y: f64) -> i32 {
    (y - 0.5).ceil() as i32
}

impl Expr {
    pub fn constant(value: f64) -> Expr {
        debug_assert!(value.is_finite());
        Expr::Const(value)
    }

    pub fn var(v: Var) -> Expr {
        Expr::Var(v)
    }

    pub fn unary(op: UnaryOp, child: Expr) -> Expr {
        Expr::Unary(op, Box::new(child))
    }

    pub fn add(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinaryOp::Add, Box::new(a), Box::new(b))
    }

    pub fn mul(a: Expr, b: Expr) -> Expr {
        Expr::Binary(BinaryOp::Mul, Box::new(a), Box::new(b))
    }

    pub fn pow_int(base: Expr, exponent: i32) -> Expr {
        Expr::PowInt(Box::new(base), exponent)
    }

    pub fn exp(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Exp, a)
    }

    pub fn square(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Square, a)
    }

    pub fn cube(a: Expr) -> Expr {
        Expr::unary(UnaryOp::Cube, a)
    }

    pub fn ln_x(a: Expr) -> Expr {
        Expr::unary(UnaryOp::LnX, a)
    }

    pub fn op(&self) -> Option<Op> {
        match self {
            Expr::Const(_) | Expr::Var(_) => None,
            Expr::Unary(op, _) => Some((*op).into()),
            Expr::Binary(op, _, _) => Some((*op).into()),
            Expr::PowInt(_, _) => Some(Op::PowInt),
        }
    }

    pub fn is_const(&self) -> bool {
        matches!(self, Expr::Const(_))
    }

    pub fn as_const(&self) -> Option<f64> {
        match self {
            Expr::Const(c) => Some(*c),
            _ => None,
        }
    }

    /// Direct children, left to right.
    pub fn children(&self) -> Vec<&Expr> {
        match self {
            Expr::Const(_) | Expr::Var(_) => Vec::new(),
            Expr::Unary(_, a) | Expr::PowInt(a, _) => vec![a],
            Expr::Binary(_, a, b) => vec![a, b],
        }
    }

    /// Number of tree nodes, counting a `pow_int` exponent as its own node.
    pub fn node_count(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.node_count(),
            Expr::PowInt(a, _) => 2 + a.node_count(),
            Expr::Binary(_, a, b) => 1 + a.node_count() + b.node_count(),
        }
    }

    /// Depth with leaves at depth 1; a `pow_int` exponent is a leaf.
    pub fn depth(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) => 1 + a.depth(),
            Expr::PowInt(a, _) => 1 + a.depth().max(1),
            Expr::Binary(_, a, b) => 1 + a.depth().max(b.depth()),
        }
    }

    pub fn contains_var(&self, v: Var) -> bool {
        match self {
            Expr::Const(_) => false,
            Expr::Var(w) => *w == v,
            Expr::Unary(_, a) | Expr::PowInt(a, _) => a.contains_var(v),
            Expr::Binary(_, a, b) => a.contains_var(v) || b.contains_var(v),
        }
    }

    pub fn variables(&self) -> Vec<Var> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Var(v) = e {
                if !out.contains(v) {
                    out.push(*v);
                }
            }
        });
        out.sort();
        out
    }

    /// Pre-order traversal.
    pub fn visit<'a>(&'a self, f: &mut impl FnMut(&'a Expr)) {
        f(self);
        match self {
            Expr::Const(_) | Expr::Var(_) => {}
            Expr::Unary(_, a) | Expr::PowInt(a, _) => a.visit(f),
            Expr::Binary(_, a, b) => {
                a.visit(f);
                b.visit(f);
            }
        }
    }

    /// Tree constants in pre-order (exponents of `pow_int` excluded).
    pub fn constants(&self) -> Vec<f64> {
        let mut out = Vec::new();
        self.visit(&mut |e| {
            if let Expr::Const(c) = e {
                out.push(*c);
            }
        });
        out
    }

    pub fn constant_count(&self) -> usize {
        let mut n = 0;
        self.visit(&mut |e| {
            if e.is_const() {
                n += 1;
            }
        });
        n
    }

    /// Replaces constants in pre-order. Extra values are ignored; missing ones
    /// leave the original constant in place.
    pub fn with_constants(&self, values: &[f64]) -> Expr {
        fn go(e: &Expr, values: &[f64], next: &mut usize) -> Expr {
            match e {
                Expr::Const(c) => {
                    let v = values.get(*next).copied().unwrap_or(*c);
                    *next += 1;
                    Expr::Const(v)
                }
                Expr::Var(v) => Expr::Var(*v),
                Expr::Unary(op, a) => Expr::unary(*op, go(a, values, next)),
                Expr::PowInt(a, n) => Expr::pow_int(go(a, values, next), *n),
                Expr::Binary(op, a, b) => {
                    let a = go(a, values, next);
                    let b = go(b, values, next);
                    Expr::Binary(*op, Box::new(a), Box::new(b))
                }
            }
        }
        go(self, values, &mut 0)
    }

    /// Replaces every occurrence of `v` with `by`.
    pub fn substitute(&self, v: Var, by: &Expr) -> Expr {
        match self {
            Expr::Var(w) if *w == v => by.clone(),
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.substitute(v, by)),
            Expr::PowInt(a, n) => Expr::pow_int(a.substitute(v, by), *n),
            Expr::Binary(op, a, b) => Expr::Binary(
                *op,
                Box::new(a.substitute(v, by)),
                Box::new(b.substitute(v, by)),
            ),
        }
    }

    /// Number of subtrees (pre-order positions).
    pub fn size(&self) -> usize {
        match self {
            Expr::Const(_) | Expr::Var(_) => 1,
            Expr::Unary(_, a) | Expr::PowInt(a, _) => 1 + a.size(),
            Expr::Binary(_, a, b) => 1 + a.size() + b.size(),
        }
    }

    /// Subtree at pre-order position `index` (see [`Expr::size`]).
    pub fn subtree(&self, index: usize) -> Option<&Expr> {
        if index == 0 {
            return Some(self);
        }
        let mut rest = index - 1;
        for child in self.children() {
            let n = child.size();
            if rest < n {
                return child.subtree(rest);
            }
            rest -= n;
        }
        None
    }

    /// Copy of `self` with the subtree at `index` replaced.
    pub fn replace_subtree(&self, index: usize, with: Expr) -> Expr {
        if index == 0 {
            return with;
        }
        let mut rest = index - 1;
        match self {
            Expr::Const(_) | Expr::Var(_) => self.clone(),
            Expr::Unary(op, a) => Expr::unary(*op, a.replace_subtree(rest, with)),
            Expr::PowInt(a, n) => Expr::pow_int(a.replace_subtree(rest, with), *n),
            Expr::Binary(op, a, b) => {
                let na = a.size();
                if rest < na {
                    Expr::Binary(*op, Box::new(a.replace_subtree(rest, with)), b.clone())
                } else {
                    rest -= na;
                    Expr::Binary(*op, a.clone(), Box::new(b.replace_subtree(rest, with)))
                }
            }
        }
    }
}

impl fmt::Display for Expr {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&format_expr(self))
    }
}
