use std::fmt;

use thiserror::Error;

use super::{BinaryOp, Expr, Op, UnaryOp, Var};

/// Upper bound on how many times `inner` may occur inside the subtree of an
/// `outer` node.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NestedRule {
    pub outer: Op,
    pub inner: Op,
    pub max: u32,
}

/// Search-space definition: operator sets, complexity weights and limits.
#[derive(Debug, Clone, PartialEq)]
pub struct Grammar {
    pub variables: Vec<Var>,
    pub unary_ops: Vec<UnaryOp>,
    pub binary_ops: Vec<BinaryOp>,
    pub pow_int: bool,
    /// Weight per operator, indexed by [`Op::index`].
    pub op_weights: [u32; 7],
    pub variable_weight: u32,
    pub constant_weight: u32,
    pub max_complexity: u32,
    pub max_depth: usize,
    pub nested: Vec<NestedRule>,
    /// Inclusive range of `pow_int` exponents.
    pub exponent_range: (i32, i32),
    pub allow_zero_exponent: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ComplexityError {
    #[error("operator {} is not part of the grammar", .0.name())]
    UnknownOperator(Op),
}

/// First rule an expression breaks.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    UnknownOperator(Op),
    UnknownVariable(Var),
    NonFiniteConstant,
    Depth { depth: usize, max: usize },
    Complexity { complexity: u32, max: u32 },
    Nested { outer: Op, inner: Op, count: u32, max: u32 },
    Exponent { exponent: i32 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::UnknownOperator(op) => write!(f, "operator {} not allowed", op.name()),
            Violation::UnknownVariable(v) => write!(f, "variable {} not allowed", v.dsl_name()),
            Violation::NonFiniteConstant => f.write_str("non-finite constant"),
            Violation::Depth { depth, max } => write!(f, "depth {depth} exceeds {max}"),
            Violation::Complexity { complexity, max } => {
                write!(f, "complexity {complexity} exceeds {max}")
            }
            Violation::Nested { outer, inner, count, max } => write!(
                f,
                "{} contains {count} x {} (max {max})",
                outer.name(),
                inner.name()
            ),
            Violation::Exponent { exponent } => write!(f, "exponent {exponent} out of range"),
        }
    }
}

fn weights(pairs: &[(Op, u32)]) -> [u32; 7] {
    let mut w = [1; 7];
    for (op, v) in pairs {
        w[op.index()] = *v;
    }
    w
}

impl Grammar {
    /// Operator sets and weights for invariant-based search over `I1 - 3`,
    /// `I2 - 3`.
    pub fn invariant() -> Self {
        use Op::*;
        let mut nested = Vec::new();
        for (outer, bounds) in [
            (LnX, [0, 0, 1, 1]),
            (Exp, [0, 0, 1, 1]),
            (Square, [0, 0, 0, 0]),
            (Cube, [0, 0, 0, 0]),
        ] {
            for (inner, max) in [Exp, LnX, Square, Cube].into_iter().zip(bounds) {
                nested.push(NestedRule { outer, inner, max });
            }
        }
        Grammar {
            variables: vec![Var::U1, Var::U2],
            unary_ops: vec![UnaryOp::Exp, UnaryOp::Square, UnaryOp::LnX, UnaryOp::Cube],
            binary_ops: vec![BinaryOp::Add, BinaryOp::Mul],
            pow_int: false,
            op_weights: weights(&[(Exp, 2), (LnX, 2), (Square, 3), (Cube, 3), (Mul, 1), (Add, 1)]),
            variable_weight: 1,
            constant_weight: 1,
            max_complexity: 100,
            max_depth: 10,
            nested,
            exponent_range: (1, 5),
            allow_zero_exponent: false,
        }
    }

    /// Polynomial grammar over one principal stretch `l1`.
    pub fn stretch() -> Self {
        Self::polynomial(Var::L1)
    }

    /// Polynomial grammar over one principal Biot strain `e1`.
    pub fn strain() -> Self {
        Self::polynomial(Var::E1)
    }

    fn polynomial(var: Var) -> Self {
        use Op::*;
        Grammar {
            variables: vec![var],
            unary_ops: Vec::new(),
            binary_ops: vec![BinaryOp::Add, BinaryOp::Mul],
            pow_int: true,
            op_weights: weights(&[(PowInt, 2), (Mul, 2), (Add, 1)]),
            variable_weight: 2,
            constant_weight: 1,
            max_complexity: 100,
            max_depth: 10,
            nested: vec![NestedRule { outer: PowInt, inner: PowInt, max: 0 }],
            exponent_range: (-30, 30),
            allow_zero_exponent: false,
        }
    }

    pub fn allows(&self, op: Op) -> bool {
        match op {
            Op::Exp | Op::Square | Op::Cube | Op::LnX => {
                self.unary_ops.iter().any(|u| Op::from(*u) == op)
            }
            Op::Add | Op::Mul => self.binary_ops.iter().any(|b| Op::from(*b) == op),
            Op::PowInt => self.pow_int,
        }
    }

    pub fn weight(&self, op: Op) -> u32 {
        self.op_weights[op.index()]
    }

    pub fn exponent_allowed(&self, n: i32) -> bool {
        n >= self.exponent_range.0
            && n <= self.exponent_range.1
            && (n != 0 || self.allow_zero_exponent)
    }

    /// Every exponent the grammar admits, ascending.
    pub fn exponents(&self) -> Vec<i32> {
        (self.exponent_range.0..=self.exponent_range.1)
            .filter(|n| self.exponent_allowed(*n))
            .collect()
    }

    pub fn nested_limit(&self, outer: Op, inner: Op) -> Option<u32> {
        self.nested
            .iter()
            .find(|r| r.outer == outer && r.inner == inner)
            .map(|r| r.max)
    }
}

/// Weighted node count. A `pow_int` exponent counts as one constant node.
pub fn complexity(expr: &Expr, grammar: &Grammar) -> Result<u32, ComplexityError> {
    Ok(match expr {
        Expr::Const(_) => grammar.constant_weight,
        Expr::Var(_) => grammar.variable_weight,
        Expr::Unary(_, a) => node_weight(expr, grammar)? + complexity(a, grammar)?,
        Expr::PowInt(a, _) => {
            node_weight(expr, grammar)? + complexity(a, grammar)? + grammar.constant_weight
        }
        Expr::Binary(_, a, b) => {
            node_weight(expr, grammar)? + complexity(a, grammar)? + complexity(b, grammar)?
        }
    })
}

fn node_weight(expr: &Expr, grammar: &Grammar) -> Result<u32, ComplexityError> {
    let op = expr.op().expect("operator node");
    if grammar.allows(op) {
        Ok(grammar.weight(op))
    } else {
        Err(ComplexityError::UnknownOperator(op))
    }
}

/// Checks operator/variable membership, depth, complexity, nesting limits and
/// exponent range, reporting the first violation found.
pub fn check_constraints(expr: &Expr, grammar: &Grammar) -> Result<(), Violation> {
    let depth = expr.depth();
    if depth > grammar.max_depth {
        return Err(Violation::Depth { depth, max: grammar.max_depth });
    }
    let c = complexity(expr, grammar).map_err(|ComplexityError::UnknownOperator(op)| {
        Violation::UnknownOperator(op)
    })?;
    if c > grammar.max_complexity {
        return Err(Violation::Complexity { complexity: c, max: grammar.max_complexity });
    }
    nested_counts(expr, grammar).map(|_| ())
}

/// Operator counts of the subtree rooted at `expr` (inclusive).
fn nested_counts(expr: &Expr, grammar: &Grammar) -> Result<[u32; 7], Violation> {
    let mut below = [0u32; 7];
    match expr {
        Expr::Const(c) => {
            if !c.is_finite() {
                return Err(Violation::NonFiniteConstant);
            }
            return Ok(below);
        }
        Expr::Var(v) => {
            if !grammar.variables.contains(v) {
                return Err(Violation::UnknownVariable(*v));
            }
            return Ok(below);
        }
        Expr::PowInt(_, n) if !grammar.exponent_allowed(*n) => {
            return Err(Violation::Exponent { exponent: *n });
        }
        _ => {}
    }
    for child in expr.children() {
        let counts = nested_counts(child, grammar)?;
        for (b, c) in below.iter_mut().zip(counts) {
            *b += c;
        }
    }
    let op = expr.op().expect("operator node");
    for inner in Op::ALL {
        if let Some(max) = grammar.nested_limit(op, inner) {
            let count = below[inner.index()];
            if count > max {
                return Err(Violation::Nested { outer: op, inner, count, max });
            }
        }
    }
    below[op.index()] += 1;
    Ok(below)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn u() -> Expr {
        Expr::var(Var::U1)
    }

    #[test]
    fn single_variable_costs_one() {
        assert_eq!(complexity(&u(), &Grammar::invariant()), Ok(1));
    }

    #[test]
    fn square_costs_three_plus_leaf() {
        assert_eq!(complexity(&Expr::square(u()), &Grammar::invariant()), Ok(4));
    }

    #[test]
    fn affine_term_costs_five() {
        let e = Expr::add(Expr::mul(Expr::constant(1.0), u()), Expr::constant(1.0));
        assert_eq!(complexity(&e, &Grammar::invariant()), Ok(5));
    }

    #[test]
    fn ogden_term_in_stretch_grammar() {
        // c * pow_int(l1, -18): * 2 + c 1 + pow 2 + l 2 + exponent 1
        let e = Expr::mul(Expr::constant(0.01), Expr::pow_int(Expr::var(Var::L1), -18));
        assert_eq!(complexity(&e, &Grammar::stretch()), Ok(8));
    }

    #[test]
    fn unknown_operator_is_reported() {
        let e = Expr::pow_int(u(), 2);
        assert_eq!(
            complexity(&e, &Grammar::invariant()),
            Err(ComplexityError::UnknownOperator(Op::PowInt))
        );
    }

    #[test]
    fn nested_exponentials_are_rejected() {
        let g = Grammar::invariant();
        let e = Expr::exp(Expr::exp(u()));
        assert_eq!(
            check_constraints(&e, &g),
            Err(Violation::Nested { outer: Op::Exp, inner: Op::Exp, count: 1, max: 0 })
        );
    }

    #[test]
    fn exp_of_square_is_allowed() {
        let g = Grammar::invariant();
        assert_eq!(check_constraints(&Expr::exp(Expr::square(u())), &g), Ok(()));
        assert_eq!(check_constraints(&u(), &g), Ok(()));
    }

    #[test]
    fn square_counts_across_subtree() {
        let g = Grammar::invariant();
        let two = Expr::ln_x(Expr::add(Expr::square(u()), Expr::square(u())));
        assert!(matches!(check_constraints(&two, &g), Err(Violation::Nested { .. })));
    }

    #[test]
    fn depth_and_complexity_limits() {
        let mut g = Grammar::invariant();
        g.max_depth = 2;
        assert!(matches!(
            check_constraints(&Expr::exp(Expr::square(u())), &g),
            Err(Violation::Depth { depth: 3, max: 2 })
        ));
        let mut g = Grammar::invariant();
        g.max_complexity = 3;
        assert!(matches!(
            check_constraints(&Expr::square(u()), &g),
            Err(Violation::Complexity { complexity: 4, max: 3 })
        ));
    }

    #[test]
    fn exponent_range_and_nesting_in_stretch_grammar() {
        let g = Grammar::stretch();
        let l = Expr::var(Var::L1);
        assert!(check_constraints(&Expr::pow_int(l.clone(), -30), &g).is_ok());
        assert!(check_constraints(&Expr::pow_int(l.clone(), 31), &g).is_err());
        assert!(check_constraints(&Expr::pow_int(l.clone(), 0), &g).is_err());
        let nested = Expr::pow_int(Expr::pow_int(l.clone(), 2), 3);
        assert!(matches!(check_constraints(&nested, &g), Err(Violation::Nested { .. })));
        assert!(matches!(
            check_constraints(&Expr::var(Var::U1), &g),
            Err(Violation::UnknownVariable(Var::U1))
        ));
    }
}
