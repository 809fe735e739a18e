use super::eval::{evaluate, Bindings};
use super::{BinaryOp, Expr, UnaryOp};

fn fold(e: Expr) -> Expr {
    match evaluate(&e, &Bindings::new()) {
        Ok(v) => Expr::Const(v),
        Err(_) => e,
    }
}

pub(crate) fn s_add(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if (x + y).is_finite() => Expr::Const(x + y),
        (Some(x), _) if x == 0.0 => b,
        (_, Some(y)) if y == 0.0 => a,
        _ => Expr::add(a, b),
    }
}

pub(crate) fn s_mul(a: Expr, b: Expr) -> Expr {
    match (a.as_const(), b.as_const()) {
        (Some(x), Some(y)) if (x * y).is_finite() => Expr::Const(x * y),
        (Some(x), _) | (_, Some(x)) if x == 0.0 => Expr::Const(0.0),
        (Some(x), _) if x == 1.0 => b,
        (_, Some(y)) if y == 1.0 => a,
        (Some(x), None) => match b {
            Expr::Binary(BinaryOp::Mul, ref l, ref r) if l.is_const() => {
                let c = x * l.as_const().unwrap();
                if c.is_finite() {
                    s_mul(Expr::Const(c), (**r).clone())
                } else {
                    Expr::mul(a, b)
                }
            }
            _ => Expr::mul(a, b),
        },
        (None, Some(_)) => s_mul(b, a),
        _ => Expr::mul(a, b),
    }
}

pub(crate) fn s_pow(u: Expr, n: i32) -> Expr {
    match n {
        0 => Expr::Const(1.0),
        1 => u,
        _ if u.is_const() => fold(Expr::pow_int(u, n)),
        _ => Expr::pow_int(u, n),
    }
}

pub(crate) fn s_unary(op: UnaryOp, u: Expr) -> Expr {
    if u.is_const() {
        fold(Expr::unary(op, u))
    } else {
        Expr::unary(op, u)
    }
}

fn flatten(op: BinaryOp, e: Expr, out: &mut Vec<Expr>) {
    match e {
        Expr::Binary(o, a, b) if o == op => {
            flatten(op, *a, out);
            flatten(op, *b, out);
        }
        other => out.push(other),
    }
}

fn rebuild(op: BinaryOp, mut items: Vec<Expr>) -> Expr {
    let mut it = items.drain(..);
    let first = it.next().expect("rebuild needs at least one operand");
    it.fold(first, |acc, x| Expr::Binary(op, Box::new(acc), Box::new(x)))
}

fn simplify_sum(a: Expr, b: Expr) -> Expr {
    let mut operands = Vec::new();
    flatten(BinaryOp::Add, a, &mut operands);
    flatten(BinaryOp::Add, b, &mut operands);
    let mut constant: Option<f64> = None;
    let mut terms = Vec::new();
    for t in operands.iter() {
        match t.as_const() {
            Some(c) => constant = Some(constant.map_or(c, |acc| acc + c)),
            None => terms.push(t.clone()),
        }
    }
    match constant {
        Some(c) if !c.is_finite() => return rebuild(BinaryOp::Add, operands),
        Some(c) if c != 0.0 => {
            if terms.is_empty() {
                return Expr::Const(c);
            }
            terms.push(Expr::Const(c));
        }
        _ => {}
    }
    if terms.is_empty() {
        Expr::Const(0.0)
    } else {
        rebuild(BinaryOp::Add, terms)
    }
}

fn simplify_product(a: Expr, b: Expr) -> Expr {
    let mut operands = Vec::new();
    flatten(BinaryOp::Mul, a, &mut operands);
    flatten(BinaryOp::Mul, b, &mut operands);
    let mut constant: Option<f64> = None;
    let mut factors = Vec::new();
    for f in operands.iter() {
        match f.as_const() {
            Some(c) => constant = Some(constant.map_or(c, |acc| acc * c)),
            None => factors.push(f.clone()),
        }
    }
    match constant {
        Some(c) if !c.is_finite() => rebuild(BinaryOp::Mul, operands),
        Some(c) if c == 0.0 => Expr::Const(0.0),
        Some(c) if factors.is_empty() => Expr::Const(c),
        Some(c) if c != 1.0 => {
            factors.insert(0, Expr::Const(c));
            rebuild(BinaryOp::Mul, factors)
        }
        _ if factors.is_empty() => Expr::Const(1.0),
        _ => rebuild(BinaryOp::Mul, factors),
    }
}

/// Canonicalizes an expression without changing its value on its domain.
///
/// Folds constant subtrees, flattens `+` / `*` chains (constants of a sum are
/// collected last, constants of a product first), drops `x + 0` and `x * 1`,
/// collapses `x * 0` to `0` and `pow_int(x, 1)` to `x`. Idempotent.
pub fn simplify(expr: &Expr) -> Expr {
    match expr {
        Expr::Const(_) | Expr::Var(_) => expr.clone(),
        Expr::Unary(op, a) => s_unary(*op, simplify(a)),
        Expr::PowInt(a, n) => s_pow(simplify(a), *n),
        Expr::Binary(BinaryOp::Add, a, b) => simplify_sum(simplify(a), simplify(b)),
        Expr::Binary(BinaryOp::Mul, a, b) => simplify_product(simplify(a), simplify(b)),
    }
}
