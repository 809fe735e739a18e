use std::cell::RefCell;

use thiserror::Error;

use super::{BinaryOp, Expr, UnaryOp, Var};

/// Any intermediate value above this magnitude is treated as a domain error.
pub const MAX_MAGNITUDE: f64 = 1e300;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvalError {
    #[error("domain error: {0}")]
    Domain(&'static str),
    #[error("variable {0:?} is not bound")]
    UnboundVariable(Var),
    #[error("column length mismatch for {0:?}")]
    ColumnLength(Var),
}

/// Point bindings for scalar evaluation.
#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Bindings {
    values: [f64; 8],
    bound: u8,
}

impl Bindings {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, v: Var, value: f64) -> Self {
        self.set(v, value);
        self
    }

    pub fn set(&mut self, v: Var, value: f64) {
        self.values[v.index()] = value;
        self.bound |= 1 << v.index();
    }

    pub fn get(&self, v: Var) -> Option<f64> {
        if self.bound & (1 << v.index()) != 0 {
            Some(self.values[v.index()])
        } else {
            None
        }
    }
}

/// Column bindings for batch evaluation; all bound columns share a length.
#[derive(Debug, Clone, Copy)]
pub struct Columns<'a> {
    cols: [Option<&'a [f64]>; 8],
    len: usize,
}

impl<'a> Columns<'a> {
    pub fn new(len: usize) -> Self {
        Columns { cols: [None; 8], len }
    }

    pub fn with(mut self, v: Var, col: &'a [f64]) -> Self {
        self.cols[v.index()] = Some(col);
        self
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }
}

#[inline]
fn check(v: f64) -> Result<f64, EvalError> {
    if v.is_finite() && v.abs() <= MAX_MAGNITUDE {
        Ok(v)
    } else {
        Err(EvalError::Domain("non-finite or overflowing value"))
    }
}

#[inline]
fn apply_unary(op: UnaryOp, x: f64) -> Result<f64, EvalError> {
    match op {
        UnaryOp::Exp => check(x.exp()),
        UnaryOp::Square => check(x * x),
        UnaryOp::Cube => check(x * x * x),
        UnaryOp::LnX => {
            if x >= 1.0 {
                Err(EvalError::Domain("ln_x argument must be below 1"))
            } else {
                check(-(-x).ln_1p())
            }
        }
    }
}

#[inline]
fn apply_pow(x: f64, n: i32) -> Result<f64, EvalError> {
    if x == 0.0 && n < 0 {
        return Err(EvalError::Domain("zero raised to a negative power"));
    }
    check(x.powi(n))
}

/// Evaluates `expr` at a single point.
pub fn evaluate(expr: &Expr, bindings: &Bindings) -> Result<f64, EvalError> {
    match expr {
        Expr::Const(c) => Ok(*c),
        Expr::Var(v) => bindings.get(*v).ok_or(EvalError::UnboundVariable(*v)),
        Expr::Unary(op, a) => apply_unary(*op, evaluate(a, bindings)?),
        Expr::PowInt(a, n) => apply_pow(evaluate(a, bindings)?, *n),
        Expr::Binary(op, a, b) => {
            let x = evaluate(a, bindings)?;
            let y = evaluate(b, bindings)?;
            match op {
                BinaryOp::Add => check(x + y),
                BinaryOp::Mul => check(x * y),
            }
        }
    }
}

/// Evaluates `expr` over every row of `cols`, failing on the first row that
/// leaves the domain.
pub fn evaluate_batch(expr: &Expr, cols: &Columns<'_>) -> Result<Vec<f64>, EvalError> {
    let fast = POOL.with(|pool| fill(expr, cols, &mut pool.borrow_mut()));
    match fast {
        Some(v) => Ok(v),
        None => evaluate_checked(expr, cols),
    }
}

thread_local! {
    static POOL: RefCell<Vec<Vec<f64>>> = const { RefCell::new(Vec::new()) };
}

fn in_range(v: &[f64]) -> bool {
    v.iter().all(|x| x.abs() <= MAX_MAGNITUDE)
}

/// Unchecked column-wise evaluation with recycled buffers; `None` when any
/// node leaves the domain, in which case the checked path names the error.
fn fill(expr: &Expr, cols: &Columns<'_>, pool: &mut Vec<Vec<f64>>) -> Option<Vec<f64>> {
    let take = |pool: &mut Vec<Vec<f64>>| {
        let mut v = pool.pop().unwrap_or_default();
        v.clear();
        v
    };
    let out = match expr {
        Expr::Const(c) => {
            let mut v = take(pool);
            v.resize(cols.len, *c);
            v
        }
        Expr::Var(var) => {
            let col = cols.cols[var.index()]?;
            if col.len() != cols.len {
                return None;
            }
            let mut v = take(pool);
            v.extend_from_slice(col);
            v
        }
        Expr::Unary(op, a) => {
            let mut v = fill(a, cols, pool)?;
            match op {
                UnaryOp::Exp => v.iter_mut().for_each(|x| *x = x.exp()),
                UnaryOp::Square => v.iter_mut().for_each(|x| *x *= *x),
                UnaryOp::Cube => v.iter_mut().for_each(|x| *x = *x * *x * *x),
                UnaryOp::LnX => v
                    .iter_mut()
                    .for_each(|x| *x = if *x < 1.0 { -(-*x).ln_1p() } else { f64::NAN }),
            }
            v
        }
        Expr::PowInt(a, n) => {
            let mut v = fill(a, cols, pool)?;
            let n = *n;
            v.iter_mut()
                .for_each(|x| *x = if *x == 0.0 && n < 0 { f64::NAN } else { x.powi(n) });
            v
        }
        Expr::Binary(op, a, b) => match (a.as_const(), b.as_const()) {
            (Some(c), _) | (_, Some(c)) => {
                let other = if a.as_const().is_some() { b } else { a };
                let mut v = fill(other, cols, pool)?;
                match op {
                    BinaryOp::Add => v.iter_mut().for_each(|x| *x += c),
                    BinaryOp::Mul => v.iter_mut().for_each(|x| *x *= c),
                }
                v
            }
            _ => {
                let mut v = fill(a, cols, pool)?;
                let w = fill(b, cols, pool)?;
                match op {
                    BinaryOp::Add => v.iter_mut().zip(&w).for_each(|(x, y)| *x += y),
                    BinaryOp::Mul => v.iter_mut().zip(&w).for_each(|(x, y)| *x *= y),
                }
                pool.push(w);
                v
            }
        },
    };
    if in_range(&out) {
        Some(out)
    } else {
        pool.push(out);
        None
    }
}

fn evaluate_checked(expr: &Expr, cols: &Columns<'_>) -> Result<Vec<f64>, EvalError> {
    match expr {
        Expr::Const(c) => Ok(vec![*c; cols.len]),
        Expr::Var(v) => {
            let col = cols.cols[v.index()].ok_or(EvalError::UnboundVariable(*v))?;
            if col.len() != cols.len {
                return Err(EvalError::ColumnLength(*v));
            }
            Ok(col.to_vec())
        }
        Expr::Unary(op, a) => {
            let mut out = evaluate_checked(a, cols)?;
            for x in out.iter_mut() {
                *x = apply_unary(*op, *x)?;
            }
            Ok(out)
        }
        Expr::PowInt(a, n) => {
            let mut out = evaluate_checked(a, cols)?;
            for x in out.iter_mut() {
                *x = apply_pow(*x, *n)?;
            }
            Ok(out)
        }
        Expr::Binary(op, a, b) => {
            // Constant operands are common after simplification; skip the
            // broadcast allocation for them.
            match (a.as_const(), b.as_const()) {
                (Some(c), _) => binary_scalar(*op, c, evaluate_checked(b, cols)?),
                (_, Some(c)) => binary_scalar(*op, c, evaluate_checked(a, cols)?),
                _ => {
                    let mut out = evaluate_checked(a, cols)?;
                    let rhs = evaluate_checked(b, cols)?;
                    for (x, y) in out.iter_mut().zip(rhs) {
                        *x = check(match op {
                            BinaryOp::Add => *x + y,
                            BinaryOp::Mul => *x * y,
                        })?;
                    }
                    Ok(out)
                }
            }
        }
    }
}

fn binary_scalar(op: BinaryOp, c: f64, mut v: Vec<f64>) -> Result<Vec<f64>, EvalError> {
    for x in v.iter_mut() {
        *x = check(match op {
            BinaryOp::Add => c + *x,
            BinaryOp::Mul => c * *x,
        })?;
    }
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn at_u(u: f64) -> Bindings {
        Bindings::new().with(Var::U1, u)
    }

    #[test]
    fn square_at_zero() {
        let e = Expr::square(Expr::var(Var::U1));
        assert_eq!(evaluate(&e, &at_u(0.0)).unwrap(), 0.0);
    }

    #[test]
    fn ln_x_matches_negative_log() {
        let e = Expr::ln_x(Expr::var(Var::U1));
        let v = evaluate(&e, &at_u(0.5)).unwrap();
        assert!((v - 0.693147).abs() < 1e-6);
        assert!((v - 2f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn ln_x_outside_domain_fails() {
        let e = Expr::ln_x(Expr::var(Var::U1));
        assert!(matches!(evaluate(&e, &at_u(1.2)), Err(EvalError::Domain(_))));
        assert!(matches!(evaluate(&e, &at_u(1.0)), Err(EvalError::Domain(_))));
    }

    #[test]
    fn exponential_preset_value() {
        // 0.017 * (exp(27.91 u) - 1) at u = 0.04
        let e = Expr::mul(
            Expr::constant(0.017),
            Expr::add(
                Expr::exp(Expr::mul(Expr::constant(27.91), Expr::var(Var::U2))),
                Expr::constant(-1.0),
            ),
        );
        let v = evaluate(&e, &Bindings::new().with(Var::U2, 0.04)).unwrap();
        let oracle = 0.017 * ((27.91f64 * 0.04).exp() - 1.0);
        assert!((v - oracle).abs() < 1e-15);
        assert!((v - 0.034915).abs() < 1e-6);
    }

    #[test]
    fn integer_powers_of_negative_and_zero_bases() {
        let e = Expr::pow_int(Expr::var(Var::L1), 3);
        assert_eq!(evaluate(&e, &Bindings::new().with(Var::L1, -2.0)).unwrap(), -8.0);
        let e = Expr::pow_int(Expr::var(Var::L1), -2);
        assert!(evaluate(&e, &Bindings::new().with(Var::L1, 0.0)).is_err());
    }

    #[test]
    fn overflow_is_a_domain_error() {
        let e = Expr::exp(Expr::mul(Expr::constant(1000.0), Expr::var(Var::U1)));
        assert!(evaluate(&e, &at_u(1.0)).is_err());
        let big = Expr::mul(Expr::constant(1e200), Expr::constant(1e200));
        assert!(evaluate(&big, &Bindings::new()).is_err());
    }

    #[test]
    fn unbound_variable_is_reported() {
        let e = Expr::var(Var::U2);
        assert_eq!(evaluate(&e, &at_u(0.0)), Err(EvalError::UnboundVariable(Var::U2)));
    }

    #[test]
    fn batch_matches_scalar() {
        let e = Expr::add(
            Expr::mul(Expr::constant(2.0), Expr::exp(Expr::var(Var::U1))),
            Expr::mul(Expr::var(Var::U1), Expr::var(Var::U2)),
        );
        let u1 = [0.0, 0.1, 0.2];
        let u2 = [1.0, -1.0, 0.5];
        let cols = Columns::new(3).with(Var::U1, &u1).with(Var::U2, &u2);
        let batch = evaluate_batch(&e, &cols).unwrap();
        for i in 0..3 {
            let b = Bindings::new().with(Var::U1, u1[i]).with(Var::U2, u2[i]);
            assert_eq!(batch[i], evaluate(&e, &b).unwrap());
        }
    }
}
