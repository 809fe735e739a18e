use super::simplify::{s_add, s_mul, s_pow, s_unary};
use super::{BinaryOp, Expr, UnaryOp, Var};

/// Exact partial derivative of `expr` with respect to `var`.
///
/// The result is built with local folding (`0 * x`, `1 * x`, `x + 0`,
/// constant arithmetic) so chained derivatives stay small; run
/// [`super::simplify`] for the fully canonical form.
pub fn differentiate(expr: &Expr, var: Var) -> Expr {
    if !expr.contains_var(var) {
        return Expr::Const(0.0);
    }
    match expr {
        Expr::Const(_) => Expr::Const(0.0),
        Expr::Var(v) => Expr::Const(if *v == var { 1.0 } else { 0.0 }),
        Expr::Binary(BinaryOp::Add, a, b) => s_add(differentiate(a, var), differentiate(b, var)),
        Expr::Binary(BinaryOp::Mul, a, b) => {
            let da = differentiate(a, var);
            let db = differentiate(b, var);
            s_add(
                s_mul(da, (**b).clone()),
                s_mul((**a).clone(), db),
            )
        }
        Expr::PowInt(u, n) => {
            let du = differentiate(u, var);
            s_mul(
                s_mul(Expr::Const(*n as f64), s_pow((**u).clone(), n - 1)),
                du,
            )
        }
        Expr::Unary(op, u) => {
            let du = differentiate(u, var);
            let outer = match op {
                UnaryOp::Exp => s_unary(UnaryOp::Exp, (**u).clone()),
                UnaryOp::Square => s_mul(Expr::Const(2.0), (**u).clone()),
                UnaryOp::Cube => s_mul(Expr::Const(3.0), s_unary(UnaryOp::Square, (**u).clone())),
                // d/dx -ln(1 - x) = 1 / (1 - x)
                UnaryOp::LnX => s_pow(
                    s_add(Expr::Const(1.0), s_mul(Expr::Const(-1.0), (**u).clone())),
                    -1,
                ),
            };
            s_mul(outer, du)
        }
    }
}
