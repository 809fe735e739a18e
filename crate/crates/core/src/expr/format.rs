use super::{BinaryOp, Expr};

/// Canonical, fully parenthesized DSL text. Constants use the shortest
/// decimal that round-trips to the same `f64`.
pub fn format_expr(expr: &Expr) -> String {
    let mut out = String::new();
    write_canonical(expr, &mut out);
    out
}

fn write_canonical(expr: &Expr, out: &mut String) {
    match expr {
        Expr::Const(c) => out.push_str(&format!("{c:?}")),
        Expr::Var(v) => out.push_str(v.dsl_name()),
        Expr::Unary(op, a) => {
            out.push_str(op.name());
            out.push('(');
            write_canonical(a, out);
            out.push(')');
        }
        Expr::Binary(op, a, b) => {
            out.push('(');
            write_canonical(a, out);
            out.push(op.symbol());
            write_canonical(b, out);
            out.push(')');
        }
        Expr::PowInt(a, n) => {
            out.push('(');
            match **a {
                // `-2^3` would read as `-(2^3)`
                Expr::Const(c) if c.is_sign_negative() => out.push_str(&format!("({c:?})")),
                _ => write_canonical(a, out),
            }
            out.push('^');
            out.push_str(&n.to_string());
            out.push(')');
        }
    }
}

/// `x` rounded to `sig` significant digits.
pub(crate) fn format_sig(x: f64, sig: usize) -> String {
    let sig = sig.max(1);
    if x == 0.0 {
        return "0".to_string();
    }
    let mag = x.abs().log10().floor() as i32;
    if (-4..6).contains(&mag) {
        let decimals = (sig as i32 - 1 - mag).max(0) as usize;
        format!("{x:.decimals$}")
    } else {
        format!("{:.*e}", sig - 1, x)
    }
}

/// Readable text with `sig` significant digits per constant and minimal
/// parentheses; still parseable by [`super::parse_expr`].
pub fn format_human(expr: &Expr, sig: usize) -> String {
    human(expr, sig).0
}

const SUM: u8 = 1;
const PRODUCT: u8 = 2;
const POWER: u8 = 3;
const ATOM: u8 = 4;

fn wrap(s: (String, u8), min: u8) -> String {
    if s.1 < min {
        format!("({})", s.0)
    } else {
        s.0
    }
}

fn human(expr: &Expr, sig: usize) -> (String, u8) {
    match expr {
        Expr::Const(c) => {
            let s = format_sig(*c, sig);
            let prec = if *c < 0.0 { SUM } else { ATOM };
            (s, prec)
        }
        Expr::Var(v) => (v.dsl_name().to_string(), ATOM),
        Expr::Unary(op, a) => (format!("{}({})", op.name(), human(a, sig).0), ATOM),
        Expr::PowInt(a, n) => (format!("{}^{}", wrap(human(a, sig), ATOM), n), POWER),
        Expr::Binary(BinaryOp::Add, a, b) => {
            let left = human(a, sig).0;
            match negated(b) {
                Some(neg) => (format!("{left} - {}", wrap(human(&neg, sig), PRODUCT)), SUM),
                None => (format!("{left} + {}", human(b, sig).0), SUM),
            }
        }
        Expr::Binary(BinaryOp::Mul, a, b) => {
            if a.as_const() == Some(-1.0) {
                return (format!("-{}", wrap(human(b, sig), POWER)), SUM);
            }
            (
                format!("{}*{}", wrap(human(a, sig), PRODUCT), wrap(human(b, sig), POWER)),
                PRODUCT,
            )
        }
    }
}

/// `Some(y)` when `e` reads naturally as `-y`.
fn negated(e: &Expr) -> Option<Expr> {
    match e {
        Expr::Const(c) if *c < 0.0 => Some(Expr::Const(-c)),
        Expr::Binary(BinaryOp::Mul, a, b) => match a.as_const() {
            Some(c) if c == -1.0 => Some((**b).clone()),
            Some(c) if c < 0.0 => Some(Expr::mul(Expr::Const(-c), (**b).clone())),
            _ => None,
        },
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::super::{Var, parse_expr};
    use super::*;

    #[test]
    fn canonical_text_is_fully_parenthesized() {
        let e = Expr::mul(
            Expr::constant(0.017),
            Expr::add(
                Expr::exp(Expr::mul(Expr::constant(27.91), Expr::var(Var::U2))),
                Expr::constant(-1.0),
            ),
        );
        assert_eq!(format_expr(&e), "(0.017*(exp((27.91*(I2-3)))+-1.0))");
        assert_eq!(format_expr(&Expr::pow_int(Expr::var(Var::L1), -19)), "(l1^-19)");
    }

    #[test]
    fn negative_power_base_round_trips() {
        let e = Expr::pow_int(Expr::constant(-2.5), 3);
        assert_eq!(format_expr(&e), "((-2.5)^3)");
        assert_eq!(parse_expr(&format_expr(&e)).unwrap(), e);
    }

    #[test]
    fn significant_digit_rounding() {
        assert_eq!(format_sig(27.91, 6), "27.9100");
        assert_eq!(format_sig(0.017, 3), "0.0170");
        assert_eq!(format_sig(1.5e-11, 3), "1.50e-11");
        assert_eq!(format_sig(-1.661, 4), "-1.661");
    }

    #[test]
    fn human_text_reparses_to_the_same_value() {
        let e = parse_expr("5.602*exp(3.001*square(I1-3)) + -5.602").unwrap();
        let h = format_human(&e, 4);
        assert_eq!(h, "5.602*exp(3.001*square((I1-3))) - 5.602");
        let back = parse_expr(&h).unwrap();
        assert_eq!(format_expr(&back), format_expr(&e));
    }
}
