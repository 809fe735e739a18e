//! Canonical normal form used to judge whether two expressions share a
//! mathematical form, independent of constant values and operand order.
//!
//! Expressions are expanded into sums of coefficient·monomial terms over
//! atoms (variables, `exp`/`ln1m` calls, unexpandable powers). `square`,
//! `cube` and `pow_int` become exponents, constant factors of `exp`
//! arguments move into the coefficient, and like terms merge.

use super::{Expr, UnaryOp, Var};

#[derive(Debug, Clone)]
enum Atom {
    Var(Var),
    Call(UnaryOp, Sum),
    Pow(Sum, i32),
}

#[derive(Debug, Clone)]
struct Term {
    coef: f64,
    /// Sorted by atom key, exponents nonzero.
    factors: Vec<(Atom, i32)>,
}

#[derive(Debug, Clone, Default)]
struct Sum {
    terms: Vec<Term>,
    constant: f64,
}

/// Expansion is abandoned beyond this many terms; the power stays an atom.
const MAX_TERMS: usize = 64;
const TINY: f64 = 1e-12;

impl Atom {
    fn key(&self, shape: bool) -> String {
        match self {
            Atom::Var(v) => v.dsl_name().to_string(),
            Atom::Call(op, s) => format!("{}({})", op.name(), s.key(shape, false)),
            Atom::Pow(s, n) => format!("[{}]^{}", s.key(shape, false), n),
        }
    }

    fn constants(&self, out: &mut Vec<f64>) {
        match self {
            Atom::Var(_) => {}
            Atom::Call(_, s) | Atom::Pow(s, _) => s.constants(false, out),
        }
    }
}

impl Term {
    fn monomial_key(&self, shape: bool) -> String {
        self.factors
            .iter()
            .map(|(a, n)| if *n == 1 { a.key(shape) } else { format!("{}^{}", a.key(shape), n) })
            .collect::<Vec<_>>()
            .join("*")
    }

    fn mul(&self, other: &Term) -> Term {
        let mut factors = self.factors.clone();
        for (a, n) in &other.factors {
            let k = a.key(false);
            match factors.iter_mut().find(|(b, _)| b.key(false) == k) {
                Some(slot) => slot.1 += n,
                None => factors.push((a.clone(), *n)),
            }
        }
        factors.retain(|(_, n)| *n != 0);
        factors.sort_by_cached_key(|(a, _)| (a.key(true), a.key(false)));
        Term { coef: self.coef * other.coef, factors }
    }

    fn scaled(&self, c: f64) -> Term {
        Term { coef: self.coef * c, factors: self.factors.clone() }
    }
}

impl Sum {
    fn constant(c: f64) -> Sum {
        Sum { terms: Vec::new(), constant: c }
    }

    fn atom(a: Atom) -> Sum {
        Sum { terms: vec![Term { coef: 1.0, factors: vec![(a, 1)] }], constant: 0.0 }
    }

    fn is_constant(&self) -> bool {
        self.terms.is_empty()
    }

    /// Merges like monomials, drops vanishing terms and sorts.
    fn normalize(mut self) -> Sum {
        let mut merged: Vec<Term> = Vec::new();
        for t in self.terms.drain(..) {
            let key = t.monomial_key(false);
            match merged.iter_mut().find(|m| m.monomial_key(false) == key) {
                Some(m) => m.coef += t.coef,
                None => merged.push(t),
            }
        }
        let scale = merged.iter().fold(0.0, |m: f64, t| m.max(t.coef.abs()));
        merged.retain(|t| t.coef != 0.0 && t.coef.abs() > TINY * scale);
        merged.sort_by_cached_key(|t| (t.monomial_key(true), t.monomial_key(false)));
        let constant = if self.constant.abs() <= TINY * scale { 0.0 } else { self.constant };
        Sum { terms: merged, constant }
    }

    fn add(mut self, other: Sum) -> Sum {
        self.terms.extend(other.terms);
        self.constant += other.constant;
        self.normalize()
    }

    fn mul(&self, other: &Sum) -> Sum {
        let mut terms = Vec::new();
        for a in &self.terms {
            for b in &other.terms {
                terms.push(a.mul(b));
            }
            if other.constant != 0.0 {
                terms.push(a.scaled(other.constant));
            }
        }
        if self.constant != 0.0 {
            terms.extend(other.terms.iter().map(|b| b.scaled(self.constant)));
        }
        Sum { terms, constant: self.constant * other.constant }.normalize()
    }

    fn pow(&self, n: i32) -> Sum {
        if n == 0 {
            return Sum::constant(1.0);
        }
        if self.is_constant() {
            return Sum::constant(self.constant.powi(n));
        }
        if self.terms.len() == 1 && self.constant == 0.0 {
            let t = &self.terms[0];
            let factors = t.factors.iter().map(|(a, k)| (a.clone(), k * n)).collect();
            return Sum { terms: vec![Term { coef: t.coef.powi(n), factors }], constant: 0.0 };
        }
        if (1..=4).contains(&n) {
            let mut acc = self.clone();
            for _ in 1..n {
                acc = acc.mul(self);
                if acc.terms.len() > MAX_TERMS {
                    return Sum::atom(Atom::Pow(self.clone(), n));
                }
            }
            return acc;
        }
        Sum::atom(Atom::Pow(self.clone(), n))
    }

    fn exp(mut self) -> Sum {
        let k = self.constant;
        self.constant = 0.0;
        if self.is_constant() {
            return Sum::constant(k.exp());
        }
        let mut s = Sum::atom(Atom::Call(UnaryOp::Exp, self));
        s.terms[0].coef = k.exp();
        s
    }

    fn key(&self, shape: bool, top: bool) -> String {
        let mut parts: Vec<String> = self
            .terms
            .iter()
            .map(|t| {
                let coef = if shape { "c".to_string() } else { format!("{:?}", t.coef) };
                format!("{}*{}", coef, t.monomial_key(shape))
            })
            .collect();
        if self.constant != 0.0 && !top {
            parts.push(if shape { "c".to_string() } else { format!("{:?}", self.constant) });
        }
        if parts.is_empty() {
            return if shape { "c".to_string() } else { format!("{:?}", self.constant) };
        }
        parts.join("+")
    }

    fn constants(&self, top: bool, out: &mut Vec<f64>) {
        for t in &self.terms {
            out.push(t.coef);
            for (a, _) in &t.factors {
                a.constants(out);
            }
        }
        if self.constant != 0.0 && !top {
            out.push(self.constant);
        }
    }
}

fn canon(e: &Expr) -> Sum {
    match e {
        Expr::Const(c) => Sum::constant(*c),
        Expr::Var(v) => Sum::atom(Atom::Var(*v)),
        Expr::Binary(super::BinaryOp::Add, a, b) => canon(a).add(canon(b)),
        Expr::Binary(super::BinaryOp::Mul, a, b) => canon(a).mul(&canon(b)),
        Expr::PowInt(a, n) => canon(a).pow(*n),
        Expr::Unary(UnaryOp::Square, a) => canon(a).pow(2),
        Expr::Unary(UnaryOp::Cube, a) => canon(a).pow(3),
        Expr::Unary(UnaryOp::Exp, a) => canon(a).exp(),
        Expr::Unary(UnaryOp::LnX, a) => {
            let s = canon(a);
            if s.is_constant() && s.constant < 1.0 {
                Sum::constant(-(-s.constant).ln_1p())
            } else {
                Sum::atom(Atom::Call(UnaryOp::LnX, s))
            }
        }
    }
}

/// Shape text plus the constants in matching order.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalForm {
    pub skeleton: String,
    pub constants: Vec<f64>,
}

/// Normal form of `expr`. A top-level additive constant only shifts the
/// energy and is left out.
pub fn canonical_form(expr: &Expr) -> CanonicalForm {
    let s = canon(expr);
    let mut constants = Vec::new();
    s.constants(true, &mut constants);
    CanonicalForm { skeleton: s.key(true, true), constants }
}

/// Structural fingerprint with every constant replaced by `c`.
pub fn skeleton(expr: &Expr) -> String {
    canonical_form(expr).skeleton
}

/// True when both expressions share the same mathematical form.
pub fn form_matches(a: &Expr, b: &Expr) -> bool {
    skeleton(a) == skeleton(b)
}

/// Same form, and every constant of `found` within `rel_tol` (relative) of
/// the corresponding constant of `truth`.
pub fn constants_match(found: &Expr, truth: &Expr, rel_tol: f64) -> bool {
    let (a, b) = (canonical_form(found), canonical_form(truth));
    a.skeleton == b.skeleton
        && a.constants.len() == b.constants.len()
        && a.constants
            .iter()
            .zip(&b.constants)
            .all(|(x, t)| (x - t).abs() <= rel_tol * t.abs())
}

#[cfg(test)]
mod tests {
    use super::super::parse_expr;
    use super::*;

    fn p(s: &str) -> Expr {
        parse_expr(s).unwrap()
    }

    #[test]
    fn constants_do_not_matter() {
        assert!(form_matches(
            &p("0.017*(exp(27.91*(I2-3)) - 1)"),
            &p("0.02*exp(25*(I2-3)) + -0.02")
        ));
        assert!(form_matches(&p("1.2*(I1-3) + 0.3*(I2-3)"), &p("(I2-3)*0.5 + 2*(I1-3)")));
    }

    #[test]
    fn equivalent_spellings_share_a_form() {
        assert!(form_matches(&p("5.6*exp(3*square(I1-3))"), &p("exp(square(1.7*(I1-3)))*5.6")));
        assert!(form_matches(&p("5.6*exp(3*square(I1-3))"), &p("2*exp(3*(I1-3)*(I1-3) + 1)")));
        assert!(form_matches(&p("0.86*square(I1-3)"), &p("(I1-3)*(0.5*(I1-3))")));
        assert!(form_matches(&p("0.01*l1^-18"), &p("0.005*l1^-18 + 0.005*(l1^-9)^2")));
    }

    #[test]
    fn structure_does_matter() {
        assert!(!form_matches(&p("exp(I1-3)"), &p("exp(I2-3)")));
        assert!(!form_matches(&p("l1^-19"), &p("l1^-18")));
        assert!(!form_matches(&p("(I1-3)"), &p("(I1-3) + (I2-3)")));
        assert!(!form_matches(&p("exp(square(I1-3))"), &p("exp(I1-3)")));
        assert!(!form_matches(&p("exp(I1-3)"), &p("exp(I1-3) + exp(2*(I1-3))")));
    }

    #[test]
    fn skeleton_text() {
        assert_eq!(skeleton(&p("3*(l1^2) + 4 + -2*l1")), "c*l1+c*l1^2");
        assert_eq!(skeleton(&p("1.9*ln1m(1.2*(I1-3))")), "c*ln1m(c*(I1-3))");
    }

    #[test]
    fn constants_line_up_across_spellings() {
        let truth = p("5.6*(exp(3*square(I1-3)) - 1)");
        let found = p("exp(square(1.7318*(I1-3)))*5.61");
        assert!(constants_match(&found, &truth, 0.02));
        assert_eq!(canonical_form(&truth).constants, vec![5.6, 3.0]);
        let off = p("exp(square(1.9*(I1-3)))*5.6");
        assert!(!constants_match(&off, &truth, 0.02));
    }
}
