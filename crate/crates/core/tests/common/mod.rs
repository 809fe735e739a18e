#![allow(dead_code)]

pub mod tensor;

use hypersym_core::evolution::SearchSpace;
use hypersym_core::expr::{differentiate, evaluate, Bindings, Expr, Grammar, Var};
use hypersym_core::objective::Parameterization;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn space(param: Parameterization) -> SearchSpace {
    SearchSpace::new(param.grammar(), param != Parameterization::Strain)
}

/// A grammar-valid tree of `param` holding at least one variable.
pub fn random_expr(param: Parameterization, rng: &mut ChaCha8Rng) -> Expr {
    let depth = rng.random_range(2..=5);
    space(param).init_tree(depth, rng)
}

/// A point inside the brain-regime domain of `grammar`.
pub fn random_point(grammar: &Grammar, rng: &mut ChaCha8Rng) -> Bindings {
    let mut b = Bindings::new();
    for &v in &grammar.variables {
        let x = match v {
            Var::U1 | Var::U2 => rng.random_range(0.0..0.1),
            Var::L1 | Var::L2 | Var::L3 => rng.random_range(0.8..1.25),
            _ => rng.random_range(-0.2..0.25),
        };
        b.set(v, x);
    }
    b
}

fn shifted(b: &Bindings, v: Var, dx: f64) -> Bindings {
    let mut out = b.clone();
    out.set(v, b.get(v).unwrap() + dx);
    out
}

/// Central difference of `f` along `v`, fourth order, or `None` where `f`
/// is undefined on the stencil. Also returns the rounding-noise level of
/// the estimate.
pub fn central_difference(f: &Expr, b: &Bindings, v: Var, h: f64) -> Option<(f64, f64)> {
    let mut vals = [0.0; 4];
    for (slot, k) in vals.iter_mut().zip([2.0, 1.0, -1.0, -2.0]) {
        let y = evaluate(f, &shifted(b, v, k * h)).ok()?;
        if !y.is_finite() {
            return None;
        }
        *slot = y;
    }
    let d = (-vals[0] + 8.0 * vals[1] - 8.0 * vals[2] + vals[3]) / (12.0 * h);
    let scale = vals.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    Some((d, 18.0 * f64::EPSILON * scale / (12.0 * h)))
}

/// Relative error of a symbolic derivative against central differences at
/// two step sizes, net of the quotient's rounding noise. `None` when the
/// difference quotient itself has not converged there, so no verdict is
/// possible.
pub fn derivative_error(f: &Expr, df: &Expr, b: &Bindings, v: Var) -> Option<f64> {
    let x = b.get(v)?;
    let h = 1e-3 * x.abs().max(1e-2);
    let (coarse, _) = central_difference(f, b, v, 2.0 * h)?;
    let (fine, noise) = central_difference(f, b, v, h)?;
    let exact = evaluate(df, b).ok()?;
    if !exact.is_finite() {
        return None;
    }
    let floor = 100.0 * noise;
    let scale = fine.abs().max(floor).max(f64::MIN_POSITIVE);
    if (coarse - fine).abs() > 1e-3 * scale {
        return None;
    }
    // Richardson step cancels the leading h⁴ truncation term
    let estimate = fine + (fine - coarse) / 15.0;
    // disagreement below the rounding noise of the quotient is no error
    let excess = ((exact - estimate).abs() - floor).max(0.0);
    Some(excess / exact.abs().max(estimate.abs()).max(f64::MIN_POSITIVE))
}

/// Worst first- and second-derivative errors of `f` at `b` across all of
/// its variables, or `None` when no comparison was conclusive.
pub fn derivative_errors(f: &Expr, b: &Bindings) -> Option<(f64, f64)> {
    let value = evaluate(f, b).ok()?;
    if !value.is_finite() || value.abs() > 1e8 {
        return None;
    }
    let vars = f.variables();
    let mut first: Option<f64> = None;
    let mut second: Option<f64> = None;
    for &v in &vars {
        let d = differentiate(f, v);
        if let Some(e) = derivative_error(f, &d, b, v) {
            first = Some(first.map_or(e, |m| m.max(e)));
        }
        for &w in &vars {
            let dd = differentiate(&d, w);
            if let Some(e) = derivative_error(&d, &dd, b, w) {
                second = Some(second.map_or(e, |m| m.max(e)));
            }
        }
    }
    match (first, second) {
        (None, None) => None,
        (a, b) => Some((a.unwrap_or(0.0), b.unwrap_or(0.0))),
    }
}

pub fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
