//! Derivative-free fitting of the numeric constants of an expression.

use crate::expr::Expr;
use crate::objective::Objective;

/// What constants are fitted against: a scalar loss and, when available,
/// the residual vector whose squares sum to it.
pub trait FitTarget {
    fn loss(&self, expr: &Expr) -> f64;

    fn residuals(&self, _expr: &Expr) -> Option<Vec<f64>> {
        None
    }
}

impl<F: Fn(&Expr) -> f64> FitTarget for F {
    fn loss(&self, expr: &Expr) -> f64 {
        self(expr)
    }
}

impl FitTarget for Objective {
    fn loss(&self, expr: &Expr) -> f64 {
        Objective::loss(self, expr)
    }

    fn residuals(&self, expr: &Expr) -> Option<Vec<f64>> {
        Objective::residuals(self, expr)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerConfig {
    /// Chance per generation that a population member is refitted.
    pub probability: f64,
    /// Additional simplex restarts from the incumbent.
    pub restarts: usize,
    /// Loss evaluations per simplex run.
    pub max_evaluations: usize,
    /// Relative spread of simplex values that counts as converged.
    pub tolerance: f64,
    /// Levenberg–Marquardt iterations run before the simplex when the
    /// target exposes residuals; 0 disables them.
    pub lm_iterations: usize,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        OptimizerConfig { probability: 0.1, restarts: 1, max_evaluations: 150, tolerance: 1e-12, lm_iterations: 20 }
    }
}

/// Result of a simplex run.
#[derive(Debug, Clone, PartialEq)]
pub struct Minimum {
    pub x: Vec<f64>,
    pub value: f64,
    pub evaluations: usize,
}

/// Nelder–Mead simplex minimization from `x0` with per-coordinate initial
/// `step`. Non-finite objective values rank as +∞.
pub fn nelder_mead(
    mut f: impl FnMut(&[f64]) -> f64,
    x0: &[f64],
    step: &[f64],
    max_evaluations: usize,
    tolerance: f64,
) -> Minimum {
    let n = x0.len();
    let mut evals = 0usize;
    let mut eval = |x: &[f64], evals: &mut usize| {
        *evals += 1;
        let v = f(x);
        if v.is_finite() {
            v
        } else {
            f64::INFINITY
        }
    };
    let f0 = eval(x0, &mut evals);
    if n == 0 {
        return Minimum { x: Vec::new(), value: f0, evaluations: evals };
    }
    let mut simplex: Vec<(Vec<f64>, f64)> = vec![(x0.to_vec(), f0)];
    for i in 0..n {
        let mut x = x0.to_vec();
        x[i] += step[i];
        let v = eval(&x, &mut evals);
        simplex.push((x, v));
    }
    let (alpha, gamma, rho, sigma) = (1.0, 2.0, 0.5, 0.5);
    while evals < max_evaluations {
        simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
        let best = simplex[0].1;
        let worst = simplex[n].1;
        if worst.is_finite() && (worst - best).abs() <= tolerance * best.abs() + 1e-300 {
            break;
        }
        let diameter = simplex[1..]
            .iter()
            .flat_map(|(x, _)| x.iter().zip(&simplex[0].0).map(|(a, b)| (a - b).abs() / b.abs().max(1e-8)))
            .fold(0.0, f64::max);
        if diameter < 1e-13 {
            break;
        }
        let mut centroid = vec![0.0; n];
        for (x, _) in &simplex[..n] {
            for (c, xi) in centroid.iter_mut().zip(x) {
                *c += xi / n as f64;
            }
        }
        let toward = |t: f64| -> Vec<f64> {
            centroid.iter().zip(&simplex[n].0).map(|(c, w)| c + t * (w - c)).collect()
        };
        let xr = toward(-alpha);
        let fr = eval(&xr, &mut evals);
        if fr < simplex[0].1 {
            let xe = toward(-alpha * gamma);
            let fe = eval(&xe, &mut evals);
            simplex[n] = if fe < fr { (xe, fe) } else { (xr, fr) };
        } else if fr < simplex[n - 1].1 {
            simplex[n] = (xr, fr);
        } else {
            let (xc, fc) = if fr < simplex[n].1 {
                let xc = toward(-rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            } else {
                let xc = toward(rho);
                let fc = eval(&xc, &mut evals);
                (xc, fc)
            };
            if fc < simplex[n].1.min(fr) {
                simplex[n] = (xc, fc);
            } else {
                let x0 = simplex[0].0.clone();
                for (x, v) in simplex[1..].iter_mut() {
                    for (xi, bi) in x.iter_mut().zip(&x0) {
                        *xi = bi + sigma * (*xi - bi);
                    }
                    *v = eval(x, &mut evals);
                }
            }
        }
    }
    simplex.sort_by(|a, b| a.1.total_cmp(&b.1));
    let (x, value) = simplex.swap_remove(0);
    Minimum { x, value, evaluations: evals }
}

/// Levenberg–Marquardt minimization of ‖r(x)‖² with a forward-difference
/// Jacobian. `r` returns `None` where undefined.
pub fn levenberg_marquardt(
    mut r: impl FnMut(&[f64]) -> Option<Vec<f64>>,
    x0: &[f64],
    iterations: usize,
) -> Minimum {
    let cost = |v: &[f64]| v.iter().map(|e| e * e).sum::<f64>();
    let mut evals = 1;
    let Some(mut res) = r(x0) else {
        return Minimum { x: x0.to_vec(), value: f64::INFINITY, evaluations: evals };
    };
    let mut x = x0.to_vec();
    let mut value = cost(&res);
    let (n, m) = (x.len(), res.len());
    let mut damping = 1e-3;
    'outer: for _ in 0..iterations {
        if value == 0.0 || n == 0 {
            break;
        }
        let mut jac = vec![vec![0.0; n]; m];
        for k in 0..n {
            let h = 1e-7 * x[k].abs().max(1e-4);
            let mut xh = x.clone();
            xh[k] += h;
            evals += 1;
            let Some(rh) = r(&xh) else {
                break 'outer;
            };
            for (row, (a, b)) in jac.iter_mut().zip(rh.iter().zip(&res)) {
                row[k] = (a - b) / h;
            }
        }
        let mut jtj = vec![vec![0.0; n]; n];
        let mut jtr = vec![0.0; n];
        for (row, e) in jac.iter().zip(&res) {
            for a in 0..n {
                jtr[a] += row[a] * e;
                for b in 0..n {
                    jtj[a][b] += row[a] * row[b];
                }
            }
        }
        let mut improved = false;
        for _ in 0..10 {
            let mut a = jtj.clone();
            for (k, row) in a.iter_mut().enumerate() {
                row[k] += damping * jtj[k][k].max(1e-12);
            }
            let Some(step) = solve(a, jtr.iter().map(|g| -g).collect()) else {
                damping *= 10.0;
                continue;
            };
            let trial: Vec<f64> = x.iter().zip(&step).map(|(a, d)| a + d).collect();
            evals += 1;
            match r(&trial) {
                Some(rt) if cost(&rt) < value => {
                    let new_value = cost(&rt);
                    let gain = (value - new_value) / value;
                    x = trial;
                    res = rt;
                    value = new_value;
                    damping = (damping / 3.0).max(1e-12);
                    improved = gain > 1e-12;
                    break;
                }
                _ => damping *= 4.0,
            }
        }
        if !improved {
            break;
        }
    }
    Minimum { x, value, evaluations: evals }
}

/// Gaussian elimination with partial pivoting.
fn solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Option<Vec<f64>> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if !(a[pivot][col].abs() > 1e-300) {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..n {
                a[row][k] -= f * a[col][k];
            }
            b[row] -= f * b[col];
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x.iter().all(|v| v.is_finite()).then_some(x)
}

/// Refits the constants of `expr` (integer exponents excluded) to minimize
/// the target loss: a Levenberg–Marquardt polish when residuals are
/// available, then simplex restarts. Positive constants are searched in log
/// space when `positive` holds; zero constants stay fixed. Returns the input
/// when nothing improves, so the loss never gets worse.
pub fn optimize_constants(
    expr: &Expr,
    current_loss: f64,
    positive: bool,
    config: &OptimizerConfig,
    target: &(impl FitTarget + ?Sized),
) -> (Expr, f64) {
    let constants = expr.constants();
    let free: Vec<usize> = (0..constants.len())
        .filter(|&i| !(positive && constants[i] <= 0.0))
        .collect();
    if free.is_empty() {
        return (expr.clone(), current_loss);
    }
    let encode = |c: f64| if positive { c.ln() } else { c };
    let decode = |x: f64| if positive { x.exp() } else { x };
    let build = |x: &[f64]| {
        let mut values = constants.clone();
        for (k, &i) in free.iter().enumerate() {
            values[i] = decode(x[k]);
        }
        expr.with_constants(&values)
    };
    let objective = |x: &[f64]| target.loss(&build(x));
    let mut x: Vec<f64> = free.iter().map(|&i| encode(constants[i])).collect();
    let mut best_value = current_loss;
    let mut best_x = x.clone();
    if config.lm_iterations > 0 && target.residuals(expr).is_some() {
        let m = levenberg_marquardt(|x| target.residuals(&build(x)), &x, config.lm_iterations);
        // residuals only steer; the loss decides
        let value = objective(&m.x);
        if value < best_value {
            best_value = value;
            best_x = m.x;
            x = best_x.clone();
        }
    }
    for round in 0..=config.restarts {
        let step: Vec<f64> = x
            .iter()
            .map(|v| if positive { 0.3 } else { 0.2 * v.abs().max(1e-3) })
            .map(|s| s * 0.5f64.powi(round as i32))
            .collect();
        let m = nelder_mead(&objective, &x, &step, config.max_evaluations, config.tolerance);
        if m.value < best_value {
            best_value = m.value;
            best_x = m.x.clone();
        }
        x = best_x.clone();
    }
    if best_value < current_loss {
        (build(&best_x), best_value)
    } else {
        (expr.clone(), current_loss)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Var};

    #[test]
    fn quadratic_minimum() {
        let m = nelder_mead(|x| (x[0] - 3.0).powi(2), &[0.0], &[1.0], 1000, 1e-14);
        assert!((m.x[0] - 3.0).abs() < 1e-8, "{:?}", m);
    }

    #[test]
    fn rosenbrock_valley() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let m = nelder_mead(f, &[-1.2, 1.0], &[0.5, 0.5], 5000, 1e-16);
        assert!((m.x[0] - 1.0).abs() < 1e-4 && (m.x[1] - 1.0).abs() < 1e-4, "{:?}", m);
    }

    #[test]
    fn lm_solves_linear_least_squares() {
        let r = |x: &[f64]| Some(vec![x[0] + 2.0 * x[1] - 3.0, x[0] - x[1], 3.0 * x[0] + x[1] - 4.0]);
        let m = levenberg_marquardt(r, &[10.0, -7.0], 20);
        assert!((m.x[0] - 1.0).abs() < 1e-7 && (m.x[1] - 1.0).abs() < 1e-7, "{m:?}");
    }

    #[test]
    fn constant_free_expression_is_unchanged() {
        let e = Expr::var(Var::U1);
        let (out, l) = optimize_constants(&e, 2.0, true, &OptimizerConfig::default(), &|_: &Expr| 0.0);
        assert_eq!((out, l), (e, 2.0));
    }

    #[test]
    fn never_worse_than_input() {
        let e = parse_expr("2*(I1-3)").unwrap();
        let (out, l) = optimize_constants(&e, 0.0, true, &OptimizerConfig::default(), &|_: &Expr| 1.0);
        assert_eq!((out, l), (e, 0.0));
    }
}
