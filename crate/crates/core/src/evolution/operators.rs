//! Random tree generation, mutation and crossover under a grammar.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::expr::{check_constraints, simplify, BinaryOp, Expr, Grammar, UnaryOp};

/// Relative weights of the mutation kinds.
#[derive(Debug, Clone, PartialEq)]
pub struct MutationWeights {
    /// Perturb one constant or integer exponent.
    pub constant: f64,
    /// Replace an operator by another of the same arity.
    pub swap: f64,
    /// Wrap a subtree in a new operator.
    pub insert: f64,
    /// Add a new term at the root.
    pub append: f64,
    /// Replace a subtree by a fresh random one.
    pub replace: f64,
    /// Replace an operator node by one of its children.
    pub delete: f64,
}

impl Default for MutationWeights {
    fn default() -> Self {
        MutationWeights { constant: 1.5, swap: 1.0, insert: 1.5, append: 1.0, replace: 0.7, delete: 1.2 }
    }
}

impl MutationWeights {
    fn as_array(&self) -> [f64; 6] {
        [self.constant, self.swap, self.insert, self.append, self.replace, self.delete]
    }

    pub fn is_valid(&self) -> bool {
        let w = self.as_array();
        w.iter().all(|x| x.is_finite() && *x >= 0.0) && w.iter().sum::<f64>() > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MutationKind {
    Constant,
    Swap,
    Insert,
    Append,
    Replace,
    Delete,
}

const KINDS: [MutationKind; 6] = [
    MutationKind::Constant,
    MutationKind::Swap,
    MutationKind::Insert,
    MutationKind::Append,
    MutationKind::Replace,
    MutationKind::Delete,
];

/// What the variation operators need to know about the search space.
#[derive(Debug, Clone)]
pub struct SearchSpace {
    pub grammar: Grammar,
    /// Constants must stay non-negative.
    pub positive_constants: bool,
    /// σ of the log-normal constant perturbation.
    pub perturbation_scale: f64,
    pub weights: MutationWeights,
    /// Attempts before an operator gives up and returns its input.
    pub retries: usize,
}

impl SearchSpace {
    pub fn new(grammar: Grammar, positive_constants: bool) -> Self {
        SearchSpace {
            grammar,
            positive_constants,
            perturbation_scale: 0.5,
            weights: MutationWeights::default(),
            retries: 10,
        }
    }

    pub fn is_valid(&self, e: &Expr) -> bool {
        check_constraints(e, &self.grammar).is_ok()
    }

    /// Simplified form when still valid, else the raw form when valid.
    pub fn finalize(&self, e: Expr) -> Option<Expr> {
        let s = simplify(&e);
        if self.is_valid(&s) {
            Some(s)
        } else if self.is_valid(&e) {
            Some(e)
        } else {
            None
        }
    }

    pub fn random_constant<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        let magnitude = (1.5 * z).exp();
        if self.positive_constants || rng.random_bool(0.5) {
            magnitude
        } else {
            -magnitude
        }
    }

    pub fn random_exponent<R: Rng + ?Sized>(&self, rng: &mut R) -> i32 {
        let all = self.grammar.exponents();
        all[rng.random_range(0..all.len())]
    }

    pub fn random_leaf<R: Rng + ?Sized>(&self, rng: &mut R) -> Expr {
        let vars = &self.grammar.variables;
        if !vars.is_empty() && rng.random_bool(0.5) {
            Expr::var(vars[rng.random_range(0..vars.len())])
        } else {
            Expr::Const(self.random_constant(rng))
        }
    }

    /// Grow-method tree of depth at most `depth`.
    pub fn random_tree<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Expr {
        let g = &self.grammar;
        let n_ops = g.unary_ops.len() + g.binary_ops.len() + usize::from(g.pow_int);
        if depth <= 1 || n_ops == 0 || rng.random_bool(0.3) {
            return self.random_leaf(rng);
        }
        let pick = rng.random_range(0..n_ops);
        if pick < g.unary_ops.len() {
            let op = g.unary_ops[pick];
            return Expr::unary(op, self.random_tree(depth - 1, rng));
        }
        let pick = pick - g.unary_ops.len();
        if pick < g.binary_ops.len() {
            let a = self.random_tree(depth - 1, rng);
            let b = self.random_tree(depth - 1, rng);
            return Expr::Binary(g.binary_ops[pick], Box::new(a), Box::new(b));
        }
        let base = self.random_tree(depth - 1, rng);
        Expr::pow_int(base, self.random_exponent(rng))
    }

    /// A grammar-valid random tree containing at least one variable.
    pub fn init_tree<R: Rng + ?Sized>(&self, depth: usize, rng: &mut R) -> Expr {
        loop {
            let t = self.random_tree(depth.max(2), rng);
            if t.variables().is_empty() {
                continue;
            }
            if let Some(t) = self.finalize(t) {
                if !t.variables().is_empty() {
                    return t;
                }
            }
        }
    }

    fn pick_kind<R: Rng + ?Sized>(&self, rng: &mut R) -> MutationKind {
        let w = self.weights.as_array();
        let total: f64 = w.iter().sum();
        let mut x = rng.random::<f64>() * total;
        for (k, wk) in KINDS.iter().zip(w) {
            if x < wk {
                return *k;
            }
            x -= wk;
        }
        MutationKind::Constant
    }

    /// One grammar-valid mutation of `expr`; `expr` itself when every
    /// attempt fails.
    pub fn mutate<R: Rng + ?Sized>(&self, expr: &Expr, rng: &mut R) -> Expr {
        for _ in 0..self.retries.max(1) {
            let kind = self.pick_kind(rng);
            let Some(candidate) = self.mutate_with(expr, kind, rng) else {
                continue;
            };
            if let Some(e) = self.finalize(candidate) {
                return e;
            }
        }
        expr.clone()
    }

    /// Applies one mutation of the given kind without validity checks.
    pub fn mutate_with<R: Rng + ?Sized>(&self, expr: &Expr, kind: MutationKind, rng: &mut R) -> Option<Expr> {
        match kind {
            MutationKind::Constant => self.perturb_constant(expr, rng),
            MutationKind::Swap => self.swap_operator(expr, rng),
            MutationKind::Insert => {
                let i = rng.random_range(0..expr.size());
                let sub = expr.subtree(i)?.clone();
                Some(expr.replace_subtree(i, self.wrap(sub, rng)?))
            }
            MutationKind::Append => {
                if !self.grammar.binary_ops.contains(&BinaryOp::Add) {
                    return None;
                }
                let mut term = self.random_tree(rng.random_range(2..=3), rng);
                if self.grammar.binary_ops.contains(&BinaryOp::Mul) && !term.is_const() {
                    term = Expr::mul(Expr::Const(self.random_constant(rng)), term);
                }
                Some(Expr::add(expr.clone(), term))
            }
            MutationKind::Replace => {
                let i = rng.random_range(0..expr.size());
                let fresh = self.random_tree(rng.random_range(1..=3), rng);
                Some(expr.replace_subtree(i, fresh))
            }
            MutationKind::Delete => {
                let ops: Vec<usize> = (0..expr.size())
                    .filter(|&i| expr.subtree(i).is_some_and(|s| s.op().is_some()))
                    .collect();
                if ops.is_empty() {
                    return None;
                }
                let i = ops[rng.random_range(0..ops.len())];
                let node = expr.subtree(i)?;
                let child = match node {
                    Expr::Unary(_, a) | Expr::PowInt(a, _) => (**a).clone(),
                    Expr::Binary(_, a, b) => {
                        if rng.random_bool(0.5) {
                            (**a).clone()
                        } else {
                            (**b).clone()
                        }
                    }
                    _ => return None,
                };
                Some(expr.replace_subtree(i, child))
            }
        }
    }

    /// Multiplies a constant by a log-normal factor (sign kept; clamped to
    /// non-negative when required) or shifts an integer exponent within
    /// range.
    pub fn perturb_constant<R: Rng + ?Sized>(&self, expr: &Expr, rng: &mut R) -> Option<Expr> {
        let targets: Vec<usize> = (0..expr.size())
            .filter(|&i| matches!(expr.subtree(i), Some(Expr::Const(_)) | Some(Expr::PowInt(..))))
            .collect();
        if targets.is_empty() {
            return None;
        }
        let i = targets[rng.random_range(0..targets.len())];
        let scale = self.perturbation_scale;
        let replacement = match expr.subtree(i)? {
            Expr::Const(c) => {
                let z: f64 = rng.sample(StandardNormal);
                let mut v = c * (scale * z).exp();
                if scale > 0.0 && !self.positive_constants && rng.random_bool(0.05) {
                    v = -v;
                }
                if self.positive_constants {
                    v = v.max(0.0);
                }
                Expr::Const(v)
            }
            Expr::PowInt(base, n) => {
                if scale == 0.0 {
                    return Some(expr.clone());
                }
                let (lo, hi) = self.grammar.exponent_range;
                let mut m = if rng.random_bool(0.2) {
                    self.random_exponent(rng)
                } else {
                    let step = rng.random_range(1..=3);
                    if rng.random_bool(0.5) {
                        n + step
                    } else {
                        n - step
                    }
                };
                m = m.clamp(lo, hi);
                if !self.grammar.exponent_allowed(m) {
                    m += if m >= *n { 1 } else { -1 };
                    m = m.clamp(lo, hi);
                }
                Expr::pow_int((**base).clone(), m)
            }
            _ => return None,
        };
        Some(expr.replace_subtree(i, replacement))
    }

    fn swap_operator<R: Rng + ?Sized>(&self, expr: &Expr, rng: &mut R) -> Option<Expr> {
        let g = &self.grammar;
        let targets: Vec<usize> = (0..expr.size())
            .filter(|&i| match expr.subtree(i) {
                Some(Expr::Unary(..)) => g.unary_ops.len() > 1,
                Some(Expr::Binary(..)) => g.binary_ops.len() > 1,
                _ => false,
            })
            .collect();
        if targets.is_empty() {
            return None;
        }
        let i = targets[rng.random_range(0..targets.len())];
        let node = match expr.subtree(i)? {
            Expr::Unary(op, a) => {
                let others: Vec<UnaryOp> = g.unary_ops.iter().copied().filter(|o| o != op).collect();
                Expr::unary(others[rng.random_range(0..others.len())], (**a).clone())
            }
            Expr::Binary(op, a, b) => {
                let others: Vec<BinaryOp> = g.binary_ops.iter().copied().filter(|o| o != op).collect();
                Expr::Binary(others[rng.random_range(0..others.len())], a.clone(), b.clone())
            }
            _ => return None,
        };
        Some(expr.replace_subtree(i, node))
    }

    fn wrap<R: Rng + ?Sized>(&self, sub: Expr, rng: &mut R) -> Option<Expr> {
        let g = &self.grammar;
        let n_ops = g.unary_ops.len() + g.binary_ops.len() + usize::from(g.pow_int);
        if n_ops == 0 {
            return None;
        }
        let pick = rng.random_range(0..n_ops);
        if pick < g.unary_ops.len() {
            let op = g.unary_ops[pick];
            // half of the new unary nodes come scaled inside and out
            if g.binary_ops.contains(&BinaryOp::Mul) && rng.random_bool(0.5) {
                let inner = Expr::mul(Expr::Const(self.random_constant(rng)), sub);
                return Some(Expr::mul(Expr::Const(self.random_constant(rng)), Expr::unary(op, inner)));
            }
            return Some(Expr::unary(op, sub));
        }
        let pick = pick - g.unary_ops.len();
        if pick < g.binary_ops.len() {
            let leaf = self.random_leaf(rng);
            let (a, b) = if rng.random_bool(0.5) { (sub, leaf) } else { (leaf, sub) };
            return Some(Expr::Binary(g.binary_ops[pick], Box::new(a), Box::new(b)));
        }
        Some(Expr::pow_int(sub, self.random_exponent(rng)))
    }

    /// Swaps uniformly chosen subtrees of `a` and `b`. Retries when an
    /// offspring violates the grammar; returns the parents unchanged after
    /// the last failure. Offspring are not simplified.
    pub fn crossover<R: Rng + ?Sized>(&self, a: &Expr, b: &Expr, rng: &mut R) -> (Expr, Expr) {
        for _ in 0..self.retries.max(1) {
            let (x, y) = swap_subtrees(a, b, rng);
            if self.is_valid(&x) && self.is_valid(&y) {
                return (x, y);
            }
        }
        (a.clone(), b.clone())
    }
}

/// Raw subtree exchange at uniformly chosen positions.
pub fn swap_subtrees<R: Rng + ?Sized>(a: &Expr, b: &Expr, rng: &mut R) -> (Expr, Expr) {
    let i = rng.random_range(0..a.size());
    let j = rng.random_range(0..b.size());
    let sa = a.subtree(i).expect("index within size").clone();
    let sb = b.subtree(j).expect("index within size").clone();
    (a.replace_subtree(i, sb), b.replace_subtree(j, sa))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{parse_expr, Var};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn zero_scale_perturbation_is_identity() {
        let mut space = SearchSpace::new(Grammar::invariant(), true);
        space.perturbation_scale = 0.0;
        let e = Expr::mul(Expr::Const(1.0), Expr::var(Var::U1));
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            assert_eq!(space.perturb_constant(&e, &mut rng).unwrap(), e);
        }
    }

    #[test]
    fn positive_constants_stay_positive() {
        let space = SearchSpace::new(Grammar::invariant(), true);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut e = parse_expr("0.5*exp(2*(I1-3))").unwrap();
        for _ in 0..500 {
            e = space.mutate(&e, &mut rng);
            assert!(e.constants().iter().all(|c| *c >= 0.0), "{e}");
        }
    }

    #[test]
    fn swap_keeps_arity() {
        let space = SearchSpace::new(Grammar::invariant(), true);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let e = parse_expr("exp(I1-3)").unwrap();
        for _ in 0..50 {
            let s = space.mutate_with(&e, MutationKind::Swap, &mut rng).unwrap();
            assert!(matches!(s, Expr::Unary(..)));
            assert_ne!(s, e);
        }
    }

    #[test]
    fn self_crossover_at_root() {
        let e = parse_expr("exp(I1-3) + 2").unwrap();
        let (x, y) = (e.replace_subtree(0, e.clone()), e.clone());
        assert_eq!(x, y);
    }

    #[test]
    fn exponents_stay_in_range() {
        let space = SearchSpace::new(Grammar::stretch(), false);
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut e = parse_expr("0.1*l1^29").unwrap();
        for _ in 0..300 {
            e = space.perturb_constant(&e, &mut rng).map(|x| space.finalize(x).unwrap_or(e.clone())).unwrap();
            e.visit(&mut |n| {
                if let Expr::PowInt(_, k) = n {
                    assert!(space.grammar.exponent_allowed(*k), "{k}");
                }
            });
        }
    }
}
