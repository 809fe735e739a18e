use std::cmp::Ordering;

use rand::Rng;

use crate::expr::Expr;
use crate::objective::{penalized_loss, ParsimonyState};

/// A population member with its cached prediction loss.
#[derive(Debug, Clone, PartialEq)]
pub struct Individual {
    pub expr: Expr,
    /// Prediction loss; +∞ for rejected candidates.
    pub loss: f64,
    pub complexity: u32,
    /// Monotone creation stamp within an island; smaller is older.
    pub birth: u64,
}

impl Individual {
    pub fn penalized(&self, parsimony: &ParsimonyState) -> f64 {
        penalized_loss(self.loss, self.complexity, parsimony)
    }
}

/// Lower penalized loss wins, then lower complexity, then earlier birth.
pub fn compare(a: &Individual, b: &Individual, parsimony: &ParsimonyState) -> Ordering {
    a.penalized(parsimony)
        .total_cmp(&b.penalized(parsimony))
        .then(a.complexity.cmp(&b.complexity))
        .then(a.birth.cmp(&b.birth))
}

/// Index of the best of `k` members drawn uniformly with replacement; the
/// whole population competes once `k` reaches its size.
pub fn tournament_select<R: Rng + ?Sized>(
    population: &[Individual],
    k: usize,
    parsimony: &ParsimonyState,
    rng: &mut R,
) -> usize {
    assert!(!population.is_empty(), "tournament on an empty population");
    let n = population.len();
    let better = |i: usize, j: usize| compare(&population[i], &population[j], parsimony) == Ordering::Less;
    if k >= n {
        return (1..n).fold(0, |best, i| if better(i, best) { i } else { best });
    }
    let mut best = rng.random_range(0..n);
    for _ in 1..k.max(1) {
        let i = rng.random_range(0..n);
        if better(i, best) {
            best = i;
        }
    }
    best
}
