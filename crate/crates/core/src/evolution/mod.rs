//! Island-model genetic programming over energy expressions.

pub mod operators;
pub mod optimize;
pub mod pareto;
pub mod select;

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{complexity, BinaryOp, Expr, Grammar};
use crate::objective::{DataBundle, DataError, EnergyModel, Objective, ParsimonyState, Parameterization};

pub use operators::{swap_subtrees, MutationKind, MutationWeights, SearchSpace};
pub use optimize::{levenberg_marquardt, nelder_mead, optimize_constants, FitTarget, Minimum, OptimizerConfig};
pub use pareto::{score_front, select_best, ParetoFront};
pub use select::{compare, tournament_select, Individual};

#[derive(Debug, Clone, PartialEq)]
pub struct GPConfig {
    /// Worker threads; results do not depend on it.
    pub workers: usize,
    /// Number of islands.
    pub populations: usize,
    pub population_size: usize,
    /// Generations.
    pub iterations: usize,
    /// Selection-and-variation events per island per generation.
    pub events_per_generation: usize,
    pub tournament_size: usize,
    pub mutation_weights: MutationWeights,
    pub crossover_probability: f64,
    /// σ of the multiplicative log-normal constant perturbation.
    pub perturbation_scale: f64,
    pub optimizer: OptimizerConfig,
    pub migration_interval: usize,
    pub migration_fraction: f64,
    pub seed: u64,
    pub grammar: Grammar,
    pub param: Parameterization,
    pub parsimony_decay: f64,
    pub parsimony_scale: f64,
    /// Depth of trees in the initial populations.
    pub init_depth: usize,
    /// Attempts per mutation or crossover before giving up.
    pub mutation_retries: usize,
    /// Damped least-squares iterations of the short constant fit every
    /// structurally new offspring receives before it is scored.
    pub refit_iterations: usize,
    /// Simplex budget of the same short fit.
    pub refit_evaluations: usize,
    /// Losses below this count as equal when scoring the front.
    pub loss_floor: f64,
    /// Stops once the best loss on the front reaches this value.
    pub early_stop_loss: Option<f64>,
}

impl GPConfig {
    /// Defaults for `param`: six workers, eighteen islands, a thousand
    /// generations and the parameterization's grammar.
    pub fn new(param: Parameterization) -> Self {
        GPConfig {
            workers: 6,
            populations: 18,
            population_size: 33,
            iterations: 1000,
            events_per_generation: 33,
            tournament_size: 8,
            mutation_weights: MutationWeights::default(),
            crossover_probability: 0.1,
            perturbation_scale: 0.5,
            optimizer: OptimizerConfig { restarts: 0, max_evaluations: 50, ..OptimizerConfig::default() },
            migration_interval: 50,
            migration_fraction: 0.1,
            seed: 0,
            grammar: param.grammar(),
            param,
            parsimony_decay: 0.95,
            parsimony_scale: 1.0,
            init_depth: 3,
            mutation_retries: 10,
            refit_iterations: 10,
            refit_evaluations: 0,
            loss_floor: 1e-26,
            early_stop_loss: None,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        let positive = [
            ("workers", self.workers),
            ("populations", self.populations),
            ("population_size", self.population_size),
            ("tournament_size", self.tournament_size),
            ("migration_interval", self.migration_interval),
            ("init_depth", self.init_depth),
            ("mutation_retries", self.mutation_retries),
            ("max_evaluations", self.optimizer.max_evaluations),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(ConfigError(format!("{name} must be positive")));
            }
        }
        let probabilities = [
            ("crossover_probability", self.crossover_probability),
            ("migration_fraction", self.migration_fraction),
            ("optimize_probability", self.optimizer.probability),
        ];
        for (name, p) in probabilities {
            if !(0.0..=1.0).contains(&p) {
                return Err(ConfigError(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        if !(self.parsimony_decay > 0.0 && self.parsimony_decay < 1.0) {
            return Err(ConfigError("parsimony_decay must lie in (0, 1)".into()));
        }
        if !(self.parsimony_scale >= 0.0) || !(self.perturbation_scale >= 0.0) || !(self.loss_floor >= 0.0) {
            return Err(ConfigError("scales and floors must be non-negative".into()));
        }
        if !self.mutation_weights.is_valid() {
            return Err(ConfigError("mutation weights must be non-negative with a positive sum".into()));
        }
        let g = &self.grammar;
        if g.variables.is_empty() {
            return Err(ConfigError("grammar has no variables".into()));
        }
        if g.variables.iter().any(|v| !self.param.variables().contains(v)) {
            return Err(ConfigError(format!("grammar variables do not match the {} parameterization", self.param)));
        }
        if g.pow_int && g.exponents().is_empty() {
            return Err(ConfigError("pow_int enabled with an empty exponent range".into()));
        }
        if g.max_depth < 2 || g.max_complexity < 3 {
            return Err(ConfigError("grammar limits are too small to hold a model".into()));
        }
        if g.op_weights.iter().any(|w| *w == 0) || g.variable_weight == 0 || g.constant_weight == 0 {
            return Err(ConfigError("complexity weights must be positive integers".into()));
        }
        Ok(())
    }

    pub fn search_space(&self) -> SearchSpace {
        SearchSpace {
            grammar: self.grammar.clone(),
            positive_constants: self.param == Parameterization::Invariant,
            perturbation_scale: self.perturbation_scale,
            weights: self.mutation_weights.clone(),
            retries: self.mutation_retries,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid configuration: {0}")]
pub struct ConfigError(pub String);

#[derive(Debug, Clone, PartialEq, Error)]
pub enum EvolveError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("invalid data: {0}")]
    Data(#[from] DataError),
}

/// Per-island status at the end of a generation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Progress {
    pub generation: usize,
    pub island: usize,
    pub best_loss: f64,
    pub front_size: usize,
}

impl fmt::Display for Progress {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "generation={} island={} best_loss={:e} front_size={}",
            self.generation, self.island, self.best_loss, self.front_size
        )
    }
}

#[derive(Debug, Clone)]
pub struct EvolveResult {
    /// Normalized and scored.
    pub front: ParetoFront,
    pub generations: usize,
    pub evaluations: u64,
}

impl EvolveResult {
    pub fn best(&self, loss_floor: f64) -> Option<&EnergyModel> {
        self.front.best(loss_floor)
    }
}

struct Context<'a> {
    objective: &'a Objective,
    space: SearchSpace,
    config: &'a GPConfig,
}

impl Context<'_> {
    fn complexity(&self, e: &Expr) -> u32 {
        complexity(e, &self.space.grammar).unwrap_or(u32::MAX)
    }

    fn model(&self, ind: &Individual) -> EnergyModel {
        EnergyModel {
            expr: ind.expr.clone(),
            param: self.config.param,
            offset: 0.0,
            loss: ind.loss,
            complexity: ind.complexity,
            score: None,
        }
    }

    fn optimize(&self, expr: &Expr, loss: f64) -> Option<(Expr, f64)> {
        self.fit(expr, loss, &self.config.optimizer)
    }

    /// Short single-run fit given to every new offspring.
    fn refit(&self, expr: &Expr, loss: f64) -> Option<(Expr, f64)> {
        let quick = OptimizerConfig {
            restarts: 0,
            max_evaluations: self.config.refit_evaluations,
            lm_iterations: self.config.refit_iterations,
            ..self.config.optimizer.clone()
        };
        self.fit(expr, loss, &quick)
    }

    fn fit(&self, expr: &Expr, loss: f64, config: &OptimizerConfig) -> Option<(Expr, f64)> {
        let (e, l) = optimize_constants(expr, loss, self.space.positive_constants, config, self.objective);
        (l < loss && self.space.is_valid(&e)).then_some((e, l))
    }
}

struct Island {
    members: Vec<Individual>,
    rng: ChaCha8Rng,
    births: u64,
    local: ParetoFront,
    evaluations: u64,
}

impl Island {
    fn new(index: usize, ctx: &Context<'_>) -> Island {
        let seed = ctx.config.seed.wrapping_add(index as u64);
        let mut island = Island {
            members: Vec::with_capacity(ctx.config.population_size),
            rng: ChaCha8Rng::seed_from_u64(seed),
            births: 0,
            local: ParetoFront::new(),
            evaluations: 0,
        };
        for _ in 0..ctx.config.population_size {
            let e = ctx.space.init_tree(ctx.config.init_depth, &mut island.rng);
            let ind = island.evaluate(e, ctx, true);
            island.members.push(ind);
        }
        island
    }

    fn evaluate(&mut self, expr: Expr, ctx: &Context<'_>, refit: bool) -> Individual {
        self.evaluations += 1;
        let loss = ctx.objective.loss(&expr);
        let complexity = ctx.complexity(&expr);
        let mut ind = Individual { expr, loss, complexity, birth: self.births };
        self.births += 1;
        let budget = ctx.config.refit_iterations + ctx.config.refit_evaluations;
        if refit && budget > 0 && ind.loss.is_finite() {
            if let Some((e, l)) = ctx.refit(&ind.expr, ind.loss) {
                ind.expr = e;
                ind.loss = l;
            }
        }
        if self.local.admits(ind.complexity, ind.loss) {
            if let Some((e, l)) = ctx.optimize(&ind.expr, ind.loss) {
                ind.expr = e;
                ind.loss = l;
            }
            self.local.insert(ctx.model(&ind));
        }
        ind
    }

    fn replace_oldest(&mut self, ind: Individual) {
        let oldest = (0..self.members.len()).min_by_key(|&i| self.members[i].birth).expect("nonempty");
        self.members[oldest] = ind;
    }

    fn step(&mut self, ctx: &Context<'_>, parsimony: &ParsimonyState) {
        for _ in 0..ctx.config.events_per_generation {
            if self.members.len() >= 2 && self.rng.random_bool(ctx.config.crossover_probability) {
                let i = self.select(ctx, parsimony);
                let j = self.select(ctx, parsimony);
                let (a, b) = (self.members[i].expr.clone(), self.members[j].expr.clone());
                let (x, y) = ctx.space.crossover(&a, &b, &mut self.rng);
                for child in [x, y] {
                    let child = ctx.space.finalize(child.clone()).unwrap_or(child);
                    let ind = self.evaluate(child, ctx, true);
                    self.replace_oldest(ind);
                }
            } else {
                let i = self.select(ctx, parsimony);
                let child = ctx.space.mutate(&self.members[i].expr, &mut self.rng);
                // a constant tweak would only be undone by the refit
                let refit = !same_shape(&child, &self.members[i].expr);
                let ind = self.evaluate(child, ctx, refit);
                self.replace_oldest(ind);
            }
        }
    }

    /// Tournament winner, refitted in place with the configured probability.
    fn select(&mut self, ctx: &Context<'_>, parsimony: &ParsimonyState) -> usize {
        let i = tournament_select(&self.members, ctx.config.tournament_size, parsimony, &mut self.rng);
        if self.rng.random_bool(ctx.config.optimizer.probability) {
            let m = &self.members[i];
            if let Some((e, l)) = ctx.optimize(&m.expr, m.loss) {
                let m = &mut self.members[i];
                m.expr = e;
                m.loss = l;
                let snapshot = m.clone();
                self.local.insert(ctx.model(&snapshot));
            }
        }
        i
    }

    fn best_loss(&self) -> f64 {
        self.members.iter().map(|m| m.loss).fold(f64::INFINITY, f64::min)
    }

    /// Indices sorted best first by raw loss, then complexity, then age.
    fn ranking(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.members.len()).collect();
        idx.sort_by(|&a, &b| {
            let (x, y) = (&self.members[a], &self.members[b]);
            x.loss.total_cmp(&y.loss).then(x.complexity.cmp(&y.complexity)).then(x.birth.cmp(&y.birth))
        });
        idx
    }

    fn receive(&mut self, migrants: &[Individual]) {
        let ranking = self.ranking();
        for (slot, m) in ranking.iter().rev().zip(migrants) {
            let mut m = m.clone();
            m.birth = self.births;
            self.births += 1;
            self.members[*slot] = m;
        }
    }
}

/// Runs the island model and returns the normalized, scored front.
pub fn evolve(config: &GPConfig, bundle: &DataBundle) -> Result<EvolveResult, EvolveError> {
    evolve_with(config, bundle, |_| {})
}

/// [`evolve`] with a callback receiving one progress record per island
/// per generation (generation 0 is the initial population).
pub fn evolve_with(
    config: &GPConfig,
    bundle: &DataBundle,
    mut progress: impl FnMut(&Progress),
) -> Result<EvolveResult, EvolveError> {
    config.validate()?;
    let objective = Objective::new(config.param, config.grammar.clone(), bundle.clone())?;
    let ctx = Context { objective: &objective, space: config.search_space(), config };
    let pool = rayon::ThreadPoolBuilder::new().num_threads(config.workers).build().ok();
    let run = |f: &mut (dyn FnMut() + Send)| match &pool {
        Some(p) => p.install(f),
        None => f(),
    };

    let mut islands: Vec<Island> = Vec::new();
    run(&mut || {
        islands = (0..config.populations).into_par_iter().map(|i| Island::new(i, &ctx)).collect();
    });
    let mut parsimony = ParsimonyState::new(config.parsimony_decay, config.parsimony_scale);
    let mut front = ParetoFront::new();
    let mut migration_rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9_7f4a_7c15);

    let merge = |islands: &[Island], front: &mut ParetoFront, parsimony: &mut ParsimonyState| {
        for isl in islands {
            for m in isl.local.entries() {
                front.insert(m.clone());
            }
        }
        parsimony.update(islands.iter().flat_map(|i| i.members.iter().map(|m| m.complexity)));
    };
    merge(&islands, &mut front, &mut parsimony);
    for (i, isl) in islands.iter().enumerate() {
        progress(&Progress { generation: 0, island: i, best_loss: isl.best_loss(), front_size: front.len() });
    }

    let mut generations = 0;
    let stop = |front: &ParetoFront| match (config.early_stop_loss, front.min_loss()) {
        (Some(t), Some(l)) => l <= t,
        _ => false,
    };
    while generations < config.iterations && !stop(&front) {
        generations += 1;
        let snapshot = parsimony.clone();
        run(&mut || islands.par_iter_mut().for_each(|isl| isl.step(&ctx, &snapshot)));
        merge(&islands, &mut front, &mut parsimony);
        for (i, isl) in islands.iter().enumerate() {
            progress(&Progress { generation: generations, island: i, best_loss: isl.best_loss(), front_size: front.len() });
        }
        if generations % config.migration_interval == 0 {
            migrate(&mut islands, &front, config, &ctx, &mut migration_rng);
        }
    }

    let mut normalized = ParetoFront::new();
    for m in front.into_entries() {
        let (expr, loss) = prune(&m.expr, m.loss, &ctx);
        let complexity = ctx.complexity(&expr);
        let pruned = EnergyModel { expr, loss, complexity, ..m };
        if let Ok(n) = pruned.normalized() {
            normalized.insert(n);
        }
    }
    normalized.score(config.loss_floor);
    let evaluations = islands.iter().map(|i| i.evaluations).sum();
    Ok(EvolveResult { front: normalized, generations, evaluations })
}

/// Equal trees up to the values of their constants.
fn same_shape(a: &Expr, b: &Expr) -> bool {
    match (a, b) {
        (Expr::Const(_), Expr::Const(_)) => true,
        (Expr::Var(x), Expr::Var(y)) => x == y,
        (Expr::Unary(f, x), Expr::Unary(g, y)) => f == g && same_shape(x, y),
        (Expr::Binary(f, x1, x2), Expr::Binary(g, y1, y2)) => f == g && same_shape(x1, y1) && same_shape(x2, y2),
        (Expr::PowInt(x, n), Expr::PowInt(y, m)) => n == m && same_shape(x, y),
        _ => false,
    }
}

/// Top-level summands, with constant factors distributed over sums.
fn additive_terms(e: &Expr) -> Vec<Expr> {
    match e {
        Expr::Binary(BinaryOp::Add, a, b) => {
            let mut t = additive_terms(a);
            t.extend(additive_terms(b));
            t
        }
        Expr::Binary(BinaryOp::Mul, c, x) if c.is_const() && matches!(**x, Expr::Binary(BinaryOp::Add, ..)) => {
            additive_terms(x).into_iter().map(|t| Expr::mul((**c).clone(), t)).collect()
        }
        other => vec![other.clone()],
    }
}

/// Drops top-level additive terms whose removal leaves the loss unchanged
/// up to round-off, or still below the loss floor. The result is kept only
/// if it is simpler than `expr`.
fn prune(expr: &Expr, loss: f64, ctx: &Context<'_>) -> (Expr, f64) {
    let mut current = (expr.clone(), loss);
    let mut terms = additive_terms(expr);
    let mut i = 0;
    while terms.len() > 1 && i < terms.len() {
        let rest: Vec<Expr> = terms.iter().enumerate().filter(|(k, _)| *k != i).map(|(_, t)| t.clone()).collect();
        let candidate = rest.into_iter().reduce(Expr::add).expect("nonempty");
        let raw = ctx.objective.loss(&candidate);
        // partners of the dropped term may have been tuned to cancel it
        let (candidate, l) = ctx.optimize(&candidate, raw).unwrap_or((candidate, raw));
        if l <= (current.1 * (1.0 + 1e-9)).max(ctx.config.loss_floor) && !candidate.variables().is_empty() {
            terms = additive_terms(&candidate);
            current = (candidate, l);
            i = 0;
        } else {
            i += 1;
        }
    }
    if ctx.complexity(&current.0) < ctx.complexity(expr) {
        current
    } else {
        (expr.clone(), loss)
    }
}

/// Ring migration of each island's best members into its successor, plus
/// reinjection of random front entries.
fn migrate(islands: &mut [Island], front: &ParetoFront, config: &GPConfig, ctx: &Context<'_>, rng: &mut ChaCha8Rng) {
    let n = islands.len();
    let count = ((config.population_size as f64 * config.migration_fraction).round() as usize).max(1);
    if n > 1 {
        let outgoing: Vec<Vec<Individual>> = islands
            .iter()
            .map(|isl| isl.ranking().into_iter().take(count).map(|i| isl.members[i].clone()).collect())
            .collect();
        for i in 0..n {
            islands[i].receive(&outgoing[(i + n - 1) % n]);
        }
    }
    if front.is_empty() {
        return;
    }
    for isl in islands.iter_mut() {
        let picks: Vec<Individual> = (0..count.div_ceil(2))
            .map(|_| {
                let m = &front.entries()[rng.random_range(0..front.len())];
                Individual { expr: m.expr.clone(), loss: m.loss, complexity: ctx.complexity(&m.expr), birth: 0 }
            })
            .collect();
        // worst slots not just filled by ring migrants
        let ranking = isl.ranking();
        let skip = if n > 1 { count } else { 0 };
        for (slot, mut m) in ranking.iter().rev().skip(skip).zip(picks) {
            m.birth = isl.births;
            isl.births += 1;
            isl.members[*slot] = m;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_validate() {
        for p in Parameterization::ALL {
            GPConfig::new(p).validate().unwrap();
        }
        let mut c = GPConfig::new(Parameterization::Invariant);
        c.crossover_probability = 1.5;
        assert!(c.validate().is_err());
        c = GPConfig::new(Parameterization::Invariant);
        c.grammar = Grammar::stretch();
        assert!(c.validate().is_err());
    }
}
