//! Stress prediction, the normalized multi-mode loss, the parsimony penalty
//! and the physics constraints that reject inadmissible candidates.

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use thiserror::Error;

use crate::expr::{
    complexity, differentiate, evaluate, evaluate_batch, format_human, simplify, Bindings,
    BinaryOp, Columns, EvalError, Expr, Grammar, Var,
};
use crate::mechanics::{kinematics, stress, DerivativeBundle, KinematicState, LoadingMode};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Parameterization {
    Invariant,
    Stretch,
    Strain,
}

impl Parameterization {
    pub const ALL: [Parameterization; 3] =
        [Parameterization::Invariant, Parameterization::Stretch, Parameterization::Strain];

    pub fn name(self) -> &'static str {
        match self {
            Parameterization::Invariant => "invariant",
            Parameterization::Stretch => "stretch",
            Parameterization::Strain => "strain",
        }
    }

    /// Default search grammar.
    pub fn grammar(self) -> Grammar {
        match self {
            Parameterization::Invariant => Grammar::invariant(),
            Parameterization::Stretch => Grammar::stretch(),
            Parameterization::Strain => Grammar::strain(),
        }
    }

    /// Variables a stored model expression may use.
    pub fn variables(self) -> &'static [Var] {
        match self {
            Parameterization::Invariant => &[Var::U1, Var::U2],
            Parameterization::Stretch => &[Var::L1],
            Parameterization::Strain => &[Var::E1],
        }
    }

    /// Per-direction variables of the full additive energy.
    fn principal_variables(self) -> Option<[Var; 3]> {
        match self {
            Parameterization::Invariant => None,
            Parameterization::Stretch => Some([Var::L1, Var::L2, Var::L3]),
            Parameterization::Strain => Some([Var::E1, Var::E2, Var::E3]),
        }
    }

    /// Value of the single-direction variable in the undeformed state.
    fn neutral(self) -> f64 {
        match self {
            Parameterization::Stretch => 1.0,
            _ => 0.0,
        }
    }

    /// Maps a principal stretch onto the single-direction variable.
    fn principal_value(self, stretch: f64) -> f64 {
        match self {
            Parameterization::Strain => stretch - 1.0,
            _ => stretch,
        }
    }
}

impl fmt::Display for Parameterization {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown parameterization `{0}` (expected invariant, stretch or strain)")]
pub struct UnknownParameterization(pub String);

impl FromStr for Parameterization {
    type Err = UnknownParameterization;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "invariant" => Ok(Parameterization::Invariant),
            "stretch" => Ok(Parameterization::Stretch),
            "strain" => Ok(Parameterization::Strain),
            other => Err(UnknownParameterization(other.to_string())),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DataError {
    #[error("{mode}: {controls} controls but {stresses} stresses")]
    LengthMismatch { mode: LoadingMode, controls: usize, stresses: usize },
    #[error("{mode}: control {control} outside the mode's domain")]
    Domain { mode: LoadingMode, control: f64 },
    #[error("{mode}: non-finite value")]
    NonFinite { mode: LoadingMode },
    #[error("{mode}: weighted mode has no samples")]
    EmptyMode { mode: LoadingMode },
    #[error("{mode}: all stresses are zero")]
    ZeroMaxStress { mode: LoadingMode },
    #[error("{mode}: weight must be finite and non-negative, got {weight}")]
    BadWeight { mode: LoadingMode, weight: f64 },
    #[error("no loading mode carries data")]
    NoData,
    #[error("{mode}: {predicted} predictions for {observed} observations")]
    PredictionLength { mode: LoadingMode, predicted: usize, observed: usize },
}

/// One loading mode's (control, stress) samples.
#[derive(Debug, Clone, PartialEq)]
pub struct LoadingDataSet {
    pub mode: LoadingMode,
    /// λ for uniaxial modes, γ for shear.
    pub controls: Vec<f64>,
    pub stresses: Vec<f64>,
    pub weight: f64,
}

impl LoadingDataSet {
    pub fn new(mode: LoadingMode, controls: Vec<f64>, stresses: Vec<f64>) -> Result<Self, DataError> {
        if controls.len() != stresses.len() {
            return Err(DataError::LengthMismatch {
                mode,
                controls: controls.len(),
                stresses: stresses.len(),
            });
        }
        if let Some(&control) = controls.iter().find(|&&c| !mode.accepts(c)) {
            return Err(DataError::Domain { mode, control });
        }
        if stresses.iter().any(|s| !s.is_finite()) {
            return Err(DataError::NonFinite { mode });
        }
        let weight = if controls.is_empty() { 0.0 } else { 1.0 };
        Ok(LoadingDataSet { mode, controls, stresses, weight })
    }

    /// A mode without samples; it carries no weight.
    pub fn empty(mode: LoadingMode) -> Self {
        LoadingDataSet { mode, controls: Vec::new(), stresses: Vec::new(), weight: 0.0 }
    }

    pub fn with_weight(mut self, weight: f64) -> Self {
        self.weight = weight;
        self
    }

    pub fn len(&self) -> usize {
        self.controls.len()
    }

    pub fn is_empty(&self) -> bool {
        self.controls.is_empty()
    }

    pub fn max_abs_stress(&self) -> f64 {
        self.stresses.iter().fold(0.0, |m, s| m.max(s.abs()))
    }

    fn is_active(&self) -> bool {
        self.weight > 0.0
    }
}

/// Training data for the three loading modes, indexed by [`LoadingMode::index`].
#[derive(Debug, Clone, PartialEq)]
pub struct DataBundle {
    sets: [LoadingDataSet; 3],
}

impl DataBundle {
    /// Groups sets by mode; missing modes become empty sets, repeated modes
    /// are concatenated.
    pub fn from_sets(sets: impl IntoIterator<Item = LoadingDataSet>) -> Self {
        let mut out = LoadingMode::ALL.map(LoadingDataSet::empty);
        for s in sets {
            let slot = &mut out[s.mode.index()];
            let was_empty = slot.is_empty();
            slot.controls.extend_from_slice(&s.controls);
            slot.stresses.extend_from_slice(&s.stresses);
            if was_empty {
                slot.weight = s.weight;
            }
        }
        DataBundle { sets: out }
    }

    pub fn get(&self, mode: LoadingMode) -> &LoadingDataSet {
        &self.sets[mode.index()]
    }

    pub fn get_mut(&mut self, mode: LoadingMode) -> &mut LoadingDataSet {
        &mut self.sets[mode.index()]
    }

    pub fn sets(&self) -> &[LoadingDataSet; 3] {
        &self.sets
    }

    pub fn total_points(&self) -> usize {
        self.sets.iter().map(LoadingDataSet::len).sum()
    }

    pub fn set_weights(&mut self, weights: [f64; 3]) {
        for (s, w) in self.sets.iter_mut().zip(weights) {
            s.weight = w;
        }
    }

    /// Checks that the bundle can be scored.
    pub fn validate(&self) -> Result<(), DataError> {
        let mut any = false;
        for s in &self.sets {
            if !(s.weight >= 0.0) || !s.weight.is_finite() {
                return Err(DataError::BadWeight { mode: s.mode, weight: s.weight });
            }
            if s.controls.len() != s.stresses.len() {
                return Err(DataError::LengthMismatch {
                    mode: s.mode,
                    controls: s.controls.len(),
                    stresses: s.stresses.len(),
                });
            }
            if !s.is_active() {
                continue;
            }
            if s.is_empty() {
                return Err(DataError::EmptyMode { mode: s.mode });
            }
            if s.max_abs_stress() == 0.0 {
                return Err(DataError::ZeroMaxStress { mode: s.mode });
            }
            any = true;
        }
        if any {
            Ok(())
        } else {
            Err(DataError::NoData)
        }
    }
}

/// Weighted sum over modes of the mean squared error normalized by each
/// mode's largest observed stress magnitude. `predictions` is indexed like
/// the bundle; zero-weight modes are skipped.
pub fn normalized_mse(predictions: &[Vec<f64>], bundle: &DataBundle) -> Result<f64, DataError> {
    let mut total = 0.0;
    for set in bundle.sets() {
        if !set.is_active() {
            continue;
        }
        let pred = predictions.get(set.mode.index()).map(Vec::as_slice).unwrap_or(&[]);
        if pred.len() != set.len() {
            return Err(DataError::PredictionLength {
                mode: set.mode,
                predicted: pred.len(),
                observed: set.len(),
            });
        }
        if set.is_empty() {
            return Err(DataError::EmptyMode { mode: set.mode });
        }
        let pmax = set.max_abs_stress();
        if pmax == 0.0 {
            return Err(DataError::ZeroMaxStress { mode: set.mode });
        }
        total += set.weight * mode_term(pred, &set.stresses, pmax);
    }
    Ok(total)
}

fn mode_term(pred: &[f64], obs: &[f64], pmax: f64) -> f64 {
    let sum: f64 = pred.iter().zip(obs).map(|(p, o)| ((p - o) / pmax).powi(2)).sum();
    sum / obs.len() as f64
}

/// Exponentially decayed occurrence counts per complexity.
#[derive(Debug, Clone, PartialEq)]
pub struct ParsimonyState {
    counts: Vec<f64>,
    decay: f64,
    scale: f64,
}

impl ParsimonyState {
    pub fn new(decay: f64, scale: f64) -> Self {
        assert!(decay > 0.0 && decay < 1.0, "decay must lie in (0, 1)");
        ParsimonyState { counts: Vec::new(), decay, scale }
    }

    pub fn decay(&self) -> f64 {
        self.decay
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn count(&self, complexity: u32) -> f64 {
        self.counts.get(complexity as usize).copied().unwrap_or(0.0)
    }

    /// One generation: decays every count and adds the population's
    /// complexities.
    pub fn update(&mut self, complexities: impl IntoIterator<Item = u32>) {
        for c in &mut self.counts {
            *c *= self.decay;
        }
        for c in complexities {
            let c = c as usize;
            if self.counts.len() <= c {
                self.counts.resize(c + 1, 0.0);
            }
            self.counts[c] += 1.0;
        }
    }

    /// scale · count[C] / Σ count; zero for an empty state.
    pub fn frec(&self, complexity: u32) -> f64 {
        let total: f64 = self.counts.iter().sum();
        if total <= 0.0 {
            0.0
        } else {
            self.scale * self.count(complexity) / total
        }
    }
}

impl Default for ParsimonyState {
    fn default() -> Self {
        ParsimonyState::new(0.95, 1.0)
    }
}

pub fn penalized_loss(pred_loss: f64, complexity: u32, state: &ParsimonyState) -> f64 {
    pred_loss * state.frec(complexity).exp()
}

#[derive(Debug, Clone, Copy, PartialEq, Error)]
#[error("R² needs at least two observations with nonzero variance")]
pub struct ZeroVariance;

/// 1 − Σ(P − P*)² / Σ(P* − mean P*)².
pub fn r_squared(predictions: &[f64], observations: &[f64]) -> Result<f64, ZeroVariance> {
    let n = observations.len();
    if n < 2 || predictions.len() != n {
        return Err(ZeroVariance);
    }
    let mean = observations.iter().sum::<f64>() / n as f64;
    let ss_tot: f64 = observations.iter().map(|o| (o - mean).powi(2)).sum();
    if ss_tot == 0.0 {
        return Err(ZeroVariance);
    }
    let ss_res: f64 = predictions.iter().zip(observations).map(|(p, o)| (p - o).powi(2)).sum();
    Ok(1.0 - ss_res / ss_tot)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConstraintFailure {
    #[error("negative constant {0}")]
    NegativeConstant(f64),
    #[error("not a sum of power terms in the stretch")]
    NotMonomialSum,
    #[error("coefficient {coefficient} of exponent {exponent} is not positive")]
    NonPositiveCoefficient { exponent: i32, coefficient: f64 },
    #[error("exponent {0} outside the allowed range")]
    ExponentOutOfRange(i32),
    #[error("small-strain shear modulus {0} is not positive")]
    NonPositiveModulus(f64),
    #[error("constraint evaluation failed: {0}")]
    Eval(#[from] EvalError),
}

const MAX_LAURENT_TERMS: usize = 128;
const MAX_LAURENT_EXPONENT: i32 = 1000;

fn laurent_mul(a: &BTreeMap<i32, f64>, b: &BTreeMap<i32, f64>) -> Option<BTreeMap<i32, f64>> {
    let mut out = BTreeMap::new();
    for (&i, &x) in a {
        for (&j, &y) in b {
            let k = i.checked_add(j)?;
            if k.abs() > MAX_LAURENT_EXPONENT {
                return None;
            }
            *out.entry(k).or_insert(0.0) += x * y;
        }
    }
    (out.len() <= MAX_LAURENT_TERMS).then_some(out)
}

/// Expands `expr` into Σ c_k · var^k, or `None` when it is not a Laurent
/// polynomial in `var`.
pub fn laurent_expansion(expr: &Expr, var: Var) -> Option<BTreeMap<i32, f64>> {
    if !expr.contains_var(var) && expr.variables().is_empty() {
        let c = evaluate(expr, &Bindings::new()).ok()?;
        return Some(BTreeMap::from([(0, c)]));
    }
    match expr {
        Expr::Const(c) => Some(BTreeMap::from([(0, *c)])),
        Expr::Var(v) if *v == var => Some(BTreeMap::from([(1, 1.0)])),
        Expr::Var(_) | Expr::Unary(..) => None,
        Expr::Binary(BinaryOp::Add, a, b) => {
            let mut out = laurent_expansion(a, var)?;
            for (k, c) in laurent_expansion(b, var)? {
                *out.entry(k).or_insert(0.0) += c;
            }
            (out.len() <= MAX_LAURENT_TERMS).then_some(out)
        }
        Expr::Binary(BinaryOp::Mul, a, b) => {
            laurent_mul(&laurent_expansion(a, var)?, &laurent_expansion(b, var)?)
        }
        Expr::PowInt(a, n) => {
            let base = laurent_expansion(a, var)?;
            let n = *n;
            if n == 0 {
                return Some(BTreeMap::from([(0, 1.0)]));
            }
            if base.len() == 1 {
                let (&k, &c) = base.iter().next().unwrap();
                let k = k.checked_mul(n)?;
                if k.abs() > MAX_LAURENT_EXPONENT {
                    return None;
                }
                let c = c.powi(n);
                return c.is_finite().then(|| BTreeMap::from([(k, c)]));
            }
            if n < 0 || n > 64 {
                return None;
            }
            let mut acc = base.clone();
            for _ in 1..n {
                acc = laurent_mul(&acc, &base)?;
            }
            Some(acc)
        }
    }
}

/// Physics admissibility of a model term under its parameterization.
///
/// Invariant: every constant is non-negative. Stretch: the term expands to
/// Σ c_k λ^k with c_k > 0 for every k ≠ 0 and k inside `grammar`'s exponent
/// range. Strain: the small-strain shear modulus ½(f″(0) + f′(0)) is positive.
pub fn constraint_check(
    expr: &Expr,
    param: Parameterization,
    grammar: &Grammar,
) -> Result<(), ConstraintFailure> {
    match param {
        Parameterization::Invariant => match expr.constants().into_iter().find(|c| *c < 0.0) {
            Some(c) => Err(ConstraintFailure::NegativeConstant(c)),
            None => Ok(()),
        },
        Parameterization::Stretch => {
            let terms = laurent_expansion(expr, Var::L1).ok_or(ConstraintFailure::NotMonomialSum)?;
            for (&k, &c) in &terms {
                if k == 0 || c == 0.0 {
                    continue;
                }
                if !grammar.exponent_allowed(k) {
                    return Err(ConstraintFailure::ExponentOutOfRange(k));
                }
                if !(c > 0.0) {
                    return Err(ConstraintFailure::NonPositiveCoefficient { exponent: k, coefficient: c });
                }
            }
            Ok(())
        }
        Parameterization::Strain => {
            let mu = shear_modulus(expr)?;
            if mu > 0.0 {
                Ok(())
            } else {
                Err(ConstraintFailure::NonPositiveModulus(mu))
            }
        }
    }
}

/// ½(f″(0) + f′(0)) for a strain term f(ε).
pub fn shear_modulus(expr: &Expr) -> Result<f64, EvalError> {
    let d1 = differentiate(expr, Var::E1);
    let d2 = differentiate(&d1, Var::E1);
    let at = Bindings::new().with(Var::E1, 0.0);
    Ok(0.5 * (evaluate(&d2, &at)? + evaluate(&d1, &at)?))
}

/// Splits additive constants off the top-level sum, distributing constant
/// factors over nested sums: `c·(g + k)` gives `(c·g, c·k)`.
pub fn split_offset(expr: &Expr) -> (Expr, f64) {
    fn walk(e: &Expr, factor: f64, terms: &mut Vec<Expr>, offset: &mut f64) {
        match e {
            Expr::Const(c) => *offset += factor * c,
            Expr::Binary(BinaryOp::Add, a, b) => {
                walk(a, factor, terms, offset);
                walk(b, factor, terms, offset);
            }
            Expr::Binary(BinaryOp::Mul, a, b) if a.is_const() && matches!(**b, Expr::Binary(BinaryOp::Add, ..)) => {
                walk(b, factor * a.as_const().unwrap(), terms, offset);
            }
            other if factor == 1.0 => terms.push(other.clone()),
            other => terms.push(simplify(&Expr::mul(Expr::Const(factor), other.clone()))),
        }
    }
    let e = simplify(expr);
    let mut terms = Vec::new();
    let mut offset = 0.0;
    walk(&e, 1.0, &mut terms, &mut offset);
    let core = terms.into_iter().reduce(Expr::add).unwrap_or(Expr::Const(0.0));
    (simplify(&core), offset)
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ModelError {
    #[error("variable {var} is not available to {param} models")]
    WrongVariable { param: Parameterization, var: &'static str },
    #[error("energy is not a sum of identical single-direction terms")]
    NotAdditive,
    #[error(transparent)]
    Eval(#[from] EvalError),
}

/// A strain energy Ψ with fit diagnostics.
///
/// Invariant models store Ψ − offset in the shifted invariants. Stretch and
/// strain models store the single-direction term f so that
/// Ψ = f(x1) + f(x2) + f(x3) + offset.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyModel {
    pub expr: Expr,
    pub param: Parameterization,
    pub offset: f64,
    pub loss: f64,
    pub complexity: u32,
    pub score: Option<f64>,
}

impl EnergyModel {
    pub fn new(expr: Expr, param: Parameterization) -> Self {
        let c = complexity(&expr, &param.grammar()).unwrap_or(expr.node_count() as u32);
        EnergyModel { expr, param, offset: 0.0, loss: f64::INFINITY, complexity: c, score: None }
    }

    /// Builds a model from a complete energy expression.
    ///
    /// Stretch and strain energies may either use all three directions
    /// (`l1 l2 l3` / `e1 e2 e3`), in which case they must be additive and
    /// symmetric, or only the first one, which is then read as the
    /// single-direction term.
    pub fn from_full_expr(expr: &Expr, param: Parameterization) -> Result<Self, ModelError> {
        let allowed = match param.principal_variables() {
            Some(v) => v.to_vec(),
            None => param.variables().to_vec(),
        };
        for v in expr.variables() {
            if !allowed.contains(&v) {
                return Err(ModelError::WrongVariable { param, var: v.dsl_name() });
            }
        }
        let Some(vars) = param.principal_variables() else {
            return Ok(EnergyModel::new(simplify(expr), param));
        };
        if !expr.contains_var(vars[1]) && !expr.contains_var(vars[2]) {
            return Ok(EnergyModel::new(simplify(expr), param));
        }
        let neutral = Expr::Const(param.neutral());
        let term = simplify(&expr.substitute(vars[1], &neutral).substitute(vars[2], &neutral));
        let g = |x: f64| evaluate(&term, &Bindings::new().with(vars[0], x));
        let g_ref = g(param.neutral())?;
        let probes: [[f64; 3]; 3] = [[0.07, -0.04, 0.02], [-0.06, 0.09, -0.03], [0.11, 0.05, -0.08]];
        for p in probes {
            let x = p.map(|d| param.neutral() + d);
            let b = Bindings::new().with(vars[0], x[0]).with(vars[1], x[1]).with(vars[2], x[2]);
            let full = evaluate(expr, &b)?;
            let sum = g(x[0])? + g(x[1])? + g(x[2])? - 2.0 * g_ref;
            if (full - sum).abs() > 1e-9 * full.abs().max(1.0) {
                return Err(ModelError::NotAdditive);
            }
        }
        let mut m = EnergyModel::new(term, param);
        m.offset = -2.0 * g_ref;
        Ok(m)
    }

    /// Ψ at the principal stretches (λ1, λ2, λ3).
    pub fn energy(&self, stretches: [f64; 3]) -> Result<f64, EvalError> {
        let [a, b, c] = stretches;
        match self.param {
            Parameterization::Invariant => {
                let i1 = a * a + b * b + c * c;
                let i2 = a * a * b * b + b * b * c * c + c * c * a * a;
                self.energy_invariants(i1, i2)
            }
            _ => {
                let var = self.param.variables()[0];
                let mut total = self.offset;
                for s in stretches {
                    let x = self.param.principal_value(s);
                    total += evaluate(&self.expr, &Bindings::new().with(var, x))?;
                }
                Ok(total)
            }
        }
    }

    /// Ψ(I1, I2) of an invariant model.
    pub fn energy_invariants(&self, i1: f64, i2: f64) -> Result<f64, EvalError> {
        assert_eq!(self.param, Parameterization::Invariant);
        let b = Bindings::new().with(Var::U1, i1 - 3.0).with(Var::U2, i2 - 3.0);
        Ok(evaluate(&self.expr, &b)? + self.offset)
    }

    pub fn reference_energy(&self) -> Result<f64, EvalError> {
        self.energy([1.0; 3])
    }

    /// Ψ with additive constants moved into the offset and the offset chosen
    /// so that Ψ(reference) = 0. Stresses are unchanged.
    pub fn normalized(&self) -> Result<Self, EvalError> {
        let (core, _) = split_offset(&self.expr);
        let mut m = EnergyModel { expr: core, offset: 0.0, ..self.clone() };
        m.complexity = complexity(&m.expr, &m.param.grammar()).unwrap_or(m.expr.node_count() as u32);
        m.offset = -m.reference_energy()?;
        Ok(m)
    }

    /// The complete energy as one expression.
    pub fn full_expr(&self) -> Expr {
        let body = match self.param.principal_variables() {
            None => self.expr.clone(),
            Some(vars) => {
                let own = self.param.variables()[0];
                vars.iter()
                    .map(|v| self.expr.substitute(own, &Expr::var(*v)))
                    .reduce(Expr::add)
                    .unwrap()
            }
        };
        if self.offset == 0.0 {
            body
        } else {
            Expr::add(body, Expr::Const(self.offset))
        }
    }

    /// Readable Ψ with `sig` significant digits.
    pub fn describe(&self, sig: usize) -> String {
        format_human(&self.full_expr(), sig)
    }

    pub fn constraint_check(&self) -> Result<(), ConstraintFailure> {
        constraint_check(&self.expr, self.param, &self.param.grammar())
    }
}

/// Kinematic states and evaluation columns for a fixed set of loading
/// points, shared by every candidate scored against them.
#[derive(Debug, Clone)]
pub struct Prepared {
    param: Parameterization,
    points: Vec<(LoadingMode, KinematicState)>,
    /// Invariant: shifted I1 then shifted I2 columns. Otherwise one column
    /// holding the first principal value of every point followed by the
    /// second.
    columns: [Vec<f64>; 2],
}

impl Prepared {
    pub fn new(param: Parameterization, sets: &[&LoadingDataSet]) -> Result<Self, DataError> {
        let mut points = Vec::new();
        for s in sets {
            for &c in &s.controls {
                let state = kinematics(s.mode, c).map_err(|_| DataError::Domain { mode: s.mode, control: c })?;
                points.push((s.mode, state));
            }
        }
        let columns = match param {
            Parameterization::Invariant => [
                points.iter().map(|(_, s)| s.i1 - 3.0).collect(),
                points.iter().map(|(_, s)| s.i2 - 3.0).collect(),
            ],
            _ => {
                let mut x: Vec<f64> = points.iter().map(|(_, s)| param.principal_value(s.stretches[0])).collect();
                x.extend(points.iter().map(|(_, s)| param.principal_value(s.stretches[1])));
                [x, Vec::new()]
            }
        };
        Ok(Prepared { param, points, columns })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Predicted stress at every point, in input order.
    pub fn stresses(&self, expr: &Expr) -> Result<Vec<f64>, EvalError> {
        let n = self.points.len();
        match self.param {
            Parameterization::Invariant => {
                let cols = Columns::new(n)
                    .with(Var::U1, &self.columns[0])
                    .with(Var::U2, &self.columns[1]);
                // Ψ itself must be defined even where only its gradient is used.
                evaluate_batch(expr, &cols)?;
                let d1 = evaluate_batch(&differentiate(expr, Var::U1), &cols)?;
                let d2 = evaluate_batch(&differentiate(expr, Var::U2), &cols)?;
                Ok(self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, (mode, s))| {
                        stress(*mode, s, &DerivativeBundle::Invariant { d_i1: d1[i], d_i2: d2[i] })
                    })
                    .collect())
            }
            _ => {
                let var = self.param.variables()[0];
                let cols = Columns::new(2 * n).with(var, &self.columns[0]);
                evaluate_batch(expr, &cols)?;
                let df = evaluate_batch(&differentiate(expr, var), &cols)?;
                Ok(self
                    .points
                    .iter()
                    .enumerate()
                    .map(|(i, (mode, s))| stress(*mode, s, &DerivativeBundle::Principal([df[i], df[n + i]])))
                    .collect())
            }
        }
    }
}

/// Predicted nominal stress for every control of `data`.
pub fn predict_stress_curve(model: &EnergyModel, data: &LoadingDataSet) -> Result<Vec<f64>, EvalError> {
    let prepared = Prepared::new(model.param, &[data]).map_err(|_| EvalError::Domain("control outside mode domain"))?;
    prepared.stresses(&model.expr)
}

/// Prediction loss of candidate expressions against a fixed bundle.
#[derive(Debug, Clone)]
pub struct Objective {
    param: Parameterization,
    grammar: Grammar,
    bundle: DataBundle,
    prepared: Prepared,
    /// (start, end, weight / (N · Pmax²)) per active mode.
    blocks: Vec<(usize, usize, f64)>,
    observed: Vec<f64>,
}

impl Objective {
    pub fn new(param: Parameterization, grammar: Grammar, bundle: DataBundle) -> Result<Self, DataError> {
        bundle.validate()?;
        let active: Vec<&LoadingDataSet> = bundle.sets().iter().filter(|s| s.is_active()).collect();
        let prepared = Prepared::new(param, &active)?;
        let mut blocks = Vec::new();
        let mut observed = Vec::new();
        for s in &active {
            let start = observed.len();
            observed.extend_from_slice(&s.stresses);
            let pmax = s.max_abs_stress();
            blocks.push((start, observed.len(), s.weight / (s.len() as f64 * pmax * pmax)));
        }
        Ok(Objective { param, grammar, bundle, prepared, blocks, observed })
    }

    pub fn param(&self) -> Parameterization {
        self.param
    }

    pub fn grammar(&self) -> &Grammar {
        &self.grammar
    }

    pub fn bundle(&self) -> &DataBundle {
        &self.bundle
    }

    /// Normalized MSE ignoring physics constraints; +∞ on any domain error.
    pub fn prediction_loss(&self, expr: &Expr) -> f64 {
        let Ok(pred) = self.prepared.stresses(expr) else {
            return f64::INFINITY;
        };
        let mut total = 0.0;
        for &(start, end, factor) in &self.blocks {
            let sum: f64 = pred[start..end]
                .iter()
                .zip(&self.observed[start..end])
                .map(|(p, o)| (p - o) * (p - o))
                .sum();
            total += factor * sum;
        }
        if total.is_finite() {
            total
        } else {
            f64::INFINITY
        }
    }

    /// Weighted stress residuals whose squares sum to the loss; `None` when
    /// the candidate violates a constraint or cannot be evaluated.
    pub fn residuals(&self, expr: &Expr) -> Option<Vec<f64>> {
        if constraint_check(expr, self.param, &self.grammar).is_err() {
            return None;
        }
        let pred = self.prepared.stresses(expr).ok()?;
        let mut out = Vec::with_capacity(pred.len());
        for &(start, end, factor) in &self.blocks {
            let w = factor.sqrt();
            out.extend(pred[start..end].iter().zip(&self.observed[start..end]).map(|(p, o)| w * (p - o)));
        }
        out.iter().all(|r| r.is_finite()).then_some(out)
    }

    /// Prediction loss, or +∞ when the candidate violates a physics
    /// constraint.
    pub fn loss(&self, expr: &Expr) -> f64 {
        if constraint_check(expr, self.param, &self.grammar).is_err() {
            return f64::INFINITY;
        }
        self.prediction_loss(expr)
    }

    /// Per-mode predictions, indexed like the bundle.
    pub fn predictions(&self, expr: &Expr) -> Result<Vec<Vec<f64>>, EvalError> {
        let mut out = Vec::new();
        for set in self.bundle.sets() {
            if set.is_empty() {
                out.push(Vec::new());
            } else {
                out.push(Prepared::new(self.param, &[set]).expect("validated").stresses(expr)?);
            }
        }
        Ok(out)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::parse_expr;

    fn set(mode: LoadingMode, c: &[f64], s: &[f64]) -> LoadingDataSet {
        LoadingDataSet::new(mode, c.to_vec(), s.to_vec()).unwrap()
    }

    #[test]
    fn mse_micro_case() {
        // observed 1, predicted 2, Pmax = 1
        let b = DataBundle::from_sets([set(LoadingMode::UniaxialTension, &[1.1], &[1.0])]);
        assert_eq!(normalized_mse(&[vec![2.0], vec![], vec![]], &b).unwrap(), 1.0);
        assert_eq!(normalized_mse(&[vec![1.0], vec![], vec![]], &b).unwrap(), 0.0);
    }

    #[test]
    fn mse_is_mode_scale_invariant() {
        let b = DataBundle::from_sets([set(LoadingMode::SimpleShear, &[0.1, 0.2], &[1.0, -3.0])]);
        let b2 = DataBundle::from_sets([set(LoadingMode::SimpleShear, &[0.1, 0.2], &[2.0, -6.0])]);
        let l1 = normalized_mse(&[vec![], vec![], vec![1.5, -2.0]], &b).unwrap();
        let l2 = normalized_mse(&[vec![], vec![], vec![3.0, -4.0]], &b2).unwrap();
        assert!((l1 - l2).abs() <= 1e-15);
    }

    #[test]
    fn zero_max_stress_is_an_error() {
        let b = DataBundle::from_sets([set(LoadingMode::SimpleShear, &[0.1], &[0.0])]);
        assert!(matches!(normalized_mse(&[vec![], vec![], vec![0.0]], &b), Err(DataError::ZeroMaxStress { .. })));
    }

    #[test]
    fn parsimony_penalty() {
        let state = ParsimonyState::default();
        assert_eq!(penalized_loss(0.1, 5, &state), 0.1);
        let mut state = ParsimonyState::new(0.5, std::f64::consts::LN_2);
        state.update([7, 7]);
        assert!((penalized_loss(0.1, 7, &state) - 0.2).abs() <= 1e-12);
        state.update([3]);
        // counts: 7 -> 1.0, 3 -> 1.0
        assert!((state.frec(3) - std::f64::consts::LN_2 / 2.0).abs() <= 1e-15);
    }

    #[test]
    fn r_squared_examples() {
        assert_eq!(r_squared(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap(), 1.0);
        assert_eq!(r_squared(&[2.0, 2.0, 2.0], &[1.0, 2.0, 3.0]).unwrap(), 0.0);
        assert_eq!(r_squared(&[1.0, 2.0, 4.0], &[1.0, 2.0, 3.0]).unwrap(), 0.5);
        assert_eq!(r_squared(&[1.0, 1.0], &[1.0, 1.0]), Err(ZeroVariance));
    }

    #[test]
    fn constraint_examples() {
        let g = Grammar::invariant();
        let e = parse_expr("0.5*(I1-3) + -0.5*(I2-3)").unwrap();
        assert!(matches!(
            constraint_check(&e, Parameterization::Invariant, &g),
            Err(ConstraintFailure::NegativeConstant(_))
        ));
        let strain = parse_expr("2820.76*e1^6 + 43.27*e1^4 - 13.72*e1^3 + 1.37*e1^2").unwrap();
        assert!((shear_modulus(&strain).unwrap() - 1.37).abs() < 1e-12);
        assert!(constraint_check(&strain, Parameterization::Strain, &Grammar::strain()).is_ok());
        let ogden = parse_expr("0.01*l1^-18").unwrap();
        assert!(constraint_check(&ogden, Parameterization::Stretch, &Grammar::stretch()).is_ok());
        let bad = parse_expr("0.01*l1^-18 - 0.02*l1^3").unwrap();
        assert!(constraint_check(&bad, Parameterization::Stretch, &Grammar::stretch()).is_err());
        let nonpoly = parse_expr("exp(l1)").unwrap();
        assert_eq!(
            constraint_check(&nonpoly, Parameterization::Stretch, &Grammar::stretch()),
            Err(ConstraintFailure::NotMonomialSum)
        );
    }

    #[test]
    fn laurent_expansion_of_products() {
        let e = parse_expr("(l1^2 + 2)*(3*l1^-1)").unwrap();
        let t = laurent_expansion(&e, Var::L1).unwrap();
        assert_eq!(t, BTreeMap::from([(-1, 6.0), (1, 3.0)]));
        let e = parse_expr("(l1 + 1)^2").unwrap();
        let t = laurent_expansion(&e, Var::L1).unwrap();
        assert_eq!(t, BTreeMap::from([(0, 1.0), (1, 2.0), (2, 1.0)]));
    }

    #[test]
    fn split_offset_distributes_constant_factors() {
        let e = parse_expr("0.017*(exp(27.91*(I2-3)) - 1)").unwrap();
        let (core, k) = split_offset(&e);
        assert_eq!(core, parse_expr("0.017*exp(27.91*(I2-3))").unwrap());
        assert!((k + 0.017).abs() < 1e-15);
    }

    #[test]
    fn full_stretch_energy_reduces_to_its_term() {
        let e = parse_expr("0.01*(l1^-18 + l2^-18 + l3^-18 - 3)").unwrap();
        let m = EnergyModel::from_full_expr(&e, Parameterization::Stretch).unwrap();
        let x = [1.07, 0.96, 1.0 / (1.07 * 0.96)];
        let direct = 0.01 * (x.iter().map(|l: &f64| l.powi(-18)).sum::<f64>() - 3.0);
        assert!((m.energy(x).unwrap() - direct).abs() < 1e-13);
        let n = m.normalized().unwrap();
        assert!(n.reference_energy().unwrap().abs() < 1e-15);
        assert_eq!(n.expr, parse_expr("0.01*l1^-18").unwrap());
        let bad = parse_expr("l1*l2").unwrap();
        assert_eq!(EnergyModel::from_full_expr(&bad, Parameterization::Stretch), Err(ModelError::NotAdditive));
    }

    #[test]
    fn gent_predictions() {
        let gent = EnergyModel::new(parse_expr("1.9*ln1m(1.2*(I1-3))").unwrap(), Parameterization::Invariant);
        let data = set(LoadingMode::UniaxialTension, &[1.05, 1.1], &[0.0, 0.0]);
        let p = predict_stress_curve(&gent, &data).unwrap();
        assert!((p[0] - 0.657677).abs() < 5e-7);
        assert!((p[1] - 1.291066).abs() < 5e-7);
        let psi_c = EnergyModel::new(parse_expr("0.017*exp(27.91*(I2-3))").unwrap(), Parameterization::Invariant);
        let shear = set(LoadingMode::SimpleShear, &[0.0, 0.2], &[0.0, 0.0]);
        let p = predict_stress_curve(&psi_c, &shear).unwrap();
        assert_eq!(p[0], 0.0);
        assert!((p[1] - 0.579582).abs() < 5e-7);
    }

    #[test]
    fn domain_errors_become_infinite_loss() {
        let bundle = DataBundle::from_sets([set(LoadingMode::UniaxialTension, &[1.1, 1.5], &[1.0, 2.0])]);
        let obj = Objective::new(Parameterization::Invariant, Grammar::invariant(), bundle).unwrap();
        // ln1m argument exceeds 1 at λ = 1.5
        let e = parse_expr("ln1m(2*(I1-3))").unwrap();
        assert_eq!(obj.loss(&e), f64::INFINITY);
    }

    #[test]
    fn objective_matches_reference_loss() {
        let bundle = DataBundle::from_sets([
            set(LoadingMode::UniaxialTension, &[1.05, 1.1], &[0.6, 1.2]),
            set(LoadingMode::UniaxialCompression, &[0.9, 0.95], &[-1.5, -0.7]),
            set(LoadingMode::SimpleShear, &[0.1, 0.2], &[0.4, 0.9]),
        ]);
        let e = parse_expr("1.9*ln1m(1.2*(I1-3))").unwrap();
        let obj = Objective::new(Parameterization::Invariant, Grammar::invariant(), bundle.clone()).unwrap();
        let pred = obj.predictions(&e).unwrap();
        let reference = normalized_mse(&pred, &bundle).unwrap();
        assert!((obj.loss(&e) - reference).abs() <= 1e-15 * reference.max(1.0));
    }
}
