//! Admissibility audits of a fitted energy: principal Hessians, energy
//! surfaces with a discrete convexity test, coercivity along a loading path
//! and normalization.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use thiserror::Error;

use crate::expr::{differentiate, evaluate, Bindings, BinaryOp, EvalError, Expr, UnaryOp};
use crate::mechanics::{kinematics, LoadingMode};
use crate::objective::{shear_modulus, DataBundle, EnergyModel, Parameterization};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConvexityError {
    #[error("principal Hessians need an additive stretch or strain model")]
    NotAdditive,
    #[error("stretches must be positive, got {0:?}")]
    NonPositiveStretch([f64; 3]),
    #[error("empty range [{lo}, {hi}] or fewer than 3 steps")]
    EmptyRange { lo: f64, hi: f64 },
    #[error(transparent)]
    Domain(#[from] EvalError),
}

/// f″ of the single-direction term: ∂²Ψ/∂λᵢ² = f″(xᵢ) with xᵢ = λᵢ for
/// stretch models and λᵢ − 1 for strain models.
pub fn second_derivative(model: &EnergyModel) -> Result<Expr, ConvexityError> {
    if model.param == Parameterization::Invariant {
        return Err(ConvexityError::NotAdditive);
    }
    let v = model.param.variables()[0];
    Ok(differentiate(&differentiate(&model.expr, v), v))
}

fn principal_value(param: Parameterization, stretch: f64) -> f64 {
    match param {
        Parameterization::Strain => stretch - 1.0,
        _ => stretch,
    }
}

/// Diagonal of the principal Hessian of an additive model; the
/// off-diagonal entries vanish identically.
pub fn hessian_diagonal(model: &EnergyModel, stretches: [f64; 3]) -> Result<[f64; 3], ConvexityError> {
    let f2 = second_derivative(model)?;
    diagonal_with(&f2, model, stretches)
}

fn diagonal_with(f2: &Expr, model: &EnergyModel, stretches: [f64; 3]) -> Result<[f64; 3], ConvexityError> {
    if stretches.iter().any(|s| !(*s > 0.0)) {
        return Err(ConvexityError::NonPositiveStretch(stretches));
    }
    let v = model.param.variables()[0];
    let mut out = [0.0; 3];
    for (o, s) in out.iter_mut().zip(stretches) {
        *o = evaluate(f2, &Bindings::new().with(v, principal_value(model.param, s)))?;
    }
    Ok(out)
}

/// Principal-stretch triples induced by every control of `bundle`, or by
/// λ ∈ [0.9, 1.1] and γ ∈ [0, 0.2] (21 samples each) without data.
pub fn hessian_points(bundle: Option<&DataBundle>) -> Vec<[f64; 3]> {
    let mut out = Vec::new();
    match bundle {
        Some(b) => {
            for set in b.sets() {
                for &c in &set.controls {
                    if let Ok(k) = kinematics(set.mode, c) {
                        out.push(k.stretches);
                    }
                }
            }
        }
        None => {
            for i in 0..=20 {
                let lambda = 0.9 + 0.01 * i as f64;
                let mode = if lambda >= 1.0 { LoadingMode::UniaxialTension } else { LoadingMode::UniaxialCompression };
                let k = if lambda == 1.0 { kinematics(LoadingMode::SimpleShear, 0.0) } else { kinematics(mode, lambda) };
                out.push(k.expect("grid inside domain").stretches);
            }
            for i in 1..=20 {
                let gamma = 0.01 * i as f64;
                out.push(kinematics(LoadingMode::SimpleShear, gamma).expect("γ ≥ 0").stretches);
            }
        }
    }
    out
}

/// Principal Hessian diagonal at one evaluation point; `None` where the
/// model could not be evaluated.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSample {
    pub stretches: [f64; 3],
    pub diagonal: Option<[f64; 3]>,
}

impl HessianSample {
    pub fn determinant(&self) -> Option<f64> {
        self.diagonal.map(|d| d[0] * d[1] * d[2])
    }
}

/// Aggregated principal Hessian of an additive model.
#[derive(Debug, Clone, PartialEq)]
pub struct HessianSummary {
    pub samples: Vec<HessianSample>,
    pub min_determinant: f64,
    /// Smallest value of each diagonal entry over all points.
    pub min_eigenvalues: [f64; 3],
    pub positive_definite: bool,
    /// Stretches of the first point with a non-positive entry.
    pub first_failure: Option<[f64; 3]>,
    pub domain_failures: usize,
}

impl HessianSummary {
    fn from_samples(samples: Vec<HessianSample>) -> Self {
        let mut min_determinant = f64::INFINITY;
        let mut min_eigenvalues = [f64::INFINITY; 3];
        let mut first_failure = None;
        let mut domain_failures = 0;
        for s in &samples {
            match s.diagonal {
                Some(d) => {
                    min_determinant = min_determinant.min(d[0] * d[1] * d[2]);
                    for (m, v) in min_eigenvalues.iter_mut().zip(d) {
                        *m = m.min(v);
                    }
                    if first_failure.is_none() && d.iter().any(|v| !(*v > 0.0)) {
                        first_failure = Some(s.stretches);
                    }
                }
                None => domain_failures += 1,
            }
        }
        let positive_definite = first_failure.is_none() && domain_failures == 0 && !samples.is_empty();
        HessianSummary { samples, min_determinant, min_eigenvalues, positive_definite, first_failure, domain_failures }
    }
}

/// Whether Ψ keeps growing along a path of increasing deformation.
#[derive(Debug, Clone, PartialEq)]
pub enum CoercivityVerdict {
    Increasing,
    /// Ψ stops increasing at path index `at`.
    Violated { at: usize, psi: f64, previous: f64 },
}

impl CoercivityVerdict {
    pub fn is_increasing(&self) -> bool {
        matches!(self, CoercivityVerdict::Increasing)
    }
}

impl fmt::Display for CoercivityVerdict {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            CoercivityVerdict::Increasing => f.write_str("increasing"),
            CoercivityVerdict::Violated { at, psi, previous } => {
                write!(f, "bounded/violated at sample {at} (psi {psi:e} after {previous:e})")
            }
        }
    }
}

/// Equi-biaxial incompressible path λ1 = λ2 = t, λ3 = 1/t², t from 1 to
/// `t_max` in `samples` steps.
pub fn equibiaxial_path(t_max: f64, samples: usize) -> Vec<[f64; 3]> {
    let n = samples.max(2);
    (0..n)
        .map(|i| {
            let t = 1.0 + (t_max - 1.0) * i as f64 / (n - 1) as f64;
            [t, t, 1.0 / (t * t)]
        })
        .collect()
}

/// Ψ must be finite and strictly increasing over the last quarter of `path`.
pub fn coercivity_check(model: &EnergyModel, path: &[[f64; 3]]) -> CoercivityVerdict {
    let start = path.len() - path.len().div_ceil(4).max(2).min(path.len());
    let mut previous = f64::NEG_INFINITY;
    for (i, s) in path.iter().enumerate().skip(start) {
        let psi = model.energy(*s).unwrap_or(f64::NAN);
        if !(psi.is_finite() && psi > previous) {
            return CoercivityVerdict::Violated { at: i, psi, previous };
        }
        previous = psi;
    }
    CoercivityVerdict::Increasing
}

/// Ψ − Ψ(reference); stresses are unchanged.
pub fn normalize_energy(model: &EnergyModel) -> Result<EnergyModel, ConvexityError> {
    Ok(model.normalized()?)
}

/// Sufficient condition for polyconvexity of an invariant model: Ψ is
/// built from non-negative constants, the shifted invariants, sums,
/// products with a constant factor, `exp`, `ln1m`, and `square`, `cube` or
/// integer powers of non-negative arguments. Every such term is convex and
/// non-decreasing in (I1 − 3, I2 − 3) ≥ 0.
pub fn certify_invariant(expr: &Expr) -> bool {
    lower_bound(expr).is_some()
}

/// Value at the origin (the minimum over the non-negative orthant) of a
/// convex non-decreasing expression; `None` when not certified.
fn lower_bound(e: &Expr) -> Option<f64> {
    match e {
        Expr::Const(c) => (*c >= 0.0).then_some(*c),
        Expr::Var(_) => Some(0.0),
        Expr::Binary(BinaryOp::Add, a, b) => Some(lower_bound(a)? + lower_bound(b)?),
        Expr::Binary(BinaryOp::Mul, a, b) => match (a.as_const(), b.as_const()) {
            (Some(c), _) if c >= 0.0 => Some(c * lower_bound(b)?),
            (_, Some(c)) if c >= 0.0 => Some(c * lower_bound(a)?),
            _ => None,
        },
        Expr::Unary(UnaryOp::Exp, a) => Some(lower_bound(a)?.exp()),
        Expr::Unary(UnaryOp::LnX, a) => {
            let lo = lower_bound(a)?;
            (lo < 1.0).then(|| -(1.0 - lo).ln())
        }
        Expr::Unary(UnaryOp::Square, a) => Some(lower_bound(a)?.powi(2)),
        Expr::Unary(UnaryOp::Cube, a) => Some(lower_bound(a)?.powi(3)),
        Expr::PowInt(a, n) if *n >= 1 => Some(lower_bound(a)?.powi(*n)),
        Expr::PowInt(..) => None,
    }
}

/// How λ3 follows from (λ1, λ2) on an energy surface.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SurfaceConstraint {
    /// λ3 = 1/(λ1 λ2).
    Incompressible,
    /// λ3 = 1.
    PlaneStrain,
}

impl SurfaceConstraint {
    pub fn third(self, l1: f64, l2: f64) -> f64 {
        match self {
            SurfaceConstraint::Incompressible => 1.0 / (l1 * l2),
            SurfaceConstraint::PlaneStrain => 1.0,
        }
    }
}

impl fmt::Display for SurfaceConstraint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SurfaceConstraint::Incompressible => "incompressible",
            SurfaceConstraint::PlaneStrain => "plane-strain",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown constraint `{0}` (expected incompressible or plane-strain)")]
pub struct UnknownConstraint(pub String);

impl FromStr for SurfaceConstraint {
    type Err = UnknownConstraint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim() {
            "incompressible" => Ok(SurfaceConstraint::Incompressible),
            "plane-strain" | "plane_strain" => Ok(SurfaceConstraint::PlaneStrain),
            other => Err(UnknownConstraint(other.to_string())),
        }
    }
}

/// Ψ on a rectangular (λ1, λ2) grid.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergySurface {
    pub lambda1: Vec<f64>,
    pub lambda2: Vec<f64>,
    /// `psi[i][j]` at (λ1[i], λ2[j]); `None` where evaluation failed.
    pub psi: Vec<Vec<Option<f64>>>,
    pub constraint: SurfaceConstraint,
}

/// Outcome of the discrete convexity test on a surface.
#[derive(Debug, Clone, PartialEq)]
pub struct GridVerdict {
    pub convex: bool,
    /// (λ1, λ2) of the first interior node whose finite-difference Hessian
    /// is not positive semi-definite.
    pub first_failure: Option<(f64, f64)>,
    pub failures: usize,
    pub domain_failures: usize,
}

fn linspace(lo: f64, hi: f64, steps: usize) -> Vec<f64> {
    (0..steps).map(|i| lo + (hi - lo) * i as f64 / (steps - 1) as f64).collect()
}

/// Evaluates Ψ on `steps × steps` nodes spanning both ranges.
pub fn energy_surface(
    model: &EnergyModel,
    range1: (f64, f64),
    range2: (f64, f64),
    steps: usize,
    constraint: SurfaceConstraint,
) -> Result<EnergySurface, ConvexityError> {
    for (lo, hi) in [range1, range2] {
        if !(lo > 0.0 && hi > lo && hi.is_finite()) || steps < 3 {
            return Err(ConvexityError::EmptyRange { lo, hi });
        }
    }
    let lambda1 = linspace(range1.0, range1.1, steps);
    let lambda2 = linspace(range2.0, range2.1, steps);
    let psi = lambda1
        .par_iter()
        .map(|&a| {
            lambda2
                .iter()
                .map(|&b| model.energy([a, b, constraint.third(a, b)]).ok().filter(|v| v.is_finite()))
                .collect()
        })
        .collect();
    Ok(EnergySurface { lambda1, lambda2, psi, constraint })
}

impl EnergySurface {
    /// Grid node with the smallest Ψ: (λ1, λ2, Ψ).
    pub fn minimum(&self) -> Option<(f64, f64, f64)> {
        let mut best: Option<(f64, f64, f64)> = None;
        for (i, row) in self.psi.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                if let Some(v) = *v {
                    if best.is_none_or(|b| v < b.2) {
                        best = Some((self.lambda1[i], self.lambda2[j], v));
                    }
                }
            }
        }
        best
    }

    pub fn domain_failures(&self) -> usize {
        self.psi.iter().flatten().filter(|v| v.is_none()).count()
    }

    /// Second differences along both axes and both diagonals at every
    /// interior node; a convex function has none negative. Unlike a
    /// difference Hessian this has no truncation error, so flat minima of
    /// quartic energies are not misread. Round-off slack is 1e−9 · max|Ψ|.
    pub fn grid_convexity(&self) -> GridVerdict {
        let (n1, n2) = (self.lambda1.len(), self.lambda2.len());
        let scale = self.psi.iter().flatten().flatten().fold(0.0f64, |m, v| m.max(v.abs()));
        let tol = 1e-9 * scale;
        let mut first_failure = None;
        let mut failures = 0;
        for i in 1..n1 - 1 {
            for j in 1..n2 - 1 {
                let at = |di: isize, dj: isize| self.psi[(i as isize + di) as usize][(j as isize + dj) as usize];
                let Some(centre) = at(0, 0) else {
                    continue;
                };
                let ok = [(1, 0), (0, 1), (1, 1), (1, -1)].iter().all(|&(di, dj)| match (at(di, dj), at(-di, -dj)) {
                    (Some(a), Some(b)) => a + b - 2.0 * centre >= -tol,
                    _ => true,
                });
                if !ok {
                    failures += 1;
                    first_failure.get_or_insert((self.lambda1[i], self.lambda2[j]));
                }
            }
        }
        let domain_failures = self.domain_failures();
        GridVerdict { convex: failures == 0 && domain_failures == 0, first_failure, failures, domain_failures }
    }

    /// `lambda1,lambda2,psi,flag` rows; flag is 1 where Ψ could not be
    /// evaluated (psi is then `nan`).
    pub fn to_csv(&self) -> String {
        let mut out = String::from("lambda1,lambda2,psi,flag\n");
        for (i, row) in self.psi.iter().enumerate() {
            for (j, v) in row.iter().enumerate() {
                let (p, flag) = match v {
                    Some(v) => (format!("{v:?}"), 0),
                    None => ("nan".to_string(), 1),
                };
                out.push_str(&format!("{:?},{:?},{p},{flag}\n", self.lambda1[i], self.lambda2[j]));
            }
        }
        out
    }
}

/// Complete admissibility audit of one model.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvexityReport {
    pub param: Parameterization,
    /// Principal Hessian over the evaluation points (stretch and strain).
    pub hessian: Option<HessianSummary>,
    /// Structural polyconvexity certificate (invariant).
    pub structural: Option<bool>,
    /// Discrete convexity of the incompressible surface around the
    /// evaluation range.
    pub grid: GridVerdict,
    pub coercivity: CoercivityVerdict,
    /// μ = ½(f″(0) + f′(0)) (strain).
    pub shear_modulus: Option<f64>,
    /// Ψ at the reference state.
    pub normalization_residual: f64,
}

impl ConvexityReport {
    pub fn positive_definite(&self) -> Option<bool> {
        self.hessian.as_ref().map(|h| h.positive_definite)
    }

    /// All available convexity evidence agrees.
    pub fn convex(&self) -> bool {
        self.positive_definite().unwrap_or(true) && self.structural.unwrap_or(true) && self.grid.convex
    }

    pub fn consistent(&self) -> bool {
        self.shear_modulus.is_none_or(|mu| mu > 0.0)
    }
}

fn yes_no(b: bool) -> &'static str {
    if b {
        "Yes"
    } else {
        "No"
    }
}

impl fmt::Display for ConvexityReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "parameterization: {}", self.param)?;
        if let Some(h) = &self.hessian {
            writeln!(f, "min(det[H]): {:.6}", h.min_determinant)?;
            for (i, v) in h.min_eigenvalues.iter().enumerate() {
                writeln!(f, "min(d2Psi/dlambda{}^2): {:.6}", i + 1, v)?;
            }
            writeln!(f, "positive definite: {}", yes_no(h.positive_definite))?;
            if let Some(p) = h.first_failure {
                writeln!(f, "first non-positive point: {p:?}")?;
            }
            if h.domain_failures > 0 {
                writeln!(f, "hessian domain failures: {}", h.domain_failures)?;
            }
        }
        if let Some(s) = self.structural {
            writeln!(f, "structurally polyconvex: {}", yes_no(s))?;
        }
        writeln!(f, "grid convex: {}", yes_no(self.grid.convex))?;
        if let Some((a, b)) = self.grid.first_failure {
            writeln!(f, "first non-convex cell: ({a}, {b}) of {} failing", self.grid.failures)?;
        }
        if self.grid.domain_failures > 0 {
            writeln!(f, "grid domain failures: {}", self.grid.domain_failures)?;
        }
        writeln!(f, "convexity of psi: {}", yes_no(self.convex()))?;
        writeln!(f, "coercivity: {}", self.coercivity)?;
        if let Some(mu) = self.shear_modulus {
            writeln!(f, "shear modulus: {mu:.6} (consistent: {})", yes_no(mu > 0.0))?;
        }
        write!(f, "normalization residual: {:e}", self.normalization_residual)
    }
}

/// Audit settings: the surface grid tested for convexity and the
/// equi-biaxial coercivity path.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AuditSettings {
    pub range: (f64, f64),
    pub steps: usize,
    pub constraint: SurfaceConstraint,
    pub coercivity_stretch: f64,
}

impl Default for AuditSettings {
    fn default() -> Self {
        AuditSettings {
            range: (0.9, 1.1),
            steps: 101,
            constraint: SurfaceConstraint::Incompressible,
            coercivity_stretch: 1.2,
        }
    }
}

/// Audits `model` at the given principal-stretch points. Evaluation
/// failures are recorded rather than aborting.
pub fn convexity_report(
    model: &EnergyModel,
    points: &[[f64; 3]],
    settings: &AuditSettings,
) -> Result<ConvexityReport, ConvexityError> {
    let hessian = match model.param {
        Parameterization::Invariant => None,
        _ => {
            let f2 = second_derivative(model)?;
            let samples = points
                .iter()
                .map(|&s| HessianSample { stretches: s, diagonal: diagonal_with(&f2, model, s).ok() })
                .collect();
            Some(HessianSummary::from_samples(samples))
        }
    };
    let structural = (model.param == Parameterization::Invariant).then(|| certify_invariant(&model.expr));
    let surface = energy_surface(model, settings.range, settings.range, settings.steps, settings.constraint)?;
    let path = equibiaxial_path(settings.coercivity_stretch, 41);
    let shear = match model.param {
        Parameterization::Strain => Some(shear_modulus(&model.expr)?),
        _ => None,
    };
    Ok(ConvexityReport {
        param: model.param,
        hessian,
        structural,
        grid: surface.grid_convexity(),
        coercivity: coercivity_check(model, &path),
        shear_modulus: shear,
        normalization_residual: model.reference_energy().unwrap_or(f64::NAN),
    })
}
