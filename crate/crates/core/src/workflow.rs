//! End-to-end pipelines shared by the command line and the acceptance
//! suite: discovery with reporting, noise robustness sweeps and fitted
//! curve export.

use std::fmt::Write as _;

use thiserror::Error;

use crate::convexity::{convexity_report, hessian_points, AuditSettings, ConvexityError, ConvexityReport};
use crate::datagen::{add_noise, generate_synthetic, GenerationError, GenerationRanges, NoiseSpec};
use crate::evolution::{evolve_with, EvolveError, GPConfig, ParetoFront, Progress};
use crate::expr::{constants_match, form_matches, format_expr, EvalError};
use crate::mechanics::LoadingMode;
use crate::objective::{predict_stress_curve, r_squared, DataBundle, EnergyModel, LoadingDataSet};

#[derive(Debug, Error)]
pub enum WorkflowError {
    #[error(transparent)]
    Evolve(#[from] EvolveError),
    #[error(transparent)]
    Generation(#[from] GenerationError),
    #[error("evolution produced an empty front")]
    EmptyFront,
    #[error("model cannot be evaluated on the data: {0}")]
    Numerical(#[from] EvalError),
    #[error("dense grid needs at least 2 points, got {0}")]
    Resolution(usize),
}

/// Everything a discovery run reports.
#[derive(Debug, Clone)]
pub struct Discovery {
    pub front: ParetoFront,
    pub best: EnergyModel,
    /// Per mode, indexed like [`LoadingMode::ALL`]; `None` for empty modes
    /// or modes without stress variance.
    pub r2: [Option<f64>; 3],
    pub convexity: Result<ConvexityReport, ConvexityError>,
    pub generations: usize,
    pub evaluations: u64,
}

pub fn discover(
    config: &GPConfig,
    bundle: &DataBundle,
    progress: impl Fn(&Progress) + Sync,
) -> Result<Discovery, WorkflowError> {
    let result = evolve_with(config, bundle, progress)?;
    let best = result.best(config.loss_floor).cloned().ok_or(WorkflowError::EmptyFront)?;
    let r2 = mode_r2(&best, bundle);
    let convexity = convexity_report(&best, &hessian_points(Some(bundle)), &AuditSettings::default());
    Ok(Discovery {
        front: result.front,
        best,
        r2,
        convexity,
        generations: result.generations,
        evaluations: result.evaluations,
    })
}

/// Coefficient of determination per loading mode.
pub fn mode_r2(model: &EnergyModel, bundle: &DataBundle) -> [Option<f64>; 3] {
    let mut out = [None; 3];
    for (slot, set) in out.iter_mut().zip(bundle.sets()) {
        if set.is_empty() {
            continue;
        }
        if let Ok(pred) = predict_stress_curve(model, set) {
            *slot = r_squared(&pred, &set.stresses).ok();
        }
    }
    out
}

/// `complexity,loss,score,expression` with the expression in the DSL.
pub fn front_csv(front: &ParetoFront) -> String {
    let mut out = String::from("complexity,loss,score,expression\n");
    for m in front.entries() {
        let score = m.score.map(|s| format!("{s:?}")).unwrap_or_default();
        writeln!(out, "{},{:?},{},{}", m.complexity, m.loss, score, format_expr(&m.full_expr())).unwrap();
    }
    out
}

/// Observed and predicted stresses of one mode plus a dense prediction
/// curve over the same control range.
#[derive(Debug, Clone, PartialEq)]
pub struct ModeFit {
    pub mode: LoadingMode,
    pub controls: Vec<f64>,
    pub observed: Vec<f64>,
    pub predicted: Vec<f64>,
    pub r2: Option<f64>,
    pub dense_controls: Vec<f64>,
    pub dense_predicted: Vec<f64>,
}

impl ModeFit {
    /// `control,observed,predicted`
    pub fn to_csv(&self) -> String {
        let mut out = String::from("control,observed,predicted\n");
        for ((c, o), p) in self.controls.iter().zip(&self.observed).zip(&self.predicted) {
            writeln!(out, "{c:?},{o:?},{p:?}").unwrap();
        }
        out
    }

    /// `control,predicted` on the dense grid.
    pub fn dense_csv(&self) -> String {
        let mut out = String::from("control,predicted\n");
        for (c, p) in self.dense_controls.iter().zip(&self.dense_predicted) {
            writeln!(out, "{c:?},{p:?}").unwrap();
        }
        out
    }
}

/// Evenly spaced controls spanning the data of `set`, `resolution` points.
fn dense_grid(set: &LoadingDataSet, resolution: usize) -> Vec<f64> {
    let lo = set.controls.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = set.controls.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (0..resolution)
        .map(|i| lo + (hi - lo) * i as f64 / (resolution - 1) as f64)
        .collect()
}

/// Predictions of `model` for every non-empty mode of `bundle`.
pub fn export_fit(model: &EnergyModel, bundle: &DataBundle, resolution: usize) -> Result<Vec<ModeFit>, WorkflowError> {
    if resolution < 2 {
        return Err(WorkflowError::Resolution(resolution));
    }
    let mut fits = Vec::new();
    for set in bundle.sets().iter().filter(|s| !s.is_empty()) {
        let predicted = predict_stress_curve(model, set)?;
        let dense_controls = dense_grid(set, resolution);
        let dense = LoadingDataSet::new(set.mode, dense_controls.clone(), vec![0.0; resolution])
            .map_err(|_| EvalError::Domain("control outside mode domain"))?;
        let dense_predicted = predict_stress_curve(model, &dense)?;
        fits.push(ModeFit {
            mode: set.mode,
            controls: set.controls.clone(),
            observed: set.stresses.clone(),
            r2: r_squared(&predicted, &set.stresses).ok(),
            predicted,
            dense_controls,
            dense_predicted,
        });
    }
    Ok(fits)
}

/// One (σ, seed) cell of a robustness sweep.
#[derive(Debug, Clone, PartialEq)]
pub struct RobustnessRow {
    pub sigma: f64,
    pub seed: u64,
    /// Loss of the selected model against the noisy data.
    pub mse: f64,
    pub expression: String,
    pub form_match: bool,
    /// Constants within `tolerance` relative of the truth; implies a form
    /// match.
    pub constants_match: bool,
}

#[derive(Debug, Clone)]
pub struct RobustnessSettings {
    pub sigmas: Vec<f64>,
    pub seeds: Vec<u64>,
    pub ranges: GenerationRanges,
    /// Relative tolerance of the constant comparison.
    pub tolerance: f64,
}

/// Generates `truth` data once, then for every σ and seed perturbs it with
/// that seed, runs discovery seeded alike and compares the selected model
/// with the truth.
pub fn robustness(
    truth: &EnergyModel,
    settings: &RobustnessSettings,
    config: &GPConfig,
    mut on_row: impl FnMut(&RobustnessRow),
) -> Result<Vec<RobustnessRow>, WorkflowError> {
    let clean = generate_synthetic(truth, &settings.ranges)?;
    let mut rows = Vec::new();
    for &sigma in &settings.sigmas {
        for &seed in &settings.seeds {
            let data = add_noise(&clean, NoiseSpec { sigma, seed });
            let cfg = GPConfig { seed, ..config.clone() };
            let result = evolve_with(&cfg, &data, |_| {})?;
            let best = result.best(cfg.loss_floor).ok_or(WorkflowError::EmptyFront)?;
            let form_match = form_matches(&best.expr, &truth.expr);
            let row = RobustnessRow {
                sigma,
                seed,
                mse: best.loss,
                expression: format_expr(&best.full_expr()),
                form_match,
                constants_match: form_match && constants_match(&best.expr, &truth.expr, settings.tolerance),
            };
            on_row(&row);
            rows.push(row);
        }
    }
    Ok(rows)
}

/// `sigma,seed,mse,expression,form_match,constants_match`
pub fn robustness_csv(rows: &[RobustnessRow]) -> String {
    let mut out = String::from("sigma,seed,mse,expression,form_match,constants_match\n");
    for r in rows {
        writeln!(
            out,
            "{:?},{},{:?},{},{},{}",
            r.sigma, r.seed, r.mse, r.expression, r.form_match, r.constants_match
        )
        .unwrap();
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datagen::ClassicalModel;
    use crate::expr::parse_expr;
    use crate::objective::Parameterization;

    #[test]
    fn perfect_model_has_unit_r2() {
        let truth = ClassicalModel::Gent.model();
        let data = generate_synthetic(&truth, &GenerationRanges::default()).unwrap();
        let fits = export_fit(&truth, &data, 25).unwrap();
        assert_eq!(fits.len(), 3);
        for f in &fits {
            assert!((f.r2.unwrap() - 1.0).abs() < 1e-12);
            assert_eq!(f.dense_controls.len(), 25);
            assert_eq!(f.dense_predicted.len(), 25);
        }
        assert_eq!(mode_r2(&truth, &data).map(|r| r.is_some()), [true; 3]);
    }

    #[test]
    fn mismatched_model_has_finite_r2_below_one() {
        let gent = generate_synthetic(&ClassicalModel::Gent.model(), &GenerationRanges::default()).unwrap();
        let psi_c = ClassicalModel::CortexInvariantC.model();
        for f in export_fit(&psi_c, &gent, 10).unwrap() {
            let r2 = f.r2.unwrap();
            assert!(r2.is_finite() && r2 < 1.0, "{r2}");
        }
    }

    #[test]
    fn dense_grid_spans_the_data() {
        let set = LoadingDataSet::new(LoadingMode::SimpleShear, vec![0.05, 0.2, 0.1], vec![0.0; 3]).unwrap();
        let g = dense_grid(&set, 4);
        assert_eq!(g.first(), Some(&0.05));
        assert!((g[3] - 0.2).abs() < 1e-15);
        assert!(matches!(
            export_fit(&ClassicalModel::Gent.model(), &DataBundle::from_sets([set]), 1),
            Err(WorkflowError::Resolution(1))
        ));
    }

    #[test]
    fn fit_csv_schema() {
        let truth = ClassicalModel::Demiray.model();
        let data = generate_synthetic(&truth, &GenerationRanges { points: 3, ..Default::default() }).unwrap();
        let fit = &export_fit(&truth, &data, 5).unwrap()[0];
        let csv = fit.to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("control,observed,predicted"));
        assert_eq!(lines.count(), 3);
        assert_eq!(fit.dense_csv().lines().count(), 6);
    }

    #[test]
    fn front_table_reparses() {
        let mut front = ParetoFront::new();
        let mut m = EnergyModel::new(parse_expr("1.5*(I1-3)").unwrap(), Parameterization::Invariant);
        m.loss = 0.25;
        front.insert(m);
        front.score(1e-14);
        let csv = front_csv(&front);
        let row = csv.lines().nth(1).unwrap();
        let fields: Vec<&str> = row.splitn(4, ',').collect();
        assert_eq!(fields[1], "0.25");
        assert_eq!(fields[2], "0.0");
        assert!(parse_expr(fields[3]).is_ok());
    }

    #[test]
    fn robustness_rows_for_noiseless_demiray() {
        let truth = ClassicalModel::Demiray.model();
        let mut config = GPConfig::new(Parameterization::Invariant);
        config.populations = 4;
        config.workers = 1;
        config.iterations = 40;
        config.early_stop_loss = Some(1e-28);
        let settings = RobustnessSettings {
            sigmas: vec![0.0],
            seeds: vec![1],
            ranges: GenerationRanges::default(),
            tolerance: 0.02,
        };
        let rows = robustness(&truth, &settings, &config, |_| {}).unwrap();
        assert_eq!(rows.len(), 1);
        assert!(rows[0].form_match && rows[0].constants_match, "{:?}", rows[0]);
        assert!(rows[0].mse < 1e-8);
        let csv = robustness_csv(&rows);
        assert!(csv.starts_with("sigma,seed,mse,expression,form_match,constants_match\n0.0,1,"));
    }
}
