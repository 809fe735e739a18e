//! Ground-truth energy presets, synthetic multi-mode data, seeded noise and
//! the `mode,control,stress` CSV format.

use std::fmt;
use std::fs;
use std::io;
use std::path::Path;
use std::str::FromStr;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::expr::{parse_expr, EvalError};
use crate::mechanics::LoadingMode;
use crate::objective::{predict_stress_curve, DataBundle, DataError, EnergyModel, LoadingDataSet, Parameterization};

/// Named ground-truth energies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ClassicalModel {
    Gent,
    Ogden,
    Demiray,
    Holzapfel,
    MooneyRivlin,
    NnBaseline,
    /// `11.016 u2² + 0.389 u2`, an invariant fit to brain cortex data.
    CortexInvariantA,
    /// `0.017 (exp(27.91 u2) − 1)`, the noise-robustness target.
    CortexInvariantC,
    /// `0.0079 Σ(λ^−19 − 1)`.
    CortexStretchA,
    /// `0.0027 Σ(λ^−25 − 1)`.
    CortexStretchB,
    /// `0.0035 Σ(λ^−24 − 1) + 0.0003 Σ(λ^30 − 1)`.
    CortexStretchC,
    /// `0.004 Σ(λ^−23 − 1) + 0.0003 Σ(λ^29 − 1)`.
    CortexStretchD,
    /// `Σ(2820.76 ε⁶ + 43.27 ε⁴ − 13.72 ε³ + 1.37 ε²)`.
    CortexStrain,
}

impl ClassicalModel {
    pub const ALL: [ClassicalModel; 13] = [
        ClassicalModel::Gent,
        ClassicalModel::Ogden,
        ClassicalModel::Demiray,
        ClassicalModel::Holzapfel,
        ClassicalModel::MooneyRivlin,
        ClassicalModel::NnBaseline,
        ClassicalModel::CortexInvariantA,
        ClassicalModel::CortexInvariantC,
        ClassicalModel::CortexStretchA,
        ClassicalModel::CortexStretchB,
        ClassicalModel::CortexStretchC,
        ClassicalModel::CortexStretchD,
        ClassicalModel::CortexStrain,
    ];

    /// The five models used for synthetic validation.
    pub const VALIDATION: [ClassicalModel; 5] = [
        ClassicalModel::Gent,
        ClassicalModel::Ogden,
        ClassicalModel::Demiray,
        ClassicalModel::Holzapfel,
        ClassicalModel::MooneyRivlin,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ClassicalModel::Gent => "gent",
            ClassicalModel::Ogden => "ogden",
            ClassicalModel::Demiray => "demiray",
            ClassicalModel::Holzapfel => "holzapfel",
            ClassicalModel::MooneyRivlin => "mooney-rivlin",
            ClassicalModel::NnBaseline => "nn-baseline",
            ClassicalModel::CortexInvariantA => "cortex-invariant-a",
            ClassicalModel::CortexInvariantC => "cortex-invariant-c",
            ClassicalModel::CortexStretchA => "cortex-stretch-a",
            ClassicalModel::CortexStretchB => "cortex-stretch-b",
            ClassicalModel::CortexStretchC => "cortex-stretch-c",
            ClassicalModel::CortexStretchD => "cortex-stretch-d",
            ClassicalModel::CortexStrain => "cortex-strain",
        }
    }

    pub fn param(self) -> Parameterization {
        match self {
            ClassicalModel::Ogden
            | ClassicalModel::CortexStretchA
            | ClassicalModel::CortexStretchB
            | ClassicalModel::CortexStretchC
            | ClassicalModel::CortexStretchD => Parameterization::Stretch,
            ClassicalModel::CortexStrain => Parameterization::Strain,
            _ => Parameterization::Invariant,
        }
    }

    /// Single-direction term (stretch, strain) or Ψ in shifted invariants,
    /// before normalization.
    pub fn dsl(self) -> &'static str {
        match self {
            ClassicalModel::Gent => "1.9*ln1m(1.2*(I1-3))",
            ClassicalModel::Ogden => "0.01*l1^-18",
            ClassicalModel::Demiray => "1.661*exp(0.8802*(I1-3))",
            ClassicalModel::Holzapfel => "5.6*exp(3*square(I1-3))",
            ClassicalModel::MooneyRivlin => {
                "0.87*(I1-3) + 0.86*square(I1-3) + 0.98*(I2-3) + 0.43*square(I2-3)"
            }
            ClassicalModel::NnBaseline => "0.552*(I2-3) + 2.858*ln1m(2.483*square(I2-3))",
            ClassicalModel::CortexInvariantA => "11.016*square(I2-3) + 0.389*(I2-3)",
            ClassicalModel::CortexInvariantC => "0.017*exp(27.91*(I2-3))",
            ClassicalModel::CortexStretchA => "0.0079*l1^-19",
            ClassicalModel::CortexStretchB => "0.0027*l1^-25",
            ClassicalModel::CortexStretchC => "0.0035*l1^-24 + 0.0003*l1^30",
            ClassicalModel::CortexStretchD => "0.004*l1^-23 + 0.0003*l1^29",
            ClassicalModel::CortexStrain => "2820.76*e1^6 + 43.27*e1^4 + -13.72*e1^3 + 1.37*e1^2",
        }
    }

    /// The preset with Ψ(reference) = 0.
    pub fn model(self) -> EnergyModel {
        let expr = parse_expr(self.dsl()).expect("preset parses");
        EnergyModel::new(expr, self.param()).normalized().expect("preset is defined at the reference state")
    }
}

impl fmt::Display for ClassicalModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown model `{0}`")]
pub struct UnknownModel(pub String);

impl FromStr for ClassicalModel {
    type Err = UnknownModel;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ClassicalModel::ALL
            .into_iter()
            .find(|m| m.name() == s.trim())
            .ok_or_else(|| UnknownModel(s.to_string()))
    }
}

/// Looks up a preset by name.
pub fn classical_model(name: &str) -> Result<EnergyModel, UnknownModel> {
    name.parse::<ClassicalModel>().map(ClassicalModel::model)
}

/// Sampling intervals for synthetic data. The reference endpoint of each
/// interval is excluded: tension and compression must stay strictly away
/// from λ = 1 and shear from γ = 0.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GenerationRanges {
    pub tension: (f64, f64),
    pub compression: (f64, f64),
    pub shear: (f64, f64),
    pub points: usize,
}

impl Default for GenerationRanges {
    fn default() -> Self {
        GenerationRanges { tension: (1.0, 1.1), compression: (0.9, 1.0), shear: (0.0, 0.2), points: 50 }
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GenerationError {
    #[error("{mode}: invalid range [{lo}, {hi}]")]
    Range { mode: LoadingMode, lo: f64, hi: f64 },
    #[error("at least 2 points per mode are required, got {0}")]
    TooFewPoints(usize),
    #[error("{mode}: model cannot be evaluated in range: {source}")]
    Domain { mode: LoadingMode, source: EvalError },
    #[error(transparent)]
    Data(#[from] DataError),
}

impl GenerationRanges {
    pub fn range(&self, mode: LoadingMode) -> (f64, f64) {
        match mode {
            LoadingMode::UniaxialTension => self.tension,
            LoadingMode::UniaxialCompression => self.compression,
            LoadingMode::SimpleShear => self.shear,
        }
    }

    pub fn validate(&self) -> Result<(), GenerationError> {
        if self.points < 2 {
            return Err(GenerationError::TooFewPoints(self.points));
        }
        for mode in LoadingMode::ALL {
            let (lo, hi) = self.range(mode);
            let ok = lo.is_finite()
                && hi.is_finite()
                && lo < hi
                && match mode {
                    LoadingMode::UniaxialTension => lo >= 1.0,
                    LoadingMode::UniaxialCompression => lo > 0.0 && hi <= 1.0,
                    LoadingMode::SimpleShear => lo >= 0.0,
                };
            if !ok {
                return Err(GenerationError::Range { mode, lo, hi });
            }
        }
        Ok(())
    }

    /// Evenly spaced controls with the reference endpoint left out: tension
    /// and shear drop their lower bound, compression its upper bound.
    pub fn controls(&self, mode: LoadingMode) -> Vec<f64> {
        let (lo, hi) = self.range(mode);
        let n = self.points;
        let step = (hi - lo) / n as f64;
        match mode {
            LoadingMode::UniaxialCompression => (0..n).map(|i| lo + step * i as f64).collect(),
            _ => (1..=n).map(|i| lo + step * i as f64).collect(),
        }
    }
}

/// Noiseless stresses of `model` on the range controls of every mode.
pub fn generate_synthetic(model: &EnergyModel, ranges: &GenerationRanges) -> Result<DataBundle, GenerationError> {
    ranges.validate()?;
    let mut sets = Vec::with_capacity(3);
    for mode in LoadingMode::ALL {
        let controls = ranges.controls(mode);
        let probe = LoadingDataSet::new(mode, controls.clone(), vec![0.0; controls.len()])?;
        let stresses = predict_stress_curve(model, &probe).map_err(|source| GenerationError::Domain { mode, source })?;
        if stresses.iter().any(|s| !s.is_finite()) {
            return Err(GenerationError::Domain { mode, source: EvalError::Domain("non-finite stress") });
        }
        sets.push(LoadingDataSet::new(mode, controls, stresses)?);
    }
    Ok(DataBundle::from_sets(sets))
}

/// Relative Gaussian noise: stresses of mode k get N(0, (σ·max|P_k|)²).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NoiseSpec {
    pub sigma: f64,
    pub seed: u64,
}

/// Adds seeded noise to every stress; controls and sizes are untouched.
pub fn add_noise(bundle: &DataBundle, spec: NoiseSpec) -> DataBundle {
    assert!(spec.sigma >= 0.0, "noise level must be non-negative");
    let mut out = bundle.clone();
    if spec.sigma == 0.0 {
        return out;
    }
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    for mode in LoadingMode::ALL {
        let set = out.get_mut(mode);
        let sd = spec.sigma * set.max_abs_stress();
        for s in &mut set.stresses {
            let z: f64 = StandardNormal.sample(&mut rng);
            *s += sd * z;
        }
    }
    out
}

pub const CSV_HEADER: &str = "mode,control,stress";

#[derive(Debug, Error)]
pub enum CsvError {
    #[error("line {line}: {message}")]
    Schema { line: usize, message: String },
    #[error("line {line}, column {column}: cannot parse `{text}`")]
    Parse { line: usize, column: usize, text: String },
    #[error("line {line}: {mode} control {control} outside the mode's domain")]
    DomainViolation { line: usize, mode: LoadingMode, control: f64 },
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Parses the `mode,control,stress` format. Rows may come in any mode
/// order; modes without rows become empty sets of weight 0.
pub fn parse_datasets(text: &str) -> Result<DataBundle, CsvError> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim_end_matches('\r')));
    let header = lines.find(|(_, l)| !l.trim().is_empty());
    match header {
        Some((_, h)) if h.split(',').map(str::trim).eq(CSV_HEADER.split(',')) => {}
        Some((line, h)) => {
            return Err(CsvError::Schema { line, message: format!("expected header `{CSV_HEADER}`, found `{h}`") })
        }
        None => return Err(CsvError::Schema { line: 1, message: "empty file".into() }),
    }
    let mut columns: [(Vec<f64>, Vec<f64>); 3] = Default::default();
    for (line, l) in lines {
        if l.trim().is_empty() {
            continue;
        }
        let fields: Vec<&str> = l.split(',').map(str::trim).collect();
        if fields.len() != 3 {
            return Err(CsvError::Schema { line, message: format!("expected 3 fields, found {}", fields.len()) });
        }
        let mode: LoadingMode = fields[0]
            .parse()
            .map_err(|_| CsvError::Schema { line, message: format!("unknown mode tag `{}`", fields[0]) })?;
        let number = |column: usize| -> Result<f64, CsvError> {
            fields[column]
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .ok_or_else(|| CsvError::Parse { line, column: column + 1, text: fields[column].to_string() })
        };
        let control = number(1)?;
        let stress = number(2)?;
        if !mode.accepts(control) {
            return Err(CsvError::DomainViolation { line, mode, control });
        }
        columns[mode.index()].0.push(control);
        columns[mode.index()].1.push(stress);
    }
    let mut sets = Vec::with_capacity(3);
    for (mode, (c, s)) in LoadingMode::ALL.into_iter().zip(columns) {
        sets.push(LoadingDataSet::new(mode, c, s)?);
    }
    Ok(DataBundle::from_sets(sets))
}

/// CSV text of every sample, modes in tension, compression, shear order.
/// Numbers use the shortest representation that reads back exactly.
pub fn format_datasets(bundle: &DataBundle) -> String {
    let mut out = String::from(CSV_HEADER);
    out.push('\n');
    for set in bundle.sets() {
        for (c, s) in set.controls.iter().zip(&set.stresses) {
            out.push_str(&format!("{},{:?},{:?}\n", set.mode.tag(), c, s));
        }
    }
    out
}

pub fn load_datasets(path: impl AsRef<Path>) -> Result<DataBundle, CsvError> {
    parse_datasets(&fs::read_to_string(path)?)
}

pub fn write_datasets(bundle: &DataBundle, path: impl AsRef<Path>) -> Result<(), CsvError> {
    fs::write(path, format_datasets(bundle))?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::expr::{evaluate, Bindings, Var};

    #[test]
    fn presets_parse_and_normalize() {
        for m in ClassicalModel::ALL {
            let model = m.model();
            assert_eq!(model.param, m.param());
            assert!(model.reference_energy().unwrap().abs() <= 1e-12, "{m}");
            assert!(model.constraint_check().is_ok(), "{m}");
        }
    }

    #[test]
    fn gent_preset_and_offsets() {
        let g = classical_model("gent").unwrap();
        let b = Bindings::new().with(Var::U1, 0.1);
        let v = evaluate(&g.expr, &b).unwrap() + g.offset;
        assert!((v - (-1.9 * (1.0 - 0.12f64).ln())).abs() < 1e-14);
        let o = classical_model("ogden").unwrap();
        assert!((o.offset + 0.03).abs() < 1e-15);
        let d = classical_model("demiray").unwrap();
        assert!((d.offset + 1.661).abs() < 1e-15);
        assert!(classical_model("bogus").is_err());
    }

    #[test]
    fn controls_exclude_reference() {
        let r = GenerationRanges::default();
        let t = r.controls(LoadingMode::UniaxialTension);
        assert_eq!(t.len(), 50);
        assert!(t.iter().all(|&l| l > 1.0) && (t[49] - 1.1).abs() < 1e-15);
        let c = r.controls(LoadingMode::UniaxialCompression);
        assert!(c.iter().all(|&l| l < 1.0) && c[0] == 0.9);
        assert!(r.controls(LoadingMode::SimpleShear).iter().all(|&g| g > 0.0));
    }

    #[test]
    fn gent_tension_endpoint_stress() {
        let b = generate_synthetic(&classical_model("gent").unwrap(), &GenerationRanges::default()).unwrap();
        let t = b.get(LoadingMode::UniaxialTension);
        assert!((t.stresses[49] - 1.291066).abs() < 5e-7);
        assert_eq!(b.total_points(), 150);
    }

    #[test]
    fn gent_blows_up_past_locking() {
        let r = GenerationRanges { tension: (1.0, 2.0), ..Default::default() };
        let e = generate_synthetic(&classical_model("gent").unwrap(), &r).unwrap_err();
        assert!(matches!(e, GenerationError::Domain { .. }), "{e}");
    }

    #[test]
    fn noise_is_seeded_and_scaled() {
        let b = generate_synthetic(&classical_model("holzapfel").unwrap(), &GenerationRanges::default()).unwrap();
        assert_eq!(add_noise(&b, NoiseSpec { sigma: 0.0, seed: 1 }), b);
        let x = add_noise(&b, NoiseSpec { sigma: 0.01, seed: 7 });
        assert_eq!(x, add_noise(&b, NoiseSpec { sigma: 0.01, seed: 7 }));
        assert_ne!(x, add_noise(&b, NoiseSpec { sigma: 0.01, seed: 8 }));
        for (p, q) in b.sets().iter().zip(x.sets()) {
            assert_eq!(p.controls, q.controls);
        }
    }

    #[test]
    fn noise_standard_deviation() {
        let n = 100_000;
        let controls: Vec<f64> = (1..=n).map(|i| 1.0 + 0.1 * i as f64 / n as f64).collect();
        let stresses = vec![2.0; n];
        let set = LoadingDataSet::new(LoadingMode::UniaxialTension, controls, stresses).unwrap();
        let b = DataBundle::from_sets([set]);
        let noisy = add_noise(&b, NoiseSpec { sigma: 0.1, seed: 3 });
        let d: Vec<f64> = noisy.get(LoadingMode::UniaxialTension).stresses.iter().map(|s| s - 2.0).collect();
        let mean = d.iter().sum::<f64>() / n as f64;
        let sd = (d.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (n - 1) as f64).sqrt();
        assert!((sd / 0.2 - 1.0).abs() < 0.02, "{sd}");
    }

    #[test]
    fn csv_round_trip_and_errors() {
        let b = generate_synthetic(&classical_model("ogden").unwrap(), &GenerationRanges::default()).unwrap();
        let text = format_datasets(&b);
        assert_eq!(parse_datasets(&text).unwrap(), b);
        let one = parse_datasets("mode,control,stress\nut,1.1,1.2911\n").unwrap();
        assert_eq!(one.get(LoadingMode::UniaxialTension).controls, vec![1.1]);
        assert_eq!(one.get(LoadingMode::SimpleShear).weight, 0.0);
        assert!(matches!(
            parse_datasets("mode,control,stress\nss,-0.1,0.0\n"),
            Err(CsvError::DomainViolation { line: 2, .. })
        ));
        assert!(matches!(parse_datasets("mode,x,stress\n"), Err(CsvError::Schema { .. })));
        assert!(matches!(parse_datasets("mode,control,stress\nxx,1,1\n"), Err(CsvError::Schema { .. })));
        assert!(matches!(
            parse_datasets("mode,control,stress\nut,1.1,abc\n"),
            Err(CsvError::Parse { line: 2, column: 3, .. })
        ));
    }
}
