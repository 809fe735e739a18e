mod config;

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use hypersym_core::convexity::{
    convexity_report, energy_surface, hessian_points, AuditSettings, ConvexityError, SurfaceConstraint,
};
use hypersym_core::datagen::{
    add_noise, generate_synthetic, load_datasets, write_datasets, ClassicalModel, CsvError, GenerationRanges,
    NoiseSpec,
};
use hypersym_core::expr::{format_expr, parse_expr, ParseError};
use hypersym_core::mechanics::LoadingMode;
use hypersym_core::objective::{DataBundle, EnergyModel, Parameterization};
use hypersym_core::workflow::{discover, export_fit, front_csv, robustness, robustness_csv, ModeFit, RobustnessSettings};
use thiserror::Error;

use crate::config::{ConfigError, RunConfig};

#[derive(Debug, Parser)]
#[command(name = "hypersym", version, about = "Symbolic discovery of hyperelastic strain energies")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthetic three-mode data from a classical model.
    Generate(GenerateArgs),
    /// Evolves energies against a data file and reports the best one.
    Discover(DiscoverArgs),
    /// Audits an energy for convexity and writes its surface.
    CheckConvexity(ConvexityArgs),
    /// Discovery on noisy copies of synthetic data.
    Robustness(RobustnessArgs),
    /// Predicted stress curves of an energy against data.
    ExportFit(ExportFitArgs),
}

#[derive(Debug, Args)]
struct RangeArgs {
    /// Uniaxial tension stretch range, `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    tension: Option<(f64, f64)>,
    /// Uniaxial compression stretch range, `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    compression: Option<(f64, f64)>,
    /// Simple shear amount range, `lo,hi`.
    #[arg(long, value_parser = parse_pair)]
    shear: Option<(f64, f64)>,
    /// Points per mode.
    #[arg(long)]
    points: Option<usize>,
}

impl RangeArgs {
    fn ranges(&self) -> GenerationRanges {
        let d = GenerationRanges::default();
        GenerationRanges {
            tension: self.tension.unwrap_or(d.tension),
            compression: self.compression.unwrap_or(d.compression),
            shear: self.shear.unwrap_or(d.shear),
            points: self.points.unwrap_or(d.points),
        }
    }
}

#[derive(Debug, Args)]
struct GenerateArgs {
    #[arg(long)]
    model: String,
    /// Output CSV; defaults to `<model>.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Noise level relative to each mode's peak stress.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[command(flatten)]
    ranges: RangeArgs,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// `key = value` configuration file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    param: Option<Parameterization>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    iterations: Option<usize>,
    #[arg(long)]
    populations: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    /// Suppresses progress lines on standard error.
    #[arg(long)]
    quiet: bool,
}

impl RunArgs {
    fn resolve(&self, default_param: Parameterization) -> Result<RunConfig, CliError> {
        let mut cfg = match &self.config {
            Some(path) => {
                let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.clone(), e))?;
                RunConfig::parse(&text, default_param)?
            }
            None => RunConfig::new(default_param),
        };
        if let Some(p) = self.param {
            if p != cfg.param {
                cfg.set_param(p);
            }
        }
        if let Some(s) = self.seed {
            cfg.gp.seed = s;
        }
        if let Some(n) = self.iterations {
            cfg.gp.iterations = n;
        }
        if let Some(n) = self.populations {
            cfg.gp.populations = n;
        }
        if let Some(n) = self.workers {
            cfg.gp.workers = n;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Debug, Args)]
struct DiscoverArgs {
    /// Data CSV; may also come from the configuration.
    #[arg(long)]
    data: Option<PathBuf>,
    /// Report directory; defaults to `discover-out`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Points of each dense fitted curve.
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct ConvexityArgs {
    /// Energy in the expression language.
    #[arg(long = "expr")]
    expression: String,
    #[arg(long, default_value = "invariant")]
    param: Parameterization,
    /// Stretch range of both surface axes, `lo,hi`.
    #[arg(long, value_parser = parse_pair, default_value = "0.9,1.1")]
    range: (f64, f64),
    #[arg(long, default_value_t = 101)]
    steps: usize,
    #[arg(long, default_value = "incompressible")]
    constraint: SurfaceConstraint,
    /// Surface CSV destination.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct RobustnessArgs {
    #[arg(long)]
    model: String,
    /// Comma-separated noise levels.
    #[arg(long, value_delimiter = ',', default_value = "0,0.0001,0.001,0.002,0.005,0.01,0.02,0.05,0.1,0.2")]
    sigmas: Vec<f64>,
    /// Comma-separated seeds; each drives both noise and search.
    #[arg(long, value_delimiter = ',', default_value = "1,2,3,4,5")]
    seeds: Vec<u64>,
    /// Relative tolerance of the constant comparison.
    #[arg(long, default_value_t = 0.02)]
    tolerance: f64,
    /// Table CSV destination; defaults to `robustness.csv`.
    #[arg(long)]
    out: Option<PathBuf>,
    #[command(flatten)]
    ranges: RangeArgs,
    #[command(flatten)]
    run: RunArgs,
}

#[derive(Debug, Args)]
struct ExportFitArgs {
    /// Energy in the expression language.
    #[arg(long = "expr", conflicts_with = "best", required_unless_present = "best")]
    expression: Option<String>,
    /// `best.txt` written by discover.
    #[arg(long)]
    best: Option<PathBuf>,
    #[arg(long)]
    data: PathBuf,
    #[arg(long, default_value = "invariant")]
    param: Parameterization,
    #[arg(long, default_value_t = 200)]
    resolution: usize,
    /// Output directory; defaults to `fit-out`.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, Error)]
enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Syntax(ParseError),
    #[error("{0}")]
    Data(String),
    #[error("{}: {}", .0.display(), .1)]
    Io(PathBuf, std::io::Error),
    #[error("{0}")]
    Numerical(String),
}

impl CliError {
    fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) | CliError::Config(_) | CliError::Syntax(_) => 2,
            CliError::Data(_) | CliError::Io(..) => 3,
            CliError::Numerical(_) => 4,
        }
    }
}

impl From<CsvError> for CliError {
    fn from(e: CsvError) -> Self {
        CliError::Data(e.to_string())
    }
}

impl From<ConvexityError> for CliError {
    fn from(e: ConvexityError) -> Self {
        CliError::Numerical(e.to_string())
    }
}

impl From<hypersym_core::workflow::WorkflowError> for CliError {
    fn from(e: hypersym_core::workflow::WorkflowError) -> Self {
        use hypersym_core::evolution::EvolveError;
        use hypersym_core::workflow::WorkflowError as W;
        match e {
            W::Evolve(EvolveError::Config(c)) => CliError::Config(ConfigError::Invalid(c.to_string())),
            W::Evolve(EvolveError::Data(d)) => CliError::Data(d.to_string()),
            W::Generation(g) => CliError::Usage(g.to_string()),
            W::Resolution(_) => CliError::Usage(e.to_string()),
            other => CliError::Numerical(other.to_string()),
        }
    }
}

fn parse_pair(s: &str) -> Result<(f64, f64), String> {
    let (a, b) = s.split_once(',').ok_or_else(|| format!("expected `lo,hi`, got `{s}`"))?;
    let lo = a.trim().parse::<f64>().map_err(|e| e.to_string())?;
    let hi = b.trim().parse::<f64>().map_err(|e| e.to_string())?;
    Ok((lo, hi))
}

fn write(path: &Path, contents: &str) -> Result<(), CliError> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    fs::write(path, contents).map_err(|e| CliError::Io(path.to_path_buf(), e))
}

fn load_data(path: &Path, weights: [f64; 3]) -> Result<DataBundle, CliError> {
    let mut bundle = load_datasets(path)?;
    if bundle.total_points() == 0 {
        return Err(CliError::Data(format!("{}: no data rows", path.display())));
    }
    bundle.set_weights(weights);
    Ok(bundle)
}

fn model_from_text(text: &str, param: Parameterization) -> Result<EnergyModel, CliError> {
    let expr = parse_expr(text).map_err(CliError::Syntax)?;
    let model = EnergyModel::from_full_expr(&expr, param).map_err(|e| CliError::Usage(e.to_string()))?;
    model.normalized().map_err(|e| CliError::Numerical(e.to_string()))
}

fn fmt_r2(r2: Option<f64>) -> String {
    r2.map(|r| format!("{r:.6}")).unwrap_or_else(|| "n/a".into())
}

fn write_fits(dir: &Path, fits: &[ModeFit]) -> Result<(), CliError> {
    for f in fits {
        write(&dir.join(format!("fit_{}.csv", f.mode.tag())), &f.to_csv())?;
        write(&dir.join(format!("fit_{}_dense.csv", f.mode.tag())), &f.dense_csv())?;
    }
    Ok(())
}

fn cmd_generate(args: &GenerateArgs) -> Result<(), CliError> {
    let preset: ClassicalModel = args.model.parse().map_err(|e: hypersym_core::datagen::UnknownModel| CliError::Usage(e.to_string()))?;
    if !(args.noise >= 0.0 && args.noise.is_finite()) {
        return Err(CliError::Usage(format!("noise must be a non-negative number, got {}", args.noise)));
    }
    let model = preset.model();
    let clean = generate_synthetic(&model, &args.ranges.ranges()).map_err(|e| CliError::Usage(e.to_string()))?;
    let data = add_noise(&clean, NoiseSpec { sigma: args.noise, seed: args.seed });
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from(format!("{}.csv", preset.name())));
    if let Some(dir) = out.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| CliError::Io(dir.to_path_buf(), e))?;
    }
    write_datasets(&data, &out)?;
    println!("{} ({}): {}", preset.name(), model.param, format_expr(&model.full_expr()));
    println!("wrote {} rows to {}", data.total_points(), out.display());
    Ok(())
}

fn cmd_discover(args: &DiscoverArgs) -> Result<(), CliError> {
    let cfg = args.run.resolve(Parameterization::Invariant)?;
    let data_path = args
        .data
        .clone()
        .or_else(|| cfg.data.clone())
        .ok_or_else(|| CliError::Usage("no data file given (--data or run.data)".into()))?;
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("discover-out"));
    let bundle = load_data(&data_path, cfg.weights)?;
    let quiet = args.run.quiet;
    let report = discover(&cfg.gp, &bundle, |p| {
        if !quiet && p.island == 0 {
            eprintln!("{p}");
        }
    })?;

    write(&out.join("front.csv"), &front_csv(&report.front))?;
    let best = &report.best;
    let mut summary = String::new();
    writeln!(summary, "parameterization = {}", best.param).unwrap();
    writeln!(summary, "expression = {}", format_expr(&best.full_expr())).unwrap();
    writeln!(summary, "loss = {:?}", best.loss).unwrap();
    writeln!(summary, "complexity = {}", best.complexity).unwrap();
    for (mode, r2) in LoadingMode::ALL.iter().zip(report.r2) {
        writeln!(summary, "r2_{} = {}", mode.tag(), fmt_r2(r2)).unwrap();
    }
    write(&out.join("best.txt"), &summary)?;
    let fits = export_fit(best, &bundle, args.resolution)?;
    write_fits(&out, &fits)?;
    let convexity = match &report.convexity {
        Ok(r) => format!("{r}\n"),
        Err(e) => format!("audit failed: {e}\n"),
    };
    write(&out.join("convexity.txt"), &convexity)?;

    println!("generations: {}  evaluations: {}", report.generations, report.evaluations);
    println!("front:");
    for m in report.front.entries() {
        println!("  {:>4}  {:<12.4e}  {:>8.4}  {}", m.complexity, m.loss, m.score.unwrap_or(0.0), m.describe(cfg.precision));
    }
    println!("best: {}", best.describe(cfg.precision));
    for (mode, r2) in LoadingMode::ALL.iter().zip(report.r2) {
        println!("  R2 {}: {}", mode.tag(), fmt_r2(r2));
    }
    print!("{convexity}");
    println!("reports written to {}", out.display());
    Ok(())
}

fn cmd_check_convexity(args: &ConvexityArgs) -> Result<(), CliError> {
    let model = model_from_text(&args.expression, args.param)?;
    let (lo, hi) = args.range;
    let settings = AuditSettings { range: args.range, steps: args.steps, constraint: args.constraint, ..AuditSettings::default() };
    let report = convexity_report(&model, &hessian_points(None), &settings)?;
    let surface = energy_surface(&model, (lo, hi), (lo, hi), args.steps, args.constraint)?;
    if let Some(path) = &args.out {
        write(path, &surface.to_csv())?;
    }
    println!("energy: {}", model.describe(6));
    println!("{report}");
    if let Some((l1, l2, psi)) = surface.minimum() {
        println!("surface minimum: {psi:.6e} at ({l1:.4}, {l2:.4})");
    }
    let failures = surface.domain_failures();
    if failures > 0 {
        println!("domain failures: {failures} of {} surface nodes", args.steps * args.steps);
    }
    Ok(())
}

fn cmd_robustness(args: &RobustnessArgs) -> Result<(), CliError> {
    let preset: ClassicalModel = args.model.parse().map_err(|e: hypersym_core::datagen::UnknownModel| CliError::Usage(e.to_string()))?;
    let truth = preset.model();
    let cfg = args.run.resolve(truth.param)?;
    if cfg.param != truth.param {
        return Err(CliError::Usage(format!("{} is a {} model", preset.name(), truth.param)));
    }
    let settings = RobustnessSettings {
        sigmas: args.sigmas.clone(),
        seeds: args.seeds.clone(),
        ranges: args.ranges.ranges(),
        tolerance: args.tolerance,
    };
    let quiet = args.run.quiet;
    let rows = robustness(&truth, &settings, &cfg.gp, |r| {
        if !quiet {
            eprintln!("sigma={} seed={} mse={:.4e} form_match={} {}", r.sigma, r.seed, r.mse, r.form_match, r.expression);
        }
    })?;
    let out = args.out.clone().or_else(|| cfg.out.clone()).unwrap_or_else(|| PathBuf::from("robustness.csv"));
    write(&out, &robustness_csv(&rows))?;
    println!("{:>8}  {:>7}  {:>12}", "sigma", "matches", "mean mse");
    for &sigma in &settings.sigmas {
        let cell: Vec<_> = rows.iter().filter(|r| r.sigma == sigma).collect();
        let matches = cell.iter().filter(|r| r.form_match).count();
        let mean = cell.iter().map(|r| r.mse).sum::<f64>() / cell.len().max(1) as f64;
        println!("{sigma:>8}  {:>7}  {mean:>12.4e}", format!("{matches}/{}", cell.len()));
    }
    println!("table written to {}", out.display());
    Ok(())
}

/// Reads `parameterization` and `expression` from a discover summary.
fn read_best(path: &Path) -> Result<EnergyModel, CliError> {
    let text = fs::read_to_string(path).map_err(|e| CliError::Io(path.to_path_buf(), e))?;
    let mut param = None;
    let mut expression = None;
    for line in text.lines() {
        match line.split_once('=').map(|(k, v)| (k.trim(), v.trim())) {
            Some(("parameterization", v)) => {
                param = Some(v.parse::<Parameterization>().map_err(|e| CliError::Data(e.to_string()))?)
            }
            Some(("expression", v)) => expression = Some(v.to_string()),
            _ => {}
        }
    }
    match (param, expression) {
        (Some(p), Some(e)) => model_from_text(&e, p),
        _ => Err(CliError::Data(format!("{}: missing parameterization or expression", path.display()))),
    }
}

fn cmd_export_fit(args: &ExportFitArgs) -> Result<(), CliError> {
    let model = match (&args.expression, &args.best) {
        (Some(text), _) => model_from_text(text, args.param)?,
        (None, Some(path)) => read_best(path)?,
        (None, None) => unreachable!("clap requires one source"),
    };
    let bundle = load_data(&args.data, [1.0; 3])?;
    let fits = export_fit(&model, &bundle, args.resolution)?;
    let out = args.out.clone().unwrap_or_else(|| PathBuf::from("fit-out"));
    write_fits(&out, &fits)?;
    println!("energy: {}", model.describe(6));
    for f in &fits {
        println!("  R2 {}: {}", f.mode.tag(), fmt_r2(f.r2));
    }
    println!("curves written to {}", out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Generate(a) => cmd_generate(a),
        Command::Discover(a) => cmd_discover(a),
        Command::CheckConvexity(a) => cmd_check_convexity(a),
        Command::Robustness(a) => cmd_robustness(a),
        Command::ExportFit(a) => cmd_export_fit(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
