//! `key = value` run configuration with `[section]` headers.
//!
//! ```text
//! [run]
//! parameterization = invariant
//! seed = 7
//! weights = 1, 1, 2
//!
//! [gp]
//! populations = 8
//! iterations = 300
//! ```

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::str::FromStr;

use hypersym_core::evolution::GPConfig;
use hypersym_core::expr::{Op, UnaryOp};
use hypersym_core::objective::Parameterization;
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ConfigError {
    #[error("line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("line {line}: unknown key `{key}`")]
    UnknownKey { line: usize, key: String },
    #[error("line {line}: invalid value `{value}` for `{key}`")]
    Value { line: usize, key: String, value: String },
    #[error("invalid configuration: {0}")]
    Invalid(String),
}

/// Everything one command needs besides its own flags.
#[derive(Debug, Clone)]
pub struct RunConfig {
    pub param: Parameterization,
    pub gp: GPConfig,
    pub data: Option<PathBuf>,
    pub out: Option<PathBuf>,
    /// Loss weight per mode: tension, compression, shear.
    pub weights: [f64; 3],
    /// Significant digits of expressions printed in reports.
    pub precision: usize,
}

impl RunConfig {
    pub fn new(param: Parameterization) -> Self {
        RunConfig { param, gp: GPConfig::new(param), data: None, out: None, weights: [1.0; 3], precision: 5 }
    }

    /// Parses `text`; `param` applies unless the file sets one.
    pub fn parse(text: &str, param: Parameterization) -> Result<Self, ConfigError> {
        let entries = entries(text)?;
        let param = match entries.get("run.parameterization") {
            Some((line, v)) => parse_value(*line, "parameterization", v)?,
            None => param,
        };
        let mut cfg = RunConfig::new(param);
        for (key, (line, value)) in &entries {
            cfg.apply(key, value, *line)?;
        }
        Ok(cfg)
    }

    /// Switches the parameterization, resetting the grammar to its default.
    pub fn set_param(&mut self, param: Parameterization) {
        self.param = param;
        self.gp.param = param;
        self.gp.grammar = param.grammar();
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        self.gp.validate().map_err(|e| ConfigError::Invalid(e.to_string()))?;
        if self.weights.iter().any(|w| !(w.is_finite() && *w >= 0.0)) {
            return Err(ConfigError::Invalid("weights must be finite and non-negative".into()));
        }
        if self.precision == 0 {
            return Err(ConfigError::Invalid("precision must be positive".into()));
        }
        Ok(())
    }

    fn apply(&mut self, key: &str, value: &str, line: usize) -> Result<(), ConfigError> {
        let (section, name) = key.split_once('.').expect("qualified key");
        let gp = &mut self.gp;
        let v = value;
        macro_rules! set {
            ($field:expr) => {
                $field = parse_value(line, name, v)?
            };
        }
        match (section, name) {
            ("run", "parameterization") => {}
            ("run", "seed") => set!(gp.seed),
            ("run", "data") => self.data = Some(PathBuf::from(v)),
            ("run", "out") => self.out = Some(PathBuf::from(v)),
            ("run", "precision") => set!(self.precision),
            ("run", "weights") => {
                let w: Vec<f64> = parse_list(line, name, v)?;
                self.weights = w.try_into().map_err(|_| bad(line, name, v))?;
            }
            ("gp", "workers") => set!(gp.workers),
            ("gp", "populations") => set!(gp.populations),
            ("gp", "population_size") => set!(gp.population_size),
            ("gp", "iterations") => set!(gp.iterations),
            ("gp", "events_per_generation") => set!(gp.events_per_generation),
            ("gp", "tournament_size") => set!(gp.tournament_size),
            ("gp", "crossover_probability") => set!(gp.crossover_probability),
            ("gp", "perturbation_scale") => set!(gp.perturbation_scale),
            ("gp", "migration_interval") => set!(gp.migration_interval),
            ("gp", "migration_fraction") => set!(gp.migration_fraction),
            ("gp", "parsimony_decay") => set!(gp.parsimony_decay),
            ("gp", "parsimony_scale") => set!(gp.parsimony_scale),
            ("gp", "init_depth") => set!(gp.init_depth),
            ("gp", "mutation_retries") => set!(gp.mutation_retries),
            ("gp", "refit_iterations") => set!(gp.refit_iterations),
            ("gp", "refit_evaluations") => set!(gp.refit_evaluations),
            ("gp", "loss_floor") => set!(gp.loss_floor),
            ("gp", "early_stop_loss") => {
                gp.early_stop_loss = match v {
                    "none" => None,
                    _ => Some(parse_value(line, name, v)?),
                }
            }
            ("optimizer", "probability") => set!(gp.optimizer.probability),
            ("optimizer", "restarts") => set!(gp.optimizer.restarts),
            ("optimizer", "max_evaluations") => set!(gp.optimizer.max_evaluations),
            ("optimizer", "tolerance") => set!(gp.optimizer.tolerance),
            ("optimizer", "lm_iterations") => set!(gp.optimizer.lm_iterations),
            ("mutation", "constant") => set!(gp.mutation_weights.constant),
            ("mutation", "swap") => set!(gp.mutation_weights.swap),
            ("mutation", "insert") => set!(gp.mutation_weights.insert),
            ("mutation", "append") => set!(gp.mutation_weights.append),
            ("mutation", "replace") => set!(gp.mutation_weights.replace),
            ("mutation", "delete") => set!(gp.mutation_weights.delete),
            ("grammar", "max_complexity") => set!(gp.grammar.max_complexity),
            ("grammar", "max_depth") => set!(gp.grammar.max_depth),
            ("grammar", "exponent_min") => set!(gp.grammar.exponent_range.0),
            ("grammar", "exponent_max") => set!(gp.grammar.exponent_range.1),
            ("grammar", "unary_ops") => {
                let mut ops = Vec::new();
                for name in v.split(',').map(str::trim).filter(|s| !s.is_empty()) {
                    let op = UnaryOp::ALL
                        .into_iter()
                        .find(|u| Some(Op::from(*u)) == Op::from_name(name))
                        .ok_or_else(|| bad(line, "unary_ops", v))?;
                    ops.push(op);
                }
                gp.grammar.unary_ops = ops;
            }
            ("grammar", w) if w.starts_with("weight_") => {
                let op = Op::from_name(&w["weight_".len()..]).ok_or_else(|| unknown(line, key))?;
                gp.grammar.op_weights[op.index()] = parse_value(line, name, v)?;
            }
            _ => return Err(unknown(line, key)),
        }
        Ok(())
    }
}

fn unknown(line: usize, key: &str) -> ConfigError {
    ConfigError::UnknownKey { line, key: key.to_string() }
}

fn bad(line: usize, key: &str, value: &str) -> ConfigError {
    ConfigError::Value { line, key: key.to_string(), value: value.to_string() }
}

fn parse_value<T: FromStr>(line: usize, key: &str, value: &str) -> Result<T, ConfigError> {
    value.trim().parse().map_err(|_| bad(line, key, value))
}

fn parse_list<T: FromStr>(line: usize, key: &str, value: &str) -> Result<Vec<T>, ConfigError> {
    value.split(',').map(|s| parse_value(line, key, s)).collect()
}

/// `section.key -> (line, value)`; keys before any header belong to `run`.
fn entries(text: &str) -> Result<BTreeMap<String, (usize, String)>, ConfigError> {
    let mut section = String::from("run");
    let mut out = BTreeMap::new();
    for (i, raw) in text.lines().enumerate() {
        let line = i + 1;
        let content = raw.split('#').next().unwrap_or("").trim();
        if content.is_empty() {
            continue;
        }
        if let Some(rest) = content.strip_prefix('[') {
            let name = rest
                .strip_suffix(']')
                .map(str::trim)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| ConfigError::Syntax { line, message: format!("malformed section header `{content}`") })?;
            section = name.to_string();
            continue;
        }
        let (key, value) = content
            .split_once('=')
            .ok_or_else(|| ConfigError::Syntax { line, message: format!("expected `key = value`, got `{content}`") })?;
        let key = format!("{section}.{}", key.trim());
        if out.insert(key.clone(), (line, value.trim().to_string())).is_some() {
            return Err(ConfigError::Syntax { line, message: format!("duplicate key `{key}`") });
        }
    }
    Ok(out)
}
