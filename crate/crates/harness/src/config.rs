//! Sweep configuration: a TOML file with an optional top-level `out` path and
//! one table per experiment.
//!
//! ```toml
//! out = "results.csv"
//!
//! [hierarchical-128]
//! model = "hierarchical"   # or "chain"
//! n = 128                  # data points, or chain length
//! data_seed = 0
//! seeds = 10               # seeds per (method, K) point
//! base_seed = 0            # first seed; --seed overrides
//! tmc = [4, 16, 64]        # any estimator name maps to its K grid
//! smc = [4, 16, 64]
//! ```
//!
//! A chain may fix its observation with `observation = 0.5` instead of
//! drawing it from `data_seed`.

use std::path::PathBuf;

use tmc_core::estimators::EstimatorKind;
use tmc_core::models::{GaussianChain, HierarchicalGaussian, ModelSpec};

use crate::error::HarnessError;

pub const MAX_K: usize = 4096;
pub const MAX_N: usize = 1024;
/// IWAE sample counts above [`MAX_K`] up to this need `--large-iwae`.
pub const MAX_LARGE_IWAE_K: usize = 1_000_000;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ModelFamily {
    Hierarchical,
    Chain,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub family: ModelFamily,
    pub n: usize,
    pub data_seed: u64,
    pub observation: Option<f64>,
}

impl ModelConfig {
    pub fn build(&self) -> Result<ModelSpec, HarnessError> {
        Ok(match (self.family, self.observation) {
            (ModelFamily::Hierarchical, _) => ModelSpec::Hierarchical(HierarchicalGaussian::simulate(self.n, self.data_seed)?),
            (ModelFamily::Chain, Some(x)) => ModelSpec::Chain(GaussianChain::new(self.n, x)?),
            (ModelFamily::Chain, None) => ModelSpec::Chain(GaussianChain::simulate(self.n, self.data_seed)?),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodGrid {
    pub method: EstimatorKind,
    pub ks: Vec<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub name: String,
    pub model: ModelConfig,
    pub methods: Vec<MethodGrid>,
    pub seeds: usize,
    pub base_seed: u64,
}

/// Sample-count caps applied while parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct Limits {
    pub large_iwae: bool,
}

impl Limits {
    fn max_k(self, method: EstimatorKind) -> usize {
        if self.large_iwae && method == EstimatorKind::Iwae {
            MAX_LARGE_IWAE_K
        } else {
            MAX_K
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SweepConfig {
    pub out: Option<PathBuf>,
    pub experiments: Vec<ExperimentConfig>,
}

impl SweepConfig {
    pub fn load(path: &std::path::Path, limits: Limits) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|e| HarnessError::io(path, e))?;
        Self::parse(&text, limits)
    }

    pub fn parse(text: &str, limits: Limits) -> Result<Self, HarnessError> {
        let table: toml::Table = text.parse()?;
        let mut out = None;
        let mut experiments = Vec::new();
        for (key, value) in &table {
            match (key.as_str(), value) {
                ("out", toml::Value::String(s)) => out = Some(PathBuf::from(s)),
                ("out", _) => return Err(HarnessError::config("", "`out` must be a string")),
                (name, toml::Value::Table(t)) => experiments.push(parse_experiment(name, t, limits)?),
                (name, _) => return Err(HarnessError::config("", format!("unexpected top-level key {name:?}"))),
            }
        }
        if experiments.is_empty() {
            return Err(HarnessError::config("", "no experiment sections"));
        }
        Ok(Self { out, experiments })
    }
}

fn integer(section: &str, key: &str, v: &toml::Value) -> Result<u64, HarnessError> {
    match v {
        toml::Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        _ => Err(HarnessError::config(section, format!("`{key}` must be a non-negative integer"))),
    }
}

fn parse_experiment(name: &str, t: &toml::Table, limits: Limits) -> Result<ExperimentConfig, HarnessError> {
    let mut family = None;
    let mut n = None;
    let mut data_seed = 0;
    let mut observation = None;
    let mut seeds = 1;
    let mut base_seed = 0;
    let mut methods = Vec::new();
    for (key, v) in t {
        match key.as_str() {
            "model" => {
                family = Some(match v.as_str() {
                    Some("hierarchical") => ModelFamily::Hierarchical,
                    Some("chain") => ModelFamily::Chain,
                    _ => return Err(HarnessError::config(name, "`model` must be \"hierarchical\" or \"chain\"")),
                })
            }
            "n" => n = Some(integer(name, key, v)? as usize),
            "data_seed" => data_seed = integer(name, key, v)?,
            "observation" => {
                observation = Some(
                    v.as_float()
                        .or_else(|| v.as_integer().map(|i| i as f64))
                        .ok_or_else(|| HarnessError::config(name, "`observation` must be a number"))?,
                )
            }
            "seeds" => seeds = integer(name, key, v)? as usize,
            "base_seed" => base_seed = integer(name, key, v)?,
            method => {
                let kind: EstimatorKind = method.parse().map_err(|_| HarnessError::UnknownMethod {
                    section: name.to_owned(),
                    method: method.to_owned(),
                })?;
                let list = v
                    .as_array()
                    .ok_or_else(|| HarnessError::config(name, format!("`{method}` must be a list of sample counts")))?;
                let ks = list
                    .iter()
                    .map(|k| integer(name, method, k).map(|k| k as usize))
                    .collect::<Result<Vec<_>, _>>()?;
                let cap = limits.max_k(kind);
                if let Some(&k) = ks.iter().find(|&&k| k == 0 || k > cap) {
                    return Err(HarnessError::config(name, format!("`{method}`: K = {k} outside 1..={cap}")));
                }
                if kind == EstimatorKind::Vae && ks.iter().any(|&k| k != 1) {
                    return Err(HarnessError::config(name, "`vae` draws a single sample: use K = 1"));
                }
                methods.push(MethodGrid { method: kind, ks });
            }
        }
    }
    let family = family.ok_or_else(|| HarnessError::config(name, "missing `model`"))?;
    let n = n.ok_or_else(|| HarnessError::config(name, "missing `n`"))?;
    if n == 0 || n > MAX_N {
        return Err(HarnessError::config(name, format!("`n` = {n} outside 1..={MAX_N}")));
    }
    if seeds == 0 {
        return Err(HarnessError::config(name, "`seeds` must be at least 1"));
    }
    if observation.is_some() && family != ModelFamily::Chain {
        return Err(HarnessError::config(name, "`observation` applies to chain models only"));
    }
    if methods.is_empty() {
        return Err(HarnessError::config(name, "no estimator grids"));
    }
    Ok(ExperimentConfig {
        name: name.to_owned(),
        model: ModelConfig {
            family,
            n,
            data_seed,
            observation,
        },
        methods,
        seeds,
        base_seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    const EXAMPLE: &str = r#"
out = "r.csv"

[a]
model = "hierarchical"
n = 4
seeds = 2
tmc = [2, 4]
iwae = [8]

[b]
model = "chain"
n = 3
observation = 0.5
tmc-nonfactorised = [2]
"#;

    #[test]
    fn parses_sections_in_order() {
        let c = SweepConfig::parse(EXAMPLE, Limits::default()).unwrap();
        assert_eq!(c.out, Some(PathBuf::from("r.csv")));
        assert_eq!(c.experiments.len(), 2);
        let a = &c.experiments[0];
        assert_eq!(a.name, "a");
        assert_eq!(a.seeds, 2);
        assert_eq!(a.methods[0], MethodGrid { method: EstimatorKind::Tmc, ks: vec![2, 4] });
        assert_eq!(a.methods[1].method, EstimatorKind::Iwae);
        let b = &c.experiments[1];
        assert_eq!(b.model.observation, Some(0.5));
        assert_eq!(b.methods[0].method, EstimatorKind::TmcNonFactorised);
    }

    #[test]
    fn rejects_unknown_method() {
        let r = SweepConfig::parse("[x]\nmodel = \"chain\"\nn = 2\nfoo = [1]\n", Limits::default());
        assert!(matches!(r, Err(HarnessError::UnknownMethod { .. })));
    }

    #[test]
    fn enforces_caps() {
        let big = "[x]\nmodel = \"hierarchical\"\nn = 2\niwae = [1000000]\n";
        assert!(SweepConfig::parse(big, Limits::default()).is_err());
        assert!(SweepConfig::parse(big, Limits { large_iwae: true }).is_ok());
        let tmc = "[x]\nmodel = \"hierarchical\"\nn = 2\ntmc = [5000]\n";
        assert!(SweepConfig::parse(tmc, Limits { large_iwae: true }).is_err());
        let n = "[x]\nmodel = \"hierarchical\"\nn = 2000\ntmc = [2]\n";
        assert!(SweepConfig::parse(n, Limits::default()).is_err());
        let zero = "[x]\nmodel = \"hierarchical\"\nn = 2\ntmc = [0]\n";
        assert!(SweepConfig::parse(zero, Limits::default()).is_err());
    }
}
