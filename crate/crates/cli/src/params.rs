//! Number parsing and the flat key-value config files.

use std::path::Path;

use anyhow::{anyhow, bail, Context, Result};
use gelshatter::{InitialCondition, SimulationConfig};
use toml::{Table, Value};

/// Largest count accepted from floating-point notation without loss.
const MAX_EXACT: f64 = 9_007_199_254_740_992.0;

/// Parses a non-negative integer count, accepting scientific notation
/// such as `1e5` or `2.5e6` as long as the value is integral.
pub fn parse_count(s: &str) -> std::result::Result<u64, String> {
    let s = s.trim().replace('_', "");
    if let Ok(v) = s.parse::<u64>() {
        return Ok(v);
    }
    let f: f64 = s.parse().map_err(|_| format!("`{s}` is not a number"))?;
    float_to_count(f).ok_or_else(|| format!("`{s}` is not a non-negative integer"))
}

fn float_to_count(f: f64) -> Option<u64> {
    (f.is_finite() && f >= 0.0 && f.fract() == 0.0 && f <= MAX_EXACT).then_some(f as u64)
}

pub fn value_to_count(key: &str, v: &Value) -> Result<u64> {
    match v {
        Value::Integer(i) if *i >= 0 => Ok(*i as u64),
        Value::Float(f) => float_to_count(*f).ok_or_else(|| anyhow!("{key}: {f} is not a non-negative integer")),
        Value::String(s) => parse_count(s).map_err(|e| anyhow!("{key}: {e}")),
        other => bail!("{key}: expected a count, got {other}"),
    }
}

pub fn value_to_f64(key: &str, v: &Value) -> Result<f64> {
    match v {
        Value::Integer(i) => Ok(*i as f64),
        Value::Float(f) => Ok(*f),
        Value::String(s) => s.trim().parse().map_err(|_| anyhow!("{key}: `{s}` is not a number")),
        other => bail!("{key}: expected a number, got {other}"),
    }
}

pub fn value_to_bool(key: &str, v: &Value) -> Result<bool> {
    v.as_bool().ok_or_else(|| anyhow!("{key}: expected true or false"))
}

pub fn value_to_str<'a>(key: &str, v: &'a Value) -> Result<&'a str> {
    v.as_str().ok_or_else(|| anyhow!("{key}: expected a string"))
}

/// A scalar or an array of scalars, as a list.
pub fn value_to_list<T>(key: &str, v: &Value, each: impl Fn(&str, &Value) -> Result<T>) -> Result<Vec<T>> {
    match v {
        Value::Array(items) => items.iter().map(|x| each(key, x)).collect(),
        scalar => Ok(vec![each(key, scalar)?]),
    }
}

pub fn read_table(path: &Path) -> Result<Table> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    text.parse::<Table>().with_context(|| format!("parsing {}", path.display()))
}

/// Rejects keys outside `known`, so typos do not pass silently.
pub fn check_keys(table: &Table, known: &[&str]) -> Result<()> {
    for key in table.keys() {
        if !known.contains(&key.as_str()) {
            bail!("unknown config key `{key}` (known: {})", known.join(", "));
        }
    }
    Ok(())
}

/// Settings of a single run, from a file and/or flags.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct RunSettings {
    pub mass: Option<u64>,
    pub k_hat: Option<f64>,
    pub f_hat: Option<f64>,
    pub threshold: Option<u64>,
    pub seed: Option<u64>,
    pub steps: Option<u64>,
    pub sample_interval: Option<u64>,
    pub replicas: Option<u64>,
    pub init: Option<InitialCondition>,
    pub histograms: Option<bool>,
}

pub const RUN_KEYS: &[&str] = &[
    "M",
    "K",
    "F",
    "threshold",
    "seed",
    "steps",
    "sample-interval",
    "replicas",
    "init",
    "histograms",
];

impl RunSettings {
    pub fn from_table(table: &Table) -> Result<Self> {
        check_keys(table, RUN_KEYS)?;
        let count = |k: &str| table.get(k).map(|v| value_to_count(k, v)).transpose();
        let real = |k: &str| table.get(k).map(|v| value_to_f64(k, v)).transpose();
        Ok(Self {
            mass: count("M")?,
            k_hat: real("K")?,
            f_hat: real("F")?,
            threshold: count("threshold")?,
            seed: count("seed")?,
            steps: count("steps")?,
            sample_interval: count("sample-interval")?,
            replicas: count("replicas")?,
            init: table
                .get("init")
                .map(|v| -> Result<InitialCondition> { Ok(value_to_str("init", v)?.parse()?) })
                .transpose()?,
            histograms: table.get("histograms").map(|v| value_to_bool("histograms", v)).transpose()?,
        })
    }

    /// Values set in `over` win.
    pub fn overridden_by(self, over: &RunSettings) -> Self {
        Self {
            mass: over.mass.or(self.mass),
            k_hat: over.k_hat.or(self.k_hat),
            f_hat: over.f_hat.or(self.f_hat),
            threshold: over.threshold.or(self.threshold),
            seed: over.seed.or(self.seed),
            steps: over.steps.or(self.steps),
            sample_interval: over.sample_interval.or(self.sample_interval),
            replicas: over.replicas.or(self.replicas),
            init: over.init.or(self.init),
            histograms: over.histograms.or(self.histograms),
        }
    }

    pub fn to_config(&self) -> Result<SimulationConfig> {
        let mass = self.mass.ok_or_else(|| anyhow!("invalid config: M is required"))?;
        let k_hat = self.k_hat.ok_or_else(|| anyhow!("invalid config: K is required"))?;
        let f_hat = self.f_hat.ok_or_else(|| anyhow!("invalid config: F is required"))?;
        let mut cfg = SimulationConfig::new(mass, k_hat, f_hat);
        if let Some(v) = self.threshold {
            cfg = cfg.with_threshold(v);
        }
        if let Some(v) = self.seed {
            cfg = cfg.with_seed(v);
        }
        if let Some(v) = self.steps {
            cfg = cfg.with_steps(v);
        }
        if let Some(v) = self.sample_interval {
            cfg = cfg.with_sample_interval(v);
        }
        if let Some(v) = self.init {
            cfg = cfg.with_init(v);
        }
        if let Some(v) = self.histograms {
            cfg = cfg.with_histograms(v);
        }
        cfg.validate()?;
        Ok(cfg)
    }
}
