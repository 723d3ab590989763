//! Simulation parameters.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Starting state of a run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InitialCondition {
    #[default]
    AllMonomers,
    SingleGel,
}

impl std::str::FromStr for InitialCondition {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all-monomers" | "monomers" => Ok(Self::AllMonomers),
            "single-gel" | "gel" => Ok(Self::SingleGel),
            other => Err(Error::InvalidConfig {
                field: "init",
                reason: format!("unknown initial condition `{other}`"),
            }),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    /// Total number of monomer units `M`.
    pub mass: u64,
    /// Coalescence rate constant `K̂`.
    pub k_hat: f64,
    /// Fragmentation rate constant `F̂`.
    pub f_hat: f64,
    /// Clusters of size `<= frag_threshold` never shatter.
    pub frag_threshold: u64,
    pub seed: u64,
    pub max_steps: u64,
    pub sample_interval: u64,
    #[serde(default)]
    pub record_histograms: bool,
    /// Keep the per-step sign of the change in `k_max` (2 bits per step).
    #[serde(default)]
    pub record_kmax_signs: bool,
    #[serde(default)]
    pub init: InitialCondition,
}

impl SimulationConfig {
    /// Config with the usual defaults: no fragmentation barrier, all
    /// monomers, sampling every 1000 steps.
    pub fn new(mass: u64, k_hat: f64, f_hat: f64) -> Self {
        Self {
            mass,
            k_hat,
            f_hat,
            frag_threshold: 1,
            seed: 0,
            max_steps: 1_000_000,
            sample_interval: 1000,
            record_histograms: false,
            record_kmax_signs: false,
            init: InitialCondition::AllMonomers,
        }
    }

    pub fn with_seed(mut self, seed: u64) -> Self {
        self.seed = seed;
        self
    }

    pub fn with_steps(mut self, max_steps: u64) -> Self {
        self.max_steps = max_steps;
        self
    }

    pub fn with_sample_interval(mut self, sample_interval: u64) -> Self {
        self.sample_interval = sample_interval;
        self
    }

    pub fn with_threshold(mut self, frag_threshold: u64) -> Self {
        self.frag_threshold = frag_threshold;
        self
    }

    pub fn with_histograms(mut self, on: bool) -> Self {
        self.record_histograms = on;
        self
    }

    pub fn with_kmax_signs(mut self, on: bool) -> Self {
        self.record_kmax_signs = on;
        self
    }

    pub fn with_init(mut self, init: InitialCondition) -> Self {
        self.init = init;
        self
    }

    /// Ratio of the gelation time `M/K̂` to the shattering time `1/F̂`.
    pub fn r(&self) -> f64 {
        self.f_hat * self.mass as f64 / self.k_hat
    }

    /// Probability that a step is a coalescence attempt.
    pub fn coalescence_probability(&self) -> f64 {
        self.k_hat / (self.k_hat + self.f_hat)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |field, reason: &str| {
            Err(Error::InvalidConfig {
                field,
                reason: reason.to_string(),
            })
        };
        if self.mass < 2 {
            return bad("M", "must be at least 2");
        }
        if self.mass > u32::MAX as u64 {
            return bad("M", "must fit in 32 bits");
        }
        if !(self.k_hat.is_finite() && self.k_hat >= 0.0) {
            return bad("K", "must be a finite non-negative rate");
        }
        if !(self.f_hat.is_finite() && self.f_hat >= 0.0) {
            return bad("F", "must be a finite non-negative rate");
        }
        if self.k_hat + self.f_hat <= 0.0 {
            return bad("K", "K + F must be positive");
        }
        if self.frag_threshold < 1 || self.frag_threshold > self.mass {
            return bad("threshold", "must lie in [1, M]");
        }
        if self.max_steps < 1 {
            return bad("steps", "must be positive");
        }
        if self.sample_interval < 1 {
            return bad("sample-interval", "must be positive");
        }
        Ok(())
    }
}

/// `K̂ (i/M) (j/M)`.
pub fn coalescence_rate(i: u64, j: u64, cfg: &SimulationConfig) -> f64 {
    let m = cfg.mass as f64;
    cfg.k_hat * (i as f64 / m) * (j as f64 / m)
}

/// `F̂ (i/M)` for clusters above the threshold, zero otherwise.
pub fn fragmentation_rate(i: u64, cfg: &SimulationConfig) -> f64 {
    if i > cfg.frag_threshold {
        cfg.f_hat * (i as f64 / cfg.mass as f64)
    } else {
        0.0
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn coalescence_rate_examples() {
        let cfg = SimulationConfig::new(100, 1.0, 0.0);
        assert!((coalescence_rate(1, 1, &cfg) - 1e-4).abs() < 1e-18);
        assert_eq!(coalescence_rate(100, 100, &cfg), 1.0);
        let cfg = SimulationConfig::new(100_000, 0.99, 0.01);
        let got = coalescence_rate(50, 20, &cfg);
        assert!((got - 0.99 * 1e-7).abs() < 1e-20, "{got}");
    }

    #[test]
    fn fragmentation_rate_examples() {
        let cfg = SimulationConfig::new(1000, 0.99, 0.01);
        assert_eq!(fragmentation_rate(1000, &cfg), 0.01);
        assert_eq!(fragmentation_rate(1, &cfg), 0.0);
        let cfg = SimulationConfig::new(100_000, 0.99, 0.01).with_threshold(10_000);
        assert_eq!(fragmentation_rate(10_000, &cfg), 0.0);
        assert!(fragmentation_rate(10_001, &cfg) > 0.0);
    }

    #[test]
    fn validation_names_field() {
        let err = SimulationConfig::new(1, 1.0, 0.0).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "M", .. }));
        let err = SimulationConfig::new(10, 0.0, 0.0).validate().unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "K", .. }));
        let err = SimulationConfig::new(10, 1.0, 0.0)
            .with_threshold(11)
            .validate()
            .unwrap_err();
        assert!(matches!(err, Error::InvalidConfig { field: "threshold", .. }));
        assert!(SimulationConfig::new(10, 1.0, 0.0).validate().is_ok());
    }
}
