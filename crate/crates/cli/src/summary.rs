//! Per-point analysis shared by `run`, `sweep` and `analyze`.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use gelshatter::analysis::{
    classify_regime, compare_recurrence_laws, implied_growth_constant, largest_cluster_scale, pooled_recurrence_times,
    EnvelopePoint, RecurrenceFits, ScalingPoint,
};
use gelshatter::observables::recurrence_times;
use gelshatter::{SimulationConfig, Trajectory};
use serde::{Deserialize, Serialize};

pub const TRAJECTORY_FORMAT: &str = "gelshatter-trajectory/1";

/// Recorded in every output that reports recurrence statistics.
pub const RECURRENCE_CONVENTION: &str = "recurrence times are intervals between successive shatterings \
of the largest cluster; the first interval (initial gelation from monomers) is discarded";

/// On-disk form of one trajectory: config echo, seeds and both tables.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrajectoryFile {
    pub format: String,
    pub master_seed: u64,
    pub point: u64,
    pub replica: u64,
    pub recurrence_convention: String,
    pub trajectory: Trajectory,
}

impl TrajectoryFile {
    pub fn new(master_seed: u64, point: u64, replica: u64, trajectory: Trajectory) -> Self {
        Self {
            format: TRAJECTORY_FORMAT.into(),
            master_seed,
            point,
            replica,
            recurrence_convention: RECURRENCE_CONVENTION.into(),
            trajectory,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory file serializes")
    }

    /// Reads either the envelope or a bare serialized trajectory.
    pub fn load(path: &Path) -> Result<Trajectory> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        let value: serde_json::Value =
            serde_json::from_str(&text).with_context(|| format!("parsing {}", path.display()))?;
        let inner = if value.get("format").is_some() {
            value.get("trajectory").cloned().unwrap_or_default()
        } else {
            value
        };
        serde_json::from_value(inner).with_context(|| format!("{} is not a trajectory", path.display()))
    }
}

/// Trajectory files under `path`: the file itself, `trajectory.json` in the
/// directory, or `*/trajectory.json` one level down, in sorted order.
pub fn find_trajectories(path: &Path) -> Result<Vec<PathBuf>> {
    if path.is_file() {
        return Ok(vec![path.to_path_buf()]);
    }
    let direct = path.join("trajectory.json");
    if direct.is_file() {
        return Ok(vec![direct]);
    }
    let mut found = Vec::new();
    for entry in std::fs::read_dir(path).with_context(|| format!("reading {}", path.display()))? {
        let candidate = entry?.path().join("trajectory.json");
        if candidate.is_file() {
            found.push(candidate);
        }
    }
    found.sort();
    if found.is_empty() {
        bail!("no trajectory.json found under {}", path.display());
    }
    Ok(found)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicaSummary {
    pub seed: u64,
    pub final_n: u64,
    pub final_k_max: u64,
    pub shatter_events: u64,
    pub cycles: u64,
    pub cyclicity: f64,
    pub rng_fingerprint: String,
}

impl ReplicaSummary {
    pub fn of(t: &Trajectory) -> Self {
        Self {
            seed: t.config.seed,
            final_n: t.final_histogram.n_clusters(),
            final_k_max: t.final_histogram.k_max(),
            shatter_events: t.shatter_events.len() as u64,
            cycles: recurrence_times(&t.shatter_events).len() as u64,
            cyclicity: t.cyclicity.value(),
            rng_fingerprint: t.rng_fingerprint.clone(),
        }
    }
}

/// Statistics of the replicas of one parameter point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointSummary {
    pub config: SimulationConfig,
    pub replicas: Vec<ReplicaSummary>,
    pub scaling: ScalingPoint,
    pub regime: String,
    pub recurrence: Option<RecurrenceFits>,
    /// `c` in `m(t) = c K̂ t` implied by the mean recurrence time.
    pub growth_constant: Option<f64>,
    pub envelope: EnvelopePoint,
    pub recurrence_convention: String,
}

impl PointSummary {
    /// `config` is the point's configuration before per-replica seeding.
    pub fn of(config: &SimulationConfig, trajs: &[Trajectory]) -> Result<Self> {
        let scaling = ScalingPoint::from_trajectories(trajs)?;
        let times = pooled_recurrence_times(trajs);
        let recurrence = compare_recurrence_laws(&times).ok();
        let growth_constant = (scaling.mean_tr.is_finite() && config.f_hat > 0.0 && config.k_hat > 0.0)
            .then(|| implied_growth_constant(config.mass, config.k_hat, config.f_hat, scaling.mean_tr));
        let envelope = largest_cluster_scale(&[trajs.to_vec()])
            .pop()
            .context("no trajectories")?;
        Ok(Self {
            config: config.clone(),
            replicas: trajs.iter().map(ReplicaSummary::of).collect(),
            regime: classify_regime(scaling.r).to_string(),
            scaling,
            recurrence,
            growth_constant,
            envelope,
            recurrence_convention: RECURRENCE_CONVENTION.into(),
        })
    }

    /// One-line summary for the terminal.
    pub fn line(&self) -> String {
        let first = &self.replicas[0];
        let replicas = if self.replicas.len() > 1 {
            format!(" (replica 0 of {})", self.replicas.len())
        } else {
            String::new()
        };
        format!(
            "final N={} k_max={}{replicas} cycles={} cyclicity={:.4}",
            first.final_n, first.final_k_max, self.scaling.n_cycles, self.scaling.cyclicity
        )
    }
}

/// Spread of the instantaneous exponent over the cycling part of a run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AlphaStats {
    pub k_min: u64,
    pub snapshots: usize,
    pub mean: f64,
    pub p05: f64,
    pub median: f64,
    pub p95: f64,
}

/// Statistics of `α̂(t)` over snapshots taken after the first shattering of
/// the largest cluster; `None` without histograms or cycles.
pub fn alpha_stats(series: &[(u64, f64)], t: &Trajectory, k_min: u64) -> Option<AlphaStats> {
    let start = t.shatter_events.iter().find(|e| e.was_largest)?.step;
    let mut v: Vec<f64> = series.iter().filter(|(s, _)| *s >= start).map(|p| p.1).collect();
    if v.is_empty() {
        return None;
    }
    v.sort_by(f64::total_cmp);
    let q = |p: f64| v[((v.len() - 1) as f64 * p).round() as usize];
    Some(AlphaStats {
        k_min,
        snapshots: v.len(),
        mean: v.iter().sum::<f64>() / v.len() as f64,
        p05: q(0.05),
        median: q(0.5),
        p95: q(0.95),
    })
}

pub fn alpha_csv(series: &[(u64, f64)]) -> String {
    let mut out = String::from("step,alpha\n");
    for (s, a) in series {
        out.push_str(&format!("{s},{a}\n"));
    }
    out
}
