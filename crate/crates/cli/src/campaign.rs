//! Sweep campaigns over `(M, K̂, F̂, threshold)` grids.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use anyhow::{anyhow, bail, Context, Result};
use gelshatter::analysis::{collapse, envelope_exponents, CollapseSummary, EnvelopeExponents, ScalingPoint};
use gelshatter::observables::{heatmap, recurrence_times};
use gelshatter::seed::digest_hex;
use gelshatter::{InitialCondition, SimulationConfig, Trajectory};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use toml::Table;

use crate::commands::write_trajectory;
use crate::output::{file_digest, Manifest, OutputDir, PointStatus, MANIFEST};
use crate::params::{
    check_keys, read_table, value_to_bool, value_to_count, value_to_f64, value_to_list, value_to_str,
};
use crate::summary::{PointSummary, TrajectoryFile};
use crate::{ExecArgs, SweepArgs};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum StepBudget {
    /// `(target_cycles + 1) × ⟨t_r⟩` estimate plus the initial gelation.
    Auto,
    Fixed(u64),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum KSpec {
    /// `K̂ = 1 − F̂` at each point.
    Complement,
    Values(Vec<f64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CampaignSpec {
    pub masses: Vec<u64>,
    pub f_values: Vec<f64>,
    pub k: KSpec,
    pub thresholds: Vec<u64>,
    pub replicas: u64,
    pub seed: u64,
    pub steps: StepBudget,
    pub target_cycles: f64,
    pub step_cap: u64,
    /// `None` samples about 10⁴ times per trajectory.
    pub sample_interval: Option<u64>,
    pub heatmap_bins: usize,
    pub histograms: bool,
    pub init: InitialCondition,
    /// Also write every replica's trajectory files.
    pub trajectories: bool,
    pub out: Option<PathBuf>,
}

pub const CAMPAIGN_KEYS: &[&str] = &[
    "M",
    "F",
    "K",
    "threshold",
    "replicas",
    "seed",
    "steps",
    "target-cycles",
    "step-cap",
    "sample-interval",
    "heatmap-bins",
    "histograms",
    "init",
    "trajectories",
    "out",
];

impl Default for CampaignSpec {
    fn default() -> Self {
        Self {
            masses: Vec::new(),
            f_values: Vec::new(),
            k: KSpec::Complement,
            thresholds: vec![1],
            replicas: 1,
            seed: 0,
            steps: StepBudget::Auto,
            target_cycles: 30.0,
            step_cap: 50_000_000,
            sample_interval: None,
            heatmap_bins: 100,
            histograms: false,
            init: InitialCondition::AllMonomers,
            trajectories: false,
            out: None,
        }
    }
}

fn is_auto(v: &toml::Value) -> bool {
    v.as_str() == Some("auto")
}

impl CampaignSpec {
    pub fn from_table(t: &Table) -> Result<Self> {
        check_keys(t, CAMPAIGN_KEYS)?;
        let mut spec = Self {
            masses: value_to_list("M", t.get("M").ok_or_else(|| anyhow!("campaign: M is required"))?, value_to_count)?,
            f_values: value_to_list("F", t.get("F").ok_or_else(|| anyhow!("campaign: F is required"))?, value_to_f64)?,
            ..Self::default()
        };
        if let Some(v) = t.get("K") {
            spec.k = if v.as_str() == Some("complement") {
                KSpec::Complement
            } else {
                KSpec::Values(value_to_list("K", v, value_to_f64)?)
            };
        }
        if let Some(v) = t.get("threshold") {
            spec.thresholds = value_to_list("threshold", v, value_to_count)?;
        }
        if let Some(v) = t.get("replicas") {
            spec.replicas = value_to_count("replicas", v)?;
        }
        if let Some(v) = t.get("seed") {
            spec.seed = value_to_count("seed", v)?;
        }
        if let Some(v) = t.get("steps") {
            spec.steps = if is_auto(v) {
                StepBudget::Auto
            } else {
                StepBudget::Fixed(value_to_count("steps", v)?)
            };
        }
        if let Some(v) = t.get("target-cycles") {
            spec.target_cycles = value_to_f64("target-cycles", v)?;
        }
        if let Some(v) = t.get("step-cap") {
            spec.step_cap = value_to_count("step-cap", v)?;
        }
        if let Some(v) = t.get("sample-interval") {
            spec.sample_interval = if is_auto(v) {
                None
            } else {
                Some(value_to_count("sample-interval", v)?)
            };
        }
        if let Some(v) = t.get("heatmap-bins") {
            spec.heatmap_bins = value_to_count("heatmap-bins", v)? as usize;
        }
        if let Some(v) = t.get("histograms") {
            spec.histograms = value_to_bool("histograms", v)?;
        }
        if let Some(v) = t.get("init") {
            spec.init = value_to_str("init", v)?.parse()?;
        }
        if let Some(v) = t.get("trajectories") {
            spec.trajectories = value_to_bool("trajectories", v)?;
        }
        if let Some(v) = t.get("out") {
            spec.out = Some(PathBuf::from(value_to_str("out", v)?));
        }
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_table(&read_table(path)?).with_context(|| format!("in campaign {}", path.display()))
    }

    /// The campaign in the flat file format it was read from.
    pub fn to_toml(&self) -> String {
        fn list<T: std::fmt::Debug>(v: &[T]) -> String {
            let items: Vec<String> = v.iter().map(|x| format!("{x:?}")).collect();
            format!("[{}]", items.join(", "))
        }
        let mut s = String::new();
        s.push_str(&format!("M = {}\n", list(&self.masses)));
        s.push_str(&format!("F = {}\n", list(&self.f_values)));
        match &self.k {
            KSpec::Complement => s.push_str("K = \"complement\"\n"),
            KSpec::Values(v) => s.push_str(&format!("K = {}\n", list(v))),
        }
        s.push_str(&format!("threshold = {}\n", list(&self.thresholds)));
        s.push_str(&format!("replicas = {}\nseed = {}\n", self.replicas, self.seed));
        match self.steps {
            StepBudget::Auto => s.push_str("steps = \"auto\"\n"),
            StepBudget::Fixed(n) => s.push_str(&format!("steps = {n}\n")),
        }
        s.push_str(&format!("target-cycles = {:?}\nstep-cap = {}\n", self.target_cycles, self.step_cap));
        match self.sample_interval {
            None => s.push_str("sample-interval = \"auto\"\n"),
            Some(n) => s.push_str(&format!("sample-interval = {n}\n")),
        }
        s.push_str(&format!(
            "heatmap-bins = {}\nhistograms = {}\ninit = \"{}\"\ntrajectories = {}\n",
            self.heatmap_bins,
            self.histograms,
            match self.init {
                InitialCondition::AllMonomers => "all-monomers",
                InitialCondition::SingleGel => "single-gel",
            },
            self.trajectories
        ));
        s
    }

    /// Every grid point in `M`, `F̂`, `K̂`, threshold order.
    pub fn points(&self) -> Result<Vec<GridPoint>> {
        if self.replicas == 0 {
            bail!("invalid campaign: replicas: must be at least 1");
        }
        if self.heatmap_bins < 2 {
            bail!("invalid campaign: heatmap-bins: must be at least 2");
        }
        if self.target_cycles.is_nan() || self.target_cycles <= 0.0 {
            bail!("invalid campaign: target-cycles: must be positive");
        }
        let mut out = Vec::new();
        for &m in &self.masses {
            for &f in &self.f_values {
                let ks = match &self.k {
                    KSpec::Complement => vec![1.0 - f],
                    KSpec::Values(v) => v.clone(),
                };
                for &k in &ks {
                    for &thr in &self.thresholds {
                        let steps = match self.steps {
                            StepBudget::Fixed(n) => n,
                            StepBudget::Auto => auto_steps(m, k, f, self.target_cycles, self.step_cap),
                        };
                        let interval = self.sample_interval.unwrap_or((steps / 10_000).max(1));
                        let cfg = SimulationConfig::new(m, k, f)
                            .with_threshold(thr)
                            .with_seed(self.seed)
                            .with_steps(steps)
                            .with_sample_interval(interval)
                            .with_histograms(self.histograms)
                            .with_init(self.init);
                        let index = out.len();
                        cfg.validate()
                            .with_context(|| format!("grid point {index} (M={m}, K={k}, F={f}, threshold={thr})"))?;
                        out.push(GridPoint {
                            index,
                            config: cfg,
                            replicas: self.replicas,
                            heatmap_bins: self.heatmap_bins,
                            trajectories: self.trajectories,
                        });
                    }
                }
            }
        }
        if out.is_empty() {
            bail!("invalid campaign: the grid is empty");
        }
        Ok(out)
    }
}

/// Step budget for about `target` recurrences: the larger of the forced
/// (`1/F̂`) and unforced (`√(πM/(2F̂K̂))`) estimates of `⟨t_r⟩`, times
/// `target + 1`, plus `M/K̂` for the first gelation; capped at `cap`.
pub fn auto_steps(mass: u64, k_hat: f64, f_hat: f64, target: f64, cap: u64) -> u64 {
    if f_hat <= 0.0 || k_hat <= 0.0 {
        return cap;
    }
    let m = mass as f64;
    let tr = (1.0 / f_hat).max((PI * m / (2.0 * f_hat * k_hat)).sqrt());
    let budget = (target + 1.0) * tr + m / k_hat;
    if budget >= cap as f64 {
        cap
    } else {
        budget.ceil() as u64
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GridPoint {
    pub index: usize,
    pub config: SimulationConfig,
    pub replicas: u64,
    pub heatmap_bins: usize,
    pub trajectories: bool,
}

impl GridPoint {
    pub fn dir(&self) -> String {
        format!("points/p{:04}/", self.index)
    }

    /// Digest of everything that determines this point's outputs.
    pub fn key(&self) -> String {
        digest_hex(serde_json::to_string(self).expect("grid point serializes").as_bytes())
    }
}

/// Contents of `points/pNNNN/point.json`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointRecord {
    pub index: usize,
    pub key: String,
    #[serde(flatten)]
    pub summary: PointSummary,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RegimeLabel {
    pub index: usize,
    #[serde(rename = "M")]
    pub mass: u64,
    pub r: f64,
    pub regime: String,
}

/// Contents of `collapse.json`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CollapseFile {
    pub collapse: Option<CollapseSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collapse_error: Option<String>,
    /// `E ∝ M^a r^b` over points in the unforced regime.
    pub envelope: Option<EnvelopeExponents>,
    pub regimes: Vec<RegimeLabel>,
}

pub struct CampaignOutcome {
    pub records: Vec<PointRecord>,
    pub failed: Vec<(usize, String)>,
    pub reused: usize,
}

fn write_point(out: &mut OutputDir, p: &GridPoint, trajs: &[Trajectory]) -> Result<PointRecord> {
    let dir = p.dir();
    let samples: Vec<_> = trajs.iter().flat_map(|t| t.samples.iter().cloned()).collect();
    let hm = heatmap(&samples, p.config.mass, p.heatmap_bins)?;
    out.write(&format!("{dir}heatmap.csv"), hm.to_csv())?;
    out.write(&format!("{dir}heatmap.json"), serde_json::to_string_pretty(&hm.sidecar_json())?)?;
    let mut rec = String::from("replica,t_r\n");
    for (k, t) in trajs.iter().enumerate() {
        for tr in recurrence_times(&t.shatter_events) {
            rec.push_str(&format!("{k},{tr}\n"));
        }
    }
    out.write(&format!("{dir}recurrence.csv"), rec)?;
    if p.trajectories {
        for (k, t) in trajs.iter().enumerate() {
            let file = TrajectoryFile::new(p.config.seed, p.index as u64, k as u64, t.clone());
            write_trajectory(out, &format!("{dir}replica-{k:03}/"), &file)?;
        }
    }
    let record = PointRecord {
        index: p.index,
        key: p.key(),
        summary: PointSummary::of(&p.config, trajs)?,
    };
    out.write(&format!("{dir}point.json"), serde_json::to_string_pretty(&record)?)?;
    Ok(record)
}

/// A finished point from an earlier invocation whose files are intact.
fn reusable(prior: &Manifest, out: &OutputDir, p: &GridPoint) -> Option<PointRecord> {
    let status = prior.points.iter().find(|s| s.index == p.index)?;
    if status.status != "done" || status.key != p.key() {
        return None;
    }
    let prefix = p.dir();
    let files: Vec<_> = prior.files.iter().filter(|f| f.path.starts_with(&prefix)).collect();
    if files.is_empty() {
        return None;
    }
    for f in &files {
        if file_digest(&out.path(&f.path)).as_deref() != Some(f.sha256.as_str()) {
            return None;
        }
    }
    let text = std::fs::read_to_string(out.path(&format!("{prefix}point.json"))).ok()?;
    serde_json::from_str(&text).ok()
}

pub fn scaling_csv(records: &[PointRecord]) -> String {
    let mut s = format!("{}\n", ScalingPoint::csv_header());
    for r in records {
        s.push_str(&r.summary.scaling.csv_row());
        s.push('\n');
    }
    s
}

pub fn collapse_file(records: &[PointRecord]) -> CollapseFile {
    let points: Vec<ScalingPoint> = records.iter().map(|r| r.summary.scaling).collect();
    let (collapse, collapse_error) = match collapse(&points) {
        Ok(c) => (Some(c), None),
        Err(e) => (None, Some(e.to_string())),
    };
    let unforced: Vec<_> = records
        .iter()
        .map(|r| r.summary.envelope)
        .filter(|e| e.in_unforced_regime)
        .collect();
    CollapseFile {
        collapse,
        collapse_error,
        envelope: envelope_exponents(&unforced).ok(),
        regimes: records
            .iter()
            .map(|r| RegimeLabel {
                index: r.index,
                mass: r.summary.config.mass,
                r: r.summary.scaling.r,
                regime: r.summary.regime.clone(),
            })
            .collect(),
    }
}

/// File name and builder for an additional campaign-level output.
pub type ExtraFile<'a> = (&'a str, fn(&[PointRecord]) -> String);

/// Runs (or resumes) a campaign in `dir`. `extras` maps file names to
/// builders of additional top-level files that depend on the results.
pub fn run_campaign(
    spec: &CampaignSpec,
    dir: &Path,
    exec: &ExecArgs,
    command: &str,
    extras: &[ExtraFile],
) -> Result<CampaignOutcome> {
    let points = spec.points()?;
    let prior = Manifest::load(dir)?;
    let mut out = OutputDir::create(dir, exec.force || prior.is_some())?;
    if prior.is_none() {
        out.ensure_free(&[
            "points".into(),
            "campaign.toml".into(),
            "scaling.csv".into(),
            "scaling.json".into(),
            "collapse.json".into(),
            MANIFEST.into(),
        ])?;
    }
    out.write("campaign.toml", spec.to_toml())?;

    let mut records: Vec<Option<PointRecord>> = vec![None; points.len()];
    let mut statuses: Vec<PointStatus> = Vec::new();
    let mut pending = Vec::new();
    let mut reused = 0;
    for p in &points {
        match prior.as_ref().and_then(|m| reusable(m, &out, p)) {
            Some(rec) => {
                let prefix = p.dir();
                let paths: Vec<String> = prior
                    .as_ref()
                    .map(|m| m.files.iter().filter(|f| f.path.starts_with(&prefix)).map(|f| f.path.clone()).collect())
                    .unwrap_or_default();
                for path in paths {
                    out.adopt(&path)?;
                }
                records[p.index] = Some(rec);
                reused += 1;
            }
            None => pending.push(p.clone()),
        }
    }

    let mut manifest = Manifest::new(command);
    if let Some(m) = &prior {
        manifest.created_unix = m.created_unix;
    }
    let status_of = |records: &[Option<PointRecord>], failed: &[(usize, String)], p: &GridPoint| PointStatus {
        index: p.index,
        key: p.key(),
        status: if records[p.index].is_some() {
            "done".into()
        } else if failed.iter().any(|f| f.0 == p.index) {
            "failed".into()
        } else {
            "pending".into()
        },
        error: failed.iter().find(|f| f.0 == p.index).map(|f| f.1.clone()),
    };

    let batch = exec
        .install(rayon::current_num_threads)?
        .max(1);
    let mut failed: Vec<(usize, String)> = Vec::new();
    for chunk in pending.chunks(batch) {
        let tasks: Vec<(usize, u64)> = chunk
            .iter()
            .enumerate()
            .flat_map(|(i, p)| (0..p.replicas).map(move |k| (i, k)))
            .collect();
        let results: Vec<gelshatter::Result<Trajectory>> = exec.install(|| {
            tasks
                .par_iter()
                .map(|&(i, k)| {
                    let p = &chunk[i];
                    gelshatter::engine::run(&gelshatter::engine::replica_config(&p.config, p.index as u64, k))
                })
                .collect()
        })?;
        let mut results = results.into_iter();
        for p in chunk {
            let trajs: gelshatter::Result<Vec<Trajectory>> = results.by_ref().take(p.replicas as usize).collect();
            let outcome = trajs.map_err(anyhow::Error::from).and_then(|t| write_point(&mut out, p, &t));
            match outcome {
                Ok(rec) => records[p.index] = Some(rec),
                Err(e) => failed.push((p.index, format!("{e:#}"))),
            }
        }
        statuses = points.iter().map(|p| status_of(&records, &failed, p)).collect();
        manifest.points = statuses.clone();
        out.write_manifest(manifest.clone())?;
    }
    if statuses.is_empty() {
        statuses = points.iter().map(|p| status_of(&records, &failed, p)).collect();
    }

    let done: Vec<PointRecord> = records.into_iter().flatten().collect();
    out.write("scaling.csv", scaling_csv(&done))?;
    let table: Vec<&PointSummary> = done.iter().map(|r| &r.summary).collect();
    out.write("scaling.json", serde_json::to_string_pretty(&table)?)?;
    out.write("collapse.json", serde_json::to_string_pretty(&collapse_file(&done))?)?;
    for (name, build) in extras {
        out.write(name, build(&done))?;
    }
    manifest.points = statuses;
    out.write_manifest(manifest)?;
    Ok(CampaignOutcome {
        records: done,
        failed,
        reused,
    })
}

pub fn cmd_sweep(a: &SweepArgs) -> Result<()> {
    let mut spec = CampaignSpec::load(&a.campaign)?;
    if let Some(s) = a.seed {
        spec.seed = s;
    }
    if let Some(r) = a.replicas {
        spec.replicas = r;
    }
    if let Some(n) = a.steps {
        spec.steps = StepBudget::Fixed(n);
    }
    let dir = a
        .exec
        .out
        .clone()
        .or_else(|| spec.out.clone())
        .unwrap_or_else(|| PathBuf::from("gelshatter-sweep"));
    let outcome = run_campaign(&spec, &dir, &a.exec, "sweep", &[])?;
    report(&outcome)
}

/// Prints one line per point; fails if any point failed.
pub fn report(outcome: &CampaignOutcome) -> Result<()> {
    for r in &outcome.records {
        let s = &r.summary.scaling;
        println!(
            "point {:>4}: M={} K={} F={} r={:.4} g={:.4} cyclicity={:.4} cycles={} [{}]",
            r.index, s.mass, s.k_hat, s.f_hat, s.r, s.g, s.cyclicity, s.n_cycles, r.summary.regime
        );
    }
    if outcome.reused > 0 {
        println!("{} point(s) reused from an earlier run", outcome.reused);
    }
    if !outcome.failed.is_empty() {
        for (i, e) in &outcome.failed {
            eprintln!("point {i} failed: {e}");
        }
        bail!("{} point(s) failed", outcome.failed.len());
    }
    Ok(())
}
