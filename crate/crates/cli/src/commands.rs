//! `run`, `analyze` and `meanfield`.

use std::collections::BTreeMap;

use anyhow::{bail, Result};
use gelshatter::analysis::{alpha_series, fit_density, ScalingPoint};
use gelshatter::engine::{replica_config, run};
use gelshatter::meanfield::{catalan_steady_state, integrate, integrate_to_steady, MeanFieldState, Rates};
use gelshatter::observables::{mean_cluster_density, size_value_csv, SizeHistogram};
use gelshatter::{SimulationConfig, Trajectory};
use rayon::prelude::*;
use serde::Serialize;

use crate::output::{Manifest, OutputDir};
use crate::params::{read_table, RunSettings};
use crate::summary::{alpha_csv, alpha_stats, find_trajectories, AlphaStats, PointSummary, TrajectoryFile};
use crate::{AnalyzeArgs, MeanfieldArgs, RunArgs};

fn run_settings(a: &RunArgs) -> Result<RunSettings> {
    let file = match &a.config {
        Some(p) => RunSettings::from_table(&read_table(p)?)?,
        None => RunSettings::default(),
    };
    let flags = RunSettings {
        mass: a.mass,
        k_hat: a.k_hat,
        f_hat: a.f_hat,
        threshold: a.threshold,
        seed: a.seed,
        steps: a.steps,
        sample_interval: a.sample_interval,
        replicas: a.replicas,
        init: a.init,
        histograms: a.histograms.then_some(true),
    };
    Ok(file.overridden_by(&flags))
}

/// Files written for one trajectory, relative to its directory.
fn trajectory_files(prefix: &str, histograms: bool) -> Vec<String> {
    let mut names = vec!["samples.csv", "events.csv", "trajectory.json"];
    if histograms {
        names.extend(["alpha.csv", "density.csv"]);
    }
    names.into_iter().map(|n| format!("{prefix}{n}")).collect()
}

/// Writes the per-trajectory tables under `prefix`.
pub fn write_trajectory(out: &mut OutputDir, prefix: &str, file: &TrajectoryFile) -> Result<()> {
    let t = &file.trajectory;
    out.write(&format!("{prefix}samples.csv"), t.samples_csv())?;
    out.write(&format!("{prefix}events.csv"), t.events_csv())?;
    out.write(&format!("{prefix}trajectory.json"), file.to_json())?;
    if t.config.record_histograms {
        out.write(&format!("{prefix}alpha.csv"), alpha_csv(&alpha_series(t, 1)))?;
        let hists: Vec<SizeHistogram> = t.samples.iter().filter_map(|s| s.histogram.clone()).collect();
        if let Ok(d) = mean_cluster_density(&hists) {
            out.write(&format!("{prefix}density.csv"), size_value_csv(d))?;
        }
    }
    Ok(())
}

/// Runs `replicas` trajectories of `cfg` as point `point` of a campaign
/// seeded by `cfg.seed`, in replica order.
pub fn simulate_point(cfg: &SimulationConfig, point: u64, replicas: u64) -> Result<Vec<Trajectory>> {
    let runs: gelshatter::Result<Vec<Trajectory>> = (0..replicas)
        .into_par_iter()
        .map(|k| run(&replica_config(cfg, point, k)))
        .collect();
    Ok(runs?)
}

#[derive(Serialize)]
struct RunSummaryFile<'a> {
    #[serde(flatten)]
    point: &'a PointSummary,
    #[serde(skip_serializing_if = "Option::is_none")]
    alpha: Option<AlphaStats>,
}

pub fn cmd_run(a: &RunArgs) -> Result<()> {
    let settings = run_settings(a)?;
    let cfg = settings.to_config()?;
    let replicas = settings.replicas.unwrap_or(1);
    if replicas == 0 {
        bail!("invalid config: replicas: must be at least 1");
    }
    let prefixes: Vec<String> = if replicas == 1 {
        vec![String::new()]
    } else {
        (0..replicas).map(|k| format!("replica-{k:03}/")).collect()
    };
    let mut out = OutputDir::create(a.exec.out_or("gelshatter-run"), a.exec.force)?;
    let mut planned: Vec<String> = prefixes
        .iter()
        .flat_map(|p| trajectory_files(p, cfg.record_histograms))
        .collect();
    planned.extend(["summary.json".to_string(), crate::output::MANIFEST.to_string()]);
    out.ensure_free(&planned)?;

    let trajs = a.exec.install(|| simulate_point(&cfg, 0, replicas))??;
    for (k, (t, prefix)) in trajs.iter().zip(&prefixes).enumerate() {
        write_trajectory(&mut out, prefix, &TrajectoryFile::new(cfg.seed, 0, k as u64, t.clone()))?;
    }
    let summary = PointSummary::of(&cfg, &trajs)?;
    let alpha = cfg
        .record_histograms
        .then(|| alpha_stats(&alpha_series(&trajs[0], 1), &trajs[0], 1))
        .flatten();
    let file = RunSummaryFile {
        point: &summary,
        alpha,
    };
    out.write("summary.json", serde_json::to_string_pretty(&file)?)?;
    out.write_manifest(Manifest::new("run"))?;
    println!("{}", summary.line());
    Ok(())
}

#[derive(Serialize)]
struct AnalysisGroup {
    sources: Vec<String>,
    #[serde(flatten)]
    point: PointSummary,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    alpha: Vec<AlphaStats>,
    #[serde(skip_serializing_if = "Option::is_none")]
    time_averaged_alpha: Option<f64>,
}

/// Parameters that identify a point, ignoring seeds.
fn point_key(c: &SimulationConfig) -> String {
    format!("{}|{}|{}|{}|{:?}", c.mass, c.k_hat, c.f_hat, c.frag_threshold, c.init)
}

pub fn cmd_analyze(a: &AnalyzeArgs) -> Result<()> {
    let mut paths = Vec::new();
    for input in &a.inputs {
        paths.extend(find_trajectories(input)?);
    }
    let mut groups: BTreeMap<String, (Vec<String>, Vec<Trajectory>)> = BTreeMap::new();
    let mut order = Vec::new();
    for p in &paths {
        let t = TrajectoryFile::load(p)?;
        let key = point_key(&t.config);
        if !groups.contains_key(&key) {
            order.push(key.clone());
        }
        let g = groups.entry(key).or_default();
        g.0.push(p.display().to_string());
        g.1.push(t);
    }
    let mut results = Vec::new();
    for key in order {
        let (sources, trajs) = groups.remove(&key).expect("group exists");
        let point = PointSummary::of(&trajs[0].config, &trajs)?;
        let alpha: Vec<AlphaStats> = trajs
            .iter()
            .filter_map(|t| alpha_stats(&alpha_series(t, a.k_min), t, a.k_min))
            .collect();
        let hists: Vec<SizeHistogram> = trajs
            .iter()
            .flat_map(|t| t.samples.iter().filter_map(|s| s.histogram.clone()))
            .collect();
        let time_averaged_alpha = mean_cluster_density(&hists)
            .ok()
            .and_then(|d| fit_density(&d, a.k_min).ok())
            .map(|f| f.alpha);
        println!("{} M={} K={} F={}: {}", sources[0], point.config.mass, point.config.k_hat, point.config.f_hat, point.line());
        results.push(AnalysisGroup {
            sources,
            point,
            alpha,
            time_averaged_alpha,
        });
    }
    if let Some(dir) = &a.exec.out {
        let mut out = OutputDir::create(dir, a.exec.force)?;
        out.ensure_free(&["analysis.json".into(), "scaling.csv".into(), crate::output::MANIFEST.into()])?;
        out.write("analysis.json", serde_json::to_string_pretty(&results)?)?;
        let mut csv = format!("{}\n", ScalingPoint::csv_header());
        for r in &results {
            csv.push_str(&r.point.scaling.csv_row());
            csv.push('\n');
        }
        out.write("scaling.csv", csv)?;
        out.write_manifest(Manifest::new("analyze"))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct MeanfieldSummary {
    k_hat: f64,
    f_hat: f64,
    k_c: usize,
    dt: f64,
    t: f64,
    converged: Option<bool>,
    mass_drift: f64,
    gamma: Option<f64>,
    rho1: Option<f64>,
    convergence_ratio: Option<f64>,
    max_rel_err_k_le_20: Option<f64>,
}

pub fn cmd_meanfield(a: &MeanfieldArgs) -> Result<()> {
    let k_c = a.k_c as usize;
    if k_c < 1 {
        bail!("invalid numerics: kc must be at least 1");
    }
    let mut out = OutputDir::create(a.exec.out_or("gelshatter-meanfield"), a.exec.force)?;
    out.ensure_free(&["meanfield.csv".into(), "summary.json".into(), crate::output::MANIFEST.into()])?;
    let rates = Rates {
        k_hat: a.k_hat,
        f_hat: a.f_hat,
    };
    let start = MeanFieldState::monomers(k_c, 1.0);
    let (state, converged) = match a.duration {
        Some(t) => (integrate(&start, rates, a.dt, t)?, None),
        None => {
            let (s, ok) = integrate_to_steady(&start, rates, a.dt, a.tol, a.t_max)?;
            (s, Some(ok))
        }
    };
    let closed = catalan_steady_state(a.k_hat, a.f_hat, k_c).ok();
    let rho = state.mass_density();
    let rel = |i: usize| closed.as_ref().map(|c| ((rho[i] - c.rho[i]) / c.rho[i]).abs());
    let mut csv = String::from("k,n_k,rho_k,rho_k_closed,rel_err\n");
    for i in 0..k_c {
        let c = closed.as_ref().map_or(f64::NAN, |c| c.rho[i]);
        let e = rel(i).unwrap_or(f64::NAN);
        csv.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", i + 1, state.n[i], rho[i], c, e));
    }
    out.write("meanfield.csv", csv)?;
    let max_rel = closed
        .as_ref()
        .map(|_| (0..k_c.min(20)).filter_map(rel).fold(0.0, f64::max));
    let summary = MeanfieldSummary {
        k_hat: a.k_hat,
        f_hat: a.f_hat,
        k_c,
        dt: a.dt,
        t: state.t,
        converged,
        mass_drift: (state.total_mass() - 1.0).abs(),
        gamma: closed.as_ref().map(|c| c.gamma),
        rho1: closed.as_ref().map(|c| c.rho1),
        convergence_ratio: closed.as_ref().map(|c| c.convergence_ratio()),
        max_rel_err_k_le_20: max_rel,
    };
    out.write("summary.json", serde_json::to_string_pretty(&summary)?)?;
    out.write_manifest(Manifest::new("meanfield"))?;
    println!(
        "t={} mass drift={:e} max rel err (k<=20)={}",
        state.t,
        summary.mass_drift,
        max_rel.map_or("n/a".into(), |e| format!("{e:e}"))
    );
    Ok(())
}
