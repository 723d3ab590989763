//! Canonical recipes for the four standard figures.
//!
//! Step budgets are estimates: each recipe writes its parameters next to
//! the data so a run can be enlarged and repeated.

use anyhow::{anyhow, bail, Result};
use gelshatter::analysis::{alpha_series, fit_density, fit_histogram, median_snapshot, PowerLawFit};
use gelshatter::observables::{ccdf, ccdf_of_density, mean_cluster_density, size_value_csv, SizeHistogram};
use gelshatter::{SimulationConfig, Trajectory};
use serde::Serialize;

use crate::campaign::{report, run_campaign, CampaignSpec, KSpec, PointRecord, StepBudget};
use crate::commands::simulate_point;
use crate::output::{Manifest, OutputDir, MANIFEST};
use crate::summary::{alpha_csv, alpha_stats, AlphaStats, TrajectoryFile};
use crate::{Figure, ReproduceArgs};

const FIG4_F: [f64; 8] = [1e-4, 3e-4, 1e-3, 3e-3, 1e-2, 3e-2, 1e-1, 3e-1];
const FIG4_DESK_M: [u64; 5] = [100, 300, 1_000, 3_000, 10_000];
const FIG4_FULL_M: [u64; 7] = [100, 300, 1_000, 3_000, 10_000, 30_000, 100_000];

/// Configuration of the single-run figures.
pub fn recipe_config(fig: Figure, seed: u64, steps: Option<u64>) -> Option<SimulationConfig> {
    let base = SimulationConfig::new(100_000, 0.99, 0.01).with_seed(seed).with_histograms(true);
    match fig {
        Figure::Fig1 => Some(
            base.with_threshold(10_000)
                .with_steps(steps.unwrap_or(4_000_000))
                .with_sample_interval(2_000),
        ),
        Figure::Fig2 => Some(base.with_steps(steps.unwrap_or(2_000_000)).with_sample_interval(1_000)),
        _ => None,
    }
}

/// Campaign behind the grid figures.
pub fn recipe_campaign(fig: Figure, seed: u64, steps: Option<u64>, full: bool) -> Option<CampaignSpec> {
    let mut spec = CampaignSpec {
        seed,
        k: KSpec::Complement,
        steps: steps.map_or(StepBudget::Auto, StepBudget::Fixed),
        ..Default::default()
    };
    match fig {
        Figure::Fig3 => {
            spec.masses = vec![300, 30_000];
            spec.f_values = vec![1e-3, 1e-1];
            spec.target_cycles = 200.0;
        }
        Figure::Fig4 => {
            spec.masses = if full { FIG4_FULL_M.to_vec() } else { FIG4_DESK_M.to_vec() };
            spec.f_values = FIG4_F.to_vec();
            spec.replicas = 4;
            spec.target_cycles = 50.0;
        }
        _ => return None,
    }
    Some(spec)
}

fn config_toml(c: &SimulationConfig) -> String {
    format!(
        "M = {}\nK = {:?}\nF = {:?}\nthreshold = {}\nseed = {}\nsteps = {}\nsample-interval = {}\nhistograms = {}\n",
        c.mass, c.k_hat, c.f_hat, c.frag_threshold, c.seed, c.max_steps, c.sample_interval, c.record_histograms
    )
}

fn parse_window(s: &str) -> Result<(f64, f64)> {
    let (a, b) = s.split_once(':').ok_or_else(|| anyhow!("median-window must look like START:END"))?;
    let (a, b): (f64, f64) = (a.trim().parse()?, b.trim().parse()?);
    if !(0.0 <= a && a < b && b <= 1.0) {
        bail!("median-window needs 0 <= START < END <= 1");
    }
    Ok((a, b))
}

/// Histograms recorded after the first shattering of the largest cluster.
fn cycling_histograms(t: &Trajectory) -> Vec<(u64, SizeHistogram)> {
    let start = t.shatter_events.iter().find(|e| e.was_largest).map_or(0, |e| e.step);
    t.samples
        .iter()
        .filter(|s| s.step >= start)
        .filter_map(|s| Some((s.step, s.histogram.clone()?)))
        .collect()
}

#[derive(Serialize)]
struct Fig1Fit {
    time_averaged: Option<PowerLawFit>,
    time_averaged_full_window: Option<PowerLawFit>,
    snapshot_step: Option<u64>,
    snapshot: Option<PowerLawFit>,
    snapshots_averaged: usize,
    median_window: (f64, f64),
}

fn single_run(a: &ReproduceArgs, cfg: &SimulationConfig, out: &mut OutputDir) -> Result<Trajectory> {
    let t = a.exec.install(|| simulate_point(cfg, 0, 1))??.remove(0);
    out.write("recipe.toml", config_toml(cfg))?;
    out.write("samples.csv", t.samples_csv())?;
    out.write("events.csv", t.events_csv())?;
    Ok(t)
}

fn fig1(a: &ReproduceArgs, cfg: &SimulationConfig, out: &mut OutputDir) -> Result<()> {
    let window = parse_window(&a.median_window)?;
    let t = single_run(a, cfg, out)?;
    let hists = cycling_histograms(&t);
    let only: Vec<SizeHistogram> = hists.iter().map(|h| h.1.clone()).collect();
    let density = mean_cluster_density(&only)?;
    out.write("density.csv", size_value_csv(density.iter().map(|(&k, &v)| (k, v))))?;
    out.write("density_ccdf.csv", size_value_csv(ccdf_of_density(&density)))?;

    let alphas: Vec<(usize, f64)> = hists
        .iter()
        .enumerate()
        .filter_map(|(i, (_, h))| fit_histogram(h, 1).ok().map(|f| (i, f.alpha)))
        .collect();
    let values: Vec<f64> = alphas.iter().map(|p| p.1).collect();
    let n = values.len();
    let range = (window.0 * n as f64) as usize..(window.1 * n as f64).ceil() as usize;
    let chosen = median_snapshot(&values, range).map(|i| alphas[i].0);
    let mut snapshot = None;
    let mut snapshot_step = None;
    if let Some(i) = chosen {
        let (step, h) = &hists[i];
        out.write("snapshot.csv", size_value_csv(h.counts.iter().map(|(&k, &c)| (k, c))))?;
        out.write("snapshot_ccdf.csv", size_value_csv(ccdf(h)?))?;
        snapshot = fit_histogram(h, 1).ok();
        snapshot_step = Some(*step);
    }
    let fit = Fig1Fit {
        time_averaged: fit_density(&density, a.k_min).ok(),
        time_averaged_full_window: fit_density(&density, 1).ok(),
        snapshot_step,
        snapshot,
        snapshots_averaged: only.len(),
        median_window: window,
    };
    out.write("fit.json", serde_json::to_string_pretty(&fit)?)?;
    out.write("fig1.gp", FIG1_GP)?;
    match fit.time_averaged {
        Some(f) => println!("time-averaged exponent {:.3} (k >= {})", f.alpha, a.k_min),
        None => println!("time-averaged exponent unavailable"),
    }
    Ok(())
}

fn fig2(a: &ReproduceArgs, cfg: &SimulationConfig, out: &mut OutputDir) -> Result<()> {
    let t = single_run(a, cfg, out)?;
    let series = alpha_series(&t, 1);
    out.write("alpha.csv", alpha_csv(&series))?;
    let stats: Option<AlphaStats> = alpha_stats(&series, &t, 1);
    out.write("alpha.json", serde_json::to_string_pretty(&stats)?)?;
    out.write("fig2.gp", FIG2_GP)?;
    out.write(
        "trajectory.json",
        TrajectoryFile::new(cfg.seed, 0, 0, Trajectory {
            samples: t.samples.iter().map(|s| gelshatter::TrajectorySample { histogram: None, ..s.clone() }).collect(),
            ..t.clone()
        })
        .to_json(),
    )?;
    match stats {
        Some(s) => println!(
            "alpha mean {:.3}, 5-95% band [{:.3}, {:.3}] over {} snapshots; {} cycles",
            s.mean,
            s.p05,
            s.p95,
            s.snapshots,
            t.largest_shatter_count().saturating_sub(1)
        ),
        None => println!("no cycles observed"),
    }
    Ok(())
}

pub fn cmd_reproduce(a: &ReproduceArgs) -> Result<()> {
    let seed = a.seed.unwrap_or(0);
    let name = match a.figure {
        Figure::Fig1 => "fig1",
        Figure::Fig2 => "fig2",
        Figure::Fig3 => "fig3",
        Figure::Fig4 => "fig4",
    };
    let dir = a.exec.out_or(&format!("gelshatter-{name}"));
    if a.full && a.figure != Figure::Fig4 {
        bail!("--full applies to fig4 only");
    }
    if let Some(cfg) = recipe_config(a.figure, seed, a.steps) {
        let mut out = OutputDir::create(&dir, a.exec.force)?;
        out.ensure_free(&["recipe.toml".into(), "samples.csv".into(), MANIFEST.into()])?;
        match a.figure {
            Figure::Fig1 => fig1(a, &cfg, &mut out)?,
            _ => fig2(a, &cfg, &mut out)?,
        }
        out.write_manifest(Manifest::new(&format!("reproduce {name}")))?;
        return Ok(());
    }
    let spec = recipe_campaign(a.figure, seed, a.steps, a.full).expect("grid figure");
    if a.full {
        eprintln!("warning: full-scale fig4 runs M up to 1e5 and can take hours");
    }
    let script: (&str, fn(&[PointRecord]) -> String) = match a.figure {
        Figure::Fig3 => ("fig3.gp", fig3_script),
        _ => ("fig4.gp", |_| FIG4_GP.to_string()),
    };
    let outcome = run_campaign(&spec, &dir, &a.exec, &format!("reproduce {name}"), &[script])?;
    report(&outcome)
}

fn fig3_script(records: &[PointRecord]) -> String {
    let mut s = String::from(
        "set datafile separator ','\nset multiplot layout 2,2\nset xlabel 'k_max/M'\nset ylabel 'N/M'\n\
         set logscale cb\nset xrange [0:1]\nset yrange [0:1]\n",
    );
    for r in records {
        let c = &r.summary.config;
        s.push_str(&format!(
            "set title 'M={} F={}'\nplot 'points/p{:04}/heatmap.csv' matrix using (($1+0.5)/100):(($2+0.5)/100):($3>0?$3:1/0) with image notitle\n",
            c.mass, c.f_hat, r.index
        ));
    }
    s.push_str("unset multiplot\n");
    s
}

const FIG1_GP: &str = "set datafile separator ','
set logscale xy
set xlabel 'k'
set ylabel 'P(size > k)'
f(x) = x**(-1.5)
plot 'density_ccdf.csv' every ::1 using 1:2 with lines title 'time average', \\
     'snapshot_ccdf.csv' every ::1 using 1:2 with steps title 'median snapshot', \\
     f(x) title 'k^{-3/2}'
";

const FIG2_GP: &str = "set datafile separator ','
set multiplot layout 2,1
set xlabel 'step'
set ylabel 'fraction of M'
plot 'samples.csv' every ::1 using 1:($3/100000.0) with lines title 'k_max/M', \\
     'samples.csv' every ::1 using 1:($2/100000.0) with lines title 'N/M'
set ylabel 'alpha'
plot 'alpha.csv' every ::1 using 1:2 with lines title 'alpha(t)'
unset multiplot
";

const FIG4_GP: &str = "set datafile separator ','
set multiplot layout 1,2
set logscale x
set xlabel 'r'
set logscale y
set ylabel 'g(r)'
plot 'scaling.csv' every ::1 using 4:6 with points title 'g', x**0.5 title 'r^{1/2}'
unset logscale y
set ylabel 'cyclicity'
plot 'scaling.csv' every ::1 using 4:7 with points title 'cyclicity'
unset multiplot
";
