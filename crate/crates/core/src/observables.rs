//! Statistics derived from trajectories: size distributions, occupancy heat
//! maps over `(k_max/M, N/M)`, recurrence times and the cyclicity order
//! parameter.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::engine::{ShatterEvent, TrajectorySample};
use crate::error::{Error, Result};

/// Number of clusters of each size in a system of total mass `mass`.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SizeHistogram {
    pub mass: u64,
    pub counts: BTreeMap<u64, u64>,
}

impl SizeHistogram {
    pub fn from_pairs(mass: u64, pairs: &[(u64, u64)]) -> Self {
        let mut counts = BTreeMap::new();
        for &(size, count) in pairs {
            if count > 0 {
                *counts.entry(size).or_insert(0) += count;
            }
        }
        Self { mass, counts }
    }

    pub fn validate(&self) -> Result<()> {
        if self.counts.contains_key(&0) {
            return Err(Error::BadHistogram("size 0 present".into()));
        }
        if self.counts.values().any(|&c| c == 0) {
            return Err(Error::BadHistogram("zero count stored".into()));
        }
        let total: u64 = self.counts.iter().map(|(s, c)| s * c).sum();
        if total != self.mass {
            return Err(Error::BadHistogram(format!(
                "sizes sum to {total}, expected {}",
                self.mass
            )));
        }
        Ok(())
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }

    pub fn n_clusters(&self) -> u64 {
        self.counts.values().sum()
    }

    pub fn k_max(&self) -> u64 {
        self.counts.keys().next_back().copied().unwrap_or(0)
    }

    /// Counts restricted to sizes in `[lo, hi]`.
    pub fn window(&self, lo: u64, hi: u64) -> impl Iterator<Item = (u64, u64)> + '_ {
        self.counts.range(lo..=hi).map(|(&s, &c)| (s, c))
    }
}

/// For each present size, the number of clusters strictly larger.
pub fn ccdf(h: &SizeHistogram) -> Result<Vec<(u64, u64)>> {
    if h.is_empty() {
        return Err(Error::EmptyHistogram);
    }
    let mut larger = 0;
    let mut out: Vec<(u64, u64)> = h
        .counts
        .iter()
        .rev()
        .map(|(&size, &count)| {
            let row = (size, larger);
            larger += count;
            row
        })
        .collect();
    out.reverse();
    Ok(out)
}

/// CCDF of a real-valued density, same convention as [`ccdf`].
pub fn ccdf_of_density(density: &BTreeMap<u64, f64>) -> Vec<(u64, f64)> {
    let mut larger = 0.0;
    let mut out: Vec<(u64, f64)> = density
        .iter()
        .rev()
        .map(|(&size, &value)| {
            let row = (size, larger);
            larger += value;
            row
        })
        .collect();
    out.reverse();
    out
}

/// Per-size arithmetic mean of cluster counts; absent sizes count as zero.
pub fn mean_cluster_density(hists: &[SizeHistogram]) -> Result<BTreeMap<u64, f64>> {
    let first = hists.first().ok_or(Error::EmptyHistogram)?;
    let mut sums: BTreeMap<u64, u64> = BTreeMap::new();
    for h in hists {
        if h.mass != first.mass {
            return Err(Error::MixedMass(first.mass, h.mass));
        }
        for (&s, &c) in &h.counts {
            *sums.entry(s).or_insert(0) += c;
        }
    }
    let n = hists.len() as f64;
    Ok(sums
        .into_iter()
        .filter(|&(_, c)| c > 0)
        .map(|(s, c)| (s, c as f64 / n))
        .collect())
}

/// Occupancy counts over `(k_max/M, N/M)` in `[0, 1]²`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HeatMap {
    pub bins_x: usize,
    pub bins_y: usize,
    /// Row-major, `counts[y * bins_x + x]`.
    pub counts: Vec<u64>,
    pub visited_mask: Vec<bool>,
}

impl HeatMap {
    pub fn get(&self, x: usize, y: usize) -> u64 {
        self.counts[y * self.bins_x + x]
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }

    pub fn visited_cells(&self) -> usize {
        self.visited_mask.iter().filter(|&&v| v).count()
    }

    /// Bin edges along each axis, `bins + 1` values from 0 to 1.
    pub fn edges(bins: usize) -> Vec<f64> {
        (0..=bins).map(|i| i as f64 / bins as f64).collect()
    }

    /// One CSV row per `N/M` bin, one column per `k_max/M` bin.
    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for y in 0..self.bins_y {
            let row: Vec<String> = (0..self.bins_x).map(|x| self.get(x, y).to_string()).collect();
            out.push_str(&row.join(","));
            out.push('\n');
        }
        out
    }

    pub fn sidecar_json(&self) -> serde_json::Value {
        serde_json::json!({
            "bins_x": self.bins_x,
            "bins_y": self.bins_y,
            "x": "k_max/M",
            "y": "N/M",
            "x_edges": Self::edges(self.bins_x),
            "y_edges": Self::edges(self.bins_y),
            "samples": self.total(),
            "visited_cells": self.visited_cells(),
        })
    }
}

fn bin_of(value: f64, bins: usize) -> usize {
    ((value * bins as f64) as usize).min(bins - 1)
}

/// Heat map with `bins × bins` cells.
pub fn heatmap(samples: &[TrajectorySample], mass: u64, bins: usize) -> Result<HeatMap> {
    heatmap_with_bins(samples, mass, bins, bins)
}

pub fn heatmap_with_bins(
    samples: &[TrajectorySample],
    mass: u64,
    bins_x: usize,
    bins_y: usize,
) -> Result<HeatMap> {
    if bins_x < 2 || bins_y < 2 {
        return Err(Error::InvalidNumerics("heat map needs at least 2 bins per axis".into()));
    }
    let mut counts = vec![0u64; bins_x * bins_y];
    let m = mass as f64;
    for s in samples {
        let x = bin_of(s.k_max as f64 / m, bins_x);
        let y = bin_of(s.n as f64 / m, bins_y);
        counts[y * bins_x + x] += 1;
    }
    let visited_mask = counts.iter().map(|&c| c > 0).collect();
    Ok(HeatMap {
        bins_x,
        bins_y,
        counts,
        visited_mask,
    })
}

/// Steps between consecutive shatterings of the largest cluster.
///
/// The interval from the start of the run to the first such shattering is
/// not a recurrence and is dropped.
pub fn recurrence_times(events: &[ShatterEvent]) -> Vec<u64> {
    let steps: Vec<u64> = events.iter().filter(|e| e.was_largest).map(|e| e.step).collect();
    steps.windows(2).map(|w| w[1] - w[0]).collect()
}

/// Per-step growth-minus-shrink fraction of `k_max`.
///
/// `stride` is the sampling interval the series was recorded at; anything
/// other than 1 is rejected because the definition counts individual steps.
pub fn cyclicity(kmax_series: &[u64], stride: u64) -> Result<f64> {
    if stride != 1 {
        return Err(Error::StrideNotOne(stride));
    }
    if kmax_series.len() < 2 {
        return Err(Error::TooShort {
            needed: 2,
            got: kmax_series.len(),
        });
    }
    let mut tally = CyclicityTally::default();
    for w in kmax_series.windows(2) {
        tally.record(w[1] as i64 - w[0] as i64);
    }
    Ok(tally.value())
}

/// Streaming form of [`cyclicity`].
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct CyclicityTally {
    pub up: u64,
    pub down: u64,
    pub steps: u64,
}

impl CyclicityTally {
    pub fn record(&mut self, delta: i64) {
        self.steps += 1;
        match delta.signum() {
            1 => self.up += 1,
            -1 => self.down += 1,
            _ => {}
        }
    }

    pub fn merge(&mut self, other: &Self) {
        self.up += other.up;
        self.down += other.down;
        self.steps += other.steps;
    }

    pub fn value(&self) -> f64 {
        if self.steps == 0 {
            return 0.0;
        }
        (self.up as f64 - self.down as f64) / self.steps as f64
    }
}

/// Sign of the per-step change of `k_max`, packed at 2 bits per step.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct SignSeries {
    words: Vec<u64>,
    len: usize,
}

impl SignSeries {
    pub fn push(&mut self, sign: i8) {
        let code: u64 = match sign {
            1 => 1,
            -1 => 2,
            _ => 0,
        };
        let (word, shift) = (self.len / 32, (self.len % 32) * 2);
        if word == self.words.len() {
            self.words.push(0);
        }
        self.words[word] |= code << shift;
        self.len += 1;
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, i: usize) -> i8 {
        assert!(i < self.len);
        match (self.words[i / 32] >> ((i % 32) * 2)) & 3 {
            1 => 1,
            2 => -1,
            _ => 0,
        }
    }

    pub fn iter(&self) -> impl Iterator<Item = i8> + '_ {
        (0..self.len).map(|i| self.get(i))
    }

    pub fn tally(&self) -> CyclicityTally {
        let mut t = CyclicityTally::default();
        for s in self.iter() {
            t.record(s as i64);
        }
        t
    }
}

/// Writes `size,value` rows.
pub fn size_value_csv<V: std::fmt::Display>(rows: impl IntoIterator<Item = (u64, V)>) -> String {
    let mut out = String::from("size,value\n");
    for (s, v) in rows {
        out.push_str(&format!("{s},{v}\n"));
    }
    out
}
