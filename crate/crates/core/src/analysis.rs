//! Statistical layer over simulation output.
//!
//! * truncated discrete power-law maximum likelihood for cluster sizes;
//! * exponential and Rayleigh fits of recurrence times with KS comparison;
//! * the `g(r) = F̂ ⟨t_r⟩` data collapse and regime labels;
//! * the largest-cluster envelope against `M r^{-1/2}`.

use std::collections::BTreeMap;
use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::engine::Trajectory;
use crate::error::{Error, Result};
use crate::observables::{recurrence_times, CyclicityTally, SizeHistogram};

pub const DEFAULT_MIN_SAMPLES: u64 = 50;
pub const ALPHA_LOWER: f64 = 1.01;
pub const ALPHA_UPPER: f64 = 6.0;
const ALPHA_TOL: f64 = 1e-6;

/// JSON has no NaN; missing measurements are written as `null` and read
/// back as NaN.
mod nan_as_null {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &f64, s: S) -> Result<S::Ok, S::Error> {
        if v.is_finite() {
            s.serialize_f64(*v)
        } else {
            s.serialize_none()
        }
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<f64, D::Error> {
        Ok(Option::<f64>::deserialize(d)?.unwrap_or(f64::NAN))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerLawFit {
    pub alpha: f64,
    pub k_min: u64,
    pub k_max_fit: u64,
    /// Total sample weight inside the window (cluster count for histograms).
    pub n: f64,
    pub loglik: f64,
}

// Even-index Bernoulli numbers B_2 .. B_12.
const BERNOULLI: [f64; 6] = [
    1.0 / 6.0,
    -1.0 / 30.0,
    1.0 / 42.0,
    -1.0 / 30.0,
    5.0 / 66.0,
    -691.0 / 2730.0,
];

/// Hurwitz zeta `Σ_{k≥0} (q+k)^{-s}` for `s > 1`, `q > 0`, by Euler-Maclaurin.
pub fn hurwitz_zeta(s: f64, q: f64) -> f64 {
    const N: usize = 12;
    let mut sum = 0.0;
    for k in 0..N {
        sum += (q + k as f64).powf(-s);
    }
    let a = q + N as f64;
    sum += a.powf(1.0 - s) / (s - 1.0) + 0.5 * a.powf(-s);
    // term_j = B_2j/(2j)! · s(s+1)…(s+2j−2) · a^{-s-2j+1}
    let mut rising = s;
    let mut fact = 2.0;
    let mut pow = a.powf(-s - 1.0);
    for (j, b) in BERNOULLI.iter().enumerate() {
        sum += b / fact * rising * pow;
        let m = 2.0 * j as f64 + 2.0;
        rising *= (s + m - 1.0) * (s + m);
        fact *= (m + 1.0) * (m + 2.0);
        pow /= a * a;
    }
    sum
}

/// Generalized harmonic sum `Σ_{k=lo}^{hi} k^{-α}`.
pub fn harmonic(alpha: f64, lo: u64, hi: u64) -> f64 {
    if hi < lo {
        return 0.0;
    }
    if hi - lo < 2000 {
        return (lo..=hi).map(|k| (k as f64).powf(-alpha)).sum();
    }
    hurwitz_zeta(alpha, lo as f64) - hurwitz_zeta(alpha, hi as f64 + 1.0)
}

fn golden_max(f: impl Fn(f64) -> f64, mut a: f64, mut b: f64, tol: f64) -> f64 {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let mut c = b - inv_phi * (b - a);
    let mut d = a + inv_phi * (b - a);
    let (mut fc, mut fd) = (f(c), f(d));
    while b - a > tol {
        if fc > fd {
            b = d;
            d = c;
            fd = fc;
            c = b - inv_phi * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + inv_phi * (b - a);
            fd = f(d);
        }
    }
    0.5 * (a + b)
}

/// Truncated discrete power-law MLE over weighted observations.
///
/// Maximizes `L(α) = −α Σ w log k − W log H(α; k_min, k_max_fit)` on
/// `[1.01, 6]` by golden-section search.
pub fn fit_truncated_powerlaw_weighted(
    data: &[(u64, f64)],
    k_min: u64,
    k_max_fit: u64,
    min_samples: u64,
) -> Result<PowerLawFit> {
    if k_min < 1 || k_max_fit < k_min {
        return Err(Error::InvalidNumerics(format!(
            "bad fitting window [{k_min}, {k_max_fit}]"
        )));
    }
    let mut weight = 0.0;
    let mut sum_log = 0.0;
    let mut distinct = 0;
    for &(k, w) in data {
        if k >= k_min && k <= k_max_fit && w > 0.0 {
            weight += w;
            sum_log += w * (k as f64).ln();
            distinct += 1;
        }
    }
    if weight < min_samples as f64 {
        return Err(Error::InsufficientSamples {
            needed: min_samples,
            got: weight as u64,
        });
    }
    if distinct < 2 {
        return Err(Error::Degenerate("all samples at a single size".into()));
    }
    let loglik = |alpha: f64| -alpha * sum_log - weight * harmonic(alpha, k_min, k_max_fit).ln();
    let alpha = golden_max(loglik, ALPHA_LOWER, ALPHA_UPPER, ALPHA_TOL);
    Ok(PowerLawFit {
        alpha,
        k_min,
        k_max_fit,
        n: weight,
        loglik: loglik(alpha),
    })
}

/// Fit of a histogram's cluster sizes on `[k_min, k_max_fit]`.
pub fn fit_truncated_powerlaw(h: &SizeHistogram, k_min: u64, k_max_fit: u64) -> Result<PowerLawFit> {
    let data: Vec<(u64, f64)> = h.window(k_min, k_max_fit).map(|(k, c)| (k, c as f64)).collect();
    fit_truncated_powerlaw_weighted(&data, k_min, k_max_fit, DEFAULT_MIN_SAMPLES)
}

/// Fit on the default window: `k_min` to the largest observed size.
pub fn fit_histogram(h: &SizeHistogram, k_min: u64) -> Result<PowerLawFit> {
    fit_truncated_powerlaw(h, k_min, h.k_max().max(k_min))
}

/// Fit of a real-valued density (e.g. a time average) on the default window.
pub fn fit_density(density: &BTreeMap<u64, f64>, k_min: u64) -> Result<PowerLawFit> {
    let data: Vec<(u64, f64)> = density.iter().map(|(&k, &w)| (k, w)).collect();
    let k_max = density.keys().next_back().copied().unwrap_or(k_min).max(k_min);
    fit_truncated_powerlaw_weighted(&data, k_min, k_max, DEFAULT_MIN_SAMPLES)
}

/// `(step, α̂)` for every recorded histogram that admits a fit.
pub fn alpha_series(traj: &Trajectory, k_min: u64) -> Vec<(u64, f64)> {
    traj.samples
        .iter()
        .filter_map(|s| {
            let h = s.histogram.as_ref()?;
            fit_histogram(h, k_min).ok().map(|f| (s.step, f.alpha))
        })
        .collect()
}

/// Index of the value closest to the median of `values[window]`.
pub fn median_snapshot(values: &[f64], window: std::ops::Range<usize>) -> Option<usize> {
    let window = window.start.min(values.len())..window.end.min(values.len());
    if window.is_empty() {
        return None;
    }
    let mut sorted: Vec<f64> = values[window.clone()].to_vec();
    sorted.sort_by(f64::total_cmp);
    let median = sorted[sorted.len() / 2];
    window.min_by(|&a, &b| (values[a] - median).abs().total_cmp(&(values[b] - median).abs()))
}

fn check_positive(samples: &[f64]) -> Result<()> {
    if samples.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: samples.len() as u64,
        });
    }
    if samples.iter().any(|&t| !(t > 0.0 && t.is_finite())) {
        return Err(Error::Degenerate("samples must be positive and finite".into()));
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExponentialFit {
    pub rate: f64,
}

impl ExponentialFit {
    pub fn mean(&self) -> f64 {
        1.0 / self.rate
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            1.0 - (-self.rate * t).exp()
        }
    }
}

/// Maximum-likelihood exponential rate `n / Σ t`.
pub fn fit_exponential(samples: &[f64]) -> Result<ExponentialFit> {
    check_positive(samples)?;
    Ok(ExponentialFit {
        rate: samples.len() as f64 / samples.iter().sum::<f64>(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RayleighFit {
    pub sigma: f64,
}

impl RayleighFit {
    pub fn mean(&self) -> f64 {
        self.sigma * (PI / 2.0).sqrt()
    }

    pub fn cdf(&self, t: f64) -> f64 {
        if t <= 0.0 {
            0.0
        } else {
            1.0 - (-t * t / (2.0 * self.sigma * self.sigma)).exp()
        }
    }
}

/// Maximum-likelihood Rayleigh scale `σ² = Σ t² / 2n`.
pub fn fit_rayleigh(samples: &[f64]) -> Result<RayleighFit> {
    check_positive(samples)?;
    let ss: f64 = samples.iter().map(|t| t * t).sum();
    Ok(RayleighFit {
        sigma: (ss / (2.0 * samples.len() as f64)).sqrt(),
    })
}

/// Sup-norm distance between the empirical CDF of `samples` and `cdf`.
pub fn ks_distance(samples: &[f64], cdf: impl Fn(f64) -> f64) -> f64 {
    if samples.is_empty() {
        return 0.0;
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len() as f64;
    sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            ((i + 1) as f64 / n - f).max(f - i as f64 / n)
        })
        .fold(0.0, f64::max)
}

/// Both candidate recurrence-time laws fitted and scored.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RecurrenceFits {
    pub exponential: ExponentialFit,
    pub rayleigh: RayleighFit,
    pub ks_exponential: f64,
    pub ks_rayleigh: f64,
}

pub fn compare_recurrence_laws(samples: &[f64]) -> Result<RecurrenceFits> {
    let exponential = fit_exponential(samples)?;
    let rayleigh = fit_rayleigh(samples)?;
    Ok(RecurrenceFits {
        ks_exponential: ks_distance(samples, |t| exponential.cdf(t)),
        ks_rayleigh: ks_distance(samples, |t| rayleigh.cdf(t)),
        exponential,
        rayleigh,
    })
}

/// Growth constant `c` in `m(t) = c K̂ t` implied by a mean recurrence time,
/// from `⟨t_r⟩ = √(πM / (2 c F̂ K̂))`.
pub fn implied_growth_constant(mass: u64, k_hat: f64, f_hat: f64, mean_tr: f64) -> f64 {
    PI * mass as f64 / (2.0 * f_hat * k_hat * mean_tr * mean_tr)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingPoint {
    #[serde(rename = "M")]
    pub mass: u64,
    pub k_hat: f64,
    pub f_hat: f64,
    pub r: f64,
    #[serde(with = "nan_as_null")]
    pub mean_tr: f64,
    #[serde(with = "nan_as_null")]
    pub g: f64,
    pub cyclicity: f64,
    pub n_cycles: u64,
}

impl ScalingPoint {
    pub fn new(mass: u64, k_hat: f64, f_hat: f64, mean_tr: f64, cyclicity: f64, n_cycles: u64) -> Self {
        Self {
            mass,
            k_hat,
            f_hat,
            r: f_hat * mass as f64 / k_hat,
            mean_tr,
            g: f_hat * mean_tr,
            cyclicity,
            n_cycles,
        }
    }

    /// Pools recurrence intervals and cyclicity tallies over replicas of one
    /// parameter point. `mean_tr` is NaN when no interval was observed.
    pub fn from_trajectories(trajs: &[Trajectory]) -> Result<Self> {
        let first = trajs.first().ok_or(Error::InsufficientSamples { needed: 1, got: 0 })?;
        let cfg = &first.config;
        let times = pooled_recurrence_times(trajs);
        let mut tally = CyclicityTally::default();
        for t in trajs {
            tally.merge(&t.cyclicity);
        }
        let mean_tr = if times.is_empty() {
            f64::NAN
        } else {
            times.iter().sum::<f64>() / times.len() as f64
        };
        Ok(Self::new(cfg.mass, cfg.k_hat, cfg.f_hat, mean_tr, tally.value(), times.len() as u64))
    }

    pub fn csv_header() -> &'static str {
        "M,K_hat,F_hat,r,mean_tr,g,cyclicity,n_cycles"
    }

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{}",
            self.mass, self.k_hat, self.f_hat, self.r, self.mean_tr, self.g, self.cyclicity, self.n_cycles
        )
    }
}

/// Recurrence intervals of every trajectory, concatenated in input order.
pub fn pooled_recurrence_times(trajs: &[Trajectory]) -> Vec<f64> {
    trajs
        .iter()
        .flat_map(|t| recurrence_times(&t.shatter_events))
        .map(|t| t as f64)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogLogFit {
    pub slope: f64,
    pub intercept: f64,
    /// Root-mean-square residual in natural-log units.
    pub residual: f64,
    pub n: usize,
}

/// Least-squares line through `(ln x, ln y)`.
pub fn loglog_fit(points: &[(f64, f64)]) -> Result<LogLogFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|(x, y)| *x > 0.0 && *y > 0.0 && x.is_finite() && y.is_finite())
        .map(|(x, y)| (x.ln(), y.ln()))
        .collect();
    if pts.len() < 2 {
        return Err(Error::InsufficientSamples {
            needed: 2,
            got: pts.len() as u64,
        });
    }
    let n = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / n;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::Degenerate("all abscissae equal".into()));
    }
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let residual = (pts
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum::<f64>()
        / n)
        .sqrt();
    Ok(LogLogFit {
        slope,
        intercept,
        residual,
        n: pts.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseWindows {
    pub slope_r_min: f64,
    pub slope_r_max: f64,
    /// Plateau averages `g` over `r < plateau_r_max`.
    pub plateau_r_max: f64,
    pub min_points: usize,
}

impl Default for CollapseWindows {
    fn default() -> Self {
        Self {
            slope_r_min: 1.0,
            slope_r_max: 100.0,
            plateau_r_max: 0.05,
            min_points: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CollapseSummary {
    /// Slope of `log g` against `log r` in the unforced window.
    pub slope: Option<LogLogFit>,
    /// Mean of `g` in the forced-cycle window.
    pub plateau: Option<f64>,
    pub plateau_points: usize,
}

pub fn collapse(points: &[ScalingPoint]) -> Result<CollapseSummary> {
    collapse_with(points, CollapseWindows::default())
}

/// Summarizes the data collapse; a window with fewer than `min_points`
/// usable points yields `None`, and it is an error if both do.
pub fn collapse_with(points: &[ScalingPoint], w: CollapseWindows) -> Result<CollapseSummary> {
    let usable = |p: &&ScalingPoint| p.g.is_finite() && p.g > 0.0;
    let middle: Vec<(f64, f64)> = points
        .iter()
        .filter(usable)
        .filter(|p| p.r >= w.slope_r_min && p.r <= w.slope_r_max)
        .map(|p| (p.r, p.g))
        .collect();
    let low: Vec<f64> = points
        .iter()
        .filter(usable)
        .filter(|p| p.r < w.plateau_r_max)
        .map(|p| p.g)
        .collect();
    let slope = if middle.len() >= w.min_points {
        Some(loglog_fit(&middle)?)
    } else {
        None
    };
    let plateau = (low.len() >= w.min_points).then(|| low.iter().sum::<f64>() / low.len() as f64);
    if slope.is_none() && plateau.is_none() {
        return Err(Error::InsufficientSamples {
            needed: w.min_points as u64,
            got: middle.len().max(low.len()) as u64,
        });
    }
    Ok(CollapseSummary {
        slope,
        plateau,
        plateau_points: low.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Regime {
    ForcedCycles,
    UnforcedGelShatter,
    FragmentationDominance,
}

impl std::fmt::Display for Regime {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::ForcedCycles => "forced-cycles",
            Self::UnforcedGelShatter => "unforced-gel-shatter",
            Self::FragmentationDominance => "fragmentation-dominance",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegimeThresholds {
    pub forced_below: f64,
    pub dominance_above: f64,
}

impl Default for RegimeThresholds {
    fn default() -> Self {
        Self {
            forced_below: 0.1,
            dominance_above: 1e3,
        }
    }
}

pub fn classify_regime(r: f64) -> Regime {
    classify_regime_with(r, RegimeThresholds::default())
}

/// Step function of `r`; both boundaries belong to the middle regime.
pub fn classify_regime_with(r: f64, t: RegimeThresholds) -> Regime {
    if r < t.forced_below {
        Regime::ForcedCycles
    } else if r <= t.dominance_above {
        Regime::UnforcedGelShatter
    } else {
        Regime::FragmentationDominance
    }
}

/// Observed largest-cluster envelope at one parameter point.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopePoint {
    #[serde(rename = "M")]
    pub mass: u64,
    pub r: f64,
    /// Mean size of the largest cluster at the moments it shatters.
    #[serde(with = "nan_as_null")]
    pub envelope: f64,
    /// `M r^{-1/2}`.
    #[serde(with = "nan_as_null")]
    pub predicted: f64,
    #[serde(with = "nan_as_null")]
    pub ratio: f64,
    pub peaks: usize,
    pub in_unforced_regime: bool,
}

/// Envelope of `k_max` for each group of replicas sharing `(M, K̂, F̂)`.
///
/// The envelope is the mean of `k_max` immediately before each shattering
/// of the largest cluster, i.e. the mean cycle peak. Points outside the
/// unforced regime are flagged, not dropped.
pub fn largest_cluster_scale(groups: &[Vec<Trajectory>]) -> Vec<EnvelopePoint> {
    groups
        .iter()
        .filter_map(|trajs| {
            let cfg = &trajs.first()?.config;
            let peaks: Vec<f64> = trajs
                .iter()
                .flat_map(|t| t.shatter_events.iter())
                .filter(|e| e.was_largest)
                .map(|e| e.size as f64)
                .collect();
            let r = cfg.r();
            let envelope = if peaks.is_empty() {
                f64::NAN
            } else {
                peaks.iter().sum::<f64>() / peaks.len() as f64
            };
            let predicted = cfg.mass as f64 / r.sqrt();
            Some(EnvelopePoint {
                mass: cfg.mass,
                r,
                envelope,
                predicted,
                ratio: envelope / predicted,
                peaks: peaks.len(),
                in_unforced_regime: classify_regime(r) == Regime::UnforcedGelShatter,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeExponents {
    pub mass_exponent: f64,
    pub r_exponent: f64,
    pub log_prefactor: f64,
}

/// Least squares `ln E = c + a ln M + b ln r` over the given points.
pub fn envelope_exponents(points: &[EnvelopePoint]) -> Result<EnvelopeExponents> {
    let rows: Vec<[f64; 3]> = points
        .iter()
        .filter(|p| p.envelope.is_finite() && p.envelope > 0.0)
        .map(|p| [(p.mass as f64).ln(), p.r.ln(), p.envelope.ln()])
        .collect();
    if rows.len() < 3 {
        return Err(Error::InsufficientSamples {
            needed: 3,
            got: rows.len() as u64,
        });
    }
    // Normal equations for [c, a, b].
    let mut ata = [[0.0f64; 3]; 3];
    let mut aty = [0.0f64; 3];
    for r in &rows {
        let v = [1.0, r[0], r[1]];
        for i in 0..3 {
            for j in 0..3 {
                ata[i][j] += v[i] * v[j];
            }
            aty[i] += v[i] * r[2];
        }
    }
    let sol = solve3(ata, aty).ok_or_else(|| Error::Degenerate("M and r are collinear".into()))?;
    Ok(EnvelopeExponents {
        log_prefactor: sol[0],
        mass_exponent: sol[1],
        r_exponent: sol[2],
    })
}

fn solve3(mut a: [[f64; 3]; 3], mut b: [f64; 3]) -> Option<[f64; 3]> {
    for col in 0..3 {
        let pivot = (col..3).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-12 {
            return None;
        }
        a.swap(col, pivot);
        b.swap(col, pivot);
        for row in 0..3 {
            if row != col {
                let f = a[row][col] / a[col][col];
                for k in col..3 {
                    a[row][k] -= f * a[col][k];
                }
                b[row] -= f * b[col];
            }
        }
    }
    Some([b[0] / a[0][0], b[1] / a[1][1], b[2] / a[2][2]])
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn hurwitz_zeta_against_direct_sums() {
        for &s in &[1.01, 1.5, 2.0, 2.5, 3.7, 6.0] {
            for &q in &[1.0, 3.0, 17.0] {
                // Direct partial sum plus an integral tail bound check.
                let direct: f64 = (0..200_000).map(|k| (q + k as f64).powf(-s)).sum();
                let tail = (q + 200_000.0 - 0.5f64).powf(1.0 - s) / (s - 1.0);
                let z = hurwitz_zeta(s, q);
                assert!(((direct + tail) - z).abs() < 1e-8 * z, "s={s} q={q}");
            }
        }
        let zeta2 = PI * PI / 6.0;
        assert!((hurwitz_zeta(2.0, 1.0) - zeta2).abs() < 1e-13);
    }

    #[test]
    fn harmonic_paths_agree() {
        for &a in &[1.05, 2.5, 4.0] {
            let direct: f64 = (3..=5000u64).map(|k| (k as f64).powf(-a)).sum();
            let h = harmonic(a, 3, 5000);
            assert!((direct - h).abs() < 1e-12 * direct, "{a}");
        }
    }

    #[test]
    fn powerlaw_degenerate_and_small() {
        let h = SizeHistogram::from_pairs(300, &[(3, 100)]);
        assert!(matches!(fit_histogram(&h, 1), Err(Error::Degenerate(_))));
        let h = SizeHistogram::from_pairs(12, &[(1, 10), (2, 1)]);
        assert!(matches!(fit_histogram(&h, 1), Err(Error::InsufficientSamples { .. })));
    }

    #[test]
    fn powerlaw_recovers_exact_expected_counts() {
        // Expected (non-random) counts of a truncated law: the MLE is exact.
        let alpha = 2.3;
        let h_norm = harmonic(alpha, 1, 500);
        let data: Vec<(u64, f64)> = (1..=500u64)
            .map(|k| (k, 1e6 * (k as f64).powf(-alpha) / h_norm))
            .collect();
        let fit = fit_truncated_powerlaw_weighted(&data, 1, 500, 50).unwrap();
        assert!((fit.alpha - alpha).abs() < 1e-5, "{}", fit.alpha);
    }

    #[test]
    fn exponential_and_rayleigh_closed_forms() {
        assert!((fit_exponential(&[4.0, 4.0, 4.0]).unwrap().rate - 0.25).abs() < 1e-15);
        assert_eq!(fit_exponential(&[1.0, 3.0]).unwrap().rate, 0.5);
        let r = fit_rayleigh(&[6.0; 5]).unwrap();
        assert!((r.sigma - 6.0 / 2f64.sqrt()).abs() < 1e-12);
        assert!(fit_exponential(&[]).is_err());
        assert!(fit_exponential(&[1.0]).is_err());
        assert!(fit_rayleigh(&[1.0, 0.0]).is_err());
    }

    #[test]
    fn fits_are_scale_equivariant() {
        let xs = [1.0, 2.5, 7.0, 3.25, 0.5];
        let c = 8.0;
        let ys: Vec<f64> = xs.iter().map(|x| x * c).collect();
        let (e0, e1) = (fit_exponential(&xs).unwrap(), fit_exponential(&ys).unwrap());
        assert_eq!(e1.mean(), e0.mean() * c);
        let (r0, r1) = (fit_rayleigh(&xs).unwrap(), fit_rayleigh(&ys).unwrap());
        assert_eq!(r1.sigma, r0.sigma * c);
    }

    #[test]
    fn ks_examples() {
        let uniform = |x: f64| x.clamp(0.0, 1.0);
        assert_eq!(ks_distance(&[0.5], uniform), 0.5);
        let n = 99;
        let q: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        assert!(ks_distance(&q, uniform) <= 1.0 / (n + 1) as f64 + 1e-12);
    }

    #[test]
    fn collapse_synthetic() {
        let pts: Vec<ScalingPoint> = [1.0, 3.0, 10.0, 30.0, 100.0]
            .iter()
            .map(|&r| {
                let f_hat = r / 1000.0;
                ScalingPoint::new(1000, 1.0, f_hat, r.sqrt() / f_hat, 0.2, 10)
            })
            .collect();
        let s = collapse(&pts).unwrap();
        let fit = s.slope.unwrap();
        assert!((fit.slope - 0.5).abs() < 1e-12 && fit.residual < 1e-12);
        assert!(s.plateau.is_none());

        let flat: Vec<ScalingPoint> = [1e-4, 2e-4, 4e-4]
            .iter()
            .map(|&f| ScalingPoint::new(100, 1.0 - f, f, 1.0 / f, 0.0, 10))
            .collect();
        let s = collapse(&flat).unwrap();
        assert!((s.plateau.unwrap() - 1.0).abs() < 1e-12);
        assert!(collapse(&flat[..2]).is_err());
    }

    #[test]
    fn scaling_point_identities_are_exact() {
        let p = ScalingPoint::new(3000, 0.97, 0.03, 1234.5, 0.1, 7);
        assert_eq!(p.r, 0.03 * 3000.0 / 0.97);
        assert_eq!(p.g, 0.03 * 1234.5);
    }

    #[test]
    fn missing_recurrence_time_round_trips_through_json() {
        let p = ScalingPoint::new(10, 1.0, 0.0, f64::NAN, 0.0, 0);
        let text = serde_json::to_string(&p).unwrap();
        assert!(text.contains("\"mean_tr\":null"), "{text}");
        let back: ScalingPoint = serde_json::from_str(&text).unwrap();
        assert!(back.mean_tr.is_nan() && back.g.is_nan());
        assert_eq!(back.mass, 10);
    }

    #[test]
    fn regimes() {
        assert_eq!(classify_regime(0.01), Regime::ForcedCycles);
        assert_eq!(classify_regime(10.0), Regime::UnforcedGelShatter);
        assert_eq!(classify_regime(1e4), Regime::FragmentationDominance);
        assert_eq!(classify_regime(0.1), Regime::UnforcedGelShatter);
        assert_eq!(classify_regime(1e3), Regime::UnforcedGelShatter);
        assert_eq!(classify_regime(0.0999), Regime::ForcedCycles);
        assert_eq!(classify_regime(1000.0001), Regime::FragmentationDominance);
    }

    #[test]
    fn envelope_regression_recovers_exponents() {
        let mut pts = Vec::new();
        for &m in &[1e3, 1e4, 3e4] {
            for &r in &[1.0f64, 10.0, 100.0] {
                let env = 0.7 * m * r.powf(-0.5);
                pts.push(EnvelopePoint {
                    mass: m as u64,
                    r,
                    envelope: env,
                    predicted: m / r.sqrt(),
                    ratio: 0.7,
                    peaks: 10,
                    in_unforced_regime: true,
                });
            }
        }
        let e = envelope_exponents(&pts).unwrap();
        assert!((e.mass_exponent - 1.0).abs() < 1e-9);
        assert!((e.r_exponent + 0.5).abs() < 1e-9);
        assert!((e.log_prefactor - 0.7f64.ln()).abs() < 1e-9);
    }

    #[test]
    fn median_snapshot_picks_closest() {
        let v = [2.9, 2.7, 2.8, 2.75, 3.0];
        assert_eq!(median_snapshot(&v, 0..5), Some(2));
        assert_eq!(median_snapshot(&v, 1..2), Some(1));
        assert_eq!(median_snapshot(&v, 7..9), None);
    }
}
