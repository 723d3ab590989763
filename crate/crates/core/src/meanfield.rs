//! Mean-field coalescence and shattering.
//!
//! The density `n_k` of clusters of size `k` obeys
//!
//! ```text
//! dn_k/dt = ½ Σ_{i<k} K(i,k-i) n_i n_{k-i} − n_k Σ_i K(i,k) n_i − F(k) n_k
//!           + δ_{k1} Σ_{i≥2} F(i) i n_i
//! ```
//!
//! with `K(i,j) = K̂ i j / M²` and `F(i) = F̂ i / M`. The system is truncated
//! at `K_c`; a pair whose merged size exceeds `K_c` contributes neither gain
//! nor loss, so `Σ k n_k` is an exact invariant of the truncated equations.
//!
//! Its steady state has the closed form `ρ_k = C_{k-1} γ^{k-1} ρ₁^k` in the
//! mass densities `ρ_k = k n_k / M`, see [`catalan_steady_state`].

use serde::{Deserialize, Serialize};
use libm::lgamma as ln_gamma;

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanFieldState {
    /// `n[k-1]` is the density of clusters of size `k`, `k = 1..=K_c`.
    pub n: Vec<f64>,
    /// Mass scale `M` entering the kernels.
    pub mass: f64,
    pub t: f64,
}

impl MeanFieldState {
    /// All mass in monomers: `n_1 = M`, truncated at `k_c`.
    pub fn monomers(k_c: usize, mass: f64) -> Self {
        let mut n = vec![0.0; k_c];
        n[0] = mass;
        Self { n, mass, t: 0.0 }
    }

    pub fn k_c(&self) -> usize {
        self.n.len()
    }

    /// `Σ k n_k`.
    pub fn total_mass(&self) -> f64 {
        self.n.iter().enumerate().map(|(i, &v)| (i + 1) as f64 * v).sum()
    }

    /// `ρ_k = k n_k / M`.
    pub fn mass_density(&self) -> Vec<f64> {
        self.n
            .iter()
            .enumerate()
            .map(|(i, &v)| (i + 1) as f64 * v / self.mass)
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,n_k\n");
        for (i, v) in self.n.iter().enumerate() {
            out.push_str(&format!("{},{:e}\n", i + 1, v));
        }
        out
    }
}

/// Kernel constants of the mean-field system.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rates {
    pub k_hat: f64,
    pub f_hat: f64,
}

/// Right-hand side `dn/dt`, written into `out`.
pub fn rhs_into(n: &[f64], mass: f64, rates: Rates, out: &mut [f64]) {
    let k_c = n.len();
    out.iter_mut().for_each(|v| *v = 0.0);
    if k_c == 0 {
        return;
    }
    let a = rates.k_hat / (mass * mass);
    let f = rates.f_hat / mass;

    // x_k = k n_k, indexed by size.
    let mut x = vec![0.0; k_c + 1];
    for (i, &v) in n.iter().enumerate() {
        x[i + 1] = (i + 1) as f64 * v;
    }
    let support = (1..=k_c).rev().find(|&k| x[k] != 0.0).unwrap_or(0);

    // Coalescence gain ½ a Σ x_i x_{k-i}, over unordered pairs.
    let mut gain = vec![0.0; k_c + 1];
    if a != 0.0 {
        for i in 1..=support {
            let xi = x[i];
            if xi == 0.0 {
                continue;
            }
            if 2 * i <= k_c {
                gain[2 * i] += 0.5 * xi * xi;
            }
            let j_end = support.min(k_c.saturating_sub(i));
            if j_end > i {
                let dst = &mut gain[2 * i + 1..=i + j_end];
                for (g, &xj) in dst.iter_mut().zip(&x[i + 1..=j_end]) {
                    *g += xi * xj;
                }
            }
        }
    }

    // prefix[m] = Σ_{i≤m} x_i; the loss partner of size k ranges over i ≤ K_c − k.
    let mut prefix = vec![0.0; k_c + 1];
    for k in 1..=k_c {
        prefix[k] = prefix[k - 1] + x[k];
    }

    let mut monomer_gain = 0.0;
    for k in 1..=k_c {
        let loss = if x[k] == 0.0 { 0.0 } else { x[k] * prefix[k_c - k] };
        let mut d = a * (gain[k] - loss);
        if k >= 2 {
            d -= f * x[k];
            monomer_gain += f * k as f64 * x[k];
        }
        out[k - 1] = d;
    }
    out[0] += monomer_gain;
}

pub fn rhs(state: &MeanFieldState, rates: Rates) -> Vec<f64> {
    let mut out = vec![0.0; state.n.len()];
    rhs_into(&state.n, state.mass, rates, &mut out);
    out
}

/// Largest `|dn_k/dt|`.
pub fn rhs_norm(state: &MeanFieldState, rates: Rates) -> f64 {
    rhs(state, rates).iter().fold(0.0, |m, v| m.max(v.abs()))
}

const NEGATIVE_TOLERANCE: f64 = -1e-12;

/// Fixed-step classical Runge-Kutta integration over `[t, t + duration]`.
///
/// The step actually used is `duration / ceil(duration / dt)`.
pub fn integrate(state: &MeanFieldState, rates: Rates, dt: f64, duration: f64) -> Result<MeanFieldState> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidNumerics(format!("dt must be positive, got {dt}")));
    }
    if !(duration >= 0.0 && duration.is_finite()) {
        return Err(Error::InvalidNumerics(format!("T must be non-negative, got {duration}")));
    }
    let steps = (duration / dt - 1e-9).ceil().max(0.0) as u64;
    let mut stepper = Rk4::new(state.clone(), rates);
    if steps > 0 {
        let h = duration / steps as f64;
        for _ in 0..steps {
            stepper.step(h)?;
        }
    }
    Ok(stepper.state)
}

/// Integrates in chunks of `check_every` until `‖rhs‖_∞ < tol` or `t_max` is
/// reached. Returns the final state and whether the tolerance was met.
pub fn integrate_to_steady(
    state: &MeanFieldState,
    rates: Rates,
    dt: f64,
    tol: f64,
    t_max: f64,
) -> Result<(MeanFieldState, bool)> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::InvalidNumerics(format!("dt must be positive, got {dt}")));
    }
    let mut stepper = Rk4::new(state.clone(), rates);
    let check_every = ((1.0 / dt).ceil() as u64).max(1);
    let t_end = state.t + t_max;
    loop {
        if rhs_norm(&stepper.state, rates) < tol {
            return Ok((stepper.state, true));
        }
        if stepper.state.t >= t_end {
            return Ok((stepper.state, false));
        }
        for _ in 0..check_every {
            stepper.step(dt)?;
        }
    }
}

struct Rk4 {
    state: MeanFieldState,
    rates: Rates,
    k1: Vec<f64>,
    k2: Vec<f64>,
    k3: Vec<f64>,
    k4: Vec<f64>,
    tmp: Vec<f64>,
}

impl Rk4 {
    fn new(state: MeanFieldState, rates: Rates) -> Self {
        let n = state.n.len();
        Self {
            state,
            rates,
            k1: vec![0.0; n],
            k2: vec![0.0; n],
            k3: vec![0.0; n],
            k4: vec![0.0; n],
            tmp: vec![0.0; n],
        }
    }

    fn stage(&mut self, from: usize, h: f64) {
        let src = match from {
            1 => &self.k1,
            2 => &self.k2,
            _ => &self.k3,
        };
        for ((t, &y), &k) in self.tmp.iter_mut().zip(&self.state.n).zip(src) {
            *t = y + h * k;
        }
    }

    fn step(&mut self, h: f64) -> Result<()> {
        let (mass, rates) = (self.state.mass, self.rates);
        rhs_into(&self.state.n, mass, rates, &mut self.k1);
        self.stage(1, 0.5 * h);
        rhs_into(&self.tmp, mass, rates, &mut self.k2);
        self.stage(2, 0.5 * h);
        rhs_into(&self.tmp, mass, rates, &mut self.k3);
        self.stage(3, h);
        rhs_into(&self.tmp, mass, rates, &mut self.k4);
        for i in 0..self.state.n.len() {
            self.state.n[i] += h / 6.0 * (self.k1[i] + 2.0 * self.k2[i] + 2.0 * self.k3[i] + self.k4[i]);
        }
        self.state.t += h;
        if let Some((i, &v)) = self
            .state
            .n
            .iter()
            .enumerate()
            .find(|(_, v)| !v.is_finite() || **v < NEGATIVE_TOLERANCE)
        {
            return Err(Error::Unstable {
                t: self.state.t,
                k: i + 1,
                value: v,
            });
        }
        Ok(())
    }
}

/// Exact Catalan number, `None` once it no longer fits in 128 bits.
pub fn catalan(n: u32) -> Option<u128> {
    let mut c: u128 = 1;
    for i in 0..n as u128 {
        // C_{i+1} = C_i · 2(2i+1) / (i+2); the division is exact.
        let num = c.checked_mul(2 * (2 * i + 1))?;
        c = num / (i + 2);
    }
    Some(c)
}

/// `ln C_n`, valid for any `n`.
pub fn ln_catalan(n: u64) -> f64 {
    let n = n as f64;
    ln_gamma(2.0 * n + 1.0) - ln_gamma(n + 2.0) - ln_gamma(n + 1.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SteadyStateSolution {
    /// `rho[k-1] = ρ_k`.
    pub rho: Vec<f64>,
    pub gamma: f64,
    pub rho1: f64,
}

impl SteadyStateSolution {
    /// `4γρ₁`; the series `Σρ_k` converges geometrically when this is below 1.
    pub fn convergence_ratio(&self) -> f64 {
        4.0 * self.gamma * self.rho1
    }

    /// Number densities `n_k = M ρ_k / k` for mass scale `mass`.
    pub fn number_density(&self, mass: f64) -> Vec<f64> {
        self.rho.iter().enumerate().map(|(i, &r)| mass * r / (i + 1) as f64).collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("k,rho_k\n");
        for (i, v) in self.rho.iter().enumerate() {
            out.push_str(&format!("{},{:e}\n", i + 1, v));
        }
        out
    }
}

/// Closed-form steady state with all mass in finite clusters.
///
/// With `Σρ = 1` the prefactor is `γ = (K̂/2)/(F̂ + K̂)`. The generating
/// function `G(x) = Σ ρ_k x^k` satisfies `G = ρ₁x + γG²`, and `G(1) = 1`
/// forces `ρ₁ = 1 − γ`.
pub fn catalan_steady_state(k_hat: f64, f_hat: f64, k_out: usize) -> Result<SteadyStateSolution> {
    if !(f_hat > 0.0 && f_hat.is_finite()) {
        return Err(Error::InvalidNumerics(
            "steady state needs F > 0 (F = 0 gels)".into(),
        ));
    }
    if !(k_hat >= 0.0 && k_hat.is_finite()) {
        return Err(Error::InvalidNumerics(format!("K must be non-negative, got {k_hat}")));
    }
    let gamma = 0.5 * k_hat / (f_hat + k_hat);
    let rho1 = 1.0 - gamma;
    let (ln_g, ln_r) = (gamma.ln(), rho1.ln());
    let rho = (1..=k_out as u64)
        .map(|k| {
            if k == 1 {
                rho1
            } else if gamma == 0.0 {
                0.0
            } else {
                (ln_catalan(k - 1) + (k - 1) as f64 * ln_g + k as f64 * ln_r).exp()
            }
        })
        .collect();
    Ok(SteadyStateSolution { rho, gamma, rho1 })
}
