//! Discrete-step stochastic driver.
//!
//! Every computational step is one event attempt. With probability
//! `K̂/(K̂+F̂)` two nodes are picked independently and uniformly; if they
//! belong to different entries those entries merge. Otherwise one node is
//! picked and its cluster shatters when it is larger than the fragmentation
//! threshold. Degenerate draws are no-ops but still cost a step.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::{InitialCondition, SimulationConfig};
use crate::error::{Error, Result};
use crate::observables::{CyclicityTally, SignSeries, SizeHistogram};
use crate::population::{ClusterPopulation, Entry, PopulationLayout};
use crate::seed::{child_seed, digest_hex};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Attempt {
    Coalescence,
    Fragmentation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EventOutcome {
    Coalesced { left: u64, right: u64, merged: u64 },
    Shattered(u64),
    NoOp(Attempt),
}

impl EventOutcome {
    pub fn attempt(&self) -> Attempt {
        match *self {
            Self::Coalesced { .. } => Attempt::Coalescence,
            Self::Shattered(_) => Attempt::Fragmentation,
            Self::NoOp(a) => a,
        }
    }
}

/// Performs one computational step on `pop`.
pub fn step<R: Rng + ?Sized>(
    pop: &mut ClusterPopulation,
    cfg: &SimulationConfig,
    rng: &mut R,
) -> EventOutcome {
    let coalesce = rng.random::<f64>() < cfg.coalescence_probability();
    if coalesce {
        let a = pop.sample_node(rng);
        let b = pop.sample_node(rng);
        if a.entry == b.entry {
            return EventOutcome::NoOp(Attempt::Coalescence);
        }
        let merged = pop
            .merge(a.entry, b.entry)
            .expect("sampled entries are live and distinct");
        EventOutcome::Coalesced {
            left: a.size,
            right: b.size,
            merged,
        }
    } else {
        let pick = pop.sample_node(rng);
        match pick.entry {
            Entry::Cluster(_) if pick.size > cfg.frag_threshold => {
                let size = pop.shatter(pick.entry).expect("sampled cluster is live");
                EventOutcome::Shattered(size)
            }
            _ => EventOutcome::NoOp(Attempt::Fragmentation),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrajectorySample {
    pub step: u64,
    #[serde(rename = "N")]
    pub n: u64,
    pub k_max: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub histogram: Option<SizeHistogram>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ShatterEvent {
    pub step: u64,
    pub size: u64,
    pub was_largest: bool,
}

/// Tallies of event attempts and their outcomes.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct EventTally {
    pub coalescence_attempts: u64,
    pub fragmentation_attempts: u64,
    pub coalesced: u64,
    pub shattered: u64,
    pub noop: u64,
}

impl EventTally {
    fn record(&mut self, outcome: &EventOutcome) {
        match outcome.attempt() {
            Attempt::Coalescence => self.coalescence_attempts += 1,
            Attempt::Fragmentation => self.fragmentation_attempts += 1,
        }
        match outcome {
            EventOutcome::Coalesced { .. } => self.coalesced += 1,
            EventOutcome::Shattered(_) => self.shattered += 1,
            EventOutcome::NoOp(_) => self.noop += 1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub config: SimulationConfig,
    pub samples: Vec<TrajectorySample>,
    pub shatter_events: Vec<ShatterEvent>,
    pub events: EventTally,
    pub cyclicity: CyclicityTally,
    #[serde(skip)]
    pub kmax_signs: Option<SignSeries>,
    pub final_histogram: SizeHistogram,
    pub rng_fingerprint: String,
}

impl Trajectory {
    pub fn largest_shatter_count(&self) -> usize {
        self.shatter_events.iter().filter(|e| e.was_largest).count()
    }

    /// `step,N,k_max` table.
    pub fn samples_csv(&self) -> String {
        let mut out = String::from("step,N,k_max\n");
        for s in &self.samples {
            out.push_str(&format!("{},{},{}\n", s.step, s.n, s.k_max));
        }
        out
    }

    /// `step,size,was_largest` table.
    pub fn events_csv(&self) -> String {
        let mut out = String::from("step,size,was_largest\n");
        for e in &self.shatter_events {
            out.push_str(&format!("{},{},{}\n", e.step, e.size, e.was_largest as u8));
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

/// Serialized generator position: a ChaCha8 stream is fully determined by
/// its seed, stream id and word position.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub seed: String,
    pub stream: u64,
    pub word_pos: String,
}

impl RngState {
    pub fn capture(rng: &ChaCha8Rng) -> Self {
        Self {
            seed: hex::encode(rng.get_seed()),
            stream: rng.get_stream(),
            word_pos: rng.get_word_pos().to_string(),
        }
    }

    pub fn restore(&self) -> Result<ChaCha8Rng> {
        let bytes = hex::decode(&self.seed).map_err(|e| Error::Checkpoint(e.to_string()))?;
        let seed: [u8; 32] = bytes
            .try_into()
            .map_err(|_| Error::Checkpoint("rng seed must be 32 bytes".into()))?;
        let word_pos: u128 = self
            .word_pos
            .parse()
            .map_err(|_| Error::Checkpoint("bad rng word position".into()))?;
        let mut rng = ChaCha8Rng::from_seed(seed);
        rng.set_stream(self.stream);
        rng.set_word_pos(word_pos);
        Ok(rng)
    }

    pub fn fingerprint(&self) -> String {
        digest_hex(format!("{}:{}:{}", self.seed, self.stream, self.word_pos).as_bytes())
    }
}

/// Everything needed to continue a run bit-exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub config: SimulationConfig,
    pub step: u64,
    pub histogram: SizeHistogram,
    pub layout: PopulationLayout,
    pub rng: RngState,
    pub events: EventTally,
    pub cyclicity: CyclicityTally,
}

/// A run in progress.
pub struct Simulation {
    cfg: SimulationConfig,
    pop: ClusterPopulation,
    rng: ChaCha8Rng,
    step: u64,
    k_max: u64,
    samples: Vec<TrajectorySample>,
    shatter_events: Vec<ShatterEvent>,
    events: EventTally,
    cyclicity: CyclicityTally,
    signs: Option<SignSeries>,
}

impl Simulation {
    pub fn new(cfg: SimulationConfig) -> Result<Self> {
        cfg.validate()?;
        let pop = match cfg.init {
            InitialCondition::AllMonomers => ClusterPopulation::all_monomers(cfg.mass),
            InitialCondition::SingleGel => ClusterPopulation::single_gel(cfg.mass),
        };
        let rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        let mut sim = Self::assemble(cfg, pop, rng, 0);
        sim.record_sample();
        Ok(sim)
    }

    fn assemble(cfg: SimulationConfig, pop: ClusterPopulation, rng: ChaCha8Rng, step: u64) -> Self {
        let signs = cfg.record_kmax_signs.then(SignSeries::default);
        Self {
            k_max: pop.k_max(),
            cfg,
            pop,
            rng,
            step,
            samples: Vec::new(),
            shatter_events: Vec::new(),
            events: EventTally::default(),
            cyclicity: CyclicityTally::default(),
            signs,
        }
    }

    /// Continues from a checkpoint; samples and events recorded afterwards
    /// are those of the uninterrupted run from that step on.
    pub fn resume(cp: &Checkpoint) -> Result<Self> {
        cp.config.validate()?;
        let pop = ClusterPopulation::from_layout(&cp.layout)?;
        if pop.histogram() != cp.histogram || pop.mass() != cp.config.mass {
            return Err(Error::Checkpoint("histogram and slot layout disagree".into()));
        }
        let rng = cp.rng.restore()?;
        let mut sim = Self::assemble(cp.config.clone(), pop, rng, cp.step);
        sim.events = cp.events;
        sim.cyclicity = cp.cyclicity;
        Ok(sim)
    }

    pub fn checkpoint(&self) -> Checkpoint {
        Checkpoint {
            config: self.cfg.clone(),
            step: self.step,
            histogram: self.pop.histogram(),
            layout: self.pop.layout(),
            rng: RngState::capture(&self.rng),
            events: self.events,
            cyclicity: self.cyclicity,
        }
    }

    pub fn population(&self) -> &ClusterPopulation {
        &self.pop
    }

    pub fn current_step(&self) -> u64 {
        self.step
    }

    fn record_sample(&mut self) {
        let histogram = self.cfg.record_histograms.then(|| self.pop.histogram());
        self.samples.push(TrajectorySample {
            step: self.step,
            n: self.pop.n_clusters(),
            k_max: self.k_max,
            histogram,
        });
    }

    /// Executes a single step and updates all records.
    pub fn advance(&mut self) -> EventOutcome {
        let before = self.k_max;
        let outcome = step(&mut self.pop, &self.cfg, &mut self.rng);
        self.step += 1;
        match outcome {
            EventOutcome::Coalesced { merged, .. } => {
                self.k_max = self.k_max.max(merged);
            }
            EventOutcome::Shattered(size) => {
                self.shatter_events.push(ShatterEvent {
                    step: self.step,
                    size,
                    was_largest: size == before,
                });
                if size == before {
                    self.k_max = self.pop.k_max();
                }
            }
            EventOutcome::NoOp(_) => {}
        }
        self.events.record(&outcome);
        let delta = self.k_max as i64 - before as i64;
        self.cyclicity.record(delta);
        if let Some(signs) = self.signs.as_mut() {
            signs.push(delta.signum() as i8);
        }
        if self.step.is_multiple_of(self.cfg.sample_interval) {
            self.record_sample();
        }
        outcome
    }

    /// Runs until `max_steps` have elapsed in total.
    pub fn run_to_end(mut self) -> Trajectory {
        while self.step < self.cfg.max_steps {
            self.advance();
        }
        self.finish()
    }

    /// Runs `n` more steps (not past `max_steps`).
    pub fn run_for(&mut self, n: u64) {
        let end = (self.step + n).min(self.cfg.max_steps);
        while self.step < end {
            self.advance();
        }
    }

    pub fn finish(self) -> Trajectory {
        let rng_fingerprint = RngState::capture(&self.rng).fingerprint();
        Trajectory {
            final_histogram: self.pop.histogram(),
            config: self.cfg,
            samples: self.samples,
            shatter_events: self.shatter_events,
            events: self.events,
            cyclicity: self.cyclicity,
            kmax_signs: self.signs,
            rng_fingerprint,
        }
    }
}

/// Runs one trajectory from `cfg.init` for `cfg.max_steps` steps.
pub fn run(cfg: &SimulationConfig) -> Result<Trajectory> {
    Ok(Simulation::new(cfg.clone())?.run_to_end())
}

/// Config of replica `replica` within ensemble point `point`.
pub fn replica_config(cfg: &SimulationConfig, point: u64, replica: u64) -> SimulationConfig {
    let mut child = cfg.clone();
    child.seed = child_seed(cfg.seed, point, replica);
    child
}

/// Runs `replicas` independent trajectories on the global rayon pool.
///
/// Replica `k` is seeded with `child_seed(cfg.seed, 0, k)`; output order is
/// replica order whatever the scheduling.
pub fn run_ensemble(cfg: &SimulationConfig, replicas: u64) -> Result<Vec<Trajectory>> {
    cfg.validate()?;
    if replicas == 0 {
        return Err(Error::InvalidConfig {
            field: "replicas",
            reason: "must be at least 1".into(),
        });
    }
    (0..replicas)
        .into_par_iter()
        .map(|k| run(&replica_config(cfg, 0, k)))
        .collect()
}

/// [`run_ensemble`] on a dedicated pool of `workers` threads.
pub fn run_ensemble_with_workers(
    cfg: &SimulationConfig,
    replicas: u64,
    workers: usize,
) -> Result<Vec<Trajectory>> {
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(workers.max(1))
        .build()
        .map_err(|e| Error::InvalidConfig {
            field: "workers",
            reason: e.to_string(),
        })?;
    pool.install(|| run_ensemble(cfg, replicas))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pure_coalescence_reaches_single_gel() {
        let cfg = SimulationConfig::new(10, 1.0, 0.0).with_steps(10_000).with_sample_interval(100);
        let t = run(&cfg).unwrap();
        let last = t.samples.last().unwrap();
        assert_eq!((last.n, last.k_max), (1, 10));
        assert!(t.shatter_events.is_empty());
        assert_eq!(t.events.fragmentation_attempts, 0);
    }

    #[test]
    fn gel_shatters_to_monomers() {
        let mut pop = ClusterPopulation::single_gel(30);
        let cfg = SimulationConfig::new(30, 0.0, 1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        assert_eq!(step(&mut pop, &cfg, &mut rng), EventOutcome::Shattered(30));
        assert_eq!(pop.monomers(), 30);
        // Nothing left to shatter.
        assert_eq!(step(&mut pop, &cfg, &mut rng), EventOutcome::NoOp(Attempt::Fragmentation));
    }

    #[test]
    fn immune_clusters_do_not_shatter() {
        let cfg = SimulationConfig::new(30, 0.0, 1.0).with_threshold(30);
        let mut pop = ClusterPopulation::single_gel(30);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            assert_eq!(step(&mut pop, &cfg, &mut rng), EventOutcome::NoOp(Attempt::Fragmentation));
        }
    }

    #[test]
    fn samples_on_stride_and_events_logged() {
        let cfg = SimulationConfig::new(50, 0.9, 0.1)
            .with_steps(1000)
            .with_sample_interval(10)
            .with_seed(5);
        let t = run(&cfg).unwrap();
        assert_eq!(t.samples.len(), 101);
        assert!(t.samples.windows(2).all(|w| w[1].step == w[0].step + 10));
        assert!(t.shatter_events.windows(2).all(|w| w[1].step > w[0].step));
        assert_eq!(t.events.shattered as usize, t.shatter_events.len());
        assert_eq!(t.cyclicity.steps, 1000);
    }

    #[test]
    fn checkpoint_resume_is_exact() {
        let cfg = SimulationConfig::new(300, 0.95, 0.05)
            .with_steps(20_000)
            .with_sample_interval(50)
            .with_seed(11);
        let full = run(&cfg).unwrap();

        let mut sim = Simulation::new(cfg.clone()).unwrap();
        sim.run_for(7_000);
        let json = serde_json::to_string(&sim.checkpoint()).unwrap();
        let cp: Checkpoint = serde_json::from_str(&json).unwrap();
        let resumed = Simulation::resume(&cp).unwrap().run_to_end();

        assert_eq!(resumed.rng_fingerprint, full.rng_fingerprint);
        assert_eq!(resumed.final_histogram, full.final_histogram);
        assert_eq!(resumed.events, full.events);
        assert_eq!(resumed.cyclicity, full.cyclicity);
        let tail: Vec<_> = full.samples.iter().filter(|s| s.step > 7_000).cloned().collect();
        assert_eq!(resumed.samples, tail);
        let tail: Vec<_> = full.shatter_events.iter().filter(|e| e.step > 7_000).copied().collect();
        assert_eq!(resumed.shatter_events, tail);
    }

    #[test]
    fn ensemble_rejects_zero_replicas() {
        let cfg = SimulationConfig::new(10, 1.0, 0.1);
        assert!(run_ensemble(&cfg, 0).is_err());
    }
}
