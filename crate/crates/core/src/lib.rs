//! Finite-population coalescence and shattering.
//!
//! A system of `M` conserved monomer units evolves by two competing
//! processes, one attempt per computational step:
//!
//! * multiplicative coalescence, `K(i, j) = K̂ (i/M) (j/M)`: two nodes are
//!   picked uniformly and the clusters holding them merge;
//! * shattering fragmentation, `F(i) = F̂ (i/M)`: a uniformly picked node's
//!   cluster disintegrates into monomers.
//!
//! When the two time scales `M/K̂` (gelation) and `1/F̂` (shattering) are
//! comparable the largest cluster grows gradually and then collapses,
//! producing stochastic gel-shatter cycles. The crate contains the
//! simulator ([`engine`]), the statistics used to characterise it
//! ([`observables`], [`analysis`]) and the deterministic mean-field
//! counterpart ([`meanfield`]).

pub mod analysis;
pub mod config;
pub mod engine;
pub mod error;
pub mod fenwick;
pub mod meanfield;
pub mod observables;
pub mod population;
pub mod seed;

pub use config::{InitialCondition, SimulationConfig};
pub use engine::{run, run_ensemble, EventOutcome, ShatterEvent, Trajectory, TrajectorySample};
pub use error::{Error, Result};
pub use observables::SizeHistogram;
pub use population::{ClusterPopulation, Entry, NodePick};
