use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("invalid configuration: {field}: {reason}")]
    InvalidConfig { field: &'static str, reason: String },

    #[error("cannot merge an entry with itself")]
    SelfMerge,

    #[error("cannot shatter the monomer pool")]
    ShatterMonomer,

    #[error("no such cluster slot: {0}")]
    UnknownSlot(usize),

    #[error("empty histogram")]
    EmptyHistogram,

    #[error("histograms have different total mass ({0} vs {1})")]
    MixedMass(u64, u64),

    #[error("histogram is inconsistent: {0}")]
    BadHistogram(String),

    #[error("cyclicity needs a stride-1 k_max series (got stride {0})")]
    StrideNotOne(u64),

    #[error("series too short: need at least {needed}, got {got}")]
    TooShort { needed: usize, got: usize },

    #[error("insufficient samples: need at least {needed}, got {got}")]
    InsufficientSamples { needed: u64, got: u64 },

    #[error("degenerate data: {0}")]
    Degenerate(String),

    #[error("integration became unstable at t = {t}: n[{k}] = {value:e}")]
    Unstable { t: f64, k: usize, value: f64 },

    #[error("invalid numerical parameter: {0}")]
    InvalidNumerics(String),

    #[error("checkpoint does not match: {0}")]
    Checkpoint(String),
}
