//! Deterministic seed derivation for ensembles and campaigns.

use sha2::{Digest, Sha256};

/// Child seed for `(point, replica)` under `master`.
///
/// The result depends only on the three integers, never on the order in
/// which tasks are scheduled.
pub fn child_seed(master: u64, point: u64, replica: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(b"gelshatter/child-seed/v1");
    h.update(master.to_le_bytes());
    h.update(point.to_le_bytes());
    h.update(replica.to_le_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("digest has 32 bytes"))
}

/// Hex SHA-256 of arbitrary bytes.
pub fn digest_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}
