//! Counter-based substreams: each (master seed, seed index, purpose) triple hashes to an
//! independent ChaCha key, so results never depend on execution order.

use rand::SeedableRng;
use sha2::{Digest, Sha256};

use crate::SimRng;

pub const THETA: &str = "theta";
pub const OUTCOME: &str = "outcome";
pub const POLICY: &str = "policy";
pub const PRIOR: &str = "prior";

pub fn substream(master_seed: u64, seed_index: u64, purpose: &str) -> SimRng {
    let mut h = Sha256::new();
    h.update(master_seed.to_le_bytes());
    h.update(seed_index.to_le_bytes());
    h.update(purpose.as_bytes());
    let digest = h.finalize();
    let mut key = [0u8; 32];
    key.copy_from_slice(&digest);
    SimRng::from_seed(key)
}
