//! Counter-based random streams.
//!
//! Every replication owns an independent ChaCha8 stream selected by
//! `(seed, scenario key)` as key and the replication index as stream id, so
//! results do not depend on how replications are spread across workers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub fn replication_rng(seed: u64, scenario_key: u64, replication: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&seed.to_le_bytes());
    key[8..16].copy_from_slice(&scenario_key.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(replication);
    rng
}
