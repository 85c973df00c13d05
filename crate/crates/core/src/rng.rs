//! Counter-based random streams.
//!
//! Every replication draws from its own ChaCha8 stream, keyed by
//! `(master seed, experiment id, replication index)`. ChaCha is a counter
//! mode cipher, so a stream is fully determined by its key and position and
//! never depends on which worker ran it or in which order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type SimRng = ChaCha8Rng;

/// FNV-1a hash of a label, used to give each experiment a stable id.
pub const fn experiment_id(label: &str) -> u64 {
    let bytes = label.as_bytes();
    let mut hash = 0xcbf2_9ce4_8422_2325_u64;
    let mut i = 0;
    while i < bytes.len() {
        hash ^= bytes[i] as u64;
        hash = hash.wrapping_mul(0x0100_0000_01b3);
        i += 1;
    }
    hash
}

/// Combine an experiment id with extra integer coordinates (barrier, N, ...).
pub fn sub_experiment(base: u64, parts: &[u64]) -> u64 {
    parts
        .iter()
        .fold(base, |acc, &p| splitmix64(acc ^ splitmix64(p)))
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// The random stream for one replication.
pub fn stream(master_seed: u64, experiment: u64, replication: u64) -> SimRng {
    let mut seed = [0u8; 32];
    let words = [
        splitmix64(master_seed),
        splitmix64(master_seed ^ experiment.rotate_left(17)),
        splitmix64(experiment),
        splitmix64(experiment ^ 0x5851_f42d_4c95_7f2d),
    ];
    for (chunk, w) in seed.chunks_exact_mut(8).zip(words) {
        chunk.copy_from_slice(&w.to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(seed);
    rng.set_stream(replication);
    rng
}
