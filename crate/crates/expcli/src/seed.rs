use sha2::{Digest, Sha256};

/// Stream tags for [`derive_seed`].
pub const STREAM_LOADS: u64 = 1;
pub const STREAM_NOISE: u64 = 2;
pub const STREAM_NOISE_FRESH: u64 = 3;

/// `seed = first 8 bytes (LE) of SHA-256(master || index || stream)`, each
/// input as 8 little-endian bytes.
pub fn derive_seed(master: u64, index: u64, stream: u64) -> u64 {
    let mut h = Sha256::new();
    h.update(master.to_le_bytes());
    h.update(index.to_le_bytes());
    h.update(stream.to_le_bytes());
    let d = h.finalize();
    u64::from_le_bytes(d[..8].try_into().expect("8 bytes"))
}

/// Load-profile seed of a scenario (shared by all realizations).
pub fn loads_seed(master: u64) -> u64 {
    derive_seed(master, 0, STREAM_LOADS)
}

/// Noise seed of a realization, shared across noise classes.
pub fn noise_seed(master: u64, realization: u64) -> u64 {
    derive_seed(master, realization, STREAM_NOISE)
}

/// Noise seed for a fresh draw at `snapshots` measurements.
pub fn fresh_noise_seed(master: u64, realization: u64, snapshots: u64) -> u64 {
    derive_seed(derive_seed(master, realization, STREAM_NOISE_FRESH), snapshots, STREAM_NOISE_FRESH)
}
