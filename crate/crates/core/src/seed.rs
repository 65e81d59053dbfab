//! Counter-based seed derivation.
//!
//! Every random stream in an experiment is keyed by the master seed plus a
//! short path of counters (stream tag, client number, round, ...), so adding
//! a client or a round never shifts the randomness seen by the others.

/// Stream tags used across the crate.
pub mod stream {
    pub const INIT: u64 = 1;
    pub const SAMPLE: u64 = 2;
    pub const TRAIN: u64 = 3;
    pub const CENTRALIZED: u64 = 4;
    pub const LOCAL: u64 = 5;
    pub const SWEEP: u64 = 6;
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Sub-seed for the stream addressed by `path` under `master`.
pub fn derive(master: u64, path: &[u64]) -> u64 {
    path.iter()
        .fold(splitmix64(master), |acc, &c| splitmix64(acc ^ splitmix64(c)))
}
