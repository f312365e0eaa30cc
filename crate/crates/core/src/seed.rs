//! Seed derivation for per-sample random streams.
//!
//! Every random draw in the simulator comes from a generator keyed by
//! `(global_seed, sample_index, stream)`, so any sample can be regenerated
//! on its own and in any order.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Independent random streams used by the simulator and the trainer.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Pass = 1,
    Scene = 2,
    SweepNoise = 3,
    Camera = 4,
    Lidar = 5,
    Radar = 6,
    Gps = 7,
    Clutter = 8,
    ModelInit = 9,
    Shuffle = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn derive_seed(global_seed: u64, index: u64, stream: Stream) -> u64 {
    let a = splitmix64(global_seed);
    let b = splitmix64(a ^ index.wrapping_mul(0xD134_2543_DE82_EF95));
    splitmix64(b ^ (stream as u64).wrapping_mul(0xA24B_AED4_963E_E407))
}

pub fn stream_rng(global_seed: u64, index: u64, stream: Stream) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(global_seed, index, stream))
}
