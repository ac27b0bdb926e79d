//! Per-trajectory random streams.
//!
//! Each trajectory draws from its own ChaCha8 stream: the 256-bit key is four
//! consecutive SplitMix64 outputs seeded with the master seed (little-endian
//! words), and the ChaCha stream id is the trajectory id. Trajectory `i` is
//! therefore a pure function of `(master_seed, i)` and can run on any worker.
//! Uniform variates use the top 53 bits of a `u64` scaled into `[0, 1)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub const RNG_ALGORITHM: &str = "chacha8-splitmix64key-stream=trajectory_id";

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9E37_79B9_7F4A_7C15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

pub fn key_schedule(master_seed: u64) -> [u8; 32] {
    let mut state = master_seed;
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    key
}

#[derive(Clone, Debug)]
pub struct TrajectoryRng(ChaCha8Rng);

impl TrajectoryRng {
    pub fn new(master_seed: u64, trajectory_id: u64) -> Self {
        let mut rng = ChaCha8Rng::from_seed(key_schedule(master_seed));
        rng.set_stream(trajectory_id);
        Self(rng)
    }

    /// Uniform on `[0, 1)`.
    #[inline]
    pub fn uniform(&mut self) -> f64 {
        (self.0.gen::<u64>() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }
}
