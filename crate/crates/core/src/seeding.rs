//! Counter-based random substreams.
//!
//! Every random draw in an experiment comes from a ChaCha8 generator keyed
//! on the master seed, with the ChaCha stream id derived from a
//! [`StreamKey`]. Trials can therefore run in any order, on any number of
//! threads, and still see exactly the same numbers.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum Phase {
    Calibration = 1,
    Validation = 2,
    Scenario = 3,
    Noise = 4,
    Trace = 5,
}

/// Detector slot used for streams shared by every detector in a paired
/// comparison.
pub const SHARED: u32 = u32::MAX;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StreamKey {
    pub phase: Phase,
    pub detector: u32,
    pub jnr_index: u32,
    pub trial: u64,
}

impl StreamKey {
    pub fn new(phase: Phase, detector: u32, jnr_index: u32, trial: u64) -> Self {
        StreamKey {
            phase,
            detector,
            jnr_index,
            trial,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Stream id for `key`; distinct keys map to distinct ids with
/// overwhelming probability.
pub fn stream_id(key: StreamKey) -> u64 {
    let head = ((key.phase as u64) << 56) ^ ((key.detector as u64) << 24) ^ key.jnr_index as u64;
    splitmix64(splitmix64(head) ^ key.trial)
}

/// Independent generator for `(master, key)`.
pub fn substream(master: u64, key: StreamKey) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(master);
    rng.set_stream(stream_id(key));
    rng
}

/// A 64-bit seed derived from `(master, key)`, for consumers that take a
/// seed rather than a generator.
pub fn substream_seed(master: u64, key: StreamKey) -> u64 {
    use rand::RngCore;
    substream(master, key).next_u64()
}
