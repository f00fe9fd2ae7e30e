//! Counter-based random streams.
//!
//! Every random draw in a run comes from a ChaCha8 stream keyed by the run
//! seed, with the 64-bit stream id packing a purpose tag, the SMC iteration
//! and an item index. Results therefore do not depend on the order in which
//! particles are processed or on how many workers process them.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

/// What a stream is used for. Distinct purposes never share a stream.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum Purpose {
    Init = 1,
    Resample = 2,
    Move = 3,
    Pilot = 4,
    Data = 5,
    Test = 6,
}

const ITER_BITS: u32 = 24;
const INDEX_BITS: u32 = 32;

/// Stream for `(seed, purpose, iteration, index)`.
///
/// Panics if `iteration >= 2^24` or `index >= 2^32`.
pub fn stream(seed: u64, purpose: Purpose, iteration: u64, index: u64) -> StreamRng {
    assert!(iteration < 1 << ITER_BITS, "iteration {iteration} out of range");
    assert!(index < 1 << INDEX_BITS, "index {index} out of range");
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(((purpose as u64) << (ITER_BITS + INDEX_BITS)) | (iteration << INDEX_BITS) | index);
    rng
}

/// Child generator seeded from one draw of `parent`.
pub fn fork(parent: &mut StreamRng) -> StreamRng {
    use rand::RngCore;
    ChaCha8Rng::seed_from_u64(parent.next_u64())
}
