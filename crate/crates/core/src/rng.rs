//! Named, replayable random sub-streams.
//!
//! Every random decision in a run is drawn from a stream keyed by
//! `(root seed, stream name, a, b)`, e.g. `("mask", epoch, node)`. Streams are
//! independent of evaluation order, so any component can be replayed alone.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type StreamRng = ChaCha8Rng;

pub const SPLIT: &str = "split";
pub const INIT: &str = "init";
pub const MASK: &str = "mask";
pub const NEGATIVES: &str = "negatives";
pub const SAMPLING: &str = "sampling";
pub const RECSYS: &str = "recsys";
pub const SYNTH: &str = "synth";

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(name: &str) -> u64 {
    name.bytes().fold(0xcbf2_9ce4_8422_2325, |h, b| {
        (h ^ u64::from(b)).wrapping_mul(0x0000_0100_0000_01b3)
    })
}

/// Deterministic sub-stream for `(root, name, a, b)`.
pub fn substream(root: u64, name: &str, a: u64, b: u64) -> StreamRng {
    let mut h = splitmix64(root ^ fnv1a(name));
    h = splitmix64(h ^ a);
    h = splitmix64(h ^ b.rotate_left(17));
    ChaCha8Rng::seed_from_u64(h)
}
