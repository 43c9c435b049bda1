//! Seed splitting.
//!
//! Every random stream in the crate is derived from a user seed and a
//! replicate index: replicate `r` of seed `s` is ChaCha8 keyed by
//! `seed_from_u64(s)` on stream `r`. Replicates are therefore independent of
//! the order and thread in which they are drawn.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn replicate_rng(seed: u64, replicate: u64) -> Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(replicate);
    rng
}
