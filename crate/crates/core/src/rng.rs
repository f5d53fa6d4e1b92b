//! Seed expansion for stochastic stages.
//!
//! One 64-bit master seed feeds every stage. Each stage reads its own ChaCha
//! stream selected by a fixed stage id, so adding a stage never shifts the
//! random numbers another stage sees.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Stream ids of the stochastic stages.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
#[repr(u64)]
pub enum Stage {
    PushSampling = 1,
    PushStarts = 2,
    Synthetic = 3,
}

pub fn stage_rng(seed: u64, stage: Stage) -> ChaCha8Rng {
    stream_rng(seed, stage as u64)
}

pub fn stream_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}
