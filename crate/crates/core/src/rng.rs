//! Counter-based random substreams.
//!
//! Every trial and every consumer inside a trial draws from its own ChaCha
//! stream, addressed by `(master seed, trial index, purpose)`. Streams never
//! overlap, so results do not depend on scheduling or on which consumers are
//! active.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// What a substream is used for inside one trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Purpose {
    Truth = 0,
    Fading = 1,
    Init = 2,
    Sounding = 3,
    Control = 4,
    Design = 5,
}

/// Generator behind every substream.
pub type StreamRng = ChaCha8Rng;

pub fn substream(master_seed: u64, trial: u64, purpose: Purpose) -> StreamRng {
    let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
    rng.set_stream((trial << 8) | purpose as u64);
    rng
}
