//! Deterministic seed derivation.
//!
//! Every random draw in a campaign comes from a `ChaCha8Rng` whose seed is a
//! pure function of the master seed and a path of labels (iteration, purpose,
//! index). Streams never share state, so work can be fanned out across
//! threads, and a reloaded run resumes with exactly the draws it would have
//! made without interruption.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

/// Purpose tags. Keeping oracle draws under their own tag is what guarantees
/// that observations never consume inference randomness.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u64)]
pub enum Stream {
    Prior = 1,
    Resample = 2,
    BeliefSamples = 3,
    Optimizer = 4,
    Utility = 5,
    WeightUpdate = 6,
    Oracle = 7,
    Posterior = 8,
    Marginal = 9,
    Likelihood = 10,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// A node in the seed tree. Cheap to copy; `child` derives a new node.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedNode(u64);

impl SeedNode {
    pub fn new(master: u64) -> Self {
        SeedNode(splitmix64(master))
    }

    pub fn child(self, label: u64) -> Self {
        SeedNode(splitmix64(self.0 ^ splitmix64(label.wrapping_add(0xA5A5_A5A5))))
    }

    pub fn stream(self, stream: Stream) -> Self {
        self.child(stream as u64)
    }

    pub fn value(self) -> u64 {
        self.0
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }
}
