//! Counter-based seed derivation.
//!
//! Every random stream is addressed by `(master seed, domain, index)`. The
//! domain is a hash of a label path, the index is the realization number,
//! and the stream is a ChaCha8 stream selected with `set_stream`. Nothing
//! depends on which thread evaluates which realization.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct SeedPlan {
    pub master_seed: u64,
    #[serde(default)]
    pub domain: u64,
}

impl SeedPlan {
    pub fn new(master_seed: u64) -> SeedPlan {
        SeedPlan { master_seed, domain: 0 }
    }

    /// A plan for an independent sub-experiment named `label`.
    pub fn child(&self, label: &str) -> SeedPlan {
        SeedPlan {
            master_seed: self.master_seed,
            domain: splitmix64(self.domain ^ fnv1a(label.as_bytes())),
        }
    }

    /// Same as [`child`](Self::child) with a numeric label.
    pub fn child_index(&self, index: u64) -> SeedPlan {
        SeedPlan {
            master_seed: self.master_seed,
            domain: splitmix64(self.domain.wrapping_add(splitmix64(index ^ 0xA5A5_5A5A_DEAD_BEEF))),
        }
    }

    /// Generator for realization `index` within this plan.
    pub fn rng(&self, index: u64) -> Rng {
        let key = splitmix64(self.master_seed ^ splitmix64(self.domain));
        let mut rng = ChaCha8Rng::seed_from_u64(key);
        rng.set_stream(index);
        rng
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn fnv1a(bytes: &[u8]) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in bytes {
        h ^= *b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01B3);
    }
    h
}
