//! Hierarchical deterministic seeding.
//!
//! A [`SeedTree`] node names a position in a fixed traversal (page → record →
//! line → cell). Each node hands out an independent ChaCha stream, so an
//! extra draw in one branch never shifts the draws of its siblings.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct SeedTree(u64);

impl SeedTree {
    pub fn new(seed: u64) -> Self {
        SeedTree(splitmix64(seed ^ 0x6a09_e667_f3bc_c908))
    }

    /// Child node identified by a label and an index.
    pub fn child(self, label: &str, index: u64) -> Self {
        let mut h = self.0;
        for b in label.bytes() {
            h = splitmix64(h ^ b as u64);
        }
        SeedTree(splitmix64(h ^ index.wrapping_mul(0x9e37_79b9_7f4a_7c15)))
    }

    pub fn rng(self) -> Rng {
        ChaCha8Rng::seed_from_u64(self.0)
    }

    pub fn value(self) -> u64 {
        self.0
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
