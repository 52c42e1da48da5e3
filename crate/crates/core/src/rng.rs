//! Deterministic per-item random streams.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

/// Separates random streams that must never overlap, e.g. training data and
/// the fresh trajectories used for evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeedDomain {
    Training,
    Evaluation,
    Sampling,
    Clustering,
    Null,
}

impl SeedDomain {
    fn tag(self) -> u64 {
        match self {
            SeedDomain::Training => 0x7472_6169_6e00_0001,
            SeedDomain::Evaluation => 0x6576_616c_0000_0002,
            SeedDomain::Sampling => 0x7361_6d70_0000_0003,
            SeedDomain::Clustering => 0x636c_7573_0000_0004,
            SeedDomain::Null => 0x6e75_6c6c_0000_0005,
        }
    }
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives the seed of item `index` in `domain` from a run seed.
pub fn derive_seed(seed: u64, domain: SeedDomain, index: u64) -> u64 {
    splitmix64(splitmix64(seed ^ domain.tag()) ^ splitmix64(index.wrapping_add(0x5151)))
}

pub fn stream(seed: u64, domain: SeedDomain, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, domain, index))
}
