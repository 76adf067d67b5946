//! Seeded randomness with named, independent substreams.
//!
//! A substream is identified by `(seed, tag)`. Its generator state is the
//! SHA-256 digest of the seed and tag, so streams never depend on the order in
//! which other streams were created or consumed.

use std::fmt;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

/// Identity of a substream, recorded as provenance on martingale trajectories.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct StreamId {
    pub seed: u64,
    pub tag: String,
}

impl fmt::Display for StreamId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}#{}", self.tag, self.seed)
    }
}

/// Deterministic uniform source. Single owner; not shared across threads.
#[derive(Debug, Clone)]
pub struct RandomSource {
    id: StreamId,
    rng: ChaCha8Rng,
}

impl RandomSource {
    pub fn new(seed: u64, tag: &str) -> Self {
        let mut hasher = Sha256::new();
        hasher.update(b"xmart-substream\0");
        hasher.update(seed.to_le_bytes());
        hasher.update((tag.len() as u64).to_le_bytes());
        hasher.update(tag.as_bytes());
        let digest = hasher.finalize();
        let mut key = [0u8; 32];
        key.copy_from_slice(&digest);
        RandomSource {
            id: StreamId {
                seed,
                tag: tag.to_owned(),
            },
            rng: ChaCha8Rng::from_seed(key),
        }
    }

    /// Child stream `"{tag}/{sub}"` under the same seed.
    pub fn substream(&self, sub: &str) -> Self {
        RandomSource::new(self.id.seed, &format!("{}/{}", self.id.tag, sub))
    }

    pub fn id(&self) -> &StreamId {
        &self.id
    }

    /// Next draw, uniform on `[0, 1)`.
    pub fn uniform(&mut self) -> f64 {
        self.rng.random::<f64>()
    }

    pub fn standard_normal(&mut self) -> f64 {
        StandardNormal.sample(&mut self.rng)
    }

    /// Index drawn from a discrete distribution by inverse CDF, using exactly one uniform draw.
    pub fn categorical(&mut self, probs: &[f64]) -> usize {
        let u = self.uniform();
        let mut acc = 0.0;
        for (i, p) in probs.iter().enumerate() {
            acc += p;
            if u < acc {
                return i;
            }
        }
        probs.len() - 1
    }
}
