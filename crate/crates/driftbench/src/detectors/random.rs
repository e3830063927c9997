//! Seeded random scorer, the AUC ~ 0.5 sanity baseline.

use ndarray::ArrayView1;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::AnomalyScorer;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RandomScorer {
    seed: u64,
}

impl RandomScorer {
    pub fn new(seed: u64) -> Self {
        RandomScorer { seed }
    }
}

impl AnomalyScorer for RandomScorer {
    /// Uniform in [0, 1), keyed on the seed and the feature bytes so the
    /// score depends only on the record, never on evaluation order.
    fn score(&self, x: ArrayView1<f64>) -> f64 {
        let mut hasher = Sha256::new();
        hasher.update(self.seed.to_le_bytes());
        for v in x.iter() {
            hasher.update(v.to_le_bytes());
        }
        let digest = hasher.finalize();
        let raw = u64::from_le_bytes(digest[..8].try_into().unwrap());
        (raw >> 11) as f64 / (1u64 << 53) as f64
    }
}
