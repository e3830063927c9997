//! Empirical-copula outlier detection. Same marginal tail machinery as
//! ECOD, different aggregation: the per-dimension maximum of left, right
//! and skewness-selected tails, summed over dimensions.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{AnomalyScorer, MarginalTails};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Copod {
    tails: MarginalTails,
}

impl Copod {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        Ok(Copod {
            tails: MarginalTails::fit(x)?,
        })
    }
}

impl AnomalyScorer for Copod {
    fn score(&self, x: ArrayView1<f64>) -> f64 {
        let mut total = 0.0;
        for dim in 0..self.tails.dims() {
            let (left, right) = self.tails.neg_log_tails(dim, x[dim]);
            let skew = self.tails.neg_log_skew_tail(dim, x[dim]);
            total += left.max(right).max(skew);
        }
        total
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::detectors::Ecod;
    use ndarray::Array2;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn on_one_dimensional_data_copod_ranks_like_ecod() {
        let mut rng = ChaCha20Rng::seed_from_u64(2);
        let x = Array2::from_shape_fn((200, 1), |_| rng.gen_range(-3.0..3.0));
        let copod = Copod::fit(x.view()).unwrap();
        let ecod = Ecod::fit(x.view()).unwrap();
        let probes: Vec<f64> = (0..50).map(|_| rng.gen_range(-4.0..4.0)).collect();
        let c_scores: Vec<f64> = probes
            .iter()
            .map(|p| copod.score(ndarray::arr1(&[*p]).view()))
            .collect();
        let e_scores: Vec<f64> = probes
            .iter()
            .map(|p| ecod.score(ndarray::arr1(&[*p]).view()))
            .collect();
        // In one dimension max-of-sums and sum-of-maxes coincide, so the
        // rankings (indeed the values) are identical.
        for (c, e) in c_scores.iter().zip(&e_scores) {
            assert_eq!(c.to_bits(), e.to_bits());
        }
    }

    #[test]
    fn outlying_corner_scores_high() {
        let mut rng = ChaCha20Rng::seed_from_u64(8);
        let x = Array2::from_shape_fn((300, 3), |_| rng.gen_range(0.0..1.0));
        let copod = Copod::fit(x.view()).unwrap();
        let corner = ndarray::arr1(&[5.0, 5.0, 5.0]);
        let center = ndarray::arr1(&[0.5, 0.5, 0.5]);
        assert!(copod.score(corner.view()) > copod.score(center.view()));
    }
}
