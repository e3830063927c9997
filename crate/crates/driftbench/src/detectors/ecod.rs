//! Empirical-CDF outlier detection: per-dimension tail probabilities
//! aggregated as the max of the left-tail sum, the right-tail sum, and
//! the skewness-selected sum.

use ndarray::{ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use super::{AnomalyScorer, MarginalTails};
use crate::error::Result;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Ecod {
    tails: MarginalTails,
}

impl Ecod {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        Ok(Ecod {
            tails: MarginalTails::fit(x)?,
        })
    }
}

impl AnomalyScorer for Ecod {
    fn score(&self, x: ArrayView1<f64>) -> f64 {
        let mut left_sum = 0.0;
        let mut right_sum = 0.0;
        let mut skew_sum = 0.0;
        for dim in 0..self.tails.dims() {
            let (left, right) = self.tails.neg_log_tails(dim, x[dim]);
            left_sum += left;
            right_sum += right;
            skew_sum += self.tails.neg_log_skew_tail(dim, x[dim]);
        }
        left_sum.max(right_sum).max(skew_sum)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array2;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;
    use rand_distr::{Distribution, Normal};

    fn gaussian_sample(n: usize, seed: u64) -> Array2<f64> {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let normal = Normal::new(0.0, 1.0).unwrap();
        Array2::from_shape_fn((n, 2), |_| normal.sample(&mut rng))
    }

    #[test]
    fn median_point_scores_lowest_among_probes() {
        let x = gaussian_sample(501, 3);
        let ecod = Ecod::fit(x.view()).unwrap();
        let mut col0: Vec<f64> = x.column(0).to_vec();
        let mut col1: Vec<f64> = x.column(1).to_vec();
        col0.sort_by(|a, b| a.total_cmp(b));
        col1.sort_by(|a, b| a.total_cmp(b));
        let median = ndarray::arr1(&[col0[250], col1[250]]);
        let median_score = ecod.score(median.view());
        for probe in [[1.5, 0.0], [-2.0, 1.0], [0.0, 2.5], [3.0, -3.0]] {
            assert!(
                ecod.score(ndarray::arr1(&probe).view()) > median_score,
                "probe {probe:?}"
            );
        }
    }

    #[test]
    fn far_point_outscores_every_training_point() {
        let x = gaussian_sample(400, 11);
        let ecod = Ecod::fit(x.view()).unwrap();
        let far = ndarray::arr1(&[10.0, 10.0]);
        let far_score = ecod.score(far.view());
        for i in 0..x.nrows() {
            assert!(far_score > ecod.score(x.row(i)), "row {i}");
        }
    }

    #[test]
    fn duplicate_of_training_point_is_finite() {
        let x = gaussian_sample(50, 7);
        let ecod = Ecod::fit(x.view()).unwrap();
        let dup = x.row(0).to_owned();
        assert!(ecod.score(dup.view()).is_finite());
    }

    #[test]
    fn refit_is_bit_identical() {
        let x = gaussian_sample(100, 5);
        let a = Ecod::fit(x.view()).unwrap();
        let b = Ecod::fit(x.view()).unwrap();
        for i in 0..20 {
            assert_eq!(
                a.score(x.row(i)).to_bits(),
                b.score(x.row(i)).to_bits()
            );
        }
    }
}
