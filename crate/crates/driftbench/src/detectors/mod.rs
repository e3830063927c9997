//! Unsupervised anomaly scorers over real feature vectors, all behind one
//! convention: `fit` on training rows, `score` one row, higher means more
//! anomalous. Fitting is deterministic given a seed; scoring is pure and
//! fans out over records.

use ndarray::{Array2, ArrayView1, ArrayView2};
use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::parallel;

mod copod;
mod ecod;
mod isoforest;
mod lof;
mod random;
mod vectorizer;

pub use copod::Copod;
pub use ecod::Ecod;
pub use isoforest::{IsoForestParams, IsolationForest};
pub use lof::Lof;
pub use random::RandomScorer;
pub use vectorizer::{FeatureVectorizer, VectorMode};

/// Fitted anomaly scorer: score one feature vector, higher = more
/// anomalous.
pub trait AnomalyScorer: Send + Sync {
    fn score(&self, x: ArrayView1<f64>) -> f64;

    /// Score every row, in parallel when the feature allows.
    fn score_rows(&self, x: ArrayView2<f64>) -> Vec<f64> {
        let rows: Vec<usize> = (0..x.nrows()).collect();
        parallel::map(&rows, |i| self.score(x.row(*i)))
    }
}

/// Sequential reference path for the benches.
pub fn score_rows_seq<S: AnomalyScorer>(scorer: &S, x: ArrayView2<f64>) -> Vec<f64> {
    (0..x.nrows()).map(|i| scorer.score(x.row(i))).collect()
}

/// Fitted state of any vector detector, serializable for reuse across
/// CLI invocations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind")]
pub enum DetectorState {
    Ecod(Ecod),
    Copod(Copod),
    IsoForest(IsolationForest),
    Lof(Lof),
    Random(RandomScorer),
}

impl DetectorState {
    pub fn name(&self) -> &'static str {
        match self {
            DetectorState::Ecod(_) => "ecod",
            DetectorState::Copod(_) => "copod",
            DetectorState::IsoForest(_) => "isoforest",
            DetectorState::Lof(_) => "lof",
            DetectorState::Random(_) => "random",
        }
    }

    pub fn as_scorer(&self) -> &dyn AnomalyScorer {
        match self {
            DetectorState::Ecod(d) => d,
            DetectorState::Copod(d) => d,
            DetectorState::IsoForest(d) => d,
            DetectorState::Lof(d) => d,
            DetectorState::Random(d) => d,
        }
    }
}

/// Detector construction parameters, one entry per supported algorithm.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum DetectorSpec {
    Ecod,
    Copod,
    IsoForest(IsoForestParams),
    Lof { k: usize },
    Random,
}

impl DetectorSpec {
    pub fn parse(name: &str, seed: u64) -> Option<DetectorSpec> {
        match name {
            "ecod" => Some(DetectorSpec::Ecod),
            "copod" => Some(DetectorSpec::Copod),
            "isoforest" => Some(DetectorSpec::IsoForest(IsoForestParams::new(seed))),
            "lof" => Some(DetectorSpec::Lof { k: 20 }),
            "random" => Some(DetectorSpec::Random),
            _ => None,
        }
    }

    pub fn fit(&self, train: ArrayView2<f64>, seed: u64) -> Result<DetectorState> {
        Ok(match self {
            DetectorSpec::Ecod => DetectorState::Ecod(Ecod::fit(train)?),
            DetectorSpec::Copod => DetectorState::Copod(Copod::fit(train)?),
            DetectorSpec::IsoForest(params) => {
                let params = IsoForestParams { seed, ..*params };
                DetectorState::IsoForest(IsolationForest::fit(train, &params)?)
            }
            DetectorSpec::Lof { k } => DetectorState::Lof(Lof::fit(train, *k)?),
            DetectorSpec::Random => DetectorState::Random(RandomScorer::new(seed)),
        })
    }
}

/// Empirical tail statistics shared by ECOD and COPOD: per-dimension
/// sorted samples plus the skewness sign used to pick a tail.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MarginalTails {
    sorted_columns: Vec<Vec<f64>>,
    skew: Vec<f64>,
    n: usize,
}

impl MarginalTails {
    pub fn fit(x: ArrayView2<f64>) -> Result<Self> {
        if x.nrows() < 2 {
            return Err(crate::error::Error::TooFewPoints {
                have: x.nrows(),
                need: 2,
            });
        }
        let mut sorted_columns = Vec::with_capacity(x.ncols());
        let mut skew = Vec::with_capacity(x.ncols());
        for col in x.columns() {
            let mut values: Vec<f64> = col.to_vec();
            values.sort_by(|a, b| a.total_cmp(b));
            skew.push(sample_skewness(&values));
            sorted_columns.push(values);
        }
        Ok(MarginalTails {
            sorted_columns,
            skew,
            n: x.nrows(),
        })
    }

    pub fn dims(&self) -> usize {
        self.sorted_columns.len()
    }

    /// Negative log left/right tail probabilities of `value` in dimension
    /// `dim`, under the rank/(n+1) convention with ranks clamped to
    /// [1, n] so no tail ever reaches probability zero.
    pub fn neg_log_tails(&self, dim: usize, value: f64) -> (f64, f64) {
        let col = &self.sorted_columns[dim];
        let n = self.n;
        // #{x_i <= value} and #{x_i >= value} by binary search
        let le = col.partition_point(|x| *x <= value);
        let ge = n - col.partition_point(|x| *x < value);
        let denom = (n + 1) as f64;
        let left = (le.clamp(1, n) as f64 / denom).ln();
        let right = (ge.clamp(1, n) as f64 / denom).ln();
        (-left, -right)
    }

    /// Tail selected by the dimension's skewness: left for left-skewed
    /// marginals, right otherwise.
    pub fn neg_log_skew_tail(&self, dim: usize, value: f64) -> f64 {
        let (left, right) = self.neg_log_tails(dim, value);
        if self.skew[dim] < 0.0 {
            left
        } else {
            right
        }
    }
}

fn sample_skewness(values: &[f64]) -> f64 {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let m2 = values.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    let m3 = values.iter().map(|x| (x - mean).powi(3)).sum::<f64>() / n;
    if m2 <= 0.0 {
        0.0
    } else {
        m3 / m2.powf(1.5)
    }
}

/// Row-major matrix from a slice of equal-length vectors.
pub fn rows_to_matrix(rows: &[Vec<f64>]) -> Array2<f64> {
    if rows.is_empty() {
        return Array2::zeros((0, 0));
    }
    let dim = rows[0].len();
    let mut out = Array2::zeros((rows.len(), dim));
    for (i, row) in rows.iter().enumerate() {
        for (j, v) in row.iter().enumerate() {
            out[[i, j]] = *v;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn tails_are_finite_for_duplicates_and_extremes() {
        let x = array![[1.0], [1.0], [2.0], [3.0]];
        let tails = MarginalTails::fit(x.view()).unwrap();
        for probe in [0.0, 1.0, 2.5, 3.0, 99.0] {
            let (l, r) = tails.neg_log_tails(0, probe);
            assert!(l.is_finite() && r.is_finite(), "probe {probe}");
            assert!(l >= 0.0 && r >= 0.0);
        }
        // far outside: both clamped ranks give the maximal tail value
        let (l_lo, _) = tails.neg_log_tails(0, -100.0);
        assert!((l_lo - 5.0f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn skewness_sign_matches_construction() {
        let right_skewed = [0.0, 0.0, 0.1, 0.2, 10.0];
        assert!(sample_skewness(&right_skewed) > 0.0);
        let left_skewed: Vec<f64> = right_skewed.iter().map(|x| -x).collect();
        assert!(sample_skewness(&left_skewed) < 0.0);
        assert_eq!(sample_skewness(&[2.0, 2.0, 2.0]), 0.0);
    }
}
