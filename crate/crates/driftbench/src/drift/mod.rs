//! Distribution-shift quantification between yearly record sets:
//! per-feature Jeffreys divergence matrices, class-conditional Sinkhorn
//! dataset distances over standardized one-hot features, and PCA
//! projections for visualization exports.

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::parallel;
use crate::schema::LabelClass;
use crate::tokenize::{TokenizedRecord, Vocabulary, UNK_ID};

mod pca;
mod sinkhorn;

pub use pca::{pca_project, PcaResult};
pub use sinkhorn::{sinkhorn_divergence, SinkhornParams, SinkhornResult};

/// Additive smoothing applied to histogram counts before normalization;
/// the divergence is undefined on empty bins.
pub const HISTOGRAM_SMOOTHING: f64 = 1e-6;

/// Normalized histogram of one feature over one record set.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Histogram {
    probs: Vec<f64>,
}

impl Histogram {
    /// Normalize non-negative counts into probabilities with additive
    /// smoothing epsilon on every bin.
    pub fn from_counts(counts: &[f64], epsilon: f64) -> Result<Self> {
        if counts.is_empty() {
            return Err(Error::EmptyInput("histogram needs at least one bin"));
        }
        if !(epsilon > 0.0) {
            return Err(Error::InvalidConfig("smoothing epsilon must be > 0".into()));
        }
        if counts.iter().any(|c| !c.is_finite() || *c < 0.0) {
            return Err(Error::InvalidConfig("histogram counts must be >= 0".into()));
        }
        let total: f64 = counts.iter().sum::<f64>() + epsilon * counts.len() as f64;
        Ok(Histogram {
            probs: counts.iter().map(|c| (c + epsilon) / total).collect(),
        })
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn len(&self) -> usize {
        self.probs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.probs.is_empty()
    }
}

/// Jeffreys divergence `KL(p, q) + KL(q, p) = sum (p - q) (ln p - ln q)`.
///
/// Computed term-wise from the log difference so that swapping the
/// arguments produces bit-identical output; every term is non-negative.
pub fn jeffreys(p: &Histogram, q: &Histogram) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::SupportMismatch(p.len(), q.len()));
    }
    let mut total = 0.0;
    for (pi, qi) in p.probs.iter().zip(&q.probs) {
        if pi != qi {
            total += (pi - qi) * (pi.ln() - qi.ln());
        }
    }
    Ok(total)
}

/// Dense per-feature slot layout: every token of the feature's closed
/// space, plus one trailing UNK slot for unseen categorical values.
pub fn feature_slots(vocab: &Vocabulary, feature: usize) -> Vec<u32> {
    let mut ids = vocab.feature_token_ids(feature);
    ids.push(UNK_ID);
    ids
}

/// Histogram of one feature position over tokenized records.
pub fn feature_histogram(
    records: &[TokenizedRecord],
    feature: usize,
    vocab: &Vocabulary,
    epsilon: f64,
) -> Result<Histogram> {
    let slots = feature_slots(vocab, feature);
    let index_of: std::collections::HashMap<u32, usize> = slots
        .iter()
        .enumerate()
        .map(|(slot, id)| (*id, slot))
        .collect();
    let unk_slot = slots.len() - 1;
    let mut counts = vec![0.0; slots.len()];
    for record in records {
        let id = record.tokens[feature];
        counts[*index_of.get(&id).unwrap_or(&unk_slot)] += 1.0;
    }
    Histogram::from_counts(&counts, epsilon)
}

/// Symmetric matrix of pairwise distances between yearly record sets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistanceMatrix {
    pub years: Vec<i32>,
    pub values: Vec<Vec<f64>>,
    pub metric: String,
    pub feature: Option<String>,
    pub class_pair: Option<(String, String)>,
    pub epsilon: Option<f64>,
    pub seed: Option<u64>,
    pub repeats: Option<usize>,
    pub converged: bool,
}

impl DistanceMatrix {
    /// CSV with a year header row and year-labelled rows.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("year");
        for year in &self.years {
            out.push_str(&format!(",{year}"));
        }
        out.push('\n');
        for (i, year) in self.years.iter().enumerate() {
            out.push_str(&year.to_string());
            for v in &self.values[i] {
                out.push_str(&format!(",{v:.9}"));
            }
            out.push('\n');
        }
        out
    }
}

/// Pairwise Jeffreys divergence of one feature's yearly histograms.
pub fn divergence_matrix(
    sets_by_year: &[(i32, &[TokenizedRecord])],
    feature: usize,
    vocab: &Vocabulary,
) -> Result<DistanceMatrix> {
    if sets_by_year.len() < 2 {
        return Err(Error::TooFewPoints {
            have: sets_by_year.len(),
            need: 2,
        });
    }
    let histograms: Vec<Histogram> = sets_by_year
        .iter()
        .map(|(_, records)| feature_histogram(records, feature, vocab, HISTOGRAM_SMOOTHING))
        .collect::<Result<_>>()?;
    let n = histograms.len();
    let cells: Vec<Result<f64>> = parallel::map_range(n * n, |flat| {
        let (i, j) = (flat / n, flat % n);
        if i <= j {
            jeffreys(&histograms[i], &histograms[j])
        } else {
            Ok(0.0)
        }
    });
    let mut values = vec![vec![0.0; n]; n];
    for (flat, cell) in cells.into_iter().enumerate() {
        let (i, j) = (flat / n, flat % n);
        if i <= j {
            let v = cell?;
            values[i][j] = v;
            values[j][i] = v;
        }
    }
    Ok(DistanceMatrix {
        years: sets_by_year.iter().map(|(y, _)| *y).collect(),
        values,
        metric: "jeffreys".into(),
        feature: None,
        class_pair: None,
        epsilon: None,
        seed: None,
        repeats: None,
        converged: true,
    })
}

/// Class-conditioned feature vectors of one year.
#[derive(Debug, Clone)]
pub struct YearPoints {
    pub year: i32,
    pub inliers: Array2<f64>,
    pub outliers: Array2<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ClassTag {
    Inlier,
    Outlier,
}

impl ClassTag {
    pub fn as_str(&self) -> &'static str {
        match self {
            ClassTag::Inlier => "inlier",
            ClassTag::Outlier => "outlier",
        }
    }

    pub fn of<'a>(&self, points: &'a YearPoints) -> &'a Array2<f64> {
        match self {
            ClassTag::Inlier => &points.inliers,
            ClassTag::Outlier => &points.outliers,
        }
    }

    pub fn select(label: LabelClass) -> ClassTag {
        match label {
            LabelClass::Normal => ClassTag::Inlier,
            LabelClass::Anomaly => ClassTag::Outlier,
        }
    }
}

/// Subsample up to `size` rows without replacement, seeded.
fn subsample(points: &Array2<f64>, size: usize, seed: u64) -> Array2<f64> {
    use rand::seq::SliceRandom;
    use rand::SeedableRng;
    let n = points.nrows();
    if n <= size {
        return points.clone();
    }
    let mut rng = rand_chacha::ChaCha20Rng::seed_from_u64(seed);
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut rng);
    idx.truncate(size);
    let mut out = Array2::zeros((size, points.ncols()));
    for (row, i) in idx.iter().enumerate() {
        out.row_mut(row).assign(&points.row(*i));
    }
    out
}

/// Mean-of-repeats Sinkhorn divergence matrix between class-conditioned
/// yearly subsamples. Cross-class cells use the symmetrized estimate
/// `(S(a_i, b_j) + S(a_j, b_i)) / 2`, which keeps the matrix symmetric;
/// same-class cells need only the upper triangle.
pub fn dataset_distance_report(
    sets: &[YearPoints],
    class_pair: (ClassTag, ClassTag),
    sample_size: usize,
    repeats: usize,
    seed: u64,
    params: &SinkhornParams,
) -> Result<DistanceMatrix> {
    if sets.len() < 2 {
        return Err(Error::TooFewPoints {
            have: sets.len(),
            need: 2,
        });
    }
    if repeats == 0 || sample_size == 0 {
        return Err(Error::InvalidConfig(
            "repeats and sample_size must be > 0".into(),
        ));
    }
    let (class_a, class_b) = class_pair;
    for points in sets {
        for class in [class_a, class_b] {
            if class.of(points).nrows() == 0 {
                return Err(Error::EmptyClassSubset(format!(
                    "year {} has no {} records",
                    points.year,
                    class.as_str()
                )));
            }
        }
    }
    let n = sets.len();
    let same_class = class_a == class_b;
    let sub = |year: usize, class: ClassTag, repeat: usize| -> Array2<f64> {
        let tag = format!("drift:{}:{}:{}", sets[year].year, class.as_str(), repeat);
        subsample(
            class.of(&sets[year]),
            sample_size,
            crate::protocol::derive_seed(seed, &tag),
        )
    };
    let cells: Vec<Result<(f64, bool)>> = parallel::map_range(n * n, |flat| {
        let (i, j) = (flat / n, flat % n);
        if j < i || (same_class && i == j) {
            return Ok((0.0, true));
        }
        let mut total = 0.0;
        let mut ok = true;
        for repeat in 0..repeats {
            let forward = sinkhorn_divergence(
                sub(i, class_a, repeat).view(),
                sub(j, class_b, repeat).view(),
                params,
            )?;
            ok &= forward.converged;
            if same_class || i == j {
                total += forward.value;
            } else {
                let backward = sinkhorn_divergence(
                    sub(j, class_a, repeat).view(),
                    sub(i, class_b, repeat).view(),
                    params,
                )?;
                ok &= backward.converged;
                total += 0.5 * (forward.value + backward.value);
            }
        }
        Ok((total / repeats as f64, ok))
    });
    let mut values = vec![vec![0.0; n]; n];
    let mut converged = true;
    for (flat, cell) in cells.into_iter().enumerate() {
        let (i, j) = (flat / n, flat % n);
        let (value, ok) = cell?;
        if j < i || (same_class && i == j) {
            continue;
        }
        converged &= ok;
        values[i][j] = value;
        values[j][i] = value;
    }
    Ok(DistanceMatrix {
        years: sets.iter().map(|p| p.year).collect(),
        values,
        metric: "sinkhorn".into(),
        feature: None,
        class_pair: Some((class_a.as_str().into(), class_b.as_str().into())),
        epsilon: Some(params.epsilon),
        seed: Some(seed),
        repeats: Some(repeats),
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn hist(counts: &[f64]) -> Histogram {
        Histogram::from_counts(counts, HISTOGRAM_SMOOTHING).unwrap()
    }

    #[test]
    fn histogram_normalizes_and_smooths() {
        let h = hist(&[1.0, 0.0, 3.0]);
        let sum: f64 = h.probs().iter().sum();
        assert!((sum - 1.0).abs() < 1e-12);
        assert!(h.probs().iter().all(|p| *p > 0.0));
        assert!(Histogram::from_counts(&[], 1e-6).is_err());
        assert!(Histogram::from_counts(&[1.0], 0.0).is_err());
        assert!(Histogram::from_counts(&[-1.0], 1e-6).is_err());
    }

    #[test]
    fn jeffreys_zero_iff_equal() {
        let p = hist(&[2.0, 3.0, 5.0]);
        assert_eq!(jeffreys(&p, &p).unwrap(), 0.0);
        let q = hist(&[5.0, 3.0, 2.0]);
        assert!(jeffreys(&p, &q).unwrap() > 0.0);
    }

    #[test]
    fn jeffreys_matches_direct_evaluation() {
        // p counts [1, 0], q counts [0.5, 0.5], epsilon 1e-6: evaluate the
        // smoothed formula directly.
        let eps = 1e-6;
        let p = Histogram::from_counts(&[1.0, 0.0], eps).unwrap();
        let q = Histogram::from_counts(&[0.5, 0.5], eps).unwrap();
        let pp = [(1.0 + eps) / (1.0 + 2.0 * eps), eps / (1.0 + 2.0 * eps)];
        let qq = [0.5, 0.5];
        let direct: f64 = (0..2).map(|i| (pp[i] - qq[i]) * (pp[i] / qq[i]).ln()).sum();
        let got = jeffreys(&p, &q).unwrap();
        assert!((got - direct).abs() < 1e-12, "{got} vs {direct}");
    }

    #[test]
    fn jeffreys_support_mismatch() {
        let p = hist(&[1.0, 1.0]);
        let q = hist(&[1.0, 1.0, 1.0]);
        assert!(matches!(jeffreys(&p, &q), Err(Error::SupportMismatch(2, 3))));
    }

    proptest! {
        #[test]
        fn jeffreys_symmetric_nonnegative(
            pair in proptest::collection::vec((0.0f64..10.0, 0.0f64..10.0), 2..20)
        ) {
            let a: Vec<f64> = pair.iter().map(|(x, _)| *x).collect();
            let b: Vec<f64> = pair.iter().map(|(_, y)| *y).collect();
            let p = hist(&a);
            let q = hist(&b);
            let pq = jeffreys(&p, &q).unwrap();
            let qp = jeffreys(&q, &p).unwrap();
            // bit-exact symmetry by construction
            prop_assert_eq!(pq.to_bits(), qp.to_bits());
            prop_assert!(pq >= 0.0);
        }
    }
}
