//! Record-to-vector encoding for the vector detectors and the OT
//! distances: either one-hot over the discretized token spaces, or the
//! raw numerics with one-hot categoricals. Both standardize with
//! statistics fitted on TRAIN.

use ndarray::Array2;
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::drift::feature_slots;
use crate::error::{Error, Result};
use crate::parallel;
use crate::schema::{FeatureKind, RawRecord, FEATURE_COUNT};
use crate::tokenize::{TokenizedRecord, Vocabulary, UNK_ID};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VectorMode {
    /// One-hot over each feature's closed token space, concatenated.
    TokenOneHot,
    /// The 12 numeric features unbinned, categoricals one-hot.
    RawNumeric,
}

impl VectorMode {
    pub fn parse(name: &str) -> Option<VectorMode> {
        match name {
            "tokens-one-hot" => Some(VectorMode::TokenOneHot),
            "raw-numeric" => Some(VectorMode::RawNumeric),
            _ => None,
        }
    }

    pub fn as_str(&self) -> &'static str {
        match self {
            VectorMode::TokenOneHot => "tokens-one-hot",
            VectorMode::RawNumeric => "raw-numeric",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureVectorizer {
    pub mode: VectorMode,
    dim: usize,
    /// TokenOneHot: per feature, token id -> global column.
    token_columns: Vec<BTreeMap<u32, usize>>,
    /// RawNumeric: categorical value -> global column, per string feature.
    category_columns: Vec<BTreeMap<String, usize>>,
    /// RawNumeric: UNK column per string feature.
    category_unk: Vec<usize>,
    mean: Vec<f64>,
    /// Zero marks a constant dimension, which standardizes to zero.
    inv_std: Vec<f64>,
}

impl FeatureVectorizer {
    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Lay out the columns and fit standardization statistics on the
    /// training set.
    pub fn fit(
        mode: VectorMode,
        raw: &[RawRecord],
        tokens: &[TokenizedRecord],
        vocab: &Vocabulary,
    ) -> Result<Self> {
        if raw.is_empty() || raw.len() != tokens.len() {
            return Err(Error::EmptyInput("vectorizer needs aligned train records"));
        }
        let mut v = match mode {
            VectorMode::TokenOneHot => {
                let mut token_columns = Vec::with_capacity(FEATURE_COUNT);
                let mut next = 0usize;
                for feature in 0..FEATURE_COUNT {
                    let mut map = BTreeMap::new();
                    for id in feature_slots(vocab, feature) {
                        map.insert(id, next);
                        next += 1;
                    }
                    token_columns.push(map);
                }
                FeatureVectorizer {
                    mode,
                    dim: next,
                    token_columns,
                    category_columns: Vec::new(),
                    category_unk: Vec::new(),
                    mean: Vec::new(),
                    inv_std: Vec::new(),
                }
            }
            VectorMode::RawNumeric => {
                // 12 numeric columns first, then the categorical blocks.
                let mut next = 12usize;
                let mut category_columns = Vec::new();
                let mut category_unk = Vec::new();
                for feature in [1usize, 13] {
                    let mut map = BTreeMap::new();
                    let prefix = format!("f{feature}:");
                    for id in vocab.feature_token_ids(feature) {
                        let value = vocab
                            .token(id)
                            .and_then(|t| t.strip_prefix(&prefix))
                            .unwrap_or_default()
                            .to_string();
                        map.insert(value, next);
                        next += 1;
                    }
                    category_columns.push(map);
                    category_unk.push(next);
                    next += 1;
                }
                FeatureVectorizer {
                    mode,
                    dim: next,
                    token_columns: Vec::new(),
                    category_columns,
                    category_unk,
                    mean: Vec::new(),
                    inv_std: Vec::new(),
                }
            }
        };
        // standardization statistics from the raw (pre-scaling) vectors
        let mut sum = vec![0.0; v.dim];
        let mut sum_sq = vec![0.0; v.dim];
        for (record, toks) in raw.iter().zip(tokens) {
            let row = v.raw_vector(record, toks);
            for (d, x) in row.iter().enumerate() {
                sum[d] += x;
                sum_sq[d] += x * x;
            }
        }
        let n = raw.len() as f64;
        v.mean = sum.iter().map(|s| s / n).collect();
        v.inv_std = sum_sq
            .iter()
            .zip(&v.mean)
            .map(|(sq, m)| {
                let var = (sq / n - m * m).max(0.0);
                let std = var.sqrt();
                if std > 1e-12 {
                    1.0 / std
                } else {
                    0.0
                }
            })
            .collect();
        Ok(v)
    }

    /// Unstandardized encoding.
    fn raw_vector(&self, record: &RawRecord, tokens: &TokenizedRecord) -> Vec<f64> {
        let mut row = vec![0.0; self.dim];
        match self.mode {
            VectorMode::TokenOneHot => {
                for (feature, columns) in self.token_columns.iter().enumerate() {
                    let id = tokens.tokens[feature];
                    let col = columns
                        .get(&id)
                        .or_else(|| columns.get(&UNK_ID))
                        .expect("every feature block has an UNK column");
                    row[*col] = 1.0;
                }
            }
            VectorMode::RawNumeric => {
                row[0] = record.duration;
                row[1] = record.src_bytes as f64;
                row[2] = record.dst_bytes as f64;
                for (slot, rate) in record.rates().into_iter().enumerate() {
                    row[3 + slot] = rate;
                }
                for (block, feature) in [1usize, 13].into_iter().enumerate() {
                    let value = match record.feature(feature) {
                        crate::schema::FeatureValue::Text(s) => s,
                        _ => unreachable!("features 1 and 13 are categorical"),
                    };
                    let col = self.category_columns[block]
                        .get(value)
                        .copied()
                        .unwrap_or(self.category_unk[block]);
                    row[col] = 1.0;
                }
            }
        }
        row
    }

    /// Standardized encoding of one record.
    pub fn transform(&self, record: &RawRecord, tokens: &TokenizedRecord) -> Vec<f64> {
        let mut row = self.raw_vector(record, tokens);
        for (d, x) in row.iter_mut().enumerate() {
            *x = (*x - self.mean[d]) * self.inv_std[d];
        }
        row
    }

    /// Standardized encoding of a whole set, parallel over records.
    pub fn transform_set(&self, raw: &[RawRecord], tokens: &[TokenizedRecord]) -> Array2<f64> {
        assert_eq!(raw.len(), tokens.len());
        let rows: Vec<Vec<f64>> =
            parallel::map_indexed(raw, |i, record| self.transform(record, &tokens[i]));
        super::rows_to_matrix(&rows)
    }
}

/// Sanity check that the vocabulary's treatment table covers the mode.
pub fn check_mode(vocab: &Vocabulary, mode: VectorMode) -> Result<()> {
    match mode {
        VectorMode::TokenOneHot => Ok(()),
        VectorMode::RawNumeric => {
            for (i, kind) in vocab.table.kinds.iter().enumerate() {
                if *kind == FeatureKind::Categorical && i != 1 && i != 13 {
                    return Err(Error::InvalidConfig(
                        "raw-numeric mode expects the canonical feature kinds".into(),
                    ));
                }
            }
            Ok(())
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::{generate_synthetic, SyntheticConfig};
    use crate::schema::FeatureTable;
    use crate::tokenize::{build_vocabulary, encode_all};

    fn fixtures() -> (Vec<RawRecord>, Vec<TokenizedRecord>, Vocabulary) {
        let records = generate_synthetic(&SyntheticConfig {
            n_years: 2,
            months_per_year: 1,
            normals_per_month: 60,
            anomaly_ratio_per_year: vec![0.3, 0.3],
            drift_rate: 0.1,
            swap_year: 2,
            seed: 77,
        })
        .unwrap();
        let vocab = build_vocabulary(&records, &FeatureTable::default()).unwrap();
        let tokens = encode_all(&records, &vocab);
        (records, tokens, vocab)
    }

    #[test]
    fn onehot_dimension_is_the_sum_of_feature_spaces() {
        let (records, tokens, vocab) = fixtures();
        let v = FeatureVectorizer::fit(VectorMode::TokenOneHot, &records, &tokens, &vocab)
            .unwrap();
        // every feature block includes its UNK slot
        let expected: usize = (0..FEATURE_COUNT)
            .map(|f| feature_slots(&vocab, f).len())
            .sum();
        assert_eq!(v.dim(), expected);
        let x = v.transform_set(&records, &tokens);
        assert_eq!(x.nrows(), records.len());
        assert_eq!(x.ncols(), expected);
    }

    #[test]
    fn standardized_columns_have_zero_mean_unit_variance() {
        let (records, tokens, vocab) = fixtures();
        for mode in [VectorMode::TokenOneHot, VectorMode::RawNumeric] {
            let v = FeatureVectorizer::fit(mode, &records, &tokens, &vocab).unwrap();
            let x = v.transform_set(&records, &tokens);
            let n = x.nrows() as f64;
            for col in x.columns() {
                let mean = col.sum() / n;
                let var = col.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
                assert!(mean.abs() < 1e-9, "mean {mean}");
                assert!(var < 1.0 + 1e-9);
                // either constant (0) or unit variance
                assert!(var.abs() < 1e-9 || (var - 1.0).abs() < 1e-6, "var {var}");
            }
        }
    }

    #[test]
    fn raw_numeric_keeps_unbinned_values() {
        let (records, tokens, vocab) = fixtures();
        let v = FeatureVectorizer::fit(VectorMode::RawNumeric, &records, &tokens, &vocab)
            .unwrap();
        assert_eq!(v.dim(), 12 + v.category_columns[0].len() + v.category_columns[1].len() + 2);
        // two records with different durations map to different column-0
        // values (no binning collapse)
        let a = v.transform(&records[0], &tokens[0]);
        let idx = records
            .iter()
            .position(|r| r.duration != records[0].duration)
            .unwrap();
        let b = v.transform(&records[idx], &tokens[idx]);
        assert_ne!(a[0], b[0]);
    }

    #[test]
    fn unseen_category_falls_back_to_unk_column() {
        let (records, tokens, vocab) = fixtures();
        let v = FeatureVectorizer::fit(VectorMode::RawNumeric, &records, &tokens, &vocab)
            .unwrap();
        let mut alien = records[0].clone();
        alien.service = "telnet".into();
        let alien_tokens = crate::tokenize::encode(&alien, &vocab);
        let row = v.transform(&alien, &alien_tokens);
        assert!(row.len() == v.dim());
        // the UNK column for services is constant-zero in train, so the
        // standardized value is 0 there by the inv_std guard
        assert_eq!(row[v.category_unk[0]], 0.0);
    }
}
