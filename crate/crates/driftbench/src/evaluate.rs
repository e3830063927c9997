//! Ranking metrics and benchmark report assembly.
//!
//! ROC-AUC is the Mann-Whitney statistic with half credit for ties,
//! computed from one sort. PR-AUC is average precision, the step-wise
//! integral of precision over recall at every distinct threshold. Both
//! are exact, which keeps them checkable against brute-force oracles.

use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

use crate::error::{Error, Result};
use crate::schema::{LabelClass, YearMonth};

/// Positive class selector for PR-AUC.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PositiveClass {
    Inlier,
    Outlier,
}

/// P(score(anomaly) > score(normal)) + 1/2 P(tie), scores higher-is-more-
/// anomalous. Exact under ties via average ranks.
pub fn roc_auc(scores: &[f64], labels: &[LabelClass]) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let n_pos = labels.iter().filter(|l| **l == LabelClass::Anomaly).count();
    let n_neg = labels.len() - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(Error::SingleClass);
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|a, b| scores[*a].total_cmp(&scores[*b]));
    let mut rank_sum_pos = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // 1-based average rank of the tie group [i, j)
        let avg_rank = (i + 1 + j) as f64 / 2.0;
        for k in i..j {
            if labels[order[k]] == LabelClass::Anomaly {
                rank_sum_pos += avg_rank;
            }
        }
        i = j;
    }
    let u = rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0;
    Ok(u / (n_pos as f64 * n_neg as f64))
}

/// Average precision for the chosen positive class. For inliers the
/// scores are negated first, since lower anomaly scores mean more inlier.
pub fn pr_auc(scores: &[f64], labels: &[LabelClass], positive: PositiveClass) -> Result<f64> {
    assert_eq!(scores.len(), labels.len());
    let is_pos = |l: &LabelClass| match positive {
        PositiveClass::Outlier => *l == LabelClass::Anomaly,
        PositiveClass::Inlier => *l == LabelClass::Normal,
    };
    let n_pos = labels.iter().filter(|l| is_pos(l)).count();
    if n_pos == 0 || n_pos == labels.len() {
        return Err(Error::SingleClass);
    }
    let mut pairs: Vec<(f64, bool)> = scores
        .iter()
        .zip(labels)
        .map(|(s, l)| {
            let s = match positive {
                PositiveClass::Outlier => *s,
                PositiveClass::Inlier => -*s,
            };
            (s, is_pos(l))
        })
        .collect();
    pairs.sort_by(|a, b| b.0.total_cmp(&a.0));
    let mut ap = 0.0;
    let mut tp = 0usize;
    let mut seen = 0usize;
    let mut i = 0;
    while i < pairs.len() {
        let mut j = i;
        let mut tp_gain = 0usize;
        while j < pairs.len() && pairs[j].0 == pairs[i].0 {
            tp_gain += usize::from(pairs[j].1);
            j += 1;
        }
        tp += tp_gain;
        seen = j;
        if tp_gain > 0 {
            let precision = tp as f64 / seen as f64;
            let recall_gain = tp_gain as f64 / n_pos as f64;
            ap += precision * recall_gain;
        }
        i = j;
    }
    debug_assert_eq!(seen, pairs.len());
    Ok(ap)
}

/// Mean and population standard deviation across seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub mean: f64,
    pub std: f64,
}

impl Aggregate {
    pub fn from_values(values: &[f64]) -> Self {
        let n = values.len() as f64;
        let mean = values.iter().sum::<f64>() / n;
        let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
        Aggregate {
            mean,
            std: var.sqrt(),
        }
    }
}

/// Metrics of one (detector, split, year) cell.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearRow {
    pub detector: String,
    pub split: String,
    pub year: i32,
    pub roc_auc: Aggregate,
    pub pr_auc_in: Aggregate,
    pub pr_auc_out: Aggregate,
    pub n_in: usize,
    pub n_out: usize,
}

/// Split-level aggregate: the equal-weight arithmetic mean over the
/// split's yearly values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitRow {
    pub detector: String,
    pub split: String,
    pub roc_auc: Aggregate,
    pub pr_auc_in: Aggregate,
    pub pr_auc_out: Aggregate,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub seeds: Vec<u64>,
    pub aggregate_rule: String,
    pub rows: Vec<YearRow>,
    pub aggregates: Vec<SplitRow>,
}

/// Per-seed metric values of one (detector, split, year) cell.
#[derive(Debug, Clone, Default)]
pub struct CellSamples {
    pub roc_auc: Vec<f64>,
    pub pr_auc_in: Vec<f64>,
    pub pr_auc_out: Vec<f64>,
    pub n_in: usize,
    pub n_out: usize,
}

/// Assemble the report from per-seed cell values. Split aggregates are
/// computed per seed as the equal-weight mean over years, then averaged
/// across seeds, so the aggregate-mean invariant holds exactly.
pub fn assemble_report(
    seeds: &[u64],
    cells: &BTreeMap<(String, String, i32), CellSamples>,
) -> EvalReport {
    let mut rows = Vec::new();
    for ((detector, split, year), samples) in cells {
        rows.push(YearRow {
            detector: detector.clone(),
            split: split.clone(),
            year: *year,
            roc_auc: Aggregate::from_values(&samples.roc_auc),
            pr_auc_in: Aggregate::from_values(&samples.pr_auc_in),
            pr_auc_out: Aggregate::from_values(&samples.pr_auc_out),
            n_in: samples.n_in,
            n_out: samples.n_out,
        });
    }
    let mut aggregates = Vec::new();
    let mut groups: BTreeMap<(String, String), Vec<&CellSamples>> = BTreeMap::new();
    for ((detector, split, _), samples) in cells {
        groups
            .entry((detector.clone(), split.clone()))
            .or_default()
            .push(samples);
    }
    for ((detector, split), group) in groups {
        let per_seed = |pick: fn(&CellSamples) -> &Vec<f64>| -> Vec<f64> {
            (0..seeds.len())
                .map(|s| group.iter().map(|c| pick(c)[s]).sum::<f64>() / group.len() as f64)
                .collect()
        };
        aggregates.push(SplitRow {
            detector,
            split,
            roc_auc: Aggregate::from_values(&per_seed(|c| &c.roc_auc)),
            pr_auc_in: Aggregate::from_values(&per_seed(|c| &c.pr_auc_in)),
            pr_auc_out: Aggregate::from_values(&per_seed(|c| &c.pr_auc_out)),
        });
    }
    EvalReport {
        seeds: seeds.to_vec(),
        aggregate_rule: "equal-weight-per-year".into(),
        rows,
        aggregates,
    }
}

impl EvalReport {
    /// Aligned-column text rendering for humans.
    pub fn to_text(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!(
            "{:<12} {:<6} {:>6} {:>16} {:>16} {:>16}\n",
            "detector", "split", "year", "roc_auc", "pr_auc_in", "pr_auc_out"
        ));
        let fmt = |a: &Aggregate| format!("{:.4}+-{:.4}", a.mean, a.std);
        for row in &self.rows {
            out.push_str(&format!(
                "{:<12} {:<6} {:>6} {:>16} {:>16} {:>16}\n",
                row.detector,
                row.split,
                row.year,
                fmt(&row.roc_auc),
                fmt(&row.pr_auc_in),
                fmt(&row.pr_auc_out)
            ));
        }
        out.push('\n');
        for agg in &self.aggregates {
            out.push_str(&format!(
                "{:<12} {:<6} {:>6} {:>16} {:>16} {:>16}\n",
                agg.detector,
                agg.split,
                "mean",
                fmt(&agg.roc_auc),
                fmt(&agg.pr_auc_in),
                fmt(&agg.pr_auc_out)
            ));
        }
        out
    }

    pub fn split_mean_roc(&self, detector: &str, split: &str) -> Option<f64> {
        self.aggregates
            .iter()
            .find(|a| a.detector == detector && a.split == split)
            .map(|a| a.roc_auc.mean)
    }
}

/// One month's metrics; `None` metrics mark a single-class month that
/// cannot be scored rather than silently dropping it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MonthlyRow {
    pub year_month: YearMonth,
    pub n_in: usize,
    pub n_out: usize,
    pub roc_auc: Option<f64>,
    pub pr_auc_in: Option<f64>,
    pub pr_auc_out: Option<f64>,
}

/// Group scored records by calendar month and compute per-month metrics.
pub fn monthly_breakdown(
    scores: &[f64],
    labels: &[LabelClass],
    months: &[YearMonth],
) -> Vec<MonthlyRow> {
    assert_eq!(scores.len(), labels.len());
    assert_eq!(scores.len(), months.len());
    let mut grouped: BTreeMap<YearMonth, Vec<usize>> = BTreeMap::new();
    for (i, ym) in months.iter().enumerate() {
        grouped.entry(*ym).or_default().push(i);
    }
    grouped
        .into_iter()
        .map(|(year_month, idx)| {
            let s: Vec<f64> = idx.iter().map(|i| scores[*i]).collect();
            let l: Vec<LabelClass> = idx.iter().map(|i| labels[*i]).collect();
            let n_out = l.iter().filter(|c| **c == LabelClass::Anomaly).count();
            let n_in = l.len() - n_out;
            MonthlyRow {
                year_month,
                n_in,
                n_out,
                roc_auc: roc_auc(&s, &l).ok(),
                pr_auc_in: pr_auc(&s, &l, PositiveClass::Inlier).ok(),
                pr_auc_out: pr_auc(&s, &l, PositiveClass::Outlier).ok(),
            }
        })
        .collect()
}

/// Render monthly rows as CSV for external plotting.
pub fn monthly_csv(rows: &[MonthlyRow]) -> String {
    let mut out = String::from("year_month,n_in,n_out,roc_auc,pr_auc_in,pr_auc_out\n");
    let cell = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in rows {
        out.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.year_month,
            row.n_in,
            row.n_out,
            cell(row.roc_auc),
            cell(row.pr_auc_in),
            cell(row.pr_auc_out)
        ));
    }
    out
}

#[cfg(test)]
pub mod oracle {
    //! Brute-force reference implementations, kept independent of the
    //! sort-based paths above.

    use crate::schema::LabelClass;

    /// O(n^2) pair counting: wins + half ties over anomaly-normal pairs.
    pub fn roc_auc_pairs(scores: &[f64], labels: &[LabelClass]) -> f64 {
        let mut wins = 0.0;
        let mut pairs = 0.0;
        for (i, si) in scores.iter().enumerate() {
            if labels[i] != LabelClass::Anomaly {
                continue;
            }
            for (j, sj) in scores.iter().enumerate() {
                if labels[j] != LabelClass::Normal {
                    continue;
                }
                pairs += 1.0;
                if si > sj {
                    wins += 1.0;
                } else if si == sj {
                    wins += 0.5;
                }
            }
        }
        wins / pairs
    }

    /// Exhaustive-threshold average precision: walk every distinct score
    /// as a threshold (predict positive at score >= threshold), recount
    /// tp/fp from scratch each time, and accumulate precision x
    /// delta-recall in descending threshold order.
    pub fn average_precision_thresholds(scores: &[f64], positives: &[bool]) -> f64 {
        let n_pos = positives.iter().filter(|p| **p).count();
        let mut thresholds: Vec<f64> = scores.to_vec();
        thresholds.sort_by(|a, b| b.total_cmp(a));
        thresholds.dedup();
        let mut ap = 0.0;
        let mut prev_recall = 0.0;
        for t in thresholds {
            let mut tp = 0usize;
            let mut fp = 0usize;
            for (s, p) in scores.iter().zip(positives) {
                if *s >= t {
                    if *p {
                        tp += 1;
                    } else {
                        fp += 1;
                    }
                }
            }
            let recall = tp as f64 / n_pos as f64;
            let precision = tp as f64 / (tp + fp) as f64;
            ap += precision * (recall - prev_recall);
            prev_recall = recall;
        }
        ap
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;
    use rand::SeedableRng;
    use rand_chacha::ChaCha20Rng;

    const A: LabelClass = LabelClass::Anomaly;
    const N: LabelClass = LabelClass::Normal;

    #[test]
    fn roc_auc_known_values() {
        // perfect separation
        let auc = roc_auc(&[0.9, 0.8, 0.1, 0.2], &[A, A, N, N]).unwrap();
        assert_eq!(auc, 1.0);
        // pure ties
        let auc = roc_auc(&[0.5, 0.5, 0.5, 0.5], &[A, N, A, N]).unwrap();
        assert_eq!(auc, 0.5);
        // 3 of 4 anomaly-normal pairs won
        let auc = roc_auc(&[0.1, 0.4, 0.5, 0.8], &[N, A, N, A]).unwrap();
        assert_eq!(auc, 0.75);
        assert!(matches!(roc_auc(&[1.0, 2.0], &[A, A]), Err(Error::SingleClass)));
    }

    #[test]
    fn pr_auc_known_values() {
        let auc = pr_auc(&[0.9, 0.8, 0.1, 0.2], &[A, A, N, N], PositiveClass::Outlier).unwrap();
        assert_eq!(auc, 1.0);
        let auc = pr_auc(&[0.9, 0.8, 0.1, 0.2], &[A, A, N, N], PositiveClass::Inlier).unwrap();
        assert_eq!(auc, 1.0);
        assert!(matches!(
            pr_auc(&[1.0, 2.0], &[A, A], PositiveClass::Outlier),
            Err(Error::SingleClass)
        ));
    }

    #[test]
    fn roc_matches_pair_counting_with_ties() {
        let mut rng = ChaCha20Rng::seed_from_u64(100);
        for _ in 0..300 {
            let n = rng.gen_range(2..120);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..8) as f64 / 7.0).collect();
            let labels: Vec<LabelClass> =
                (0..n).map(|_| if rng.gen_bool(0.4) { A } else { N }).collect();
            if !labels.contains(&A) || !labels.contains(&N) {
                continue;
            }
            let fast = roc_auc(&scores, &labels).unwrap();
            let slow = oracle::roc_auc_pairs(&scores, &labels);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn pr_auc_matches_exhaustive_thresholds() {
        let mut rng = ChaCha20Rng::seed_from_u64(7);
        for _ in 0..500 {
            let n = rng.gen_range(2..=12);
            let scores: Vec<f64> = (0..n).map(|_| rng.gen_range(0..5) as f64).collect();
            let labels: Vec<LabelClass> =
                (0..n).map(|_| if rng.gen_bool(0.5) { A } else { N }).collect();
            if !labels.contains(&A) || !labels.contains(&N) {
                continue;
            }
            let fast = pr_auc(&scores, &labels, PositiveClass::Outlier).unwrap();
            let positives: Vec<bool> = labels.iter().map(|l| *l == A).collect();
            let slow = oracle::average_precision_thresholds(&scores, &positives);
            assert!((fast - slow).abs() < 1e-12, "{fast} vs {slow}");
        }
    }

    #[test]
    fn random_scores_give_prevalence_pr_auc() {
        let mut rng = ChaCha20Rng::seed_from_u64(3);
        let n = 10_000;
        let scores: Vec<f64> = (0..n).map(|_| rng.gen::<f64>()).collect();
        let labels: Vec<LabelClass> =
            (0..n).map(|_| if rng.gen_bool(0.3) { A } else { N }).collect();
        let prevalence = labels.iter().filter(|l| **l == A).count() as f64 / n as f64;
        let ap = pr_auc(&scores, &labels, PositiveClass::Outlier).unwrap();
        assert!((ap - prevalence).abs() < 0.02, "{ap} vs {prevalence}");
    }

    proptest! {
        #[test]
        fn roc_invariant_under_increasing_transform(
            raw in proptest::collection::vec((0.0f64..1.0, proptest::bool::ANY), 4..60)
        ) {
            let scores: Vec<f64> = raw.iter().map(|(s, _)| *s).collect();
            let labels: Vec<LabelClass> =
                raw.iter().map(|(_, a)| if *a { A } else { N }).collect();
            prop_assume!(labels.contains(&A) && labels.contains(&N));
            let base = roc_auc(&scores, &labels).unwrap();
            let squeezed: Vec<f64> = scores.iter().map(|s| (3.0 * s).exp() + 7.0).collect();
            let transformed = roc_auc(&squeezed, &labels).unwrap();
            prop_assert!((base - transformed).abs() < 1e-12);
        }

        #[test]
        fn roc_negation_complements_without_ties(
            raw in proptest::collection::vec(proptest::bool::ANY, 4..60)
        ) {
            // distinct scores by construction
            let scores: Vec<f64> = (0..raw.len()).map(|i| i as f64).collect();
            let labels: Vec<LabelClass> =
                raw.iter().map(|a| if *a { A } else { N }).collect();
            prop_assume!(labels.contains(&A) && labels.contains(&N));
            let fwd = roc_auc(&scores, &labels).unwrap();
            let neg: Vec<f64> = scores.iter().map(|s| -s).collect();
            let bwd = roc_auc(&neg, &labels).unwrap();
            prop_assert!((fwd + bwd - 1.0).abs() < 1e-12);
        }

        #[test]
        fn pr_auc_inlier_outlier_duality_without_ties(
            raw in proptest::collection::vec(proptest::bool::ANY, 4..60)
        ) {
            let scores: Vec<f64> = (0..raw.len()).map(|i| i as f64 * 1.5).collect();
            let labels: Vec<LabelClass> =
                raw.iter().map(|a| if *a { A } else { N }).collect();
            prop_assume!(labels.contains(&A) && labels.contains(&N));
            let outlier = pr_auc(&scores, &labels, PositiveClass::Outlier).unwrap();
            let swapped: Vec<LabelClass> =
                labels.iter().map(|l| if *l == A { N } else { A }).collect();
            let negated: Vec<f64> = scores.iter().map(|s| -s).collect();
            let inlier = pr_auc(&negated, &swapped, PositiveClass::Inlier).unwrap();
            prop_assert!((outlier - inlier).abs() < 1e-12);
        }
    }

    #[test]
    fn monthly_rows_partition_records() {
        let months: Vec<YearMonth> = [1u8, 1, 2, 2, 3]
            .iter()
            .map(|m| YearMonth { year: 2007, month: *m })
            .collect();
        let scores = [0.1, 0.9, 0.3, 0.8, 0.5];
        let labels = [N, A, N, A, N];
        let rows = monthly_breakdown(&scores, &labels, &months);
        assert_eq!(rows.len(), 3);
        let total: usize = rows.iter().map(|r| r.n_in + r.n_out).sum();
        assert_eq!(total, 5);
        // single-class month reports explicit nulls
        assert!(rows[2].roc_auc.is_none());
        assert!(rows[0].roc_auc.is_some());
        let csv = monthly_csv(&rows);
        assert_eq!(csv.lines().count(), 4);
        assert!(csv.lines().nth(3).unwrap().ends_with(",,,"));
    }

    #[test]
    fn aggregate_is_equal_weight_mean_over_years() {
        let mut cells: BTreeMap<(String, String, i32), CellSamples> = BTreeMap::new();
        for (year, auc) in [(2006, 0.9), (2007, 0.7)] {
            cells.insert(
                ("det".into(), "iid".into(), year),
                CellSamples {
                    roc_auc: vec![auc, auc + 0.02],
                    pr_auc_in: vec![0.5, 0.5],
                    pr_auc_out: vec![0.5, 0.5],
                    n_in: 10,
                    n_out: 5,
                },
            );
        }
        let report = assemble_report(&[1, 2], &cells);
        let agg = report.split_mean_roc("det", "iid").unwrap();
        let year_means: f64 = report.rows.iter().map(|r| r.roc_auc.mean).sum::<f64>() / 2.0;
        assert!((agg - year_means).abs() < 1e-15);
        assert!((agg - 0.81).abs() < 1e-12);
    }
}
