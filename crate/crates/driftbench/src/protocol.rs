//! Chronological TRAIN / IID / NEAR / FAR split construction with
//! per-month sampling quotas, plus the contaminated-training variant.
//!
//! Per year, `months_present x quota` normals are sampled without
//! replacement; test splits add anomalies so each year keeps its source
//! anomaly:normal proportion within one record. TRAIN and IID normals are
//! drawn disjointly from the same years.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::path::Path;

use crate::error::{Error, Result};
use crate::ingest::{read_dataset, write_dataset, SchemaDescriptor};
use crate::schema::{LabelClass, RawRecord, YearMonth};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SplitConfig {
    pub train_years: Vec<i32>,
    pub near_years: Vec<i32>,
    pub far_years: Vec<i32>,
    pub normals_per_month_train: usize,
    pub normals_per_month_iid: usize,
    pub contamination_rate: f64,
    pub seed: u64,
}

impl Default for SplitConfig {
    fn default() -> Self {
        SplitConfig {
            train_years: (2006..=2010).collect(),
            near_years: (2011..=2013).collect(),
            far_years: vec![2014, 2015],
            normals_per_month_train: 25_000,
            normals_per_month_iid: 2_500,
            contamination_rate: 0.0,
            seed: 0,
        }
    }
}

impl SplitConfig {
    /// Companion to [`crate::ingest::SyntheticConfig::demo`]: three train
    /// years, two NEAR years, one FAR year, quotas sized to the demo
    /// corpus supply.
    pub fn demo(seed: u64) -> Self {
        SplitConfig {
            train_years: vec![2006, 2007, 2008],
            near_years: vec![2009, 2010],
            far_years: vec![2011],
            normals_per_month_train: 120,
            normals_per_month_iid: 24,
            contamination_rate: 0.0,
            seed,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_years.is_empty() || self.near_years.is_empty() || self.far_years.is_empty() {
            return Err(Error::InvalidConfig("all three year lists must be non-empty".into()));
        }
        if self.normals_per_month_train == 0 || self.normals_per_month_iid == 0 {
            return Err(Error::InvalidConfig("quotas must be positive".into()));
        }
        if !(0.0..1.0).contains(&self.contamination_rate) {
            return Err(Error::InvalidConfig("contamination_rate must be in [0, 1)".into()));
        }
        let ordered = |years: &[i32]| years.windows(2).all(|w| w[0] < w[1]);
        if !ordered(&self.train_years) || !ordered(&self.near_years) || !ordered(&self.far_years) {
            return Err(Error::InvalidConfig("year lists must be strictly increasing".into()));
        }
        let train_max = *self.train_years.last().unwrap();
        let near_min = *self.near_years.first().unwrap();
        let near_max = *self.near_years.last().unwrap();
        let far_min = *self.far_years.first().unwrap();
        if train_max >= near_min || near_max >= far_min {
            return Err(Error::InvalidConfig(
                "year lists must be disjoint and chronological: train < near < far".into(),
            ));
        }
        Ok(())
    }
}

/// Test records of one year, normals and anomalies together.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct YearSet {
    pub year: i32,
    pub records: Vec<RawRecord>,
}

/// Per-(split, year) sampling accounting.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct YearCounts {
    pub year: i32,
    pub months_present: usize,
    pub normals_requested: usize,
    pub normals_sampled: usize,
    pub anomalies_sampled: usize,
    pub source_normals: usize,
    pub source_anomalies: usize,
    pub realized_anomaly_ratio: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SplitProvenance {
    pub seed: u64,
    pub counts: BTreeMap<String, Vec<YearCounts>>,
    pub warnings: Vec<String>,
    /// Indices into `train` whose records are contamination injections;
    /// those records keep their true ANOMALY label.
    pub injected_train_indices: Vec<usize>,
    /// Source-record indices sampled per split and year, for audit.
    pub sampled_source_indices: BTreeMap<String, Vec<usize>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchmarkSplits {
    pub train: Vec<RawRecord>,
    pub iid: Vec<YearSet>,
    pub near: Vec<YearSet>,
    pub far: Vec<YearSet>,
    /// Train-year anomalies left unused by the IID split; the supply for
    /// [`contaminate`].
    pub contamination_pool: Vec<RawRecord>,
    pub provenance: SplitProvenance,
}

impl BenchmarkSplits {
    pub fn year_sets(&self, split: SplitName) -> &[YearSet] {
        match split {
            SplitName::Iid => &self.iid,
            SplitName::Near => &self.near,
            SplitName::Far => &self.far,
        }
    }

    /// Train records grouped by calendar year, ascending. Used by the
    /// sequential (finetune / distill) training strategies.
    pub fn train_by_year(&self) -> Vec<YearSet> {
        let mut map: BTreeMap<i32, Vec<RawRecord>> = BTreeMap::new();
        for record in &self.train {
            map.entry(record.timestamp.year).or_default().push(record.clone());
        }
        map.into_iter()
            .map(|(year, records)| YearSet { year, records })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SplitName {
    Iid,
    Near,
    Far,
}

impl SplitName {
    pub fn as_str(&self) -> &'static str {
        match self {
            SplitName::Iid => "iid",
            SplitName::Near => "near",
            SplitName::Far => "far",
        }
    }
}

/// Derive an independent RNG seed from a base seed and a namespace tag.
pub fn derive_seed(seed: u64, tag: &str) -> u64 {
    let mut hasher = Sha256::new();
    hasher.update(seed.to_le_bytes());
    hasher.update(tag.as_bytes());
    let digest = hasher.finalize();
    u64::from_le_bytes(digest[..8].try_into().unwrap())
}

struct YearIndex {
    normals: Vec<usize>,
    anomalies: Vec<usize>,
    months: std::collections::BTreeSet<YearMonth>,
}

fn index_by_year(records: &[RawRecord]) -> BTreeMap<i32, YearIndex> {
    let mut map: BTreeMap<i32, YearIndex> = BTreeMap::new();
    for (i, record) in records.iter().enumerate() {
        let entry = map.entry(record.timestamp.year).or_insert_with(|| YearIndex {
            normals: Vec::new(),
            anomalies: Vec::new(),
            months: std::collections::BTreeSet::new(),
        });
        match record.label.class {
            LabelClass::Normal => entry.normals.push(i),
            LabelClass::Anomaly => entry.anomalies.push(i),
        }
        entry.months.insert(record.timestamp.year_month());
    }
    map
}

/// Anomaly budget preserving the source proportion against the sampled
/// normal count, clamped to supply.
fn anomaly_budget(normals_sampled: usize, source_normals: usize, source_anomalies: usize) -> usize {
    if source_normals == 0 {
        return 0;
    }
    let target =
        (normals_sampled as f64 * source_anomalies as f64 / source_normals as f64).round() as usize;
    target.min(source_anomalies)
}

/// Materialize the benchmark splits. Deterministic for a given
/// (records, config) pair; quota shortfalls shrink to supply with a
/// warning so small corpora still run end-to-end.
pub fn plan_splits(records: &[RawRecord], config: &SplitConfig) -> Result<BenchmarkSplits> {
    config.validate()?;
    let index = index_by_year(records);
    for year in config
        .train_years
        .iter()
        .chain(&config.near_years)
        .chain(&config.far_years)
    {
        if !index.contains_key(year) {
            return Err(Error::NoRecordsForYear(*year));
        }
    }

    let mut splits = BenchmarkSplits {
        train: Vec::new(),
        iid: Vec::new(),
        near: Vec::new(),
        far: Vec::new(),
        contamination_pool: Vec::new(),
        provenance: SplitProvenance {
            seed: config.seed,
            ..SplitProvenance::default()
        },
    };

    for year in &config.train_years {
        let info = &index[year];
        let months = info.months.len();
        let train_quota = months * config.normals_per_month_train;
        let iid_quota = months * config.normals_per_month_iid;
        let supply = info.normals.len();

        let (train_take, iid_take) = if supply >= train_quota + iid_quota {
            (train_quota, iid_quota)
        } else {
            // Shrink both quotas proportionally to the available supply.
            let total = (train_quota + iid_quota) as f64;
            let train_take = ((supply as f64) * train_quota as f64 / total).floor() as usize;
            let iid_take = supply - train_take;
            splits.provenance.warnings.push(format!(
                "year {year}: normal supply {supply} below quota {}; shrunk to {train_take}+{iid_take}",
                train_quota + iid_quota
            ));
            (train_take.min(train_quota), iid_take.min(iid_quota))
        };

        let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(
            config.seed,
            &format!("plan:train-year:{year}"),
        ));
        let mut normal_pool = info.normals.clone();
        normal_pool.shuffle(&mut rng);
        let train_idx = &normal_pool[..train_take];
        let iid_idx = &normal_pool[train_take..train_take + iid_take];

        let mut anomaly_pool = info.anomalies.clone();
        anomaly_pool.shuffle(&mut rng);
        let anomalies_take =
            anomaly_budget(iid_take, info.normals.len(), info.anomalies.len());
        let iid_anom_idx = &anomaly_pool[..anomalies_take];
        splits
            .contamination_pool
            .extend(anomaly_pool[anomalies_take..].iter().map(|i| records[*i].clone()));

        splits.train.extend(train_idx.iter().map(|i| records[*i].clone()));
        let mut year_records: Vec<RawRecord> =
            iid_idx.iter().map(|i| records[*i].clone()).collect();
        year_records.extend(iid_anom_idx.iter().map(|i| records[*i].clone()));
        splits.iid.push(YearSet {
            year: *year,
            records: year_records,
        });

        record_counts(
            &mut splits.provenance,
            "train",
            YearCounts {
                year: *year,
                months_present: months,
                normals_requested: train_quota,
                normals_sampled: train_take,
                anomalies_sampled: 0,
                source_normals: info.normals.len(),
                source_anomalies: info.anomalies.len(),
                realized_anomaly_ratio: 0.0,
            },
            train_idx,
        );
        record_counts(
            &mut splits.provenance,
            "iid",
            YearCounts {
                year: *year,
                months_present: months,
                normals_requested: iid_quota,
                normals_sampled: iid_take,
                anomalies_sampled: anomalies_take,
                source_normals: info.normals.len(),
                source_anomalies: info.anomalies.len(),
                realized_anomaly_ratio: ratio(anomalies_take, iid_take),
            },
            &[iid_idx, iid_anom_idx].concat(),
        );
    }

    for (split, years) in [("near", &config.near_years), ("far", &config.far_years)] {
        for year in years {
            let info = &index[year];
            let months = info.months.len();
            let quota = months * config.normals_per_month_train;
            let supply = info.normals.len();
            let take = if supply >= quota {
                quota
            } else {
                splits.provenance.warnings.push(format!(
                    "year {year}: normal supply {supply} below quota {quota}; shrunk"
                ));
                supply
            };
            let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(
                config.seed,
                &format!("plan:{split}-year:{year}"),
            ));
            let mut normal_pool = info.normals.clone();
            normal_pool.shuffle(&mut rng);
            let normal_idx = &normal_pool[..take];
            let mut anomaly_pool = info.anomalies.clone();
            anomaly_pool.shuffle(&mut rng);
            let anomalies_take = anomaly_budget(take, info.normals.len(), info.anomalies.len());
            let anom_idx = &anomaly_pool[..anomalies_take];

            let mut year_records: Vec<RawRecord> =
                normal_idx.iter().map(|i| records[*i].clone()).collect();
            year_records.extend(anom_idx.iter().map(|i| records[*i].clone()));
            let set = YearSet {
                year: *year,
                records: year_records,
            };
            if split == "near" {
                splits.near.push(set);
            } else {
                splits.far.push(set);
            }
            record_counts(
                &mut splits.provenance,
                split,
                YearCounts {
                    year: *year,
                    months_present: months,
                    normals_requested: quota,
                    normals_sampled: take,
                    anomalies_sampled: anomalies_take,
                    source_normals: info.normals.len(),
                    source_anomalies: info.anomalies.len(),
                    realized_anomaly_ratio: ratio(anomalies_take, take),
                },
                &[normal_idx, anom_idx].concat(),
            );
        }
    }

    if config.contamination_rate > 0.0 {
        return contaminate(splits, config.contamination_rate, config.seed);
    }
    Ok(splits)
}

fn ratio(anomalies: usize, normals: usize) -> f64 {
    if anomalies + normals == 0 {
        0.0
    } else {
        anomalies as f64 / (anomalies + normals) as f64
    }
}

fn record_counts(
    provenance: &mut SplitProvenance,
    split: &str,
    counts: YearCounts,
    indices: &[usize],
) {
    let key = format!("{split}_{}", counts.year);
    provenance.sampled_source_indices.insert(key, indices.to_vec());
    provenance
        .counts
        .entry(split.to_string())
        .or_default()
        .push(counts);
}

/// Replace a `floor(rate * |train|)`-sized random subset of train records
/// with anomalies drawn from the same years. The injected records keep
/// their true ANOMALY label; training code treats the whole set as
/// unlabeled, so they act as mislabeled normals, while the provenance
/// records exactly which slots were polluted.
pub fn contaminate(mut splits: BenchmarkSplits, rate: f64, seed: u64) -> Result<BenchmarkSplits> {
    if !(0.0..1.0).contains(&rate) {
        return Err(Error::InvalidConfig("contamination rate must be in [0, 1)".into()));
    }
    let inject = (rate * splits.train.len() as f64).floor() as usize;
    if inject == 0 {
        return Ok(splits);
    }
    if splits.contamination_pool.len() < inject {
        return Err(Error::InsufficientAnomalySupply {
            needed: inject,
            available: splits.contamination_pool.len(),
        });
    }
    let mut rng = ChaCha20Rng::seed_from_u64(derive_seed(seed, "contaminate"));
    let mut slots: Vec<usize> = (0..splits.train.len()).collect();
    slots.shuffle(&mut rng);
    let mut pool = std::mem::take(&mut splits.contamination_pool);
    pool.shuffle(&mut rng);
    let mut injected = Vec::with_capacity(inject);
    for slot in slots.into_iter().take(inject) {
        splits.train[slot] = pool.pop().expect("supply checked above");
        injected.push(slot);
    }
    injected.sort_unstable();
    splits.provenance.injected_train_indices = injected;
    splits.contamination_pool = pool;
    Ok(splits)
}

/// JSON manifest stored next to the split files.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SplitManifest {
    pub config: SplitConfig,
    pub counts: BTreeMap<String, Vec<YearCounts>>,
    pub warnings: Vec<String>,
    pub injected_train_indices: Vec<usize>,
    pub files: Vec<String>,
}

/// Persist splits as one `<split>_<year>.txt` file per (split, year) in
/// the ingest format, plus `manifest.json`.
pub fn write_splits(
    dir: &Path,
    splits: &BenchmarkSplits,
    config: &SplitConfig,
    schema: &SchemaDescriptor,
) -> Result<SplitManifest> {
    std::fs::create_dir_all(dir)?;
    let mut files = Vec::new();
    let train_years = splits.train_by_year();
    for set in &train_years {
        let name = format!("train_{}.txt", set.year);
        write_dataset(&dir.join(&name), &set.records, schema)?;
        files.push(name);
    }
    for split in [SplitName::Iid, SplitName::Near, SplitName::Far] {
        for set in splits.year_sets(split) {
            let name = format!("{}_{}.txt", split.as_str(), set.year);
            write_dataset(&dir.join(&name), &set.records, schema)?;
            files.push(name);
        }
    }
    let manifest = SplitManifest {
        config: config.clone(),
        counts: splits.provenance.counts.clone(),
        warnings: splits.provenance.warnings.clone(),
        injected_train_indices: splits.provenance.injected_train_indices.clone(),
        files,
    };
    Ok(manifest)
}

/// Reload splits previously written by [`write_splits`].
pub fn read_splits(
    dir: &Path,
    manifest: &SplitManifest,
    schema: &SchemaDescriptor,
) -> Result<BenchmarkSplits> {
    let mut splits = BenchmarkSplits {
        train: Vec::new(),
        iid: Vec::new(),
        near: Vec::new(),
        far: Vec::new(),
        contamination_pool: Vec::new(),
        provenance: SplitProvenance {
            seed: manifest.config.seed,
            counts: manifest.counts.clone(),
            warnings: manifest.warnings.clone(),
            injected_train_indices: manifest.injected_train_indices.clone(),
            ..SplitProvenance::default()
        },
    };
    for name in &manifest.files {
        let (prefix, year) = name
            .trim_end_matches(".txt")
            .split_once('_')
            .ok_or_else(|| Error::MalformedFile {
                path: name.clone(),
                reason: "expected <split>_<year>.txt".into(),
            })?;
        let year: i32 = year.parse().map_err(|_| Error::MalformedFile {
            path: name.clone(),
            reason: "bad year".into(),
        })?;
        let (records, _) = read_dataset(&dir.join(name), schema)?;
        match prefix {
            "train" => splits.train.extend(records),
            "iid" => splits.iid.push(YearSet { year, records }),
            "near" => splits.near.push(YearSet { year, records }),
            "far" => splits.far.push(YearSet { year, records }),
            other => {
                return Err(Error::MalformedFile {
                    path: name.clone(),
                    reason: format!("unknown split prefix {other}"),
                })
            }
        }
    }
    Ok(splits)
}
