//! Delimited-text dataset IO in the Kyoto-style preprocessed column
//! layout, plus a deterministic synthetic traffic generator for
//! desk-scale runs.

use serde::{Deserialize, Serialize};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::schema::{
    label_from_code, FeatureTable, FeatureValue, RawRecord, Timestamp, FEATURE_COUNT,
};

mod synth;
pub use synth::{generate_synthetic, SyntheticConfig};

/// Role of one column in a delimited dataset file.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ColumnRole {
    /// Conventional feature at the given canonical position.
    Feature(usize),
    Timestamp,
    Label,
    /// Present in the file but not part of the record model
    /// (detector-flag and protocol columns).
    Ignore,
}

/// Pins the column order, delimiter and per-feature treatment of one
/// dataset layout.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SchemaDescriptor {
    pub columns: Vec<ColumnRole>,
    pub delimiter: char,
    pub has_header: bool,
    pub features: FeatureTable,
    /// When true, the three connection-count features (positions 4, 8, 9)
    /// are stored in the file as raw 0-100 counts and divided by 100 on
    /// read. Off in the interchange format written by this crate, where
    /// every rate lives in [0, 1] and round-trips bit-exactly.
    #[serde(default)]
    pub counts_scaled_0_100: bool,
}

/// Positions of the integer connection-count features.
pub const COUNT_FEATURES: [usize; 3] = [4, 8, 9];

impl Default for SchemaDescriptor {
    /// The preprocessed column layout: columns 0-13 are the conventional
    /// features in canonical order, 14 the timestamp, 15-17 detector
    /// flags (ignored), 18 the label, 19 the protocol (ignored).
    fn default() -> Self {
        let mut columns: Vec<ColumnRole> = (0..FEATURE_COUNT).map(ColumnRole::Feature).collect();
        columns.push(ColumnRole::Timestamp);
        columns.extend([ColumnRole::Ignore; 3]);
        columns.push(ColumnRole::Label);
        columns.push(ColumnRole::Ignore);
        SchemaDescriptor {
            columns,
            delimiter: '\t',
            has_header: false,
            features: FeatureTable::default(),
            counts_scaled_0_100: false,
        }
    }
}

impl SchemaDescriptor {
    /// Layout for raw-convention dumps where connection counts appear as
    /// 0-100 integers rather than normalized rates.
    pub fn with_scaled_counts() -> Self {
        SchemaDescriptor {
            counts_scaled_0_100: true,
            ..SchemaDescriptor::default()
        }
    }
}

impl SchemaDescriptor {
    pub fn validate(&self) -> Result<()> {
        self.features.validate()?;
        let labels = self.columns.iter().filter(|c| **c == ColumnRole::Label).count();
        let stamps = self
            .columns
            .iter()
            .filter(|c| **c == ColumnRole::Timestamp)
            .count();
        if labels != 1 || stamps != 1 {
            return Err(Error::InvalidConfig(format!(
                "schema needs exactly one label and one timestamp column, found {labels}/{stamps}"
            )));
        }
        let mut seen = [false; FEATURE_COUNT];
        for role in &self.columns {
            if let ColumnRole::Feature(i) = role {
                if *i >= FEATURE_COUNT || seen[*i] {
                    return Err(Error::InvalidConfig(format!(
                        "feature column {i} repeated or out of range"
                    )));
                }
                seen[*i] = true;
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::InvalidConfig(
                "schema must assign all 14 feature columns".into(),
            ));
        }
        Ok(())
    }
}

/// One skipped row with the reason it failed to parse.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct MalformedRow {
    pub line: usize,
    pub reason: String,
}

/// Row accounting for one read.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct ReadSummary {
    pub rows_total: usize,
    pub skipped: Vec<MalformedRow>,
}

/// Read a delimited dataset. Malformed rows are skipped and tallied; the
/// read fails outright once more than max(1, 1% of rows) are malformed,
/// which flags a systemic schema mismatch while tolerating stray
/// truncated lines.
pub fn read_dataset(
    path: &Path,
    schema: &SchemaDescriptor,
) -> Result<(Vec<RawRecord>, ReadSummary)> {
    schema.validate()?;
    let file = std::fs::File::open(path)?;
    let mut records = Vec::new();
    let mut summary = ReadSummary::default();
    for (idx, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if idx == 0 && schema.has_header {
            continue;
        }
        if line.is_empty() {
            continue;
        }
        summary.rows_total += 1;
        match parse_row(&line, schema) {
            Ok(record) => records.push(record),
            Err(reason) => summary.skipped.push(MalformedRow {
                line: idx + 1,
                reason,
            }),
        }
    }
    let allowed = (summary.rows_total / 100).max(1);
    if summary.skipped.len() > allowed {
        let first = &summary.skipped[0];
        return Err(Error::MalformedDataset {
            path: path.display().to_string(),
            bad: summary.skipped.len(),
            total: summary.rows_total,
            allowed,
            first_line: first.line,
            first_reason: first.reason.clone(),
        });
    }
    Ok((records, summary))
}

/// Parse one row against the schema. Errors are plain strings; the caller
/// decides whether the tally is tolerable.
pub fn parse_row(line: &str, schema: &SchemaDescriptor) -> std::result::Result<RawRecord, String> {
    let fields: Vec<&str> = line.split(schema.delimiter).collect();
    if fields.len() != schema.columns.len() {
        return Err(format!(
            "expected {} columns, found {}",
            schema.columns.len(),
            fields.len()
        ));
    }
    let mut features: [Option<&str>; FEATURE_COUNT] = [None; FEATURE_COUNT];
    let mut timestamp = None;
    let mut label = None;
    for (role, field) in schema.columns.iter().zip(&fields) {
        match role {
            ColumnRole::Feature(i) => features[*i] = Some(field),
            ColumnRole::Timestamp => timestamp = Some(*field),
            ColumnRole::Label => label = Some(*field),
            ColumnRole::Ignore => {}
        }
    }
    let real = |i: usize| -> std::result::Result<f64, String> {
        let raw = features[i].unwrap();
        raw.parse::<f64>()
            .map_err(|_| format!("feature {i}: non-numeric {raw:?}"))
    };
    let bytes = |i: usize| -> std::result::Result<u64, String> {
        let raw = features[i].unwrap();
        raw.parse::<u64>()
            .map_err(|_| format!("feature {i}: non-integer byte count {raw:?}"))
    };
    // Connection counts are capped at 100 in the source convention; with
    // the scaled layout they arrive as raw counts and normalize here.
    let rate = |i: usize| -> std::result::Result<f64, String> {
        let mut x = real(i)?;
        if schema.counts_scaled_0_100 && COUNT_FEATURES.contains(&i) {
            x = (x / 100.0).min(1.0);
        }
        if !(0.0..=1.0).contains(&x) {
            return Err(format!("feature {i}: rate {x} outside [0, 1]"));
        }
        Ok(x)
    };
    let code: i64 = label
        .unwrap()
        .parse()
        .map_err(|_| format!("non-integer label {:?}", label.unwrap()))?;
    let record = RawRecord {
        duration: real(0)?,
        service: features[1].unwrap().to_string(),
        src_bytes: bytes(2)?,
        dst_bytes: bytes(3)?,
        count: rate(4)?,
        same_srv_rate: rate(5)?,
        serror_rate: rate(6)?,
        srv_serror_rate: rate(7)?,
        dst_host_count: rate(8)?,
        dst_host_srv_count: rate(9)?,
        dst_host_same_src_port_rate: rate(10)?,
        dst_host_serror_rate: rate(11)?,
        dst_host_srv_serror_rate: rate(12)?,
        flag: features[13].unwrap().to_string(),
        timestamp: Timestamp::parse(timestamp.unwrap())?,
        label: label_from_code(code).map_err(|e| e.to_string())?,
    };
    record.validate().map_err(|e| e.to_string())?;
    Ok(record)
}

/// Format one record as a dataset row under the schema. Floats print in
/// shortest round-trip form, so written corpora re-read bit-exactly.
pub fn format_row(record: &RawRecord, schema: &SchemaDescriptor) -> String {
    let mut fields = Vec::with_capacity(schema.columns.len());
    for role in &schema.columns {
        match role {
            ColumnRole::Feature(i) => match (record.feature(*i), *i) {
                (FeatureValue::Real(_), 2) => fields.push(record.src_bytes.to_string()),
                (FeatureValue::Real(_), 3) => fields.push(record.dst_bytes.to_string()),
                (FeatureValue::Real(x), _) => fields.push(x.to_string()),
                (FeatureValue::Text(s), _) => fields.push(s.to_string()),
            },
            ColumnRole::Timestamp => fields.push(record.timestamp.to_string()),
            ColumnRole::Label => fields.push(record.label.raw_code.to_string()),
            ColumnRole::Ignore => fields.push("0".to_string()),
        }
    }
    fields.join(&schema.delimiter.to_string())
}

/// Write records as delimited text, atomically (temp file then rename).
pub fn write_dataset(path: &Path, records: &[RawRecord], schema: &SchemaDescriptor) -> Result<()> {
    schema.validate()?;
    let mut body = String::new();
    for record in records {
        body.push_str(&format_row(record, schema));
        body.push('\n');
    }
    write_atomic(path, body.as_bytes())
}

/// Write bytes via a sibling temp file and an atomic rename, so partial
/// outputs never appear under the final name.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let name = format!(
        ".{}.tmp",
        path.file_name().unwrap_or_default().to_string_lossy()
    );
    let tmp = match path.parent().filter(|p| !p.as_os_str().is_empty()) {
        Some(dir) => dir.join(&name),
        None => std::path::PathBuf::from(&name),
    };
    {
        let mut file = std::fs::File::create(&tmp)?;
        file.write_all(bytes)?;
        file.sync_all()?;
    }
    std::fs::rename(&tmp, path)?;
    Ok(())
}
