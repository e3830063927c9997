//! Record model shared by every pipeline stage: the 14 conventional
//! connection features, label semantics, and calendar timestamps.

use serde::{Deserialize, Serialize};
use std::fmt;

use crate::error::{Error, Result};

/// Number of conventional features per record.
pub const FEATURE_COUNT: usize = 14;

/// How one feature is discretized by the tokenizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum FeatureKind {
    /// Unbounded non-negative numeric, exponentially binned.
    ExpBin,
    /// Value in [0, 1], discretized into 100 levels.
    Percent,
    /// String value, passed through as its own token.
    Categorical,
}

/// Name and treatment of each feature position, in canonical order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureTable {
    pub kinds: Vec<FeatureKind>,
}

/// Canonical feature names, index-aligned with [`RawRecord`] accessors.
pub const FEATURE_NAMES: [&str; FEATURE_COUNT] = [
    "duration",
    "service",
    "src_bytes",
    "dst_bytes",
    "count",
    "same_srv_rate",
    "serror_rate",
    "srv_serror_rate",
    "dst_host_count",
    "dst_host_srv_count",
    "dst_host_same_src_port_rate",
    "dst_host_serror_rate",
    "dst_host_srv_serror_rate",
    "flag",
];

impl Default for FeatureTable {
    /// Kyoto conventional treatment: the three unbounded numerics are
    /// binned, the nine bounded numerics are percentages, service and flag
    /// are categorical.
    fn default() -> Self {
        use FeatureKind::*;
        FeatureTable {
            kinds: vec![
                ExpBin,      // duration
                Categorical, // service
                ExpBin,      // src_bytes
                ExpBin,      // dst_bytes
                Percent,     // count
                Percent,     // same_srv_rate
                Percent,     // serror_rate
                Percent,     // srv_serror_rate
                Percent,     // dst_host_count
                Percent,     // dst_host_srv_count
                Percent,     // dst_host_same_src_port_rate
                Percent,     // dst_host_serror_rate
                Percent,     // dst_host_srv_serror_rate
                Categorical, // flag
            ],
        }
    }
}

impl FeatureTable {
    pub fn validate(&self) -> Result<()> {
        if self.kinds.len() != FEATURE_COUNT {
            return Err(Error::InvalidConfig(format!(
                "feature table has {} entries, expected {FEATURE_COUNT}",
                self.kinds.len()
            )));
        }
        for (i, kind) in self.kinds.iter().enumerate() {
            let is_string = i == 1 || i == 13;
            match kind {
                FeatureKind::Categorical if !is_string => {
                    return Err(Error::InvalidConfig(format!(
                        "feature {i} ({}) is numeric and cannot be categorical",
                        FEATURE_NAMES[i]
                    )));
                }
                FeatureKind::ExpBin | FeatureKind::Percent if is_string => {
                    return Err(Error::InvalidConfig(format!(
                        "feature {i} ({}) is a string and must be categorical",
                        FEATURE_NAMES[i]
                    )));
                }
                _ => {}
            }
        }
        Ok(())
    }

    pub fn kind(&self, index: usize) -> FeatureKind {
        self.kinds[index]
    }
}

/// Resolve a feature name to its canonical position.
pub fn feature_index(name: &str) -> Option<usize> {
    FEATURE_NAMES.iter().position(|n| *n == name)
}

/// Record class as labeled in the source data.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum LabelClass {
    Normal,
    Anomaly,
}

/// Label with the raw source code preserved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Label {
    pub class: LabelClass,
    pub raw_code: i64,
}

/// Map a raw label code to a [`Label`]. Code 1 is normal; -1 and -2 are
/// both anomalous (detected by different scanner tiers in the source data).
pub fn label_from_code(code: i64) -> Result<Label> {
    let class = match code {
        1 => LabelClass::Normal,
        -1 | -2 => LabelClass::Anomaly,
        _ => return Err(Error::UnknownLabelCode(code)),
    };
    Ok(Label {
        class,
        raw_code: code,
    })
}

/// Calendar month, totally ordered by (year, month).
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct YearMonth {
    pub year: i32,
    pub month: u8,
}

impl fmt::Display for YearMonth {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}-{:02}", self.year, self.month)
    }
}

/// Second-resolution calendar timestamp. Field order gives chronological
/// ordering via the derived `Ord`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct Timestamp {
    pub year: i32,
    pub month: u8,
    pub day: u8,
    pub hour: u8,
    pub minute: u8,
    pub second: u8,
}

impl Timestamp {
    pub fn year_month(&self) -> YearMonth {
        YearMonth {
            year: self.year,
            month: self.month,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(1..=12).contains(&self.month)
            || !(1..=31).contains(&self.day)
            || self.hour > 23
            || self.minute > 59
            || self.second > 59
        {
            return Err(Error::InvalidConfig(format!("invalid timestamp {self}")));
        }
        Ok(())
    }

    /// Parse `YYYY-MM-DD HH:MM:SS` or the date-only prefix.
    pub fn parse(s: &str) -> std::result::Result<Self, String> {
        let bytes = s.as_bytes();
        let num = |range: std::ops::Range<usize>| -> std::result::Result<u32, String> {
            s.get(range.clone())
                .ok_or_else(|| format!("timestamp too short: {s:?}"))?
                .parse::<u32>()
                .map_err(|_| format!("non-numeric timestamp field in {s:?}"))
        };
        if bytes.len() < 10 || bytes[4] != b'-' || bytes[7] != b'-' {
            return Err(format!("expected YYYY-MM-DD[ HH:MM:SS], got {s:?}"));
        }
        let (hour, minute, second) = if bytes.len() >= 19 {
            if bytes[10] != b' ' || bytes[13] != b':' || bytes[16] != b':' {
                return Err(format!("bad time separator in {s:?}"));
            }
            (num(11..13)?, num(14..16)?, num(17..19)?)
        } else if bytes.len() == 10 {
            (0, 0, 0)
        } else {
            return Err(format!("unexpected timestamp length in {s:?}"));
        };
        let ts = Timestamp {
            year: num(0..4)? as i32,
            month: num(5..7)? as u8,
            day: num(8..10)? as u8,
            hour: hour as u8,
            minute: minute as u8,
            second: second as u8,
        };
        ts.validate().map_err(|e| e.to_string())?;
        Ok(ts)
    }
}

impl fmt::Display for Timestamp {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "{:04}-{:02}-{:02} {:02}:{:02}:{:02}",
            self.year, self.month, self.day, self.hour, self.minute, self.second
        )
    }
}

/// One parsed network-connection log row.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    pub duration: f64,
    pub service: String,
    pub src_bytes: u64,
    pub dst_bytes: u64,
    pub count: f64,
    pub same_srv_rate: f64,
    pub serror_rate: f64,
    pub srv_serror_rate: f64,
    pub dst_host_count: f64,
    pub dst_host_srv_count: f64,
    pub dst_host_same_src_port_rate: f64,
    pub dst_host_serror_rate: f64,
    pub dst_host_srv_serror_rate: f64,
    pub flag: String,
    pub timestamp: Timestamp,
    pub label: Label,
}

/// View of one feature slot for position-generic processing.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FeatureValue<'a> {
    Real(f64),
    Text(&'a str),
}

impl RawRecord {
    /// Feature value at a canonical position.
    pub fn feature(&self, index: usize) -> FeatureValue<'_> {
        match index {
            0 => FeatureValue::Real(self.duration),
            1 => FeatureValue::Text(&self.service),
            2 => FeatureValue::Real(self.src_bytes as f64),
            3 => FeatureValue::Real(self.dst_bytes as f64),
            4 => FeatureValue::Real(self.count),
            5 => FeatureValue::Real(self.same_srv_rate),
            6 => FeatureValue::Real(self.serror_rate),
            7 => FeatureValue::Real(self.srv_serror_rate),
            8 => FeatureValue::Real(self.dst_host_count),
            9 => FeatureValue::Real(self.dst_host_srv_count),
            10 => FeatureValue::Real(self.dst_host_same_src_port_rate),
            11 => FeatureValue::Real(self.dst_host_serror_rate),
            12 => FeatureValue::Real(self.dst_host_srv_serror_rate),
            13 => FeatureValue::Text(&self.flag),
            _ => panic!("feature index {index} out of range"),
        }
    }

    /// The nine bounded-rate feature values, in canonical order.
    pub fn rates(&self) -> [f64; 9] {
        [
            self.count,
            self.same_srv_rate,
            self.serror_rate,
            self.srv_serror_rate,
            self.dst_host_count,
            self.dst_host_srv_count,
            self.dst_host_same_src_port_rate,
            self.dst_host_serror_rate,
            self.dst_host_srv_serror_rate,
        ]
    }

    /// Enforce the field invariants.
    pub fn validate(&self) -> Result<()> {
        if !self.duration.is_finite() || self.duration < 0.0 {
            return Err(Error::InvalidConfig(format!(
                "duration {} out of range",
                self.duration
            )));
        }
        for (i, r) in self.rates().iter().enumerate() {
            if !r.is_finite() || !(0.0..=1.0).contains(r) {
                return Err(Error::InvalidConfig(format!(
                    "rate feature {} = {r} outside [0, 1]",
                    FEATURE_NAMES[[4, 5, 6, 7, 8, 9, 10, 11, 12][i]]
                )));
            }
        }
        self.timestamp.validate()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn label_codes_map_per_convention() {
        assert_eq!(label_from_code(1).unwrap().class, LabelClass::Normal);
        assert_eq!(label_from_code(-1).unwrap().class, LabelClass::Anomaly);
        assert_eq!(label_from_code(-2).unwrap().class, LabelClass::Anomaly);
        assert_eq!(label_from_code(-1).unwrap().raw_code, -1);
        assert!(matches!(label_from_code(7), Err(Error::UnknownLabelCode(7))));
        assert!(matches!(label_from_code(0), Err(Error::UnknownLabelCode(0))));
    }

    #[test]
    fn year_month_orders_chronologically() {
        let a = YearMonth { year: 2006, month: 12 };
        let b = YearMonth { year: 2007, month: 1 };
        let c = YearMonth { year: 2007, month: 2 };
        assert!(a < b && b < c);
    }

    #[test]
    fn timestamp_parse_roundtrip() {
        let ts = Timestamp::parse("2009-03-17 08:41:59").unwrap();
        assert_eq!(ts.to_string(), "2009-03-17 08:41:59");
        let date_only = Timestamp::parse("2009-03-17").unwrap();
        assert_eq!(date_only.hour, 0);
        assert!(Timestamp::parse("2009-13-17").is_err());
        assert!(Timestamp::parse("garbage").is_err());
    }

    #[test]
    fn default_feature_table_is_valid() {
        let table = FeatureTable::default();
        table.validate().unwrap();
        assert_eq!(table.kinds.iter().filter(|k| **k == FeatureKind::ExpBin).count(), 3);
        assert_eq!(table.kinds.iter().filter(|k| **k == FeatureKind::Percent).count(), 9);
    }

    #[test]
    fn feature_table_rejects_miskinded_columns() {
        let mut table = FeatureTable::default();
        table.kinds[0] = FeatureKind::Categorical;
        assert!(table.validate().is_err());
        let mut table = FeatureTable::default();
        table.kinds[1] = FeatureKind::Percent;
        assert!(table.validate().is_err());
    }
}
