//! Record discretization: exponential binning for unbounded numerics,
//! fixed 100-level discretization for percentages, categorical
//! pass-through, and the closed vocabulary built over all of them.
//!
//! Token strings are namespaced per feature position (`f3:bin17`,
//! `f1:http`) so equal bin indices of different features stay distinct.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::collections::BTreeMap;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::parallel;
use crate::schema::{FeatureKind, FeatureTable, Label, RawRecord, YearMonth, FEATURE_COUNT};

pub const PAD_ID: u32 = 0;
pub const UNK_ID: u32 = 1;
pub const MASK_ID: u32 = 2;
pub const SPECIAL_TOKENS: [&str; 3] = ["[PAD]", "[UNK]", "[MASK]"];

/// Geometric growth factor of the bin edges.
pub const BIN_BASIS: f64 = 1.1;
/// Total number of bins; ids 0..=232. The last bin absorbs everything
/// beyond its lower edge.
pub const BIN_COUNT: usize = 233;
/// Number of discretization levels for percentage features.
pub const PERCENT_LEVELS: usize = 100;

/// Lower bin edges `basis^i - 1` for `i in 0..=BIN_COUNT`, computed by
/// repeated multiplication so every platform sees identical edges.
pub fn bin_edges(basis: f64) -> Vec<f64> {
    let mut edges = Vec::with_capacity(BIN_COUNT + 1);
    let mut power = 1.0;
    for _ in 0..=BIN_COUNT {
        edges.push(power - 1.0);
        power *= basis;
    }
    edges
}

/// Bin id of `x`: the unique `i` with `basis^i - 1 <= x < basis^(i+1) - 1`,
/// clamped to the last bin. The log-based candidate is corrected against
/// the exact edges, which keeps values sitting on an edge in the right bin
/// regardless of how the logarithm rounded.
pub fn bin_index(x: f64, basis: f64) -> Result<usize> {
    if !(x >= 0.0) {
        return Err(Error::NegativeInput(x));
    }
    let edges = bin_edges(basis);
    Ok(bin_index_with_edges(x, &edges))
}

pub(crate) fn bin_index_with_edges(x: f64, edges: &[f64]) -> usize {
    let last = BIN_COUNT - 1;
    if x >= edges[last] {
        return last;
    }
    let mut i = ((x + 1.0).ln() / BIN_BASIS.ln()).floor() as isize;
    i = i.clamp(0, last as isize);
    let mut i = i as usize;
    while i > 0 && x < edges[i] {
        i -= 1;
    }
    while i < last && x >= edges[i + 1] {
        i += 1;
    }
    i
}

/// Discretize a percentage into `0..=99`; `1.0` maps to 99. Inputs
/// slightly outside [0, 1] are clamped first. The floor candidate is
/// corrected against the exact level edges `k / 100`, so values that are
/// binary-equal to an edge land in the upper level.
pub fn discretize_percentage(x: f64) -> usize {
    let x = if x.is_nan() { 0.0 } else { x.clamp(0.0, 1.0) };
    let mut k = (x * PERCENT_LEVELS as f64).floor() as isize;
    k = k.clamp(0, PERCENT_LEVELS as isize - 1);
    let mut k = k as usize;
    let edge = |i: usize| i as f64 / PERCENT_LEVELS as f64;
    while k > 0 && x < edge(k) {
        k -= 1;
    }
    while k < PERCENT_LEVELS - 1 && x >= edge(k + 1) {
        k += 1;
    }
    k
}

/// Token string for feature `index` of `record` under `table`.
pub fn token_string(record: &RawRecord, index: usize, table: &FeatureTable) -> String {
    use crate::schema::FeatureValue;
    match (table.kind(index), record.feature(index)) {
        (FeatureKind::ExpBin, FeatureValue::Real(x)) => {
            let edges = bin_edges(BIN_BASIS);
            format!("f{index}:bin{}", bin_index_with_edges(x.max(0.0), &edges))
        }
        (FeatureKind::Percent, FeatureValue::Real(x)) => {
            format!("f{index}:pct{}", discretize_percentage(x))
        }
        (FeatureKind::Categorical, FeatureValue::Text(s)) => format!("f{index}:{s}"),
        (kind, value) => unreachable!("kind {kind:?} with value {value:?}"),
    }
}

/// Bidirectional token↔id map with reserved PAD/UNK/MASK ids.
///
/// Non-special ids start at 3 and are assigned in sorted token-string
/// order, so the same corpus always yields the same vocabulary no matter
/// how its records were ordered.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Vocabulary {
    pub table: FeatureTable,
    token_to_id: BTreeMap<String, u32>,
    id_to_token: Vec<String>,
}

impl Vocabulary {
    pub fn size(&self) -> usize {
        self.id_to_token.len()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.token_to_id.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.id_to_token.get(id as usize).map(|s| s.as_str())
    }

    /// Token ids belonging to one feature position, sorted ascending.
    /// This is the per-feature support used by histograms and one-hot
    /// encodings.
    pub fn feature_token_ids(&self, index: usize) -> Vec<u32> {
        let prefix = format!("f{index}:");
        self.token_to_id
            .iter()
            .filter(|(tok, _)| tok.starts_with(&prefix))
            .map(|(_, id)| *id)
            .collect()
    }

    /// SHA-256 over the serialized `token<TAB>id` lines; model checkpoints
    /// refuse to load against a different hash.
    pub fn content_hash(&self) -> String {
        let mut hasher = Sha256::new();
        for (token, id) in &self.token_to_id {
            hasher.update(token.as_bytes());
            hasher.update(b"\t");
            hasher.update(id.to_string().as_bytes());
            hasher.update(b"\n");
        }
        hex_string(&hasher.finalize())
    }

    /// Write as line-oriented `token<TAB>id` text, specials included.
    pub fn save(&self, path: &Path) -> Result<()> {
        let mut out = String::new();
        for (id, token) in self.id_to_token.iter().enumerate() {
            out.push_str(token);
            out.push('\t');
            out.push_str(&id.to_string());
            out.push('\n');
        }
        let mut file = std::fs::File::create(path)?;
        file.write_all(out.as_bytes())?;
        Ok(())
    }

    /// Reload a vocabulary saved by [`Vocabulary::save`]. The feature
    /// table is not stored in the file; the caller supplies the one the
    /// vocabulary was built with (the Kyoto default in the CLI).
    pub fn load(path: &Path, table: FeatureTable) -> Result<Self> {
        let file = std::fs::File::open(path)?;
        let mut pairs: Vec<(String, u32)> = Vec::new();
        for (lineno, line) in BufReader::new(file).lines().enumerate() {
            let line = line?;
            if line.is_empty() {
                continue;
            }
            let (token, id) = line.split_once('\t').ok_or_else(|| Error::MalformedFile {
                path: path.display().to_string(),
                reason: format!("line {}: missing tab", lineno + 1),
            })?;
            let id: u32 = id.parse().map_err(|_| Error::MalformedFile {
                path: path.display().to_string(),
                reason: format!("line {}: bad id {id:?}", lineno + 1),
            })?;
            pairs.push((token.to_string(), id));
        }
        pairs.sort_by_key(|(_, id)| *id);
        let mut id_to_token = Vec::with_capacity(pairs.len());
        let mut token_to_id = BTreeMap::new();
        for (expected, (token, id)) in pairs.into_iter().enumerate() {
            if id as usize != expected {
                return Err(Error::MalformedFile {
                    path: path.display().to_string(),
                    reason: format!("ids not contiguous at {id}"),
                });
            }
            token_to_id.insert(token.clone(), id);
            id_to_token.push(token);
        }
        if id_to_token.len() < SPECIAL_TOKENS.len() {
            return Err(Error::MalformedFile {
                path: path.display().to_string(),
                reason: "missing special tokens".into(),
            });
        }
        Ok(Vocabulary {
            table,
            token_to_id,
            id_to_token,
        })
    }
}

/// Build the closed vocabulary for `records`.
///
/// Every bin and percentage token of the applicable feature positions is
/// included regardless of observation; categorical positions contribute
/// their observed values. Unseen categorical values encode as UNK later.
pub fn build_vocabulary(records: &[RawRecord], table: &FeatureTable) -> Result<Vocabulary> {
    if records.is_empty() {
        return Err(Error::EmptyInput("build_vocabulary needs records"));
    }
    table.validate()?;
    let mut tokens: std::collections::BTreeSet<String> = std::collections::BTreeSet::new();
    for index in 0..FEATURE_COUNT {
        match table.kind(index) {
            FeatureKind::ExpBin => {
                for b in 0..BIN_COUNT {
                    tokens.insert(format!("f{index}:bin{b}"));
                }
            }
            FeatureKind::Percent => {
                for p in 0..PERCENT_LEVELS {
                    tokens.insert(format!("f{index}:pct{p}"));
                }
            }
            FeatureKind::Categorical => {
                for record in records {
                    tokens.insert(token_string(record, index, table));
                }
            }
        }
    }
    let mut token_to_id = BTreeMap::new();
    let mut id_to_token = Vec::with_capacity(tokens.len() + SPECIAL_TOKENS.len());
    for (id, special) in SPECIAL_TOKENS.iter().enumerate() {
        token_to_id.insert(special.to_string(), id as u32);
        id_to_token.push(special.to_string());
    }
    for token in tokens {
        let id = id_to_token.len() as u32;
        token_to_id.insert(token.clone(), id);
        id_to_token.push(token);
    }
    Ok(Vocabulary {
        table: table.clone(),
        token_to_id,
        id_to_token,
    })
}

/// Fixed-length tokenized record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TokenizedRecord {
    pub tokens: [u32; FEATURE_COUNT],
    pub label: Label,
    pub year_month: YearMonth,
}

/// Encode one record against a built vocabulary. Categorical values
/// missing from the vocabulary map to UNK; numeric token spaces are closed
/// so they always resolve.
pub fn encode(record: &RawRecord, vocab: &Vocabulary) -> TokenizedRecord {
    let mut tokens = [UNK_ID; FEATURE_COUNT];
    for (index, slot) in tokens.iter_mut().enumerate() {
        let token = token_string(record, index, &vocab.table);
        *slot = vocab.id(&token).unwrap_or(UNK_ID);
    }
    TokenizedRecord {
        tokens,
        label: record.label,
        year_month: record.timestamp.year_month(),
    }
}

/// Encode a whole set, in parallel when the `parallel` feature is on.
pub fn encode_all(records: &[RawRecord], vocab: &Vocabulary) -> Vec<TokenizedRecord> {
    parallel::map(records, |r| encode(r, vocab))
}

/// Decode a tokenized record back to its token strings.
pub fn decode(record: &TokenizedRecord, vocab: &Vocabulary) -> Vec<String> {
    record
        .tokens
        .iter()
        .map(|id| vocab.token(*id).unwrap_or(SPECIAL_TOKENS[1]).to_string())
        .collect()
}

pub(crate) fn hex_string(bytes: &[u8]) -> String {
    let mut s = String::with_capacity(bytes.len() * 2);
    for b in bytes {
        s.push_str(&format!("{b:02x}"));
    }
    s
}
