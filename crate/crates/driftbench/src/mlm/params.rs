//! Flat parameter storage with a typed layout, truncated-normal
//! initialization, closed-form parameter counting, and the checkpoint
//! file format.

use ndarray::{ArrayView2, ArrayViewMut2};
use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};
use std::path::Path;

use super::ModelConfig;
use crate::error::{Error, Result};

/// One tensor inside the flat parameter vector. Row-major `(rows, cols)`;
/// vectors are `(1, n)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TensorRef {
    pub offset: usize,
    pub rows: usize,
    pub cols: usize,
}

impl TensorRef {
    pub fn len(&self) -> usize {
        self.rows * self.cols
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayerRefs {
    pub wq: TensorRef,
    pub bq: TensorRef,
    pub wk: TensorRef,
    pub bk: TensorRef,
    pub wv: TensorRef,
    pub bv: TensorRef,
    pub wo: TensorRef,
    pub bo: TensorRef,
    pub ln1_w: TensorRef,
    pub ln1_b: TensorRef,
    pub w1: TensorRef,
    pub b1: TensorRef,
    pub w2: TensorRef,
    pub b2: TensorRef,
    pub ln2_w: TensorRef,
    pub ln2_b: TensorRef,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Layout {
    pub tok_emb: TensorRef,
    pub pos_emb: TensorRef,
    pub emb_ln_w: TensorRef,
    pub emb_ln_b: TensorRef,
    pub layers: Vec<LayerRefs>,
    pub out_w: TensorRef,
    pub out_b: TensorRef,
    pub total: usize,
}

impl Layout {
    pub fn new(config: &ModelConfig, vocab_size: usize) -> Layout {
        let h = config.hidden;
        let i = config.intermediate;
        let mut offset = 0usize;
        let mut alloc = |rows: usize, cols: usize| {
            let r = TensorRef {
                offset,
                rows,
                cols,
            };
            offset += rows * cols;
            r
        };
        let tok_emb = alloc(vocab_size, h);
        let pos_emb = alloc(config.seq_len, h);
        let emb_ln_w = alloc(1, h);
        let emb_ln_b = alloc(1, h);
        let layers = (0..config.n_layers)
            .map(|_| LayerRefs {
                wq: alloc(h, h),
                bq: alloc(1, h),
                wk: alloc(h, h),
                bk: alloc(1, h),
                wv: alloc(h, h),
                bv: alloc(1, h),
                wo: alloc(h, h),
                bo: alloc(1, h),
                ln1_w: alloc(1, h),
                ln1_b: alloc(1, h),
                w1: alloc(h, i),
                b1: alloc(1, i),
                w2: alloc(i, h),
                b2: alloc(1, h),
                ln2_w: alloc(1, h),
                ln2_b: alloc(1, h),
            })
            .collect();
        let out_w = alloc(h, vocab_size);
        let out_b = alloc(1, vocab_size);
        Layout {
            tok_emb,
            pos_emb,
            emb_ln_w,
            emb_ln_b,
            layers,
            out_w,
            out_b,
            total: offset,
        }
    }

    /// All tensors with their names and whether decoupled weight decay
    /// applies (matrices yes, biases and LayerNorm vectors no).
    pub fn tensors(&self) -> Vec<(String, TensorRef)> {
        let mut out = vec![
            ("tok_emb".into(), self.tok_emb),
            ("pos_emb".into(), self.pos_emb),
            ("emb_ln_w".into(), self.emb_ln_w),
            ("emb_ln_b".into(), self.emb_ln_b),
        ];
        for (l, layer) in self.layers.iter().enumerate() {
            for (name, r) in [
                ("wq", layer.wq),
                ("bq", layer.bq),
                ("wk", layer.wk),
                ("bk", layer.bk),
                ("wv", layer.wv),
                ("bv", layer.bv),
                ("wo", layer.wo),
                ("bo", layer.bo),
                ("ln1_w", layer.ln1_w),
                ("ln1_b", layer.ln1_b),
                ("w1", layer.w1),
                ("b1", layer.b1),
                ("w2", layer.w2),
                ("b2", layer.b2),
                ("ln2_w", layer.ln2_w),
                ("ln2_b", layer.ln2_b),
            ] {
                out.push((format!("layer{l}.{name}"), r));
            }
        }
        out.push(("out_w".into(), self.out_w));
        out.push(("out_b".into(), self.out_b));
        out
    }

    /// Per-index weight-decay eligibility.
    pub fn decay_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.total];
        for (_, r) in self.tensors() {
            if r.rows > 1 {
                mask[r.offset..r.offset + r.len()].fill(true);
            }
        }
        mask
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams {
    pub config: ModelConfig,
    pub vocab_size: usize,
    pub data: Vec<f64>,
    pub layout: Layout,
}

impl ModelParams {
    pub fn view<'a>(&'a self, r: &TensorRef) -> ArrayView2<'a, f64> {
        ArrayView2::from_shape((r.rows, r.cols), &self.data[r.offset..r.offset + r.len()])
            .expect("layout shapes are consistent")
    }

    pub fn zeros_like_grads(&self) -> Vec<f64> {
        vec![0.0; self.layout.total]
    }

    pub fn param_count(&self) -> usize {
        self.layout.total
    }
}

pub fn view_mut<'a>(data: &'a mut [f64], r: &TensorRef) -> ArrayViewMut2<'a, f64> {
    ArrayViewMut2::from_shape((r.rows, r.cols), &mut data[r.offset..r.offset + r.len()])
        .expect("layout shapes are consistent")
}

pub fn view_of<'a>(data: &'a [f64], r: &TensorRef) -> ArrayView2<'a, f64> {
    ArrayView2::from_shape((r.rows, r.cols), &data[r.offset..r.offset + r.len()])
        .expect("layout shapes are consistent")
}

/// Closed-form and realized parameter counts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCount {
    pub total: usize,
    pub embeddings: usize,
    pub encoder: usize,
    pub projection: usize,
}

/// Closed-form parameter count:
/// `V*H + T*H + 2H + L*(4H^2 + 2HI + 9H + I) + H*V + V`.
pub fn param_count(config: &ModelConfig, vocab_size: usize) -> ParamCount {
    let (v, h, i, l, t) = (
        vocab_size,
        config.hidden,
        config.intermediate,
        config.n_layers,
        config.seq_len,
    );
    let embeddings = v * h + t * h + 2 * h;
    let encoder = l * (4 * h * h + 2 * h * i + 9 * h + i);
    let projection = h * v + v;
    ParamCount {
        total: embeddings + encoder + projection,
        embeddings,
        encoder,
        projection,
    }
}

fn truncated_normal(rng: &mut ChaCha20Rng, std: f64) -> f64 {
    loop {
        // Box-Muller against rejection keeps this self-contained and
        // deterministic under ChaCha.
        let u1: f64 = rng.gen_range(f64::MIN_POSITIVE..1.0);
        let u2: f64 = rng.gen();
        let z = (-2.0 * u1.ln()).sqrt() * (2.0 * std::f64::consts::PI * u2).cos();
        let x = z * std;
        if x.abs() <= 2.0 * std {
            return x;
        }
    }
}

/// Fresh parameters: truncated normal(0, init_std) for matrices and
/// embeddings, zeros for biases, ones for LayerNorm weights.
pub fn init_model(config: &ModelConfig, vocab_size: usize, seed: u64) -> Result<ModelParams> {
    config.validate(vocab_size)?;
    let layout = Layout::new(config, vocab_size);
    let mut data = vec![0.0; layout.total];
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    for (name, r) in layout.tensors() {
        let slice = &mut data[r.offset..r.offset + r.len()];
        if name.ends_with("ln_w") || name.contains("ln1_w") || name.contains("ln2_w") {
            slice.fill(1.0);
        } else if r.rows > 1 {
            for x in slice.iter_mut() {
                *x = truncated_normal(&mut rng, config.init_std);
            }
        }
        // biases and LayerNorm offsets stay zero
    }
    Ok(ModelParams {
        config: config.clone(),
        vocab_size,
        data,
        layout,
    })
}

const CHECKPOINT_MAGIC: &[u8; 8] = b"DBMLM\0\0\x01";

#[derive(Debug, Serialize, Deserialize)]
struct CheckpointHeader {
    config: ModelConfig,
    vocab_size: usize,
    vocab_hash: String,
    param_total: usize,
}

/// Versioned binary checkpoint: magic, JSON header, raw little-endian f64
/// parameters. The vocabulary hash binds the weights to the token space
/// they were trained with.
pub fn save_checkpoint(path: &Path, params: &ModelParams, vocab_hash: &str) -> Result<()> {
    let header = CheckpointHeader {
        config: params.config.clone(),
        vocab_size: params.vocab_size,
        vocab_hash: vocab_hash.to_string(),
        param_total: params.data.len(),
    };
    let header_json = serde_json::to_vec(&header)?;
    let mut body = Vec::with_capacity(16 + header_json.len() + params.data.len() * 8);
    body.extend_from_slice(CHECKPOINT_MAGIC);
    body.extend_from_slice(&(header_json.len() as u64).to_le_bytes());
    body.extend_from_slice(&header_json);
    for x in &params.data {
        body.extend_from_slice(&x.to_le_bytes());
    }
    crate::ingest::write_atomic(path, &body)
}

/// Load a checkpoint, refusing a vocabulary hash mismatch.
pub fn load_checkpoint(path: &Path, expected_vocab_hash: &str) -> Result<ModelParams> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "not a model checkpoint".into(),
        });
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let header_len = u64::from_le_bytes(len_bytes) as usize;
    let mut header_json = vec![0u8; header_len];
    file.read_exact(&mut header_json)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)?;
    if header.vocab_hash != expected_vocab_hash {
        return Err(Error::VocabMismatch {
            expected: expected_vocab_hash.to_string(),
            found: header.vocab_hash,
        });
    }
    let mut raw = Vec::new();
    file.read_to_end(&mut raw)?;
    if raw.len() != header.param_total * 8 {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: format!(
                "parameter payload {} bytes, expected {}",
                raw.len(),
                header.param_total * 8
            ),
        });
    }
    let data: Vec<f64> = raw
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
        .collect();
    let layout = Layout::new(&header.config, header.vocab_size);
    if layout.total != data.len() {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "layout/parameter size mismatch".into(),
        });
    }
    Ok(ModelParams {
        config: header.config,
        vocab_size: header.vocab_size,
        data,
        layout,
    })
}

/// Peek at a checkpoint's header without loading parameters.
pub fn checkpoint_vocab_hash(path: &Path) -> Result<String> {
    let mut file = std::fs::File::open(path)?;
    let mut magic = [0u8; 8];
    file.read_exact(&mut magic)?;
    if &magic != CHECKPOINT_MAGIC {
        return Err(Error::MalformedFile {
            path: path.display().to_string(),
            reason: "not a model checkpoint".into(),
        });
    }
    let mut len_bytes = [0u8; 8];
    file.read_exact(&mut len_bytes)?;
    let mut header_json = vec![0u8; u64::from_le_bytes(len_bytes) as usize];
    file.read_exact(&mut header_json)?;
    let header: CheckpointHeader = serde_json::from_slice(&header_json)?;
    Ok(header.vocab_hash)
}

// keep Write in scope for write_atomic's callers on some toolchains
#[allow(unused_imports)]
use std::io::Write as _;
