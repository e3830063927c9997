//! Encoder forward and hand-written backward passes.
//!
//! Post-norm encoder blocks over embedded token sequences:
//! `x -> LN(x + Attn(x)) -> LN(. + FFN(.))`, then a vocabulary
//! projection and per-position softmax. Shapes are `(B*T, H)` with
//! per-(sequence, head) attention slices.

use ndarray::{s, Array1, Array2, ArrayView2, Axis};
use rand::Rng;
use rand_chacha::ChaCha20Rng;

use super::params::{view_mut, ModelParams, TensorRef};
use crate::error::{Error, Result};

const GELU_C: f64 = 0.7978845608028654; // sqrt(2 / pi)
const GELU_A: f64 = 0.044715;

fn gelu(u: f64) -> f64 {
    0.5 * u * (1.0 + (GELU_C * (u + GELU_A * u * u * u)).tanh())
}

fn gelu_grad(u: f64) -> f64 {
    let z = GELU_C * (u + GELU_A * u * u * u);
    let t = z.tanh();
    0.5 * (1.0 + t) + 0.5 * u * (1.0 - t * t) * GELU_C * (1.0 + 3.0 * GELU_A * u * u)
}

/// Dropout role: evaluation is deterministic, training scales kept units
/// by 1/(1-p) (inverted dropout).
pub enum Mode<'r> {
    Eval,
    Train { rng: &'r mut ChaCha20Rng },
}

impl Mode<'_> {
    fn dropout_mask(&mut self, rows: usize, cols: usize, p: f64) -> Option<Array2<f64>> {
        match self {
            Mode::Eval => None,
            Mode::Train { rng } => {
                if p <= 0.0 {
                    return None;
                }
                let keep = 1.0 / (1.0 - p);
                Some(Array2::from_shape_fn((rows, cols), |_| {
                    if rng.gen_bool(p) {
                        0.0
                    } else {
                        keep
                    }
                }))
            }
        }
    }
}

fn apply_dropout(x: &mut Array2<f64>, mask: &Option<Array2<f64>>) {
    if let Some(mask) = mask {
        *x *= mask;
    }
}

struct LnCache {
    xhat: Array2<f64>,
    inv_std: Vec<f64>,
}

fn layernorm(x: &Array2<f64>, w: ArrayView2<f64>, b: ArrayView2<f64>, eps: f64) -> (Array2<f64>, LnCache) {
    let (rows, cols) = x.dim();
    let mut xhat = Array2::zeros((rows, cols));
    let mut out = Array2::zeros((rows, cols));
    let mut inv_std = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = x.row(r);
        let mean = row.sum() / cols as f64;
        let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / cols as f64;
        let istd = 1.0 / (var + eps).sqrt();
        inv_std.push(istd);
        for c in 0..cols {
            let h = (x[[r, c]] - mean) * istd;
            xhat[[r, c]] = h;
            out[[r, c]] = h * w[[0, c]] + b[[0, c]];
        }
    }
    (out, LnCache { xhat, inv_std })
}

/// LayerNorm backward; returns dx and accumulates dw/db.
fn layernorm_backward(
    dy: &Array2<f64>,
    cache: &LnCache,
    w: ArrayView2<f64>,
    dw: &mut Array2<f64>,
    db: &mut Array2<f64>,
) -> Array2<f64> {
    let (rows, cols) = dy.dim();
    let mut dx = Array2::zeros((rows, cols));
    for r in 0..rows {
        let mut mean_dxhat = 0.0;
        let mut mean_dxhat_xhat = 0.0;
        for c in 0..cols {
            let dxhat = dy[[r, c]] * w[[0, c]];
            mean_dxhat += dxhat;
            mean_dxhat_xhat += dxhat * cache.xhat[[r, c]];
            dw[[0, c]] += dy[[r, c]] * cache.xhat[[r, c]];
            db[[0, c]] += dy[[r, c]];
        }
        mean_dxhat /= cols as f64;
        mean_dxhat_xhat /= cols as f64;
        for c in 0..cols {
            let dxhat = dy[[r, c]] * w[[0, c]];
            dx[[r, c]] =
                cache.inv_std[r] * (dxhat - mean_dxhat - cache.xhat[[r, c]] * mean_dxhat_xhat);
        }
    }
    dx
}

fn add_bias(x: &mut Array2<f64>, b: ArrayView2<f64>) {
    for mut row in x.rows_mut() {
        row += &b.row(0);
    }
}

fn softmax_rows(x: &mut Array2<f64>) {
    for mut row in x.rows_mut() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        row /= sum;
    }
}

struct LayerCache {
    x_in: Array2<f64>,
    q: Array2<f64>,
    k: Array2<f64>,
    v: Array2<f64>,
    /// Post-softmax attention, one (T, T) matrix per (sequence, head).
    attn_probs: Vec<Array2<f64>>,
    attn_drop: Vec<Option<Array2<f64>>>,
    ctx: Array2<f64>,
    a_drop: Option<Array2<f64>>,
    ln1: LnCache,
    y1: Array2<f64>,
    ffn_pre: Array2<f64>,
    ffn_act: Array2<f64>,
    f_drop: Option<Array2<f64>>,
    ln2: LnCache,
}

pub(crate) struct Cache {
    batch: usize,
    seq_len: usize,
    ids: Vec<Vec<u32>>,
    emb_ln: LnCache,
    emb_drop: Option<Array2<f64>>,
    layers: Vec<LayerCache>,
    final_x: Array2<f64>,
    pub probs: Array2<f64>,
    log_probs: Array2<f64>,
}

pub(crate) fn forward_cache(params: &ModelParams, ids: &[Vec<u32>], mut mode: Mode) -> Result<Cache> {
    let config = &params.config;
    let t = config.seq_len;
    let h = config.hidden;
    let heads = config.n_heads;
    let dh = h / heads;
    let b = ids.len();
    if b == 0 {
        return Err(Error::EmptyInput("forward needs at least one sequence"));
    }
    for seq in ids {
        if seq.len() != t {
            return Err(Error::InvalidConfig(format!(
                "sequence length {} != configured {t}",
                seq.len()
            )));
        }
        if seq.iter().any(|id| *id as usize >= params.vocab_size) {
            return Err(Error::InvalidConfig("token id outside vocabulary".into()));
        }
    }
    let rows = b * t;

    // embeddings
    let tok_emb = params.view(&params.layout.tok_emb);
    let pos_emb = params.view(&params.layout.pos_emb);
    let mut x0 = Array2::zeros((rows, h));
    for (bi, seq) in ids.iter().enumerate() {
        for (ti, id) in seq.iter().enumerate() {
            let mut row = x0.row_mut(bi * t + ti);
            row.assign(&tok_emb.row(*id as usize));
            row += &pos_emb.row(ti);
        }
    }
    let (mut x, emb_ln) = layernorm(
        &x0,
        params.view(&params.layout.emb_ln_w),
        params.view(&params.layout.emb_ln_b),
        config.layernorm_eps,
    );
    let emb_drop = mode.dropout_mask(rows, h, config.dropout);
    apply_dropout(&mut x, &emb_drop);

    let scale = 1.0 / (dh as f64).sqrt();
    let mut layers = Vec::with_capacity(config.n_layers);
    for layer in &params.layout.layers {
        let x_in = x.clone();
        let mut q = x_in.dot(&params.view(&layer.wq));
        add_bias(&mut q, params.view(&layer.bq));
        let mut k = x_in.dot(&params.view(&layer.wk));
        add_bias(&mut k, params.view(&layer.bk));
        let mut v = x_in.dot(&params.view(&layer.wv));
        add_bias(&mut v, params.view(&layer.bv));

        let mut ctx = Array2::zeros((rows, h));
        let mut attn_probs = Vec::with_capacity(b * heads);
        let mut attn_drop = Vec::with_capacity(b * heads);
        for bi in 0..b {
            let span = s![bi * t..(bi + 1) * t, ..];
            for head in 0..heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let qh = q.slice(span).slice_move(cols);
                let kh = k.slice(span).slice_move(cols);
                let vh = v.slice(span).slice_move(cols);
                let mut scores = qh.dot(&kh.t());
                scores *= scale;
                softmax_rows(&mut scores);
                let drop = mode.dropout_mask(t, t, config.attention_dropout);
                let mut probs_dropped = scores.clone();
                apply_dropout(&mut probs_dropped, &drop);
                let ctx_h = probs_dropped.dot(&vh);
                ctx.slice_mut(span)
                    .slice_mut(cols)
                    .assign(&ctx_h);
                attn_probs.push(scores);
                attn_drop.push(drop);
            }
        }

        let mut a = ctx.dot(&params.view(&layer.wo));
        add_bias(&mut a, params.view(&layer.bo));
        let a_drop = mode.dropout_mask(rows, h, config.dropout);
        apply_dropout(&mut a, &a_drop);
        let r1 = &x_in + &a;
        let (y1, ln1) = layernorm(
            &r1,
            params.view(&layer.ln1_w),
            params.view(&layer.ln1_b),
            config.layernorm_eps,
        );

        let mut ffn_pre = y1.dot(&params.view(&layer.w1));
        add_bias(&mut ffn_pre, params.view(&layer.b1));
        let ffn_act = ffn_pre.mapv(gelu);
        let mut f = ffn_act.dot(&params.view(&layer.w2));
        add_bias(&mut f, params.view(&layer.b2));
        let f_drop = mode.dropout_mask(rows, h, config.dropout);
        apply_dropout(&mut f, &f_drop);
        let r2 = &y1 + &f;
        let (y2, ln2) = layernorm(
            &r2,
            params.view(&layer.ln2_w),
            params.view(&layer.ln2_b),
            config.layernorm_eps,
        );

        layers.push(LayerCache {
            x_in,
            q,
            k,
            v,
            attn_probs,
            attn_drop,
            ctx,
            a_drop,
            ln1,
            y1,
            ffn_pre,
            ffn_act,
            f_drop,
            ln2,
        });
        x = y2;
    }

    let final_x = x;
    let mut logits = final_x.dot(&params.view(&params.layout.out_w));
    add_bias(&mut logits, params.view(&params.layout.out_b));
    // stable softmax + log-softmax from the same pass
    let mut probs = Array2::zeros(logits.dim());
    let mut log_probs = Array2::zeros(logits.dim());
    for (r, row) in logits.rows().into_iter().enumerate() {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter() {
            sum += (v - max).exp();
        }
        let lse = max + sum.ln();
        for (c, v) in row.iter().enumerate() {
            log_probs[[r, c]] = v - lse;
            probs[[r, c]] = (v - lse).exp();
        }
    }

    Ok(Cache {
        batch: b,
        seq_len: t,
        ids: ids.to_vec(),
        emb_ln,
        emb_drop,
        layers,
        final_x,
        probs,
        log_probs,
    })
}

/// Per-position probability distributions over the vocabulary, in eval
/// mode (deterministic). Row `i * seq_len + j` is position `j` of
/// sequence `i`; every row sums to 1.
pub fn forward_probs(params: &ModelParams, ids: &[Vec<u32>]) -> Result<Array2<f64>> {
    Ok(forward_cache(params, ids, Mode::Eval)?.probs)
}

/// Mean negative log probability of the true token over masked positions.
pub fn mlm_loss(predictions: &Array2<f64>, targets: &[Vec<u32>], masks: &[Vec<bool>]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    let t = targets.first().map(|s| s.len()).unwrap_or(0);
    for (i, (target, mask)) in targets.iter().zip(masks).enumerate() {
        for (j, m) in mask.iter().enumerate() {
            if *m {
                let p = predictions[[i * t + j, target[j] as usize]].max(1e-300);
                total -= p.ln();
                count += 1;
            }
        }
    }
    if count == 0 {
        return Err(Error::EmptyMask);
    }
    Ok(total / count as f64)
}

/// One masked training batch.
#[derive(Debug, Clone)]
pub struct MaskedBatch {
    pub masked_ids: Vec<Vec<u32>>,
    pub targets: Vec<Vec<u32>>,
    pub masks: Vec<Vec<bool>>,
}

impl MaskedBatch {
    fn masked_rows(&self, t: usize) -> Vec<(usize, usize)> {
        let mut rows = Vec::new();
        for (i, mask) in self.masks.iter().enumerate() {
            for (j, m) in mask.iter().enumerate() {
                if *m {
                    rows.push((i * t + j, self.targets[i][j] as usize));
                }
            }
        }
        rows
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LossParts {
    pub mlm: f64,
    pub distill: f64,
}

impl LossParts {
    pub fn total(&self) -> f64 {
        self.mlm + self.distill
    }
}

/// Loss and analytic gradients for one masked batch. With a teacher, a
/// `KL(teacher || student)` term over masked positions is added at unit
/// weight and temperature one; the teacher always runs in eval mode.
pub fn loss_and_grads(
    params: &ModelParams,
    batch: &MaskedBatch,
    teacher: Option<&ModelParams>,
    mode: Mode,
) -> Result<(LossParts, Vec<f64>)> {
    let t = params.config.seq_len;
    let cache = forward_cache(params, &batch.masked_ids, mode)?;
    let masked = batch.masked_rows(t);
    if masked.is_empty() {
        return Err(Error::EmptyMask);
    }
    let m = masked.len() as f64;
    let vocab = params.vocab_size;

    let mut mlm = 0.0;
    let mut dlogits = Array2::zeros(cache.probs.dim());
    for (row, target) in &masked {
        mlm -= cache.log_probs[[*row, *target]];
        for c in 0..vocab {
            dlogits[[*row, c]] += cache.probs[[*row, c]] / m;
        }
        dlogits[[*row, *target]] -= 1.0 / m;
    }
    mlm /= m;

    let mut distill = 0.0;
    if let Some(teacher) = teacher {
        if teacher.vocab_size != params.vocab_size
            || teacher.config.hidden != params.config.hidden
            || teacher.config.n_layers != params.config.n_layers
            || teacher.config.seq_len != params.config.seq_len
        {
            return Err(Error::ConfigMismatch(
                "teacher and student must share architecture and vocabulary".into(),
            ));
        }
        let teacher_cache = forward_cache(teacher, &batch.masked_ids, Mode::Eval)?;
        for (row, _) in &masked {
            for c in 0..vocab {
                let pt = teacher_cache.probs[[*row, c]];
                if pt > 0.0 {
                    distill +=
                        pt * (teacher_cache.log_probs[[*row, c]] - cache.log_probs[[*row, c]]);
                }
                dlogits[[*row, c]] += (cache.probs[[*row, c]] - pt) / m;
            }
        }
        distill /= m;
    }

    let grads = backward(params, &cache, &dlogits);
    Ok((LossParts { mlm, distill }, grads))
}

fn add_into(grads: &mut [f64], r: &TensorRef, delta: &Array2<f64>) {
    let mut view = view_mut(grads, r);
    view += delta;
}

fn colsum(x: &Array2<f64>) -> Array2<f64> {
    x.sum_axis(Axis(0)).insert_axis(Axis(0))
}

fn backward(params: &ModelParams, cache: &Cache, dlogits: &Array2<f64>) -> Vec<f64> {
    let config = &params.config;
    let t = cache.seq_len;
    let h = config.hidden;
    let heads = config.n_heads;
    let dh = h / heads;
    let b = cache.batch;
    let scale = 1.0 / (dh as f64).sqrt();
    let mut grads = params.zeros_like_grads();

    // vocabulary projection
    add_into(
        &mut grads,
        &params.layout.out_w,
        &cache.final_x.t().dot(dlogits),
    );
    add_into(&mut grads, &params.layout.out_b, &colsum(dlogits));
    let mut dx = dlogits.dot(&params.view(&params.layout.out_w).t());

    for (layer_idx, layer) in params.layout.layers.iter().enumerate().rev() {
        let lc = &cache.layers[layer_idx];
        // LN2
        let mut d_ln2_w = Array2::zeros((1, h));
        let mut d_ln2_b = Array2::zeros((1, h));
        let dr2 = layernorm_backward(
            &dx,
            &lc.ln2,
            params.view(&layer.ln2_w),
            &mut d_ln2_w,
            &mut d_ln2_b,
        );
        add_into(&mut grads, &layer.ln2_w, &d_ln2_w);
        add_into(&mut grads, &layer.ln2_b, &d_ln2_b);

        // r2 = y1 + dropout(f)
        let mut dy1 = dr2.clone();
        let mut df = dr2;
        if let Some(mask) = &lc.f_drop {
            df *= mask;
        }

        // f = gelu(ffn_pre) . w2 + b2
        add_into(&mut grads, &layer.w2, &lc.ffn_act.t().dot(&df));
        add_into(&mut grads, &layer.b2, &colsum(&df));
        let mut d_pre = df.dot(&params.view(&layer.w2).t());
        d_pre.zip_mut_with(&lc.ffn_pre, |d, pre| *d *= gelu_grad(*pre));
        add_into(&mut grads, &layer.w1, &lc.y1.t().dot(&d_pre));
        add_into(&mut grads, &layer.b1, &colsum(&d_pre));
        dy1 += &d_pre.dot(&params.view(&layer.w1).t());

        // LN1
        let mut d_ln1_w = Array2::zeros((1, h));
        let mut d_ln1_b = Array2::zeros((1, h));
        let dr1 = layernorm_backward(
            &dy1,
            &lc.ln1,
            params.view(&layer.ln1_w),
            &mut d_ln1_w,
            &mut d_ln1_b,
        );
        add_into(&mut grads, &layer.ln1_w, &d_ln1_w);
        add_into(&mut grads, &layer.ln1_b, &d_ln1_b);

        // r1 = x_in + dropout(a)
        let mut dx_in = dr1.clone();
        let mut da = dr1;
        if let Some(mask) = &lc.a_drop {
            da *= mask;
        }

        // a = ctx . wo + bo
        add_into(&mut grads, &layer.wo, &lc.ctx.t().dot(&da));
        add_into(&mut grads, &layer.bo, &colsum(&da));
        let dctx = da.dot(&params.view(&layer.wo).t());

        // attention heads
        let mut dq = Array2::zeros((b * t, h));
        let mut dk = Array2::zeros((b * t, h));
        let mut dv = Array2::zeros((b * t, h));
        for bi in 0..b {
            let span = s![bi * t..(bi + 1) * t, ..];
            for head in 0..heads {
                let cols = s![.., head * dh..(head + 1) * dh];
                let probs = &lc.attn_probs[bi * heads + head];
                let drop = &lc.attn_drop[bi * heads + head];
                let qh = lc.q.slice(span).slice_move(cols);
                let kh = lc.k.slice(span).slice_move(cols);
                let vh = lc.v.slice(span).slice_move(cols);
                let dctx_h = dctx.slice(span).slice_move(cols);

                let probs_dropped = match drop {
                    Some(mask) => probs * mask,
                    None => probs.clone(),
                };
                let mut d_probs = dctx_h.dot(&vh.t());
                let dv_h = probs_dropped.t().dot(&dctx_h);
                if let Some(mask) = drop {
                    d_probs *= mask;
                }
                // softmax backward, rowwise
                let mut d_scores = Array2::zeros((t, t));
                for r in 0..t {
                    let dot: f64 = (0..t).map(|c| d_probs[[r, c]] * probs[[r, c]]).sum();
                    for c in 0..t {
                        d_scores[[r, c]] = probs[[r, c]] * (d_probs[[r, c]] - dot);
                    }
                }
                d_scores *= scale;
                let dq_h = d_scores.dot(&kh);
                let dk_h = d_scores.t().dot(&qh);
                dq.slice_mut(span).slice_mut(cols).assign(&dq_h);
                dk.slice_mut(span).slice_mut(cols).assign(&dk_h);
                dv.slice_mut(span).slice_mut(cols).assign(&dv_h);
            }
        }

        // q/k/v projections back to the layer input
        add_into(&mut grads, &layer.wq, &lc.x_in.t().dot(&dq));
        add_into(&mut grads, &layer.bq, &colsum(&dq));
        add_into(&mut grads, &layer.wk, &lc.x_in.t().dot(&dk));
        add_into(&mut grads, &layer.bk, &colsum(&dk));
        add_into(&mut grads, &layer.wv, &lc.x_in.t().dot(&dv));
        add_into(&mut grads, &layer.bv, &colsum(&dv));
        dx_in += &dq.dot(&params.view(&layer.wq).t());
        dx_in += &dk.dot(&params.view(&layer.wk).t());
        dx_in += &dv.dot(&params.view(&layer.wv).t());
        dx = dx_in;
    }

    // embedding dropout, LayerNorm, scatter
    if let Some(mask) = &cache.emb_drop {
        dx *= mask;
    }
    let mut d_emb_w = Array2::zeros((1, h));
    let mut d_emb_b = Array2::zeros((1, h));
    let dx0 = layernorm_backward(
        &dx,
        &cache.emb_ln,
        params.view(&params.layout.emb_ln_w),
        &mut d_emb_w,
        &mut d_emb_b,
    );
    add_into(&mut grads, &params.layout.emb_ln_w, &d_emb_w);
    add_into(&mut grads, &params.layout.emb_ln_b, &d_emb_b);
    {
        let tok_ref = params.layout.tok_emb;
        let pos_ref = params.layout.pos_emb;
        for (bi, seq) in cache.ids.iter().enumerate() {
            for (ti, id) in seq.iter().enumerate() {
                let row = dx0.row(bi * t + ti);
                let tok_off = tok_ref.offset + *id as usize * h;
                let pos_off = pos_ref.offset + ti * h;
                for c in 0..h {
                    grads[tok_off + c] += row[c];
                    grads[pos_off + c] += row[c];
                }
            }
        }
    }
    grads
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mlm::{init_model, ModelConfig};
    use rand::SeedableRng;

    fn toy_params() -> ModelParams {
        init_model(&ModelConfig::toy(), 7, 42).unwrap()
    }

    #[test]
    fn distributions_sum_to_one() {
        let params = toy_params();
        let ids = vec![vec![0, 1, 2, 3, 4, 5], vec![6, 5, 4, 3, 2, 1]];
        let probs = forward_probs(&params, &ids).unwrap();
        assert_eq!(probs.dim(), (12, 7));
        for row in probs.rows() {
            let sum: f64 = row.sum();
            assert!((sum - 1.0).abs() < 1e-6, "row sum {sum}");
            assert!(row.iter().all(|p| *p >= 0.0));
        }
    }

    #[test]
    fn eval_forward_is_deterministic() {
        let params = toy_params();
        let ids = vec![vec![1, 2, 3, 4, 5, 6]];
        let a = forward_probs(&params, &ids).unwrap();
        let b = forward_probs(&params, &ids).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn swapping_tokens_and_positional_rows_permutes_outputs() {
        let params = toy_params();
        let ids = vec![vec![1, 2, 3, 4, 5, 6]];
        let base = forward_probs(&params, &ids).unwrap();

        // swap sequence positions 1 and 4 together with their positional
        // embedding rows
        let mut swapped = params.clone();
        let h = swapped.config.hidden;
        let off = swapped.layout.pos_emb.offset;
        for c in 0..h {
            swapped.data.swap(off + h + c, off + 4 * h + c);
        }
        let ids_swapped = vec![vec![1, 5, 3, 4, 2, 6]];
        let perm = forward_probs(&swapped, &ids_swapped).unwrap();

        for (orig_pos, new_pos) in [(0, 0), (1, 4), (2, 2), (3, 3), (4, 1), (5, 5)] {
            for c in 0..7 {
                let a = base[[orig_pos, c]];
                let b = perm[[new_pos, c]];
                assert!((a - b).abs() < 1e-9, "pos {orig_pos}->{new_pos} col {c}");
            }
        }
    }

    #[test]
    fn mlm_loss_analytics() {
        // one-hot predictions on the target give zero loss
        let targets = vec![vec![2u32, 3, 1]];
        let masks = vec![vec![true, true, false]];
        let mut onehot = Array2::zeros((3, 7));
        onehot[[0, 2]] = 1.0;
        onehot[[1, 3]] = 1.0;
        onehot[[2, 0]] = 1.0;
        assert_eq!(mlm_loss(&onehot, &targets, &masks).unwrap(), 0.0);
        // uniform predictions give ln V
        let uniform = Array2::from_elem((3, 7), 1.0 / 7.0);
        let loss = mlm_loss(&uniform, &targets, &masks).unwrap();
        assert!((loss - 7f64.ln()).abs() < 1e-12);
        // empty mask is an error
        let none = vec![vec![false, false, false]];
        assert!(matches!(
            mlm_loss(&uniform, &targets, &none),
            Err(Error::EmptyMask)
        ));
    }

    #[test]
    fn training_loss_matches_public_mlm_loss_in_eval() {
        let params = toy_params();
        let batch = MaskedBatch {
            masked_ids: vec![vec![2, 1, 4, 2, 5, 0], vec![1, 1, 2, 2, 3, 3]],
            targets: vec![vec![2, 6, 4, 2, 5, 0], vec![1, 4, 2, 5, 3, 3]],
            masks: vec![
                vec![false, true, false, false, false, false],
                vec![false, true, false, true, false, false],
            ],
        };
        let (parts, _) = loss_and_grads(&params, &batch, None, Mode::Eval).unwrap();
        let probs = forward_probs(&params, &batch.masked_ids).unwrap();
        let reference = mlm_loss(&probs, &batch.targets, &batch.masks).unwrap();
        assert!((parts.mlm - reference).abs() < 1e-12);
        assert_eq!(parts.distill, 0.0);
    }

    #[test]
    fn distill_term_is_zero_against_self_and_nonnegative_otherwise() {
        let params = toy_params();
        let batch = MaskedBatch {
            masked_ids: vec![vec![2, 1, 4, 2, 5, 0]],
            targets: vec![vec![2, 6, 4, 2, 5, 0]],
            masks: vec![vec![true, true, false, false, true, false]],
        };
        let (parts, _) = loss_and_grads(&params, &batch, Some(&params), Mode::Eval).unwrap();
        assert!(parts.distill.abs() < 1e-12, "self distill {}", parts.distill);

        let other = init_model(&ModelConfig::toy(), 7, 99).unwrap();
        let (parts, _) = loss_and_grads(&params, &batch, Some(&other), Mode::Eval).unwrap();
        assert!(parts.distill >= 0.0);

        let incompatible = init_model(&ModelConfig::toy(), 9, 1).unwrap();
        assert!(matches!(
            loss_and_grads(&params, &batch, Some(&incompatible), Mode::Eval),
            Err(Error::ConfigMismatch(_))
        ));
    }

    #[test]
    fn analytic_gradients_match_finite_differences_smoke() {
        // a fast spot check on a random subset; the acceptance suite
        // sweeps every parameter
        let mut params = toy_params();
        let batch = MaskedBatch {
            masked_ids: vec![vec![2, 1, 4, 2, 5, 0], vec![0, 6, 2, 2, 1, 3]],
            targets: vec![vec![2, 6, 4, 2, 5, 0], vec![0, 6, 5, 2, 1, 3]],
            masks: vec![
                vec![false, true, false, false, false, false],
                vec![false, false, true, false, false, false],
            ],
        };
        let (_, grads) = loss_and_grads(&params, &batch, None, Mode::Eval).unwrap();
        let mut rng = ChaCha20Rng::seed_from_u64(0);
        for _ in 0..60 {
            let idx = rng.gen_range(0..params.data.len());
            let h = 1e-5 * params.data[idx].abs().max(1.0);
            let orig = params.data[idx];
            params.data[idx] = orig + h;
            let (up, _) = loss_and_grads(&params, &batch, None, Mode::Eval).unwrap();
            params.data[idx] = orig - h;
            let (down, _) = loss_and_grads(&params, &batch, None, Mode::Eval).unwrap();
            params.data[idx] = orig;
            let fd = (up.total() - down.total()) / (2.0 * h);
            let diff = (grads[idx] - fd).abs();
            let denom = grads[idx].abs().max(fd.abs()).max(1e-6);
            assert!(diff / denom < 1e-4, "param {idx}: {} vs {fd}", grads[idx]);
        }
    }
}
