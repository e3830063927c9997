//! Training strategies over yearly token sets.
//!
//! All three share one stage runner: shuffle the stage's data once, then
//! run epochs of masked batches with AdamW updates. The optimizer state
//! resets at every stage boundary, so each yearly set is a fresh
//! optimization problem.
//!
//! - iid: fresh init, one stage over the shuffled concatenation.
//! - finetune: the same parameters continue across yearly stages.
//! - distill: each yearly stage trains a reinitialized student whose loss
//!   adds KL toward the previous stage's model; the student then becomes
//!   the teacher for the next stage.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use super::model::{loss_and_grads, MaskedBatch, Mode};
use super::optim::AdamW;
use super::params::{init_model, ModelParams};
use super::{apply_mask, ModelConfig};
use crate::error::{Error, Result};
use crate::protocol::derive_seed;

/// One record's token ids, in canonical feature order.
pub type Sequence = Vec<u32>;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TrainHistory {
    /// Mean per-epoch total loss of each stage, in stage order.
    pub stages: Vec<Vec<f64>>,
}

fn run_stage(
    params: &mut ModelParams,
    data: &[Sequence],
    teacher: Option<&ModelParams>,
    stage_seed: u64,
) -> Result<Vec<f64>> {
    if data.is_empty() {
        return Err(Error::EmptyInput("training stage needs sequences"));
    }
    let config = params.config.clone();
    let mut rng = ChaCha20Rng::seed_from_u64(stage_seed);
    let mut order: Vec<usize> = (0..data.len()).collect();
    order.shuffle(&mut rng);
    let decay_mask = params.layout.decay_mask();
    let mut optimizer = AdamW::new(params.data.len(), config.learning_rate, config.weight_decay);
    let mut epoch_losses = Vec::with_capacity(config.epochs);
    for _epoch in 0..config.epochs {
        let mut loss_sum = 0.0;
        let mut batches = 0usize;
        for chunk in order.chunks(config.batch_size) {
            let mut batch = MaskedBatch {
                masked_ids: Vec::with_capacity(chunk.len()),
                targets: Vec::with_capacity(chunk.len()),
                masks: Vec::with_capacity(chunk.len()),
            };
            for idx in chunk {
                let seq = &data[*idx];
                let sample = apply_mask(seq, config.mask_prob, &mut rng);
                batch.masked_ids.push(sample.masked_tokens);
                batch.targets.push(seq.clone());
                batch.masks.push(sample.mask);
            }
            let (loss, grads) =
                loss_and_grads(params, &batch, teacher, Mode::Train { rng: &mut rng })?;
            optimizer.step(&mut params.data, &grads, &decay_mask);
            loss_sum += loss.total();
            batches += 1;
        }
        epoch_losses.push(loss_sum / batches as f64);
    }
    Ok(epoch_losses)
}

/// Fresh model trained over the shuffled concatenation of all sets.
pub fn train_iid(
    sets: &[Vec<Sequence>],
    config: &ModelConfig,
    vocab_size: usize,
    seed: u64,
) -> Result<(ModelParams, TrainHistory)> {
    let mut params = init_model(config, vocab_size, seed)?;
    let concat: Vec<Sequence> = sets.iter().flatten().cloned().collect();
    let losses = run_stage(&mut params, &concat, None, derive_seed(seed, "stage:0"))?;
    Ok((
        params,
        TrainHistory {
            stages: vec![losses],
        },
    ))
}

/// Continue optimizing the same parameters across successive yearly sets.
pub fn train_finetune(
    mut params: ModelParams,
    sets: &[Vec<Sequence>],
    seed: u64,
) -> Result<(ModelParams, TrainHistory)> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("finetune needs at least one set"));
    }
    let mut history = TrainHistory::default();
    for (stage, set) in sets.iter().enumerate() {
        let losses = run_stage(
            &mut params,
            set,
            None,
            derive_seed(seed, &format!("stage:{stage}")),
        )?;
        history.stages.push(losses);
    }
    Ok((params, history))
}

/// Sequential distillation: per set, reinitialize a same-sized student,
/// train it with `mlm + KL(teacher || student)` at masked positions, then
/// promote the student to teacher.
pub fn train_distill(
    teacher: ModelParams,
    sets: &[Vec<Sequence>],
    seed: u64,
) -> Result<(ModelParams, TrainHistory)> {
    if sets.is_empty() {
        return Err(Error::EmptyInput("distillation needs at least one set"));
    }
    let mut history = TrainHistory::default();
    let mut teacher = teacher;
    for (stage, set) in sets.iter().enumerate() {
        let mut student = init_model(
            &teacher.config,
            teacher.vocab_size,
            derive_seed(seed, &format!("student:{stage}")),
        )?;
        let losses = run_stage(
            &mut student,
            set,
            Some(&teacher),
            derive_seed(seed, &format!("stage:{stage}")),
        )?;
        history.stages.push(losses);
        teacher = student;
    }
    Ok((teacher, history))
}
