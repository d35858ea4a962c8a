use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::autodiff::{NodeId, Tape};
use crate::data::Triplet;
use crate::encoders::{EmbeddingVec, Encoder, TargetPayload, TargetSet, Variant};
use crate::error::{Error, Result};

use super::batch::{build_batches, payload_key};
use super::optim::{lr_schedule, AdamW};

/// Optimization hyperparameters. The defaults are the desk-scale recipe:
/// batch 64, 20 epochs, peak rate 3e-3 with 3% linear warmup and cosine
/// decay, no weight decay.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub seed: u64,
    pub batch_size: usize,
    pub epochs: usize,
    pub base_lr: f64,
    pub weight_decay: f64,
    pub warmup_ratio: f64,
    pub symmetric_loss: bool,
    pub min_temperature: f64,
}

impl TrainConfig {
    pub fn new(seed: u64) -> TrainConfig {
        TrainConfig {
            seed,
            batch_size: 64,
            epochs: 20,
            base_lr: 3e-3,
            weight_decay: 0.0,
            warmup_ratio: 0.03,
            symmetric_loss: false,
            min_temperature: 0.01,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::input("train_config", msg));
        if self.batch_size < 2 {
            return err(format!("batch_size {} below minimum 2", self.batch_size));
        }
        if self.epochs == 0 {
            return err("epochs must be at least 1".into());
        }
        if !(self.base_lr.is_finite() && self.base_lr > 0.0) {
            return err(format!("base_lr {} must be > 0", self.base_lr));
        }
        if !(self.weight_decay.is_finite() && self.weight_decay >= 0.0) {
            return err(format!("weight_decay {} must be >= 0", self.weight_decay));
        }
        if !(0.0..=1.0).contains(&self.warmup_ratio) {
            return err(format!("warmup_ratio {} outside [0, 1]", self.warmup_ratio));
        }
        if !(self.min_temperature.is_finite() && self.min_temperature > 0.0) {
            return err(format!("min_temperature {} must be > 0", self.min_temperature));
        }
        Ok(())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub step: usize,
    pub lr: f64,
    pub loss: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub steps: Vec<StepRecord>,
    pub epoch_mean_loss: Vec<f64>,
    pub batches_per_epoch: usize,
    pub final_temperature: f64,
}

/// Contrastive training over (image, instruction, output) triplets.
///
/// Target embeddings come from the frozen target encoders and are cached
/// per distinct payload up front; only the conditioned image encoder (and
/// its temperature) learns. Each batch builds one tape: the similarity
/// matrix between the batch's image embeddings and target embeddings is
/// scaled by the learnable inverse temperature and pushed through
/// diagonal-label cross entropy. Runs strictly single-threaded so results
/// never depend on the thread pool.
pub fn train(
    encoder: &Encoder,
    targets: &TargetSet,
    triplets: &[Triplet],
    config: &TrainConfig,
) -> Result<TrainReport> {
    config.validate()?;
    if triplets.len() < config.batch_size {
        return Err(Error::input(
            "train",
            format!(
                "{} triplets cannot fill one batch of {}",
                triplets.len(),
                config.batch_size
            ),
        ));
    }
    let embed_dim = encoder.config().embed_dim;

    // Frozen target embeddings, one per distinct payload.
    let mut target_cache: HashMap<Vec<u64>, EmbeddingVec> = HashMap::new();
    for t in triplets {
        let payload = TargetPayload::for_triplet(t);
        let key = payload_key(&payload);
        if !target_cache.contains_key(&key) {
            let emb = targets.encode(&payload)?;
            if emb.len() != embed_dim {
                return Err(Error::shape(
                    "train",
                    format!("target dim {} vs encoder dim {}", emb.len(), embed_dim),
                ));
            }
            target_cache.insert(key, emb);
        }
    }

    let batches_per_epoch = triplets.len() / config.batch_size;
    let total_steps = batches_per_epoch * config.epochs;
    let labels: Vec<usize> = (0..config.batch_size).collect();
    let min_log_temp = config.min_temperature.ln();

    let mut optimizer =
        AdamW::new(encoder.params().tensors().cloned().collect(), config.weight_decay);
    let mut steps = Vec::with_capacity(total_steps);
    let mut epoch_mean_loss = Vec::with_capacity(config.epochs);
    let mut last_finite = f64::NAN;
    let mut step = 0usize;

    for epoch in 0..config.epochs {
        let batches = build_batches(triplets, config.batch_size, config.seed, epoch as u64)?;
        let mut epoch_sum = 0.0;
        for batch in &batches {
            let lr = lr_schedule(config.base_lr, step, total_steps, config.warmup_ratio);

            let mut tape = Tape::new();
            let bound = encoder.bind(&mut tape)?;

            // Clip variant: one condition sub-graph per distinct
            // instruction in the batch, shared by its images.
            let mut condition_nodes: HashMap<Vec<u32>, NodeId> = HashMap::new();
            let mut image_rows = Vec::with_capacity(batch.indices.len());
            let mut target_data = Vec::with_capacity(batch.indices.len() * embed_dim);
            for &idx in &batch.indices {
                let t = &triplets[idx];
                let row = match encoder.config().variant {
                    Variant::Clip => {
                        let cond = match condition_nodes.get(&t.instruction) {
                            Some(&node) => node,
                            None => {
                                let node =
                                    encoder.condition_graph(&mut tape, &bound, &t.instruction)?;
                                condition_nodes.insert(t.instruction.clone(), node);
                                node
                            }
                        };
                        encoder.clip_image_graph(&mut tape, &bound, &t.image, cond)?
                    }
                    Variant::Mllm => {
                        encoder.mllm_image_graph(&mut tape, &bound, &t.image, &t.instruction)?
                    }
                };
                image_rows.push(row);
                let key = payload_key(&TargetPayload::for_triplet(t));
                target_data.extend_from_slice(target_cache[&key].values());
            }

            let queries = tape.concat_rows(&image_rows)?;
            let target_mat =
                tape.constant(batch.indices.len(), embed_dim, target_data)?;
            let sim = tape.matmul_nt(queries, target_mat)?;
            let log_temp = bound.id("log_temp")?;
            let neg_lt = tape.neg(log_temp)?;
            let inv_temp = tape.exp(neg_lt)?;
            let logits = tape.mul(sim, inv_temp)?;
            let mut loss = tape.cross_entropy(logits, &labels, 1.0)?;
            if config.symmetric_loss {
                let transposed = tape.transpose(logits)?;
                let reverse = tape.cross_entropy(transposed, &labels, 1.0)?;
                let sum = tape.add(loss, reverse)?;
                let half = tape.scalar_constant(0.5);
                loss = tape.mul(sum, half)?;
            }

            let loss_value = tape.value(loss)[0];
            if !loss_value.is_finite() {
                return Err(Error::Diverged { step, last_loss: last_finite });
            }
            last_finite = loss_value;

            tape.backward(loss)?;
            optimizer.step(lr)?;
            optimizer.zero_grads();
            encoder.log_temp().with_data_mut(|d| {
                if d[0] < min_log_temp {
                    d[0] = min_log_temp;
                }
            });

            steps.push(StepRecord { step, lr, loss: loss_value });
            epoch_sum += loss_value;
            step += 1;
        }
        epoch_mean_loss.push(epoch_sum / batches.len() as f64);
    }

    Ok(TrainReport {
        steps,
        epoch_mean_loss,
        batches_per_epoch,
        final_temperature: encoder.temperature(),
    })
}
