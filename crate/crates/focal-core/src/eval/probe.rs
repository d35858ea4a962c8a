use std::collections::BTreeMap;

use rand::seq::SliceRandom;

use crate::autodiff::{Tape, Tensor};
use crate::encoders::EmbeddingVec;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};
use crate::train::AdamW;

/// Learning rates swept by the probe. The stated range 1e-2 → 1e-4 in
/// 2.5e-3 steps does not land on 1e-4 exactly, so the endpoint replaces
/// the last uniform step.
pub const PROBE_LRS: [f64; 5] = [1e-2, 7.5e-3, 5e-3, 2.5e-3, 1e-4];

const PROBE_EPOCHS: usize = 100;

/// k-shot linear probe: samples `k_shot` items per class for training
/// (seeded), fits a single linear layer with softmax cross-entropy for
/// 100 full-batch epochs at each learning rate in [`PROBE_LRS`], and
/// returns the best test accuracy over the sweep. Features stay frozen;
/// everything is deterministic for a fixed seed.
pub fn linear_probe(
    features: &[EmbeddingVec],
    labels: &[u64],
    k_shot: usize,
    seed: u64,
) -> Result<f64> {
    if features.len() != labels.len() {
        return Err(Error::input(
            "probe",
            format!("{} features vs {} labels", features.len(), labels.len()),
        ));
    }
    if k_shot == 0 {
        return Err(Error::input("probe", "k_shot must be at least 1"));
    }
    let mut by_class: BTreeMap<u64, Vec<usize>> = BTreeMap::new();
    for (i, &label) in labels.iter().enumerate() {
        by_class.entry(label).or_default().push(i);
    }
    if by_class.len() < 2 {
        return Err(Error::input("probe", "need at least 2 classes"));
    }
    for (&label, items) in &by_class {
        if items.len() < k_shot + 1 {
            return Err(Error::input(
                "probe",
                format!(
                    "class {label} has {} items, needs {} for a {k_shot}-shot split",
                    items.len(),
                    k_shot + 1
                ),
            ));
        }
    }

    let dim = features[0].len();
    let classes = by_class.len();
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (&label, items) in &by_class {
        let mut shuffled = items.clone();
        shuffled.shuffle(&mut rng_for(seed, stream::PROBE, label));
        train_idx.extend(shuffled[..k_shot].iter().map(|&i| (i, label)));
        test_idx.extend(shuffled[k_shot..].iter().map(|&i| (i, label)));
    }
    // Class ids remapped to 0..C in ascending label order.
    let class_of: BTreeMap<u64, usize> =
        by_class.keys().enumerate().map(|(c, &label)| (label, c)).collect();

    let matrix = |idx: &[(usize, u64)]| -> Vec<f64> {
        idx.iter().flat_map(|&(i, _)| features[i].values().iter().copied()).collect()
    };
    let train_data = matrix(&train_idx);
    let train_labels: Vec<usize> = train_idx.iter().map(|&(_, l)| class_of[&l]).collect();

    let mut best = 0.0f64;
    for &lr in &PROBE_LRS {
        let weight = Tensor::zeros(&[classes, dim], true);
        let bias = Tensor::zeros(&[1, classes], true);
        let mut optimizer = AdamW::new(vec![weight.clone(), bias.clone()], 0.0);
        for _ in 0..PROBE_EPOCHS {
            let mut tape = Tape::new();
            let f = tape.constant(train_idx.len(), dim, train_data.clone())?;
            let w = tape.leaf(&weight)?;
            let b = tape.leaf(&bias)?;
            let scores = tape.matmul_nt(f, w)?;
            let logits = tape.add(scores, b)?;
            let loss = tape.cross_entropy(logits, &train_labels, 1.0)?;
            tape.backward(loss)?;
            optimizer.step(lr)?;
            optimizer.zero_grads();
        }

        let w = weight.data();
        let b = bias.data();
        let mut correct = 0usize;
        for &(i, label) in &test_idx {
            let f = features[i].values();
            let mut arg = 0usize;
            let mut top = f64::NEG_INFINITY;
            for c in 0..classes {
                let score =
                    b[c] + (0..dim).map(|d| w[c * dim + d] * f[d]).sum::<f64>();
                if score > top {
                    top = score;
                    arg = c;
                }
            }
            if arg == class_of[&label] {
                correct += 1;
            }
        }
        best = best.max(correct as f64 / test_idx.len() as f64);
    }
    Ok(best)
}
