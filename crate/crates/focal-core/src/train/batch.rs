use std::collections::HashSet;

use rand::seq::SliceRandom;

use crate::data::Triplet;
use crate::encoders::TargetPayload;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

/// Indices into the triplet list making up one training step.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Batch {
    pub indices: Vec<usize>,
}

/// Hashable identity of a triplet's target, used to keep batch targets
/// distinct: the token sequence for text targets, the exact RGB bits for
/// numeric ones.
pub(crate) fn payload_key(payload: &TargetPayload) -> Vec<u64> {
    match payload {
        TargetPayload::Text(tokens) => {
            let mut key = vec![0u64];
            key.extend(tokens.iter().map(|&t| t as u64));
            key
        }
        TargetPayload::Rgb(rgb) => {
            let mut key = vec![1u64];
            key.extend(rgb.iter().map(|v| v.to_bits()));
            key
        }
    }
}

/// Build one epoch's batches.
///
/// Triplets are grouped by image (so an image's different conditions land
/// near each other, where their targets are distinct by construction), the
/// groups are shuffled with the epoch's seed stream, and the flattened
/// order is cut into full batches; a trailing partial batch is dropped.
/// A single repair pass then swaps duplicate targets within a batch for
/// later triplets not yet represented in it — best effort, since small
/// label spaces can have fewer distinct targets than the batch size.
pub fn build_batches(
    triplets: &[Triplet],
    batch_size: usize,
    seed: u64,
    epoch: u64,
) -> Result<Vec<Batch>> {
    if batch_size < 2 {
        return Err(Error::input("batch", format!("batch_size {batch_size} below minimum 2")));
    }
    if triplets.len() < batch_size {
        return Err(Error::input(
            "batch",
            format!("{} triplets cannot fill one batch of {}", triplets.len(), batch_size),
        ));
    }

    // Group indices by image, preserving triplet order inside a group.
    let max_image = triplets.iter().map(|t| t.image_index).max().unwrap_or(0);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); max_image + 1];
    for (i, t) in triplets.iter().enumerate() {
        groups[t.image_index].push(i);
    }
    groups.retain(|g| !g.is_empty());

    let mut rng = rng_for(seed, stream::BATCH, epoch);
    groups.shuffle(&mut rng);
    let mut order: Vec<usize> = groups.into_iter().flatten().collect();

    let keys: Vec<Vec<u64>> =
        triplets.iter().map(|t| payload_key(&TargetPayload::for_triplet(t))).collect();

    // Repair pass: walk each batch window, swap duplicates with the first
    // later triplet whose target the window does not hold yet.
    let n_batches = order.len() / batch_size;
    for b in 0..n_batches {
        let start = b * batch_size;
        let end = start + batch_size;
        let mut seen: HashSet<&[u64]> = HashSet::with_capacity(batch_size);
        for i in start..end {
            if seen.insert(&keys[order[i]]) {
                continue;
            }
            if let Some(j) = (end..order.len()).find(|&j| !seen.contains(&keys[order[j]][..])) {
                order.swap(i, j);
                seen.insert(&keys[order[i]]);
            }
        }
    }

    Ok(order
        .chunks_exact(batch_size)
        .map(|chunk| Batch { indices: chunk.to_vec() })
        .collect())
}
