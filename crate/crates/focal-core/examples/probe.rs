//! Scratch diagnostics: first-step loss calibration at default scale.

use focal_core::data::{ConditionTag, Dataset};
use focal_core::encoders::{Encoder, EncoderConfig, TargetSet, Variant};
use focal_core::train::{train, TrainConfig};

fn main() {
    let data = Dataset::discrete(
        0,
        50,
        32,
        32,
        &[ConditionTag::Color, ConditionTag::Shape, ConditionTag::Both],
    )
    .unwrap();
    let triplets = data.triplets().unwrap();
    println!("triplets: {}", triplets.len());
    let targets = TargetSet::new(data.vocab.len(), 64, false).unwrap();

    // Pairwise-cosine spread of the distinct frozen text targets.
    let mut seen = std::collections::HashSet::new();
    let mut embs = Vec::new();
    for t in &triplets {
        if seen.insert(t.output.clone()) {
            embs.push(
                targets
                    .encode(&focal_core::encoders::TargetPayload::Text(t.output.clone()))
                    .unwrap(),
            );
        }
    }
    let mut cosines = Vec::new();
    for i in 0..embs.len() {
        for j in i + 1..embs.len() {
            cosines.push(embs[i].dot(&embs[j]));
        }
    }
    let mean = cosines.iter().sum::<f64>() / cosines.len() as f64;
    let min = cosines.iter().cloned().fold(f64::INFINITY, f64::min);
    let max = cosines.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    println!(
        "{} distinct targets, pairwise cos mean {mean:.4} min {min:.4} max {max:.4}",
        embs.len()
    );

    for seed in 0..3u64 {
        let config = EncoderConfig::small(Variant::Clip, data.vocab.len());
        let encoder = Encoder::init(config, seed).unwrap();
        let t0 = std::time::Instant::now();
        let report = train(&encoder, &targets, &triplets, &TrainConfig::new(seed)).unwrap();
        println!(
            "seed {seed}: first-step {:.4}, epoch means {:?}, drop {:.3}, temp {:.4}, {:.0}s",
            report.steps[0].loss,
            report
                .epoch_mean_loss
                .iter()
                .map(|l| (l * 1e3).round() / 1e3)
                .collect::<Vec<_>>(),
            report.epoch_mean_loss.last().unwrap() / report.epoch_mean_loss[0],
            report.final_temperature,
            t0.elapsed().as_secs_f64(),
        );
    }
}
