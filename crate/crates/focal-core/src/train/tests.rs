use std::collections::HashSet;

use rand::Rng;
use rayon::prelude::*;

use crate::autodiff::{Tape, Tensor};
use crate::data::{ConditionTag, Dataset};
use crate::encoders::{EmbeddingVec, Encoder, EncoderConfig, TargetSet, Variant};
use crate::error::Error;
use crate::rng::{rng_for, stream};

use super::*;

fn unit(values: Vec<f64>) -> EmbeddingVec {
    let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
    EmbeddingVec::from_unit(values.into_iter().map(|v| v / norm).collect()).unwrap()
}

fn random_units(seed: u64, count: usize, dim: usize) -> Vec<EmbeddingVec> {
    let mut rng = rng_for(seed, stream::BASELINE, 7);
    let normal = rand_distr::StandardNormal;
    (0..count).map(|_| unit((0..dim).map(|_| rng.sample(normal)).collect())).collect()
}

fn tiny_encoder(vocab_size: usize, variant: Variant, seed: u64) -> Encoder {
    let config = EncoderConfig {
        variant,
        embed_dim: 16,
        num_layers: 1,
        num_heads: 2,
        mlp_ratio: 2,
        patch_size: 8,
        image_width: 32,
        image_height: 32,
        max_seq_len: 32,
        vocab_size,
    };
    Encoder::init(config, seed).unwrap()
}

// ── batching ────────────────────────────────────────────────────────────

#[test]
fn batches_cover_all_triplets_once() {
    let data = Dataset::discrete(
        3,
        2,
        32,
        32,
        &[ConditionTag::Color, ConditionTag::Shape, ConditionTag::Both],
    )
    .unwrap();
    let triplets = data.triplets().unwrap();
    assert_eq!(triplets.len(), 96);
    let batches = build_batches(&triplets, 16, 0, 0).unwrap();
    assert_eq!(batches.len(), 6);
    let mut seen = HashSet::new();
    for b in &batches {
        assert_eq!(b.indices.len(), 16);
        for &i in &b.indices {
            assert!(i < 96);
            assert!(seen.insert(i), "index {i} appears twice");
        }
    }
    assert_eq!(seen.len(), 96);

    // A batch size that does not divide the count drops the tail.
    let partial = build_batches(&triplets, 36, 0, 0).unwrap();
    assert_eq!(partial.len(), 2);
}

#[test]
fn batches_are_seeded_per_epoch() {
    let data = Dataset::discrete(1, 2, 32, 32, &[ConditionTag::Color, ConditionTag::Shape])
        .unwrap();
    let triplets = data.triplets().unwrap();
    let a = build_batches(&triplets, 8, 7, 0).unwrap();
    let b = build_batches(&triplets, 8, 7, 0).unwrap();
    assert_eq!(a, b, "same seed and epoch must batch identically");
    let other_epoch = build_batches(&triplets, 8, 7, 1).unwrap();
    assert_ne!(a, other_epoch, "epochs must reshuffle");
    let other_seed = build_batches(&triplets, 8, 8, 0).unwrap();
    assert_ne!(a, other_seed, "seeds must reshuffle");
}

#[test]
fn batch_repair_separates_duplicate_targets() {
    // 64 color-condition triplets over only 4 distinct outputs, 16 each:
    // with batch size 4 a full repair is always feasible, and the counting
    // works out so every batch ends up with all four colors.
    let data = Dataset::discrete(1, 4, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    assert_eq!(triplets.len(), 64);
    for epoch in 0..4 {
        let batches = build_batches(&triplets, 4, 11, epoch).unwrap();
        assert_eq!(batches.len(), 16);
        for b in &batches {
            let outputs: HashSet<&[u32]> =
                b.indices.iter().map(|&i| triplets[i].output.as_slice()).collect();
            assert_eq!(outputs.len(), 4, "epoch {epoch}: batch still has duplicate targets");
        }
    }
}

#[test]
fn batches_reject_bad_sizes() {
    let data = Dataset::discrete(0, 1, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    assert!(build_batches(&triplets, 1, 0, 0).is_err());
    assert!(build_batches(&triplets, triplets.len() + 1, 0, 0).is_err());
}

// ── similarity and loss ─────────────────────────────────────────────────

#[test]
fn similarity_matrix_matches_explicit_loops() {
    let queries = random_units(1, 5, 6);
    let targets = random_units(2, 7, 6);
    let sim = similarity_matrix(&queries, &targets).unwrap();
    assert_eq!((sim.rows, sim.cols), (5, 7));
    for (i, q) in queries.iter().enumerate() {
        for (j, t) in targets.iter().enumerate() {
            let manual: f64 =
                q.values().iter().zip(t.values()).map(|(a, b)| a * b).sum();
            assert!((sim.at(i, j) - manual).abs() < 1e-12);
        }
    }

    let skinny = random_units(3, 2, 4);
    assert!(similarity_matrix(&queries, &skinny).is_err(), "dim mismatch");
    assert!(similarity_matrix(&[], &targets).is_err());
}

#[test]
fn contrastive_loss_closed_forms() {
    let eye2 = SimilarityMatrix { rows: 2, cols: 2, data: vec![1.0, 0.0, 0.0, 1.0] };
    let expected = (1.0 + (-1.0f64).exp()).ln();
    assert!((contrastive_loss(&eye2, 1.0).unwrap() - expected).abs() < 1e-15);

    // A constant matrix is maximally confused at any temperature: ln B.
    let flat = SimilarityMatrix { rows: 5, cols: 5, data: vec![0.37; 25] };
    assert!((contrastive_loss(&flat, 0.3).unwrap() - 5.0f64.ln()).abs() < 1e-12);

    // A sharp temperature on a clean diagonal drives the loss to zero.
    let eye4 = SimilarityMatrix {
        rows: 4,
        cols: 4,
        data: (0..16).map(|k| if k % 5 == 0 { 1.0 } else { 0.0 }).collect(),
    };
    assert!(contrastive_loss(&eye4, 0.01).unwrap() < 1e-40);
    assert!(contrastive_loss(&eye4, 0.01).unwrap() >= 0.0);

    let rect = SimilarityMatrix { rows: 2, cols: 3, data: vec![0.0; 6] };
    assert!(contrastive_loss(&rect, 1.0).is_err());
    assert!(contrastive_loss(&eye2, 0.0).is_err());
}

#[test]
fn random_unit_vector_loss_concentrates_at_ln_b() {
    // Independent uniform unit vectors in d = 64 have dot products of
    // order 1/√d, so at unit temperature the softmax is near uniform and
    // the loss lands within ln B ± the small lse bump of σ²/2 ≈ 0.008.
    let b = 64;
    for trial in 0..5 {
        let queries = random_units(100 + trial, b, 64);
        let targets = random_units(200 + trial, b, 64);
        let sim = similarity_matrix(&queries, &targets).unwrap();
        let loss = contrastive_loss(&sim, 1.0).unwrap();
        assert!(
            (loss - (b as f64).ln()).abs() < 0.1,
            "trial {trial}: loss {loss} far from ln {b}"
        );
    }
}

#[test]
fn contrastive_loss_is_nonnegative_and_permutation_invariant() {
    let mut rng = rng_for(5, stream::BASELINE, 0);
    for _ in 0..20 {
        let n = 6;
        let data: Vec<f64> = (0..n * n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect();
        let sim = SimilarityMatrix { rows: n, cols: n, data: data.clone() };
        let loss = contrastive_loss(&sim, 0.25).unwrap();
        assert!(loss >= 0.0, "diagonal-label loss is a positive mean of lse - s_ii/τ");

        // Permute queries and targets together: the pairing is preserved,
        // so the loss cannot change.
        let mut perm: Vec<usize> = (0..n).collect();
        for i in (1..n).rev() {
            perm.swap(i, rng.gen_range(0..=i));
        }
        let mut permuted = vec![0.0; n * n];
        for i in 0..n {
            for j in 0..n {
                permuted[i * n + j] = data[perm[i] * n + perm[j]];
            }
        }
        let psim = SimilarityMatrix { rows: n, cols: n, data: permuted };
        assert!((contrastive_loss(&psim, 0.25).unwrap() - loss).abs() < 1e-12);
    }
}

#[test]
fn on_tape_loss_gradient_rows_sum_to_zero() {
    let mut rng = rng_for(9, stream::BASELINE, 0);
    let n = 4;
    let sim = Tensor::new(
        &[n, n],
        (0..n * n).map(|_| rng.gen::<f64>() * 2.0 - 1.0).collect(),
        true,
    )
    .unwrap();
    let log_temp = Tensor::scalar(0.07f64.ln(), true);

    let mut tape = Tape::new();
    let s = tape.leaf(&sim).unwrap();
    let lt = tape.leaf(&log_temp).unwrap();
    let neg = tape.neg(lt).unwrap();
    let inv = tape.exp(neg).unwrap();
    let logits = tape.mul(s, inv).unwrap();
    let labels: Vec<usize> = (0..n).collect();
    let loss = tape.cross_entropy(logits, &labels, 1.0).unwrap();
    tape.backward(loss).unwrap();

    let grad = sim.grad().unwrap();
    for i in 0..n {
        let row_sum: f64 = grad[i * n..(i + 1) * n].iter().sum();
        assert!(row_sum.abs() < 1e-12, "row {i} gradient sums to {row_sum}");
    }
    let temp_grad = log_temp.grad().unwrap();
    assert!(temp_grad[0].is_finite());
    assert!(temp_grad[0] != 0.0, "temperature must receive gradient");
}

// ── optimizer and schedule ──────────────────────────────────────────────

#[test]
fn adamw_first_step_matches_the_closed_form() {
    let p = Tensor::new(&[1, 3], vec![1.0, -2.0, 0.5], true).unwrap();
    p.accumulate_grad(&[0.5, -1.5, 0.0]);
    let mut opt = AdamW::new(vec![p.clone()], 0.1);
    opt.step(0.01).unwrap();
    // First step: m̂ = g, v̂ = g², so the update is
    // lr·g/(|g| + ε) + lr·λ·p.
    let expect = |p0: f64, g: f64| {
        p0 - 0.01 * g / (g.abs() + 1e-8) - 0.01 * 0.1 * p0
    };
    let got = p.data();
    for (i, &p0) in [1.0, -2.0, 0.5].iter().enumerate() {
        let g = [0.5, -1.5, 0.0][i];
        assert!((got[i] - expect(p0, g)).abs() < 1e-12, "coordinate {i}");
    }
    assert_eq!(opt.step_count(), 1);
}

#[test]
fn adamw_zero_gradients_apply_only_decay() {
    let p = Tensor::new(&[2, 1], vec![3.0, -4.0], true).unwrap();
    p.ensure_grad();
    let mut opt = AdamW::new(vec![p.clone()], 0.5);
    opt.step(0.1).unwrap();
    let got = p.data();
    assert!((got[0] - 3.0 * (1.0 - 0.05)).abs() < 1e-15);
    assert!((got[1] - -4.0 * (1.0 - 0.05)).abs() < 1e-15);

    // And with no decay either, the step is an exact no-op.
    let q = Tensor::new(&[1, 2], vec![1.25, -0.75], true).unwrap();
    q.ensure_grad();
    let mut opt = AdamW::new(vec![q.clone()], 0.0);
    opt.step(0.1).unwrap();
    assert_eq!(q.data(), vec![1.25, -0.75]);
}

#[test]
fn adamw_rejects_bad_inputs() {
    let p = Tensor::new(&[1, 1], vec![1.0], true).unwrap();
    let mut opt = AdamW::new(vec![p.clone()], 0.0);
    assert!(opt.step(0.1).is_err(), "missing gradient");
    p.accumulate_grad(&[f64::NAN]);
    assert!(opt.step(0.1).is_err(), "non-finite gradient");
    p.zero_grad();
    p.accumulate_grad(&[1.0]);
    assert!(opt.step(f64::NAN).is_err(), "non-finite learning rate");
}

#[test]
fn lr_schedule_warms_up_then_decays_to_zero() {
    let base = 3e-3;
    // 100 steps at 3% warmup: ceil(3) = 3 warmup steps.
    assert_eq!(lr_schedule(base, 0, 100, 0.03), 0.0);
    assert!((lr_schedule(base, 1, 100, 0.03) - base / 3.0).abs() < 1e-18);
    assert!((lr_schedule(base, 2, 100, 0.03) - 2.0 * base / 3.0).abs() < 1e-18);
    assert!((lr_schedule(base, 3, 100, 0.03) - base).abs() < 1e-18, "peak right after warmup");
    assert!(lr_schedule(base, 99, 100, 0.03).abs() < 1e-18, "ends at zero");
    for step in 3..99 {
        let here = lr_schedule(base, step, 100, 0.03);
        let next = lr_schedule(base, step + 1, 100, 0.03);
        assert!(next <= here + 1e-18, "cosine decay must not increase");
        assert!((0.0..=base).contains(&here));
    }
    // Degenerate schedules still train.
    assert_eq!(lr_schedule(base, 0, 1, 0.03), base);
    assert_eq!(lr_schedule(base, 1, 2, 0.03), base);
}

// ── the training loop ───────────────────────────────────────────────────

fn smoke_config(seed: u64) -> TrainConfig {
    TrainConfig {
        batch_size: 8,
        epochs: 3,
        ..TrainConfig::new(seed)
    }
}

#[test]
fn training_reduces_the_loss_and_is_deterministic() {
    let data = Dataset::discrete(0, 1, 32, 32, &[ConditionTag::Color, ConditionTag::Shape])
        .unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 16, false).unwrap();

    let run = |seed: u64| {
        let encoder = tiny_encoder(data.vocab.len(), Variant::Clip, seed);
        let report = train(&encoder, &targets, &triplets, &smoke_config(seed)).unwrap();
        (encoder, report)
    };
    let (enc_a, report_a) = run(0);
    let (enc_b, report_b) = run(0);

    assert_eq!(report_a, report_b, "same seed must reproduce the loss curve exactly");
    for ((name, ta), (_, tb)) in enc_a.params().iter().zip(enc_b.params().iter()) {
        assert_eq!(ta.data(), tb.data(), "{name} differs between identical runs");
    }

    assert_eq!(report_a.batches_per_epoch, 4);
    assert_eq!(report_a.steps.len(), 12);
    assert_eq!(report_a.epoch_mean_loss.len(), 3);
    for (i, rec) in report_a.steps.iter().enumerate() {
        assert_eq!(rec.step, i);
        assert!(rec.loss.is_finite());
    }
    // Batch of 8 starts near maximal confusion. The first loss sits a bit
    // above ln B: with the 0.07 init temperature, the residual spread of
    // the target embeddings inflates the log-sum-exp by roughly
    // spread²/(2·d·τ²), which at d = 16 can reach ~1.5.
    let first_loss = report_a.steps[0].loss;
    assert!(first_loss > 0.6 * 8.0f64.ln(), "suspiciously low first loss {first_loss}");
    assert!(first_loss < 8.0f64.ln() + 2.0, "suspiciously high first loss {first_loss}");
    let first = report_a.epoch_mean_loss[0];
    let last = *report_a.epoch_mean_loss.last().unwrap();
    assert!(last < first, "loss should drop: first epoch {first}, last {last}");
}

#[test]
fn training_leaves_target_encoders_untouched() {
    let data = Dataset::continuous(2, 24, 32, 32, &[ConditionTag::Continuous, ConditionTag::Shape])
        .unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 16, true).unwrap();
    let before: Vec<Vec<f64>> = targets
        .text
        .params()
        .tensors()
        .chain(targets.numeric.as_ref().unwrap().params().tensors())
        .map(Tensor::data)
        .collect();

    let encoder = tiny_encoder(data.vocab.len(), Variant::Clip, 1);
    let config = TrainConfig { batch_size: 8, epochs: 1, ..TrainConfig::new(1) };
    train(&encoder, &targets, &triplets, &config).unwrap();

    let after: Vec<Vec<f64>> = targets
        .text
        .params()
        .tensors()
        .chain(targets.numeric.as_ref().unwrap().params().tensors())
        .map(Tensor::data)
        .collect();
    assert_eq!(before, after, "frozen targets must stay frozen");
}

#[test]
fn training_runs_the_mllm_variant() {
    let data = Dataset::discrete(4, 1, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 16, false).unwrap();
    let encoder = tiny_encoder(data.vocab.len(), Variant::Mllm, 3);
    let config = TrainConfig { batch_size: 8, epochs: 1, ..TrainConfig::new(3) };
    let report = train(&encoder, &targets, &triplets, &config).unwrap();
    assert_eq!(report.steps.len(), 2);
    assert!(report.steps.iter().all(|s| s.loss.is_finite()));
}

#[test]
fn temperature_is_clamped_from_below() {
    let data = Dataset::discrete(0, 1, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 16, false).unwrap();
    let encoder = tiny_encoder(data.vocab.len(), Variant::Clip, 0);
    // A floor above the 0.07 init must bind immediately and hold.
    let config = TrainConfig {
        batch_size: 8,
        epochs: 1,
        min_temperature: 0.5,
        ..TrainConfig::new(0)
    };
    let report = train(&encoder, &targets, &triplets, &config).unwrap();
    assert!(encoder.temperature() >= 0.5 - 1e-12);
    assert_eq!(report.final_temperature, encoder.temperature());
}

#[test]
fn train_rejects_bad_configs() {
    let data = Dataset::discrete(0, 1, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 16, false).unwrap();
    let encoder = tiny_encoder(data.vocab.len(), Variant::Clip, 0);

    for config in [
        TrainConfig { batch_size: 1, ..TrainConfig::new(0) },
        TrainConfig { epochs: 0, ..TrainConfig::new(0) },
        TrainConfig { base_lr: 0.0, ..TrainConfig::new(0) },
        TrainConfig { base_lr: f64::NAN, ..TrainConfig::new(0) },
        TrainConfig { warmup_ratio: 1.5, ..TrainConfig::new(0) },
        TrainConfig { min_temperature: 0.0, ..TrainConfig::new(0) },
        TrainConfig { batch_size: triplets.len() + 1, ..TrainConfig::new(0) },
    ] {
        assert!(train(&encoder, &targets, &triplets, &config).is_err());
    }
}

#[test]
fn non_finite_losses_surface_as_divergence() {
    let data = Dataset::discrete(0, 1, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 16, false).unwrap();
    let encoder = tiny_encoder(data.vocab.len(), Variant::Clip, 0);
    encoder
        .params()
        .get("img.proj")
        .unwrap()
        .with_data_mut(|d| d[0] = f64::NAN);

    let err = train(&encoder, &targets, &triplets, &smoke_config(0)).unwrap_err();
    assert!(matches!(err, Error::Diverged { step: 0, .. }), "got: {err}");
    assert!(err.to_string().contains("diverged"));
}

// Manual tuning harness for the frozen-text target geometry; not part of
// the suite. FOCAL_SWEEP=static prints spread/separation stats per
// (seed, std, layers); FOCAL_SWEEP=train:SEED,STD,LAYERS[;...] runs the
// full default schedule per candidate.
#[test]
#[ignore]
fn tuning_sweep() {
    use crate::data::ConditionTag::{Both, Color, Shape};
    use crate::encoders::TargetEncoder;

    let data = Dataset::discrete(0, 50, 32, 32, &[Color, Shape, Both]).unwrap();
    let triplets = data.triplets().unwrap();
    let mut outputs = Vec::new();
    let mut seen = HashSet::new();
    for t in &triplets {
        if seen.insert(t.output.clone()) {
            outputs.push(t.output.clone());
        }
    }
    println!("{} distinct outputs", outputs.len());

    let stats = |enc: &TargetEncoder| {
        let embs: Vec<EmbeddingVec> = outputs
            .iter()
            .map(|o| enc.encode(&crate::encoders::TargetPayload::Text(o.clone())).unwrap())
            .collect();
        let n = embs.len();
        let dim = embs[0].len();
        let mut mean = vec![0.0; dim];
        for e in &embs {
            for (m, v) in mean.iter_mut().zip(e.values()) {
                *m += v / n as f64;
            }
        }
        let spread = 1.0 - mean.iter().map(|m| m * m).sum::<f64>();
        let mut min_cos: f64 = 1.0;
        let mut max_cos: f64 = -1.0;
        for i in 0..n {
            for j in i + 1..n {
                let c = embs[i].dot(&embs[j]);
                min_cos = min_cos.min(c);
                max_cos = max_cos.max(c);
            }
        }
        (spread, min_cos, max_cos)
    };

    let spec = std::env::var("FOCAL_SWEEP").unwrap_or_else(|_| "scan:2:0-9:1.0".into());

    // floor — the duplicate-target lower bound actually attainable by the
    // batcher's output: mean over rows of ln(in-batch payload multiplicity).
    if spec == "floor" {
        for epoch in [0u64, 9, 19] {
            let batches = build_batches(&triplets, 64, 0, epoch).unwrap();
            let mut total = 0.0;
            let mut rows = 0usize;
            let mut worst: f64 = 0.0;
            for batch in &batches {
                let mut floor = 0.0;
                for &i in &batch.indices {
                    let m = batch
                        .indices
                        .iter()
                        .filter(|&&j| triplets[j].output == triplets[i].output)
                        .count();
                    floor += (m as f64).ln();
                }
                worst = worst.max(floor / batch.indices.len() as f64);
                total += floor;
                rows += batch.indices.len();
            }
            println!(
                "epoch {epoch}: mean floor {:.4} over {} batches (worst batch {:.4})",
                total / rows as f64,
                batches.len(),
                worst,
            );
        }
        return;
    }

    // scan:<layers,...>:<seed_start-seed_end>:<std> — static geometry plus
    // the exact first-batch loss at encoder seed 0, no training steps.
    if let Some(grid) = spec.strip_prefix("scan:") {
        let parts: Vec<&str> = grid.split(':').collect();
        let layer_list: Vec<usize> =
            parts[0].split(',').map(|l| l.parse().unwrap()).collect();
        let (lo, hi) = parts[1].split_once('-').unwrap();
        let seeds: std::ops::RangeInclusive<u64> =
            lo.parse().unwrap()..=hi.parse().unwrap();
        let std: f64 = parts[2].parse().unwrap();

        let encoder =
            Encoder::init(EncoderConfig::small(Variant::Clip, data.vocab.len()), 0).unwrap();
        let batch = &build_batches(&triplets, 64, 0, 0).unwrap()[0];
        let queries: Vec<EmbeddingVec> = batch
            .indices
            .iter()
            .map(|&i| {
                let t = &triplets[i];
                encoder.embed_image(&t.image, &t.instruction).unwrap()
            })
            .collect();
        let combos: Vec<(usize, u64)> = layer_list
            .iter()
            .flat_map(|&l| seeds.clone().map(move |s| (l, s)))
            .collect();
        let mut rows: Vec<(f64, String)> = combos
            .par_iter()
            .map(|&(layers, seed)| {
                let enc =
                    TargetEncoder::frozen_text_with(data.vocab.len(), 64, seed, std, layers)
                        .unwrap();
                let (spread, min_cos, max_cos) = stats(&enc);
                let targets_mat: Vec<EmbeddingVec> = batch
                    .indices
                    .iter()
                    .map(|&i| {
                        enc.encode(&crate::encoders::TargetPayload::Text(
                            triplets[i].output.clone(),
                        ))
                        .unwrap()
                    })
                    .collect();
                let sim = similarity_matrix(&queries, &targets_mat).unwrap();
                let first = contrastive_loss(&sim, 0.07).unwrap();
                let line = format!(
                    "layers {layers} seed {seed} std {std}: first {first:.4} \
                     (bump {:+.3}) spread {spread:.4} cos [{min_cos:.4},{max_cos:.4}]",
                    first - 64.0f64.ln(),
                );
                (max_cos, line)
            })
            .collect();
        rows.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        for (_, line) in rows {
            println!("{line}");
        }
        return;
    }

    // contgeo / cont:<bandwidth>,<fourier_seed>;... — numeric-target
    // geometry alone, or geometry plus full default-schedule trains on
    // continuous datasets at seeds 0..3.
    let geometry_only = spec.strip_prefix("contgeo:");
    if let Some(list) = geometry_only.or_else(|| spec.strip_prefix("cont:")) {
        use crate::data::ConditionTag::Continuous;
        use crate::eval::{evaluate_continuous, spearman};
        use rand::Rng;

        for cand in list.split(';') {
            let (bw, fseed) = cand.split_once(',').unwrap();
            let (bw, fseed) = (bw.parse::<f64>().unwrap(), fseed.parse::<u64>().unwrap());
            let numeric = TargetEncoder::numeric_color_with(64, fseed, bw).unwrap();

            let mut rng = rng_for(9, crate::rng::stream::BASELINE, 99);
            let mut pair = || {
                let rgb = [rng.gen::<f64>(), rng.gen(), rng.gen()];
                (numeric.encode(&crate::encoders::TargetPayload::Rgb(rgb)).unwrap(), rgb)
            };
            let (mut cosines, mut neg_dists, mut min_cos) = (Vec::new(), Vec::new(), 1.0f64);
            for _ in 0..1000 {
                let (ea, a) = pair();
                let (eb, b) = pair();
                let c = ea.dot(&eb);
                min_cos = min_cos.min(c);
                cosines.push(c);
                neg_dists
                    .push(-a.iter().zip(&b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt());
            }
            let target_rho = spearman(&cosines, &neg_dists).unwrap();
            println!("bw {bw} fseed {fseed}: target rho {target_rho:.4} min cos {min_cos:.4}");
            if geometry_only.is_some() {
                continue;
            }

            let (mut gaps, mut conds) = (Vec::new(), Vec::new());
            for s in 0..3u64 {
                let data = Dataset::continuous(s, 800, 32, 32, &[Continuous, Shape]).unwrap();
                let triplets = data.triplets().unwrap();
                let targets = TargetSet {
                    text: TargetEncoder::frozen_text(data.vocab.len(), 64).unwrap(),
                    numeric: Some(TargetEncoder::numeric_color_with(64, fseed, bw).unwrap()),
                };
                let encoder =
                    Encoder::init(EncoderConfig::small(Variant::Clip, data.vocab.len()), s)
                        .unwrap();
                let report = train(&encoder, &targets, &triplets, &TrainConfig::new(s)).unwrap();
                let section = evaluate_continuous(&encoder, &data).unwrap();
                let gap = section.conditional_rho - section.control_rho;
                println!(
                    "  seed {s}: cond {:.4} control {:.4} gap {gap:+.4} \
                     (loss {:.4} -> {:.4}, temp {:.4})",
                    section.conditional_rho,
                    section.control_rho,
                    report.epoch_mean_loss[0],
                    report.epoch_mean_loss.last().unwrap(),
                    report.final_temperature,
                );
                gaps.push(gap);
                conds.push(section.conditional_rho);
            }
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            println!(
                "  => mean cond {:.4} mean gap {:+.4}",
                mean(&conds),
                mean(&gaps),
            );
        }
        return;
    }

    for cand in spec.trim_start_matches("train:").split(';') {
        let parts: Vec<&str> = cand.split(',').collect();
        let (seed, std, layers) = (
            parts[0].parse::<u64>().unwrap(),
            parts[1].parse::<f64>().unwrap(),
            parts[2].parse::<usize>().unwrap(),
        );
        let text =
            TargetEncoder::frozen_text_with(data.vocab.len(), 64, seed, std, layers).unwrap();
        let (spread, min_cos, max_cos) = stats(&text);
        let targets = TargetSet { text, numeric: None };
        let encoder = Encoder::init(EncoderConfig::small(Variant::Clip, data.vocab.len()), 0)
            .unwrap();
        let t0 = std::time::Instant::now();
        let report = train(&encoder, &targets, &triplets, &TrainConfig::new(0)).unwrap();
        let ratio = report.epoch_mean_loss.last().unwrap() / report.epoch_mean_loss[0];
        println!(
            "seed {seed} std {std} layers {layers}: spread {spread:.4} cos [{min_cos:.4},{max_cos:.4}] \
             first-step {:.4} first-epoch {:.4} final {:.4} ratio {ratio:.3} temp {:.4} {:.0}s",
            report.steps[0].loss,
            report.epoch_mean_loss[0],
            report.epoch_mean_loss.last().unwrap(),
            report.final_temperature,
            t0.elapsed().as_secs_f64(),
        );
    }
}

#[test]
fn target_dim_must_match_the_encoder() {
    let data = Dataset::discrete(0, 1, 32, 32, &[ConditionTag::Color]).unwrap();
    let triplets = data.triplets().unwrap();
    let targets = TargetSet::new(data.vocab.len(), 32, false).unwrap();
    let encoder = tiny_encoder(data.vocab.len(), Variant::Clip, 0);
    let err = train(&encoder, &targets, &triplets, &smoke_config(0)).unwrap_err();
    assert!(err.to_string().contains("dim"), "got: {err}");
}
