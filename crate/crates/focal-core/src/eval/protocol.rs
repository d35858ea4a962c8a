use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{
    instruction_for, tokenize, ColorName, ConditionTag, DataKind, Dataset, ShapeKind, ShapeSpec,
    NEUTRAL_INSTRUCTION,
};
use crate::encoders::{EmbeddingVec, Encoder, Variant};
use crate::error::{Error, Result};

use super::metrics::{mean_ap, random_baseline_map, scaled_map, spearman, RetrievalTask};
use super::probe::linear_probe;

/// Shuffle count behind every random-baseline mAP estimate.
pub const BASELINE_SHUFFLES: usize = 100;

/// Retrieval numbers for one embedding set on one labeling.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RetrievalScores {
    pub map: f64,
    pub scaled_map: f64,
    pub evaluated: usize,
    pub skipped: usize,
    /// Per-query APs (gallery order; None = skipped). Exported as CSV by
    /// the CLI, not serialized into the report itself.
    #[serde(skip)]
    pub per_query: Vec<Option<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionResult {
    pub condition: ConditionTag,
    pub random_baseline: f64,
    pub conditional: RetrievalScores,
    pub control: RetrievalScores,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionsSection {
    pub per_condition: Vec<ConditionResult>,
    pub conditional_average: f64,
    pub control_average: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ContinuousSection {
    pub conditional_rho: f64,
    pub control_rho: f64,
    pub evaluated: usize,
    pub conditional_skipped: usize,
    pub control_skipped: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeEntry {
    pub k_shot: usize,
    pub conditional_accuracy: f64,
    pub control_accuracy: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProbeSection {
    pub classes: usize,
    pub entries: Vec<ProbeEntry>,
}

/// Everything one `eval` invocation measured. Serialization carries no
/// paths or timestamps, so identical runs produce identical bytes.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub version: u32,
    pub variant: Variant,
    pub dataset_kind: DataKind,
    pub dataset_seed: u64,
    pub n_images: usize,
    pub eval_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub conditions: Option<ConditionsSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub continuous: Option<ContinuousSection>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub probe: Option<ProbeSection>,
}

pub const REPORT_VERSION: u32 = 1;

/// Embed every dataset image under one instruction. Queries run in
/// parallel; the output order always matches the image order.
pub fn embed_all(encoder: &Encoder, dataset: &Dataset, instruction: &str) -> Result<Vec<EmbeddingVec>> {
    let tokens = tokenize(instruction, &dataset.vocab);
    dataset
        .images
        .par_iter()
        .map(|image| encoder.embed_image(image, &tokens))
        .collect()
}

fn color_index(spec: &ShapeSpec) -> Result<u64> {
    match spec.color {
        crate::data::ColorValue::Discrete(name) => Ok(ColorName::ALL
            .iter()
            .position(|&c| c == name)
            .expect("ColorName::ALL is exhaustive") as u64),
        crate::data::ColorValue::Rgb(_) => {
            Err(Error::input("eval", "continuous colors have no class label"))
        }
    }
}

fn shape_index(spec: &ShapeSpec) -> u64 {
    ShapeKind::ALL.iter().position(|&s| s == spec.shape).expect("ShapeKind::ALL is exhaustive")
        as u64
}

/// Class label of an image under a condition: its color, its shape, or
/// the (color, shape) pair.
pub fn condition_label(spec: &ShapeSpec, condition: ConditionTag) -> Result<u64> {
    match condition {
        ConditionTag::Color => color_index(spec),
        ConditionTag::Shape => Ok(shape_index(spec)),
        ConditionTag::Both => Ok(color_index(spec)? * ShapeKind::ALL.len() as u64 + shape_index(spec)),
        ConditionTag::Continuous => {
            Err(Error::input("eval", "continuous condition is not a retrieval class"))
        }
    }
}

fn retrieval_scores(
    embeddings: Vec<EmbeddingVec>,
    labels: Vec<u64>,
    baseline: f64,
) -> Result<RetrievalScores> {
    let task = RetrievalTask::leave_one_out(embeddings, labels)?;
    let scores = mean_ap(&task)?;
    Ok(RetrievalScores {
        map: scores.mean,
        scaled_map: scaled_map(scores.mean, baseline)?,
        evaluated: scores.evaluated,
        skipped: scores.skipped,
        per_query: scores.per_query,
    })
}

/// Table-2-style protocol: for each condition, embed every image under
/// that condition's instruction and under the fixed neutral control, and
/// compare leave-one-out mAP with relevance = same condition label.
pub fn evaluate_conditions(
    encoder: &Encoder,
    dataset: &Dataset,
    conditions: &[ConditionTag],
    eval_seed: u64,
) -> Result<ConditionsSection> {
    if conditions.is_empty() {
        return Err(Error::input("eval", "no conditions requested"));
    }
    let specs = dataset.specs();
    let control_embeddings = embed_all(encoder, dataset, NEUTRAL_INSTRUCTION)?;
    let mut per_condition = Vec::with_capacity(conditions.len());
    for &condition in conditions {
        let labels: Vec<u64> =
            specs.iter().map(|s| condition_label(s, condition)).collect::<Result<_>>()?;
        let conditional_embeddings = embed_all(encoder, dataset, instruction_for(condition))?;
        let baseline_task =
            RetrievalTask::leave_one_out(control_embeddings.clone(), labels.clone())?;
        let baseline = random_baseline_map(&baseline_task, BASELINE_SHUFFLES, eval_seed)?;
        per_condition.push(ConditionResult {
            condition,
            random_baseline: baseline,
            conditional: retrieval_scores(conditional_embeddings, labels.clone(), baseline)?,
            control: retrieval_scores(control_embeddings.clone(), labels, baseline)?,
        });
    }
    let n = per_condition.len() as f64;
    Ok(ConditionsSection {
        conditional_average: per_condition.iter().map(|c| c.conditional.map).sum::<f64>() / n,
        control_average: per_condition.iter().map(|c| c.control.map).sum::<f64>() / n,
        per_condition,
    })
}

fn mean_rho(embeddings: &[EmbeddingVec], rgbs: &[[f64; 3]]) -> Result<(f64, usize, usize)> {
    let n = embeddings.len();
    let per_query: Vec<Option<f64>> = (0..n)
        .into_par_iter()
        .map(|i| {
            let mut model = Vec::with_capacity(n - 1);
            let mut truth = Vec::with_capacity(n - 1);
            for j in 0..n {
                if j == i {
                    continue;
                }
                model.push(embeddings[i].dot(&embeddings[j]));
                truth.push(-rgb_distance(&rgbs[i], &rgbs[j]));
            }
            spearman(&model, &truth).ok()
        })
        .collect();
    let scores: Vec<f64> = per_query.iter().filter_map(|s| *s).collect();
    if scores.is_empty() {
        return Err(Error::input("eval", "every continuous query was skipped"));
    }
    Ok((
        scores.iter().sum::<f64>() / scores.len() as f64,
        scores.len(),
        n - scores.len(),
    ))
}

fn rgb_distance(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

/// Continuous-color protocol: per query, rank the gallery by model
/// cosine and by negative RGB distance, and average the per-query
/// Spearman correlation; the neutral instruction is the control.
pub fn evaluate_continuous(encoder: &Encoder, dataset: &Dataset) -> Result<ContinuousSection> {
    if dataset.kind != DataKind::Continuous {
        return Err(Error::input("eval", "continuous protocol needs a continuous dataset"));
    }
    let rgbs: Vec<[f64; 3]> = dataset.specs().iter().map(|s| s.color.rgb()).collect();
    let conditional =
        embed_all(encoder, dataset, instruction_for(ConditionTag::Continuous))?;
    let control = embed_all(encoder, dataset, NEUTRAL_INSTRUCTION)?;
    let (conditional_rho, evaluated, conditional_skipped) = mean_rho(&conditional, &rgbs)?;
    let (control_rho, _, control_skipped) = mean_rho(&control, &rgbs)?;
    Ok(ContinuousSection {
        conditional_rho,
        control_rho,
        evaluated,
        conditional_skipped,
        control_skipped,
    })
}

/// Fig.-7-style protocol: k-shot linear probes on 16-class (color,
/// shape) labels, "both"-conditioned features against neutral ones.
pub fn evaluate_probe(
    encoder: &Encoder,
    dataset: &Dataset,
    k_shots: &[usize],
    eval_seed: u64,
) -> Result<ProbeSection> {
    if k_shots.is_empty() {
        return Err(Error::input("eval", "no k values requested"));
    }
    let labels: Vec<u64> = dataset
        .specs()
        .iter()
        .map(|s| condition_label(s, ConditionTag::Both))
        .collect::<Result<_>>()?;
    let conditional = embed_all(encoder, dataset, instruction_for(ConditionTag::Both))?;
    let control = embed_all(encoder, dataset, NEUTRAL_INSTRUCTION)?;
    let classes = {
        let mut distinct: Vec<u64> = labels.clone();
        distinct.sort_unstable();
        distinct.dedup();
        distinct.len()
    };
    let entries = k_shots
        .iter()
        .map(|&k| {
            Ok(ProbeEntry {
                k_shot: k,
                conditional_accuracy: linear_probe(&conditional, &labels, k, eval_seed)?,
                control_accuracy: linear_probe(&control, &labels, k, eval_seed)?,
            })
        })
        .collect::<Result<_>>()?;
    Ok(ProbeSection { classes, entries })
}
