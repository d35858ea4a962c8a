use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::generate::{generate_colorshape, generate_continuous_color};
use super::render::{render_shape, PixelImage};
use super::shape::ShapeSpec;
use super::text::{
    build_vocab, instruction_for, output_for, tokenize, ConditionTag, Vocabulary,
    NEUTRAL_INSTRUCTION,
};

/// Which generator produced a dataset.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataKind {
    Discrete,
    Continuous,
}

/// One image plus its per-condition instruction/output texts, as stored
/// in the manifest.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub spec: ShapeSpec,
    pub texts: Vec<ConditionText>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConditionText {
    pub condition: ConditionTag,
    pub instruction: String,
    pub output: String,
}

/// A generated dataset held in memory: specs with rendered images, the
/// conditions it was built for, and the vocabulary covering every text
/// (all instruction templates, the neutral instruction, all outputs).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub kind: DataKind,
    pub seed: u64,
    pub width: usize,
    pub height: usize,
    pub conditions: Vec<ConditionTag>,
    pub records: Vec<Record>,
    pub images: Vec<Arc<PixelImage>>,
    pub vocab: Vocabulary,
}

/// One training example: an image, an instruction asking about one of its
/// attributes, and the expected output payload. Triplets from the same
/// record share the image buffer.
#[derive(Clone, Debug)]
pub struct Triplet {
    pub image_index: usize,
    pub image: Arc<PixelImage>,
    pub instruction: Vec<u32>,
    pub output: Vec<u32>,
    pub tag: ConditionTag,
    pub spec: ShapeSpec,
}

/// Expand specs into per-condition triplets: each spec yields one triplet
/// per condition, sharing its rendered image. Condition/spec mismatches
/// (a continuous tag on a discrete spec or vice versa) and an empty
/// condition list are errors.
pub fn make_triplets(
    specs: &[ShapeSpec],
    images: &[Arc<PixelImage>],
    vocab: &Vocabulary,
    conditions: &[ConditionTag],
) -> Result<Vec<Triplet>> {
    if conditions.is_empty() {
        return Err(Error::input("make_triplets", "empty condition list"));
    }
    if specs.len() != images.len() {
        return Err(Error::input(
            "make_triplets",
            format!("{} specs but {} images", specs.len(), images.len()),
        ));
    }
    let mut triplets = Vec::with_capacity(specs.len() * conditions.len());
    for (i, spec) in specs.iter().enumerate() {
        for &tag in conditions {
            let output = output_for(spec, tag)?;
            triplets.push(Triplet {
                image_index: i,
                image: Arc::clone(&images[i]),
                instruction: tokenize(instruction_for(tag), vocab),
                output: tokenize(&output, vocab),
                tag,
                spec: *spec,
            });
        }
    }
    Ok(triplets)
}

impl Dataset {
    /// Generate the 16-cell discrete suite.
    pub fn discrete(
        seed: u64,
        n_per_combo: usize,
        width: usize,
        height: usize,
        conditions: &[ConditionTag],
    ) -> Result<Dataset> {
        if conditions.iter().any(|c| *c == ConditionTag::Continuous) {
            return Err(Error::input(
                "dataset",
                "continuous condition is only valid for the continuous suite",
            ));
        }
        let specs = generate_colorshape(seed, n_per_combo, width, height)?;
        Dataset::assemble(DataKind::Discrete, seed, width, height, conditions, specs)
    }

    /// Generate the continuous-color suite.
    pub fn continuous(
        seed: u64,
        n: usize,
        width: usize,
        height: usize,
        conditions: &[ConditionTag],
    ) -> Result<Dataset> {
        if conditions
            .iter()
            .any(|c| matches!(c, ConditionTag::Color | ConditionTag::Both))
        {
            return Err(Error::input(
                "dataset",
                "color/both conditions need discrete color labels",
            ));
        }
        let specs = generate_continuous_color(seed, n, width, height)?;
        Dataset::assemble(DataKind::Continuous, seed, width, height, conditions, specs)
    }

    fn assemble(
        kind: DataKind,
        seed: u64,
        width: usize,
        height: usize,
        conditions: &[ConditionTag],
        specs: Vec<ShapeSpec>,
    ) -> Result<Dataset> {
        if conditions.is_empty() {
            return Err(Error::input("dataset", "empty condition list"));
        }
        let images: Vec<Arc<PixelImage>> = specs
            .par_iter()
            .map(|s| render_shape(s, width, height).map(Arc::new))
            .collect::<Result<_>>()?;
        let records: Vec<Record> = specs
            .iter()
            .map(|spec| {
                let texts = conditions
                    .iter()
                    .map(|&tag| {
                        Ok(ConditionText {
                            condition: tag,
                            instruction: instruction_for(tag).to_string(),
                            output: output_for(spec, tag)?,
                        })
                    })
                    .collect::<Result<Vec<_>>>()?;
                Ok(Record { spec: *spec, texts })
            })
            .collect::<Result<_>>()?;
        let vocab = Dataset::vocab_for(&records);
        Ok(Dataset {
            kind,
            seed,
            width,
            height,
            conditions: conditions.to_vec(),
            records,
            images,
            vocab,
        })
    }

    /// All instruction templates plus the neutral instruction plus every
    /// output text; instructions first so template tokens get low ids.
    fn vocab_for(records: &[Record]) -> Vocabulary {
        let mut corpus: Vec<&str> = vec![
            instruction_for(ConditionTag::Color),
            instruction_for(ConditionTag::Shape),
            instruction_for(ConditionTag::Both),
            NEUTRAL_INSTRUCTION,
        ];
        for rec in records {
            for t in &rec.texts {
                corpus.push(&t.output);
            }
        }
        build_vocab(corpus)
    }

    pub fn specs(&self) -> Vec<ShapeSpec> {
        self.records.iter().map(|r| r.spec).collect()
    }

    /// Triplets for this dataset's conditions.
    pub fn triplets(&self) -> Result<Vec<Triplet>> {
        let specs = self.specs();
        make_triplets(&specs, &self.images, &self.vocab, &self.conditions)
    }
}
