use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::autodiff::{Tape, Tensor};
use crate::data::Triplet;
use crate::error::{Error, Result};
use crate::rng::{rng_for, stream};

use super::graph::{check_params, init_params, text_tower_graph, text_tower_specs};
use super::graph::{EmbeddingVec, TowerDims};
use super::params::ParamMap;

/// The frozen towers stand in for pretrained target models, so their
/// weights come from fixed internal seeds and never vary with the run
/// seed or change during training. The text seed and depth were chosen
/// by sweeping random towers and keeping the one with well-separated
/// targets that the trainable encoder fits fastest under the default
/// schedule.
const FROZEN_TEXT_SEED: u64 = 140;
const FOURIER_SEED: u64 = 500;

/// Init scale for the frozen text tower. Larger than the trainable
/// encoder's 0.02 so random features spread distinct texts apart.
const FROZEN_TEXT_STD: f64 = 1.0;

/// Bandwidth of the Fourier color features: frequencies are N(0, σ²) per
/// channel, giving cosine ≈ exp(-σ²·‖Δrgb‖²/2), monotone in RGB distance.
const FOURIER_BANDWIDTH: f64 = 0.8;

const FROZEN_TEXT_LAYERS: usize = 3;
const FROZEN_TEXT_MLP_RATIO: usize = 4;
const FROZEN_TEXT_MAX_SEQ: usize = 64;

const FOURIER_NAME: &str = "target.fourier_freq";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TargetMode {
    FrozenText,
    NumericColor,
}

/// What a triplet's output side encodes to: tokenized text for discrete
/// labels, the raw RGB triple for continuous colors.
#[derive(Clone, Debug, PartialEq)]
pub enum TargetPayload {
    Text(Vec<u32>),
    Rgb([f64; 3]),
}

impl TargetPayload {
    pub fn for_triplet(t: &Triplet) -> TargetPayload {
        match t.tag {
            crate::data::ConditionTag::Continuous => TargetPayload::Rgb(t.spec.color.rgb()),
            _ => TargetPayload::Text(t.output.clone()),
        }
    }
}

fn frozen_text_dims(embed_dim: usize, num_layers: usize) -> Result<TowerDims> {
    let num_heads = [4usize, 2, 1]
        .into_iter()
        .find(|h| embed_dim % h == 0)
        .ok_or_else(|| Error::input("target", format!("embed_dim {embed_dim} must be positive")))?;
    Ok(TowerDims { embed_dim, num_layers, num_heads, mlp_ratio: FROZEN_TEXT_MLP_RATIO })
}

/// A frozen target-side encoder. Its parameters are fixed at
/// construction; training never touches them.
#[derive(Clone, Debug)]
pub struct TargetEncoder {
    mode: TargetMode,
    embed_dim: usize,
    vocab_size: usize,
    num_layers: usize,
    params: ParamMap,
}

impl TargetEncoder {
    /// Frozen random-init text transformer, mean pooled and normalized.
    pub fn frozen_text(vocab_size: usize, embed_dim: usize) -> Result<TargetEncoder> {
        Self::frozen_text_with(
            vocab_size,
            embed_dim,
            FROZEN_TEXT_SEED,
            FROZEN_TEXT_STD,
            FROZEN_TEXT_LAYERS,
        )
    }

    pub(crate) fn frozen_text_with(
        vocab_size: usize,
        embed_dim: usize,
        seed: u64,
        std: f64,
        num_layers: usize,
    ) -> Result<TargetEncoder> {
        if vocab_size < 3 {
            return Err(Error::input(
                "target",
                format!("vocab_size {vocab_size} below the 3 reserved tokens"),
            ));
        }
        let dims = frozen_text_dims(embed_dim, num_layers)?;
        let specs = text_tower_specs("target", &dims, vocab_size, FROZEN_TEXT_MAX_SEQ);
        let mut rng = rng_for(seed, stream::TARGET, 0);
        let params = init_params(&specs, &mut rng, std, false)?;
        Ok(TargetEncoder { mode: TargetMode::FrozenText, embed_dim, vocab_size, num_layers, params })
    }

    /// Fixed random Fourier features of the RGB cube: cos/sin pairs over
    /// Gaussian frequencies, exactly unit norm by construction.
    pub fn numeric_color(embed_dim: usize) -> Result<TargetEncoder> {
        Self::numeric_color_with(embed_dim, FOURIER_SEED, FOURIER_BANDWIDTH)
    }

    pub(crate) fn numeric_color_with(
        embed_dim: usize,
        seed: u64,
        bandwidth: f64,
    ) -> Result<TargetEncoder> {
        if embed_dim < 2 || embed_dim % 2 != 0 {
            return Err(Error::input(
                "target",
                format!("embed_dim {embed_dim} must be even to hold cos/sin pairs"),
            ));
        }
        let half = embed_dim / 2;
        let mut rng = rng_for(seed, stream::TARGET, 0);
        let normal = Normal::new(0.0, bandwidth).expect("positive bandwidth");
        let data: Vec<f64> = (0..3 * half).map(|_| normal.sample(&mut rng)).collect();
        let mut params = ParamMap::new();
        params.insert(FOURIER_NAME, Tensor::new(&[3, half], data, false)?)?;
        Ok(TargetEncoder { mode: TargetMode::NumericColor, embed_dim, vocab_size: 0, num_layers: 0, params })
    }

    /// Rebuild from stored parameters, checking names and shapes.
    pub fn from_parts(
        mode: TargetMode,
        vocab_size: usize,
        embed_dim: usize,
        params: ParamMap,
    ) -> Result<TargetEncoder> {
        match mode {
            TargetMode::FrozenText => {
                // The layer count is implicit in the stored names.
                let num_layers = params
                    .iter()
                    .filter(|(name, _)| {
                        name.starts_with("target.block") && name.ends_with(".attn_ln.gain")
                    })
                    .count();
                let dims = frozen_text_dims(embed_dim, num_layers)?;
                let specs = text_tower_specs("target", &dims, vocab_size, FROZEN_TEXT_MAX_SEQ);
                check_params(&specs, &params)?;
                return Ok(TargetEncoder { mode, embed_dim, vocab_size, num_layers, params });
            }
            TargetMode::NumericColor => {
                if embed_dim < 2 || embed_dim % 2 != 0 {
                    return Err(Error::format("params", format!("odd embed_dim {embed_dim}")));
                }
                let freq = params
                    .get(FOURIER_NAME)
                    .ok_or_else(|| Error::format("params", format!("missing {FOURIER_NAME:?}")))?;
                if params.len() != 1 || freq.matrix_dims() != Some((3, embed_dim / 2)) {
                    return Err(Error::format(
                        "params",
                        format!("numeric target expects one 3x{} tensor", embed_dim / 2),
                    ));
                }
            }
        }
        Ok(TargetEncoder { mode, embed_dim, vocab_size, num_layers: 0, params })
    }

    pub fn mode(&self) -> TargetMode {
        self.mode
    }

    pub fn embed_dim(&self) -> usize {
        self.embed_dim
    }

    pub fn vocab_size(&self) -> usize {
        self.vocab_size
    }

    pub fn params(&self) -> &ParamMap {
        &self.params
    }

    pub fn encode(&self, payload: &TargetPayload) -> Result<EmbeddingVec> {
        match (self.mode, payload) {
            (TargetMode::FrozenText, TargetPayload::Text(tokens)) => {
                if tokens.iter().any(|&t| t as usize >= self.vocab_size) {
                    return Err(Error::input(
                        "target",
                        format!("token id outside vocab of {}", self.vocab_size),
                    ));
                }
                let dims = frozen_text_dims(self.embed_dim, self.num_layers)?;
                let mut tape = Tape::new();
                let bound = self.params.bind(&mut tape)?;
                let node = text_tower_graph(
                    &mut tape,
                    &bound,
                    "target",
                    &dims,
                    FROZEN_TEXT_MAX_SEQ,
                    tokens,
                )?;
                EmbeddingVec::from_unit(tape.value(node).to_vec())
            }
            (TargetMode::NumericColor, TargetPayload::Rgb(rgb)) => {
                if rgb.iter().any(|v| !(0.0..=1.0).contains(v)) {
                    return Err(Error::input("target", format!("rgb {rgb:?} outside [0,1]")));
                }
                let half = self.embed_dim / 2;
                let scale = (1.0 / half as f64).sqrt();
                let freq = self.params.get(FOURIER_NAME).expect("validated at construction");
                freq.with_data(|w| {
                    let mut z = vec![0.0; self.embed_dim];
                    for j in 0..half {
                        let phase: f64 = (0..3).map(|c| rgb[c] * w[c * half + j]).sum();
                        z[j] = scale * phase.cos();
                        z[half + j] = scale * phase.sin();
                    }
                    EmbeddingVec::from_unit(z)
                })
            }
            (TargetMode::FrozenText, TargetPayload::Rgb(_)) => Err(Error::input(
                "target",
                "text target encoder got an rgb payload",
            )),
            (TargetMode::NumericColor, TargetPayload::Text(_)) => Err(Error::input(
                "target",
                "numeric target encoder got a text payload",
            )),
        }
    }
}

/// The target encoders available to a run: text targets always, numeric
/// targets only when the data has continuous colors.
#[derive(Clone, Debug)]
pub struct TargetSet {
    pub text: TargetEncoder,
    pub numeric: Option<TargetEncoder>,
}

impl TargetSet {
    pub fn new(vocab_size: usize, embed_dim: usize, with_numeric: bool) -> Result<TargetSet> {
        Ok(TargetSet {
            text: TargetEncoder::frozen_text(vocab_size, embed_dim)?,
            numeric: with_numeric.then(|| TargetEncoder::numeric_color(embed_dim)).transpose()?,
        })
    }

    pub fn encode(&self, payload: &TargetPayload) -> Result<EmbeddingVec> {
        match payload {
            TargetPayload::Text(_) => self.text.encode(payload),
            TargetPayload::Rgb(_) => self
                .numeric
                .as_ref()
                .ok_or_else(|| {
                    Error::input("target", "no numeric target encoder for rgb payload")
                })?
                .encode(payload),
        }
    }
}
