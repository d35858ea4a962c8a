use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// How the instruction conditions the image encoder.
///
/// `Clip`: a separate text tower embeds the instruction, and the result
/// joins the patch tokens as one extra token beside the class token; the
/// tower attends bidirectionally and reads the class position out.
///
/// `Mllm`: instruction tokens follow the patch tokens in a single
/// causally-masked tower, closed by an end-of-sequence token whose output
/// position is read out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Variant {
    Clip,
    Mllm,
}

impl Variant {
    pub fn label(self) -> &'static str {
        match self {
            Variant::Clip => "clip",
            Variant::Mllm => "mllm",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.label())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Variant> {
        match s {
            "clip" => Ok(Variant::Clip),
            "mllm" => Ok(Variant::Mllm),
            other => Err(Error::input("variant", format!("unknown variant {other:?}"))),
        }
    }
}

/// Architecture hyperparameters shared by the condition and image towers.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EncoderConfig {
    pub variant: Variant,
    pub embed_dim: usize,
    pub num_layers: usize,
    pub num_heads: usize,
    pub mlp_ratio: usize,
    pub patch_size: usize,
    pub image_width: usize,
    pub image_height: usize,
    pub max_seq_len: usize,
    pub vocab_size: usize,
}

impl EncoderConfig {
    /// The default desk-scale model: 64-dim, 2 layers, 4 heads, 8x8
    /// patches on a 32x32 canvas.
    pub fn small(variant: Variant, vocab_size: usize) -> EncoderConfig {
        EncoderConfig {
            variant,
            embed_dim: 64,
            num_layers: 2,
            num_heads: 4,
            mlp_ratio: 4,
            patch_size: 8,
            image_width: 32,
            image_height: 32,
            max_seq_len: 64,
            vocab_size,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let err = |msg: String| Err(Error::input("encoder_config", msg));
        if self.embed_dim == 0 || self.num_heads == 0 {
            return err("embed_dim and num_heads must be positive".into());
        }
        if self.embed_dim % self.num_heads != 0 {
            return err(format!(
                "embed_dim {} not divisible by num_heads {}",
                self.embed_dim, self.num_heads
            ));
        }
        if self.mlp_ratio == 0 {
            return err("mlp_ratio must be positive".into());
        }
        if self.patch_size == 0
            || self.image_width % self.patch_size != 0
            || self.image_height % self.patch_size != 0
        {
            return err(format!(
                "patch size {} must evenly divide the {}x{} canvas",
                self.patch_size, self.image_width, self.image_height
            ));
        }
        if self.vocab_size < 3 {
            return err(format!("vocab_size {} below the 3 reserved tokens", self.vocab_size));
        }
        if self.max_seq_len < self.n_patches() + 2 {
            return err(format!(
                "max_seq_len {} too short for {} patches plus instruction and eos",
                self.max_seq_len,
                self.n_patches()
            ));
        }
        Ok(())
    }

    pub fn n_patches(&self) -> usize {
        (self.image_width / self.patch_size) * (self.image_height / self.patch_size)
    }

    pub fn patch_dim(&self) -> usize {
        self.patch_size * self.patch_size * 3
    }

    pub fn head_dim(&self) -> usize {
        self.embed_dim / self.num_heads
    }

    /// Clip tower sequence: class token, patches, condition token.
    pub fn clip_seq_len(&self) -> usize {
        self.n_patches() + 2
    }
}
