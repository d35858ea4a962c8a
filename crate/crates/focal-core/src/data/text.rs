use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::shape::ShapeSpec;

pub const PAD_ID: u32 = 0;
pub const EOS_ID: u32 = 1;
pub const UNK_ID: u32 = 2;

pub const PAD_TOKEN: &str = "<pad>";
pub const EOS_TOKEN: &str = "<eos>";
pub const UNK_TOKEN: &str = "<unk>";

/// Instruction used for the unconditional control arm.
pub const NEUTRAL_INSTRUCTION: &str = "describe the image";

const COLOR_INSTRUCTION: &str = "What is the color of the object in the image?";
const SHAPE_INSTRUCTION: &str = "What is the shape of the object in the image?";
const BOTH_INSTRUCTION: &str = "What is the color and shape of the object in the image?";

/// Which attribute of the image a triplet's instruction asks about.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ConditionTag {
    Color,
    Shape,
    Both,
    Continuous,
}

impl ConditionTag {
    pub fn label(self) -> &'static str {
        match self {
            ConditionTag::Color => "color",
            ConditionTag::Shape => "shape",
            ConditionTag::Both => "both",
            ConditionTag::Continuous => "continuous",
        }
    }
}

impl std::str::FromStr for ConditionTag {
    type Err = Error;

    fn from_str(s: &str) -> Result<ConditionTag> {
        match s {
            "color" => Ok(ConditionTag::Color),
            "shape" => Ok(ConditionTag::Shape),
            "both" => Ok(ConditionTag::Both),
            "continuous" => Ok(ConditionTag::Continuous),
            other => Err(Error::input("condition_tag", format!("unknown condition '{}'", other))),
        }
    }
}

/// Instruction text for a condition. The continuous suite retrieves by
/// color, so it shares the color question.
pub fn instruction_for(tag: ConditionTag) -> &'static str {
    match tag {
        ConditionTag::Color | ConditionTag::Continuous => COLOR_INSTRUCTION,
        ConditionTag::Shape => SHAPE_INSTRUCTION,
        ConditionTag::Both => BOTH_INSTRUCTION,
    }
}

/// Output text for a spec under a condition. Discrete conditions name the
/// attribute; the continuous condition prints RGB quantized to hundredths
/// so outputs stay in a finite vocabulary.
pub fn output_for(spec: &ShapeSpec, tag: ConditionTag) -> Result<String> {
    let discrete = spec.color.discrete();
    match tag {
        ConditionTag::Color => {
            let c = discrete.ok_or_else(|| {
                Error::input("output_for", "color condition on a continuous-color spec")
            })?;
            Ok(format!("the object is {}", c.label()))
        }
        ConditionTag::Shape => Ok(format!("the object is a {}", spec.shape.label())),
        ConditionTag::Both => {
            let c = discrete.ok_or_else(|| {
                Error::input("output_for", "both condition on a continuous-color spec")
            })?;
            Ok(format!("the object is a {} {}", c.label(), spec.shape.label()))
        }
        ConditionTag::Continuous => {
            if discrete.is_some() {
                return Err(Error::input(
                    "output_for",
                    "continuous condition on a discrete-color spec",
                ));
            }
            let [r, g, b] = spec.color.rgb();
            Ok(format!("the color is r{:.2} g{:.2} b{:.2}", r, g, b))
        }
    }
}

/// Lowercase and collapse whitespace; the canonical text form.
pub fn normalize_text(text: &str) -> String {
    text.to_lowercase().split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Token id table: three reserved entries, then corpus tokens in first
/// appearance order. Ordering is stable for a fixed corpus, which the
/// persisted one-token-per-line file pins down.
#[derive(Clone, Debug, PartialEq)]
pub struct Vocabulary {
    tokens: Vec<String>,
    index: HashMap<String, u32>,
}

impl Vocabulary {
    pub fn from_tokens(tokens: Vec<String>) -> Result<Vocabulary> {
        if tokens.len() < 3
            || tokens[PAD_ID as usize] != PAD_TOKEN
            || tokens[EOS_ID as usize] != EOS_TOKEN
            || tokens[UNK_ID as usize] != UNK_TOKEN
        {
            return Err(Error::format(
                "vocabulary",
                format!("first entries must be {} {} {}", PAD_TOKEN, EOS_TOKEN, UNK_TOKEN),
            ));
        }
        let mut index = HashMap::new();
        for (i, tok) in tokens.iter().enumerate() {
            if index.insert(tok.clone(), i as u32).is_some() {
                return Err(Error::format("vocabulary", format!("duplicate token '{}'", tok)));
            }
        }
        Ok(Vocabulary { tokens, index })
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> Option<u32> {
        self.index.get(token).copied()
    }

    pub fn token(&self, id: u32) -> Option<&str> {
        self.tokens.get(id as usize).map(|s| s.as_str())
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }
}

/// Build a vocabulary from every text the pipeline will tokenize.
pub fn build_vocab<'a>(corpus: impl IntoIterator<Item = &'a str>) -> Vocabulary {
    let mut tokens: Vec<String> =
        vec![PAD_TOKEN.to_string(), EOS_TOKEN.to_string(), UNK_TOKEN.to_string()];
    let mut index: HashMap<String, u32> = tokens
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i as u32))
        .collect();
    for text in corpus {
        for word in normalize_text(text).split_whitespace() {
            if !index.contains_key(word) {
                index.insert(word.to_string(), tokens.len() as u32);
                tokens.push(word.to_string());
            }
        }
    }
    Vocabulary { tokens, index }
}

/// Lowercased whitespace tokenization; unknown words map to `<unk>`.
pub fn tokenize(text: &str, vocab: &Vocabulary) -> Vec<u32> {
    normalize_text(text)
        .split_whitespace()
        .map(|w| vocab.id(w).unwrap_or(UNK_ID))
        .collect()
}

/// Inverse of [`tokenize`] up to normalization.
pub fn detokenize(ids: &[u32], vocab: &Vocabulary) -> String {
    ids.iter()
        .map(|&id| vocab.token(id).unwrap_or(UNK_TOKEN))
        .collect::<Vec<_>>()
        .join(" ")
}
