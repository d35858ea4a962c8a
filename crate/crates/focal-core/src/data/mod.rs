//! Procedural shape dataset: pixel-exact rendering of colored shapes on a
//! gray canvas, seeded generation of discrete and continuous-color suites,
//! instruction/output text templates with a whitespace tokenizer, and a
//! reproducible on-disk layout (manifest + raw image blob + vocab list).

mod generate;
mod render;
mod shape;
mod store;
mod text;
mod triplet;


pub use generate::{generate_colorshape, generate_continuous_color};
pub use render::{render_shape, PixelImage};
pub use shape::{ColorName, ColorValue, ShapeKind, ShapeSpec, BACKGROUND};
pub use store::{load_dataset, save_dataset, IMAGES_FILE, MANIFEST_FILE, VOCAB_FILE};
pub use text::{
    build_vocab, detokenize, instruction_for, normalize_text, output_for, tokenize, ConditionTag,
    Vocabulary, EOS_ID, NEUTRAL_INSTRUCTION, PAD_ID, UNK_ID,
};
pub use triplet::{make_triplets, ConditionText, DataKind, Dataset, Record, Triplet};
