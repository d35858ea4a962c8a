//! Condition-aware encoders built on the autodiff tape: a trainable image
//! tower conditioned on instruction text (clip-style extra token or
//! mllm-style causal prefix), plus frozen target-side encoders (a random
//! text transformer and Fourier color features) that training never
//! updates.

mod config;
mod graph;
mod params;
mod target;


pub use config::{EncoderConfig, Variant};
pub use graph::{EmbeddingVec, Encoder, TEMPERATURE_INIT};
pub use params::{full, trunc_normal, BoundParams, ParamMap};
pub use target::{TargetEncoder, TargetMode, TargetPayload, TargetSet};
