//! Core library for `focal`: train tiny instruction-conditioned image
//! encoders on procedurally generated shape images and evaluate them with
//! retrieval and probing protocols.
//!
//! The crate is organized bottom-up:
//!
//! - [`autodiff`] — dense f64 tensors plus a record/replay reverse-mode tape
//! - [`data`] — shape rendering, dataset generation, tokenization, storage
//! - [`encoders`] — condition/image/target encoders built on the tape
//! - [`train`] — batching, contrastive loss, AdamW, the training loop
//! - [`eval`] — retrieval metrics, rank correlation, linear probes
//! - [`checkpoint`] / [`config`] — on-disk formats shared with the CLI

pub mod autodiff;
pub mod checkpoint;
pub mod config;
pub mod data;
pub mod encoders;
pub mod error;
pub mod eval;
pub mod rng;
pub mod train;

pub use autodiff::{grad_check, NodeId, Tape, Tensor};
pub use checkpoint::{load_checkpoint, param_hash, save_checkpoint, Checkpoint};
pub use config::RunConfig;
pub use data::{
    ColorName, ColorValue, ConditionTag, DataKind, Dataset, PixelImage, ShapeKind, ShapeSpec,
    Triplet, Vocabulary,
};
pub use encoders::{
    EmbeddingVec, Encoder, EncoderConfig, ParamMap, TargetEncoder, TargetMode, TargetPayload,
    TargetSet, Variant,
};
pub use error::{Error, Result};
pub use eval::{linear_probe, mean_ap, spearman, MetricReport, RetrievalTask};
pub use train::{train, Batch, SimilarityMatrix, StepRecord, TrainConfig, TrainReport};
