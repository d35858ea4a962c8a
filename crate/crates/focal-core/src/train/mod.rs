//! Contrastive training: epoch batching with target-deduplication repair,
//! the similarity/loss pieces, AdamW with warmup-cosine scheduling, and
//! the single-threaded training loop.

mod batch;
mod loss;
mod optim;
mod trainer;

#[cfg(test)]
mod tests;

pub use batch::{build_batches, Batch};
pub use loss::{contrastive_loss, similarity_matrix, SimilarityMatrix};
pub use optim::{lr_schedule, AdamW};
pub use trainer::{train, StepRecord, TrainConfig, TrainReport};
