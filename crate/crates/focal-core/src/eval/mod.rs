//! Evaluation protocols: leave-one-out retrieval (mAP, scaled mAP,
//! Recall@k), continuous-color rank correlation, and k-shot linear
//! probing, plus the report structure the CLI serializes.

mod metrics;
mod probe;
mod protocol;


pub use metrics::{
    average_precision, mean_ap, random_baseline_map, recall_at_k, scaled_map, spearman,
    QueryMean, RetrievalTask,
};
pub use probe::{linear_probe, PROBE_LRS};
pub use protocol::{
    condition_label, embed_all, evaluate_conditions, evaluate_continuous, evaluate_probe,
    ConditionResult, ConditionsSection, ContinuousSection, MetricReport, ProbeEntry,
    ProbeSection, RetrievalScores, BASELINE_SHUFFLES, REPORT_VERSION,
};
