//! The training loop, evaluation protocol, metrics files and seed aggregation.

pub mod aggregate;
mod config;
pub mod eval;
pub mod metrics;
mod train;

pub use aggregate::{aggregate_files, aggregate_stats, success_auc, AggregateRow, AggregateStats};
pub use config::{Algo, RunConfig};
pub use eval::{evaluate, expected_distance, rollout_eval, EvalOutcome, EvalSet};
pub use metrics::{MetricsRow, RelabelRecord, METRICS_HEADER};
pub use train::{run, stream_rng, warmup, Learner, RunOutput, Stream, Trainer};
