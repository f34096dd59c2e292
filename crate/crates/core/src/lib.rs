//! Core evaluation primitives for text-to-SQL benchmarking.
//!
//! - [`value`]: canonical SQL values and result grids
//! - [`metrics`]: execution accuracy, soft execution F1 and grouped aggregation
//! - [`difficulty`]: SQL tokenization and hardness classification
//! - [`diversity`]: duplicate and semantic-similarity analytics over a dataset

pub mod difficulty;
pub mod diversity;
pub mod metrics;
pub mod value;

pub use difficulty::{classify, component_counts, tokenize_sql, ComponentCounts, CountMode, Difficulty};
pub use metrics::{
    aggregate_by_group, column_pair_f1, execution_accuracy, score_prediction, soft_execution_f1,
    AggregateReport, Aggregation, EvalScore, PairScore, SoftF1Breakdown,
};
pub use value::{values_equal, ErrorKind, ExecOutcome, GridError, ResultGrid, SqlValue};
