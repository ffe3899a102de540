//! Datasets, splits, answer metrics and run records.

mod dataset;
mod metrics;
mod run;

pub use dataset::{
    instance_to_line, load_dataset, parse_instance, split, write_dataset, DatasetSplit, Passage, QAInstance,
    DEFAULT_PROFILING_COUNT,
};
pub use metrics::{exact_match, normalize_answer, token_f1};
pub use run::{aggregate_run, write_atomic, InstanceScore, Method, RunRecord};
