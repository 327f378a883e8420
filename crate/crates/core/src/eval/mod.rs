//! Experiments, ablations and metrics.

pub mod ablation;
pub mod experiment;
pub mod metrics;
pub mod precision;
pub mod report;

pub use ablation::{run_ablation, write_ablation, AblationOutput, Axis};
pub use experiment::{
    run_experiment, run_on_dataset, write_outputs, Aggregate, DatasetSource, EvalError, ExperimentOutput,
    ExperimentSpec, Metric, RunOptions, RunResult,
};
pub use metrics::Interval;
pub use report::{load_report, write_bundle, Report};
