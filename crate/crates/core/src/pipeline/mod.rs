//! End-to-end orchestration behind the command-line tool: configuration,
//! dataset ingestion, masking, imputation, evaluation and run reports.

mod commands;
pub mod config;
pub mod report;

pub use commands::{cmd_eval, cmd_impute, cmd_mask, cmd_run, load_dataset, Dataset, EvalInputs, RunOutcome};
pub use config::{find_preset, presets, Method, PipelineConfig, Preset, Source};
pub use report::{format_comparison, read_report, RunReport, Timings, FORMAT_VERSION};
