//! Experiments: configuration, training runs, median-error evaluation,
//! learning curves and result tables.

mod config;
mod data;
mod metrics;
mod run;
mod table;

pub use config::{table_grid, DatasetRef, ExperimentConfig};
pub use data::{load_dataset, load_manifest_samples, LoadedData};
pub use metrics::{improvement_percent, improvement_raw, mean, median, pose_errors, RoundingMode};
pub use run::{
    curves_svg, eval_preprocessing, eval_windows, evaluate, evaluate_manifest, evaluate_prepared, load_run, load_runs,
    output_root, prepare_inputs, run_experiment, run_with_data, Artifacts, CurvePoint, EvalReport, FrameError,
    RunOutcome, RunRecord, OUTPUT_ROOT_ENV,
};
pub use table::{cell_improvement, emit_table, table_from_runs, Cell, Layout, MetreStyle, Table, TableFormat, TableOutput, TableRow};

#[cfg(test)]
mod tests;
