//! End-to-end orchestration: data, features, augmentation, training,
//! prediction, fusion and the results table.

mod config;
mod report;
mod run;

pub use config::{parse_kv, AugmentSettings, Classifier, DataSource, ModelSettings, PipelineConfig, Scheme, SystemName};
pub use report::{format_report, read_labels, report, report_rows, ReportRow};
pub use run::{atomic_write, build_spec, run_pipeline, OutputLock, Stage, StageRecord, FAILURE_MARKER, LOCK_FILE};
