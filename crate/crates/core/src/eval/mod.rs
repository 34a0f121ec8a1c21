//! Datasets, metrics and reports.

pub mod dataset;
pub mod metrics;
pub mod presets;
pub mod report;

pub use dataset::{load_dataset, Dataset, DatasetRecord, LoadOptions, Split, TestItem};
pub use metrics::{compute_metric, compute_metric_with_abstentions, confusion_matrix, Metric};
pub use presets::{preset, presets, DatasetPreset};
pub use report::{emit_report, load_report, mean_std, render_table, MetricReport, ReportDocument, SeedResult};
