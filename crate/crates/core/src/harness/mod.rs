//! End-to-end experiments: configuration, the per-step-size pipeline, rate
//! fits and report files.

mod config;
mod experiment;
mod fit;
mod report;

pub use config::{
    default_eta_grid, CorrectorConfig, ExperimentConfig, OutputConfig, PresetName, ProbeConfig, ProblemSection,
    ReferenceConfig,
};
pub use experiment::{
    assumption_reports, obtain_corrector, run_experiment, run_experiment_with_progress,
    AssumptionReports, BudgetNote, CorrectorSummary, EtaDiagnostics, ExperimentResult, MetricRow,
    Scheme, SchemeFits,
};
pub use fit::{fit_pinned_power, fit_rate, CiMethod, RateFit, RateModel, RatePoint};
pub use report::{csv_string, emit_report, parse_csv, read_csv, svg_plot, ReportPaths, CSV_HEADER};
