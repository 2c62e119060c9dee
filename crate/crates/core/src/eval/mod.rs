//! Expanding-window backtests of the baseline against the adaptive variants.

mod benchmark;
mod metrics;
mod report;
mod splits;

pub use benchmark::{
    run_benchmark, BenchmarkConfig, BenchmarkOutput, ErrorDump, PairedSummary, PointError,
    VariantFailure,
};
pub use metrics::{mae, rmse, PairedDifference};
pub use report::{
    error_dump_name, histogram, histogram_bin_width, read_error_dump, write_error_dump,
    write_histogram, EvaluationReport, HistogramBin, Metric, ReportMeta, ReportRow, BASELINE,
};
pub use splits::{make_splits, LegKey, SplitSpec, YearMonth};
