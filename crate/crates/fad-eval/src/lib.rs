//! Evaluation metrics and classical baselines for listener facial motion.
//!
//! Provides per-frame L2 distance, the Fréchet distance between coefficient
//! distributions, Shannon diversity over seeded k-means clusters, and peak
//! time-lagged cross-correlation, all computed separately on the expression
//! and rotation views, plus five retrieval/statistics baselines and CSV/JSON
//! report emission.

pub mod baseline;
pub mod error;
pub mod frechet;
pub mod kmeans;
pub mod l2;
pub mod report;
pub mod tlcc;

pub use baseline::{run_baseline, BaselineKind, BaselineQuery, CorpusSequence};
pub use error::{EvalError, Result};
pub use frechet::{fit_moments, frechet_distance, frechet_from_moments, Moments, FD_EPSILON};
pub use kmeans::{
    assignments, kmeans_fit, kmeans_fit_traced, shannon_index, KMeansModel, KMEANS_DEFAULT_K,
    KMEANS_MAX_ITERS,
};
pub use l2::l2_metric;
pub use report::{
    evaluate_both_views, evaluate_view, pool_rows, rows_to_csv, write_csv, write_json,
    MetricReport, MetricView, ReportRow,
};
pub use tlcc::{tlcc, TLCC_DEFAULT_MAX_LAG};
