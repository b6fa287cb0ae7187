//! Metrics, stratified multi-label k-fold and grid search.

mod grid;
mod kfold;
mod metrics;

pub use grid::{grid_search, Axis, Combination, Grid, GridRow, RankMetric};
pub use kfold::{stratified_kfold, FoldAssignment};
pub use metrics::{
    accuracy, confusion, f1, macro_average, precision, recall, summarize, total_accuracy, ConfusionCounts, LabelCounts,
    LabelMetrics, Summary,
};
