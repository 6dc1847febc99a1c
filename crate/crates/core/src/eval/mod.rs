//! Evaluation protocol: stratified Train/Test split, cross-validated grid
//! search, confusion-matrix metrics and private-class PR curves.

mod grid;
mod metrics;
mod representation;
mod split;

pub use grid::{evaluate, grid_search_cv, CvRow, CvTable, GridSpec, DEFAULT_C_VALUES};
pub use metrics::{pr_curve, write_pr_csv, ClassMetrics, Confusion, EvalReport, PrPoint, WeightedMetrics};
pub use representation::{BagOfTags, DenseLayer, Representation, TagSource};
pub use split::{holdout_split, stratified_folds, FoldAssignment, HoldoutSplit};
