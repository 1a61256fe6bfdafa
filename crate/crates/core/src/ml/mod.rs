//! Learners, oversampling and scores.

pub mod forest;
pub mod knn;
pub mod metrics;
pub mod smote;
pub mod tree;

pub use forest::{ForestModel, ForestParams};
pub use knn::{KdTree, KnnClassifier, KnnModel, KnnRegressor, Neighbor};
pub use metrics::{classification_metrics, regression_metrics, ClassificationReport, RegressionReport};
pub use smote::{smote, Resampled};
pub use tree::{Targets, TreeModel, TreeParams};
