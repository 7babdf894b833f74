//! Comparison classifiers over flattened pixel features.

mod features;
pub mod forest;
pub mod mlp;
pub mod svm;

pub use features::FeatureMatrix;
pub use forest::{train_rfc, ForestConfig, RandomForest};
pub use mlp::train_mlp;
pub use svm::{default_gamma, train_svc_linear, train_svc_rbf, Kernel, Svc, SvcConfig};
