//! Metrics for generated molecule sets and the low-shot augmentation
//! harness.

pub mod basic;
pub mod classifier;
pub mod frechet;
pub mod lowshot;
pub mod nspdk;
pub mod report;

pub use basic::{novelty, uniqueness, validity};
pub use classifier::{active_ratio, Classifier, ClassifierError, Constant, Knn, Scorer};
pub use frechet::{frechet, FrechetError};
pub use nspdk::{kernel, nspdk_features, nspdk_mmd, NspdkConfig, SparseVector};
pub use report::{evaluate, EvalConfig, Evaluation, MetricsReport};
