//! Clustering evaluation: PCA whitening, k-means with restarts, Hungarian
//! clustering accuracy and normalized mutual information.

mod assign;
mod kmeans;
mod matrix;
mod metrics;
mod pca;

pub use assign::{hungarian_accuracy, solve_assignment};
pub use kmeans::{kmeans, kmeans_traced, ClusterResult, KmeansOptions, DEFAULT_MAX_ITER};
pub use matrix::Matrix;
pub use metrics::{cluster_metrics, nmi, ClusterMetrics, NmiScores};
pub use pca::{jacobi_eigh, pca_fit, pca_whiten, PcaBasis};
