//! Sparse affinity Laplacians: the closed-form matting Laplacian and a
//! KNN-affinity graph Laplacian.

mod knn;
mod matting;
mod sparse;

pub use knn::{build_knn_laplacian, knn_neighbors, laplacian_from_neighbors, FeatureSpace, KnnConfig};
pub use matting::{build_matting_laplacian, MattingWindowConfig};
pub use sparse::{quad_form, SparseSymMatrix};
