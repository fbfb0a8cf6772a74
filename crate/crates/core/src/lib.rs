//! Multi-output Gaussian-process regression for data observed on the
//! vertices of a graph.
//!
//! The building blocks, bottom up:
//!
//! * [`numerics`]: dense Cholesky, solves and symmetric eigendecomposition.
//! * [`graph`]: graphs, Laplacians, random regular and k-NN graphs.
//! * [`kernels`]: data kernels, the graph-kernel zoo and the composite
//!   separable, sum-of-separable and graph process-convolution kernels.
//! * [`model`]: datasets, covariance assembly, prediction and metrics.
//! * [`training`]: likelihood gradients and the optimizer.

pub mod error;
pub mod graph;
pub mod kernels;
pub mod model;
pub mod numerics;
pub mod params;
pub mod training;

pub use error::{Error, Result};
pub use graph::{Graph, VertexSubset};
pub use kernels::{count_hyperparameters, mogp_kernel, GraphContext, KernelSpec};
pub use model::{FittedModel, MultiDataset, NoiseModel, Prediction, TestQuery, VertexBlock};
pub use training::{fit, OptimizerConfig};
