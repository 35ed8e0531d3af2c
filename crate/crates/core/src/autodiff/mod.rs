//! Numerical substrate: dense f64 tensors, a reverse-mode autodiff
//! graph, the Adam optimizer, and the checkpoint format.

pub mod adam;
pub mod checkpoint;
pub mod graph;
pub mod params;
pub mod tensor;

pub use adam::{AdamConfig, AdamState};
pub use graph::{Graph, NodeId};
pub use params::{Binding, Parameters};
pub use tensor::Tensor;
