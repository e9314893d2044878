//! Detection of cross-chain bridge attacks from heterogeneous behavior graphs.
//!
//! The numeric core in [`han`] is generic over [`Scalar`] (`f32` or `f64`);
//! the aliases below fix it to `f64`, which the pipeline and CLI use.

pub mod checkpoint;
pub mod han;
pub mod ingest;
pub mod linalg;
pub mod metapath;
pub mod pipeline;
pub mod scalar;
pub mod synthgen;
pub mod taxonomy;
pub mod xbhg;

pub use scalar::Scalar;
pub use taxonomy::{EdgeType, Label, NodeType, Side};

pub type Model = han::Model<f64>;
pub type ModelF32 = han::Model<f32>;
pub type ModelParams = han::ModelParams<f64>;
pub type PreparedGraph = han::PreparedGraph<f64>;
pub type Matrix = linalg::Matrix<f64>;
