//! Temporal neighbourhood aggregation for link prediction on sequences of
//! graph snapshots.
//!
//! A model stacks graph-convolution blocks whose outputs feed per-vertex
//! recurrent cells, followed by Gaussian heads. Embeddings of snapshot `t`
//! score candidate edges of snapshot `t + 1` through an inner-product decoder.

pub mod autodiff;
pub mod error;
pub mod evalset;
pub mod graph;
pub mod harness;
pub mod ingest;
pub mod layers;
pub mod loss;
pub mod metrics;
pub mod model;
pub mod optim;
pub mod rng;
pub mod rollout;
pub mod snapfile;
pub mod synthetic;
pub mod tensor;
pub mod train;

pub use error::{Result, TnaError};
pub use graph::{Edge, Snapshot, TemporalGraph};
pub use model::{Model, ModelConfig};
pub use tensor::{CsrMatrix, Matrix};
