//! Node classification with an ensemble of graph neural network teachers
//! distilled into a graph-free student, where a learned policy decides per
//! node which teacher (if any) the student should imitate.

pub mod checkpoint;
pub mod ensemble;
pub mod error;
pub mod graph;
pub mod nn;
pub mod pipeline;
pub mod policy;
pub mod student;
pub mod teachers;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::{DenseMatrix, SparseMatrix};
