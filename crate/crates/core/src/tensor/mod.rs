//! Dense and sparse matrices, the differentiation tape and the optimiser.

mod dense;
mod gradcheck;
pub mod ops;
mod optim;
mod sparse;
mod tape;

pub use dense::{argmax, DenseMatrix};
pub use gradcheck::{finite_difference_check, FD_STEP};
pub use optim::{AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use sparse::SparseMatrix;
pub use tape::{attention_forward, AttentionCache, Gradients, Reduce, Tape, Var};
