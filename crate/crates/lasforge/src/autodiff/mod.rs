//! Minimal reverse-mode automatic differentiation.
//!
//! Values are dense `f64` tensors. Each loss evaluation records its forward
//! pass onto a fresh [`Tape`]; [`Tape::backward`] then walks the recorded
//! nodes once in reverse, accumulating gradients additively into every node
//! that (transitively) requires them. Tapes are cheap and are discarded
//! after use; model parameters live outside the tape and are copied in as
//! leaves per pass, which is what keeps "evaluate a hypothetical update"
//! workloads free of aliasing questions.
//!
//! Broadcasting is deliberately absent except for the one case the models
//! need: adding a row vector to every row of a matrix (a bias add).

mod kernels;
mod tape;
mod tensor;

pub use kernels::sign;
pub(crate) use kernels::{cross_entropy_rows, matmul, softmax_rows};
pub use tape::{OpKind, Tape, TensorId};
pub use tensor::Tensor;
