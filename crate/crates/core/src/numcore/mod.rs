//! Minimal differentiable numerics: dense matrices, a define-by-run graph
//! and reverse-mode gradients, plus a central-difference gradient checker.

mod gradcheck;
mod graph;
mod params;
mod tensor;

pub use gradcheck::{finite_diff_check, GradCheckReport, DEFAULT_EPS};
pub use graph::{ElementwiseKind, Graph, Operand, Var};
pub use params::{Bound, Gradients, Param, ParamStore};
pub use tensor::Tensor;
