//! Minimal reverse-mode automatic differentiation.
//!
//! A [`Tape`] is an arena of nodes recorded in evaluation order; [`Var`] is a
//! handle into it. The tape is rebuilt for every forward pass. Only the
//! primitives needed by the attention model are provided, each with a fused
//! backward rule.

mod check;
mod optim;
mod tape;
mod tensor;

pub use check::{finite_difference_check, primitive_gradient_suite, GradCheckReport};
pub use optim::{lr_at_epoch, AdamConfig, AdamState, EarlyStopper, LrSchedule, StopDecision};
pub use tape::{Gradients, Tape, Var, MASK_FORBIDDEN};
pub use tensor::Tensor;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("shape mismatch in {op}: {lhs:?} vs {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: alloc::vec::Vec<usize>,
        rhs: alloc::vec::Vec<usize>,
    },
    #[error("loss must be a scalar, got shape {0:?}")]
    NonScalarLoss(alloc::vec::Vec<usize>),
    #[error("every entry of the loss mask is zero")]
    AllMasked,
    #[error("{0} watched tensors do not influence the loss")]
    DisconnectedGraph(usize),
}
