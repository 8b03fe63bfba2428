//! Minimal dense numerics with reverse-mode differentiation, sized for the
//! graph-attention networks and PPO losses in this crate.

mod array;
mod optim;
mod tape;

pub use array::NdArray;
pub use optim::{clip_grad_norm, Adam, ParamStore};
pub use tape::{GatAttentionOutput, Gradients, Segments, Tape, Var};

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum AutodiffError {
    #[error("{op}: incompatible shapes {lhs:?} and {rhs:?}")]
    ShapeMismatch {
        op: &'static str,
        lhs: [usize; 2],
        rhs: [usize; 2],
    },
    #[error("data length {len} does not match shape {shape:?}")]
    DataLength { shape: [usize; 2], len: usize },
    #[error("backward needs a scalar loss, got shape {shape:?}")]
    NonScalarLoss { shape: [usize; 2] },
    #[error("row index {index} out of range for {len} rows")]
    IndexOutOfRange { index: usize, len: usize },
    #[error("{0} of an empty array")]
    Empty(&'static str),
    #[error("concat of zero arrays")]
    EmptyConcat,
}
