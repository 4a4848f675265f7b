//! Dense tensors with tape-based reverse-mode differentiation, plus the
//! convolution, normalization and optimization primitives used by the smis
//! networks.

pub mod checkpoint;
pub mod error;
pub mod gradcheck;
pub mod init;
pub mod nn;
pub mod ops;
pub mod optim;
pub mod param;
pub mod scalar;
pub mod spectral;
pub mod tensor;
pub mod var;

pub use error::{Result, TensorError};
pub use nn::Mode;
pub use param::{Buffer, ParamStore, Parameter, Scope, SpectralState};
pub use scalar::{DType, Float};
pub use tensor::Tensor;
pub use var::{NoGradGuard, Var};
