//! Dense `f64` tensors, a reverse-mode tape over a fixed op set, RMSProp, and
//! a central finite-difference gradient oracle.

mod gradcheck;
mod ops;
mod optim;
mod params;
mod tape;
mod tensor;

pub use gradcheck::finite_difference_check;
pub use ops::{affine_forward, conv2d_forward, conv_output_size, Activation};
pub use optim::{OptimizerState, RmsProp};
pub use params::{BoundParams, ParameterSet};
pub use tape::{Gradients, Tape, Var};
pub(crate) use tape::{covariance_entries, gaussian_nll_2d};
pub use tensor::Tensor;
