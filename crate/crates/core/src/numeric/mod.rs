//! Dense numerical substrate: tensors, differentiable primitives, Adam, and
//! gradient verification.

mod adam;
mod gradcheck;
mod ops;
mod params;
mod scalar;
mod tensor;

pub use adam::{Adam, AdamConfig, GroupRates};
pub use gradcheck::{finite_diff_check, GradCheckConfig, GradCheckReport};
pub use ops::{cross_entropy_loss, cross_entropy_with_grad, matmul, softmax};
pub(crate) use ops::{gemm, softmax_into, Mat};
pub use params::{Grads, Group, Param, ParamId, ParamStore};
pub use scalar::Scalar;
pub use tensor::Tensor;
