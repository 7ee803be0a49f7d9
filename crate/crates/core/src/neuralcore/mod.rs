//! Deterministic layer kernels (forward and backward), loss, initializer,
//! optimizer, and the finite-difference gradient oracle.

mod activation;
mod adam;
mod batchnorm;
pub(crate) mod conv;
mod dense;
pub(crate) mod gemm;
mod gradcheck;
mod init;
mod loss;
mod pool;

pub use activation::{dropout, relu, relu_backward, DropoutMask};
pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPSILON};
pub use batchnorm::{batchnorm, batchnorm_backward, BnCache, BnGrads, Phase, RunningStats, BN_EPSILON, BN_MOMENTUM};
pub use conv::{conv2d, conv2d_grad, ConvGrads, ConvMode};
pub use dense::{dense, dense_grad, DenseGrads};
pub use gradcheck::{finite_diff_grad, max_relative_error, relative_error};
pub use init::he_init;
pub use loss::{cross_entropy, one_hot, softmax, LOG_FLOOR};
pub use pool::{maxpool2x2, maxpool2x2_backward, ArgmaxMap, PoolRounding};
