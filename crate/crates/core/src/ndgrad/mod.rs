//! Dense tensors, a ReLU multilayer perceptron with softmax cross-entropy,
//! reverse-mode gradients and exact Hessian-vector products.

mod dual;
mod hvp;
mod mlp;
mod tensor;

pub use dual::{AdScalar, Dual};
pub use hvp::{hvp, HvpOperator, QuadraticObjective};
pub use mlp::{forward, loss, loss_and_grad, predict, Activation, MlpConfig, ParamVector};
pub use tensor::Tensor;
