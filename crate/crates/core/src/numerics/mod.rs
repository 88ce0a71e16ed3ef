//! Dense tensor arithmetic, reverse-mode differentiation, Adam, and PCA.

pub mod autograd;
pub mod ops;
pub mod optim;
pub mod pca;
pub mod tensor;

pub use autograd::backward;
pub use optim::AdamState;
pub use pca::{fit_pca, PcaModel};
pub use tensor::{no_grad, Tensor};
