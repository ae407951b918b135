//! Dense linear algebra, activations, loss, RNG and initializers.

mod activation;
mod init;
mod loss;
mod matrix;
mod rng;

pub use activation::{activate, Activation};
pub use init::{glorot_uniform, orthogonal, qr_decompose};
pub use loss::softmax_xent;
pub use matrix::{matmul, Matrix, Vector};
pub use rng::Rng;
