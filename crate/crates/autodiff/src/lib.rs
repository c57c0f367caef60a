//! Reverse-mode automatic differentiation over dense `f64` matrices, sized
//! for small multilayer perceptrons.
//!
//! The engine records a [`Graph`] of eagerly evaluated nodes and walks it
//! backwards. [`Mlp::input_gradient_node`] builds `∇ₓ f(x)` out of ordinary
//! graph nodes; a penalty on it is differentiable in the network parameters.

mod adam;
pub mod checkpoint;
mod error;
mod gradcheck;
mod graph;
mod mlp;
mod tensor;

pub use adam::Adam;
pub use error::AutodiffError;
pub use gradcheck::grad_check;
pub use graph::{Gradients, Graph, Var};
pub use mlp::{Activation, Linear, Mlp, MlpTrace};
pub use tensor::Tensor;

/// Logistic function, evaluated without overflow for large `|x|`.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}
