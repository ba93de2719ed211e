//! Small differentiable building blocks: affine maps, a two-layer
//! perceptron, the prototype-distance softmax loss and Adam.
//!
//! Gradients are written out by hand; there is no autodiff graph.

mod adam;
mod linear;
mod loss;
mod mlp;

pub use adam::{AdamHyper, AdamState};
pub use linear::{LinearGrad, LinearMap};
pub use loss::{argmax, proto_logits, proto_nll_batch, softmax, softmax_nll, ProtoLoss};
pub use mlp::{Mlp2, MlpCache, MlpGrad};
