//! Losses and analytic gradients for the meta-learned networks.
//!
//! Each function takes an explicit dropout mask (or none) so the same code
//! path can be checked against finite differences.

use crate::linalg::Matrix;
use crate::tensor::{proto_nll_batch, LinearGrad, LinearMap, Mlp2, MlpGrad};

#[derive(Clone, Debug)]
pub struct FewshotGrads {
    pub loss: f64,
    pub f: MlpGrad,
    pub g: LinearGrad,
    pub correct: usize,
}

/// NLL of classifying `g(f(x))` against fixed `prototypes`.
pub fn fewshot_objective(
    f: &Mlp2,
    g: &LinearMap,
    prototypes: &Matrix,
    x: &Matrix,
    gold: &[usize],
    mask: Option<alloc::vec::Vec<f64>>,
) -> FewshotGrads {
    let cache = f.forward_cached(x, mask);
    let y = g.forward(&cache.output);
    let pl = proto_nll_batch(&y, prototypes, gold);
    let (gg, grad_z) = g.backward(&cache.output, &pl.grad_z);
    let (fg, _) = f.backward(&cache, &grad_z);
    FewshotGrads {
        loss: pl.loss,
        f: fg,
        g: gg,
        correct: pl.correct,
    }
}

/// Loss and gradient for `g` alone, given precomputed features `z = f(x)`.
pub fn adapter_objective(g: &LinearMap, prototypes: &Matrix, z: &Matrix, gold: &[usize]) -> (f64, LinearGrad) {
    let y = g.forward(z);
    let pl = proto_nll_batch(&y, prototypes, gold);
    let (gg, _) = g.backward(z, &pl.grad_z);
    (pl.loss, gg)
}

#[derive(Clone, Debug)]
pub struct ZeroshotGrads {
    pub loss: f64,
    pub f: MlpGrad,
    pub h: LinearGrad,
    pub correct: usize,
}

/// NLL of classifying `f(x)` against unified prototypes `h(c)`.
pub fn zeroshot_objective(
    f: &Mlp2,
    h: &LinearMap,
    source_prototypes: &Matrix,
    x: &Matrix,
    gold: &[usize],
    mask: Option<alloc::vec::Vec<f64>>,
) -> ZeroshotGrads {
    let cache = f.forward_cached(x, mask);
    let unified = h.forward(source_prototypes);
    let pl = proto_nll_batch(&cache.output, &unified, gold);
    let (hg, _) = h.backward(source_prototypes, &pl.grad_prototypes);
    let (fg, _) = f.backward(&cache, &pl.grad_z);
    ZeroshotGrads {
        loss: pl.loss,
        f: fg,
        h: hg,
        correct: pl.correct,
    }
}

/// NLL of classifying `f(x)` against prototypes that do not depend on any
/// parameter (demonstration means).
pub fn identity_prototype_objective(
    f: &Mlp2,
    prototypes: &Matrix,
    x: &Matrix,
    gold: &[usize],
    mask: Option<alloc::vec::Vec<f64>>,
) -> (f64, MlpGrad) {
    let cache = f.forward_cached(x, mask);
    let pl = proto_nll_batch(&cache.output, prototypes, gold);
    let (fg, _) = f.backward(&cache, &pl.grad_z);
    (pl.loss, fg)
}
