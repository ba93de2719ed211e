use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use super::linear::{LinearGrad, LinearMap};
use crate::linalg::Matrix;
use crate::rng::Rng;

/// Two-layer perceptron `n -> h -> m` with ReLU and inverted dropout on the
/// hidden layer.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Mlp2 {
    pub layer1: LinearMap,
    pub layer2: LinearMap,
    dropout_p: f64,
}

/// Intermediate values kept for the backward pass.
#[derive(Clone, Debug)]
pub struct MlpCache {
    input: Matrix,
    pre: Matrix,
    hidden: Matrix,
    mask: Option<Vec<f64>>,
    pub output: Matrix,
}

#[derive(Clone, Debug, PartialEq)]
pub struct MlpGrad {
    pub layer1: LinearGrad,
    pub layer2: LinearGrad,
}

impl MlpGrad {
    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v = self.layer1.slices();
        v.extend(self.layer2.slices());
        v
    }
}

impl Mlp2 {
    pub fn new(input: usize, hidden: usize, output: usize, dropout_p: f64, rng: &mut Rng) -> Self {
        assert!((0.0..1.0).contains(&dropout_p), "dropout must be in [0, 1)");
        Self {
            layer1: LinearMap::uniform(input, hidden, true, rng),
            layer2: LinearMap::uniform(hidden, output, true, rng),
            dropout_p,
        }
    }

    pub fn from_layers(layer1: LinearMap, layer2: LinearMap, dropout_p: f64) -> Self {
        assert_eq!(layer1.output_dim(), layer2.input_dim(), "layer shapes do not chain");
        assert!((0.0..1.0).contains(&dropout_p), "dropout must be in [0, 1)");
        Self {
            layer1,
            layer2,
            dropout_p,
        }
    }

    pub fn dropout_p(&self) -> f64 {
        self.dropout_p
    }

    pub fn input_dim(&self) -> usize {
        self.layer1.input_dim()
    }

    pub fn hidden_dim(&self) -> usize {
        self.layer1.output_dim()
    }

    pub fn output_dim(&self) -> usize {
        self.layer2.output_dim()
    }

    /// Draws an inverted-dropout mask: each unit is kept with probability
    /// `1 - p` and then scaled by `1 / (1 - p)`.
    pub fn dropout_mask(&self, rows: usize, rng: &mut Rng) -> Vec<f64> {
        let keep = 1.0 - self.dropout_p;
        let scale = 1.0 / keep;
        (0..rows * self.hidden_dim())
            .map(|_| if rng.random::<f64>() < keep { scale } else { 0.0 })
            .collect()
    }

    /// Inference-mode forward pass (no dropout).
    pub fn forward(&self, x: &Matrix) -> Matrix {
        self.forward_cached(x, None).output
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let h: Vec<f64> = self.layer1.apply(x).into_iter().map(|v| v.max(0.0)).collect();
        self.layer2.apply(&h)
    }

    /// Training-mode forward pass; dropout is active when `p > 0`.
    pub fn forward_train(&self, x: &Matrix, rng: &mut Rng) -> MlpCache {
        let mask = (self.dropout_p > 0.0).then(|| self.dropout_mask(x.rows(), rng));
        self.forward_cached(x, mask)
    }

    /// Forward pass with an explicit dropout mask (`batch x hidden`, entries
    /// already scaled) or none.
    pub fn forward_cached(&self, x: &Matrix, mask: Option<Vec<f64>>) -> MlpCache {
        let pre = self.layer1.forward(x);
        let mut hidden = pre.clone();
        for v in hidden.as_mut_slice() {
            *v = v.max(0.0);
        }
        if let Some(m) = &mask {
            assert_eq!(m.len(), hidden.as_slice().len(), "dropout mask shape");
            hidden.as_mut_slice().iter_mut().zip(m).for_each(|(h, k)| *h *= k);
        }
        let output = self.layer2.forward(&hidden);
        MlpCache {
            input: x.clone(),
            pre,
            hidden,
            mask,
            output,
        }
    }

    pub fn backward(&self, cache: &MlpCache, grad_out: &Matrix) -> (MlpGrad, Matrix) {
        let (g2, mut gh) = self.layer2.backward(&cache.hidden, grad_out);
        if let Some(m) = &cache.mask {
            gh.as_mut_slice().iter_mut().zip(m).for_each(|(g, k)| *g *= k);
        }
        for (g, &p) in gh.as_mut_slice().iter_mut().zip(cache.pre.as_slice()) {
            if p <= 0.0 {
                *g = 0.0;
            }
        }
        let (g1, gx) = self.layer1.backward(&cache.input, &gh);
        (MlpGrad { layer1: g1, layer2: g2 }, gx)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.layer1.param_slices_mut();
        v.extend(self.layer2.param_slices_mut());
        v
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.layer1.param_slices();
        v.extend(self.layer2.param_slices());
        v
    }

    /// FNV-1a over the bit patterns of every parameter; used to assert that
    /// frozen networks stay untouched.
    pub fn checksum(&self) -> u64 {
        let mut bytes = Vec::new();
        for s in self.param_slices() {
            for v in s {
                bytes.extend_from_slice(&v.to_bits().to_le_bytes());
            }
        }
        crate::featurestore::fnv1a64(&bytes)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::seeded;

    #[test]
    fn masks_are_reproducible_and_scaled() {
        let mlp = Mlp2::new(3, 50, 2, 0.33, &mut seeded(0));
        let a = mlp.dropout_mask(4, &mut seeded(9));
        let b = mlp.dropout_mask(4, &mut seeded(9));
        assert_eq!(a, b);
        let scale = 1.0 / 0.67;
        assert!(a.iter().all(|&k| k == 0.0 || (k - scale).abs() < 1e-15));
        let dropped = a.iter().filter(|&&k| k == 0.0).count() as f64 / a.len() as f64;
        assert!((0.2..0.46).contains(&dropped), "{dropped}");
    }

    #[test]
    fn eval_forward_matches_apply() {
        let mlp = Mlp2::new(4, 6, 3, 0.5, &mut seeded(1));
        let x = Matrix::from_fn(2, 4, |i, j| (i as f64) - 0.3 * j as f64);
        let y = mlp.forward(&x);
        for i in 0..2 {
            let a = mlp.apply(x.row(i));
            for (p, q) in y.row(i).iter().zip(&a) {
                assert!((p - q).abs() < 1e-14);
            }
        }
    }

    #[test]
    fn zero_dropout_draws_no_mask() {
        let mlp = Mlp2::new(2, 3, 2, 0.0, &mut seeded(1));
        let x = Matrix::from_vec(1, 2, alloc::vec![0.2, -0.1]);
        let c = mlp.forward_train(&x, &mut seeded(2));
        assert_eq!(c.output, mlp.forward(&x));
    }
}
