use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;
use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Matrix};
use crate::rng::Rng;

/// Affine map `y = W x + b` with `W` stored `out x in`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LinearMap {
    weight: Matrix,
    bias: Option<Vec<f64>>,
}

/// Gradient of a scalar loss with respect to a [`LinearMap`].
#[derive(Clone, Debug, PartialEq)]
pub struct LinearGrad {
    pub weight: Matrix,
    pub bias: Option<Vec<f64>>,
}

impl LinearMap {
    /// Weights drawn from `U(-1/sqrt(in), 1/sqrt(in))`, bias zero.
    pub fn uniform(input: usize, output: usize, bias: bool, rng: &mut Rng) -> Self {
        let bound = 1.0 / libm::sqrt(input as f64);
        let weight = Matrix::from_fn(output, input, |_, _| rng.random_range(-bound..bound));
        Self {
            weight,
            bias: bias.then(|| vec![0.0; output]),
        }
    }

    pub fn identity(dim: usize, bias: bool) -> Self {
        Self {
            weight: Matrix::identity(dim),
            bias: bias.then(|| vec![0.0; dim]),
        }
    }

    pub fn from_parts(weight: Matrix, bias: Option<Vec<f64>>) -> Self {
        if let Some(b) = &bias {
            assert_eq!(b.len(), weight.rows(), "bias length must equal output dim");
        }
        Self { weight, bias }
    }

    pub fn input_dim(&self) -> usize {
        self.weight.cols()
    }

    pub fn output_dim(&self) -> usize {
        self.weight.rows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.weight
    }

    pub fn bias(&self) -> Option<&[f64]> {
        self.bias.as_deref()
    }

    pub fn is_finite(&self) -> bool {
        self.weight.is_finite() && self.bias.iter().flatten().all(|b| b.is_finite())
    }

    /// Applies the map to one vector.
    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        let mut y = self.weight.matvec(x);
        if let Some(b) = &self.bias {
            y.iter_mut().zip(b).for_each(|(y, b)| *y += b);
        }
        y
    }

    /// Applies the map to each row of `x` (`batch x in` -> `batch x out`).
    pub fn forward(&self, x: &Matrix) -> Matrix {
        let mut y = x.matmul_t(&self.weight);
        if let Some(b) = &self.bias {
            for i in 0..y.rows() {
                y.row_mut(i).iter_mut().zip(b).for_each(|(y, b)| *y += b);
            }
        }
        y
    }

    /// Backpropagates `grad_out` (`batch x out`) through the map applied to
    /// `x`, returning parameter gradients and the gradient w.r.t. `x`.
    pub fn backward(&self, x: &Matrix, grad_out: &Matrix) -> (LinearGrad, Matrix) {
        let grad = LinearGrad {
            weight: grad_out.t_matmul(x),
            bias: self.bias.as_ref().map(|_| column_sums(grad_out)),
        };
        (grad, grad_out.matmul(&self.weight))
    }

    /// Gradient w.r.t. the weight only, for an upstream gradient on
    /// `W x` with `x` given row-wise (`dW = G^T X`).
    pub fn weight_grad(x: &Matrix, grad_out: &Matrix) -> Matrix {
        grad_out.t_matmul(x)
    }

    pub fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v: Vec<&mut [f64]> = vec![self.weight.as_mut_slice()];
        if let Some(b) = &mut self.bias {
            v.push(b.as_mut_slice());
        }
        v
    }

    pub fn param_slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weight.as_slice()];
        if let Some(b) = &self.bias {
            v.push(b.as_slice());
        }
        v
    }

    pub fn n_params(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// Squared Frobenius deviation from orthogonality, `||W^T W - I||^2`,
    /// and its gradient w.r.t. `W`. Square maps only.
    pub fn orthogonality_penalty(&self) -> (f64, Matrix) {
        let w = &self.weight;
        let mut d = w.t_matmul(w);
        for i in 0..d.rows() {
            d[(i, i)] -= 1.0;
        }
        let value = dot(d.as_slice(), d.as_slice());
        let mut g = w.matmul(&d);
        g.scale(4.0);
        (value, g)
    }
}

impl LinearGrad {
    pub fn zeros_like(map: &LinearMap) -> Self {
        Self {
            weight: Matrix::zeros(map.output_dim(), map.input_dim()),
            bias: map.bias.as_ref().map(|b| vec![0.0; b.len()]),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut v: Vec<&[f64]> = vec![self.weight.as_slice()];
        if let Some(b) = &self.bias {
            v.push(b.as_slice());
        }
        v
    }

    pub fn add_assign(&mut self, other: &LinearGrad) {
        for (a, b) in self.weight.as_mut_slice().iter_mut().zip(other.weight.as_slice()) {
            *a += b;
        }
        if let (Some(a), Some(b)) = (&mut self.bias, &other.bias) {
            a.iter_mut().zip(b).for_each(|(a, b)| *a += b);
        }
    }
}

fn column_sums(m: &Matrix) -> Vec<f64> {
    let mut s = vec![0.0; m.cols()];
    for r in m.row_iter() {
        s.iter_mut().zip(r).for_each(|(s, x)| *s += x);
    }
    s
}
