use alloc::vec;
use alloc::vec::Vec;

use crate::linalg::{squared_distance, Matrix};

/// Negative squared Euclidean distance from `z` to every prototype row.
pub fn proto_logits(z: &[f64], prototypes: &Matrix) -> Vec<f64> {
    prototypes.row_iter().map(|c| -squared_distance(z, c)).collect()
}

/// Numerically stable softmax (max subtracted before exponentiation).
pub fn softmax(logits: &[f64]) -> Vec<f64> {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut e: Vec<f64> = logits.iter().map(|l| libm::exp(l - max)).collect();
    let s: f64 = e.iter().sum();
    e.iter_mut().for_each(|x| *x /= s);
    e
}

/// `-log softmax(logits)[gold]` and its gradient `softmax - onehot(gold)`.
pub fn softmax_nll(logits: &[f64], gold: usize) -> (f64, Vec<f64>) {
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let sum: f64 = logits.iter().map(|l| libm::exp(l - max)).sum();
    let log_z = max + libm::log(sum);
    let loss = log_z - logits[gold];
    let mut grad: Vec<f64> = logits.iter().map(|l| libm::exp(l - log_z)).collect();
    grad[gold] -= 1.0;
    (loss, grad)
}

/// Index of the largest value; ties go to the lowest index.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Mean prototype-softmax NLL over a batch plus gradients w.r.t. the
/// projected samples and the prototypes.
#[derive(Clone, Debug)]
pub struct ProtoLoss {
    pub loss: f64,
    pub grad_z: Matrix,
    pub grad_prototypes: Matrix,
    pub correct: usize,
}

/// Loss of classifying each row of `z` by softmax over negative squared
/// distances to `prototypes`, averaged over the batch.
pub fn proto_nll_batch(z: &Matrix, prototypes: &Matrix, gold: &[usize]) -> ProtoLoss {
    assert_eq!(z.rows(), gold.len(), "batch/label mismatch");
    assert_eq!(z.cols(), prototypes.cols(), "prototype dim mismatch");
    let b = z.rows();
    let inv_b = 1.0 / b.max(1) as f64;
    let mut loss = 0.0;
    let mut correct = 0;
    let mut grad_z = Matrix::zeros(b, z.cols());
    let mut grad_p = Matrix::zeros(prototypes.rows(), prototypes.cols());
    let mut diff = vec![0.0; z.cols()];
    for i in 0..b {
        let zi = z.row(i);
        let logits = proto_logits(zi, prototypes);
        if argmax(&logits) == gold[i] {
            correct += 1;
        }
        let (l, g) = softmax_nll(&logits, gold[i]);
        loss += l;
        // logit_k = -|z - c_k|^2 : d/dz = -2 (z - c_k), d/dc_k = 2 (z - c_k)
        for (k, &gk) in g.iter().enumerate() {
            if gk == 0.0 {
                continue;
            }
            let w = 2.0 * gk * inv_b;
            for ((d, &a), &c) in diff.iter_mut().zip(zi).zip(prototypes.row(k)) {
                *d = a - c;
            }
            for (gz, d) in grad_z.row_mut(i).iter_mut().zip(&diff) {
                *gz -= w * d;
            }
            for (gp, d) in grad_p.row_mut(k).iter_mut().zip(&diff) {
                *gp += w * d;
            }
        }
    }
    ProtoLoss {
        loss: loss * inv_b,
        grad_z,
        grad_prototypes: grad_p,
        correct,
    }
}
