//! Central finite-difference checks of the hand-written gradients.
//!
//! [`run_suite`] draws small random problems for every training objective
//! (probe, few-shot, adapter, zero-shot, identity prototypes), each with an
//! explicit dropout mask, and compares the analytic gradient with a central
//! difference over every parameter.

use alloc::vec::Vec;

use rand::Rng as _;

use crate::linalg::Matrix;
use crate::metalearn::{adapter_objective, fewshot_objective, identity_prototype_objective, zeroshot_objective};
use crate::probe::probe_objective;
use crate::rng::{derive_seed, seeded, Rng};
use crate::tensor::{LinearMap, Mlp2};

/// Step used by [`run_suite`].
pub const DEFAULT_EPS: f64 = 1e-5;

/// Concatenates parameter slices.
pub fn flatten(slices: &[&[f64]]) -> Vec<f64> {
    slices.iter().flat_map(|s| s.iter().copied()).collect()
}

/// Writes `flat` back into parameter slices laid out as by [`flatten`].
pub fn load(dst: Vec<&mut [f64]>, flat: &[f64]) {
    let mut at = 0;
    for s in dst {
        s.copy_from_slice(&flat[at..at + s.len()]);
        at += s.len();
    }
    assert_eq!(at, flat.len(), "parameter count mismatch");
}

/// `(f(θ + εe_i) − f(θ − εe_i)) / 2ε` for every coordinate.
pub fn central_difference(theta: &[f64], eps: f64, mut f: impl FnMut(&[f64]) -> f64) -> Vec<f64> {
    let mut t = theta.to_vec();
    (0..t.len())
        .map(|i| {
            let orig = t[i];
            t[i] = orig + eps;
            let up = f(&t);
            t[i] = orig - eps;
            let down = f(&t);
            t[i] = orig;
            (up - down) / (2.0 * eps)
        })
        .collect()
}

/// `‖a − b‖ / max(‖a‖, ‖b‖)`, or 0 when both vanish.
pub fn relative_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let norm = |v: &mut dyn Iterator<Item = f64>| libm::sqrt(v.map(|x| x * x).sum::<f64>());
    let diff = norm(&mut a.iter().zip(b).map(|(x, y)| x - y));
    let scale = norm(&mut a.iter().copied()).max(norm(&mut b.iter().copied()));
    if scale == 0.0 {
        0.0
    } else {
        diff / scale
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Objective {
    Probe,
    Fewshot,
    Adapter,
    Zeroshot,
    IdentityPrototype,
}

impl Objective {
    pub const ALL: [Objective; 5] = [
        Objective::Probe,
        Objective::Fewshot,
        Objective::Adapter,
        Objective::Zeroshot,
        Objective::IdentityPrototype,
    ];
}

#[derive(Clone, Debug, PartialEq)]
pub struct CheckResult {
    pub objective: Objective,
    pub n_params: usize,
    pub relative_error: f64,
}

fn random_matrix(rows: usize, cols: usize, rng: &mut Rng) -> Matrix {
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-1.0..1.0))
}

fn random_affine(dim_in: usize, dim_out: usize, rng: &mut Rng) -> LinearMap {
    let b = (0..dim_out).map(|_| rng.random_range(-0.5..0.5)).collect();
    LinearMap::from_parts(random_matrix(dim_out, dim_in, rng), Some(b))
}

fn random_mlp(n: usize, h: usize, m: usize, rng: &mut Rng) -> Mlp2 {
    Mlp2::from_layers(random_affine(n, h, rng), random_affine(h, m, rng), 0.3)
}

/// One random instance of `objective`.
pub fn check_instance(objective: Objective, seed: u64, eps: f64) -> CheckResult {
    let mut rng = seeded(seed);
    let n = rng.random_range(2..6);
    let h = rng.random_range(3..8);
    let m = rng.random_range(2..5);
    let k = rng.random_range(2..5);
    let b = rng.random_range(1..6);
    let gold: Vec<usize> = (0..b).map(|_| rng.random_range(0..k)).collect();
    let x = random_matrix(b, n, &mut rng);
    let (analytic, numeric) = match objective {
        Objective::Probe => {
            let a = LinearMap::from_parts(random_matrix(m, n, &mut rng), None);
            let means = random_matrix(k, n, &mut rng);
            let (_, g) = probe_objective(&a, &x, &means, &gold);
            let theta = flatten(&a.param_slices());
            let num = central_difference(&theta, eps, |t| {
                let mut a = a.clone();
                load(a.param_slices_mut(), t);
                probe_objective(&a, &x, &means, &gold).0
            });
            (g.into_vec(), num)
        }
        Objective::Fewshot => {
            let f = random_mlp(n, h, m, &mut rng);
            let g = random_affine(m, m, &mut rng);
            let protos = random_matrix(k, m, &mut rng);
            let mask = f.dropout_mask(b, &mut rng);
            let r = fewshot_objective(&f, &g, &protos, &x, &gold, Some(mask.clone()));
            let mut grad = flatten(&r.f.slices());
            grad.extend(flatten(&r.g.slices()));
            let nf = f.param_slices().iter().map(|s| s.len()).sum::<usize>();
            let mut theta = flatten(&f.param_slices());
            theta.extend(flatten(&g.param_slices()));
            let num = central_difference(&theta, eps, |t| {
                let (mut f, mut g) = (f.clone(), g.clone());
                load(f.param_slices_mut(), &t[..nf]);
                load(g.param_slices_mut(), &t[nf..]);
                fewshot_objective(&f, &g, &protos, &x, &gold, Some(mask.clone())).loss
            });
            (grad, num)
        }
        Objective::Adapter => {
            let g = random_affine(m, m, &mut rng);
            let protos = random_matrix(k, m, &mut rng);
            let z = random_matrix(b, m, &mut rng);
            let (_, grad) = adapter_objective(&g, &protos, &z, &gold);
            let theta = flatten(&g.param_slices());
            let num = central_difference(&theta, eps, |t| {
                let mut g = g.clone();
                load(g.param_slices_mut(), t);
                adapter_objective(&g, &protos, &z, &gold).0
            });
            (flatten(&grad.slices()), num)
        }
        Objective::Zeroshot => {
            let f = random_mlp(n, h, m, &mut rng);
            let hm = random_affine(m, m, &mut rng);
            let protos = random_matrix(k, m, &mut rng);
            let mask = f.dropout_mask(b, &mut rng);
            let r = zeroshot_objective(&f, &hm, &protos, &x, &gold, Some(mask.clone()));
            let mut grad = flatten(&r.f.slices());
            grad.extend(flatten(&r.h.slices()));
            let nf = f.param_slices().iter().map(|s| s.len()).sum::<usize>();
            let mut theta = flatten(&f.param_slices());
            theta.extend(flatten(&hm.param_slices()));
            let num = central_difference(&theta, eps, |t| {
                let (mut f, mut hm) = (f.clone(), hm.clone());
                load(f.param_slices_mut(), &t[..nf]);
                load(hm.param_slices_mut(), &t[nf..]);
                zeroshot_objective(&f, &hm, &protos, &x, &gold, Some(mask.clone())).loss
            });
            (grad, num)
        }
        Objective::IdentityPrototype => {
            let f = random_mlp(n, h, n, &mut rng);
            let protos = random_matrix(k, n, &mut rng);
            let mask = f.dropout_mask(b, &mut rng);
            let (_, grad) = identity_prototype_objective(&f, &protos, &x, &gold, Some(mask.clone()));
            let theta = flatten(&f.param_slices());
            let num = central_difference(&theta, eps, |t| {
                let mut f = f.clone();
                load(f.param_slices_mut(), t);
                identity_prototype_objective(&f, &protos, &x, &gold, Some(mask.clone())).0
            });
            (flatten(&grad.slices()), num)
        }
    };
    CheckResult {
        objective,
        n_params: analytic.len(),
        relative_error: relative_error(&analytic, &numeric),
    }
}

/// `per_objective` random instances of every objective.
pub fn run_suite(per_objective: usize, seed: u64) -> Vec<CheckResult> {
    let mut out = Vec::with_capacity(per_objective * Objective::ALL.len());
    for (oi, &obj) in Objective::ALL.iter().enumerate() {
        for i in 0..per_objective {
            let s = derive_seed(seed, (oi as u64) << 32 | i as u64);
            out.push(check_instance(obj, s, DEFAULT_EPS));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn difference_of_a_quadratic_is_exact() {
        let g = central_difference(&[1.0, -2.0, 0.5], 1e-3, |t| t[0] * t[0] + 3.0 * t[1] - t[2] * t[0]);
        let want = [2.0 - 0.5, 3.0, -1.0];
        assert!(relative_error(&g, &want) < 1e-10);
    }

    #[test]
    fn relative_error_edge_cases() {
        assert_eq!(relative_error(&[0.0, 0.0], &[0.0, 0.0]), 0.0);
        assert_eq!(relative_error(&[1.0, 0.0], &[0.0, 0.0]), 1.0);
        assert!((relative_error(&[3.0, 4.0], &[3.0, 4.5]) - 0.5 / libm::sqrt(9.0 + 20.25)).abs() < 1e-15);
    }

    #[test]
    fn flatten_and_load_round_trip() {
        let mut f = random_mlp(3, 4, 2, &mut seeded(1));
        let theta = flatten(&f.param_slices());
        assert_eq!(theta.len(), 3 * 4 + 4 + 4 * 2 + 2);
        let doubled: Vec<f64> = theta.iter().map(|v| 2.0 * v).collect();
        load(f.param_slices_mut(), &doubled);
        assert_eq!(flatten(&f.param_slices()), doubled);
    }

    #[test]
    fn analytic_gradients_match_finite_differences() {
        let results = run_suite(25, 11);
        assert_eq!(results.len(), 125);
        for r in &results {
            assert!(r.relative_error < 1e-6, "{r:?}");
        }
    }

    #[test]
    fn a_wrong_gradient_is_detected() {
        // dropping the prototype path of the probe loss must be caught
        let mut rng = seeded(3);
        let a = LinearMap::from_parts(random_matrix(3, 4, &mut rng), None);
        let x = random_matrix(5, 4, &mut rng);
        let means = random_matrix(3, 4, &mut rng);
        let gold = [0, 1, 2, 1, 0];
        let z = a.forward(&x);
        let c = a.forward(&means);
        let pl = crate::tensor::proto_nll_batch(&z, &c, &gold);
        let partial = LinearMap::weight_grad(&x, &pl.grad_z).into_vec();
        let num = central_difference(&flatten(&a.param_slices()), DEFAULT_EPS, |t| {
            let mut a = a.clone();
            load(a.param_slices_mut(), t);
            probe_objective(&a, &x, &means, &gold).0
        });
        assert!(relative_error(&partial, &num) > 1e-3);
    }
}
