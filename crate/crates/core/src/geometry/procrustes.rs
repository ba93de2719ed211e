//! Orthogonal Procrustes fit between two point configurations, scored as
//! explained variance.
//!
//! Both configurations are centered and scaled to unit Frobenius norm. The
//! orthogonal map and dilation that best carry the second onto the first come
//! from the SVD of `p1^T p2`; the score is the coefficient of determination
//! of the fitted second configuration as a predictor of the first, computed
//! per column and averaged uniformly.

use alloc::vec;

use super::GeometryError;
use crate::linalg::{svd, Matrix};

/// Centers the columns and scales to unit Frobenius norm.
pub fn standardize(p: &Matrix) -> Result<Matrix, GeometryError> {
    let scale = p.frobenius_norm();
    let means = p.column_means();
    let mut c = p.clone();
    for i in 0..c.rows() {
        for (v, m) in c.row_mut(i).iter_mut().zip(&means) {
            *v -= m;
        }
    }
    let norm = c.frobenius_norm();
    // identical points leave only rounding noise after centering
    if !norm.is_finite() || norm <= 1e-12 * scale || norm == 0.0 {
        return Err(GeometryError::Degenerate);
    }
    c.scale(1.0 / norm);
    Ok(c)
}

/// `p2` after the optimal orthogonal map and dilation onto `p1`; both
/// returned standardized.
pub fn procrustes_fit(p1: &Matrix, p2: &Matrix) -> Result<(Matrix, Matrix), GeometryError> {
    if p1.rows() != p2.rows() || p1.cols() != p2.cols() {
        return Err(GeometryError::Shape(alloc::format!(
            "{}x{} vs {}x{}",
            p1.rows(),
            p1.cols(),
            p2.rows(),
            p2.cols()
        )));
    }
    if p1.rows() < 2 {
        return Err(GeometryError::TooFewConcepts(p1.rows()));
    }
    let a = standardize(p1)?;
    let b = standardize(p2)?;
    let d = svd(&a.t_matmul(&b));
    let dilation: f64 = d.s.iter().sum();
    // R = U V^T maps a onto b; b R^T = b V U^T carries b back onto a
    let v_ut = d.vt.t_matmul(&d.u.transpose());
    let mut fitted = b.matmul(&v_ut);
    fitted.scale(dilation);
    Ok((a, fitted))
}

/// Per-column coefficient of determination of `y_pred` for `y_true`,
/// uniformly averaged. A constant target column scores 1 when predicted
/// exactly and 0 otherwise.
pub fn r2_uniform(y_true: &Matrix, y_pred: &Matrix) -> f64 {
    let (n, m) = (y_true.rows(), y_true.cols());
    let means = y_true.column_means();
    let mut ss_res = vec![0.0; m];
    let mut ss_tot = vec![0.0; m];
    for i in 0..n {
        for j in 0..m {
            let t = y_true[(i, j)];
            let e = t - y_pred[(i, j)];
            ss_res[j] += e * e;
            let c = t - means[j];
            ss_tot[j] += c * c;
        }
    }
    let score: f64 = ss_res
        .iter()
        .zip(&ss_tot)
        .map(|(&res, &tot)| match (tot == 0.0, res == 0.0) {
            (false, _) => 1.0 - res / tot,
            (true, true) => 1.0,
            (true, false) => 0.0,
        })
        .sum();
    score / m as f64
}

/// Average explained variance after Procrustes alignment of `p2` onto `p1`.
pub fn procrustes_alignability(p1: &Matrix, p2: &Matrix) -> Result<f64, GeometryError> {
    let (a, fitted) = procrustes_fit(p1, p2)?;
    Ok(r2_uniform(&a, &fitted))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qr_orthogonal;
    use crate::rng::seeded;
    use rand::Rng as _;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    /// Independent computation with nalgebra's SVD, written out step by
    /// step with explicit loops.
    fn oracle(p1: &Matrix, p2: &Matrix) -> f64 {
        use nalgebra::DMatrix;
        let to_na = |p: &Matrix| DMatrix::from_fn(p.rows(), p.cols(), |i, j| p[(i, j)]);
        let std = |x: DMatrix<f64>| {
            let mut x = x;
            for j in 0..x.ncols() {
                let mean = x.column(j).mean();
                for i in 0..x.nrows() {
                    x[(i, j)] -= mean;
                }
            }
            let norm = x.norm();
            x / norm
        };
        let a = std(to_na(p1));
        let b = std(to_na(p2));
        let m = a.transpose() * &b;
        let svd = m.svd(true, true);
        let u = svd.u.unwrap();
        let vt = svd.v_t.unwrap();
        let s: f64 = svd.singular_values.iter().sum();
        let r = u * vt;
        let fitted = (&b * r.transpose()) * s;
        let mut total = 0.0;
        for j in 0..a.ncols() {
            let mean = a.column(j).mean();
            let mut res = 0.0;
            let mut tot = 0.0;
            for i in 0..a.nrows() {
                res += (a[(i, j)] - fitted[(i, j)]).powi(2);
                tot += (a[(i, j)] - mean).powi(2);
            }
            total += if tot == 0.0 {
                if res == 0.0 { 1.0 } else { 0.0 }
            } else {
                1.0 - res / tot
            };
        }
        total / a.ncols() as f64
    }

    #[test]
    fn exact_orthogonal_match_scores_one() {
        let p1 = gaussian(17, 6, 1);
        let q = qr_orthogonal(&gaussian(6, 6, 2));
        let mut p2 = p1.matmul(&q);
        for i in 0..p2.rows() {
            for (j, v) in p2.row_mut(i).iter_mut().enumerate() {
                *v += 10.0 + j as f64;
            }
        }
        let ev = procrustes_alignability(&p1, &p2).unwrap();
        assert!((ev - 1.0).abs() < 1e-9, "{ev}");
    }

    #[test]
    fn scaled_copy_scores_one() {
        let p1 = gaussian(9, 4, 3);
        let mut p2 = p1.clone();
        p2.scale(3.0);
        assert!((procrustes_alignability(&p1, &p2).unwrap() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn hand_built_triangles_match_oracle() {
        let p1 = Matrix::from_rows(&[[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]);
        let p2 = Matrix::from_rows(&[[0.0, 0.0], [2.0, 0.5], [0.3, 1.0]]);
        let ev = procrustes_alignability(&p1, &p2).unwrap();
        assert!((ev - oracle(&p1, &p2)).abs() < 1e-9);
        assert!(ev < 1.0 && ev > 0.0);
    }

    #[test]
    fn random_small_configs_match_oracle() {
        let mut rng = seeded(4);
        for t in 0..50 {
            let k = rng.random_range(2..=5);
            let m = rng.random_range(1..=4);
            let p1 = gaussian(k, m, 100 + t);
            let p2 = gaussian(k, m, 200 + t);
            let ev = procrustes_alignability(&p1, &p2).unwrap();
            let o = oracle(&p1, &p2);
            assert!((ev - o).abs() <= 1e-9, "k={k} m={m}: {ev} vs {o}");
        }
    }

    #[test]
    fn degenerate_configuration_is_an_error() {
        let same = Matrix::from_rows(&[[0.3, 1.1], [0.3, 1.1], [0.3, 1.1]]);
        let ok = gaussian(3, 2, 5);
        assert_eq!(procrustes_alignability(&same, &ok), Err(GeometryError::Degenerate));
        assert_eq!(procrustes_alignability(&ok, &same), Err(GeometryError::Degenerate));
    }

    #[test]
    fn symmetric_for_exact_matches_and_translation_invariant() {
        let p1 = gaussian(7, 3, 6);
        let q = qr_orthogonal(&gaussian(3, 3, 7));
        let p2 = p1.matmul(&q);
        let a = procrustes_alignability(&p1, &p2).unwrap();
        let b = procrustes_alignability(&p2, &p1).unwrap();
        assert!((a - b).abs() < 1e-12);
        let p3 = gaussian(7, 3, 8);
        let mut shifted = p3.clone();
        shifted.as_mut_slice().iter_mut().for_each(|v| *v = 2.0 * *v - 4.0);
        let base = procrustes_alignability(&p1, &p3).unwrap();
        assert!((base - procrustes_alignability(&p1, &shifted).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn score_never_exceeds_one() {
        for s in 0..20 {
            let ev = procrustes_alignability(&gaussian(10, 5, s), &gaussian(10, 5, s + 50)).unwrap();
            assert!(ev <= 1.0 + 1e-12);
        }
    }
}
