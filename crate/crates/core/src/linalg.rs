//! Dense row-major matrices and the handful of decompositions the rest of
//! the crate needs.

use alloc::vec;
use alloc::vec::Vec;
use core::ops::{Index, IndexMut};

use serde::{Deserialize, Serialize};

/// Row-major `rows x cols` matrix of `f64`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn zeros(rows: usize, cols: usize) -> Self {
        Self {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn identity(n: usize) -> Self {
        let mut m = Self::zeros(n, n);
        for i in 0..n {
            m[(i, i)] = 1.0;
        }
        m
    }

    /// Builds a matrix from row-major data.
    ///
    /// Panics if `data.len() != rows * cols`.
    pub fn from_vec(rows: usize, cols: usize, data: Vec<f64>) -> Self {
        assert_eq!(data.len(), rows * cols, "matrix data has wrong length");
        Self { rows, cols, data }
    }

    /// Stacks equally sized rows. An empty iterator yields a `0 x 0` matrix.
    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Self {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            assert_eq!(r.as_ref().len(), cols, "ragged rows");
            data.extend_from_slice(r.as_ref());
        }
        Self {
            rows: rows.len(),
            cols,
            data,
        }
    }

    pub fn from_fn(rows: usize, cols: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(rows * cols);
        for i in 0..rows {
            for j in 0..cols {
                data.push(f(i, j));
            }
        }
        Self { rows, cols, data }
    }

    #[inline]
    pub fn rows(&self) -> usize {
        self.rows
    }

    #[inline]
    pub fn cols(&self) -> usize {
        self.cols
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    #[inline]
    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_iter(&self) -> impl Iterator<Item = &[f64]> {
        // chunks_exact panics on a zero chunk size
        let cols = self.cols.max(1);
        self.data.chunks_exact(cols).take(self.rows)
    }

    #[inline]
    pub fn as_slice(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn as_mut_slice(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.data
    }

    pub fn transpose(&self) -> Self {
        Self::from_fn(self.cols, self.rows, |i, j| self[(j, i)])
    }

    /// `self * other`.
    pub fn matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.rows, "matmul shape mismatch");
        let (n, p) = (self.cols, other.cols);
        let mut out = Matrix::zeros(self.rows, p);
        if p == 0 {
            return out;
        }
        // four output rows share each streamed row of `other`; every entry
        // still accumulates over k in order
        let mut blocks = out.data.chunks_exact_mut(4 * p);
        let mut i = 0;
        for block in &mut blocks {
            let (o0, rest) = block.split_at_mut(p);
            let (o1, rest) = rest.split_at_mut(p);
            let (o2, o3) = rest.split_at_mut(p);
            for k in 0..n {
                let a = [self[(i, k)], self[(i + 1, k)], self[(i + 2, k)], self[(i + 3, k)]];
                let b = &other.data[k * p..(k + 1) * p];
                let rows = o0.iter_mut().zip(o1.iter_mut()).zip(o2.iter_mut().zip(o3.iter_mut()));
                for (((x0, x1), (x2, x3)), &bj) in rows.zip(b) {
                    *x0 += a[0] * bj;
                    *x1 += a[1] * bj;
                    *x2 += a[2] * bj;
                    *x3 += a[3] * bj;
                }
            }
            i += 4;
        }
        for o in blocks.into_remainder().chunks_exact_mut(p) {
            for k in 0..n {
                let aik = self[(i, k)];
                for (oj, &bkj) in o.iter_mut().zip(&other.data[k * p..(k + 1) * p]) {
                    *oj += aik * bkj;
                }
            }
            i += 1;
        }
        out
    }

    /// `self * other^T`.
    pub fn matmul_t(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.cols, other.cols, "matmul_t shape mismatch");
        // the row-streaming kernel is faster than per-entry dot products
        self.matmul(&other.transpose())
    }

    /// `self^T * other`.
    pub fn t_matmul(&self, other: &Matrix) -> Matrix {
        assert_eq!(self.rows, other.rows, "t_matmul shape mismatch");
        let mut out = Matrix::zeros(self.cols, other.cols);
        for k in 0..self.rows {
            let a = self.row(k);
            let b = other.row(k);
            for (i, &aki) in a.iter().enumerate() {
                if aki == 0.0 {
                    continue;
                }
                for (oj, &bkj) in out.row_mut(i).iter_mut().zip(b) {
                    *oj += aki * bkj;
                }
            }
        }
        out
    }

    /// `self * v` for a column vector `v`.
    pub fn matvec(&self, v: &[f64]) -> Vec<f64> {
        assert_eq!(self.cols, v.len(), "matvec shape mismatch");
        self.row_iter().map(|r| dot(r, v)).collect()
    }

    pub fn scale(&mut self, s: f64) {
        self.data.iter_mut().for_each(|x| *x *= s);
    }

    pub fn column_means(&self) -> Vec<f64> {
        let mut means = vec![0.0; self.cols];
        for r in self.row_iter() {
            for (m, &x) in means.iter_mut().zip(r) {
                *m += x;
            }
        }
        let n = self.rows.max(1) as f64;
        means.iter_mut().for_each(|m| *m /= n);
        means
    }

    pub fn frobenius_norm(&self) -> f64 {
        libm::sqrt(self.data.iter().map(|x| x * x).sum())
    }

    /// Gathers the listed rows into a new matrix.
    pub fn select_rows(&self, idx: &[usize]) -> Matrix {
        let mut data = Vec::with_capacity(idx.len() * self.cols);
        for &i in idx {
            data.extend_from_slice(self.row(i));
        }
        Matrix::from_vec(idx.len(), self.cols, data)
    }

    pub fn is_finite(&self) -> bool {
        self.data.iter().all(|x| x.is_finite())
    }
}

impl Index<(usize, usize)> for Matrix {
    type Output = f64;

    #[inline]
    fn index(&self, (i, j): (usize, usize)) -> &f64 {
        &self.data[i * self.cols + j]
    }
}

impl IndexMut<(usize, usize)> for Matrix {
    #[inline]
    fn index_mut(&mut self, (i, j): (usize, usize)) -> &mut f64 {
        &mut self.data[i * self.cols + j]
    }
}

#[inline]
pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    // four independent lanes so the loop vectorizes; order is fixed
    let n = a.len().min(b.len());
    let (ac, ar) = a[..n].split_at(n - n % 4);
    let (bc, br) = b[..n].split_at(n - n % 4);
    let mut acc = [0.0f64; 4];
    for (x, y) in ac.chunks_exact(4).zip(bc.chunks_exact(4)) {
        for l in 0..4 {
            acc[l] += x[l] * y[l];
        }
    }
    let tail: f64 = ar.iter().zip(br).map(|(x, y)| x * y).sum();
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

/// Thin singular value decomposition `a = u * diag(s) * vt`.
///
/// With `k = min(rows, cols)`, `u` is `rows x k` and `vt` is `k x cols`.
/// Columns of `u` belonging to zero singular values are completed to an
/// orthonormal set. Singular values are sorted descending.
#[derive(Clone, Debug)]
pub struct Svd {
    pub u: Matrix,
    pub s: Vec<f64>,
    pub vt: Matrix,
}

const JACOBI_MAX_SWEEPS: usize = 100;

/// One-sided Jacobi SVD. Accurate to working precision for the small
/// dense matrices used in Procrustes fitting.
pub fn svd(a: &Matrix) -> Svd {
    if a.rows() < a.cols() {
        // a^T = v s u^T
        let t = svd(&a.transpose());
        return Svd {
            u: t.vt.transpose(),
            s: t.s,
            vt: t.u.transpose(),
        };
    }
    let (m, n) = (a.rows(), a.cols());
    // Work on columns: store a^T so each column is a contiguous row.
    let mut w = a.transpose();
    let mut v = Matrix::identity(n);
    for _ in 0..JACOBI_MAX_SWEEPS {
        let mut rotated = false;
        for p in 0..n {
            for q in (p + 1)..n {
                let alpha = dot(w.row(p), w.row(p));
                let beta = dot(w.row(q), w.row(q));
                let gamma = dot(w.row(p), w.row(q));
                if gamma == 0.0 || libm::fabs(gamma) <= f64::EPSILON * libm::sqrt(alpha * beta) {
                    continue;
                }
                rotated = true;
                let zeta = (beta - alpha) / (2.0 * gamma);
                let t = libm::copysign(1.0, zeta) / (libm::fabs(zeta) + libm::sqrt(1.0 + zeta * zeta));
                let c = 1.0 / libm::sqrt(1.0 + t * t);
                let s = c * t;
                rotate_rows(&mut w, p, q, c, s);
                rotate_rows(&mut v, p, q, c, s);
            }
        }
        if !rotated {
            break;
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let norms: Vec<f64> = (0..n).map(|j| libm::sqrt(dot(w.row(j), w.row(j)))).collect();
    order.sort_by(|&i, &j| norms[j].total_cmp(&norms[i]).then(i.cmp(&j)));

    let s: Vec<f64> = order.iter().map(|&j| norms[j]).collect();
    let tol = s.first().copied().unwrap_or(0.0) * f64::EPSILON * (m.max(n) as f64);

    // u columns stored as rows of `ut` while we orthonormalize.
    let mut ut = Matrix::zeros(n, m);
    let mut vt = Matrix::zeros(n, n);
    let mut filled = Vec::with_capacity(n);
    for (k, &j) in order.iter().enumerate() {
        vt.row_mut(k).copy_from_slice(v.row(j));
        if norms[j] > tol {
            let inv = 1.0 / norms[j];
            for (dst, &x) in ut.row_mut(k).iter_mut().zip(w.row(j)) {
                *dst = x * inv;
            }
            filled.push(k);
        }
    }
    complete_orthonormal_rows(&mut ut, &filled);
    Svd {
        u: ut.transpose(),
        s,
        vt,
    }
}

fn rotate_rows(w: &mut Matrix, p: usize, q: usize, c: f64, s: f64) {
    let cols = w.cols();
    for k in 0..cols {
        let wp = w[(p, k)];
        let wq = w[(q, k)];
        w[(p, k)] = c * wp - s * wq;
        w[(q, k)] = s * wp + c * wq;
    }
}

/// Fills the rows of `ut` not listed in `filled` with unit vectors
/// orthogonal to every other row (Gram-Schmidt against the standard basis).
fn complete_orthonormal_rows(ut: &mut Matrix, filled: &[usize]) {
    let (k, m) = (ut.rows(), ut.cols());
    let mut done: Vec<usize> = filled.to_vec();
    let mut basis = 0;
    for r in 0..k {
        if filled.contains(&r) {
            continue;
        }
        loop {
            assert!(basis < m, "cannot complete orthonormal basis");
            let mut cand = vec![0.0; m];
            cand[basis] = 1.0;
            basis += 1;
            for _ in 0..2 {
                for &d in &done {
                    let proj = dot(&cand, ut.row(d));
                    for (c, &x) in cand.iter_mut().zip(ut.row(d)) {
                        *c -= proj * x;
                    }
                }
            }
            let norm = libm::sqrt(dot(&cand, &cand));
            if norm > 1e-8 {
                for (dst, c) in ut.row_mut(r).iter_mut().zip(&cand) {
                    *dst = c / norm;
                }
                done.push(r);
                break;
            }
        }
    }
}

/// Householder QR of a square matrix, returning `Q` with the sign
/// convention `diag(R) >= 0`. Used to draw Haar-distributed rotations.
pub fn qr_orthogonal(a: &Matrix) -> Matrix {
    let n = a.rows();
    assert_eq!(n, a.cols(), "qr_orthogonal expects a square matrix");
    let mut r = a.clone();
    let mut q = Matrix::identity(n);
    for k in 0..n.saturating_sub(1) {
        let mut x: Vec<f64> = (k..n).map(|i| r[(i, k)]).collect();
        let alpha = -libm::copysign(libm::sqrt(dot(&x, &x)), x[0]);
        if alpha == 0.0 {
            continue;
        }
        x[0] -= alpha;
        let vnorm = libm::sqrt(dot(&x, &x));
        if vnorm == 0.0 {
            continue;
        }
        x.iter_mut().for_each(|v| *v /= vnorm);
        // r <- (I - 2vv^T) r ; q <- q (I - 2vv^T)
        for j in 0..n {
            let proj: f64 = (k..n).map(|i| x[i - k] * r[(i, j)]).sum();
            for i in k..n {
                r[(i, j)] -= 2.0 * x[i - k] * proj;
            }
        }
        for i in 0..n {
            let proj: f64 = (k..n).map(|j| q[(i, j)] * x[j - k]).sum();
            for j in k..n {
                q[(i, j)] -= 2.0 * proj * x[j - k];
            }
        }
    }
    for j in 0..n {
        if r[(j, j)] < 0.0 {
            for i in 0..n {
                q[(i, j)] = -q[(i, j)];
            }
        }
    }
    q
}

#[cfg(test)]
mod tests {
    use super::*;

    fn reconstruct(svd: &Svd) -> Matrix {
        let mut us = svd.u.clone();
        for i in 0..us.rows() {
            for (j, s) in svd.s.iter().enumerate() {
                us[(i, j)] *= s;
            }
        }
        us.matmul(&svd.vt)
    }

    fn assert_close(a: &Matrix, b: &Matrix, tol: f64) {
        assert_eq!((a.rows(), a.cols()), (b.rows(), b.cols()));
        for (x, y) in a.as_slice().iter().zip(b.as_slice()) {
            assert!((x - y).abs() <= tol, "{x} vs {y}");
        }
    }

    #[test]
    fn matmul_variants_agree() {
        let a = Matrix::from_vec(2, 3, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0]);
        let b = Matrix::from_vec(3, 2, vec![7.0, 8.0, 9.0, 10.0, 11.0, 12.0]);
        let ab = a.matmul(&b);
        assert_eq!(ab.as_slice(), &[58.0, 64.0, 139.0, 154.0]);
        assert_close(&a.matmul_t(&b.transpose()), &ab, 0.0);
        assert_close(&a.transpose().t_matmul(&b), &ab, 0.0);
    }

    #[test]
    fn svd_reconstructs_square_tall_and_wide() {
        let sq = Matrix::from_vec(3, 3, vec![2.0, -1.0, 0.5, 0.3, 4.0, 1.0, -2.0, 0.0, 1.5]);
        let tall = Matrix::from_vec(4, 2, vec![1.0, 2.0, 3.0, 4.0, 5.0, 6.0, 7.0, 8.5]);
        for a in [sq, tall.clone(), tall.transpose()] {
            let d = svd(&a);
            assert_close(&reconstruct(&d), &a, 1e-12);
            assert!(d.s.windows(2).all(|w| w[0] >= w[1]));
            let utu = d.u.t_matmul(&d.u);
            assert_close(&utu, &Matrix::identity(utu.rows()), 1e-12);
        }
    }

    #[test]
    fn svd_rank_deficient_still_orthonormal() {
        // rank 1
        let a = Matrix::from_vec(3, 3, vec![1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 3.0, 6.0, 9.0]);
        let d = svd(&a);
        assert!(d.s[1].abs() < 1e-12 && d.s[2].abs() < 1e-12);
        assert_close(&d.u.t_matmul(&d.u), &Matrix::identity(3), 1e-12);
        assert_close(&d.vt.matmul_t(&d.vt), &Matrix::identity(3), 1e-12);
        assert_close(&reconstruct(&d), &a, 1e-12);
    }

    #[test]
    fn qr_gives_orthogonal_matrix() {
        let a = Matrix::from_vec(3, 3, vec![0.3, -1.2, 2.0, 1.1, 0.4, -0.7, -0.5, 2.2, 0.9]);
        let q = qr_orthogonal(&a);
        assert_close(&q.t_matmul(&q), &Matrix::identity(3), 1e-12);
        // Q^T a is upper triangular with non-negative diagonal
        let r = q.t_matmul(&a);
        for i in 0..3 {
            assert!(r[(i, i)] >= 0.0);
            for j in 0..i {
                assert!(r[(i, j)].abs() < 1e-12);
            }
        }
    }
}
