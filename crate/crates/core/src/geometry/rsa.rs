use alloc::string::String;
use alloc::vec::Vec;

use serde::{Deserialize, Serialize};

use super::stats::spearman;
use super::GeometryError;
use crate::linalg::{squared_distance, Matrix};
use crate::probe::PrototypeSet;

/// Pairwise squared Euclidean distances between the rows of a point
/// configuration, labelled by concept name.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DissimilarityMatrix {
    values: Matrix,
    concepts: Vec<String>,
}

impl DissimilarityMatrix {
    pub fn from_points(points: &Matrix, concepts: Vec<String>) -> Self {
        assert_eq!(points.rows(), concepts.len(), "one name per point");
        let k = points.rows();
        let mut values = Matrix::zeros(k, k);
        for i in 0..k {
            for j in 0..i {
                let d = squared_distance(points.row(i), points.row(j));
                values[(i, j)] = d;
                values[(j, i)] = d;
            }
        }
        Self { values, concepts }
    }

    pub fn k(&self) -> usize {
        self.concepts.len()
    }

    pub fn values(&self) -> &Matrix {
        &self.values
    }

    pub fn concepts(&self) -> &[String] {
        &self.concepts
    }

    /// Entries strictly below the diagonal, row by row: `(1,0), (2,0), (2,1), ...`.
    pub fn lower_triangle(&self) -> Vec<f64> {
        let k = self.k();
        let mut out = Vec::with_capacity(k * k.saturating_sub(1) / 2);
        for i in 1..k {
            out.extend_from_slice(&self.values.row(i)[..i]);
        }
        out
    }
}

pub fn dissimilarity_matrix(ps: &PrototypeSet) -> DissimilarityMatrix {
    DissimilarityMatrix::from_points(ps.prototypes(), ps.vocab().names().to_vec())
}

/// Spearman correlation between the strictly-lower triangles of two
/// dissimilarity matrices over the same concepts.
pub fn rsa(m1: &DissimilarityMatrix, m2: &DissimilarityMatrix) -> Result<f64, GeometryError> {
    if m1.concepts != m2.concepts {
        return Err(GeometryError::ConceptOrder);
    }
    if m1.k() < 3 {
        return Err(GeometryError::TooFewConcepts(m1.k()));
    }
    spearman(&m1.lower_triangle(), &m2.lower_triangle())
}

/// RSA between two point configurations whose rows correspond.
pub fn rsa_points(p1: &Matrix, p2: &Matrix) -> Result<f64, GeometryError> {
    if p1.rows() != p2.rows() {
        return Err(GeometryError::Shape(alloc::format!("{} vs {} points", p1.rows(), p2.rows())));
    }
    if p1.rows() < 3 {
        return Err(GeometryError::TooFewConcepts(p1.rows()));
    }
    let names: Vec<String> = (0..p1.rows()).map(|i| alloc::format!("{i}")).collect();
    rsa(
        &DissimilarityMatrix::from_points(p1, names.clone()),
        &DissimilarityMatrix::from_points(p2, names),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::qr_orthogonal;
    use crate::rng::seeded;
    use alloc::vec;
    use rand_distr::{Distribution, StandardNormal};

    fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
        let mut rng = seeded(seed);
        Matrix::from_fn(rows, cols, |_, _| StandardNormal.sample(&mut rng))
    }

    #[test]
    fn lower_triangle_order_and_length() {
        let p = Matrix::from_vec(3, 1, vec![0.0, 1.0, 3.0]);
        let d = DissimilarityMatrix::from_points(&p, vec!["a".into(), "b".into(), "c".into()]);
        assert_eq!(d.lower_triangle(), vec![1.0, 9.0, 4.0]);
        let v = d.values();
        for i in 0..3 {
            assert_eq!(v[(i, i)], 0.0);
            for j in 0..3 {
                assert_eq!(v[(i, j)], v[(j, i)]);
            }
        }
    }

    #[test]
    fn self_rsa_is_one() {
        let p = gaussian(17, 8, 1);
        assert_eq!(rsa_points(&p, &p).unwrap(), 1.0);
    }

    #[test]
    fn invariant_under_rotation_and_scale() {
        let p = gaussian(12, 6, 2);
        let q = qr_orthogonal(&gaussian(6, 6, 3));
        let mut rotated = p.matmul(&q);
        rotated.scale(3.5);
        let r = rsa_points(&p, &rotated).unwrap();
        assert!((r - 1.0).abs() < 1e-12, "{r}");
    }

    #[test]
    fn mismatched_concepts_rejected() {
        let p = gaussian(3, 2, 4);
        let a = DissimilarityMatrix::from_points(&p, vec!["a".into(), "b".into(), "c".into()]);
        let b = DissimilarityMatrix::from_points(&p, vec!["a".into(), "c".into(), "b".into()]);
        assert_eq!(rsa(&a, &b), Err(GeometryError::ConceptOrder));
        let two = gaussian(2, 2, 5);
        assert_eq!(rsa_points(&two, &two), Err(GeometryError::TooFewConcepts(2)));
    }
}
