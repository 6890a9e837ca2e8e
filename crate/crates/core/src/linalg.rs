//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector, SymmetricEigen};

use crate::error::{Error, Result};

/// Result of projecting a symmetric matrix onto the PSD cone.
#[derive(Debug, Clone)]
pub struct PsdRepair {
    pub matrix: DMatrix<f64>,
    /// Spectral norm of the removed part (largest clipped eigenvalue).
    pub clipped: f64,
}

/// Symmetrizes `m`, clips negative eigenvalues to zero and reassembles.
pub fn psd_repair(m: &DMatrix<f64>) -> PsdRepair {
    let sym = symmetrize(m);
    let eig = SymmetricEigen::new(sym.clone());
    let clipped = eig.eigenvalues.iter().fold(0.0f64, |acc, &l| acc.max(-l));
    if clipped <= 0.0 {
        return PsdRepair { matrix: sym, clipped: 0.0 };
    }
    let vals = eig.eigenvalues.map(|l| l.max(0.0));
    let matrix = symmetrize(&reassemble(&eig.eigenvectors, &vals));
    PsdRepair { matrix, clipped }
}

/// `(m + m^T) / 2`.
pub fn symmetrize(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

fn reassemble(vectors: &DMatrix<f64>, values: &DVector<f64>) -> DMatrix<f64> {
    let mut scaled = vectors.clone();
    for (j, v) in values.iter().enumerate() {
        scaled.column_mut(j).scale_mut(*v);
    }
    scaled * vectors.transpose()
}

/// Symmetric square root `Q diag(sqrt(max(l, 0))) Q^T`.
pub fn symmetric_sqrt(m: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = SymmetricEigen::new(symmetrize(m));
    let vals = eig.eigenvalues.map(|l| l.max(0.0).sqrt());
    symmetrize(&reassemble(&eig.eigenvectors, &vals))
}

/// Inverse of a PSD matrix; a ridge is added first if it is numerically
/// singular.
pub fn psd_inverse(m: &DMatrix<f64>, ridge: f64) -> Result<DMatrix<f64>> {
    if !m.is_square() || m.nrows() == 0 {
        return Err(Error::InvalidParameter("matrix must be square and non-empty".into()));
    }
    let eig = SymmetricEigen::new(symmetrize(m));
    let max = eig.eigenvalues.iter().fold(0.0f64, |a, &l| a.max(l.abs()));
    let singular = eig.eigenvalues.iter().any(|&l| l <= 1e-12 * max.max(f64::MIN_POSITIVE));
    let vals = eig.eigenvalues.map(|l| {
        let l = if singular { l.max(0.0) + ridge } else { l };
        1.0 / l
    });
    if vals.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numerical("matrix is singular even after ridge".into()));
    }
    Ok(symmetrize(&reassemble(&eig.eigenvectors, &vals)))
}

pub fn is_symmetric(m: &DMatrix<f64>, tol: f64) -> bool {
    if !m.is_square() {
        return false;
    }
    let scale = m.iter().fold(1.0f64, |a, v| a.max(v.abs()));
    for i in 0..m.nrows() {
        for j in (i + 1)..m.ncols() {
            if (m[(i, j)] - m[(j, i)]).abs() > tol * scale {
                return false;
            }
        }
    }
    true
}

/// Smallest eigenvalue of a symmetric matrix.
pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    SymmetricEigen::new(symmetrize(m)).eigenvalues.min()
}

/// Serde adapter storing a matrix as a list of rows.
pub mod rows {
    use nalgebra::DMatrix;
    use serde::de::Error as _;
    use serde::{Deserialize, Deserializer, Serialize, Serializer};

    pub fn serialize<S: Serializer>(m: &DMatrix<f64>, s: S) -> Result<S::Ok, S::Error> {
        let rows: Vec<Vec<f64>> = m.row_iter().map(|r| r.iter().copied().collect()).collect();
        rows.serialize(s)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<DMatrix<f64>, D::Error> {
        let rows = Vec::<Vec<f64>>::deserialize(d)?;
        let nrows = rows.len();
        let ncols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != ncols) {
            return Err(D::Error::custom("ragged matrix rows"));
        }
        Ok(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
    }
}
