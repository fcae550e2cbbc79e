//! Small dense linear-algebra helpers on top of nalgebra.

use nalgebra::{DMatrix, DVector};

/// Singular values below `max_sv * RANK_TOL` count as zero.
pub const RANK_TOL: f64 = 1e-8;

pub fn spectral_norm(a: &DMatrix<f64>) -> f64 {
    if a.is_empty() {
        return 0.0;
    }
    a.clone().svd(false, false).singular_values.max()
}

pub fn rank(a: &DMatrix<f64>, rel_tol: f64) -> usize {
    if a.is_empty() {
        return 0;
    }
    let sv = a.clone().svd(false, false).singular_values;
    let smax = sv.max();
    if smax == 0.0 {
        return 0;
    }
    sv.iter().filter(|&&s| s > smax * rel_tol).count()
}

/// Eigenvalues of a general square matrix as (re, im) pairs.
pub fn eigenvalues(a: &DMatrix<f64>) -> Vec<(f64, f64)> {
    if a.is_empty() {
        return Vec::new();
    }
    a.clone()
        .complex_eigenvalues()
        .iter()
        .map(|c| (c.re, c.im))
        .collect()
}

pub fn spectral_radius(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .into_iter()
        .map(|(re, im)| re.hypot(im))
        .fold(0.0, f64::max)
}

pub fn max_real_eigenvalue(a: &DMatrix<f64>) -> f64 {
    eigenvalues(a)
        .into_iter()
        .map(|(re, _)| re)
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

pub fn sym_eigenvalues(a: &DMatrix<f64>) -> DVector<f64> {
    if a.is_empty() {
        return DVector::zeros(0);
    }
    symmetrize(a).symmetric_eigenvalues()
}

pub fn min_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a)
        .iter()
        .copied()
        .fold(f64::INFINITY, f64::min)
}

pub fn max_sym_eigenvalue(a: &DMatrix<f64>) -> f64 {
    sym_eigenvalues(a)
        .iter()
        .copied()
        .fold(f64::NEG_INFINITY, f64::max)
}

pub fn inverse(a: &DMatrix<f64>) -> Option<DMatrix<f64>> {
    if a.is_empty() {
        return Some(a.clone());
    }
    a.clone().try_inverse()
}

/// Symmetric positive semidefinite square root via eigen-decomposition.
pub fn sym_sqrt(a: &DMatrix<f64>) -> DMatrix<f64> {
    let eig = symmetrize(a).symmetric_eigen();
    let d = DMatrix::from_diagonal(&eig.eigenvalues.map(|l| l.max(0.0).sqrt()));
    &eig.eigenvectors * d * eig.eigenvectors.transpose()
}

pub fn max_abs(a: &DMatrix<f64>) -> f64 {
    a.iter().fold(0.0, |m, v| m.max(v.abs()))
}

/// Vertical concatenation; all blocks must share the column count.
pub fn vstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let cols = blocks.first().map_or(0, |b| b.ncols());
    let rows = blocks.iter().map(|b| b.nrows()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut r = 0;
    for b in blocks {
        out.view_mut((r, 0), (b.nrows(), cols)).copy_from(*b);
        r += b.nrows();
    }
    out
}

/// Horizontal concatenation; all blocks must share the row count.
pub fn hstack(blocks: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let rows = blocks.first().map_or(0, |b| b.nrows());
    let cols = blocks.iter().map(|b| b.ncols()).sum();
    let mut out = DMatrix::zeros(rows, cols);
    let mut c = 0;
    for b in blocks {
        out.view_mut((0, c), (rows, b.ncols())).copy_from(*b);
        c += b.ncols();
    }
    out
}

pub fn block_diag(a: &DMatrix<f64>, b: &DMatrix<f64>) -> DMatrix<f64> {
    let mut out = DMatrix::zeros(a.nrows() + b.nrows(), a.ncols() + b.ncols());
    out.view_mut((0, 0), a.shape()).copy_from(a);
    out.view_mut(a.shape(), b.shape()).copy_from(b);
    out
}

/// Row-major nested vectors, the layout used in JSON documents.
pub fn to_rows(a: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..a.nrows())
        .map(|i| a.row(i).iter().copied().collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<f64>]) -> Option<DMatrix<f64>> {
    let nrows = rows.len();
    let ncols = rows.first().map_or(0, |r| r.len());
    if rows.iter().any(|r| r.len() != ncols) {
        return None;
    }
    Some(DMatrix::from_fn(nrows, ncols, |i, j| rows[i][j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn radius_of_rotation_scaled() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, -0.5, 0.5, 0.0]);
        assert!((spectral_radius(&a) - 0.5).abs() < 1e-12);
        assert!(max_real_eigenvalue(&a).abs() < 1e-12);
    }

    #[test]
    fn rank_detects_dependent_rows() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 2.0, 3.0, 2.0, 4.0, 6.0, 0.0, 1.0, 1.0]);
        assert_eq!(rank(&a, RANK_TOL), 2);
    }

    #[test]
    fn sqrt_squares_back() {
        let a = DMatrix::from_row_slice(2, 2, &[4.0, 1.0, 1.0, 3.0]);
        let s = sym_sqrt(&a);
        assert!((&s * &s - a).abs().max() < 1e-12);
    }

    #[test]
    fn stacking_shapes() {
        let a = DMatrix::<f64>::zeros(2, 3);
        let b = DMatrix::<f64>::identity(1, 3);
        assert_eq!(vstack(&[&a, &b]).shape(), (3, 3));
        assert_eq!(hstack(&[&a, &a]).shape(), (2, 6));
        assert_eq!(block_diag(&a, &b).shape(), (3, 6));
    }
}
