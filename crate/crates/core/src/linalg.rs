//! Small dense symmetric-matrix helpers on top of nalgebra.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn, SymmetricEigen};

use crate::error::{Error, Result};

/// Eigenvalues below this are treated as this value when inverting.
pub const EIGEN_FLOOR: f64 = 1e-12;

/// Eigen-decomposition of a symmetric matrix with eigenvalues sorted ascending.
pub fn sym_eigen(m: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let eig = SymmetricEigen::new(symmetrized(m));
    let n = eig.eigenvalues.len();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let vectors = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
    (values, vectors)
}

/// Smallest eigenvalue of a symmetric matrix together with a unit eigenvector.
pub fn min_eigen(m: &DMatrix<f64>) -> (f64, DVector<f64>) {
    let (values, vectors) = sym_eigen(m);
    (values[0], vectors.column(0).into_owned())
}

pub fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    let eig = SymmetricEigen::new(symmetrized(m));
    eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Spectral norm of the inverse of a symmetric PSD matrix, with the eigenvalue floor applied.
pub fn inverse_spectral_norm(m: &DMatrix<f64>) -> f64 {
    1.0 / min_eigenvalue(m).max(EIGEN_FLOOR)
}

pub fn symmetrized(m: &DMatrix<f64>) -> DMatrix<f64> {
    (m + m.transpose()) * 0.5
}

pub fn cholesky(m: &DMatrix<f64>) -> Result<Cholesky<f64, Dyn>> {
    Cholesky::new(m.clone()).ok_or_else(|| {
        Error::Factorization(format!(
            "{}x{} matrix is not positive definite (min eigenvalue {:e})",
            m.nrows(),
            m.ncols(),
            min_eigenvalue(m)
        ))
    })
}

/// `‖v‖²_{A^{-1}}` given the Cholesky factor of `A`.
pub fn inv_quadratic_form(chol: &Cholesky<f64, Dyn>, v: &DVector<f64>) -> f64 {
    let y = chol.l_dirty().solve_lower_triangular(v).expect("Cholesky factor has a positive diagonal");
    y.norm_squared()
}

/// `m += weight * v vᵀ`.
pub fn add_outer(m: &mut DMatrix<f64>, v: &DVector<f64>, weight: f64) {
    m.ger(weight, v, v, 1.0);
}

/// `m += weight * v vᵀ` for a sparse `v` given as `(index, value)` pairs.
pub fn add_sparse_outer(m: &mut DMatrix<f64>, v: &[(usize, f64)], weight: f64) {
    for &(i, vi) in v {
        let wi = weight * vi;
        for &(j, vj) in v {
            m[(i, j)] += wi * vj;
        }
    }
}

pub fn sparse_dot(v: &[(usize, f64)], theta: &DVector<f64>) -> f64 {
    v.iter().map(|&(i, x)| x * theta[i]).sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_ascending() {
        let m = DMatrix::from_row_slice(3, 3, &[3.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 2.0]);
        let (vals, vecs) = sym_eigen(&m);
        assert_eq!(vals, vec![1.0, 2.0, 3.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-12);
        assert!((inverse_spectral_norm(&m) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn sparse_and_dense_outer_agree() {
        let v = DVector::from_vec(vec![0.0, 2.0, 0.0, 1.0]);
        let mut dense = DMatrix::zeros(4, 4);
        add_outer(&mut dense, &v, 0.5);
        let mut sparse = DMatrix::zeros(4, 4);
        add_sparse_outer(&mut sparse, &[(1, 2.0), (3, 1.0)], 0.5);
        assert_eq!(dense, sparse);
    }

    #[test]
    fn quadratic_form_matches_explicit_inverse() {
        let a = DMatrix::from_row_slice(2, 2, &[2.0, 0.5, 0.5, 1.0]);
        let v = DVector::from_vec(vec![1.0, -1.0]);
        let chol = cholesky(&a).unwrap();
        let direct = (v.transpose() * a.try_inverse().unwrap() * &v)[(0, 0)];
        assert!((inv_quadratic_form(&chol, &v) - direct).abs() < 1e-12);
    }
}
