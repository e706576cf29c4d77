//! Small dense linear-algebra helpers shared by the solvers.

use nalgebra::{DMatrix, DMatrixView, SymmetricEigen};

/// Symmetric eigendecomposition with eigenvalues sorted in nonincreasing order.
///
/// Columns of the returned matrix are the matching unit eigenvectors.
pub fn sym_eigen_sorted(a: &DMatrix<f64>) -> (Vec<f64>, DMatrix<f64>) {
    let n = a.nrows();
    let eig = SymmetricEigen::new(symmetrize(a));
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = DMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    (values, vectors)
}

pub fn eigenvalue_range(a: &DMatrix<f64>) -> (f64, f64) {
    if a.nrows() == 0 {
        return (0.0, 0.0);
    }
    let eig = SymmetricEigen::new(symmetrize(a));
    let lo = eig.eigenvalues.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = eig.eigenvalues.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    (lo, hi)
}

pub fn symmetrize(a: &DMatrix<f64>) -> DMatrix<f64> {
    (a + a.transpose()) * 0.5
}

/// Largest absolute asymmetry `max |a_ij - a_ji|`.
pub fn asymmetry(a: &DMatrix<f64>) -> f64 {
    let n = a.nrows();
    let mut worst = 0.0_f64;
    for i in 0..n {
        for j in (i + 1)..n {
            worst = worst.max((a[(i, j)] - a[(j, i)]).abs());
        }
    }
    worst
}

/// Frobenius inner product `tr(AᵀB)`.
pub fn frob_dot(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    a.iter().zip(b.iter()).map(|(x, y)| x * y).sum()
}

pub fn block(a: &DMatrix<f64>, m: usize, j: usize, l: usize) -> DMatrixView<'_, f64> {
    a.view((j * m, l * m), (m, m))
}

pub fn block_norm(a: &DMatrix<f64>, m: usize, j: usize, l: usize) -> f64 {
    block(a, m, j, l).norm()
}

/// p×p matrix of Frobenius norms of the m×m blocks of `a`.
pub fn block_norms(a: &DMatrix<f64>, m: usize) -> DMatrix<f64> {
    let p = a.nrows() / m;
    DMatrix::from_fn(p, p, |j, l| block_norm(a, m, j, l))
}

/// Logarithmically spaced grid from `hi` down to `lo` (inclusive), `count` points.
pub fn log_grid_desc(hi: f64, lo: f64, count: usize) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![hi],
        _ => {
            let (a, b) = (hi.ln(), lo.ln());
            (0..count)
                .map(|i| (a + (b - a) * i as f64 / (count - 1) as f64).exp())
                .collect()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn eigen_sorted_descending() {
        let a = DMatrix::from_row_slice(3, 3, &[1.0, 0.0, 0.0, 0.0, 5.0, 0.0, 0.0, 0.0, 3.0]);
        let (vals, vecs) = sym_eigen_sorted(&a);
        assert_eq!(vals, vec![5.0, 3.0, 1.0]);
        assert!((vecs[(1, 0)].abs() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn block_norms_layout() {
        let mut a = DMatrix::zeros(4, 4);
        a[(0, 2)] = 3.0;
        a[(1, 3)] = 4.0;
        let n = block_norms(&a, 2);
        assert_eq!(n[(0, 1)], 5.0);
        assert_eq!(n[(1, 0)], 0.0);
    }

    #[test]
    fn log_grid_endpoints() {
        let g = log_grid_desc(1.0, 1e-3, 4);
        assert!((g[0] - 1.0).abs() < 1e-15);
        assert!((g[3] - 1e-3).abs() < 1e-15);
        assert!((g[1] - 0.1).abs() < 1e-12);
    }
}
