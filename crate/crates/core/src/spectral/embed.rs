use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Eigen-decomposition of a normalized affinity matrix, eigenpairs sorted
/// by decreasing eigenvalue with a canonical sign on each eigenvector.
///
/// The decomposition runs in `f64` regardless of `T`.
#[derive(Debug, Clone)]
pub struct SpectralBasis {
    pub eigenvalues: Vec<f64>,
    /// Column `c` is the eigenvector of `eigenvalues[c]`.
    pub eigenvectors: DMatrix<f64>,
}

impl SpectralBasis {
    pub fn new<T: Scalar>(laplacian: &DMatrix<T>) -> Result<Self> {
        let n = laplacian.nrows();
        if n == 0 || laplacian.ncols() != n {
            return Err(Error::invalid("laplacian must be square and nonempty"));
        }
        let l64 = DMatrix::from_fn(n, n, |i, j| 0.5 * (laplacian[(i, j)].as_f64() + laplacian[(j, i)].as_f64()));
        if l64.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numerical("laplacian has non-finite entries".into()));
        }
        let eig = SymmetricEigen::try_new(l64, f64::EPSILON, 10_000)
            .ok_or_else(|| Error::Numerical("symmetric eigensolver did not converge".into()))?;
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| {
            eig.eigenvalues[b]
                .partial_cmp(&eig.eigenvalues[a])
                .expect("finite eigenvalues")
                .then(a.cmp(&b))
        });
        let eigenvalues = order.iter().map(|&c| eig.eigenvalues[c]).collect();
        let mut eigenvectors = DMatrix::zeros(n, n);
        for (dst, &src) in order.iter().enumerate() {
            let col = eig.eigenvectors.column(src);
            // Canonical sign: largest-magnitude entry positive (first on ties).
            let mut pivot = 0;
            for i in 1..n {
                if col[i].abs() > col[pivot].abs() + 1e-12 {
                    pivot = i;
                }
            }
            let sign = if col[pivot] < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                eigenvectors[(i, dst)] = sign * col[i];
            }
        }
        Ok(Self {
            eigenvalues,
            eigenvectors,
        })
    }

    /// Rows of the top-`k` eigenvectors, each scaled to unit length.
    pub fn embed<T: Scalar>(&self, k: usize) -> Result<Vec<Vec<T>>> {
        let n = self.eigenvectors.nrows();
        if k < 1 || k > n {
            return Err(Error::invalid(format!("embedding dimension {k} outside 1..={n}")));
        }
        Ok((0..n)
            .map(|i| {
                let row: Vec<f64> = (0..k).map(|c| self.eigenvectors[(i, c)]).collect();
                let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
                row.into_iter()
                    .map(|v| T::lit(if norm > 0.0 { v / norm } else { 0.0 }))
                    .collect()
            })
            .collect())
    }
}

/// Row-normalized embedding on the eigenvectors of the `k` largest
/// eigenvalues of `laplacian`.
pub fn spectral_embed<T: Scalar>(laplacian: &DMatrix<T>, k: usize) -> Result<Vec<Vec<T>>> {
    let n = laplacian.nrows();
    if k < 2 || k > n {
        return Err(Error::invalid(format!("spectral embedding needs 2 <= k <= n (k = {k}, n = {n})")));
    }
    SpectralBasis::new(laplacian)?.embed(k)
}
