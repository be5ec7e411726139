use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scalar::{euclidean, squared_distance, Scalar};

/// Floor on local scales, relative to the dataset diameter.
pub const ALPHA_FLOOR: f64 = 1e-9;

/// Gaussian affinity graph with self-tuned local scales.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityGraph<T: Scalar> {
    pub weights: DMatrix<T>,
    pub alphas: Vec<T>,
    pub degrees: Vec<T>,
    pub laplacian: DMatrix<T>,
}

impl<T: Scalar> AffinityGraph<T> {
    pub fn build<P: AsRef<[T]>>(points: &[P], neighbor_rank: usize) -> Result<Self> {
        let alphas = local_scales(points, neighbor_rank)?;
        let weights = build_affinity(points, &alphas)?;
        let degrees = degrees(&weights);
        let laplacian = normalized_laplacian(&weights)?;
        Ok(Self {
            weights,
            alphas,
            degrees,
            laplacian,
        })
    }
}

/// Distance from each point to its `neighbor_rank`-th nearest neighbour.
///
/// Scales are floored at `ALPHA_FLOOR` times the dataset diameter so that
/// duplicated points keep a usable kernel width.
pub fn local_scales<T: Scalar, P: AsRef<[T]>>(points: &[P], neighbor_rank: usize) -> Result<Vec<T>> {
    let n = points.len();
    if neighbor_rank == 0 || n <= neighbor_rank {
        return Err(Error::invalid(format!(
            "local scaling needs n > K >= 1 (n = {n}, K = {neighbor_rank})"
        )));
    }
    let mut diameter = T::zero();
    let mut alphas = Vec::with_capacity(n);
    let mut row = Vec::with_capacity(n - 1);
    for i in 0..n {
        row.clear();
        for j in 0..n {
            if i != j {
                let d = euclidean(points[i].as_ref(), points[j].as_ref());
                diameter = diameter.max(d);
                row.push(d);
            }
        }
        row.sort_by(|a, b| a.partial_cmp(b).expect("finite distances"));
        alphas.push(row[neighbor_rank - 1]);
    }
    if !(diameter > T::zero()) {
        return Err(Error::invalid("all points are identical; local scales undefined"));
    }
    let floor = T::lit(ALPHA_FLOOR) * diameter;
    for a in &mut alphas {
        *a = a.max(floor);
    }
    Ok(alphas)
}

/// `w_ij = exp(-|v_i - v_j|^2 / (a_i a_j))` off the diagonal, zero on it.
pub fn build_affinity<T: Scalar, P: AsRef<[T]>>(points: &[P], alphas: &[T]) -> Result<DMatrix<T>> {
    let n = points.len();
    if alphas.len() != n {
        return Err(Error::invalid("one scale per point required"));
    }
    if alphas.iter().any(|a| !(*a > T::zero()) || !a.is_finite()) {
        return Err(Error::invalid("local scales must be positive and finite"));
    }
    let mut w = DMatrix::from_element(n, n, T::zero());
    for i in 0..n {
        for j in (i + 1)..n {
            let d2 = squared_distance(points[i].as_ref(), points[j].as_ref());
            let v = (-d2 / (alphas[i] * alphas[j])).exp();
            w[(i, j)] = v;
            w[(j, i)] = v;
        }
    }
    Ok(w)
}

pub fn degrees<T: Scalar>(w: &DMatrix<T>) -> Vec<T> {
    w.row_iter().map(|r| r.iter().copied().sum()).collect()
}

/// `L = D^{-1/2} W D^{-1/2}`.
pub fn normalized_laplacian<T: Scalar>(w: &DMatrix<T>) -> Result<DMatrix<T>> {
    let deg = degrees(w);
    if let Some(i) = deg.iter().position(|d| !(*d > T::zero())) {
        return Err(Error::invalid(format!("vertex {i} is isolated (zero degree)")));
    }
    let inv_sqrt: Vec<T> = deg.iter().map(|d| T::one() / d.sqrt()).collect();
    let n = w.nrows();
    Ok(DMatrix::from_fn(n, n, |i, j| inv_sqrt[i] * w[(i, j)] * inv_sqrt[j]))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn line(xs: &[f64]) -> Vec<Vec<f64>> {
        xs.iter().map(|&x| vec![x]).collect()
    }

    #[test]
    fn line_points_scales_and_weights() {
        let pts = line(&[0.0, 1.0, 10.0]);
        let a = local_scales(&pts, 1).unwrap();
        assert_eq!(a, vec![1.0, 1.0, 9.0]);
        let w = build_affinity(&pts, &a).unwrap();
        assert!((w[(0, 1)] - 0.367_879_441_171_442_3).abs() < 1e-15);
        assert_eq!(w[(0, 0)], 0.0);
        assert_eq!(w[(1, 2)], w[(2, 1)]);
    }

    #[test]
    fn duplicate_point_gets_floor() {
        let pts = line(&[0.0, 0.0, 4.0]);
        let a = local_scales(&pts, 1).unwrap();
        assert_eq!(a[0], 1e-9 * 4.0);
        assert_eq!(a[1], 1e-9 * 4.0);
        let w = build_affinity(&pts, &a).unwrap();
        assert_eq!(w[(0, 1)], 1.0);
    }

    #[test]
    fn degenerate_inputs() {
        assert!(local_scales(&line(&[1.0, 1.0, 1.0]), 1).is_err());
        assert!(local_scales(&line(&[1.0, 2.0]), 2).is_err());
        assert!(local_scales(&line(&[1.0, 2.0]), 0).is_err());
        assert!(build_affinity(&line(&[1.0, 2.0]), &[1.0, 0.0]).is_err());
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 0.0]);
        assert!(normalized_laplacian(&w).is_err());
    }

    #[test]
    fn two_by_two_laplacian() {
        let w = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]);
        let l = normalized_laplacian(&w).unwrap();
        assert_eq!(l, w);
        let eig = nalgebra::SymmetricEigen::new(l);
        let mut ev: Vec<f64> = eig.eigenvalues.iter().copied().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((ev[0] + 1.0).abs() < 1e-12 && (ev[1] - 1.0).abs() < 1e-12);
    }
}
