use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{squared_distance, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KMeansConfig {
    pub restarts: usize,
    pub max_iter: usize,
}

impl Default for KMeansConfig {
    fn default() -> Self {
        Self {
            restarts: 10,
            max_iter: 300,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansResult<T> {
    pub labels: Vec<usize>,
    pub centroids: Vec<Vec<T>>,
    /// Sum of squared member-to-centroid distances.
    pub inertia: T,
    pub iterations: usize,
}

fn nearest<T: Scalar>(point: &[T], centroids: &[Vec<T>]) -> (usize, T) {
    let mut best = (0, squared_distance(point, &centroids[0]));
    for (c, centroid) in centroids.iter().enumerate().skip(1) {
        let d = squared_distance(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Farthest-point seeding from a random first centre.
fn seed_centroids<T: Scalar, P: AsRef<[T]>, R: Rng>(points: &[P], k: usize, rng: &mut R) -> Vec<Vec<T>> {
    let n = points.len();
    let first = rng.random_range(0..n);
    let mut chosen = vec![first];
    let mut min_d: Vec<T> = points
        .iter()
        .map(|p| squared_distance(p.as_ref(), points[first].as_ref()))
        .collect();
    while chosen.len() < k {
        let mut far = 0;
        for i in 1..n {
            if min_d[i] > min_d[far] {
                far = i;
            }
        }
        chosen.push(far);
        for (i, p) in points.iter().enumerate() {
            min_d[i] = min_d[i].min(squared_distance(p.as_ref(), points[far].as_ref()));
        }
    }
    chosen.into_iter().map(|i| points[i].as_ref().to_vec()).collect()
}

fn lloyd<T: Scalar, P: AsRef<[T]>>(points: &[P], mut centroids: Vec<Vec<T>>, max_iter: usize) -> KMeansResult<T> {
    let n = points.len();
    let k = centroids.len();
    let dim = points[0].as_ref().len();
    let mut labels = vec![usize::MAX; n];
    let mut iterations = 0;
    for it in 1..=max_iter {
        iterations = it;
        let mut changed = false;
        let mut dists = vec![T::zero(); n];
        for (i, p) in points.iter().enumerate() {
            let (c, d) = nearest(p.as_ref(), &centroids);
            if labels[i] != c {
                labels[i] = c;
                changed = true;
            }
            dists[i] = d;
        }
        // Empty clusters take the point farthest from its own centroid.
        let mut counts = vec![0usize; k];
        labels.iter().for_each(|&l| counts[l] += 1);
        for c in 0..k {
            if counts[c] > 0 {
                continue;
            }
            let mut far = None;
            for i in 0..n {
                if counts[labels[i]] > 1 && far.is_none_or(|f: usize| dists[i] > dists[f]) {
                    far = Some(i);
                }
            }
            if let Some(i) = far {
                counts[labels[i]] -= 1;
                labels[i] = c;
                counts[c] = 1;
                dists[i] = T::zero();
                changed = true;
            }
        }
        let mut sums = vec![vec![T::zero(); dim]; k];
        for (i, p) in points.iter().enumerate() {
            for (s, &v) in sums[labels[i]].iter_mut().zip(p.as_ref()) {
                *s = *s + v;
            }
        }
        for c in 0..k {
            if counts[c] > 0 {
                let m = T::from_count(counts[c]);
                centroids[c] = sums[c].iter().map(|&s| s / m).collect();
            }
        }
        if !changed {
            break;
        }
    }
    let inertia = points
        .iter()
        .zip(&labels)
        .map(|(p, &l)| squared_distance(p.as_ref(), &centroids[l]))
        .sum();
    KMeansResult {
        labels,
        centroids,
        inertia,
        iterations,
    }
}

/// Lloyd's k-means, best of `config.restarts` seeded runs.
pub fn kmeans<T: Scalar, P: AsRef<[T]>>(
    points: &[P],
    k: usize,
    seed: u64,
    config: &KMeansConfig,
) -> Result<KMeansResult<T>> {
    let n = points.len();
    if k == 0 || k > n {
        return Err(Error::invalid(format!("k-means needs 1 <= k <= n (k = {k}, n = {n})")));
    }
    let dim = points[0].as_ref().len();
    if points.iter().any(|p| p.as_ref().len() != dim) {
        return Err(Error::invalid("points have mixed dimensions"));
    }
    let mut best: Option<KMeansResult<T>> = None;
    for restart in 0..config.restarts.max(1) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        rng.set_stream(restart as u64);
        let init = seed_centroids(points, k, &mut rng);
        let run = lloyd(points, init, config.max_iter.max(1));
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    Ok(best.expect("at least one restart"))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn four() -> Vec<Vec<f64>> {
        vec![vec![0.0, 0.0], vec![0.0, 1.0], vec![10.0, 10.0], vec![10.0, 11.0]]
    }

    #[test]
    fn two_pairs() {
        let r = kmeans(&four(), 2, 1, &KMeansConfig::default()).unwrap();
        assert_eq!(r.labels[0], r.labels[1]);
        assert_eq!(r.labels[2], r.labels[3]);
        assert_ne!(r.labels[0], r.labels[2]);
        let mut cents = r.centroids.clone();
        cents.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(cents, vec![vec![0.0, 0.5], vec![10.0, 10.5]]);
        assert_eq!(r.inertia, 1.0);
    }

    #[test]
    fn two_pairs_is_the_exhaustive_optimum() {
        // Enumerate every 2-partition and compare inertia.
        let pts = four();
        let mut best = f64::INFINITY;
        for mask in 1u32..(1 << 3) {
            let mut inertia = 0.0;
            for side in [true, false] {
                let members: Vec<&Vec<f64>> = (0..4).filter(|&i| ((mask >> i) & 1 == 1) == side).map(|i| &pts[i]).collect();
                if members.is_empty() {
                    inertia = f64::INFINITY;
                    continue;
                }
                let m = members.len() as f64;
                let c = [members.iter().map(|p| p[0]).sum::<f64>() / m, members.iter().map(|p| p[1]).sum::<f64>() / m];
                inertia += members.iter().map(|p| (p[0] - c[0]).powi(2) + (p[1] - c[1]).powi(2)).sum::<f64>();
            }
            best = best.min(inertia);
        }
        let r = kmeans(&pts, 2, 9, &KMeansConfig::default()).unwrap();
        assert_eq!(r.inertia, best);
    }

    #[test]
    fn k_one_and_k_n() {
        let pts = four();
        let r = kmeans(&pts, 1, 0, &KMeansConfig::default()).unwrap();
        assert_eq!(r.centroids[0], vec![5.0, 5.5]);
        let r = kmeans(&pts, 4, 0, &KMeansConfig::default()).unwrap();
        assert_eq!(r.inertia, 0.0);
        let mut l = r.labels.clone();
        l.sort();
        assert_eq!(l, vec![0, 1, 2, 3]);
        assert!(kmeans(&pts, 5, 0, &KMeansConfig::default()).is_err());
    }

    #[test]
    fn empty_cluster_is_reseeded() {
        // Duplicates force coincident seeds; every cluster must still be used.
        let pts = vec![vec![1.0], vec![1.0], vec![1.0], vec![5.0]];
        let r = kmeans(&pts, 3, 4, &KMeansConfig { restarts: 1, max_iter: 50 }).unwrap();
        let mut used: Vec<usize> = r.labels.clone();
        used.sort();
        used.dedup();
        assert_eq!(used.len(), 3);
    }

    #[test]
    fn same_seed_same_result() {
        let pts: Vec<Vec<f64>> = (0..40).map(|i| vec![(i * 37 % 11) as f64, (i * 17 % 7) as f64]).collect();
        let a = kmeans(&pts, 4, 3, &KMeansConfig::default()).unwrap();
        let b = kmeans(&pts, 4, 3, &KMeansConfig::default()).unwrap();
        assert_eq!(a, b);
    }
}
