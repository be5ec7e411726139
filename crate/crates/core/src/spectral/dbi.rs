use crate::error::{Error, Result};
use crate::scalar::{euclidean, Scalar};

/// Davies-Bouldin index: mean over clusters of the worst
/// `(S_i + S_j) / M_ij`, with `S` the mean member-to-centroid distance and
/// `M` the centroid separation. Coincident centroids score `+inf`.
pub fn davies_bouldin<T: Scalar, P: AsRef<[T]>>(points: &[P], labels: &[usize]) -> Result<T> {
    if points.len() != labels.len() {
        return Err(Error::invalid("one label per point required"));
    }
    if points.is_empty() {
        return Err(Error::invalid("no points"));
    }
    let dim = points[0].as_ref().len();
    let n_labels = labels.iter().max().map_or(0, |m| m + 1);
    let mut sums = vec![vec![T::zero(); dim]; n_labels];
    let mut counts = vec![0usize; n_labels];
    for (p, &l) in points.iter().zip(labels) {
        counts[l] += 1;
        for (s, &v) in sums[l].iter_mut().zip(p.as_ref()) {
            *s = *s + v;
        }
    }
    let present: Vec<usize> = (0..n_labels).filter(|&c| counts[c] > 0).collect();
    if present.len() < 2 {
        return Err(Error::invalid("Davies-Bouldin index needs at least two non-empty clusters"));
    }
    let centroids: Vec<Vec<T>> = (0..n_labels)
        .map(|c| {
            let m = T::from_count(counts[c].max(1));
            sums[c].iter().map(|&s| s / m).collect()
        })
        .collect();
    let mut scatter = vec![T::zero(); n_labels];
    for (p, &l) in points.iter().zip(labels) {
        scatter[l] = scatter[l] + euclidean(p.as_ref(), &centroids[l]);
    }
    for c in &present {
        scatter[*c] = scatter[*c] / T::from_count(counts[*c]);
    }
    let mut total = T::zero();
    for &i in &present {
        let mut worst = T::neg_infinity();
        for &j in &present {
            if i == j {
                continue;
            }
            let sep = euclidean(&centroids[i], &centroids[j]);
            let ratio = if sep > T::zero() {
                (scatter[i] + scatter[j]) / sep
            } else {
                T::infinity()
            };
            worst = worst.max(ratio);
        }
        total = total + worst;
    }
    Ok(total / T::from_count(present.len()))
}
