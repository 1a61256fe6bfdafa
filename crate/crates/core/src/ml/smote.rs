//! SMOTE oversampling of minority classes.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::knn::KdTree;
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::par;
use crate::seed::derive_seed;

pub const DEFAULT_K_NEIGHBORS: usize = 5;

#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    /// Original rows first, in input order, then synthetic rows grouped by class.
    pub features: Mat,
    pub labels: Vec<usize>,
    /// For each synthetic row, the two original rows it was interpolated from.
    pub parents: Vec<(usize, usize)>,
    pub n_original: usize,
}

impl Resampled {
    pub fn class_counts(&self, n_classes: usize) -> Vec<usize> {
        counts(&self.labels, n_classes)
    }
}

fn counts(labels: &[usize], n_classes: usize) -> Vec<usize> {
    let mut c = vec![0; n_classes];
    labels.iter().for_each(|&l| c[l] += 1);
    c
}

/// Brings every present class up to the majority count. Classes with no rows
/// are left absent.
pub fn smote(x: &Mat, labels: &[usize], n_classes: usize, k_neighbors: usize, seed: u64) -> Result<Resampled> {
    if labels.len() != x.rows() {
        return Err(Error::LengthMismatch(x.rows(), labels.len()));
    }
    if k_neighbors == 0 {
        return Err(Error::InvalidParameter("k_neighbors must be at least 1".into()));
    }
    if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(Error::InvalidParameter(format!("label {l} >= {n_classes}")));
    }
    let class_counts = counts(labels, n_classes);
    let majority = class_counts.iter().copied().max().unwrap_or(0);
    for (class, &count) in class_counts.iter().enumerate() {
        if count == 1 && majority > 1 {
            return Err(Error::ClassTooSmall { class, count });
        }
    }

    let synthetic = par::map_range(n_classes, |class| {
        let members: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        let need = majority - members.len();
        if members.is_empty() || need == 0 {
            return Vec::new();
        }
        let local = Mat::from_rows(&members.iter().map(|&i| x.row(i)).collect::<Vec<_>>())
            .expect("rows share a width");
        let tree = KdTree::build(local);
        let k = k_neighbors.min(members.len() - 1);
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, class as u64));
        let mut out = Vec::with_capacity(need);
        for _ in 0..need {
            let a = rng.random_range(0..members.len());
            // k + 1 so that the point itself can be dropped
            let neigh: Vec<usize> = tree
                .nearest(tree.points().row(a), k + 1)
                .into_iter()
                .map(|n| n.index)
                .filter(|&j| j != a)
                .take(k)
                .collect();
            let b = neigh[rng.random_range(0..neigh.len())];
            let delta: f64 = rng.random();
            let (pa, pb) = (tree.points().row(a), tree.points().row(b));
            let point: Vec<f64> = pa.iter().zip(pb).map(|(u, v)| u + delta * (v - u)).collect();
            out.push((point, members[a], members[b]));
        }
        out
    });

    let mut rows: Vec<Vec<f64>> = x.iter_rows().map(<[f64]>::to_vec).collect();
    let mut out_labels = labels.to_vec();
    let mut parents = Vec::new();
    for (class, points) in synthetic.into_iter().enumerate() {
        for (p, a, b) in points {
            rows.push(p);
            out_labels.push(class);
            parents.push((a, b));
        }
    }
    let features = if rows.is_empty() {
        Mat::zeros(0, x.cols())
    } else {
        Mat::from_rows(&rows)?
    };
    Ok(Resampled {
        features,
        labels: out_labels,
        parents,
        n_original: x.rows(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn blob(counts: &[usize], seed: u64) -> (Mat, Vec<usize>) {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut rows = Vec::new();
        let mut labels = Vec::new();
        for (c, &n) in counts.iter().enumerate() {
            for _ in 0..n {
                rows.push(vec![c as f64 * 3.0 + rng.random::<f64>(), rng.random::<f64>()]);
                labels.push(c);
            }
        }
        (Mat::from_rows(&rows).unwrap(), labels)
    }

    #[test]
    fn counts_equalize() {
        let (x, y) = blob(&[100, 40, 10], 1);
        let r = smote(&x, &y, 3, 5, 7).unwrap();
        assert_eq!(r.class_counts(3), vec![100, 100, 100]);
        assert_eq!(r.parents.len(), 150);
    }

    #[test]
    fn balanced_is_identity() {
        let (x, y) = blob(&[20, 20], 2);
        let r = smote(&x, &y, 2, 5, 7).unwrap();
        assert_eq!(r.features, x);
        assert_eq!(r.labels, y);
    }

    #[test]
    fn synthetic_points_on_parent_segment() {
        let (x, y) = blob(&[60, 7, 2], 3);
        let r = smote(&x, &y, 3, 5, 11).unwrap();
        for (s, &(a, b)) in r.parents.iter().enumerate() {
            let row = r.n_original + s;
            assert_eq!(y[a], r.labels[row]);
            assert_eq!(y[b], r.labels[row]);
            assert_ne!(a, b);
            let (pa, pb, p) = (x.row(a), x.row(b), r.features.row(row));
            let d = pb[0] - pa[0];
            let t = if d.abs() > 1e-12 { (p[0] - pa[0]) / d } else { 0.5 };
            assert!((-1e-9..=1.0 + 1e-9).contains(&t));
            for j in 0..2 {
                assert!((pa[j] + t * (pb[j] - pa[j]) - p[j]).abs() < 1e-9);
            }
        }
        // originals unchanged and first
        for i in 0..x.rows() {
            assert_eq!(r.features.row(i), x.row(i));
        }
    }

    #[test]
    fn singleton_class_rejected() {
        let (x, y) = blob(&[5, 1], 4);
        assert!(matches!(smote(&x, &y, 2, 5, 0), Err(Error::ClassTooSmall { class: 1, count: 1 })));
        let (x, y) = blob(&[5, 0, 3], 4);
        assert_eq!(smote(&x, &y, 3, 5, 0).unwrap().class_counts(3), vec![5, 0, 5]);
    }
}
