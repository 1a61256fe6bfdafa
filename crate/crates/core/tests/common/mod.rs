//! Oracles and random instance generators shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, SymmetricEigen};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use soilspec::lda::{fit_lda, scatter, LdaModel, ScatterPair};
use soilspec::linalg::Mat;
use soilspec::ml::knn::{squared_distance, Neighbor};

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn to_na(m: &Mat) -> DMatrix<f64> {
    DMatrix::from_row_slice(m.rows(), m.cols(), m.data())
}

/// Labelled Gaussian clouds with random class means and a random shared
/// covariance. Every class gets at least two rows.
pub fn lda_instance(rng: &mut ChaCha8Rng, d: usize, c: usize, n: usize) -> (Mat, Vec<usize>) {
    assert!(n >= 2 * c);
    let means: Vec<Vec<f64>> = (0..c).map(|_| (0..d).map(|_| 3.0 * normal(rng)).collect()).collect();
    let mix: Vec<Vec<f64>> = (0..d).map(|_| (0..d).map(|_| normal(rng)).collect()).collect();
    let mut data = Vec::with_capacity(n * d);
    let mut labels = Vec::with_capacity(n);
    for i in 0..n {
        let class = if i < 2 * c { i % c } else { rng.random_range(0..c) };
        let z: Vec<f64> = (0..d).map(|_| normal(rng)).collect();
        for j in 0..d {
            let noise: f64 = (0..d).map(|k| mix[j][k] * z[k]).sum();
            data.push(means[class][j] + noise);
        }
        labels.push(class);
    }
    (Mat::from_vec(n, d, data).unwrap(), labels)
}

pub fn random_lda_instance(rng: &mut ChaCha8Rng) -> (Mat, Vec<usize>, usize) {
    let d = rng.random_range(2..=13);
    let c = rng.random_range(2..=12);
    let n = rng.random_range((4 * (d + c)).max(2 * c)..=2000);
    let (x, y) = lda_instance(rng, d, c, n);
    (x, y, c)
}

/// Sine of the largest principal angle between the column spaces of `a`
/// and `b` (both d x r, full column rank).
pub fn subspace_sin_angle(a: &DMatrix<f64>, b: &DMatrix<f64>) -> f64 {
    let qa = a.clone().qr().q();
    let qb = b.clone().qr().q();
    let resid = &qb - &qa * (qa.transpose() * &qb);
    resid.singular_values().iter().copied().fold(0.0, f64::max)
}

pub struct LdaCheck {
    pub sin_angle: f64,
    pub residual: f64,
    pub between_norm: f64,
    pub eigenvalue_error: f64,
}

/// Solves the same generalized problem with nalgebra by whitening with the
/// symmetric inverse square root of the regularized within scatter, and
/// compares the leading discriminant subspace and every eigenpair.
pub fn check_lda(pair: &ScatterPair, model: &LdaModel) -> LdaCheck {
    let d = pair.dim();
    let sw = to_na(&model.regularized_within(pair));
    let sb = to_na(&pair.between);
    let eig_w = SymmetricEigen::new(sw.clone());
    let inv_sqrt = &eig_w.eigenvectors
        * DMatrix::from_diagonal(&eig_w.eigenvalues.map(|v| 1.0 / v.sqrt()))
        * eig_w.eigenvectors.transpose();
    let a = &inv_sqrt * &sb * &inv_sqrt;
    let a = (&a + a.transpose()) * 0.5;
    let eig = SymmetricEigen::new(a);
    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]));
    let oracle_vals: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let r = (pair.n_classes() - 1).min(d);
    let oracle_w = DMatrix::from_fn(d, r, |i, k| (&inv_sqrt * eig.eigenvectors.column(order[k]))[i]);

    // the full W for every eigenpair, recomputed at energy 1
    let full = fit_lda(pair, 1.0).unwrap();
    let ours = to_na(&full.projection);
    let sin_angle = subspace_sin_angle(&ours.columns(0, r).into_owned(), &oracle_w);

    let mut residual = 0.0f64;
    for k in 0..full.k_selected {
        let w = ours.column(k).normalize();
        let lam = full.eigenvalues[k];
        let res = (&sb * &w - lam * (&sw * &w)).norm();
        residual = residual.max(res);
    }
    // all d eigenvalues, including the ones past the selected K
    let scale = oracle_vals[0].abs().max(1.0);
    let eigenvalue_error = model
        .eigenvalues
        .iter()
        .zip(&oracle_vals)
        .map(|(a, b)| (a - b).abs() / scale)
        .fold(0.0, f64::max);
    LdaCheck {
        sin_angle,
        residual,
        between_norm: sb.norm(),
        eigenvalue_error,
    }
}

pub fn fit_instance(x: &Mat, labels: &[usize], c: usize, energy: f64) -> (ScatterPair, LdaModel) {
    let pair = scatter(x, labels, c).unwrap();
    let model = fit_lda(&pair, energy).unwrap();
    (pair, model)
}

/// Linear-scan k nearest neighbours ordered by (distance, index).
pub fn brute_force_knn(points: &Mat, query: &[f64], k: usize) -> Vec<Neighbor> {
    let mut all: Vec<Neighbor> = (0..points.rows())
        .map(|i| Neighbor {
            distance_sq: squared_distance(points.row(i), query),
            index: i,
        })
        .collect();
    all.sort();
    all.truncate(k);
    all
}

pub fn brute_force_vote(labels: &[usize], neighbors: &[Neighbor], n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for n in neighbors {
        counts[labels[n.index]] += 1;
    }
    let best = *counts.iter().max().unwrap();
    counts.iter().position(|&c| c == best).unwrap()
}

pub fn brute_force_mean(targets: &Mat, neighbors: &[Neighbor]) -> Vec<f64> {
    let mut out = vec![0.0; targets.cols()];
    for n in neighbors {
        for (o, v) in out.iter_mut().zip(targets.row(n.index)) {
            *o += v;
        }
    }
    out.iter_mut().for_each(|o| *o /= neighbors.len() as f64);
    out
}

/// Random points on a coarse grid so that exact distance ties occur.
pub fn knn_instance(rng: &mut ChaCha8Rng, n: usize, d: usize, grid: bool) -> Mat {
    let data = (0..n * d)
        .map(|_| {
            if grid {
                f64::from(rng.random_range(0..12u8))
            } else {
                rng.random::<f64>()
            }
        })
        .collect();
    Mat::from_vec(n, d, data).unwrap()
}

/// A 100 x 100 plane with a random mix of smooth structure, noise and
/// occasional saturated outliers.
pub fn random_plane(rng: &mut ChaCha8Rng) -> Vec<f64> {
    let base = rng.random_range(0.0..900.0);
    let spread = rng.random_range(0.0..200.0);
    let tilt = rng.random_range(-2.0..2.0);
    let outliers = rng.random_bool(0.3);
    (0..10_000)
        .map(|i| {
            let (r, c) = ((i / 100) as f64, (i % 100) as f64);
            let mut v = base + tilt * (r - c) + spread * normal(rng);
            if outliers && rng.random_bool(0.01) {
                v = 1023.0;
            }
            v.clamp(0.0, 1023.0).round()
        })
        .collect()
}
