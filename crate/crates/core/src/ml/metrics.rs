//! Classification and regression scores.

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, PartialEq)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub macro_recall: f64,
    /// `confusion[truth][predicted]`.
    pub confusion: Vec<Vec<usize>>,
    pub normalized_confusion: Vec<Vec<f64>>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub f1: Vec<f64>,
    pub support: Vec<usize>,
}

/// Macro averages run over the classes that occur in `truth` only.
pub fn classification_metrics(truth: &[usize], predicted: &[usize], n_classes: usize) -> Result<ClassificationReport> {
    if truth.len() != predicted.len() {
        return Err(Error::LengthMismatch(truth.len(), predicted.len()));
    }
    if truth.is_empty() {
        return Err(Error::EmptyTrainingSet);
    }
    if let Some(&l) = truth.iter().chain(predicted).find(|&&l| l >= n_classes) {
        return Err(Error::InvalidParameter(format!("label {l} >= {n_classes}")));
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in truth.iter().zip(predicted) {
        confusion[t][p] += 1;
    }
    let support: Vec<usize> = confusion.iter().map(|r| r.iter().sum()).collect();
    let predicted_count: Vec<usize> = (0..n_classes).map(|c| confusion.iter().map(|r| r[c]).sum()).collect();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();

    let ratio = |a: usize, b: usize| if b == 0 { 0.0 } else { a as f64 / b as f64 };
    let precision: Vec<f64> = (0..n_classes).map(|c| ratio(confusion[c][c], predicted_count[c])).collect();
    let recall: Vec<f64> = (0..n_classes).map(|c| ratio(confusion[c][c], support[c])).collect();
    let f1: Vec<f64> = precision
        .iter()
        .zip(&recall)
        .map(|(&p, &r)| if p + r == 0.0 { 0.0 } else { 2.0 * p * r / (p + r) })
        .collect();

    let present: Vec<usize> = (0..n_classes).filter(|&c| support[c] > 0).collect();
    let mean_over = |v: &[f64]| present.iter().map(|&c| v[c]).sum::<f64>() / present.len() as f64;
    let normalized_confusion = confusion
        .iter()
        .zip(&support)
        .map(|(row, &s)| row.iter().map(|&n| ratio(n, s)).collect())
        .collect();

    Ok(ClassificationReport {
        accuracy: correct as f64 / truth.len() as f64,
        macro_f1: mean_over(&f1),
        macro_recall: mean_over(&recall),
        normalized_confusion,
        confusion,
        precision,
        recall,
        f1,
        support,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionReport {
    pub r2: Vec<f64>,
    pub rmse: Vec<f64>,
}

pub const COMPONENT_NAMES: [&str; 3] = ["clay", "silt", "sand"];

pub fn regression_metrics(truth: &Mat, predicted: &Mat) -> Result<RegressionReport> {
    if truth.rows() != predicted.rows() {
        return Err(Error::LengthMismatch(truth.rows(), predicted.rows()));
    }
    if truth.cols() != predicted.cols() {
        return Err(Error::DimensionMismatch(format!(
            "{} target columns vs {} predicted",
            truth.cols(),
            predicted.cols()
        )));
    }
    if truth.rows() < 2 {
        return Err(Error::InvalidParameter("regression metrics need at least two rows".into()));
    }
    let n = truth.rows() as f64;
    let mut r2 = Vec::with_capacity(truth.cols());
    let mut rmse = Vec::with_capacity(truth.cols());
    for j in 0..truth.cols() {
        let y = truth.column(j);
        let mean = y.iter().sum::<f64>() / n;
        let ss_tot: f64 = y.iter().map(|v| (v - mean).powi(2)).sum();
        if ss_tot == 0.0 {
            return Err(Error::ConstantTruth(COMPONENT_NAMES.get(j).copied().unwrap_or("target")));
        }
        let ss_res: f64 = y.iter().enumerate().map(|(i, v)| (v - predicted[(i, j)]).powi(2)).sum();
        r2.push(1.0 - ss_res / ss_tot);
        rmse.push((ss_res / n).sqrt());
    }
    Ok(RegressionReport { r2, rmse })
}
