//! Fisher linear discriminant analysis.
//!
//! Scatter matrices are accumulated from labelled rows, the generalized
//! problem `S_B w = λ S_W w` is reduced through the Cholesky factor of the
//! ridged within-class scatter to a symmetric standard problem, and the
//! leading directions covering a fixed share of the eigenvalue mass are kept.

use std::io::{BufRead, Write};

use crate::error::{Error, Result};
use crate::linalg::{cholesky, solve_lower, solve_lower_transpose, symmetric_eigen, Mat};

/// Relative ridge added to `S_W`, scaled by `trace(S_W) / d`.
pub const RIDGE_EPS: f64 = 1e-8;
pub const DEFAULT_ENERGY: f64 = 0.99;

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPair {
    pub within: Mat,
    pub between: Mat,
    pub class_means: Vec<Vec<f64>>,
    pub global_mean: Vec<f64>,
    pub class_counts: Vec<usize>,
}

impl ScatterPair {
    pub fn dim(&self) -> usize {
        self.global_mean.len()
    }

    pub fn n_classes(&self) -> usize {
        self.class_counts.len()
    }
}

fn add_outer(acc: &mut Mat, v: &[f64], weight: f64) {
    let d = v.len();
    for i in 0..d {
        let vi = v[i] * weight;
        for j in 0..=i {
            acc[(i, j)] += vi * v[j];
        }
    }
}

fn mirror_lower(m: &mut Mat) {
    for i in 0..m.rows() {
        for j in 0..i {
            m[(j, i)] = m[(i, j)];
        }
    }
}

fn column_means(features: &Mat) -> Vec<f64> {
    let mut mean = vec![0.0; features.cols()];
    for r in features.iter_rows() {
        for (m, v) in mean.iter_mut().zip(r) {
            *m += v;
        }
    }
    let n = features.rows() as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Within- and between-class scatter for labels in `0..n_classes`.
pub fn scatter(features: &Mat, labels: &[usize], n_classes: usize) -> Result<ScatterPair> {
    if labels.len() != features.rows() {
        return Err(Error::LengthMismatch(features.rows(), labels.len()));
    }
    if n_classes < 2 {
        return Err(Error::SingleClass);
    }
    let d = features.cols();
    let mut counts = vec![0usize; n_classes];
    let mut means = vec![vec![0.0; d]; n_classes];
    for (row, &c) in features.iter_rows().zip(labels) {
        if c >= n_classes {
            return Err(Error::InvalidParameter(format!(
                "label {c} outside 0..{n_classes}"
            )));
        }
        counts[c] += 1;
        for (m, v) in means[c].iter_mut().zip(row) {
            *m += v;
        }
    }
    if let Some(c) = counts.iter().position(|&n| n == 0) {
        return Err(Error::EmptyClass(c));
    }
    for (m, &n) in means.iter_mut().zip(&counts) {
        m.iter_mut().for_each(|v| *v /= n as f64);
    }
    let global_mean = column_means(features);

    let mut within = Mat::zeros(d, d);
    let mut centred = vec![0.0; d];
    for (row, &c) in features.iter_rows().zip(labels) {
        for j in 0..d {
            centred[j] = row[j] - means[c][j];
        }
        add_outer(&mut within, &centred, 1.0);
    }
    mirror_lower(&mut within);

    let mut between = Mat::zeros(d, d);
    for (m, &n) in means.iter().zip(&counts) {
        for j in 0..d {
            centred[j] = m[j] - global_mean[j];
        }
        add_outer(&mut between, &centred, n as f64);
    }
    mirror_lower(&mut between);

    Ok(ScatterPair {
        within,
        between,
        class_means: means,
        global_mean,
        class_counts: counts,
    })
}

/// `Σ (x - μ)(x - μ)ᵀ` over all rows.
pub fn total_scatter(features: &Mat) -> Mat {
    let mean = column_means(features);
    let d = features.cols();
    let mut total = Mat::zeros(d, d);
    let mut centred = vec![0.0; d];
    for row in features.iter_rows() {
        for j in 0..d {
            centred[j] = row[j] - mean[j];
        }
        add_outer(&mut total, &centred, 1.0);
    }
    mirror_lower(&mut total);
    total
}

#[derive(Debug, Clone, PartialEq)]
pub struct LdaModel {
    /// d x K, columns are the discriminant directions.
    pub projection: Mat,
    /// All d generalized eigenvalues, descending.
    pub eigenvalues: Vec<f64>,
    pub k_selected: usize,
    /// Absolute value added to the diagonal of `S_W`.
    pub ridge: f64,
    pub energy: f64,
}

impl LdaModel {
    pub fn dim(&self) -> usize {
        self.projection.rows()
    }

    /// `S_W + ridge·I`.
    pub fn regularized_within(&self, pair: &ScatterPair) -> Mat {
        let mut sw = pair.within.clone();
        for i in 0..sw.rows() {
            sw[(i, i)] += self.ridge;
        }
        sw
    }
}

/// Smallest K whose cumulative eigenvalue share reaches `energy`,
/// capped at `max_k`. Negative eigenvalues count as zero.
pub fn select_components(eigenvalues: &[f64], energy: f64, max_k: usize) -> usize {
    let max_k = max_k.min(eigenvalues.len()).max(1);
    let clamped: Vec<f64> = eigenvalues.iter().map(|&v| v.max(0.0)).collect();
    let total: f64 = clamped.iter().sum();
    if total <= 0.0 {
        return 1;
    }
    let mut cum = 0.0;
    for (k, v) in clamped.iter().enumerate() {
        cum += v;
        if cum / total >= energy {
            return (k + 1).min(max_k);
        }
    }
    max_k
}

pub fn fit_lda(pair: &ScatterPair, energy: f64) -> Result<LdaModel> {
    if !(energy > 0.0 && energy <= 1.0) {
        return Err(Error::InvalidParameter(format!(
            "energy must lie in (0, 1], got {energy}"
        )));
    }
    let d = pair.dim();
    let trace = pair.within.trace();
    let ridge = if trace > 0.0 {
        RIDGE_EPS * trace / d as f64
    } else {
        RIDGE_EPS
    };
    let mut sw = pair.within.clone();
    for i in 0..d {
        sw[(i, i)] += ridge;
    }
    let l = cholesky(&sw)?;
    // A = L⁻¹ S_B L⁻ᵀ
    let y = solve_lower(&l, &pair.between);
    let a = solve_lower(&l, &y.transpose());
    let (eigenvalues, v) = symmetric_eigen(&a)?;
    let mut w = solve_lower_transpose(&l, &v);
    // wᵀ S_W w = vᵀ v = 1 already; fix the sign.
    for k in 0..d {
        let col = w.column(k);
        let scale = col.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        if let Some(first) = col.iter().find(|x| x.abs() > 1e-12 * scale) {
            if *first < 0.0 {
                for i in 0..d {
                    w[(i, k)] = -w[(i, k)];
                }
            }
        }
    }
    if w.data().iter().any(|x| !x.is_finite()) || eigenvalues.iter().any(|x| !x.is_finite()) {
        return Err(Error::NumericalFailure("non-finite LDA solution".into()));
    }
    let max_k = (pair.n_classes() - 1).min(d);
    let k_selected = select_components(&eigenvalues, energy, max_k);
    Ok(LdaModel {
        projection: w.select_columns(k_selected),
        eigenvalues,
        k_selected,
        ridge,
        energy,
    })
}

/// `Z = X W`.
pub fn project(model: &LdaModel, features: &Mat) -> Result<Mat> {
    if features.cols() != model.dim() {
        return Err(Error::DimensionMismatch(format!(
            "model expects {} features, table has {}",
            model.dim(),
            features.cols()
        )));
    }
    features.matmul(&model.projection)
}

/// Plain-text dump: key/value header lines followed by the rows of W.
pub fn write_model<W: Write>(model: &LdaModel, mut out: W) -> Result<()> {
    let join = |v: &[f64]| v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",");
    let io = |e| Error::io("<lda model>", e);
    writeln!(out, "k,{}", model.k_selected).map_err(io)?;
    writeln!(out, "ridge,{}", model.ridge).map_err(io)?;
    writeln!(out, "energy,{}", model.energy).map_err(io)?;
    writeln!(out, "eigenvalues,{}", join(&model.eigenvalues)).map_err(io)?;
    writeln!(out, "projection,{},{}", model.projection.rows(), model.projection.cols()).map_err(io)?;
    for r in model.projection.iter_rows() {
        writeln!(out, "{}", join(r)).map_err(io)?;
    }
    Ok(())
}

pub fn read_model<R: BufRead>(input: R) -> Result<LdaModel> {
    let mut lines = input.lines();
    let mut next = |key: &str| -> Result<Vec<String>> {
        let line = lines
            .next()
            .ok_or_else(|| Error::Parse(format!("missing {key} line")))?
            .map_err(|e| Error::io("<lda model>", e))?;
        let fields: Vec<String> = line.split(',').map(String::from).collect();
        if !key.is_empty() && fields[0] != key {
            return Err(Error::Parse(format!("expected {key}, found {}", fields[0])));
        }
        Ok(fields)
    };
    let num = |s: &str| s.parse::<f64>().map_err(|_| Error::Parse(format!("bad number {s:?}")));
    let int = |s: &str| s.parse::<usize>().map_err(|_| Error::Parse(format!("bad integer {s:?}")));
    let k_selected = int(&next("k")?[1])?;
    let ridge = num(&next("ridge")?[1])?;
    let energy = num(&next("energy")?[1])?;
    let eigenvalues = next("eigenvalues")?[1..].iter().map(|s| num(s)).collect::<Result<Vec<_>>>()?;
    let shape = next("projection")?;
    let (rows, cols) = (int(&shape[1])?, int(&shape[2])?);
    let mut data = Vec::with_capacity(rows * cols);
    for _ in 0..rows {
        let fields = next("")?;
        if fields.len() != cols {
            return Err(Error::Parse("projection row has wrong width".into()));
        }
        for f in &fields {
            data.push(num(f)?);
        }
    }
    if cols != k_selected {
        return Err(Error::Parse("projection width differs from k".into()));
    }
    Ok(LdaModel {
        projection: Mat::from_vec(rows, cols, data)?,
        eigenvalues,
        k_selected,
        ridge,
        energy,
    })
}
