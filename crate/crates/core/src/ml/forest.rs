//! Random forests over bootstrap resamples.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::knn::vote;
use super::tree::{argmax, Targets, TreeKind, TreeModel, TreeParams};
use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::par;
use crate::seed::derive_seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ForestParams {
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features tried per split. `None` picks ceil(sqrt(d)) for classes and
    /// ceil(d/3) for regression.
    pub max_features: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestParams {
    fn default() -> Self {
        Self {
            n_trees: 50,
            max_depth: None,
            min_leaf: 1,
            max_features: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

pub fn default_max_features(kind: TreeKind, d: usize) -> usize {
    let m = match kind {
        TreeKind::Classifier { .. } => (d as f64).sqrt().ceil() as usize,
        TreeKind::Regressor { .. } => d.div_ceil(3),
    };
    m.clamp(1, d.max(1))
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    trees: Vec<TreeModel>,
    kind: TreeKind,
    params: ForestParams,
}

impl ForestModel {
    pub fn fit(x: &Mat, targets: Targets, params: ForestParams) -> Result<Self> {
        if params.n_trees == 0 {
            return Err(Error::InvalidParameter("n_trees must be at least 1".into()));
        }
        let n = x.rows();
        if n == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        let kind = match targets {
            Targets::Classes { n_classes, .. } => TreeKind::Classifier { n_classes },
            Targets::Values(m) => TreeKind::Regressor { n_outputs: m.cols() },
        };
        let tree_params = TreeParams {
            max_depth: params.max_depth,
            min_leaf: params.min_leaf,
            max_features: Some(
                params
                    .max_features
                    .unwrap_or_else(|| default_max_features(kind, x.cols())),
            ),
        };
        let trees = par::try_map_range(params.n_trees, |t| {
            let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(params.seed, t as u64));
            let rows = if params.bootstrap {
                (0..n).map(|_| rng.random_range(0..n)).collect()
            } else {
                (0..n).collect()
            };
            TreeModel::fit_rows(x, targets, rows, tree_params, Some(&mut rng))
        })?;
        Ok(Self { trees, kind, params })
    }

    pub fn fit_classifier(x: &Mat, labels: &[usize], n_classes: usize, params: ForestParams) -> Result<Self> {
        Self::fit(x, Targets::Classes { labels, n_classes }, params)
    }

    pub fn fit_regressor(x: &Mat, y: &Mat, params: ForestParams) -> Result<Self> {
        Self::fit(x, Targets::Values(y), params)
    }

    pub fn trees(&self) -> &[TreeModel] {
        &self.trees
    }

    pub fn params(&self) -> ForestParams {
        self.params
    }

    /// Hard majority vote over trees; ties go to the smaller class.
    pub fn predict_class(&self, row: &[f64]) -> usize {
        let n_classes = match self.kind {
            TreeKind::Classifier { n_classes } => n_classes,
            TreeKind::Regressor { .. } => return argmax(&self.predict_value(row)),
        };
        vote(self.trees.iter().map(|t| t.predict_class(row)), n_classes)
    }

    pub fn predict_value(&self, row: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.trees[0].leaf_payload(row).len()];
        for t in &self.trees {
            for (o, v) in out.iter_mut().zip(t.leaf_payload(row)) {
                *o += v;
            }
        }
        let n = self.trees.len() as f64;
        out.iter_mut().for_each(|o| *o /= n);
        out
    }

    pub fn predict_classes(&self, x: &Mat) -> Vec<usize> {
        par::map_range(x.rows(), |i| self.predict_class(x.row(i)))
    }

    pub fn predict_values(&self, x: &Mat) -> Result<Mat> {
        Mat::from_rows(&par::map_range(x.rows(), |i| self.predict_value(x.row(i))))
    }
}
