//! Five-fold cross-validation of the three texture strategies.
//!
//! Every fold fits its scaler, LDA projection, oversampler and learner on the
//! training rows alone. Each of those fitted objects is fingerprinted so the
//! no-leakage property can be audited: perturbing a fold's test rows must not
//! change any fingerprint.

use std::collections::hash_map::DefaultHasher;
use std::fmt;
use std::hash::{Hash, Hasher};
use std::io::Write;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::features::{fit_scaler, MinMaxScaler};
use crate::lda::{fit_lda, project, scatter, LdaModel, DEFAULT_ENERGY};
use crate::linalg::Mat;
use crate::ml::forest::{ForestModel, ForestParams};
use crate::ml::knn::{KnnClassifier, KnnRegressor};
use crate::ml::metrics::{classification_metrics, regression_metrics, ClassificationReport, RegressionReport};
use crate::ml::smote::{smote, Resampled, DEFAULT_K_NEIGHBORS};
use crate::ml::tree::{Node, Targets, TreeModel, TreeParams};
use crate::par;
use crate::seed::derive_seed;
use crate::spectral::{Composition, TextureClass};
use crate::table::ObservationTable;
use crate::triangle::{classify_composition, normalize_prediction};

pub const N_FOLDS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Granularity {
    Block,
    Specimen,
}

impl Granularity {
    pub fn name(self) -> &'static str {
        match self {
            Granularity::Block => "block",
            Granularity::Specimen => "specimen",
        }
    }
}

impl fmt::Display for Granularity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Granularity {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "block" => Ok(Granularity::Block),
            "specimen" => Ok(Granularity::Specimen),
            _ => Err(Error::InvalidParameter(format!("unknown granularity {s:?}"))),
        }
    }
}

/// Which rows the min-max scaler is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ScalerScope {
    /// Training rows of each fold.
    Fold,
    /// The whole cross-validation table, test folds included.
    Pool,
}

impl ScalerScope {
    pub fn name(self) -> &'static str {
        match self {
            ScalerScope::Fold => "fold",
            ScalerScope::Pool => "pool",
        }
    }
}

impl FromStr for ScalerScope {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fold" => Ok(ScalerScope::Fold),
            "pool" => Ok(ScalerScope::Pool),
            _ => Err(Error::InvalidParameter(format!("unknown scaler scope {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CvPlan {
    pub n_folds: usize,
    pub seed: u64,
    pub granularity: Granularity,
    pub stratified: bool,
    /// Zero-based fold of every table row.
    assignment: Vec<usize>,
}

impl CvPlan {
    pub fn assignment(&self) -> &[usize] {
        &self.assignment
    }

    pub fn len(&self) -> usize {
        self.assignment.len()
    }

    pub fn is_empty(&self) -> bool {
        self.assignment.is_empty()
    }

    pub fn test_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] == fold).collect()
    }

    pub fn train_rows(&self, fold: usize) -> Vec<usize> {
        (0..self.assignment.len()).filter(|&i| self.assignment[i] != fold).collect()
    }

    pub fn fold_sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0; self.n_folds];
        self.assignment.iter().for_each(|&f| sizes[f] += 1);
        sizes
    }
}

/// Seeded shuffle of the assignment units (rows or specimens) followed by
/// round-robin dealing into folds. With `stratify`, units are dealt class by
/// class, which keeps the per-class fold counts within one of each other.
pub fn make_folds(table: &ObservationTable, seed: u64, granularity: Granularity, stratify: bool) -> CvPlan {
    // unit id per row, plus each unit's class
    let (unit_of_row, unit_class): (Vec<usize>, Vec<usize>) = match granularity {
        Granularity::Block => (
            (0..table.len()).collect(),
            table.rows.iter().map(|r| r.texture.index()).collect(),
        ),
        Granularity::Specimen => {
            let mut index = std::collections::HashMap::new();
            let mut classes = Vec::new();
            let units = table
                .rows
                .iter()
                .map(|r| {
                    *index.entry(r.specimen_id.as_str()).or_insert_with(|| {
                        classes.push(r.texture.index());
                        classes.len() - 1
                    })
                })
                .collect();
            (units, classes)
        }
    };
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut units: Vec<usize> = (0..unit_class.len()).collect();
    units.shuffle(&mut rng);
    if stratify {
        // stable sort keeps the shuffled order inside each class
        units.sort_by_key(|&u| unit_class[u]);
    }
    let mut unit_fold = vec![0; unit_class.len()];
    for (pos, &u) in units.iter().enumerate() {
        unit_fold[u] = pos % N_FOLDS;
    }
    CvPlan {
        n_folds: N_FOLDS,
        seed,
        granularity,
        stratified: stratify,
        assignment: unit_of_row.iter().map(|&u| unit_fold[u]).collect(),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelKind {
    Knn,
    RandomForest,
    DecisionTree,
}

impl ModelKind {
    pub const ALL: [ModelKind; 3] = [ModelKind::Knn, ModelKind::RandomForest, ModelKind::DecisionTree];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Knn => "knn",
            ModelKind::RandomForest => "rf",
            ModelKind::DecisionTree => "dt",
        }
    }
}

impl FromStr for ModelKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "knn" => Ok(ModelKind::Knn),
            "rf" => Ok(ModelKind::RandomForest),
            "dt" => Ok(ModelKind::DecisionTree),
            _ => Err(Error::InvalidParameter(format!("unknown model {s:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct ModelSpec {
    pub kind: ModelKind,
    pub knn_k: usize,
    pub n_trees: usize,
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
}

pub const DEFAULT_KNN_K: usize = 5;
pub const DEFAULT_N_TREES: usize = 50;

impl ModelSpec {
    pub fn new(kind: ModelKind) -> Self {
        Self {
            kind,
            knn_k: DEFAULT_KNN_K,
            n_trees: DEFAULT_N_TREES,
            max_depth: None,
            min_leaf: 1,
        }
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    fn forest_params(&self, seed: u64) -> ForestParams {
        ForestParams {
            n_trees: self.n_trees,
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: None,
            bootstrap: true,
            seed,
        }
    }

    fn tree_params(&self) -> TreeParams {
        TreeParams {
            max_depth: self.max_depth,
            min_leaf: self.min_leaf,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalOptions {
    pub scaler_scope: ScalerScope,
    pub energy: f64,
    pub smote: bool,
    pub smote_k: usize,
    /// Base seed for oversampling and forests; each fold derives its own.
    pub seed: u64,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            scaler_scope: ScalerScope::Fold,
            energy: DEFAULT_ENERGY,
            smote: true,
            smote_k: DEFAULT_K_NEIGHBORS,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum Strategy {
    Direct = 1,
    Regression = 2,
    Indirect = 3,
}

impl Strategy {
    pub const ALL: [Strategy; 3] = [Strategy::Direct, Strategy::Regression, Strategy::Indirect];

    pub fn id(self) -> u8 {
        self as u8
    }

    pub fn from_id(id: u8) -> Option<Self> {
        Self::ALL.into_iter().find(|s| s.id() == id)
    }
}

/// Hashes of everything fitted inside one fold.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default)]
pub struct FoldFingerprint {
    pub scaler: u64,
    pub lda: u64,
    pub smote: u64,
    pub learner: u64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FoldReport {
    /// Zero-based fold index.
    pub fold: usize,
    pub n_train: usize,
    pub n_test: usize,
    pub lda_components: usize,
    /// Metric name and value, in a fixed order per strategy.
    pub metrics: Vec<(&'static str, f64)>,
    pub classification: Option<ClassificationReport>,
    pub regression: Option<RegressionReport>,
    /// Test rows of the table and the raw predicted (clay, silt, sand).
    pub test_rows: Vec<usize>,
    pub predictions: Option<Mat>,
    pub fingerprint: FoldFingerprint,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub name: &'static str,
    pub values: Vec<f64>,
    pub mean: f64,
    /// Population standard deviation over folds.
    pub std: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StrategyResult {
    pub strategy: Strategy,
    pub model: &'static str,
    pub granularity: Granularity,
    pub folds: Vec<FoldReport>,
    pub summary: Vec<MetricSummary>,
}

impl StrategyResult {
    fn new(strategy: Strategy, model: &'static str, granularity: Granularity, folds: Vec<FoldReport>) -> Self {
        let summary = folds
            .first()
            .map(|f| {
                f.metrics
                    .iter()
                    .enumerate()
                    .map(|(i, &(name, _))| summarize(name, folds.iter().map(|f| f.metrics[i].1).collect()))
                    .collect()
            })
            .unwrap_or_default();
        Self {
            strategy,
            model,
            granularity,
            folds,
            summary,
        }
    }

    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.name == name)
    }

    /// Confusion counts summed over folds, row-normalized.
    pub fn pooled_confusion(&self) -> Option<Vec<Vec<f64>>> {
        let mut total = vec![vec![0usize; TextureClass::COUNT]; TextureClass::COUNT];
        let mut any = false;
        for f in &self.folds {
            if let Some(r) = &f.classification {
                any = true;
                for (t, row) in r.confusion.iter().enumerate() {
                    for (p, n) in row.iter().enumerate() {
                        total[t][p] += n;
                    }
                }
            }
        }
        any.then(|| {
            total
                .iter()
                .map(|row| {
                    let s: usize = row.iter().sum();
                    row.iter().map(|&n| if s == 0 { 0.0 } else { n as f64 / s as f64 }).collect()
                })
                .collect()
        })
    }
}

pub fn summarize(name: &'static str, values: Vec<f64>) -> MetricSummary {
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n;
    MetricSummary {
        name,
        values,
        mean,
        std: var.sqrt(),
    }
}

// ---------------------------------------------------------------------------
// fingerprinting

fn hash_f64s<'a>(h: &mut DefaultHasher, values: impl IntoIterator<Item = &'a f64>) {
    for v in values {
        v.to_bits().hash(h);
    }
}

fn hash_mat(h: &mut DefaultHasher, m: &Mat) {
    (m.rows(), m.cols()).hash(h);
    hash_f64s(h, m.data());
}

fn fingerprint_scaler(s: &MinMaxScaler) -> u64 {
    let mut h = DefaultHasher::new();
    if let Some(b) = s.bounds() {
        for (lo, hi) in b {
            hash_f64s(&mut h, [lo, hi]);
        }
    }
    h.finish()
}

fn fingerprint_lda(m: &LdaModel) -> u64 {
    let mut h = DefaultHasher::new();
    hash_mat(&mut h, &m.projection);
    hash_f64s(&mut h, &m.eigenvalues);
    m.k_selected.hash(&mut h);
    hash_f64s(&mut h, [&m.ridge]);
    h.finish()
}

fn fingerprint_training(x: &Mat, labels: &[usize]) -> u64 {
    let mut h = DefaultHasher::new();
    hash_mat(&mut h, x);
    labels.hash(&mut h);
    h.finish()
}

fn hash_tree(h: &mut DefaultHasher, t: &TreeModel) {
    for n in t.nodes() {
        match n {
            Node::Leaf { payload } => {
                0u8.hash(h);
                hash_f64s(h, payload);
            }
            Node::Split {
                feature,
                threshold,
                left,
                right,
            } => {
                1u8.hash(h);
                (feature, left, right).hash(h);
                hash_f64s(h, [threshold]);
            }
        }
    }
}

enum Learner {
    KnnClass(KnnClassifier),
    KnnReg(KnnRegressor),
    Forest(ForestModel),
    Tree(TreeModel),
}

impl Learner {
    fn fingerprint(&self) -> u64 {
        let mut h = DefaultHasher::new();
        match self {
            Learner::KnnClass(m) => {
                m.model().k().hash(&mut h);
                hash_mat(&mut h, m.model().index().points());
                m.labels().hash(&mut h);
            }
            Learner::KnnReg(m) => {
                m.model().k().hash(&mut h);
                hash_mat(&mut h, m.model().index().points());
                hash_mat(&mut h, m.targets());
            }
            Learner::Forest(f) => f.trees().iter().for_each(|t| hash_tree(&mut h, t)),
            Learner::Tree(t) => hash_tree(&mut h, t),
        }
        h.finish()
    }

    fn classify(&self, x: &Mat) -> Result<Vec<usize>> {
        match self {
            Learner::KnnClass(m) => m.predict(x),
            Learner::Forest(f) => Ok(f.predict_classes(x)),
            Learner::Tree(t) => Ok(par::map_range(x.rows(), |i| t.predict_class(x.row(i)))),
            Learner::KnnReg(_) => Err(Error::InvalidParameter("regressor used for classification".into())),
        }
    }

    fn regress(&self, x: &Mat) -> Result<Mat> {
        match self {
            Learner::KnnReg(m) => m.predict(x),
            Learner::Forest(f) => f.predict_values(x),
            Learner::Tree(t) => Mat::from_rows(&par::map_range(x.rows(), |i| t.predict_value(x.row(i)))),
            Learner::KnnClass(_) => Err(Error::InvalidParameter("classifier used for regression".into())),
        }
    }
}

fn fit_classifier(spec: &ModelSpec, x: Mat, labels: Vec<usize>, seed: u64) -> Result<Learner> {
    let n_classes = TextureClass::COUNT;
    Ok(match spec.kind {
        ModelKind::Knn => Learner::KnnClass(KnnClassifier::fit(x, labels, n_classes, spec.knn_k)?),
        ModelKind::RandomForest => {
            Learner::Forest(ForestModel::fit_classifier(&x, &labels, n_classes, spec.forest_params(seed))?)
        }
        ModelKind::DecisionTree => {
            Learner::Tree(TreeModel::fit_classifier(&x, &labels, n_classes, spec.tree_params())?)
        }
    })
}

fn fit_regressor(spec: &ModelSpec, x: Mat, y: Mat, seed: u64) -> Result<Learner> {
    Ok(match spec.kind {
        ModelKind::Knn => Learner::KnnReg(KnnRegressor::fit(x, y, spec.knn_k)?),
        ModelKind::RandomForest => Learner::Forest(ForestModel::fit(&x, Targets::Values(&y), spec.forest_params(seed))?),
        ModelKind::DecisionTree => Learner::Tree(TreeModel::fit_regressor(&x, &y, spec.tree_params())?),
    })
}

// ---------------------------------------------------------------------------
// per-fold stages

fn scaled_rows(scaler: &MinMaxScaler, table: &ObservationTable, rows: &[usize]) -> Result<Mat> {
    let data = rows
        .iter()
        .map(|&i| scaler.transform_row(&table.rows[i].features))
        .collect::<Result<Vec<_>>>()?;
    if data.is_empty() {
        return Ok(Mat::zeros(0, crate::spectral::NUM_BANDS));
    }
    Mat::from_rows(&data)
}

/// Supervision labels for the LDA fit.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Supervision {
    Texture,
    CompositionGroup,
}

/// Dense labels over the training rows. Group ids come from the sorted set of
/// training keys, so they cannot depend on anything in the test rows.
fn dense_labels(table: &ObservationTable, train: &[usize], mode: Supervision) -> (Vec<usize>, usize) {
    match mode {
        Supervision::Texture => {
            let mut present: Vec<usize> = train.iter().map(|&i| table.rows[i].texture.index()).collect();
            present.sort_unstable();
            present.dedup();
            let labels = train
                .iter()
                .map(|&i| present.binary_search(&table.rows[i].texture.index()).expect("present"))
                .collect();
            (labels, present.len())
        }
        Supervision::CompositionGroup => {
            let mut keys: Vec<Composition> = train.iter().map(|&i| table.rows[i].composition).collect();
            keys.sort_by(|a, b| a.cmp_components(b));
            keys.dedup_by(|a, b| a.same_components(b));
            let labels = train
                .iter()
                .map(|&i| {
                    keys.binary_search_by(|k| k.cmp_components(&table.rows[i].composition))
                        .expect("present")
                })
                .collect();
            (labels, keys.len())
        }
    }
}

struct Projected {
    train: Mat,
    test: Mat,
    lda_components: usize,
    scaler_fp: u64,
    lda_fp: u64,
}

fn fit_transforms(
    table: &ObservationTable,
    pool_scaler: Option<&MinMaxScaler>,
    train: &[usize],
    test: &[usize],
    mode: Supervision,
    energy: f64,
) -> Result<Projected> {
    let scaler = match pool_scaler {
        Some(s) => s.clone(),
        None => fit_scaler(train.iter().map(|&i| &table.rows[i].features))?,
    };
    let x_train = scaled_rows(&scaler, table, train)?;
    let x_test = scaled_rows(&scaler, table, test)?;
    let (labels, n_groups) = dense_labels(table, train, mode);
    let lda = fit_lda(&scatter(&x_train, &labels, n_groups)?, energy)?;
    Ok(Projected {
        train: project(&lda, &x_train)?,
        test: project(&lda, &x_test)?,
        lda_components: lda.k_selected,
        scaler_fp: fingerprint_scaler(&scaler),
        lda_fp: fingerprint_lda(&lda),
    })
}

fn classification_entries(r: &ClassificationReport) -> Vec<(&'static str, f64)> {
    vec![
        ("accuracy", r.accuracy),
        ("macro_f1", r.macro_f1),
        ("macro_recall", r.macro_recall),
    ]
}

fn regression_entries(r: &RegressionReport, sum_within: f64) -> Vec<(&'static str, f64)> {
    vec![
        ("r2_clay", r.r2[0]),
        ("r2_silt", r.r2[1]),
        ("r2_sand", r.r2[2]),
        ("rmse_clay", r.rmse[0]),
        ("rmse_silt", r.rmse[1]),
        ("rmse_sand", r.rmse[2]),
        ("sum_within_10pct", sum_within),
    ]
}

fn composition_targets(table: &ObservationTable, rows: &[usize]) -> Result<Mat> {
    Mat::from_rows(&rows.iter().map(|&i| table.rows[i].composition.as_array()).collect::<Vec<_>>())
}

/// Share of predicted triples whose sum lies in [90, 110].
fn sum_within(pred: &Mat) -> f64 {
    let ok = pred
        .iter_rows()
        .filter(|r| (90.0..=110.0).contains(&r.iter().sum::<f64>()))
        .count();
    ok as f64 / pred.rows().max(1) as f64
}

/// Maps raw regression outputs through renormalization and the triangle.
pub fn indirect_classes(pred: &Mat) -> Result<Vec<usize>> {
    pred.iter_rows()
        .map(|r| {
            let c = normalize_prediction(r[0], r[1], r[2])?;
            Ok(classify_composition(&c)?.index())
        })
        .collect()
}

struct Context<'a> {
    table: &'a ObservationTable,
    plan: &'a CvPlan,
    spec: &'a ModelSpec,
    opts: &'a EvalOptions,
    pool_scaler: Option<MinMaxScaler>,
}

impl<'a> Context<'a> {
    fn new(table: &'a ObservationTable, plan: &'a CvPlan, spec: &'a ModelSpec, opts: &'a EvalOptions) -> Result<Self> {
        if plan.len() != table.len() {
            return Err(Error::LengthMismatch(plan.len(), table.len()));
        }
        let pool_scaler = match opts.scaler_scope {
            ScalerScope::Fold => None,
            ScalerScope::Pool => Some(fit_scaler(table.features())?),
        };
        Ok(Self {
            table,
            plan,
            spec,
            opts,
            pool_scaler,
        })
    }

    fn direct_fold(&self, fold: usize) -> Result<FoldReport> {
        let (train, test) = (self.plan.train_rows(fold), self.plan.test_rows(fold));
        let p = fit_transforms(
            self.table,
            self.pool_scaler.as_ref(),
            &train,
            &test,
            Supervision::Texture,
            self.opts.energy,
        )?;
        let labels: Vec<usize> = train.iter().map(|&i| self.table.rows[i].texture.index()).collect();
        let fold_seed = derive_seed(self.opts.seed, fold as u64);
        let resampled = if self.opts.smote {
            smote(&p.train, &labels, TextureClass::COUNT, self.opts.smote_k, fold_seed)?
        } else {
            Resampled {
                features: p.train.clone(),
                labels: labels.clone(),
                parents: Vec::new(),
                n_original: labels.len(),
            }
        };
        let smote_fp = fingerprint_training(&resampled.features, &resampled.labels);
        let n_train = resampled.labels.len();
        let learner = fit_classifier(self.spec, resampled.features, resampled.labels, fold_seed)?;
        let predicted = learner.classify(&p.test)?;
        let truth: Vec<usize> = test.iter().map(|&i| self.table.rows[i].texture.index()).collect();
        let report = classification_metrics(&truth, &predicted, TextureClass::COUNT)?;
        Ok(FoldReport {
            fold,
            n_train,
            n_test: test.len(),
            lda_components: p.lda_components,
            metrics: classification_entries(&report),
            classification: Some(report),
            regression: None,
            test_rows: test,
            predictions: None,
            fingerprint: FoldFingerprint {
                scaler: p.scaler_fp,
                lda: p.lda_fp,
                smote: smote_fp,
                learner: learner.fingerprint(),
            },
        })
    }

    /// Strategy 2 and 3 reports for one fold; both share the fitted regressor.
    fn regression_fold(&self, fold: usize) -> Result<(FoldReport, FoldReport)> {
        let (train, test) = (self.plan.train_rows(fold), self.plan.test_rows(fold));
        let p = fit_transforms(
            self.table,
            self.pool_scaler.as_ref(),
            &train,
            &test,
            Supervision::CompositionGroup,
            self.opts.energy,
        )?;
        let y_train = composition_targets(self.table, &train)?;
        let smote_fp = fingerprint_training(&p.train, &[]);
        let fold_seed = derive_seed(self.opts.seed, fold as u64);
        let learner = fit_regressor(self.spec, p.train, y_train.clone(), fold_seed)?;
        let pred = learner.regress(&p.test)?;
        let y_test = composition_targets(self.table, &test)?;
        let reg = regression_metrics(&y_test, &pred)?;
        let truth: Vec<usize> = test.iter().map(|&i| self.table.rows[i].texture.index()).collect();
        let cls = classification_metrics(&truth, &indirect_classes(&pred)?, TextureClass::COUNT)?;
        let fingerprint = FoldFingerprint {
            scaler: p.scaler_fp,
            lda: p.lda_fp,
            smote: smote_fp,
            learner: learner.fingerprint(),
        };
        let s2 = FoldReport {
            fold,
            n_train: train.len(),
            n_test: test.len(),
            lda_components: p.lda_components,
            metrics: regression_entries(&reg, sum_within(&pred)),
            classification: None,
            regression: Some(reg),
            test_rows: test,
            predictions: Some(pred),
            fingerprint,
        };
        let s3 = FoldReport {
            metrics: classification_entries(&cls),
            classification: Some(cls),
            regression: None,
            predictions: None,
            ..s2.clone()
        };
        Ok((s2, s3))
    }
}

pub fn run_strategy1(table: &ObservationTable, plan: &CvPlan, spec: &ModelSpec, opts: &EvalOptions) -> Result<StrategyResult> {
    let ctx = Context::new(table, plan, spec, opts)?;
    let folds = par::try_map_range(plan.n_folds, |f| ctx.direct_fold(f))?;
    Ok(StrategyResult::new(Strategy::Direct, spec.name(), plan.granularity, folds))
}

/// Strategies 2 and 3 together, sharing one regressor per fold.
pub fn run_regression_strategies(
    table: &ObservationTable,
    plan: &CvPlan,
    spec: &ModelSpec,
    opts: &EvalOptions,
) -> Result<(StrategyResult, StrategyResult)> {
    let ctx = Context::new(table, plan, spec, opts)?;
    let (s2, s3): (Vec<_>, Vec<_>) = par::try_map_range(plan.n_folds, |f| ctx.regression_fold(f))?
        .into_iter()
        .unzip();
    Ok((
        StrategyResult::new(Strategy::Regression, spec.name(), plan.granularity, s2),
        StrategyResult::new(Strategy::Indirect, spec.name(), plan.granularity, s3),
    ))
}

pub fn run_strategy2(table: &ObservationTable, plan: &CvPlan, spec: &ModelSpec, opts: &EvalOptions) -> Result<StrategyResult> {
    Ok(run_regression_strategies(table, plan, spec, opts)?.0)
}

pub fn run_strategy3(table: &ObservationTable, plan: &CvPlan, spec: &ModelSpec, opts: &EvalOptions) -> Result<StrategyResult> {
    Ok(run_regression_strategies(table, plan, spec, opts)?.1)
}

/// Runs the requested strategies; results come back in strategy order.
pub fn run_strategies(
    table: &ObservationTable,
    plan: &CvPlan,
    spec: &ModelSpec,
    opts: &EvalOptions,
    strategies: &[Strategy],
) -> Result<Vec<StrategyResult>> {
    let mut out = Vec::new();
    if strategies.contains(&Strategy::Direct) {
        out.push(run_strategy1(table, plan, spec, opts)?);
    }
    let want2 = strategies.contains(&Strategy::Regression);
    let want3 = strategies.contains(&Strategy::Indirect);
    if want2 || want3 {
        let (s2, s3) = run_regression_strategies(table, plan, spec, opts)?;
        if want2 {
            out.push(s2);
        }
        if want3 {
            out.push(s3);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExternalValidation {
    pub regression: RegressionReport,
    /// Triangle classes of the renormalized predictions against the truth.
    pub indirect: ClassificationReport,
    pub predictions: Mat,
    pub lda_components: usize,
}

/// Fits scaler, LDA and regressor on the whole training table and applies
/// the frozen transforms to the validation table.
pub fn run_external_validation(
    train: &ObservationTable,
    validation: &ObservationTable,
    spec: &ModelSpec,
    opts: &EvalOptions,
) -> Result<ExternalValidation> {
    let train_ids: std::collections::HashSet<&str> = train.specimen_ids().into_iter().collect();
    if let Some(id) = validation.specimen_ids().into_iter().find(|id| train_ids.contains(id)) {
        return Err(Error::SpecimenOverlap(id.to_string()));
    }
    let mut joined = train.clone();
    joined.rows.extend(validation.rows.iter().cloned());
    let train_rows: Vec<usize> = (0..train.len()).collect();
    let val_rows: Vec<usize> = (train.len()..joined.len()).collect();
    let p = fit_transforms(&joined, None, &train_rows, &val_rows, Supervision::CompositionGroup, opts.energy)?;
    let learner = fit_regressor(spec, p.train, composition_targets(&joined, &train_rows)?, opts.seed)?;
    let pred = learner.regress(&p.test)?;
    let regression = regression_metrics(&composition_targets(&joined, &val_rows)?, &pred)?;
    let truth: Vec<usize> = validation.rows.iter().map(|r| r.texture.index()).collect();
    let indirect = classification_metrics(&truth, &indirect_classes(&pred)?, TextureClass::COUNT)?;
    Ok(ExternalValidation {
        regression,
        indirect,
        predictions: pred,
        lda_components: p.lda_components,
    })
}

// ---------------------------------------------------------------------------
// leakage audit

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AuditOutcome {
    pub strategy: Strategy,
    pub fold: usize,
    pub original: FoldFingerprint,
    pub perturbed: FoldFingerprint,
}

impl AuditOutcome {
    pub fn passed(&self) -> bool {
        self.original == self.perturbed
    }
}

/// Copy of `table` with the rows of `fold` shuffled among themselves and
/// their labels (composition and texture) independently reshuffled.
pub fn perturb_test_fold(table: &ObservationTable, plan: &CvPlan, fold: usize, seed: u64) -> ObservationTable {
    let test = plan.test_rows(fold);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order = test.clone();
    order.shuffle(&mut rng);
    let mut labels = test.clone();
    labels.shuffle(&mut rng);
    let mut out = table.clone();
    for ((&dst, &src), &lab) in test.iter().zip(&order).zip(&labels) {
        out.rows[dst].features = table.rows[src].features;
        out.rows[dst].specimen_id = table.rows[src].specimen_id.clone();
        out.rows[dst].composition = table.rows[lab].composition;
        out.rows[dst].texture = table.rows[lab].texture;
    }
    out
}

/// Refits every fold of `strategy` on a table whose test fold has been
/// perturbed and compares fingerprints with the unperturbed fit.
pub fn leakage_audit(
    table: &ObservationTable,
    plan: &CvPlan,
    spec: &ModelSpec,
    opts: &EvalOptions,
    strategy: Strategy,
    seed: u64,
) -> Result<Vec<AuditOutcome>> {
    let base = Context::new(table, plan, spec, opts)?;
    par::try_map_range(plan.n_folds, |fold| {
        let perturbed_table = perturb_test_fold(table, plan, fold, derive_seed(seed, fold as u64));
        let other = Context::new(&perturbed_table, plan, spec, opts)?;
        let fp = |ctx: &Context| -> Result<FoldFingerprint> {
            Ok(match strategy {
                Strategy::Direct => ctx.direct_fold(fold)?.fingerprint,
                Strategy::Regression | Strategy::Indirect => ctx.regression_fold(fold)?.0.fingerprint,
            })
        };
        Ok(AuditOutcome {
            strategy,
            fold,
            original: fp(&base)?,
            perturbed: fp(&other)?,
        })
    })
}

// ---------------------------------------------------------------------------
// CSV output

fn flush<W: Write>(w: &mut csv::Writer<W>, what: &str) -> Result<()> {
    w.flush().map_err(|e| Error::io(what, e))
}

/// `strategy,model,fold,metric,value`, folds numbered from 1.
pub fn write_results<W: Write>(results: &[StrategyResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["strategy", "model", "fold", "metric", "value"])?;
    for r in results {
        for f in &r.folds {
            for (name, value) in &f.metrics {
                w.write_record([
                    r.strategy.id().to_string(),
                    r.model.to_string(),
                    (f.fold + 1).to_string(),
                    name.to_string(),
                    value.to_string(),
                ])?;
            }
        }
    }
    flush(&mut w, "<results csv>")
}

/// `strategy,model,metric,mean,std`.
pub fn write_aggregate<W: Write>(results: &[StrategyResult], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["strategy", "model", "metric", "mean", "std"])?;
    for r in results {
        for m in &r.summary {
            w.write_record([
                r.strategy.id().to_string(),
                r.model.to_string(),
                m.name.to_string(),
                m.mean.to_string(),
                m.std.to_string(),
            ])?;
        }
    }
    flush(&mut w, "<aggregate csv>")
}

/// 12 x 12 row-normalized confusion matrix with class-name headers.
pub fn write_confusion<W: Write>(matrix: &[Vec<f64>], writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    let mut header = vec!["truth".to_string()];
    header.extend(TextureClass::ALL.iter().map(|c| c.name().to_string()));
    w.write_record(&header)?;
    for (c, row) in TextureClass::ALL.iter().zip(matrix) {
        let mut rec = vec![c.name().to_string()];
        rec.extend(row.iter().map(|v| v.to_string()));
        w.write_record(&rec)?;
    }
    flush(&mut w, "<confusion csv>")
}

/// True and predicted compositions for every test row of a regression run.
pub fn write_predictions<W: Write>(table: &ObservationTable, result: &StrategyResult, writer: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "fold",
        "specimen_id",
        "block_row",
        "block_col",
        "clay",
        "silt",
        "sand",
        "pred_clay",
        "pred_silt",
        "pred_sand",
    ])?;
    for f in &result.folds {
        let Some(pred) = &f.predictions else { continue };
        for (k, &row) in f.test_rows.iter().enumerate() {
            let o = &table.rows[row];
            let mut rec = vec![
                (f.fold + 1).to_string(),
                o.specimen_id.clone(),
                o.block_row.to_string(),
                o.block_col.to_string(),
            ];
            rec.extend(o.composition.as_array().iter().map(|v| v.to_string()));
            rec.extend(pred.row(k).iter().map(|v| v.to_string()));
            w.write_record(&rec)?;
        }
    }
    flush(&mut w, "<prediction csv>")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::validate_composition;
    use crate::table::Observation;

    const TOY_MIXES: [(f64, f64); 6] = [(5.0, 90.0), (10.0, 60.0), (20.0, 40.0), (30.0, 30.0), (45.0, 20.0), (60.0, 10.0)];

    /// Six compositions across several classes; features are a fixed
    /// function of the composition plus an optional per-block jitter.
    fn toy_table(n_specimens: usize, blocks: usize, jitter: f64) -> ObservationTable {
        let mut rows = Vec::new();
        for s in 0..n_specimens {
            let (clay, sand) = TOY_MIXES[s % TOY_MIXES.len()];
            let comp = validate_composition(clay, 100.0 - clay - sand, sand).unwrap();
            let texture = classify_composition(&comp).unwrap();
            for b in 0..blocks {
                let wobble = jitter * (((s * 31 + b * 7) % 11) as f64 - 5.0);
                rows.push(Observation {
                    specimen_id: format!("S{s:03}"),
                    block_row: (b / 10 + 1) as u8,
                    block_col: (b % 10 + 1) as u8,
                    features: std::array::from_fn(|k| {
                        let k = k as f64;
                        sand * (1.0 + 0.1 * k) + clay * (2.0 - 0.13 * k) + 0.01 * k * k * sand + wobble * (k + 1.0)
                    }),
                    composition: comp,
                    texture,
                });
            }
        }
        ObservationTable::new(rows)
    }

    #[test]
    fn fold_sizes() {
        let t = toy_table(2, 5, 0.0);
        let plan = make_folds(&t, 1, Granularity::Block, false);
        assert_eq!(plan.fold_sizes(), vec![2, 2, 2, 2, 2]);
        let t = toy_table(23, 10, 0.0);
        let plan = make_folds(&t, 1, Granularity::Specimen, false);
        for f in 0..N_FOLDS {
            let test = plan.test_rows(f);
            let ids: std::collections::HashSet<_> = test.iter().map(|&i| &t.rows[i].specimen_id).collect();
            for i in plan.train_rows(f) {
                assert!(!ids.contains(&t.rows[i].specimen_id));
            }
        }
        let sizes = plan.fold_sizes();
        assert!(sizes.iter().max().unwrap() - sizes.iter().min().unwrap() <= 10);
        assert_eq!(make_folds(&t, 1, Granularity::Specimen, false), plan);
        assert_ne!(make_folds(&t, 2, Granularity::Specimen, false), plan);
    }

    #[test]
    fn stratified_folds_balance_classes() {
        let t = toy_table(30, 10, 0.0);
        let plan = make_folds(&t, 4, Granularity::Block, true);
        for class in TextureClass::ALL {
            let mut per_fold = [0; N_FOLDS];
            for (i, r) in t.rows.iter().enumerate() {
                if r.texture == class {
                    per_fold[plan.assignment()[i]] += 1;
                }
            }
            assert!(per_fold.iter().max().unwrap() - per_fold.iter().min().unwrap() <= 1);
        }
    }

    #[test]
    fn population_std() {
        let m = summarize("x", vec![1.0, 2.0, 3.0, 4.0, 5.0]);
        assert_eq!(m.mean, 3.0);
        assert!((m.std - 2f64.sqrt()).abs() < 1e-15);
    }

    #[test]
    fn memorizing_knn_is_perfect_on_duplicates() {
        let t = toy_table(30, 10, 0.0);
        let plan = make_folds(&t, 3, Granularity::Block, false);
        let spec = ModelSpec { knn_k: 1, ..ModelSpec::new(ModelKind::Knn) };
        let opts = EvalOptions::default();
        let s1 = run_strategy1(&t, &plan, &spec, &opts).unwrap();
        assert!(s1.folds.iter().all(|f| f.metrics[0].1 == 1.0));
        let (s2, s3) = run_regression_strategies(&t, &plan, &spec, &opts).unwrap();
        for m in ["r2_clay", "r2_silt", "r2_sand"] {
            assert_eq!(s2.metric(m).unwrap().mean, 1.0);
        }
        assert_eq!(s3.metric("accuracy").unwrap().mean, 1.0);
    }

    #[test]
    fn audit_and_aggregation() {
        let t = toy_table(40, 10, 0.05);
        let plan = make_folds(&t, 5, Granularity::Block, false);
        let opts = EvalOptions::default();
        for kind in ModelKind::ALL {
            let spec = ModelSpec { n_trees: 4, ..ModelSpec::new(kind) };
            for strategy in [Strategy::Direct, Strategy::Regression] {
                for a in leakage_audit(&t, &plan, &spec, &opts, strategy, 9).unwrap() {
                    assert!(a.passed(), "{kind:?} {strategy:?} fold {}", a.fold);
                }
            }
            let results = run_strategies(&t, &plan, &spec, &opts, &Strategy::ALL).unwrap();
            assert_eq!(results.len(), 3);
            for r in &results {
                for m in &r.summary {
                    let mean = m.values.iter().sum::<f64>() / 5.0;
                    assert!((m.mean - mean).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn external_validation_checks_overlap() {
        let t = toy_table(12, 10, 0.0);
        let spec = ModelSpec { knn_k: 1, ..ModelSpec::new(ModelKind::Knn) };
        let opts = EvalOptions::default();
        assert!(matches!(
            run_external_validation(&t, &t, &spec, &opts),
            Err(Error::SpecimenOverlap(_))
        ));
        let mut copy = t.clone();
        copy.rows.iter_mut().for_each(|r| r.specimen_id.push_str("-v"));
        let v = run_external_validation(&t, &copy, &spec, &opts).unwrap();
        assert!(v.regression.r2.iter().all(|&r| (r - 1.0).abs() < 1e-12));
    }
}
