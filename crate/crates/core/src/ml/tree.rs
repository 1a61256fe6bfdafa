//! CART trees: Gini impurity for classes, summed variance for target vectors.

use rand::seq::index::sample;
use rand::Rng;

use crate::error::{Error, Result};
use crate::linalg::Mat;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TreeParams {
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// Features examined per split; `None` means all of them.
    pub max_features: Option<usize>,
}

impl Default for TreeParams {
    fn default() -> Self {
        Self {
            max_depth: None,
            min_leaf: 1,
            max_features: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TreeKind {
    Classifier { n_classes: usize },
    Regressor { n_outputs: usize },
}

/// Training targets as seen by the split search.
#[derive(Debug, Clone, Copy)]
pub enum Targets<'a> {
    Classes { labels: &'a [usize], n_classes: usize },
    Values(&'a Mat),
}

impl Targets<'_> {
    fn len(&self) -> usize {
        match self {
            Targets::Classes { labels, .. } => labels.len(),
            Targets::Values(m) => m.rows(),
        }
    }

    fn width(&self) -> usize {
        match self {
            Targets::Classes { n_classes, .. } => *n_classes,
            Targets::Values(m) => m.cols(),
        }
    }

    fn kind(&self) -> TreeKind {
        match self {
            Targets::Classes { n_classes, .. } => TreeKind::Classifier {
                n_classes: *n_classes,
            },
            Targets::Values(m) => TreeKind::Regressor { n_outputs: m.cols() },
        }
    }

    #[inline]
    fn add(&self, acc: &mut [f64], row: usize, sign: f64) {
        match self {
            Targets::Classes { labels, .. } => acc[labels[row]] += sign,
            Targets::Values(m) => {
                for (a, v) in acc.iter_mut().zip(m.row(row)) {
                    *a += sign * v;
                }
            }
        }
    }

    fn same_target(&self, a: usize, b: usize) -> bool {
        match self {
            Targets::Classes { labels, .. } => labels[a] == labels[b],
            Targets::Values(m) => m.row(a) == m.row(b),
        }
    }
}

// For both criteria, minimizing the children's total impurity is the same as
// maximizing sum_j acc_j^2 / n over children, where acc holds class counts
// (Gini) or per-output target sums (variance).
#[inline]
fn purity(acc: &[f64], n: usize) -> f64 {
    acc.iter().map(|a| a * a).sum::<f64>() / n as f64
}

/// Weighted impurity of a node: Gini times count, or sum of squared errors.
fn impurity(targets: &Targets, rows: &[usize]) -> f64 {
    let mut acc = vec![0.0; targets.width()];
    for &r in rows {
        targets.add(&mut acc, r, 1.0);
    }
    match targets {
        Targets::Classes { .. } => rows.len() as f64 - purity(&acc, rows.len()),
        Targets::Values(m) => {
            let sq: f64 = rows
                .iter()
                .map(|&r| m.row(r).iter().map(|v| v * v).sum::<f64>())
                .sum();
            (sq - purity(&acc, rows.len())).max(0.0)
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf {
        /// Class histogram or mean target vector.
        payload: Vec<f64>,
    },
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct TreeModel {
    nodes: Vec<Node>,
    kind: TreeKind,
    n_features: usize,
    params: TreeParams,
}

struct Builder<'a, R> {
    x: &'a Mat,
    targets: Targets<'a>,
    params: TreeParams,
    rng: Option<&'a mut R>,
    nodes: Vec<Node>,
}

impl<R: Rng> Builder<'_, R> {
    fn leaf(&self, rows: &[usize]) -> Node {
        let mut acc = vec![0.0; self.targets.width()];
        for &r in rows {
            self.targets.add(&mut acc, r, 1.0);
        }
        if let Targets::Values(_) = self.targets {
            let n = rows.len() as f64;
            acc.iter_mut().for_each(|a| *a /= n);
        }
        Node::Leaf { payload: acc }
    }

    fn grow(&mut self, rows: &mut [usize], depth: usize) -> usize {
        let id = self.nodes.len();
        let at_depth = self.params.max_depth.is_some_and(|d| depth >= d);
        let pure = rows.iter().all(|&r| self.targets.same_target(r, rows[0]));
        let min_leaf = self.params.min_leaf.max(1);
        if at_depth || pure || rows.len() < 2 * min_leaf {
            let leaf = self.leaf(rows);
            self.nodes.push(leaf);
            return id;
        }
        let Some((feature, threshold)) = self.best_split(rows) else {
            let leaf = self.leaf(rows);
            self.nodes.push(leaf);
            return id;
        };
        // placeholder until the children exist
        self.nodes.push(Node::Leaf { payload: Vec::new() });
        let mid = partition(rows, |r| self.x[(r, feature)] <= threshold);
        let (lo, hi) = rows.split_at_mut(mid);
        let left = self.grow(lo, depth + 1);
        let right = self.grow(hi, depth + 1);
        self.nodes[id] = Node::Split {
            feature,
            threshold,
            left,
            right,
        };
        id
    }

    fn candidate_features(&mut self) -> (Vec<usize>, Vec<usize>) {
        let d = self.x.cols();
        match (self.params.max_features, self.rng.as_deref_mut()) {
            (Some(m), Some(rng)) if m < d => {
                let mut chosen = sample(rng, d, m).into_vec();
                chosen.sort_unstable();
                let rest = (0..d).filter(|f| !chosen.contains(f)).collect();
                (chosen, rest)
            }
            _ => ((0..d).collect(), Vec::new()),
        }
    }

    fn best_split(&mut self, rows: &[usize]) -> Option<(usize, f64)> {
        let (chosen, rest) = self.candidate_features();
        let mut scratch = Vec::with_capacity(rows.len());
        if let Some(best) = self.search(rows, &chosen, &mut scratch) {
            return Some(best);
        }
        // every sampled feature was constant here; fall back to the others
        self.search(rows, &rest, &mut scratch)
    }

    fn search(
        &self,
        rows: &[usize],
        features: &[usize],
        scratch: &mut Vec<(f64, usize)>,
    ) -> Option<(usize, f64)> {
        let n = rows.len();
        let width = self.targets.width();
        let min_leaf = self.params.min_leaf.max(1);
        let mut total = vec![0.0; width];
        for &r in rows {
            self.targets.add(&mut total, r, 1.0);
        }
        let mut best: Option<(f64, usize, f64)> = None;
        let mut left = vec![0.0; width];
        let mut right = vec![0.0; width];
        for &f in features {
            scratch.clear();
            scratch.extend(rows.iter().map(|&r| (self.x[(r, f)], r)));
            scratch.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            if scratch[0].0 == scratch[n - 1].0 {
                continue;
            }
            left.iter_mut().for_each(|v| *v = 0.0);
            right.copy_from_slice(&total);
            for i in 1..n {
                let r = scratch[i - 1].1;
                self.targets.add(&mut left, r, 1.0);
                self.targets.add(&mut right, r, -1.0);
                let (a, b) = (scratch[i - 1].0, scratch[i].0);
                if a == b || i < min_leaf || n - i < min_leaf {
                    continue;
                }
                let score = purity(&left, i) + purity(&right, n - i);
                if best.is_none_or(|(s, _, _)| score > s) {
                    let mut t = a + (b - a) / 2.0;
                    if t >= b {
                        t = a;
                    }
                    best = Some((score, f, t));
                }
            }
        }
        best.map(|(_, f, t)| (f, t))
    }
}

fn partition(rows: &mut [usize], mut goes_left: impl FnMut(usize) -> bool) -> usize {
    // stable, so row order inside each child stays deterministic
    let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&r| goes_left(r));
    let mid = l.len();
    rows[..mid].copy_from_slice(&l);
    rows[mid..].copy_from_slice(&r);
    mid
}

impl TreeModel {
    /// Grows a tree on the given sample of row indices (repeats allowed).
    pub fn fit_rows<R: Rng>(
        x: &Mat,
        targets: Targets,
        mut sample_rows: Vec<usize>,
        params: TreeParams,
        rng: Option<&mut R>,
    ) -> Result<Self> {
        if targets.len() != x.rows() {
            return Err(Error::LengthMismatch(x.rows(), targets.len()));
        }
        if sample_rows.is_empty() {
            return Err(Error::EmptyTrainingSet);
        }
        if let Targets::Classes { labels, n_classes } = targets {
            if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
                return Err(Error::InvalidParameter(format!("label {l} >= {n_classes}")));
            }
        }
        let mut b = Builder {
            x,
            targets,
            params,
            rng,
            nodes: Vec::new(),
        };
        b.grow(&mut sample_rows, 0);
        Ok(TreeModel {
            nodes: b.nodes,
            kind: targets.kind(),
            n_features: x.cols(),
            params,
        })
    }

    pub fn fit_classifier(x: &Mat, labels: &[usize], n_classes: usize, params: TreeParams) -> Result<Self> {
        Self::fit_rows::<rand_chacha::ChaCha8Rng>(
            x,
            Targets::Classes { labels, n_classes },
            (0..x.rows()).collect(),
            params,
            None,
        )
    }

    pub fn fit_regressor(x: &Mat, y: &Mat, params: TreeParams) -> Result<Self> {
        Self::fit_rows::<rand_chacha::ChaCha8Rng>(x, Targets::Values(y), (0..x.rows()).collect(), params, None)
    }

    pub fn kind(&self) -> TreeKind {
        self.kind
    }

    pub fn params(&self) -> TreeParams {
        self.params
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], i: usize) -> usize {
            match nodes[i] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, left).max(walk(nodes, right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, Node::Leaf { .. }))
            .count()
    }

    pub fn leaf_index(&self, row: &[f64]) -> usize {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return i,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => i = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn leaf_payload(&self, row: &[f64]) -> &[f64] {
        match &self.nodes[self.leaf_index(row)] {
            Node::Leaf { payload } => payload,
            Node::Split { .. } => unreachable!("leaf_index stops at leaves"),
        }
    }

    /// Majority class of the reached leaf; ties go to the smaller class.
    pub fn predict_class(&self, row: &[f64]) -> usize {
        argmax(self.leaf_payload(row))
    }

    pub fn predict_value(&self, row: &[f64]) -> Vec<f64> {
        self.leaf_payload(row).to_vec()
    }

    pub fn predict_classes(&self, x: &Mat) -> Vec<usize> {
        x.iter_rows().map(|r| self.predict_class(r)).collect()
    }

    pub fn predict_values(&self, x: &Mat) -> Result<Mat> {
        Mat::from_rows(&x.iter_rows().map(|r| self.predict_value(r)).collect::<Vec<_>>())
    }
}

pub(crate) fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in v.iter().enumerate() {
        if x > v[best] {
            best = i;
        }
    }
    best
}

/// Total weighted impurity over the leaves reached by the training rows.
pub fn training_loss(tree: &TreeModel, x: &Mat, targets: Targets) -> f64 {
    let mut by_leaf: std::collections::BTreeMap<usize, Vec<usize>> = Default::default();
    for r in 0..x.rows() {
        by_leaf
            .entry(tree.leaf_index(x.row(r)))
            .or_default()
            .push(r);
    }
    by_leaf.values().map(|rows| impurity(&targets, rows)).sum()
}
