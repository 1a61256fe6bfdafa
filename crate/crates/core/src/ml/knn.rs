//! Exact k-nearest-neighbour search over a k-d tree.
//!
//! Neighbours are ordered by `(squared distance, training row)`, so equal
//! distances resolve to the lower row index and results match an exhaustive
//! scan bit for bit.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use crate::error::{Error, Result};
use crate::linalg::Mat;
use crate::par;

const LEAF_SIZE: usize = 16;

#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (x, y) in a.iter().zip(b) {
        let d = x - y;
        acc += d * d;
    }
    acc
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Neighbor {
    pub distance_sq: f64,
    pub index: usize,
}

impl Eq for Neighbor {}

impl Ord for Neighbor {
    fn cmp(&self, other: &Self) -> Ordering {
        self.distance_sq
            .total_cmp(&other.distance_sq)
            .then(self.index.cmp(&other.index))
    }
}

impl PartialOrd for Neighbor {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

#[derive(Debug, Clone)]
enum Node {
    Leaf { start: usize, end: usize },
    Split { axis: usize, value: f64, left: usize, right: usize },
}

#[derive(Debug, Clone)]
pub struct KdTree {
    points: Mat,
    order: Vec<usize>,
    nodes: Vec<Node>,
}

impl KdTree {
    pub fn build(points: Mat) -> Self {
        let mut tree = KdTree {
            order: (0..points.rows()).collect(),
            points,
            nodes: Vec::new(),
        };
        if tree.points.rows() > 0 {
            let n = tree.order.len();
            tree.build_node(0, n);
        }
        tree
    }

    fn build_node(&mut self, start: usize, end: usize) -> usize {
        let id = self.nodes.len();
        if end - start <= LEAF_SIZE || self.points.cols() == 0 {
            self.nodes.push(Node::Leaf { start, end });
            return id;
        }
        let axis = self.widest_axis(start, end);
        let mid = start + (end - start) / 2;
        let pts = &self.points;
        self.order[start..end].select_nth_unstable_by(mid - start, |&a, &b| {
            pts[(a, axis)].total_cmp(&pts[(b, axis)]).then(a.cmp(&b))
        });
        let value = self.points[(self.order[mid], axis)];
        self.nodes.push(Node::Leaf { start, end });
        let left = self.build_node(start, mid);
        let right = self.build_node(mid, end);
        self.nodes[id] = Node::Split {
            axis,
            value,
            left,
            right,
        };
        id
    }

    fn widest_axis(&self, start: usize, end: usize) -> usize {
        let mut best = (0, f64::NEG_INFINITY);
        for axis in 0..self.points.cols() {
            let (mut lo, mut hi) = (f64::INFINITY, f64::NEG_INFINITY);
            for &i in &self.order[start..end] {
                let v = self.points[(i, axis)];
                lo = lo.min(v);
                hi = hi.max(v);
            }
            if hi - lo > best.1 {
                best = (axis, hi - lo);
            }
        }
        best.0
    }

    pub fn len(&self) -> usize {
        self.points.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.points.rows() == 0
    }

    pub fn dim(&self) -> usize {
        self.points.cols()
    }

    pub fn points(&self) -> &Mat {
        &self.points
    }

    /// The `k` nearest rows to `query`, closest first.
    pub fn nearest(&self, query: &[f64], k: usize) -> Vec<Neighbor> {
        let mut heap = BinaryHeap::with_capacity(k + 1);
        if k > 0 && !self.nodes.is_empty() {
            self.search(0, query, k, &mut heap);
        }
        heap.into_sorted_vec()
    }

    fn search(&self, node: usize, query: &[f64], k: usize, heap: &mut BinaryHeap<Neighbor>) {
        match self.nodes[node] {
            Node::Leaf { start, end } => {
                for &i in &self.order[start..end] {
                    let cand = Neighbor {
                        distance_sq: squared_distance(query, self.points.row(i)),
                        index: i,
                    };
                    if heap.len() < k {
                        heap.push(cand);
                    } else if cand < *heap.peek().expect("heap is full") {
                        heap.pop();
                        heap.push(cand);
                    }
                }
            }
            Node::Split {
                axis,
                value,
                left,
                right,
            } => {
                let diff = query[axis] - value;
                let (near, far) = if diff < 0.0 { (left, right) } else { (right, left) };
                self.search(near, query, k, heap);
                let gap = diff * diff;
                // equal distance may still win on row index, so only prune on strict excess
                if heap.len() < k || gap <= heap.peek().expect("heap is full").distance_sq {
                    self.search(far, query, k, heap);
                }
            }
        }
    }
}

/// Stored training points with a neighbour count.
#[derive(Debug, Clone)]
pub struct KnnModel {
    index: KdTree,
    k: usize,
}

impl KnnModel {
    pub fn fit(points: Mat, k: usize) -> Result<Self> {
        if points.rows() == 0 {
            return Err(Error::EmptyTrainingSet);
        }
        if k == 0 || k > points.rows() {
            return Err(Error::KTooLarge {
                k,
                n: points.rows(),
            });
        }
        Ok(Self {
            index: KdTree::build(points),
            k,
        })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn index(&self) -> &KdTree {
        &self.index
    }

    pub fn neighbors(&self, query: &[f64]) -> Vec<Neighbor> {
        self.index.nearest(query, self.k)
    }

    fn check_query(&self, queries: &Mat) -> Result<()> {
        if queries.cols() != self.index.dim() {
            return Err(Error::DimensionMismatch(format!(
                "model has {} features, queries have {}",
                self.index.dim(),
                queries.cols()
            )));
        }
        Ok(())
    }
}

/// Majority vote; ties go to the smallest class index.
pub fn vote(labels: impl IntoIterator<Item = usize>, n_classes: usize) -> usize {
    let mut counts = vec![0usize; n_classes];
    for l in labels {
        counts[l] += 1;
    }
    let mut best = 0;
    for (c, &n) in counts.iter().enumerate() {
        if n > counts[best] {
            best = c;
        }
    }
    best
}

#[derive(Debug, Clone)]
pub struct KnnClassifier {
    model: KnnModel,
    labels: Vec<usize>,
    n_classes: usize,
}

impl KnnClassifier {
    pub fn fit(points: Mat, labels: Vec<usize>, n_classes: usize, k: usize) -> Result<Self> {
        if labels.len() != points.rows() {
            return Err(Error::LengthMismatch(points.rows(), labels.len()));
        }
        if let Some(&l) = labels.iter().find(|&&l| l >= n_classes) {
            return Err(Error::InvalidParameter(format!("label {l} >= {n_classes}")));
        }
        Ok(Self {
            model: KnnModel::fit(points, k)?,
            labels,
            n_classes,
        })
    }

    pub fn model(&self) -> &KnnModel {
        &self.model
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn predict_one(&self, query: &[f64]) -> usize {
        vote(
            self.model.neighbors(query).iter().map(|n| self.labels[n.index]),
            self.n_classes,
        )
    }

    pub fn predict(&self, queries: &Mat) -> Result<Vec<usize>> {
        self.model.check_query(queries)?;
        Ok(par::map_range(queries.rows(), |i| self.predict_one(queries.row(i))))
    }
}

#[derive(Debug, Clone)]
pub struct KnnRegressor {
    model: KnnModel,
    targets: Mat,
}

impl KnnRegressor {
    pub fn fit(points: Mat, targets: Mat, k: usize) -> Result<Self> {
        if targets.rows() != points.rows() {
            return Err(Error::LengthMismatch(points.rows(), targets.rows()));
        }
        Ok(Self {
            model: KnnModel::fit(points, k)?,
            targets,
        })
    }

    pub fn model(&self) -> &KnnModel {
        &self.model
    }

    pub fn targets(&self) -> &Mat {
        &self.targets
    }

    /// Unweighted mean of the neighbours' targets, summed nearest first.
    pub fn predict_one(&self, query: &[f64]) -> Vec<f64> {
        let neighbors = self.model.neighbors(query);
        let mut out = vec![0.0; self.targets.cols()];
        for n in &neighbors {
            for (o, t) in out.iter_mut().zip(self.targets.row(n.index)) {
                *o += t;
            }
        }
        let k = neighbors.len() as f64;
        out.iter_mut().for_each(|o| *o /= k);
        out
    }

    pub fn predict(&self, queries: &Mat) -> Result<Mat> {
        self.model.check_query(queries)?;
        let rows = par::map_range(queries.rows(), |i| self.predict_one(queries.row(i)));
        Mat::from_rows(&rows)
    }
}
