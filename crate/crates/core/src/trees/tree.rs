use ndarray::{Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand_chacha::ChaCha8Rng;

use super::{check_inputs, TreeError, TreeParams};

// Impurity decreases smaller than this are treated as ties.
const TIE_EPS: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Training-sample class histogram.
    Leaf { counts: Vec<u32> },
}

/// A fitted CART classifier. Node 0 is the root; children always have a
/// larger index than their parent.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<Node>,
    n_features: usize,
    n_classes: usize,
}

struct Candidate {
    feature: usize,
    threshold: f64,
    score: f64,
}

struct Builder<'a> {
    x: ArrayView2<'a, f64>,
    y: &'a [usize],
    n_classes: usize,
    params: &'a TreeParams,
    sampler: Option<(&'a mut ChaCha8Rng, usize)>,
    nodes: Vec<Node>,
}

/// Weighted Gini impurity of a two-way split from class-count sums of
/// squares.
fn split_score(n: usize, n_left: usize, sq_left: u64, sq_right: u64) -> f64 {
    let n_right = n - n_left;
    let purity = sq_left as f64 / n_left as f64 + sq_right as f64 / n_right as f64;
    (n as f64 - purity) / n as f64
}

impl Builder<'_> {
    fn counts(&self, idx: &[usize]) -> Vec<u32> {
        let mut c = vec![0u32; self.n_classes];
        for &i in idx {
            c[self.y[i]] += 1;
        }
        c
    }

    fn best_on_feature(&self, idx: &[usize], feature: usize, total: &[u32]) -> Option<Candidate> {
        let n = idx.len();
        let min_leaf = self.params.min_samples_leaf;
        let mut col: Vec<(f64, usize)> = idx.iter().map(|&i| (self.x[[i, feature]], self.y[i])).collect();
        col.sort_by(|a, b| a.0.total_cmp(&b.0));

        let mut left = vec![0u64; self.n_classes];
        let mut right: Vec<u64> = total.iter().map(|&c| c as u64).collect();
        let mut sq_left = 0u64;
        let mut sq_right: u64 = right.iter().map(|c| c * c).sum();
        let mut best: Option<Candidate> = None;
        for j in 1..n {
            let k = col[j - 1].1;
            sq_left += 2 * left[k] + 1;
            left[k] += 1;
            sq_right -= 2 * right[k] - 1;
            right[k] -= 1;
            let (lo, hi) = (col[j - 1].0, col[j].0);
            if lo >= hi || j < min_leaf || n - j < min_leaf {
                continue;
            }
            let score = split_score(n, j, sq_left, sq_right);
            if best.as_ref().is_none_or(|b| score < b.score - TIE_EPS) {
                let mut threshold = lo + (hi - lo) / 2.0;
                if threshold >= hi {
                    threshold = lo;
                }
                best = Some(Candidate { feature, threshold, score });
            }
        }
        best
    }

    fn best_split(&mut self, idx: &[usize], total: &[u32]) -> Option<Candidate> {
        let n_features = self.x.ncols();
        let mut order: Vec<usize> = (0..n_features).collect();
        let (first, rest) = match self.sampler.as_mut() {
            None => (order, Vec::new()),
            Some((rng, k)) => {
                order.shuffle(*rng);
                let rest = order.split_off((*k).min(n_features));
                (order, rest)
            }
        };
        let pick = |this: &Self, feats: &[usize]| {
            let mut sorted = feats.to_vec();
            sorted.sort_unstable();
            let mut best: Option<Candidate> = None;
            for f in sorted {
                if let Some(c) = this.best_on_feature(idx, f, total) {
                    if best.as_ref().is_none_or(|b| c.score < b.score - TIE_EPS) {
                        best = Some(c);
                    }
                }
            }
            best
        };
        if let Some(c) = pick(self, &first) {
            return Some(c);
        }
        // None of the sampled features can split this node; keep drawing.
        rest.iter().find_map(|&f| self.best_on_feature(idx, f, total))
    }

    fn build(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let counts = self.counts(&idx);
        let id = self.nodes.len();
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        if pure || depth >= self.params.max_depth || idx.len() < self.params.min_samples_split {
            return id;
        }
        let Some(split) = self.best_split(&idx, &counts) else {
            return id;
        };
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .iter()
            .partition(|&&i| self.x[[i, split.feature]] <= split.threshold);
        let left = self.build(l, depth + 1);
        let right = self.build(r, depth + 1);
        self.nodes[id] = Node::Split {
            feature: split.feature,
            threshold: split.threshold,
            left,
            right,
        };
        id
    }
}

impl DecisionTree {
    /// Fits a tree on all rows considering every feature at each split.
    ///
    /// Splits minimize weighted Gini impurity over midpoints between
    /// consecutive distinct values. Ties go to the lower feature index, then
    /// the lower threshold. A node stays a leaf when it is pure, at
    /// `max_depth`, holds fewer than `min_samples_split` rows, or has no
    /// split leaving `min_samples_leaf` rows on both sides.
    pub fn fit(
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        params: &TreeParams,
    ) -> Result<Self, TreeError> {
        params.validate()?;
        check_inputs(x, labels, n_classes)?;
        Ok(Self::fit_rows(x, labels, n_classes, params, (0..x.nrows()).collect(), None))
    }

    pub(crate) fn fit_rows(
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        params: &TreeParams,
        rows: Vec<usize>,
        sampler: Option<(&mut ChaCha8Rng, usize)>,
    ) -> Self {
        let mut b = Builder {
            x,
            y: labels,
            n_classes,
            params,
            sampler,
            nodes: Vec::new(),
        };
        b.build(rows, 0);
        DecisionTree {
            nodes: b.nodes,
            n_features: x.ncols(),
            n_classes,
        }
    }

    /// Rebuilds a tree from stored parts, checking that the node graph is a
    /// well-formed tree.
    pub fn from_parts(nodes: Vec<Node>, n_features: usize, n_classes: usize) -> Result<Self, TreeError> {
        if nodes.is_empty() || n_classes == 0 {
            return Err(TreeError::InvalidParams("tree must have nodes and classes"));
        }
        let mut parents = vec![0u32; nodes.len()];
        for (i, n) in nodes.iter().enumerate() {
            match n {
                Node::Split { feature, threshold, left, right } => {
                    if *feature >= n_features || threshold.is_nan() {
                        return Err(TreeError::InvalidParams("split references a bad feature"));
                    }
                    for &c in [left, right] {
                        if c <= i || c >= nodes.len() {
                            return Err(TreeError::InvalidParams("child index out of order"));
                        }
                        parents[c] += 1;
                    }
                }
                Node::Leaf { counts } => {
                    if counts.len() != n_classes || counts.iter().all(|&c| c == 0) {
                        return Err(TreeError::InvalidParams("leaf histogram malformed"));
                    }
                }
            }
        }
        if parents[0] != 0 || parents[1..].iter().any(|&p| p != 1) {
            return Err(TreeError::InvalidParams("nodes do not form a tree"));
        }
        Ok(DecisionTree { nodes, n_features, n_classes })
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn n_leaves(&self) -> usize {
        self.nodes.iter().filter(|n| matches!(n, Node::Leaf { .. })).count()
    }

    /// Longest root-to-leaf path, counted in edges.
    pub fn depth(&self) -> usize {
        let mut depth = vec![0usize; self.nodes.len()];
        let mut max = 0;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Node::Split { left, right, .. } = n {
                depth[*left] = depth[i] + 1;
                depth[*right] = depth[i] + 1;
                max = max.max(depth[i] + 1);
            }
        }
        max
    }

    /// Index of the leaf `row` lands in.
    pub fn leaf_index(&self, row: &[f64]) -> Result<usize, TreeError> {
        if row.len() != self.n_features {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features,
                got: row.len(),
            });
        }
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Leaf { .. } => return Ok(i),
                Node::Split { feature, threshold, left, right } => {
                    i = if row[*feature] <= *threshold { *left } else { *right };
                }
            }
        }
    }

    /// Normalized class histogram of the leaf `row` lands in.
    pub fn predict_row(&self, row: &[f64]) -> Result<Vec<f64>, TreeError> {
        let Node::Leaf { counts } = &self.nodes[self.leaf_index(row)?] else {
            unreachable!("leaf_index returns leaves")
        };
        let total: u64 = counts.iter().map(|&c| c as u64).sum();
        Ok(counts.iter().map(|&c| c as f64 / total as f64).collect())
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, TreeError> {
        if x.ncols() != self.n_features {
            return Err(TreeError::DimensionMismatch {
                expected: self.n_features,
                got: x.ncols(),
            });
        }
        let mut out = Array2::zeros((x.nrows(), self.n_classes));
        for (r, row) in x.rows().into_iter().enumerate() {
            let row = row.to_vec();
            for (c, p) in self.predict_row(&row)?.into_iter().enumerate() {
                out[[r, c]] = p;
            }
        }
        Ok(out)
    }
}
