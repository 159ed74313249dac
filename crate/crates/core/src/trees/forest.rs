use ndarray::{Array2, ArrayView2};
use rand::Rng;
use rayon::prelude::*;

use super::{check_inputs, DecisionTree, TreeError, TreeParams};
use crate::seed;

/// Random forest: members fit on bootstrap resamples, each split drawing a
/// random feature subset. Prediction averages member probabilities.
#[derive(Debug, Clone, PartialEq)]
pub struct Forest {
    trees: Vec<DecisionTree>,
    seeds: Vec<u64>,
}

impl Forest {
    pub fn fit(
        x: ArrayView2<f64>,
        labels: &[usize],
        n_classes: usize,
        params: &TreeParams,
    ) -> Result<Self, TreeError> {
        params.validate()?;
        check_inputs(x, labels, n_classes)?;
        let n = x.nrows();
        let k = params.max_features.resolve(x.ncols());
        let seeds: Vec<u64> = (0..params.n_estimators as u64)
            .map(|i| seed::derive(params.seed, &[i]))
            .collect();
        let trees = seeds
            .par_iter()
            .map(|&s| {
                let mut rng = seed::rng(s);
                let rows: Vec<usize> = if params.bootstrap {
                    (0..n).map(|_| rng.random_range(0..n)).collect()
                } else {
                    (0..n).collect()
                };
                let sampler = (k < x.ncols()).then_some((&mut rng, k));
                DecisionTree::fit_rows(x, labels, n_classes, params, rows, sampler)
            })
            .collect();
        Ok(Forest { trees, seeds })
    }

    pub fn from_trees(trees: Vec<DecisionTree>, seeds: Vec<u64>) -> Result<Self, TreeError> {
        let Some(first) = trees.first() else {
            return Err(TreeError::InvalidParams("forest needs at least one tree"));
        };
        if seeds.len() != trees.len()
            || trees
                .iter()
                .any(|t| t.n_features() != first.n_features() || t.n_classes() != first.n_classes())
        {
            return Err(TreeError::InvalidParams("forest members disagree"));
        }
        Ok(Forest { trees, seeds })
    }

    pub fn trees(&self) -> &[DecisionTree] {
        &self.trees
    }

    /// Per-member seeds driving the bootstrap and feature draws.
    pub fn seeds(&self) -> &[u64] {
        &self.seeds
    }

    pub fn n_features(&self) -> usize {
        self.trees[0].n_features()
    }

    pub fn n_classes(&self) -> usize {
        self.trees[0].n_classes()
    }

    pub fn predict_proba(&self, x: ArrayView2<f64>) -> Result<Array2<f64>, TreeError> {
        let mut acc = self.trees[0].predict_proba(x)?;
        for t in &self.trees[1..] {
            acc += &t.predict_proba(x)?;
        }
        acc /= self.trees.len() as f64;
        Ok(acc)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::trees::MaxFeatures;
    use rand::Rng;

    fn data(seed: u64, n: usize) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seed::rng(seed);
        let x = Array2::from_shape_fn((n, 19), |_| rng.random_range(0.0..10.0));
        let y = (0..n).map(|i| ((x[[i, 0]] + x[[i, 3]]) as usize) % 3).collect();
        (x, y)
    }

    #[test]
    fn single_member_without_bootstrap_equals_a_tree() {
        let (x, y) = data(1, 120);
        let params = TreeParams {
            n_estimators: 1,
            bootstrap: false,
            max_features: MaxFeatures::All,
            seed: 9,
            ..TreeParams::default()
        };
        let f = Forest::fit(x.view(), &y, 3, &params).unwrap();
        let t = DecisionTree::fit(x.view(), &y, 3, &params).unwrap();
        assert_eq!(f.trees()[0], t);
        assert_eq!(f.predict_proba(x.view()).unwrap(), t.predict_proba(x.view()).unwrap());
    }

    #[test]
    fn fixed_seed_is_reproducible() {
        let (x, y) = data(2, 150);
        let params = TreeParams { seed: 42, ..TreeParams::default() };
        let a = Forest::fit(x.view(), &y, 3, &params).unwrap();
        let b = Forest::fit(x.view(), &y, 3, &params).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.trees().len(), 3);
        let c = Forest::fit(x.view(), &y, 3, &TreeParams { seed: 43, ..params }).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn forest_probability_is_member_mean() {
        let (x, y) = data(3, 100);
        let f = Forest::fit(x.view(), &y, 3, &TreeParams::default()).unwrap();
        let (probe, _) = data(4, 5);
        let got = f.predict_proba(probe.view()).unwrap();
        for r in 0..probe.nrows() {
            let row = probe.row(r).to_vec();
            let members: Vec<Vec<f64>> = f.trees().iter().map(|t| t.predict_row(&row).unwrap()).collect();
            for c in 0..3 {
                let mean = members.iter().map(|m| m[c]).sum::<f64>() / 3.0;
                assert!((got[[r, c]] - mean).abs() < 1e-15);
            }
            assert!((got.row(r).sum() - 1.0).abs() < 1e-12);
        }
    }
}
