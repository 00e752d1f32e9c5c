//! Bootstrap forests, out-of-bag error and permutation importance.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::tree::{exact_mean, RegressionTree, TreeConfig};
use super::{derive_seed, FeatureMatrix, ForestError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForestConfig {
    pub trees: usize,
    pub tree: TreeConfig,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { trees: 100, tree: TreeConfig::default(), seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RandomForest {
    pub trees: Vec<RegressionTree>,
    /// Sorted rows left out of each tree's bootstrap sample.
    pub oob: Vec<Vec<usize>>,
    pub features: usize,
}

/// Draws `n` rows with replacement; returns them and the sorted rows never
/// drawn.
pub fn bootstrap<R: Rng>(n: usize, rng: &mut R) -> (Vec<usize>, Vec<usize>) {
    let drawn: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
    let mut hit = vec![false; n];
    for &i in &drawn {
        hit[i] = true;
    }
    let oob = (0..n).filter(|&i| !hit[i]).collect();
    (drawn, oob)
}

fn squared_error(tree: &RegressionTree, x: &FeatureMatrix, y: &[f64], rows: &[usize]) -> f64 {
    rows.iter().map(|&i| (y[i] - tree.predict(x.row(i))).powi(2)).sum::<f64>() / rows.len() as f64
}

impl RandomForest {
    /// Tree `k` is grown from its own generator seeded by `(seed, k)`, so
    /// the result does not depend on scheduling.
    pub fn fit(x: &FeatureMatrix, y: &[f64], cfg: &ForestConfig) -> Result<Self> {
        if x.rows < 2 || x.cols == 0 {
            return Err(ForestError::Invalid(format!("need at least 2 rows and 1 feature, got {}x{}", x.rows, x.cols)));
        }
        if y.len() != x.rows {
            return Err(ForestError::Invalid(format!("{} labels for {} rows", y.len(), x.rows)));
        }
        if cfg.trees == 0 {
            return Err(ForestError::Invalid("a forest needs at least one tree".into()));
        }
        if y.iter().any(|v| !v.is_finite()) || x.data.iter().any(|v| !v.is_finite()) {
            return Err(ForestError::Invalid("non-finite training data".into()));
        }
        let grown: Vec<(RegressionTree, Vec<usize>)> = (0..cfg.trees)
            .into_par_iter()
            .map(|k| {
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, k as u64));
                let (drawn, oob) = bootstrap(x.rows, &mut rng);
                RegressionTree::fit(x, y, &drawn, &cfg.tree, &mut rng).map(|t| (t, oob))
            })
            .collect::<Result<_>>()?;
        let (trees, oob) = grown.into_iter().unzip();
        Ok(Self { trees, oob, features: x.cols })
    }

    /// Mean of the trees' predictions.
    pub fn predict(&self, row: &[f64]) -> f64 {
        exact_mean(self.trees.iter().map(|t| t.predict(row)))
    }

    /// Mean squared error of tree `k` over its out-of-bag rows; `None` when
    /// every row was drawn.
    pub fn oob_error(&self, k: usize, x: &FeatureMatrix, y: &[f64]) -> Option<f64> {
        let rows = &self.oob[k];
        (!rows.is_empty()).then(|| squared_error(&self.trees[k], x, y, rows))
    }

    /// Mean over trees with a non-empty out-of-bag set of the increase in
    /// out-of-bag error after shuffling one feature among those rows.
    /// Features a tree never splits on contribute exactly 0 for that tree.
    pub fn permutation_importance(&self, x: &FeatureMatrix, y: &[f64], seed: u64) -> Vec<f64> {
        let per_tree: Vec<Option<Vec<(usize, f64)>>> = (0..self.trees.len())
            .into_par_iter()
            .map(|k| {
                let base = self.oob_error(k, x, y)?;
                let rows = &self.oob[k];
                let tree = &self.trees[k];
                let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, k as u64));
                let mut out = Vec::new();
                let mut row_buf = vec![0.0; x.cols];
                for j in tree.split_features() {
                    let mut column: Vec<f64> = rows.iter().map(|&i| x.get(i, j)).collect();
                    column.shuffle(&mut rng);
                    let mut err = 0.0;
                    for (&i, &v) in rows.iter().zip(&column) {
                        row_buf.copy_from_slice(x.row(i));
                        row_buf[j] = v;
                        err += (y[i] - tree.predict(&row_buf)).powi(2);
                    }
                    out.push((j, err / rows.len() as f64 - base));
                }
                Some(out)
            })
            .collect();
        let mut vi = vec![0.0; self.features];
        let mut used = 0;
        for diffs in per_tree.into_iter().flatten() {
            used += 1;
            for (j, d) in diffs {
                vi[j] += d;
            }
        }
        if used > 0 {
            for v in &mut vi {
                *v /= used as f64;
            }
        }
        vi
    }
}
