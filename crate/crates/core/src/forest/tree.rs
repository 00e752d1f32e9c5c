//! CART regression trees with variance-reduction splits.

use rand::seq::index::sample;
use rand::Rng;

use super::{FeatureMatrix, ForestError, Result};

/// Growth limits for one tree.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeConfig {
    pub max_depth: usize,
    pub min_samples_leaf: usize,
    /// Features drawn per split; `None` means `ceil(p / 3)`.
    pub max_features: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self { max_depth: 12, min_samples_leaf: 5, max_features: None }
    }
}

impl TreeConfig {
    pub fn features_per_split(&self, p: usize) -> usize {
        self.max_features.unwrap_or(p.div_ceil(3)).clamp(1, p.max(1))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Node {
    Leaf(f64),
    /// Samples with `x[feature] <= threshold` go left.
    Split { feature: usize, threshold: f64, left: usize, right: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct RegressionTree {
    nodes: Vec<Node>,
}

/// Mean that returns the common value exactly when all values agree.
pub(crate) fn exact_mean(values: impl Iterator<Item = f64> + Clone) -> f64 {
    let (mut lo, mut hi, mut sum, mut n) = (f64::INFINITY, f64::NEG_INFINITY, 0.0, 0usize);
    for v in values {
        lo = lo.min(v);
        hi = hi.max(v);
        sum += v;
        n += 1;
    }
    if n > 0 && lo == hi {
        lo
    } else {
        sum / n as f64
    }
}

struct Best {
    score: f64,
    feature: usize,
    threshold: f64,
}

impl RegressionTree {
    /// Grows a tree on the rows listed in `indices` (repeats allowed).
    pub fn fit<R: Rng>(x: &FeatureMatrix, y: &[f64], indices: &[usize], cfg: &TreeConfig, rng: &mut R) -> Result<Self> {
        if indices.is_empty() {
            return Err(ForestError::Invalid("no samples to grow a tree".into()));
        }
        if x.cols == 0 {
            return Err(ForestError::Invalid("no features".into()));
        }
        if cfg.min_samples_leaf == 0 {
            return Err(ForestError::Invalid("min_samples_leaf must be positive".into()));
        }
        let mut tree = Self { nodes: Vec::new() };
        let mut idx = indices.to_vec();
        tree.grow(x, y, &mut idx, 0, cfg, rng);
        Ok(tree)
    }

    fn grow<R: Rng>(&mut self, x: &FeatureMatrix, y: &[f64], idx: &mut [usize], depth: usize, cfg: &TreeConfig, rng: &mut R) -> usize {
        let at = self.nodes.len();
        let leaf = exact_mean(idx.iter().map(|&i| y[i]));
        self.nodes.push(Node::Leaf(leaf));
        let constant = idx.iter().all(|&i| y[i] == y[idx[0]]);
        if depth >= cfg.max_depth || idx.len() < 2 * cfg.min_samples_leaf || constant {
            return at;
        }
        let Some(best) = best_split(x, y, idx, cfg, rng) else { return at };
        let (left, right) = partition(idx, |i| x.get(i, best.feature) <= best.threshold);
        let l = self.grow(x, y, left, depth + 1, cfg, rng);
        let r = self.grow(x, y, right, depth + 1, cfg, rng);
        self.nodes[at] = Node::Split { feature: best.feature, threshold: best.threshold, left: l, right: r };
        at
    }

    pub fn predict(&self, row: &[f64]) -> f64 {
        let mut at = 0;
        loop {
            match self.nodes[at] {
                Node::Leaf(v) => return v,
                Node::Split { feature, threshold, left, right } => at = if row[feature] <= threshold { left } else { right },
            }
        }
    }

    pub fn nodes(&self) -> &[Node] {
        &self.nodes
    }

    /// Sorted, deduplicated features used by at least one split.
    pub fn split_features(&self) -> Vec<usize> {
        let mut f: Vec<usize> = self
            .nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf(_) => None,
            })
            .collect();
        f.sort_unstable();
        f.dedup();
        f
    }
}

fn partition<F: Fn(usize) -> bool>(idx: &mut [usize], goes_left: F) -> (&mut [usize], &mut [usize]) {
    let mut k = 0;
    for j in 0..idx.len() {
        if goes_left(idx[j]) {
            idx.swap(k, j);
            k += 1;
        }
    }
    idx.split_at_mut(k)
}

/// Maximizes `S_l^2 / n_l + S_r^2 / n_r` (equivalent to minimizing the
/// children's squared error). Features are scanned in increasing index
/// order and thresholds in increasing order, keeping the first maximum.
fn best_split<R: Rng>(x: &FeatureMatrix, y: &[f64], idx: &[usize], cfg: &TreeConfig, rng: &mut R) -> Option<Best> {
    let p = x.cols;
    let mut features = sample(rng, p, cfg.features_per_split(p)).into_vec();
    features.sort_unstable();
    let n = idx.len();
    let total: f64 = idx.iter().map(|&i| y[i]).sum();
    let parent = total * total / n as f64;
    let mut best: Option<Best> = None;
    let mut pairs: Vec<(f64, f64)> = Vec::with_capacity(n);
    for &f in &features {
        pairs.clear();
        pairs.extend(idx.iter().map(|&i| (x.get(i, f), y[i])));
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let mut left_sum = 0.0;
        for k in 0..n - 1 {
            left_sum += pairs[k].1;
            let nl = k + 1;
            if pairs[k].0 == pairs[k + 1].0 || nl < cfg.min_samples_leaf || n - nl < cfg.min_samples_leaf {
                continue;
            }
            let right_sum = total - left_sum;
            let score = left_sum * left_sum / nl as f64 + right_sum * right_sum / (n - nl) as f64;
            if best.as_ref().is_none_or(|b| score > b.score) {
                let threshold = pairs[k].0 + (pairs[k + 1].0 - pairs[k].0) / 2.0;
                best = Some(Best { score, feature: f, threshold });
            }
        }
    }
    best.filter(|b| b.score > parent + 1e-12 * parent.abs().max(1e-300))
}
