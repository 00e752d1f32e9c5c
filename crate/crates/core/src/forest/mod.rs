//! Regression forests with out-of-bag permutation importance, replicated
//! per grid cell and aggregated for look-back window selection.

mod ensemble;
mod spatial;
mod tree;

pub use ensemble::{bootstrap, ForestConfig, RandomForest};
pub use spatial::{
    count_feature_dimension, select_features, select_from_lags, Category, CategoryWindows, Feature, FeatureLayout, ImportanceReport,
    SelectionRules, SpatialForest,
};
pub use tree::{Node, RegressionTree, TreeConfig};
pub(crate) use tree::exact_mean;

#[derive(Debug, thiserror::Error)]
pub enum ForestError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
}

pub type Result<T> = std::result::Result<T, ForestError>;

/// Row-major `rows x cols` predictors.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

impl FeatureMatrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(ForestError::Invalid(format!("{} values for {rows}x{cols}", data.len())));
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self> {
        let cols = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != cols) {
            return Err(ForestError::Invalid("ragged rows".into()));
        }
        Self::new(rows.len(), cols, rows.concat())
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.data[i * self.cols + j]
    }
}

/// Mixes a stream index into a seed (splitmix64 finalizer).
pub fn derive_seed(seed: u64, index: u64) -> u64 {
    let mut z = seed ^ index.wrapping_add(1).wrapping_mul(0x9e37_79b9_7f4a_7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}
