//! Benchmark predictors sharing one forecasting interface: historical
//! average, moving average, ARIMA, a feed-forward network and a per-cell
//! LSTM.

mod arima;
mod classic;
mod neural;

pub use arima::{Arima, ArimaModel, ArimaOrder};
pub use classic::{ma_predict, HistoricalAverage, MovingAverage};
pub use neural::{cell_features, cell_sequence, Ann, AnnParams, CellLstm, CellLstmParams, NeuralConfig};

use crate::data::{DataError, Prepared};
use crate::model::{FclNet, ModelError};

#[derive(Debug, thiserror::Error)]
pub enum BaselineError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Data(#[from] DataError),
}

pub type Result<T> = std::result::Result<T, BaselineError>;

/// One-step grid forecasts in standardized demand units.
pub trait Forecaster: Sync {
    /// Prediction for every cell at target index `t`, using data before `t`
    /// (and calendar values at `t`).
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>>;

    /// Earliest target index with enough history.
    fn first_target(&self) -> usize;
}

impl Forecaster for FclNet {
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        Ok(self.predict_standardized(data, t)?)
    }

    fn first_target(&self) -> usize {
        self.config.first_target()
    }
}

/// Column of standardized demand for one cell over `range`.
pub(crate) fn cell_series(data: &Prepared, cell: usize, range: std::ops::Range<usize>) -> Vec<f64> {
    data.demand[range].iter().map(|f| f[cell]).collect()
}
