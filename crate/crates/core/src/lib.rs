//! Spatio-temporal passenger-demand forecasting.
//!
//! The crate is organized bottom-up:
//!
//! - [`tensor`]: dense tensors and a reverse-mode differentiation tape
//! - [`layers`]: LSTM and convolutional LSTM cells
//! - [`model`]: the four-branch fusion network, its objective, training and checkpoints
//! - [`forest`]: regression forests, out-of-bag permutation importance and the
//!   per-cell spatially aggregated forest used for feature selection
//! - [`data`]: order/weather ingestion, grid aggregation, calendar variables,
//!   standardization, chronological splits and synthetic scenarios
//! - [`baselines`]: HA, MA, ARIMA, ANN and per-cell LSTM predictors
//! - [`eval`]: metrics, comparison tables and heatmaps
//! - [`pipeline`]: configuration-driven end-to-end runs

pub mod baselines;
pub mod data;
pub mod eval;
pub mod forest;
pub mod layers;
pub mod model;
pub mod pipeline;
pub mod tensor;
