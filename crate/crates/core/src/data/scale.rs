//! Min-max standardization and chronological splitting.

use super::{DataError, Result};

/// Min-max bounds fitted on a training slice.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Bounds {
    pub min: f64,
    pub max: f64,
}

impl Bounds {
    pub fn fit<'a>(values: impl IntoIterator<Item = &'a f64>) -> Result<Self> {
        let mut it = values.into_iter().copied().filter(|v| v.is_finite());
        let first = it.next().ok_or_else(|| DataError::Invalid("cannot fit bounds on empty data".into()))?;
        let (min, max) = it.fold((first, first), |(lo, hi), v| (lo.min(v), hi.max(v)));
        Ok(Self { min, max })
    }

    pub fn span(&self) -> f64 {
        self.max - self.min
    }

    /// `(x − min)/(max − min)`; a degenerate range maps everything to 0.
    pub fn apply(&self, x: f64) -> f64 {
        let span = self.span();
        if span == 0.0 {
            0.0
        } else {
            (x - self.min) / span
        }
    }

    pub fn invert(&self, z: f64) -> f64 {
        let span = self.span();
        if span == 0.0 {
            self.min
        } else {
            z * span + self.min
        }
    }
}

/// Fits bounds on `values[..train_len]` and maps the whole series; values
/// after the training slice may leave `[0, 1]`.
pub fn minmax_standardize(values: &[f64], train_len: usize) -> Result<(Vec<f64>, Bounds)> {
    if train_len == 0 || train_len > values.len() {
        return Err(DataError::Invalid(format!("training length {train_len} of {}", values.len())));
    }
    let b = Bounds::fit(&values[..train_len])?;
    Ok((values.iter().map(|&v| b.apply(v)).collect(), b))
}

/// Number of leading buckets that form the training slice: `⌊fraction·len⌋`.
/// Both slices must be non-empty.
pub fn chronological_split(len: usize, fraction: f64) -> Result<usize> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(DataError::Invalid(format!("split fraction {fraction} outside (0, 1)")));
    }
    let train = (fraction * len as f64).floor() as usize;
    if train == 0 || train >= len {
        return Err(DataError::InsufficientHistory(format!("{len} buckets cannot be split at {fraction}")));
    }
    Ok(train)
}
