//! Closed-form baselines.

use chrono::{Datelike, Timelike};

use super::{BaselineError, Forecaster, Result};
use crate::data::Prepared;
use crate::forest::exact_mean;

/// Mean of the last `window` values.
pub fn ma_predict(history: &[f64], window: usize) -> Result<f64> {
    if window == 0 || window > history.len() {
        return Err(BaselineError::InsufficientHistory(format!("window {window} over {} values", history.len())));
    }
    Ok(exact_mean(history[history.len() - window..].iter().copied()))
}

#[derive(Debug, Clone, PartialEq)]
pub struct MovingAverage {
    pub window: usize,
}

impl Default for MovingAverage {
    fn default() -> Self {
        Self { window: 8 }
    }
}

impl Forecaster for MovingAverage {
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        if self.window == 0 || t < self.window || t > data.len() {
            return Err(BaselineError::InsufficientHistory(format!("target {t} with window {}", self.window)));
        }
        let frames = &data.demand[t - self.window..t];
        Ok((0..data.cells()).map(|c| exact_mean(frames.iter().map(|f| f[c]))).collect())
    }

    fn first_target(&self) -> usize {
        self.window
    }
}

/// Training mean per cell, hour of day and weekday/weekend class, with the
/// cell's overall training mean where a combination never occurred.
#[derive(Debug, Clone, PartialEq)]
pub struct HistoricalAverage {
    /// `[cell][hour * 2 + weekend]`.
    pub table: Vec<[Option<f64>; 48]>,
    pub cell_mean: Vec<f64>,
}

fn slot(ts: &chrono::NaiveDateTime) -> usize {
    let weekend = ts.weekday().number_from_monday() >= 6;
    ts.hour() as usize * 2 + weekend as usize
}

impl HistoricalAverage {
    pub fn fit(data: &Prepared) -> Result<Self> {
        if data.train_len == 0 {
            return Err(BaselineError::InsufficientHistory("empty training slice".into()));
        }
        let slots: Vec<usize> = data.timestamps[..data.train_len].iter().map(slot).collect();
        let mut table = Vec::with_capacity(data.cells());
        let mut cell_mean = Vec::with_capacity(data.cells());
        for c in 0..data.cells() {
            let column = || data.demand[..data.train_len].iter().map(move |f| f[c]);
            cell_mean.push(exact_mean(column()));
            let mut row = [None; 48];
            for (s, v) in row.iter_mut().enumerate() {
                let values: Vec<f64> = column().zip(&slots).filter(|(_, &k)| k == s).map(|(x, _)| x).collect();
                if !values.is_empty() {
                    *v = Some(exact_mean(values.into_iter()));
                }
            }
            table.push(row);
        }
        Ok(Self { table, cell_mean })
    }
}

impl Forecaster for HistoricalAverage {
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        let s = slot(data.timestamps.get(t).ok_or_else(|| BaselineError::Invalid(format!("target {t} out of range")))?);
        Ok(self.table.iter().zip(&self.cell_mean).map(|(row, &m)| row[s].unwrap_or(m)).collect())
    }

    fn first_target(&self) -> usize {
        0
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{synthesize, GridSpec, Scenario};

    #[test]
    fn moving_average_examples() {
        assert_eq!(ma_predict(&[1.0, 2.0, 3.0], 3).unwrap(), 2.0);
        assert_eq!(ma_predict(&[0.7; 10], 8).unwrap(), 0.7);
        assert_eq!(ma_predict(&[1.0, 5.0], 1).unwrap(), 5.0);
        assert!(ma_predict(&[1.0], 2).is_err());
    }

    fn small() -> Prepared {
        let grid = GridSpec { rows: 2, cols: 2, ..GridSpec::default() };
        Prepared::new(&synthesize(&grid, 24 * 14, 3, Scenario::Default).unwrap(), 0.7).unwrap()
    }

    #[test]
    fn historical_average_uses_matching_hours() {
        let mut data = small();
        for f in data.demand.iter_mut() {
            f.iter_mut().for_each(|v| *v = 0.25);
        }
        let ha = HistoricalAverage::fit(&data).unwrap();
        assert!(ha.forecast(&data, data.train_len).unwrap().iter().all(|&v| v == 0.25));

        let mut data = small();
        let eight: Vec<usize> = (0..data.train_len).filter(|&t| slot(&data.timestamps[t]) == 16).collect();
        for (i, &t) in eight.iter().enumerate() {
            data.demand[t][0] = if i % 2 == 0 { 2.0 } else { 4.0 };
        }
        if eight.len() % 2 == 1 {
            data.demand[eight[0]][0] = 3.0;
        }
        let ha = HistoricalAverage::fit(&data).unwrap();
        let test_eight = (data.train_len..data.len()).find(|&t| slot(&data.timestamps[t]) == 16).unwrap();
        assert_eq!(ha.forecast(&data, test_eight).unwrap()[0], 3.0);
    }

    #[test]
    fn historical_average_falls_back_to_the_cell_mean() {
        let data = small();
        let mut ha = HistoricalAverage::fit(&data).unwrap();
        let t = data.train_len;
        let s = slot(&data.timestamps[t]);
        ha.table[1][s] = None;
        assert_eq!(ha.forecast(&data, t).unwrap()[1], ha.cell_mean[1]);
    }

    #[test]
    fn closed_form_baselines_ignore_test_values() {
        let data = small();
        let mut perturbed = data.clone();
        for t in perturbed.test_range() {
            perturbed.demand[t].iter_mut().for_each(|v| *v += 1.0);
        }
        assert_eq!(HistoricalAverage::fit(&data).unwrap(), HistoricalAverage::fit(&perturbed).unwrap());
    }
}
