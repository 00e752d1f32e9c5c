//! Lagged Pearson correlations averaged by cell distance.

use std::io::Write;

use super::grid::GridSeries;
use super::{DataError, Result};

/// Pearson correlation; `None` when either side has zero variance.
pub fn pearson(y: &[f64], z: &[f64]) -> Option<f64> {
    assert_eq!(y.len(), z.len(), "pearson: length mismatch");
    let n = y.len() as f64;
    if y.is_empty() {
        return None;
    }
    let (my, mz) = (y.iter().sum::<f64>() / n, z.iter().sum::<f64>() / n);
    let (mut cov, mut vy, mut vz) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(z) {
        let (da, db) = (a - my, b - mz);
        cov += da * db;
        vy += da * da;
        vz += db * db;
    }
    if vy == 0.0 || vz == 0.0 {
        return None;
    }
    Some(cov / (vy * vz).sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Explanatory {
    Demand,
    TravelTimeRate,
}

impl Explanatory {
    pub fn name(self) -> &'static str {
        match self {
            Self::Demand => "demand",
            Self::TravelTimeRate => "ttr",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationRow {
    pub variable: Explanatory,
    pub distance: f64,
    pub lag: usize,
    pub mean_corr: f64,
    pub pairs: usize,
}

/// Mean correlation between target-cell demand at `t` and a variable at
/// `t − lag` in each source cell, grouped by the Euclidean distance between
/// cell centers (one bin per distinct distance, ascending).
#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationProfile {
    pub distances: Vec<f64>,
    pub rows: Vec<CorrelationRow>,
    /// (target, source, lag) pairs skipped for zero variance.
    pub excluded: usize,
}

impl CorrelationProfile {
    pub fn get(&self, variable: Explanatory, bin: usize, lag: usize) -> Option<&CorrelationRow> {
        let d = *self.distances.get(bin)?;
        self.rows.iter().find(|r| r.variable == variable && r.lag == lag && r.distance == d)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "# excluded_zero_variance_pairs={}", self.excluded)?;
        writeln!(w, "variable,distance,lag,mean_corr,pairs")?;
        for r in &self.rows {
            writeln!(w, "{},{:.6},{},{:.6},{}", r.variable.name(), r.distance, r.lag, r.mean_corr, r.pairs)?;
        }
        Ok(())
    }
}

fn distance_bins(rows: usize, cols: usize) -> Vec<f64> {
    let mut d: Vec<f64> = Vec::new();
    for dr in 0..rows {
        for dc in 0..cols {
            let v = ((dr * dr + dc * dc) as f64).sqrt();
            if !d.iter().any(|x| (x - v).abs() < 1e-9) {
                d.push(v);
            }
        }
    }
    d.sort_by(f64::total_cmp);
    d
}

pub fn correlation_profile(demand: &GridSeries, ttr: &GridSeries, max_lag: usize) -> Result<CorrelationProfile> {
    if demand.rows != ttr.rows || demand.cols != ttr.cols || demand.len() != ttr.len() {
        return Err(DataError::Invalid("demand and travel-time series are not aligned".into()));
    }
    let t_len = demand.len();
    if max_lag == 0 || t_len < max_lag + 3 {
        return Err(DataError::InsufficientHistory(format!("{t_len} buckets for {max_lag} lags")));
    }
    let (rows, cols) = (demand.rows, demand.cols);
    let distances = distance_bins(rows, cols);
    let demand_cells: Vec<Vec<f64>> = (0..rows * cols).map(|k| demand.cell_series(k / cols, k % cols)).collect();
    let ttr_cells: Vec<Vec<f64>> = (0..rows * cols).map(|k| ttr.cell_series(k / cols, k % cols)).collect();

    let mut out = Vec::new();
    let mut excluded = 0;
    for (variable, source) in [(Explanatory::Demand, &demand_cells), (Explanatory::TravelTimeRate, &ttr_cells)] {
        for lag in 1..=max_lag {
            let mut sums = vec![0.0; distances.len()];
            let mut counts = vec![0usize; distances.len()];
            for target in 0..rows * cols {
                let y = &demand_cells[target][max_lag..];
                for src in 0..rows * cols {
                    let z = &source[src][max_lag - lag..t_len - lag];
                    let (dr, dc) = ((target / cols).abs_diff(src / cols), (target % cols).abs_diff(src % cols));
                    let dist = ((dr * dr + dc * dc) as f64).sqrt();
                    let bin = distances.iter().position(|d| (d - dist).abs() < 1e-9).expect("distance bin");
                    match pearson(y, z) {
                        Some(r) => {
                            sums[bin] += r;
                            counts[bin] += 1;
                        }
                        None => excluded += 1,
                    }
                }
            }
            for (bin, &d) in distances.iter().enumerate() {
                if counts[bin] > 0 {
                    out.push(CorrelationRow { variable, distance: d, lag, mean_corr: sums[bin] / counts[bin] as f64, pairs: counts[bin] });
                }
            }
        }
    }
    Ok(CorrelationProfile { distances, rows: out, excluded })
}
