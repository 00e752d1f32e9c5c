//! Error metrics, model comparison tables and heatmap export.

use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};

use crate::baselines::{BaselineError, Forecaster};
use crate::data::Prepared;

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("invalid input: {0}")]
    Invalid(String),
    #[error(transparent)]
    Forecast(#[from] BaselineError),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// RMSE, R² and mean absolute error over flattened values. R² is NaN, with
/// `r2_defined` false, when the truth has zero variance.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricsReport {
    pub rmse: f64,
    pub r2: f64,
    pub mae: f64,
    pub n: usize,
    pub r2_defined: bool,
}

pub fn metrics(y: &[f64], y_hat: &[f64]) -> Result<MetricsReport> {
    if y.len() != y_hat.len() || y.is_empty() {
        return Err(EvalError::Invalid(format!("{} truths and {} predictions", y.len(), y_hat.len())));
    }
    let n = y.len() as f64;
    let mean = y.iter().sum::<f64>() / n;
    let (mut ss_res, mut ss_tot, mut abs) = (0.0, 0.0, 0.0);
    for (a, b) in y.iter().zip(y_hat) {
        ss_res += (a - b) * (a - b);
        ss_tot += (a - mean) * (a - mean);
        abs += (a - b).abs();
    }
    let r2_defined = ss_tot > 0.0;
    Ok(MetricsReport {
        rmse: (ss_res / n).sqrt(),
        r2: if r2_defined { 1.0 - ss_res / ss_tot } else { f64::NAN },
        mae: abs / n,
        n: y.len(),
        r2_defined,
    })
}

/// Units in which predictions are scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scale {
    /// Min-max standardized demand.
    Standardized,
    /// Demand counts, predictions clipped at 0.
    Demand,
}

/// Truth and prediction for every cell and test step, time-major.
pub fn test_predictions(model: &dyn Forecaster, data: &Prepared, scale: Scale) -> Result<(Vec<f64>, Vec<f64>)> {
    let range = data.test_range();
    if range.is_empty() {
        return Err(EvalError::Invalid("empty test slice".into()));
    }
    if model.first_target() > range.start {
        return Err(EvalError::Invalid(format!("model needs {} steps of history, test starts at {}", model.first_target(), range.start)));
    }
    let mut y = Vec::with_capacity(range.len() * data.cells());
    let mut y_hat = Vec::with_capacity(y.capacity());
    for t in range {
        let p = model.forecast(data, t)?;
        match scale {
            Scale::Standardized => {
                y.extend_from_slice(&data.demand[t]);
                y_hat.extend(p);
            }
            Scale::Demand => {
                y.extend_from_slice(&data.raw_demand[t]);
                y_hat.extend(p.into_iter().map(|v| data.scaling.demand.invert(v).max(0.0)));
            }
        }
    }
    Ok((y, y_hat))
}

pub fn evaluate(model: &dyn Forecaster, data: &Prepared, scale: Scale) -> Result<MetricsReport> {
    let (y, y_hat) = test_predictions(model, data, scale)?;
    metrics(&y, &y_hat)
}

/// Metrics per cell over the test slice.
pub fn per_cell_metrics(model: &dyn Forecaster, data: &Prepared, scale: Scale) -> Result<Vec<MetricsReport>> {
    let (y, y_hat) = test_predictions(model, data, scale)?;
    let cells = data.cells();
    (0..cells)
        .map(|c| {
            let a: Vec<f64> = y.iter().skip(c).step_by(cells).copied().collect();
            let b: Vec<f64> = y_hat.iter().skip(c).step_by(cells).copied().collect();
            metrics(&a, &b)
        })
        .collect()
}

/// Model names in comparison-table order.
pub const MODEL_ORDER: [&str; 8] = ["HA", "MA", "ARIMA", "ANN", "LSTM", "Conv-LSTM (demand only)", "FCL-Net (full)", "FCL-Net (selected)"];

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComparisonTable {
    pub rows: Vec<(String, MetricsReport)>,
}

impl ComparisonTable {
    /// Scores every model on the test slice; rows follow [`MODEL_ORDER`],
    /// with unknown names after it in the given order.
    pub fn compare(models: &[(&str, &dyn Forecaster)], data: &Prepared, scale: Scale) -> Result<Self> {
        let mut rows = models.iter().map(|(name, m)| Ok((name.to_string(), evaluate(*m, data, scale)?))).collect::<Result<Vec<_>>>()?;
        rows.sort_by_key(|(name, _)| MODEL_ORDER.iter().position(|m| m == name).unwrap_or(MODEL_ORDER.len()));
        Ok(Self { rows })
    }

    pub fn get(&self, name: &str) -> Option<&MetricsReport> {
        self.rows.iter().find(|(n, _)| n == name).map(|(_, r)| r)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "model,rmse,r2,mae,n")?;
        for (name, r) in &self.rows {
            let r2 = if r.r2_defined { r.r2.to_string() } else { "NaN".into() };
            writeln!(w, "{name},{},{r2},{},{}", r.rmse, r.mae, r.n)?;
        }
        writeln!(w, "# mae is the mean absolute error")?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut out = Vec::new();
        self.write_csv(&mut out).expect("writing to memory");
        String::from_utf8(out).expect("ascii table")
    }
}

/// Writes `<stem>.pgm` (plain graymap, largest value darkest, all-zero grid
/// uniformly white) and `<stem>.csv` (exact values, one grid row per line).
pub fn export_heatmap(values: &[f64], rows: usize, cols: usize, stem: &Path) -> Result<(PathBuf, PathBuf)> {
    if values.len() != rows * cols || rows == 0 {
        return Err(EvalError::Invalid(format!("{} values for a {rows}x{cols} grid", values.len())));
    }
    if values.iter().any(|v| !v.is_finite()) {
        return Err(EvalError::Invalid("non-finite heatmap value".into()));
    }
    let max = values.iter().copied().fold(0.0, f64::max);
    let pgm = stem.with_extension("pgm");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&pgm)?);
    writeln!(w, "P2\n{cols} {rows}\n255")?;
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols]
            .iter()
            .map(|&v| if max > 0.0 { 255 - (255.0 * v.max(0.0) / max).round() as u32 } else { 255 }.to_string())
            .collect();
        writeln!(w, "{}", line.join(" "))?;
    }
    w.flush()?;
    let csv = stem.with_extension("csv");
    let mut w = std::io::BufWriter::new(std::fs::File::create(&csv)?);
    for r in 0..rows {
        let line: Vec<String> = values[r * cols..(r + 1) * cols].iter().map(f64::to_string).collect();
        writeln!(w, "{}", line.join(","))?;
    }
    w.flush()?;
    Ok((pgm, csv))
}

/// Reads a grid written by [`export_heatmap`]; returns (rows, cols, values).
pub fn read_grid_csv(path: &Path) -> Result<(usize, usize, Vec<f64>)> {
    let reader = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut values = Vec::new();
    let mut rows = 0;
    let mut cols = None;
    for line in reader.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line.split(',').map(|s| s.trim().parse::<f64>().map_err(|_| EvalError::Invalid(format!("bad value {s:?}")))).collect::<Result<_>>()?;
        if *cols.get_or_insert(row.len()) != row.len() {
            return Err(EvalError::Invalid("ragged grid".into()));
        }
        values.extend(row);
        rows += 1;
    }
    Ok((rows, cols.unwrap_or(0), values))
}
