//! ARIMA(p, d, q) fitted per cell by two-stage least squares.

use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

use super::{cell_series, BaselineError, Forecaster, Result};
use crate::data::Prepared;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ArimaOrder {
    pub p: usize,
    pub d: usize,
    pub q: usize,
}

impl Default for ArimaOrder {
    fn default() -> Self {
        Self { p: 2, d: 1, q: 1 }
    }
}

/// Coefficients for the `d`-times differenced series
/// `w_t = c + sum phi_i w_{t-i} + sum theta_j e_{t-j} + e_t`. The intercept
/// is estimated only without differencing.
#[derive(Debug, Clone, PartialEq)]
pub struct ArimaModel {
    pub order: ArimaOrder,
    pub intercept: f64,
    pub ar: Vec<f64>,
    pub ma: Vec<f64>,
    /// True when the moving-average fit failed and a pure AR(p) was used.
    pub fallback: bool,
}

fn difference(series: &[f64], d: usize) -> Vec<f64> {
    let mut w = series.to_vec();
    for _ in 0..d {
        w = w.windows(2).map(|p| p[1] - p[0]).collect();
    }
    w
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Least squares with an SVD; `None` when the design is numerically rank
/// deficient.
fn least_squares(x: &DMatrix<f64>, y: &DVector<f64>) -> Option<DVector<f64>> {
    if x.ncols() == 0 {
        return Some(DVector::zeros(0));
    }
    if x.nrows() < x.ncols() {
        return None;
    }
    let svd = x.clone().svd(true, true);
    let max = svd.singular_values.max();
    let min = svd.singular_values.min();
    if !(max > 0.0) || min <= 1e-10 * max {
        return None;
    }
    svd.solve(y, 0.0).ok()
}

/// Regresses `w_t` on `lags` of `w`, `res_lags` of `e` and optionally an
/// intercept, for `t` in `start..w.len()`. Returns (intercept, ar, ma).
fn regress(w: &[f64], e: &[f64], lags: usize, res_lags: usize, intercept: bool, start: usize) -> Option<(f64, Vec<f64>, Vec<f64>)> {
    let rows = w.len().checked_sub(start)?;
    let cols = lags + res_lags + intercept as usize;
    let x = DMatrix::from_fn(rows, cols, |r, c| {
        let t = start + r;
        if c < lags {
            w[t - 1 - c]
        } else if c < lags + res_lags {
            e[t - 1 - (c - lags)]
        } else {
            1.0
        }
    });
    let y = DVector::from_iterator(rows, w[start..].iter().copied());
    let beta = least_squares(&x, &y)?;
    let c = if intercept { beta[cols - 1] } else { 0.0 };
    Some((c, beta.rows(0, lags).iter().copied().collect(), beta.rows(lags, res_lags).iter().copied().collect()))
}

impl ArimaModel {
    pub fn fit(series: &[f64], order: ArimaOrder) -> Result<Self> {
        let ArimaOrder { p, d, q } = order;
        let need = 10 * (p + q + d).max(1);
        if series.len() < need {
            return Err(BaselineError::InsufficientHistory(format!("{} values for order {order:?}, need {need}", series.len())));
        }
        if series.iter().any(|v| !v.is_finite()) {
            return Err(BaselineError::Invalid("non-finite series".into()));
        }
        let w = difference(series, d);
        let with_c = d == 0;
        if q > 0 {
            // Residuals of a long autoregression stand in for the innovations.
            let m = (p + q + 5).max(10).min(w.len() / 4).max(p.max(q));
            if let Some((c, ar, _)) = regress(&w, &[], m, 0, with_c, m) {
                let mut e = vec![0.0; w.len()];
                for t in m..w.len() {
                    e[t] = w[t] - c - (0..m).map(|i| ar[i] * w[t - 1 - i]).sum::<f64>();
                }
                if let Some((c, ar, ma)) = regress(&w, &e, p, q, with_c, m + q) {
                    if ma.iter().map(|v| v.abs()).sum::<f64>() < 1.0 {
                        return Ok(Self { order, intercept: c, ar, ma, fallback: false });
                    }
                }
            }
        }
        match regress(&w, &[], p, 0, with_c, p) {
            Some((c, ar, _)) => Ok(Self { order, intercept: c, ar, ma: vec![0.0; q], fallback: q > 0 }),
            None => {
                let c = if with_c { w.iter().sum::<f64>() / w.len() as f64 } else { 0.0 };
                Ok(Self { order, intercept: c, ar: vec![0.0; p], ma: vec![0.0; q], fallback: true })
            }
        }
    }

    /// One-step forecast after `history`, filtering innovations through the
    /// whole history and undoing the differencing.
    pub fn forecast(&self, history: &[f64]) -> Result<f64> {
        let ArimaOrder { p, d, q } = self.order;
        if history.len() <= d + p {
            return Err(BaselineError::InsufficientHistory(format!("{} values for order {:?}", history.len(), self.order)));
        }
        let w = difference(history, d);
        let start = p.max(q);
        let mut e = vec![0.0; w.len() + 1];
        let predict = |t: usize, e: &[f64]| {
            let mut v = self.intercept;
            for i in 0..p {
                v += self.ar[i] * w[t - 1 - i];
            }
            for j in 0..q {
                if t > j {
                    v += self.ma[j] * e[t - 1 - j];
                }
            }
            v
        };
        for t in start..w.len() {
            e[t] = w[t] - predict(t, &e);
        }
        let mut y = predict(w.len(), &e);
        let n = history.len();
        for k in 1..=d {
            let sign = if k % 2 == 1 { 1.0 } else { -1.0 };
            y += sign * binomial(d, k) * history[n - k];
        }
        Ok(y)
    }
}

/// One ARIMA model per cell, fitted on the training slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Arima {
    pub models: Vec<ArimaModel>,
}

impl Arima {
    pub fn fit(data: &Prepared, order: ArimaOrder) -> Result<Self> {
        let models = (0..data.cells())
            .into_par_iter()
            .map(|c| ArimaModel::fit(&cell_series(data, c, 0..data.train_len), order))
            .collect::<Result<_>>()?;
        Ok(Self { models })
    }
}

impl Forecaster for Arima {
    fn forecast(&self, data: &Prepared, t: usize) -> Result<Vec<f64>> {
        (0..self.models.len()).map(|c| self.models[c].forecast(&cell_series(data, c, 0..t))).collect()
    }

    fn first_target(&self) -> usize {
        self.models.first().map_or(1, |m| m.order.d + m.order.p + 1)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn ar1(phi: f64, n: usize, seed: u64) -> Vec<f64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut x = vec![0.0; n];
        for t in 1..n {
            let e: f64 = StandardNormal.sample(&mut rng);
            x[t] = phi * x[t - 1] + e;
        }
        x
    }

    #[test]
    fn random_walk_forecasts_the_last_value() {
        let x = ar1(0.5, 50, 1);
        let m = ArimaModel::fit(&x, ArimaOrder { p: 0, d: 1, q: 0 }).unwrap();
        assert_eq!(m.forecast(&x).unwrap(), *x.last().unwrap());
    }

    #[test]
    fn recovers_an_ar1_coefficient() {
        let x = ar1(0.8, 1000, 2);
        let m = ArimaModel::fit(&x, ArimaOrder { p: 1, d: 0, q: 0 }).unwrap();
        assert!((m.ar[0] - 0.8).abs() < 0.05, "{:?}", m.ar);
    }

    #[test]
    fn white_noise_has_no_autoregression() {
        let x = ar1(0.0, 1000, 3);
        let m = ArimaModel::fit(&x, ArimaOrder { p: 1, d: 0, q: 0 }).unwrap();
        assert!(m.ar[0].abs() < 0.1);
    }

    #[test]
    fn fits_an_arma_model() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let e: Vec<f64> = (0..3000).map(|_| StandardNormal.sample(&mut rng)).collect();
        let mut x = vec![0.0; 3000];
        for t in 1..3000 {
            x[t] = 0.5 * x[t - 1] + e[t] + 0.4 * e[t - 1];
        }
        let m = ArimaModel::fit(&x, ArimaOrder { p: 1, d: 0, q: 1 }).unwrap();
        assert!(!m.fallback);
        assert!((m.ar[0] - 0.5).abs() < 0.1 && (m.ma[0] - 0.4).abs() < 0.1, "{m:?}");
    }

    #[test]
    fn second_differences_integrate_back() {
        let x: Vec<f64> = (0..40).map(|t| (t * t) as f64).collect();
        let m = ArimaModel { order: ArimaOrder { p: 0, d: 2, q: 0 }, intercept: 0.0, ar: vec![], ma: vec![], fallback: false };
        assert_eq!(m.forecast(&x).unwrap(), 2.0 * 39.0 * 39.0 - 38.0 * 38.0);
    }

    #[test]
    fn constant_series_falls_back() {
        let m = ArimaModel::fit(&[1.0; 60], ArimaOrder::default()).unwrap();
        assert!(m.fallback);
        assert_eq!(m.forecast(&[1.0; 60]).unwrap(), 1.0);
    }

    #[test]
    fn short_series_is_rejected() {
        assert!(ArimaModel::fit(&[1.0; 20], ArimaOrder::default()).is_err());
    }
}
