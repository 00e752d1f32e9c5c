use chrono::{Duration, NaiveDateTime};

use super::{DataError, Result};

/// Spatial bounding box partitioned uniformly into `rows × cols` cells plus
/// the length of one time bucket.
///
/// Rows run along latitude (row 0 at `lat_min`), columns along longitude.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSpec {
    pub lon_min: f64,
    pub lon_max: f64,
    pub lat_min: f64,
    pub lat_max: f64,
    pub rows: usize,
    pub cols: usize,
    pub interval_minutes: i64,
}

impl Default for GridSpec {
    /// 7×7 grid over the Hangzhou study box with hourly buckets.
    fn default() -> Self {
        Self {
            lon_min: 120.00,
            lon_max: 120.35,
            lat_min: 30.15,
            lat_max: 30.45,
            rows: 7,
            cols: 7,
            interval_minutes: 60,
        }
    }
}

impl GridSpec {
    pub fn with_size(rows: usize, cols: usize) -> Self {
        Self { rows, cols, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        let ok = self.lon_min < self.lon_max
            && self.lat_min < self.lat_max
            && self.rows >= 1
            && self.cols >= 1
            && self.interval_minutes > 0
            && [self.lon_min, self.lon_max, self.lat_min, self.lat_max].iter().all(|v| v.is_finite());
        if ok {
            Ok(())
        } else {
            Err(DataError::InvalidGrid(format!("{self:?}")))
        }
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    pub fn interval(&self) -> Duration {
        Duration::minutes(self.interval_minutes)
    }

    /// Cell containing a point. Cells are half-open `[low, high)` on both
    /// axes except the last row/column, which is closed. Points outside the
    /// box map to `None`.
    pub fn locate(&self, lon: f64, lat: f64) -> Option<(usize, usize)> {
        let row = axis_bin(lat, self.lat_min, self.lat_max, self.rows)?;
        let col = axis_bin(lon, self.lon_min, self.lon_max, self.cols)?;
        Some((row, col))
    }

    /// Center of a cell in grid units (row, col), used for distances.
    pub fn center(&self, row: usize, col: usize) -> (f64, f64) {
        (row as f64 + 0.5, col as f64 + 0.5)
    }

    /// Geographic center (lon, lat) of a cell.
    pub fn geo_center(&self, row: usize, col: usize) -> (f64, f64) {
        let dlon = (self.lon_max - self.lon_min) / self.cols as f64;
        let dlat = (self.lat_max - self.lat_min) / self.rows as f64;
        (self.lon_min + (col as f64 + 0.5) * dlon, self.lat_min + (row as f64 + 0.5) * dlat)
    }

    /// Geographic bounds `(lon_lo, lon_hi, lat_lo, lat_hi)` of a cell.
    pub fn cell_bounds(&self, row: usize, col: usize) -> (f64, f64, f64, f64) {
        let dlon = (self.lon_max - self.lon_min) / self.cols as f64;
        let dlat = (self.lat_max - self.lat_min) / self.rows as f64;
        (
            self.lon_min + col as f64 * dlon,
            self.lon_min + (col + 1) as f64 * dlon,
            self.lat_min + row as f64 * dlat,
            self.lat_min + (row + 1) as f64 * dlat,
        )
    }
}

fn axis_bin(v: f64, lo: f64, hi: f64, n: usize) -> Option<usize> {
    if !v.is_finite() || v < lo || v > hi {
        return None;
    }
    let k = ((v - lo) / (hi - lo) * n as f64).floor() as usize;
    Some(k.min(n - 1))
}

/// Regular hourly (or `interval`) time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct TimeAxis {
    pub start: NaiveDateTime,
    pub len: usize,
    pub interval_minutes: i64,
}

impl TimeAxis {
    pub fn timestamps(&self) -> Vec<NaiveDateTime> {
        (0..self.len)
            .map(|k| self.start + Duration::minutes(self.interval_minutes * k as i64))
            .collect()
    }

    /// Bucket index of a timestamp, if inside the axis.
    pub fn bucket(&self, t: NaiveDateTime) -> Option<usize> {
        let minutes = (t - self.start).num_minutes();
        if t < self.start {
            return None;
        }
        let k = (minutes / self.interval_minutes) as usize;
        (k < self.len).then_some(k)
    }

    /// Smallest axis aligned to the interval that covers every timestamp.
    pub fn covering(times: impl IntoIterator<Item = NaiveDateTime>, interval_minutes: i64) -> Option<Self> {
        let mut lo: Option<NaiveDateTime> = None;
        let mut hi: Option<NaiveDateTime> = None;
        for t in times {
            lo = Some(lo.map_or(t, |l| l.min(t)));
            hi = Some(hi.map_or(t, |h| h.max(t)));
        }
        let (lo, hi) = (lo?, hi?);
        let day = lo.date().and_hms_opt(0, 0, 0)?;
        let offset = (lo - day).num_minutes() / interval_minutes * interval_minutes;
        let start = day + Duration::minutes(offset);
        let len = ((hi - start).num_minutes() / interval_minutes) as usize + 1;
        Some(Self { start, len, interval_minutes })
    }
}

/// Time-indexed sequence of `rows × cols` matrices stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct GridSeries {
    pub rows: usize,
    pub cols: usize,
    pub timestamps: Vec<NaiveDateTime>,
    pub frames: Vec<Vec<f64>>,
}

impl GridSeries {
    pub fn zeros(rows: usize, cols: usize, timestamps: Vec<NaiveDateTime>) -> Self {
        let frames = vec![vec![0.0; rows * cols]; timestamps.len()];
        Self { rows, cols, timestamps, frames }
    }

    pub fn len(&self) -> usize {
        self.frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.frames.is_empty()
    }

    pub fn get(&self, t: usize, row: usize, col: usize) -> f64 {
        self.frames[t][row * self.cols + col]
    }

    pub fn cell_series(&self, row: usize, col: usize) -> Vec<f64> {
        self.frames.iter().map(|f| f[row * self.cols + col]).collect()
    }

    pub fn total(&self) -> f64 {
        self.frames.iter().flatten().sum()
    }

    /// Checks strictly increasing, uniformly spaced timestamps and frame sizes.
    pub fn validate(&self) -> Result<()> {
        if self.timestamps.len() != self.frames.len() {
            return Err(DataError::Invalid("timestamp/frame count mismatch".into()));
        }
        if self.frames.iter().any(|f| f.len() != self.rows * self.cols) {
            return Err(DataError::Invalid("frame size does not match grid".into()));
        }
        if self.timestamps.len() >= 2 {
            let step = self.timestamps[1] - self.timestamps[0];
            if step <= Duration::zero() || self.timestamps.windows(2).any(|w| w[1] - w[0] != step) {
                return Err(DataError::Invalid("timestamps must be strictly increasing and uniform".into()));
            }
        }
        Ok(())
    }

    pub fn slice(&self, range: std::ops::Range<usize>) -> Self {
        Self {
            rows: self.rows,
            cols: self.cols,
            timestamps: self.timestamps[range.clone()].to_vec(),
            frames: self.frames[range].to_vec(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn grid() -> GridSpec {
        GridSpec { lon_min: 0.0, lon_max: 4.0, lat_min: 0.0, lat_max: 2.0, rows: 2, cols: 4, interval_minutes: 60 }
    }

    #[test]
    fn interior_boundary_goes_to_higher_cell() {
        let g = grid();
        assert_eq!(g.locate(1.0, 0.5), Some((0, 1)));
        assert_eq!(g.locate(0.999, 0.5), Some((0, 0)));
        assert_eq!(g.locate(2.0, 1.0), Some((1, 2)));
    }

    #[test]
    fn outer_edges_are_closed_and_outside_is_none() {
        let g = grid();
        assert_eq!(g.locate(4.0, 2.0), Some((1, 3)));
        assert_eq!(g.locate(0.0, 0.0), Some((0, 0)));
        assert_eq!(g.locate(4.0001, 1.0), None);
        assert_eq!(g.locate(1.0, -0.1), None);
        assert_eq!(g.locate(f64::NAN, 1.0), None);
    }

    #[test]
    fn invalid_grid_rejected() {
        let mut g = grid();
        g.lon_max = g.lon_min;
        assert!(g.validate().is_err());
        assert!(GridSpec { rows: 0, ..grid() }.validate().is_err());
        assert!(grid().validate().is_ok());
    }

    #[test]
    fn covering_axis_aligns_to_interval() {
        let d = NaiveDate::from_ymd_opt(2016, 3, 1).unwrap();
        let a = d.and_hms_opt(7, 42, 0).unwrap();
        let b = d.and_hms_opt(10, 5, 0).unwrap();
        let axis = TimeAxis::covering([b, a], 60).unwrap();
        assert_eq!(axis.start, d.and_hms_opt(7, 0, 0).unwrap());
        assert_eq!(axis.len, 4);
        assert_eq!(axis.bucket(b), Some(3));
        assert_eq!(axis.bucket(d.and_hms_opt(6, 59, 0).unwrap()), None);
        assert_eq!(axis.bucket(d.and_hms_opt(11, 0, 0).unwrap()), None);
        assert!(TimeAxis::covering(std::iter::empty(), 60).is_none());
    }

    #[test]
    fn series_validation() {
        let d = NaiveDate::from_ymd_opt(2016, 3, 1).unwrap();
        let ts = vec![d.and_hms_opt(0, 0, 0).unwrap(), d.and_hms_opt(1, 0, 0).unwrap(), d.and_hms_opt(3, 0, 0).unwrap()];
        let s = GridSeries::zeros(2, 2, ts);
        assert!(s.validate().is_err());
    }
}
