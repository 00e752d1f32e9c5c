//! Ingestion, grid variables, calendar and weather features, standardization,
//! chronological splits and synthetic scenarios.

mod calendar;
mod correlation;
mod grid;
mod ingest;
mod scale;
mod synth;

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use chrono::NaiveDateTime;
use thiserror::Error;

pub use calendar::{classify_time_of_day, day_of_week, TimeOfDayMap};
pub use correlation::{correlation_profile, pearson, CorrelationProfile, CorrelationRow, Explanatory};
pub use grid::{GridSeries, GridSpec, TimeAxis};
pub use ingest::{
    aggregate_demand, aggregate_ttr, align_weather, format_timestamp, order_axis, parse_timestamp, read_orders, read_weather, write_orders,
    write_weather, IngestReport, OrderRecord, WeatherRecord, ORDER_HEADER, WEATHER_HEADER,
};
pub use scale::{chronological_split, minmax_standardize, Bounds};
pub use synth::{daily_profile, hotspot, synthesize, synthesize_orders, synthesize_with, synthetic_start, Scenario, SynthParams};

#[derive(Debug, Error)]
pub enum DataError {
    #[error("invalid data: {0}")]
    Invalid(String),
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("parse error: {0}")]
    Parse(String),
    #[error("no weather observation within the fill limit at {0}")]
    MissingWeather(String),
    #[error("insufficient history: {0}")]
    InsufficientHistory(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

pub type Result<T> = std::result::Result<T, DataError>;

/// Hourly weather: temperature (°C), humidity (%), state code (5 sunny …
/// 1 heavy rain), wind speed and visibility.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherObs {
    pub temperature: f64,
    pub humidity: f64,
    pub state: u8,
    pub wind_speed: f64,
    pub visibility: f64,
}

impl WeatherObs {
    pub fn to_array(&self) -> [f64; 5] {
        [self.temperature, self.humidity, self.state as f64, self.wind_speed, self.visibility]
    }
}

/// Aligned demand, travel-time rate and weather on a common time axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub grid: GridSpec,
    pub demand: GridSeries,
    pub ttr: GridSeries,
    pub weather: Vec<WeatherObs>,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.demand.len()
    }

    pub fn is_empty(&self) -> bool {
        self.demand.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        self.grid.validate()?;
        self.demand.validate()?;
        self.ttr.validate()?;
        if self.demand.rows != self.grid.rows || self.demand.cols != self.grid.cols {
            return Err(DataError::Invalid("demand series does not match the grid".into()));
        }
        if self.ttr.timestamps != self.demand.timestamps || self.ttr.rows != self.demand.rows || self.ttr.cols != self.demand.cols {
            return Err(DataError::Invalid("travel-time series is not aligned with demand".into()));
        }
        if self.weather.len() != self.demand.len() {
            return Err(DataError::Invalid("weather is not aligned with demand".into()));
        }
        if self.demand.frames.iter().flatten().any(|&v| v < 0.0) {
            return Err(DataError::Invalid("negative demand".into()));
        }
        Ok(())
    }

    /// Aggregates raw records. Weather gaps up to `max_fill` buckets are
    /// forward-filled.
    pub fn from_records(orders: &[OrderRecord], weather: &[WeatherRecord], spec: &GridSpec, max_fill: usize) -> Result<(Self, IngestReport)> {
        let (demand, mut report) = aggregate_demand(orders, spec)?;
        let (ttr, ttr_report) = aggregate_ttr(orders, spec)?;
        report.ttr_imputed_cells = ttr_report.ttr_imputed_cells;
        let axis = order_axis(orders, spec).ok_or_else(|| DataError::Invalid("no orders inside the grid".into()))?;
        let (weather, filled) = align_weather(weather, &axis, max_fill)?;
        report.weather_forward_filled = filled;
        let ds = Self { grid: spec.clone(), demand, ttr, weather };
        ds.validate()?;
        Ok((ds, report))
    }

    /// Writes `grid.txt`, `demand.csv`, `ttr.csv` and `weather.csv`.
    pub fn save_dir(&self, dir: &Path) -> Result<()> {
        std::fs::create_dir_all(dir)?;
        let mut g = BufWriter::new(File::create(dir.join("grid.txt"))?);
        write_grid(&mut g, &self.grid)?;
        g.flush()?;
        write_long(BufWriter::new(File::create(dir.join("demand.csv"))?), &self.demand)?;
        write_long(BufWriter::new(File::create(dir.join("ttr.csv"))?), &self.ttr)?;
        let records: Vec<WeatherRecord> =
            self.demand.timestamps.iter().zip(&self.weather).map(|(t, obs)| WeatherRecord { time: *t, obs: obs.clone() }).collect();
        write_weather(BufWriter::new(File::create(dir.join("weather.csv"))?), &records)?;
        Ok(())
    }

    pub fn load_dir(dir: &Path) -> Result<Self> {
        let mut text = String::new();
        File::open(dir.join("grid.txt"))?.read_to_string(&mut text)?;
        let grid = parse_grid(&text)?;
        let demand = read_long(BufReader::new(File::open(dir.join("demand.csv"))?), &grid)?;
        let ttr = read_long(BufReader::new(File::open(dir.join("ttr.csv"))?), &grid)?;
        let weather: Vec<WeatherObs> = read_weather(BufReader::new(File::open(dir.join("weather.csv"))?))?.into_iter().map(|r| r.obs).collect();
        let ds = Self { grid, demand, ttr, weather };
        ds.validate()?;
        Ok(ds)
    }
}

pub fn write_grid<W: Write>(w: &mut W, g: &GridSpec) -> std::io::Result<()> {
    writeln!(w, "lon_min={}", g.lon_min)?;
    writeln!(w, "lon_max={}", g.lon_max)?;
    writeln!(w, "lat_min={}", g.lat_min)?;
    writeln!(w, "lat_max={}", g.lat_max)?;
    writeln!(w, "rows={}", g.rows)?;
    writeln!(w, "cols={}", g.cols)?;
    writeln!(w, "interval_minutes={}", g.interval_minutes)
}

/// Reads `key=value` lines; unknown keys are ignored, missing keys keep the
/// default grid's value.
pub fn parse_grid(text: &str) -> Result<GridSpec> {
    let mut g = GridSpec::default();
    for line in text.lines().map(str::trim).filter(|l| !l.is_empty() && !l.starts_with('#')) {
        let Some((k, v)) = line.split_once('=') else {
            return Err(DataError::Parse(format!("expected key=value, got {line:?}")));
        };
        let v = v.trim();
        let bad = || DataError::Parse(format!("bad value for {}: {v:?}", k.trim()));
        match k.trim() {
            "lon_min" => g.lon_min = v.parse().map_err(|_| bad())?,
            "lon_max" => g.lon_max = v.parse().map_err(|_| bad())?,
            "lat_min" => g.lat_min = v.parse().map_err(|_| bad())?,
            "lat_max" => g.lat_max = v.parse().map_err(|_| bad())?,
            "rows" => g.rows = v.parse().map_err(|_| bad())?,
            "cols" => g.cols = v.parse().map_err(|_| bad())?,
            "interval_minutes" => g.interval_minutes = v.parse().map_err(|_| bad())?,
            _ => {}
        }
    }
    g.validate()?;
    Ok(g)
}

/// Long format `time,row,col,value`, one line per cell and bucket.
pub fn write_long<W: Write>(writer: W, s: &GridSeries) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["time", "row", "col", "value"])?;
    for (t, frame) in s.timestamps.iter().zip(&s.frames) {
        let ts = format_timestamp(t);
        for (k, v) in frame.iter().enumerate() {
            w.write_record([ts.clone(), (k / s.cols).to_string(), (k % s.cols).to_string(), v.to_string()])?;
        }
    }
    w.flush()?;
    Ok(())
}

pub fn read_long<R: Read>(reader: R, grid: &GridSpec) -> Result<GridSeries> {
    let mut rdr = csv::Reader::from_reader(reader);
    let header: Vec<String> = rdr.headers()?.iter().map(str::to_string).collect();
    if header != ["time", "row", "col", "value"] {
        return Err(DataError::Parse(format!("expected header time,row,col,value, got {header:?}")));
    }
    let mut timestamps: Vec<NaiveDateTime> = Vec::new();
    let mut frames: Vec<Vec<f64>> = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = i + 2;
        let bad = |what: &str| DataError::Parse(format!("line {line}: bad {what}"));
        let t = parse_timestamp(rec.get(0).ok_or_else(|| bad("time"))?)?;
        let r: usize = rec.get(1).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("row"))?;
        let c: usize = rec.get(2).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("col"))?;
        let v: f64 = rec.get(3).and_then(|v| v.trim().parse().ok()).ok_or_else(|| bad("value"))?;
        if r >= grid.rows || c >= grid.cols {
            return Err(bad("cell index"));
        }
        if timestamps.last() != Some(&t) {
            if timestamps.last().is_some_and(|last| *last > t) {
                return Err(DataError::Parse(format!("line {line}: timestamps out of order")));
            }
            timestamps.push(t);
            frames.push(vec![f64::NAN; grid.cells()]);
        }
        frames.last_mut().unwrap()[r * grid.cols + c] = v;
    }
    if frames.iter().flatten().any(|v| v.is_nan()) {
        return Err(DataError::Parse("missing cell values".into()));
    }
    let s = GridSeries { rows: grid.rows, cols: grid.cols, timestamps, frames };
    s.validate()?;
    Ok(s)
}

/// Min-max bounds for every modeled variable, fitted on the training slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Standardization {
    pub demand: Bounds,
    pub ttr: Bounds,
    pub hour: Bounds,
    pub week: Bounds,
    pub weather: [Bounds; 5],
}

/// Model-ready view of a dataset: standardized grids, calendar and weather
/// vectors, the training length and everything fitted on the training slice.
#[derive(Debug, Clone, PartialEq)]
pub struct Prepared {
    pub rows: usize,
    pub cols: usize,
    pub timestamps: Vec<NaiveDateTime>,
    /// Raw demand counts, for metrics in demand units.
    pub raw_demand: Vec<Vec<f64>>,
    pub demand: Vec<Vec<f64>>,
    pub ttr: Vec<Vec<f64>>,
    /// Standardized (time-of-day, day-of-week).
    pub calendar: Vec<[f64; 2]>,
    /// Standardized (temperature, humidity, state, wind, visibility).
    pub weather: Vec<[f64; 5]>,
    pub hour_class: Vec<u8>,
    pub week_class: Vec<u8>,
    pub train_len: usize,
    pub scaling: Standardization,
    pub time_of_day: TimeOfDayMap,
}

impl Prepared {
    pub fn new(ds: &Dataset, train_fraction: f64) -> Result<Self> {
        ds.validate()?;
        let len = ds.len();
        let train_len = chronological_split(len, train_fraction)?;
        let time_of_day = classify_time_of_day(&ds.demand.slice(0..train_len))?;
        let hour_class: Vec<u8> = ds.demand.timestamps.iter().map(|t| time_of_day.class_of(t)).collect();
        let week_class: Vec<u8> = ds.demand.timestamps.iter().map(day_of_week).collect();

        let demand_b = Bounds::fit(ds.demand.frames[..train_len].iter().flatten())?;
        let ttr_b = Bounds::fit(ds.ttr.frames[..train_len].iter().flatten())?;
        let hour_f: Vec<f64> = hour_class.iter().map(|&h| h as f64).collect();
        let week_f: Vec<f64> = week_class.iter().map(|&w| w as f64).collect();
        let hour_b = Bounds::fit(&hour_f[..train_len])?;
        let week_b = Bounds::fit(&week_f[..train_len])?;
        let raw_weather: Vec<[f64; 5]> = ds.weather.iter().map(WeatherObs::to_array).collect();
        let mut weather_b = [Bounds { min: 0.0, max: 0.0 }; 5];
        for (ch, b) in weather_b.iter_mut().enumerate() {
            *b = Bounds::fit(raw_weather[..train_len].iter().map(|w| &w[ch]))?;
        }

        let map_frames = |frames: &[Vec<f64>], b: &Bounds| -> Vec<Vec<f64>> { frames.iter().map(|f| f.iter().map(|&v| b.apply(v)).collect()).collect() };
        let calendar = (0..len).map(|t| [hour_b.apply(hour_f[t]), week_b.apply(week_f[t])]).collect();
        let weather = raw_weather.iter().map(|w| std::array::from_fn(|ch| weather_b[ch].apply(w[ch]))).collect();
        Ok(Self {
            rows: ds.grid.rows,
            cols: ds.grid.cols,
            timestamps: ds.demand.timestamps.clone(),
            raw_demand: ds.demand.frames.clone(),
            demand: map_frames(&ds.demand.frames, &demand_b),
            ttr: map_frames(&ds.ttr.frames, &ttr_b),
            calendar,
            weather,
            hour_class,
            week_class,
            train_len,
            scaling: Standardization { demand: demand_b, ttr: ttr_b, hour: hour_b, week: week_b, weather: weather_b },
            time_of_day,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn cells(&self) -> usize {
        self.rows * self.cols
    }

    /// Test-slice indices.
    pub fn test_range(&self) -> std::ops::Range<usize> {
        self.train_len..self.len()
    }
}
