//! Seeded synthetic ride-demand datasets.
//!
//! The default scenario mixes a weekday double-peak / weekend single-peak
//! daily profile, a central hotspot, a persistent latent field that diffuses
//! to neighbouring cells, travel-time shocks whose effect on demand shows up
//! one bucket later, and a temperature anomaly that shifts demand. Humidity,
//! weather state, wind and visibility are generated but never used.

use std::f64::consts::PI;

use chrono::{Duration, NaiveDate, NaiveDateTime, Timelike};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Poisson};

use super::calendar::day_of_week;
use super::grid::{GridSeries, GridSpec};
use super::ingest::{OrderRecord, WeatherRecord};
use super::{DataError, Dataset, Result, WeatherObs};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Scenario {
    /// Calendar, temperature and lag-1 travel-time effects are all active.
    Default,
    /// Demand evolves only from its own spatial history; every exogenous
    /// channel is unrelated noise.
    DemandOnly,
}

impl Scenario {
    pub fn name(self) -> &'static str {
        match self {
            Self::Default => "default",
            Self::DemandOnly => "demand-only",
        }
    }
}

impl std::str::FromStr for Scenario {
    type Err = DataError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "default" => Ok(Self::Default),
            "demand-only" | "demand_only" => Ok(Self::DemandOnly),
            other => Err(DataError::Invalid(format!("unknown scenario {other:?}"))),
        }
    }
}

/// Generator knobs. The defaults are what [`synthesize`] uses.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    /// Orders per hour at the hotspot center for a unit profile.
    pub peak_rate: f64,
    /// Lag-1 persistence of the latent demand field.
    pub field_persistence: f64,
    pub field_innovation: f64,
    pub field_weight: f64,
    /// Demand response to the previous bucket's travel-time shock.
    pub ttr_effect: f64,
    /// Demand response to the previous bucket's temperature anomaly (per °C).
    pub temperature_effect: f64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            peak_rate: 60.0,
            field_persistence: 0.8,
            field_innovation: 0.35,
            field_weight: 0.3,
            ttr_effect: 0.3,
            temperature_effect: 0.15,
        }
    }
}

/// Monday 2015-11-02 00:00.
pub fn synthetic_start() -> NaiveDateTime {
    NaiveDate::from_ymd_opt(2015, 11, 2).unwrap().and_hms_opt(0, 0, 0).unwrap()
}

fn bump(x: f64, center: f64, width: f64) -> f64 {
    (-(x - center).powi(2) / (2.0 * width * width)).exp()
}

/// Relative demand by hour: two commute peaks on weekdays, one broad
/// afternoon peak on weekends.
pub fn daily_profile(hour: f64, weekend: bool) -> f64 {
    if weekend {
        0.12 + 0.8 * bump(hour, 14.0, 3.5)
    } else {
        let daytime = 0.3 / (1.0 + (-(hour - 7.0) * 1.5).exp()) / (1.0 + ((hour - 22.0) * 1.5).exp());
        0.1 + daytime + 0.75 * bump(hour, 8.5, 1.3) + 0.7 * bump(hour, 18.5, 1.5)
    }
}

/// Neighbour diffusion with reflecting borders: each cell keeps `keep` of its
/// own value and shares the rest equally with its 4-neighbours.
fn diffuse(field: &[f64], rows: usize, cols: usize, keep: f64) -> Vec<f64> {
    let mut out = vec![0.0; field.len()];
    for r in 0..rows {
        for c in 0..cols {
            let mut nsum = 0.0;
            let mut n = 0;
            for (dr, dc) in [(-1i64, 0i64), (1, 0), (0, -1), (0, 1)] {
                let (rr, cc) = (r as i64 + dr, c as i64 + dc);
                if rr >= 0 && rr < rows as i64 && cc >= 0 && cc < cols as i64 {
                    nsum += field[rr as usize * cols + cc as usize];
                    n += 1;
                }
            }
            let own = field[r * cols + c];
            out[r * cols + c] = if n == 0 { own } else { keep * own + (1.0 - keep) * nsum / n as f64 };
        }
    }
    out
}

fn smooth_noise(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Vec<f64> {
    let normal = Normal::new(0.0, 1.0).unwrap();
    let raw: Vec<f64> = (0..rows * cols).map(|_| normal.sample(rng)).collect();
    let s = diffuse(&raw, rows, cols, 0.5);
    // diffusion shrinks the variance; restore roughly unit scale
    let var = s.iter().map(|v| v * v).sum::<f64>() / s.len() as f64;
    let norm = if s.len() > 4 { var.sqrt().max(1e-6) } else { 1.0 };
    s.into_iter().map(|v| v / norm).collect()
}

/// Spatial intensity: a central hotspot over a low floor.
pub fn hotspot(rows: usize, cols: usize) -> Vec<f64> {
    let (cr, cc) = ((rows as f64 - 1.0) / 2.0, (cols as f64 - 1.0) / 2.0);
    let sigma = (rows.max(cols) as f64 / 3.5).max(0.8);
    let mut out = Vec::with_capacity(rows * cols);
    for r in 0..rows {
        for c in 0..cols {
            let d2 = (r as f64 - cr).powi(2) + (c as f64 - cc).powi(2);
            out.push(0.25 + (-d2 / (2.0 * sigma * sigma)).exp());
        }
    }
    out
}

struct Ar1 {
    value: f64,
    rho: f64,
    noise: Normal<f64>,
}

impl Ar1 {
    fn new(rho: f64, sd: f64) -> Self {
        Self { value: 0.0, rho, noise: Normal::new(0.0, sd).unwrap() }
    }

    fn step(&mut self, rng: &mut ChaCha8Rng) -> f64 {
        self.value = self.rho * self.value + self.noise.sample(rng);
        self.value
    }
}

pub fn synthesize(spec: &GridSpec, buckets: usize, seed: u64, scenario: Scenario) -> Result<Dataset> {
    synthesize_with(spec, buckets, seed, scenario, &SynthParams::default())
}

pub fn synthesize_with(spec: &GridSpec, buckets: usize, seed: u64, scenario: Scenario, params: &SynthParams) -> Result<Dataset> {
    spec.validate()?;
    if buckets < 200 {
        return Err(DataError::Invalid(format!("synthetic series needs at least 200 buckets, got {buckets}")));
    }
    let (rows, cols) = (spec.rows, spec.cols);
    let cells = rows * cols;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let start = synthetic_start();
    let timestamps: Vec<NaiveDateTime> = (0..buckets).map(|k| start + Duration::minutes(spec.interval_minutes * k as i64)).collect();

    let intensity = hotspot(rows, cols);
    let unit = Normal::new(0.0, 1.0).unwrap();

    let mut temp_anomaly = Ar1::new(0.97, 0.35);
    let mut humidity = Ar1::new(0.9, 4.0);
    let mut wind = Ar1::new(0.85, 0.8);
    let mut visibility = Ar1::new(0.9, 1.2);
    let mut state_level = Ar1::new(0.95, 0.3);

    let mut field = vec![0.0; cells];
    let mut prev_shock = vec![0.0; cells];
    let mut prev_temp_anomaly = 0.0;

    let mut demand = GridSeries::zeros(rows, cols, timestamps.clone());
    let mut ttr = GridSeries::zeros(rows, cols, timestamps.clone());
    let mut weather = Vec::with_capacity(buckets);

    for (t, ts) in timestamps.iter().enumerate() {
        let hour = ts.hour() as f64 + ts.minute() as f64 / 60.0;
        let weekend = day_of_week(ts) == 1;
        let profile = daily_profile(hour, weekend);

        let anomaly = temp_anomaly.step(&mut rng);
        let temperature = 18.0 + 6.0 * (2.0 * PI * (hour - 9.0) / 24.0).sin() + anomaly;
        let state_raw = 4.0 + state_level.step(&mut rng) + 0.4 * unit.sample(&mut rng);
        weather.push(WeatherObs {
            temperature,
            humidity: (65.0 + humidity.step(&mut rng)).clamp(5.0, 100.0),
            state: state_raw.round().clamp(1.0, 5.0) as u8,
            wind_speed: (3.0 + wind.step(&mut rng)).max(0.0),
            visibility: (10.0 + visibility.step(&mut rng)).clamp(0.5, 20.0),
        });

        let innovation = smooth_noise(&mut rng, rows, cols);
        let diffused = diffuse(&field, rows, cols, 0.6);
        for k in 0..cells {
            field[k] = params.field_persistence * diffused[k] + params.field_innovation * innovation[k];
        }
        let shock = smooth_noise(&mut rng, rows, cols);

        for k in 0..cells {
            let level = match scenario {
                Scenario::Default => {
                    profile * (1.0 + params.temperature_effect * prev_temp_anomaly)
                        + params.field_weight * field[k]
                        + params.ttr_effect * prev_shock[k]
                }
                Scenario::DemandOnly => 0.45 + 1.2 * params.field_weight * field[k],
            };
            let lambda = params.peak_rate * intensity[k] * level.max(0.02);
            let count = Poisson::new(lambda).map(|p| p.sample(&mut rng)).unwrap_or(0.0);
            demand.frames[t][k] = count;

            let congestion = match scenario {
                Scenario::Default => 0.8 * profile * intensity[k],
                Scenario::DemandOnly => 0.0,
            };
            let rate = 2.0 + congestion + 0.5 * shock[k] + 0.05 * unit.sample(&mut rng);
            ttr.frames[t][k] = rate.max(0.3);
        }
        prev_shock = shock;
        prev_temp_anomaly = anomaly;
    }
    Ok(Dataset { grid: spec.clone(), demand, ttr, weather })
}

/// Expands a gridded dataset into individual order records whose
/// aggregation reproduces the demand counts exactly. Travel times are drawn
/// so that each order's rate equals the cell's travel-time rate.
pub fn synthesize_orders(ds: &Dataset, seed: u64) -> (Vec<OrderRecord>, Vec<WeatherRecord>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = &ds.grid;
    let mut orders = Vec::new();
    for (t, ts) in ds.demand.timestamps.iter().enumerate() {
        for r in 0..spec.rows {
            for c in 0..spec.cols {
                let n = ds.demand.get(t, r, c) as usize;
                let (lon_lo, lon_hi, lat_lo, lat_hi) = spec.cell_bounds(r, c);
                for _ in 0..n {
                    let dist: f64 = rng.gen_range(1.0..15.0);
                    let secs = rng.gen_range(0..spec.interval_minutes * 60);
                    orders.push(OrderRecord {
                        request_time: *ts + Duration::seconds(secs),
                        travel_distance_km: dist,
                        travel_time_min: dist * ds.ttr.get(t, r, c),
                        // stay strictly inside the cell so float rounding cannot move it
                        longitude: lon_lo + (lon_hi - lon_lo) * rng.gen_range(0.05..0.95),
                        latitude: lat_lo + (lat_hi - lat_lo) * rng.gen_range(0.05..0.95),
                    });
                }
            }
        }
    }
    let weather = ds
        .demand
        .timestamps
        .iter()
        .zip(&ds.weather)
        .map(|(t, obs)| WeatherRecord { time: *t, obs: obs.clone() })
        .collect();
    (orders, weather)
}
