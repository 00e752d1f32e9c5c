//! Raw order and weather records and their aggregation onto the grid.

use std::collections::BTreeMap;
use std::io::{Read, Write};

use chrono::NaiveDateTime;

use super::grid::{GridSeries, GridSpec, TimeAxis};
use super::{DataError, Result, WeatherObs};

/// One ride request.
#[derive(Debug, Clone, PartialEq)]
pub struct OrderRecord {
    pub request_time: NaiveDateTime,
    pub travel_distance_km: f64,
    pub travel_time_min: f64,
    pub longitude: f64,
    pub latitude: f64,
}

impl OrderRecord {
    /// Travel time per unit distance (min/km).
    pub fn travel_time_rate(&self) -> f64 {
        self.travel_time_min / self.travel_distance_km
    }

    fn is_valid(&self) -> bool {
        self.travel_distance_km > 0.0 && self.travel_time_min > 0.0 && self.travel_distance_km.is_finite() && self.travel_time_min.is_finite()
    }
}

/// One hourly weather observation.
#[derive(Debug, Clone, PartialEq)]
pub struct WeatherRecord {
    pub time: NaiveDateTime,
    pub obs: WeatherObs,
}

/// Counts of what happened to the input during aggregation.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IngestReport {
    pub total_orders: usize,
    pub retained_orders: usize,
    pub dropped_outside: usize,
    pub dropped_invalid: usize,
    pub ttr_imputed_cells: usize,
    pub weather_forward_filled: usize,
}

pub const ORDER_HEADER: [&str; 5] = ["request_time", "travel_distance_km", "travel_time_min", "longitude", "latitude"];
pub const WEATHER_HEADER: [&str; 6] = ["time", "temperature_c", "humidity_pct", "state_code", "wind_speed", "visibility"];

/// Parses `2016-03-01T07:42:00`, `2016-03-01 07:42:00` or the minute-only
/// variants.
pub fn parse_timestamp(s: &str) -> Result<NaiveDateTime> {
    let s = s.trim();
    for fmt in ["%Y-%m-%dT%H:%M:%S", "%Y-%m-%d %H:%M:%S", "%Y-%m-%dT%H:%M", "%Y-%m-%d %H:%M", "%Y-%m-%dT%H:%M:%S%.f"] {
        if let Ok(t) = NaiveDateTime::parse_from_str(s, fmt) {
            return Ok(t);
        }
    }
    Err(DataError::Parse(format!("bad timestamp {s:?}")))
}

pub fn format_timestamp(t: &NaiveDateTime) -> String {
    t.format("%Y-%m-%dT%H:%M:%S").to_string()
}

fn check_header<R: Read>(rdr: &mut csv::Reader<R>, expected: &[&str]) -> Result<()> {
    let header = rdr.headers()?;
    let got: Vec<&str> = header.iter().map(str::trim).collect();
    if got != expected {
        return Err(DataError::Parse(format!("expected header {expected:?}, got {got:?}")));
    }
    Ok(())
}

fn field<T: std::str::FromStr>(rec: &csv::StringRecord, i: usize, line: usize) -> Result<T> {
    rec.get(i)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| DataError::Parse(format!("line {line}: bad field {i}")))
}

pub fn read_orders<R: Read>(reader: R) -> Result<Vec<OrderRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &ORDER_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        out.push(OrderRecord {
            request_time: parse_timestamp(rec.get(0).unwrap_or(""))?,
            travel_distance_km: field(&rec, 1, line)?,
            travel_time_min: field(&rec, 2, line)?,
            longitude: field(&rec, 3, line)?,
            latitude: field(&rec, 4, line)?,
        });
    }
    Ok(out)
}

pub fn write_orders<W: Write>(writer: W, orders: &[OrderRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(ORDER_HEADER)?;
    for o in orders {
        w.write_record([
            format_timestamp(&o.request_time),
            o.travel_distance_km.to_string(),
            o.travel_time_min.to_string(),
            o.longitude.to_string(),
            o.latitude.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_weather<R: Read>(reader: R) -> Result<Vec<WeatherRecord>> {
    let mut rdr = csv::Reader::from_reader(reader);
    check_header(&mut rdr, &WEATHER_HEADER)?;
    let mut out = Vec::new();
    for (k, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let line = k + 2;
        let state: u8 = field(&rec, 3, line)?;
        if !(1..=5).contains(&state) {
            return Err(DataError::Parse(format!("line {line}: weather state {state} outside 1..=5")));
        }
        out.push(WeatherRecord {
            time: parse_timestamp(rec.get(0).unwrap_or(""))?,
            obs: WeatherObs {
                temperature: field(&rec, 1, line)?,
                humidity: field(&rec, 2, line)?,
                state,
                wind_speed: field(&rec, 4, line)?,
                visibility: field(&rec, 5, line)?,
            },
        });
    }
    Ok(out)
}

pub fn write_weather<W: Write>(writer: W, records: &[WeatherRecord]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(WEATHER_HEADER)?;
    for r in records {
        w.write_record([
            format_timestamp(&r.time),
            r.obs.temperature.to_string(),
            r.obs.humidity.to_string(),
            r.obs.state.to_string(),
            r.obs.wind_speed.to_string(),
            r.obs.visibility.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Orders with positive distance/time inside the bounding box, each paired
/// with its cell, plus the drop counts.
fn retain<'a>(orders: &'a [OrderRecord], spec: &GridSpec) -> (Vec<(&'a OrderRecord, usize, usize)>, IngestReport) {
    let mut report = IngestReport { total_orders: orders.len(), ..Default::default() };
    let mut kept = Vec::with_capacity(orders.len());
    for o in orders {
        if !o.is_valid() {
            report.dropped_invalid += 1;
            continue;
        }
        match spec.locate(o.longitude, o.latitude) {
            Some((r, c)) => kept.push((o, r, c)),
            None => report.dropped_outside += 1,
        }
    }
    report.retained_orders = kept.len();
    (kept, report)
}

/// Time axis spanned by the retained orders.
pub fn order_axis(orders: &[OrderRecord], spec: &GridSpec) -> Option<TimeAxis> {
    let (kept, _) = retain(orders, spec);
    TimeAxis::covering(kept.iter().map(|(o, _, _)| o.request_time), spec.interval_minutes)
}

fn empty_series(spec: &GridSpec) -> GridSeries {
    GridSeries::zeros(spec.rows, spec.cols, Vec::new())
}

/// Order counts per cell and bucket.
pub fn aggregate_demand(orders: &[OrderRecord], spec: &GridSpec) -> Result<(GridSeries, IngestReport)> {
    spec.validate()?;
    let (kept, report) = retain(orders, spec);
    let Some(axis) = TimeAxis::covering(kept.iter().map(|(o, _, _)| o.request_time), spec.interval_minutes) else {
        return Ok((empty_series(spec), report));
    };
    let mut series = GridSeries::zeros(spec.rows, spec.cols, axis.timestamps());
    for (o, r, c) in kept {
        let t = axis.bucket(o.request_time).expect("axis covers retained orders");
        series.frames[t][r * spec.cols + c] += 1.0;
    }
    Ok((series, report))
}

/// Mean travel-time rate per cell and bucket. Cells without orders take the
/// bucket's network-wide mean rate; buckets without any order take the
/// overall mean.
pub fn aggregate_ttr(orders: &[OrderRecord], spec: &GridSpec) -> Result<(GridSeries, IngestReport)> {
    spec.validate()?;
    let (kept, mut report) = retain(orders, spec);
    let Some(axis) = TimeAxis::covering(kept.iter().map(|(o, _, _)| o.request_time), spec.interval_minutes) else {
        return Ok((empty_series(spec), report));
    };
    let cells = spec.cells();
    let mut sums = vec![vec![0.0; cells]; axis.len];
    let mut counts = vec![vec![0usize; cells]; axis.len];
    for (o, r, c) in &kept {
        let t = axis.bucket(o.request_time).expect("axis covers retained orders");
        sums[t][r * spec.cols + c] += o.travel_time_rate();
        counts[t][r * spec.cols + c] += 1;
    }
    let overall = kept.iter().map(|(o, _, _)| o.travel_time_rate()).sum::<f64>() / kept.len() as f64;
    let mut series = GridSeries::zeros(spec.rows, spec.cols, axis.timestamps());
    for t in 0..axis.len {
        let n: usize = counts[t].iter().sum();
        let bucket_mean = if n > 0 { sums[t].iter().sum::<f64>() / n as f64 } else { overall };
        for k in 0..cells {
            series.frames[t][k] = if counts[t][k] > 0 {
                sums[t][k] / counts[t][k] as f64
            } else {
                report.ttr_imputed_cells += 1;
                bucket_mean
            };
        }
    }
    Ok((series, report))
}

/// Joins weather onto bucket timestamps by exact bucket; gaps of up to
/// `max_fill` buckets are forward-filled.
pub fn align_weather(records: &[WeatherRecord], axis: &TimeAxis, max_fill: usize) -> Result<(Vec<WeatherObs>, usize)> {
    let mut by_bucket: BTreeMap<usize, &WeatherObs> = BTreeMap::new();
    for r in records {
        if let Some(k) = axis.bucket(r.time) {
            by_bucket.entry(k).or_insert(&r.obs);
        }
    }
    let mut out = Vec::with_capacity(axis.len);
    let mut filled = 0;
    let mut last: Option<(usize, &WeatherObs)> = None;
    for k in 0..axis.len {
        match by_bucket.get(&k) {
            Some(obs) => {
                out.push((*obs).clone());
                last = Some((k, obs));
            }
            None => match last {
                Some((at, obs)) if k - at <= max_fill => {
                    out.push(obs.clone());
                    filled += 1;
                }
                _ => {
                    let ts = axis.timestamps()[k];
                    return Err(DataError::MissingWeather(format_timestamp(&ts)));
                }
            },
        }
    }
    Ok((out, filled))
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::NaiveDate;

    fn spec() -> GridSpec {
        GridSpec { lon_min: 0.0, lon_max: 2.0, lat_min: 0.0, lat_max: 2.0, rows: 2, cols: 2, interval_minutes: 60 }
    }

    fn at(h: u32, m: u32) -> NaiveDateTime {
        NaiveDate::from_ymd_opt(2016, 5, 4).unwrap().and_hms_opt(h, m, 0).unwrap()
    }

    fn order(t: NaiveDateTime, lon: f64, lat: f64, dist: f64, time: f64) -> OrderRecord {
        OrderRecord { request_time: t, travel_distance_km: dist, travel_time_min: time, longitude: lon, latitude: lat }
    }

    #[test]
    fn counts_orders_per_cell() {
        let orders = vec![
            order(at(8, 1), 0.5, 0.5, 1.0, 2.0),
            order(at(8, 20), 0.6, 0.2, 1.0, 2.0),
            order(at(8, 59), 0.1, 0.9, 1.0, 2.0),
        ];
        let (s, rep) = aggregate_demand(&orders, &spec()).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s.frames[0], vec![3.0, 0.0, 0.0, 0.0]);
        assert_eq!(rep.retained_orders, 3);
    }

    #[test]
    fn conserves_retained_orders_and_reports_drops() {
        let orders = vec![
            order(at(8, 1), 0.5, 0.5, 1.0, 2.0),
            order(at(9, 1), 1.0, 1.0, 1.0, 2.0),
            order(at(10, 30), 1.5, 0.5, 2.0, 3.0),
            order(at(10, 31), 5.0, 0.5, 2.0, 3.0),
            order(at(10, 32), 1.5, 0.5, 0.0, 3.0),
        ];
        let (s, rep) = aggregate_demand(&orders, &spec()).unwrap();
        assert_eq!(rep.dropped_outside, 1);
        assert_eq!(rep.dropped_invalid, 1);
        assert_eq!(s.total(), rep.retained_orders as f64);
        assert_eq!(s.get(1, 1, 1), 1.0);
    }

    #[test]
    fn empty_input_gives_empty_series() {
        let (s, rep) = aggregate_demand(&[], &spec()).unwrap();
        assert!(s.is_empty());
        assert_eq!(rep.total_orders, 0);
    }

    #[test]
    fn travel_time_rate_means_and_imputation() {
        let orders = vec![
            order(at(8, 1), 0.5, 0.5, 5.0, 10.0),
            order(at(8, 2), 1.5, 1.5, 1.0, 2.0),
            order(at(8, 3), 1.5, 1.5, 1.0, 4.0),
        ];
        let (s, rep) = aggregate_ttr(&orders, &spec()).unwrap();
        assert_eq!(s.get(0, 0, 0), 2.0);
        assert_eq!(s.get(0, 1, 1), 3.0);
        let bucket_mean = (2.0 + 2.0 + 4.0) / 3.0;
        assert_eq!(s.get(0, 0, 1), bucket_mean);
        assert_eq!(s.get(0, 1, 0), bucket_mean);
        assert_eq!(rep.ttr_imputed_cells, 2);
    }

    #[test]
    fn weather_forward_fill_limits() {
        let axis = TimeAxis { start: at(0, 0), len: 6, interval_minutes: 60 };
        let obs = WeatherObs { temperature: 20.0, humidity: 50.0, state: 5, wind_speed: 2.0, visibility: 10.0 };
        let recs = vec![
            WeatherRecord { time: at(0, 0), obs: obs.clone() },
            WeatherRecord { time: at(4, 0), obs: WeatherObs { temperature: 25.0, ..obs.clone() } },
        ];
        let (aligned, filled) = align_weather(&recs, &axis, 3).unwrap();
        assert_eq!(filled, 4);
        assert_eq!(aligned[3].temperature, 20.0);
        assert_eq!(aligned[5].temperature, 25.0);
        assert!(align_weather(&recs[..1], &axis, 3).is_err());
    }

    #[test]
    fn csv_round_trip_and_header_check() {
        let orders = vec![order(at(8, 1), 0.5, 0.25, 5.5, 10.25)];
        let mut buf = Vec::new();
        write_orders(&mut buf, &orders).unwrap();
        assert_eq!(read_orders(&buf[..]).unwrap(), orders);
        assert!(read_orders("a,b\n1,2\n".as_bytes()).is_err());
        let w = "time,temperature_c,humidity_pct,state_code,wind_speed,visibility\n2016-05-04 08:00:00,20,50,9,1,1\n";
        assert!(read_weather(w.as_bytes()).is_err());
    }
}
