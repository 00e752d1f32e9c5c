//! Time-of-day and day-of-week dummies.

use chrono::{Datelike, NaiveDateTime, Timelike, Weekday};

use super::grid::GridSeries;
use super::{DataError, Result};

/// 1 for Saturday/Sunday, 0 otherwise.
pub fn day_of_week(t: &NaiveDateTime) -> u8 {
    matches!(t.weekday(), Weekday::Sat | Weekday::Sun) as u8
}

/// Peak (2), off-peak (1) and sleep (0) classes per hour of day, ranked
/// separately for weekdays and weekends.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TimeOfDayMap {
    pub weekday: [u8; 24],
    pub weekend: [u8; 24],
}

impl TimeOfDayMap {
    pub fn class_of(&self, t: &NaiveDateTime) -> u8 {
        let h = t.hour() as usize;
        if day_of_week(t) == 1 {
            self.weekend[h]
        } else {
            self.weekday[h]
        }
    }
}

/// Ranks the 24 hours by mean network-wide demand (ties: earlier hour ranks
/// higher) and labels the top, middle and bottom eight.
pub fn classify_time_of_day(train: &GridSeries) -> Result<TimeOfDayMap> {
    let mut sums = [[0.0f64; 24]; 2];
    let mut counts = [[0usize; 24]; 2];
    for (t, frame) in train.timestamps.iter().zip(&train.frames) {
        let class = day_of_week(t) as usize;
        let h = t.hour() as usize;
        sums[class][h] += frame.iter().sum::<f64>();
        counts[class][h] += 1;
    }
    let mut maps = [[0u8; 24]; 2];
    for class in 0..2 {
        let seen = counts[class].iter().filter(|&&c| c > 0).count();
        if seen < 24 {
            let which = if class == 0 { "weekday" } else { "weekend" };
            return Err(DataError::InsufficientHistory(format!("only {seen} distinct {which} hours in the training slice")));
        }
        let means: Vec<f64> = (0..24).map(|h| sums[class][h] / counts[class][h] as f64).collect();
        let mut order: Vec<usize> = (0..24).collect();
        order.sort_by(|&a, &b| means[b].total_cmp(&means[a]).then(a.cmp(&b)));
        for (rank, &h) in order.iter().enumerate() {
            maps[class][h] = match rank {
                0..=7 => 2,
                8..=15 => 1,
                _ => 0,
            };
        }
    }
    Ok(TimeOfDayMap { weekday: maps[0], weekend: maps[1] })
}

#[cfg(test)]
mod tests {
    use super::*;
    use chrono::{Duration, NaiveDate};

    fn hourly(days: i64, f: impl Fn(&NaiveDateTime) -> f64) -> GridSeries {
        // 2016-02-01 is a Monday.
        let start = NaiveDate::from_ymd_opt(2016, 2, 1).unwrap().and_hms_opt(0, 0, 0).unwrap();
        let ts: Vec<_> = (0..days * 24).map(|k| start + Duration::hours(k)).collect();
        let frames = ts.iter().map(|t| vec![f(t), 0.0]).collect();
        GridSeries { rows: 1, cols: 2, timestamps: ts, frames }
    }

    #[test]
    fn weekday_weekend_flags() {
        let mon = NaiveDate::from_ymd_opt(2016, 2, 1).unwrap().and_hms_opt(9, 0, 0).unwrap();
        assert_eq!(day_of_week(&mon), 0);
        assert_eq!(day_of_week(&(mon + Duration::days(5))), 1);
        assert_eq!(day_of_week(&(mon + Duration::days(6))), 1);
    }

    #[test]
    fn monotone_demand_by_hour() {
        let s = hourly(14, |t| t.hour() as f64);
        let m = classify_time_of_day(&s).unwrap();
        for h in 0..24 {
            let want = if h >= 16 { 2 } else if h >= 8 { 1 } else { 0 };
            assert_eq!(m.weekday[h], want, "hour {h}");
            assert_eq!(m.weekend[h], want, "hour {h}");
        }
    }

    #[test]
    fn ties_favour_earlier_hours() {
        let s = hourly(7, |_| 1.0);
        let m = classify_time_of_day(&s).unwrap();
        assert_eq!(&m.weekday[..8], &[2; 8]);
        assert_eq!(&m.weekday[8..16], &[1; 8]);
        assert_eq!(&m.weekday[16..], &[0; 8]);
    }

    #[test]
    fn exactly_eight_hours_per_class() {
        let s = hourly(21, |t| ((t.hour() * 7 + t.day()) % 11) as f64);
        let m = classify_time_of_day(&s).unwrap();
        for map in [m.weekday, m.weekend] {
            for class in 0..3 {
                assert_eq!(map.iter().filter(|&&c| c == class).count(), 8);
            }
        }
    }

    #[test]
    fn needs_every_hour() {
        let s = hourly(5, |t| t.hour() as f64);
        assert!(matches!(classify_time_of_day(&s), Err(DataError::InsufficientHistory(_))));
    }
}
