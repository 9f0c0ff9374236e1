//! Daily close-price ingestion on a calendar-day time axis.
//!
//! Prices are stored as natural logs. The numeric time of an observation is
//! the whole number of calendar days since the series origin, so weekends and
//! holidays still advance the clock even though no observation is present.

use std::io::Read;
use std::path::Path;

use chrono::{Datelike, Duration, NaiveDate, Weekday};
use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Default minimum number of observations in a calibration window.
pub const DEFAULT_MIN_OBSERVATIONS: usize = 30;

#[derive(Debug, Error)]
pub enum SeriesError {
    #[error("failed to read {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {message}")]
    Parse { line: u64, message: String },
    #[error("line {line}: close price must be positive, got {close}")]
    NonPositivePrice { line: u64, close: f64 },
    #[error("duplicate date {0}")]
    DuplicateDate(NaiveDate),
    #[error("log-price at {0} is not finite")]
    NonFinite(NaiveDate),
    #[error("dates and log-prices differ in length ({dates} vs {values})")]
    LengthMismatch { dates: usize, values: usize },
    #[error("series is empty")]
    Empty,
    #[error("window start {t1} must precede window end {t2}")]
    InvalidRange { t1: NaiveDate, t2: NaiveDate },
    #[error("window [{t1}, {t2}] contains no observations")]
    EmptyWindow { t1: NaiveDate, t2: NaiveDate },
    #[error("window [{t1}, {t2}] extends beyond the series span [{first}, {last}]")]
    OutOfSpan {
        t1: NaiveDate,
        t2: NaiveDate,
        first: NaiveDate,
        last: NaiveDate,
    },
    #[error("window [{t1}, {t2}] has {found} observations, at least {required} required")]
    InsufficientData {
        t1: NaiveDate,
        t2: NaiveDate,
        found: usize,
        required: usize,
    },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PriceSeries {
    dates: Vec<NaiveDate>,
    log_prices: Vec<f64>,
    origin: NaiveDate,
    #[serde(skip)]
    times: Vec<f64>,
}

impl PriceSeries {
    /// Builds a series from dates and log-prices; sorts by date and rejects
    /// duplicates. The origin defaults to the first date.
    pub fn new(dates: Vec<NaiveDate>, log_prices: Vec<f64>) -> Result<Self, SeriesError> {
        let origin = *dates.iter().min().ok_or(SeriesError::Empty)?;
        Self::with_origin(dates, log_prices, origin)
    }

    pub fn with_origin(
        dates: Vec<NaiveDate>,
        log_prices: Vec<f64>,
        origin: NaiveDate,
    ) -> Result<Self, SeriesError> {
        if dates.len() != log_prices.len() {
            return Err(SeriesError::LengthMismatch {
                dates: dates.len(),
                values: log_prices.len(),
            });
        }
        if dates.is_empty() {
            return Err(SeriesError::Empty);
        }
        let mut rows: Vec<(NaiveDate, f64)> = dates.into_iter().zip(log_prices).collect();
        rows.sort_by_key(|r| r.0);
        for pair in rows.windows(2) {
            if pair[0].0 == pair[1].0 {
                return Err(SeriesError::DuplicateDate(pair[0].0));
            }
        }
        if let Some((d, _)) = rows.iter().find(|(_, y)| !y.is_finite()) {
            return Err(SeriesError::NonFinite(*d));
        }
        let (dates, log_prices): (Vec<_>, Vec<_>) = rows.into_iter().unzip();
        Ok(Self::from_sorted(dates, log_prices, origin))
    }

    fn from_sorted(dates: Vec<NaiveDate>, log_prices: Vec<f64>, origin: NaiveDate) -> Self {
        let times = dates
            .iter()
            .map(|d| (*d - origin).num_days() as f64)
            .collect();
        Self {
            dates,
            log_prices,
            origin,
            times,
        }
    }

    /// Restores the cached time axis after deserialization.
    pub fn rebuild(self) -> Self {
        Self::from_sorted(self.dates, self.log_prices, self.origin)
    }

    pub fn len(&self) -> usize {
        self.dates.len()
    }

    pub fn is_empty(&self) -> bool {
        self.dates.is_empty()
    }

    pub fn dates(&self) -> &[NaiveDate] {
        &self.dates
    }

    pub fn log_prices(&self) -> &[f64] {
        &self.log_prices
    }

    /// Numeric observation times in calendar days since the origin.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn origin(&self) -> NaiveDate {
        self.origin
    }

    pub fn first_date(&self) -> NaiveDate {
        self.dates[0]
    }

    pub fn last_date(&self) -> NaiveDate {
        self.dates[self.dates.len() - 1]
    }

    /// Numeric time of a calendar date on this series' axis.
    pub fn time_of(&self, date: NaiveDate) -> f64 {
        (date - self.origin).num_days() as f64
    }

    /// Calendar date containing numeric time `t` (fractional days floor).
    pub fn date_at(&self, t: f64) -> NaiveDate {
        self.origin + Duration::days(t.floor() as i64)
    }

    /// Observations with dates in `[t1, t2]`, keeping the same origin.
    pub fn window(&self, t1: NaiveDate, t2: NaiveDate) -> Result<Self, SeriesError> {
        if t1 >= t2 {
            return Err(SeriesError::InvalidRange { t1, t2 });
        }
        let lo = self.dates.partition_point(|d| *d < t1);
        let hi = self.dates.partition_point(|d| *d <= t2);
        if lo >= hi {
            return Err(SeriesError::EmptyWindow { t1, t2 });
        }
        if t1 < self.first_date() || t2 > self.last_date() {
            return Err(SeriesError::OutOfSpan {
                t1,
                t2,
                first: self.first_date(),
                last: self.last_date(),
            });
        }
        Ok(Self {
            dates: self.dates[lo..hi].to_vec(),
            log_prices: self.log_prices[lo..hi].to_vec(),
            origin: self.origin,
            times: self.times[lo..hi].to_vec(),
        })
    }

    /// Extracts a calibration window and enforces the observation floor.
    pub fn calibration_window(&self, w: &Window, min_obs: usize) -> Result<Self, SeriesError> {
        let sub = self.window(w.t1, w.t2)?;
        if sub.len() < min_obs {
            return Err(SeriesError::InsufficientData {
                t1: w.t1,
                t2: w.t2,
                found: sub.len(),
                required: min_obs,
            });
        }
        Ok(sub)
    }
}

/// Calibration window `[t1, t2]`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Window {
    pub t1: NaiveDate,
    pub t2: NaiveDate,
}

impl Window {
    pub fn new(t1: NaiveDate, t2: NaiveDate) -> Result<Self, SeriesError> {
        if t1 >= t2 {
            return Err(SeriesError::InvalidRange { t1, t2 });
        }
        Ok(Self { t1, t2 })
    }

    /// Window of `dt` calendar days ending at `t2`.
    pub fn ending_at(t2: NaiveDate, dt: i64) -> Result<Self, SeriesError> {
        Self::new(t2 - Duration::days(dt), t2)
    }

    /// Width in calendar days.
    pub fn dt(&self) -> i64 {
        (self.t2 - self.t1).num_days()
    }
}

#[derive(Debug, Deserialize)]
struct CsvRow {
    date: String,
    close: String,
}

/// Reads a `date,close` CSV from any reader.
pub fn read_csv<R: Read>(reader: R) -> Result<PriceSeries, SeriesError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(|e| SeriesError::Parse {
        line: 1,
        message: e.to_string(),
    })?;
    let names: Vec<String> = headers.iter().map(|h| h.to_ascii_lowercase()).collect();
    if names.len() < 2 || names[0] != "date" || names[1] != "close" {
        return Err(SeriesError::Parse {
            line: 1,
            message: format!("expected header `date,close`, got `{}`", names.join(",")),
        });
    }

    let mut dates = Vec::new();
    let mut log_prices = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(|e| SeriesError::Parse {
            line: e.position().map(|p| p.line()).unwrap_or(0),
            message: e.to_string(),
        })?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let row: CsvRow = record
            .deserialize(Some(&csv::StringRecord::from(vec!["date", "close"])))
            .map_err(|e| SeriesError::Parse {
                line,
                message: e.to_string(),
            })?;
        let date = NaiveDate::parse_from_str(&row.date, "%Y-%m-%d").map_err(|e| {
            SeriesError::Parse {
                line,
                message: format!("invalid date `{}`: {e}", row.date),
            }
        })?;
        let close: f64 = row.close.parse().map_err(|_| SeriesError::Parse {
            line,
            message: format!("invalid close `{}`", row.close),
        })?;
        if !(close > 0.0) || !close.is_finite() {
            return Err(SeriesError::NonPositivePrice { line, close });
        }
        dates.push(date);
        log_prices.push(close.ln());
    }
    PriceSeries::new(dates, log_prices)
}

pub fn load_csv(path: impl AsRef<Path>) -> Result<PriceSeries, SeriesError> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|source| SeriesError::Io {
        path: path.display().to_string(),
        source,
    })?;
    read_csv(std::io::BufReader::new(file))
}

/// Writes a series as `date,close` with closes recovered from log-prices.
pub fn write_csv<W: std::io::Write>(series: &PriceSeries, writer: W) -> csv::Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record(["date", "close"])?;
    for (d, y) in series.dates().iter().zip(series.log_prices()) {
        w.write_record([d.format("%Y-%m-%d").to_string(), format!("{:.17e}", y.exp())])?;
    }
    w.flush()?;
    Ok(())
}

/// A run of missing business days between two observations.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Gap {
    /// First missing business day.
    pub start: NaiveDate,
    /// Last missing business day.
    pub end: NaiveDate,
    pub filled: bool,
}

fn is_business_day(d: NaiveDate) -> bool {
    !matches!(d.weekday(), Weekday::Sat | Weekday::Sun)
}

/// Carries the previous close forward over extended closures.
///
/// A run of at least two missing business days and at most `max_gap_days`
/// is filled; single-day holidays and weekends are left absent. Longer runs
/// are reported with `filled = false` and left untouched.
pub fn fill_gaps(series: &PriceSeries, max_gap_days: usize) -> (PriceSeries, Vec<Gap>) {
    let mut dates = Vec::with_capacity(series.len());
    let mut values = Vec::with_capacity(series.len());
    let mut gaps = Vec::new();
    for i in 0..series.len() {
        if i > 0 {
            let prev = series.dates[i - 1];
            let missing: Vec<NaiveDate> = prev
                .iter_days()
                .skip(1)
                .take_while(|d| *d < series.dates[i])
                .filter(|d| is_business_day(*d))
                .collect();
            if missing.len() >= 2 {
                let filled = missing.len() <= max_gap_days;
                gaps.push(Gap {
                    start: missing[0],
                    end: missing[missing.len() - 1],
                    filled,
                });
                if filled {
                    let carried = series.log_prices[i - 1];
                    for d in missing {
                        dates.push(d);
                        values.push(carried);
                    }
                }
            }
        }
        dates.push(series.dates[i]);
        values.push(series.log_prices[i]);
    }
    (PriceSeries::from_sorted(dates, values, series.origin), gaps)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn d(s: &str) -> NaiveDate {
        NaiveDate::parse_from_str(s, "%Y-%m-%d").unwrap()
    }

    fn business_series(start: &str, end: &str) -> PriceSeries {
        let dates: Vec<NaiveDate> = d(start)
            .iter_days()
            .take_while(|x| *x <= d(end))
            .filter(|x| is_business_day(*x))
            .collect();
        let values = (0..dates.len()).map(|i| 1.0 + i as f64 * 0.01).collect();
        PriceSeries::new(dates, values).unwrap()
    }

    #[test]
    fn reads_log_prices() {
        let e = std::f64::consts::E;
        let csv = format!("date,close\n2015-01-01,{}\n2015-01-02,{}\n", e, e * e);
        let s = read_csv(csv.as_bytes()).unwrap();
        assert!((s.log_prices()[0] - 1.0).abs() < 1e-15);
        assert!((s.log_prices()[1] - 2.0).abs() < 1e-15);
        assert_eq!(s.times(), &[0.0, 1.0]);
    }

    #[test]
    fn sorts_unsorted_rows() {
        let csv = "date,close\n2015-01-05,3\n2015-01-01,1\n2015-01-02,2\n";
        let s = read_csv(csv.as_bytes()).unwrap();
        assert_eq!(s.dates(), &[d("2015-01-01"), d("2015-01-02"), d("2015-01-05")]);
        assert_eq!(s.times(), &[0.0, 1.0, 4.0]);
        assert!((s.log_prices()[2] - 3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn negative_price_names_line() {
        let csv = "date,close\n2015-01-01,1\n2015-01-02,-5\n";
        match read_csv(csv.as_bytes()) {
            Err(SeriesError::NonPositivePrice { line, close }) => {
                assert_eq!(line, 3);
                assert_eq!(close, -5.0);
            }
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn malformed_row_reports_line() {
        let csv = "date,close\n2015-01-01,1\n2015-13-02,2\n";
        match read_csv(csv.as_bytes()) {
            Err(SeriesError::Parse { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }
        let csv = "date,close\n2015-01-01,abc\n";
        assert!(matches!(
            read_csv(csv.as_bytes()),
            Err(SeriesError::Parse { line: 2, .. })
        ));
    }

    #[test]
    fn duplicate_dates_rejected() {
        let csv = "date,close\n2015-01-01,1\n2015-01-01,2\n";
        assert!(matches!(
            read_csv(csv.as_bytes()),
            Err(SeriesError::DuplicateDate(_))
        ));
    }

    #[test]
    fn bad_header_rejected() {
        let csv = "day,price\n2015-01-01,1\n";
        assert!(matches!(
            read_csv(csv.as_bytes()),
            Err(SeriesError::Parse { line: 1, .. })
        ));
    }

    #[test]
    fn chinese_new_year_closure_is_filled() {
        // exchanges closed 2015-02-07 .. 2015-02-13 (Sat..Fri)
        let full = business_series("2015-01-05", "2015-03-06");
        let keep: Vec<usize> = (0..full.len())
            .filter(|&i| !(d("2015-02-09")..=d("2015-02-13")).contains(&full.dates()[i]))
            .collect();
        let holed = PriceSeries::new(
            keep.iter().map(|&i| full.dates()[i]).collect(),
            keep.iter().map(|&i| full.log_prices()[i]).collect(),
        )
        .unwrap();
        let (filled, gaps) = fill_gaps(&holed, 10);
        assert_eq!(filled.len(), holed.len() + 5);
        assert_eq!(
            gaps,
            vec![Gap {
                start: d("2015-02-09"),
                end: d("2015-02-13"),
                filled: true
            }]
        );
        let prior = holed.log_prices()[holed.dates().iter().position(|x| *x == d("2015-02-06")).unwrap()];
        for (dt, y) in filled.dates().iter().zip(filled.log_prices()) {
            if (d("2015-02-09")..=d("2015-02-13")).contains(dt) {
                assert_eq!(*y, prior);
            }
        }
    }

    #[test]
    fn no_gaps_is_identity_and_single_holidays_ignored() {
        let s = business_series("2015-01-05", "2015-03-06");
        let (f, gaps) = fill_gaps(&s, 10);
        assert_eq!(f, s);
        assert!(gaps.is_empty());

        // drop a single Wednesday
        let keep: Vec<usize> = (0..s.len()).filter(|&i| s.dates()[i] != d("2015-01-14")).collect();
        let holed = PriceSeries::new(
            keep.iter().map(|&i| s.dates()[i]).collect(),
            keep.iter().map(|&i| s.log_prices()[i]).collect(),
        )
        .unwrap();
        let (f, gaps) = fill_gaps(&holed, 10);
        assert_eq!(f, holed);
        assert!(gaps.is_empty());
    }

    #[test]
    fn long_gap_reported_not_filled() {
        let s = business_series("2015-01-05", "2015-06-30");
        // remove 20 business days
        let keep: Vec<usize> = (0..s.len()).filter(|&i| !(40..60).contains(&i)).collect();
        let holed = PriceSeries::new(
            keep.iter().map(|&i| s.dates()[i]).collect(),
            keep.iter().map(|&i| s.log_prices()[i]).collect(),
        )
        .unwrap();
        let (f, gaps) = fill_gaps(&holed, 10);
        assert_eq!(f, holed);
        assert_eq!(gaps.len(), 1);
        assert!(!gaps[0].filled);
        assert_eq!(gaps[0].start, s.dates()[40]);
        assert_eq!(gaps[0].end, s.dates()[59]);
    }

    #[test]
    fn window_semantics() {
        let s = business_series("2014-06-02", "2015-12-31");
        let all = s.window(s.first_date(), s.last_date()).unwrap();
        assert_eq!(all, s);

        let t2 = d("2015-06-12");
        let w = s.window(t2 - Duration::days(180), t2).unwrap();
        let expected = s
            .dates()
            .iter()
            .filter(|x| **x >= t2 - Duration::days(180) && **x <= t2)
            .count();
        assert_eq!(w.len(), expected);
        assert_eq!(w.origin(), s.origin());
        assert_eq!(w.times()[0], s.time_of(w.first_date()));

        assert!(matches!(
            s.window(d("2016-02-01"), d("2016-03-01")),
            Err(SeriesError::EmptyWindow { .. })
        ));
        assert!(matches!(
            s.window(t2, t2),
            Err(SeriesError::InvalidRange { .. })
        ));
        assert!(matches!(
            s.window(d("2014-05-01"), t2),
            Err(SeriesError::OutOfSpan { .. })
        ));
    }

    #[test]
    fn observation_floor() {
        let s = business_series("2015-01-05", "2015-03-06");
        let w = Window::ending_at(d("2015-03-06"), 20).unwrap();
        assert!(matches!(
            s.calibration_window(&w, DEFAULT_MIN_OBSERVATIONS),
            Err(SeriesError::InsufficientData { .. })
        ));
        assert!(s.calibration_window(&w, 5).is_ok());
        assert_eq!(w.dt(), 20);
    }

    #[test]
    fn csv_round_trip() {
        let s = business_series("2015-01-05", "2015-02-06");
        let mut buf = Vec::new();
        write_csv(&s, &mut buf).unwrap();
        let back = read_csv(buf.as_slice()).unwrap();
        assert_eq!(back.dates(), s.dates());
        for (a, b) in back.log_prices().iter().zip(s.log_prices()) {
            assert!((a - b).abs() < 1e-15);
        }
    }
}
