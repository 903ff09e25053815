//! Named real-valued time series, CSV ingestion, calendar alignment and
//! train/test splitting.

use std::collections::BTreeSet;
use std::ops::Range;
use std::path::Path;

use chrono::NaiveDate;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Real;

/// How timestamps were written in the source file. Internally every
/// timestamp is an integer day index.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum TimeKind {
    #[default]
    DayIndex,
    /// ISO `YYYY-MM-DD`, stored as days since 1970-01-01.
    Iso,
}

fn epoch() -> NaiveDate {
    NaiveDate::from_ymd_opt(1970, 1, 1).expect("valid epoch")
}

impl TimeKind {
    pub fn format(self, ts: i64) -> String {
        match self {
            TimeKind::DayIndex => ts.to_string(),
            TimeKind::Iso => (epoch() + chrono::Duration::days(ts))
                .format("%Y-%m-%d")
                .to_string(),
        }
    }
}

fn parse_timestamp(field: &str) -> Option<(i64, TimeKind)> {
    let field = field.trim();
    if let Ok(v) = field.parse::<i64>() {
        return Some((v, TimeKind::DayIndex));
    }
    NaiveDate::parse_from_str(field, "%Y-%m-%d")
        .ok()
        .map(|d| ((d - epoch()).num_days(), TimeKind::Iso))
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeSeries<T> {
    name: String,
    timestamps: Vec<i64>,
    values: Vec<T>,
    kind: TimeKind,
}

impl<T: Real> TimeSeries<T> {
    pub fn new(
        name: impl Into<String>,
        timestamps: Vec<i64>,
        values: Vec<T>,
        kind: TimeKind,
    ) -> Result<Self> {
        if timestamps.is_empty() || timestamps.len() != values.len() {
            return Err(Error::InvalidSeries(format!(
                "{} timestamps for {} values",
                timestamps.len(),
                values.len()
            )));
        }
        if let Some(w) = timestamps.windows(2).find(|w| w[1] <= w[0]) {
            return Err(Error::InvalidSeries(format!(
                "timestamps not strictly increasing at {}",
                kind.format(w[1])
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidSeries(format!("non-finite value at row {i}")));
        }
        Ok(Self {
            name: name.into(),
            timestamps,
            values,
            kind,
        })
    }

    /// Series indexed by `0..n`.
    pub fn from_values(name: impl Into<String>, values: Vec<T>) -> Result<Self> {
        let ts = (0..values.len() as i64).collect();
        Self::new(name, ts, values, TimeKind::DayIndex)
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn timestamps(&self) -> &[i64] {
        &self.timestamps
    }

    pub fn values(&self) -> &[T] {
        &self.values
    }

    pub fn kind(&self) -> TimeKind {
        self.kind
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    /// Writes `date,value`.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_io(path, e))?;
        w.write_record(["date", "value"])?;
        for (&t, v) in self.timestamps.iter().zip(&self.values) {
            w.write_record([self.kind.format(t), v.to_string()])?;
        }
        w.flush().map_err(|source| Error::Io {
            path: path.to_path_buf(),
            source,
        })?;
        Ok(())
    }
}

fn csv_io(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(source) => Error::Io {
            path: path.to_path_buf(),
            source,
        },
        other => Error::Parse {
            path: path.to_path_buf(),
            line: 0,
            message: format!("{other:?}"),
        },
    }
}

/// Reads one series from a headed CSV file. Rows are sorted by timestamp;
/// duplicate timestamps and non-finite values are rejected.
pub fn load_csv<T: Real>(
    path: &Path,
    time_column: &str,
    value_column: &str,
) -> Result<TimeSeries<T>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| csv_io(path, e))?;
    let headers = reader.headers()?.clone();
    let find = |name: &str| {
        headers
            .iter()
            .position(|h| h == name)
            .ok_or_else(|| Error::MissingColumn {
                path: path.to_path_buf(),
                column: name.to_string(),
            })
    };
    let (tc, vc) = (find(time_column)?, find(value_column)?);
    let mut rows: Vec<(i64, T)> = Vec::new();
    let mut kind: Option<TimeKind> = None;
    for record in reader.records() {
        let record = record?;
        let line = record.position().map_or(0, |p| p.line());
        let parse_err = |message: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            message,
        };
        let tfield = record.get(tc).unwrap_or("");
        let (ts, k) = parse_timestamp(tfield)
            .ok_or_else(|| parse_err(format!("cannot parse timestamp `{tfield}`")))?;
        match kind {
            None => kind = Some(k),
            Some(prev) if prev != k => {
                return Err(parse_err("mixed timestamp formats".into()));
            }
            _ => {}
        }
        let vfield = record.get(vc).unwrap_or("");
        let v: f64 = vfield
            .parse()
            .map_err(|_| parse_err(format!("cannot parse value `{vfield}`")))?;
        if !v.is_finite() {
            return Err(Error::NonFinite {
                path: path.to_path_buf(),
                line,
            });
        }
        rows.push((ts, T::lit(v)));
    }
    if rows.is_empty() {
        return Err(Error::NoData);
    }
    let kind = kind.unwrap_or_default();
    rows.sort_by_key(|r| r.0);
    if let Some(w) = rows.windows(2).find(|w| w[0].0 == w[1].0) {
        return Err(Error::DuplicateTimestamp {
            path: path.to_path_buf(),
            timestamp: kind.format(w[0].0),
        });
    }
    let name = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    let (ts, vs) = rows.into_iter().unzip();
    TimeSeries::new(name, ts, vs, kind)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum AlignPolicy {
    /// Keep only timestamps present in every series.
    #[default]
    Inner,
    /// Union of timestamps from the latest first observation onward;
    /// gaps carry the last observed value.
    ForwardFill,
}

/// Several series on a common calendar, stored column-wise.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedSeries<T> {
    pub names: Vec<String>,
    pub timestamps: Vec<i64>,
    pub kind: TimeKind,
    pub columns: Vec<Vec<T>>,
}

impl<T: Real> AlignedSeries<T> {
    pub fn rows(&self) -> usize {
        self.timestamps.len()
    }

    pub fn column(&self, i: usize) -> &[T] {
        &self.columns[i]
    }

    pub fn slice(&self, range: Range<usize>) -> Self {
        Self {
            names: self.names.clone(),
            timestamps: self.timestamps[range.clone()].to_vec(),
            kind: self.kind,
            columns: self
                .columns
                .iter()
                .map(|c| c[range.clone()].to_vec())
                .collect(),
        }
    }

    /// Number of leading rows whose timestamp is `<= ts`.
    pub fn rows_through(&self, ts: i64) -> usize {
        self.timestamps.partition_point(|&t| t <= ts)
    }
}

pub fn align<T: Real>(series: &[TimeSeries<T>], policy: AlignPolicy) -> Result<AlignedSeries<T>> {
    if series.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "alignment needs at least 2 series, got {}",
            series.len()
        )));
    }
    let kind = series[0].kind();
    if series.iter().any(|s| s.kind() != kind) {
        return Err(Error::InvalidArgument(
            "series mix ISO dates and day indices".into(),
        ));
    }
    let timestamps: Vec<i64> = match policy {
        AlignPolicy::Inner => {
            let mut common: BTreeSet<i64> = series[0].timestamps().iter().copied().collect();
            for s in &series[1..] {
                let other: BTreeSet<i64> = s.timestamps().iter().copied().collect();
                common = common.intersection(&other).copied().collect();
            }
            common.into_iter().collect()
        }
        AlignPolicy::ForwardFill => {
            let start = series
                .iter()
                .map(|s| s.timestamps()[0])
                .max()
                .expect("non-empty");
            let union: BTreeSet<i64> = series
                .iter()
                .flat_map(|s| s.timestamps().iter().copied())
                .filter(|&t| t >= start)
                .collect();
            union.into_iter().collect()
        }
    };
    if timestamps.is_empty() {
        return Err(Error::EmptyIntersection);
    }
    let columns = series
        .iter()
        .map(|s| {
            timestamps
                .iter()
                .map(|&t| {
                    // Last observation at or before t; exists because t >= first timestamp.
                    let i = s.timestamps().partition_point(|&x| x <= t) - 1;
                    s.values()[i]
                })
                .collect()
        })
        .collect();
    Ok(AlignedSeries {
        names: series.iter().map(|s| s.name().to_string()).collect(),
        timestamps,
        kind,
        columns,
    })
}

/// Train and test blocks; the first `history` rows of `test` are copied
/// from the end of the training period to seed delay lines.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub train: AlignedSeries<T>,
    pub test: AlignedSeries<T>,
    pub history: usize,
}

pub fn split<T: Real>(
    data: &AlignedSeries<T>,
    train: Range<usize>,
    test: Range<usize>,
    history: usize,
) -> Result<Split<T>> {
    let n = data.rows();
    if train.start >= train.end || test.start >= test.end {
        return Err(Error::InvalidRange("empty train or test range".into()));
    }
    if train.end > n || test.end > n {
        return Err(Error::InvalidRange(format!(
            "range exceeds {n} available rows"
        )));
    }
    if train.end > test.start {
        return Err(Error::InvalidRange(
            "training range must end before the test range begins".into(),
        ));
    }
    let history = history.min(test.start);
    Ok(Split {
        train: data.slice(train),
        test: data.slice(test.start - history..test.end),
        history,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::io::Write;

    fn series(name: &str, ts: &[i64], vs: &[f64]) -> TimeSeries<f64> {
        TimeSeries::new(name, ts.to_vec(), vs.to_vec(), TimeKind::DayIndex).unwrap()
    }

    fn write(dir: &tempfile::TempDir, name: &str, body: &str) -> std::path::PathBuf {
        let p = dir.path().join(name);
        let mut f = std::fs::File::create(&p).unwrap();
        f.write_all(body.as_bytes()).unwrap();
        p
    }

    #[test]
    fn load_well_formed() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            &dir,
            "x.csv",
            "date,value\n2014-01-02,1.5\n2014-01-03,2\n2014-01-06,2.5\n",
        );
        let s: TimeSeries<f64> = load_csv(&p, "date", "value").unwrap();
        assert_eq!(s.len(), 3);
        assert_eq!(s.kind(), TimeKind::Iso);
        assert_eq!(s.values(), &[1.5, 2.0, 2.5]);
        assert_eq!(s.timestamps()[2] - s.timestamps()[1], 3);
        assert_eq!(s.kind().format(s.timestamps()[0]), "2014-01-02");
        assert_eq!(s.name(), "x");
    }

    #[test]
    fn load_rejects_duplicates_and_nan() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(&dir, "d.csv", "date,value\n2014-01-02,1\n2014-01-02,2\n");
        let err = load_csv::<f64>(&p, "date", "value").unwrap_err();
        assert!(err.to_string().contains("2014-01-02"), "{err}");

        let p = write(&dir, "n.csv", "date,value\n1,1.0\n2,NaN\n");
        match load_csv::<f64>(&p, "date", "value") {
            Err(Error::NonFinite { line, .. }) => assert_eq!(line, 3),
            other => panic!("unexpected {other:?}"),
        }

        let p = write(&dir, "b.csv", "date,value\n1,abc\n");
        match load_csv::<f64>(&p, "date", "value") {
            Err(Error::Parse { line, .. }) => assert_eq!(line, 2),
            other => panic!("unexpected {other:?}"),
        }
        assert!(matches!(
            load_csv::<f64>(&p, "date", "close"),
            Err(Error::MissingColumn { .. })
        ));
        assert!(matches!(
            load_csv::<f64>(&dir.path().join("missing.csv"), "date", "value"),
            Err(Error::Io { .. })
        ));
    }

    #[test]
    fn align_policies() {
        let a = series("a", &[1, 2, 3], &[10.0, 20.0, 30.0]);
        let b = series("b", &[2, 3, 4], &[1.0, 2.0, 3.0]);
        let same = align(&[a.clone(), a.clone()], AlignPolicy::Inner).unwrap();
        assert_eq!(same.timestamps, vec![1, 2, 3]);
        assert_eq!(same.columns[0], a.values());

        let inner = align(&[a.clone(), b.clone()], AlignPolicy::Inner).unwrap();
        assert_eq!(inner.timestamps, vec![2, 3]);
        assert_eq!(inner.columns, vec![vec![20.0, 30.0], vec![1.0, 2.0]]);

        let ff = align(&[a.clone(), b], AlignPolicy::ForwardFill).unwrap();
        assert_eq!(ff.timestamps, vec![2, 3, 4]);
        assert_eq!(ff.columns[0], vec![20.0, 30.0, 30.0]);

        let c = series("c", &[7, 8], &[0.0, 0.0]);
        assert!(matches!(
            align(&[a.clone(), c], AlignPolicy::Inner),
            Err(Error::EmptyIntersection)
        ));
        assert!(align(&[a], AlignPolicy::Inner).is_err());
    }

    #[test]
    fn split_cases() {
        let a = series(
            "a",
            &[0, 1, 2, 3, 4, 5, 6, 7, 8, 9],
            &[0., 1., 2., 3., 4., 5., 6., 7., 8., 9.],
        );
        let b = a.clone();
        let data = align(&[a, b], AlignPolicy::Inner).unwrap();

        let s = split(&data, 0..6, 6..10, 2).unwrap();
        assert_eq!(s.train.columns[0], vec![0., 1., 2., 3., 4., 5.]);
        assert_eq!(s.test.columns[0], vec![4., 5., 6., 7., 8., 9.]);
        assert_eq!(s.history, 2);

        let s = split(&data, 0..3, 5..7, 0).unwrap();
        assert_eq!(s.test.timestamps, vec![5, 6]);

        let s = split(&data, 2..4, 4..10, 10).unwrap();
        assert_eq!(s.history, 4);
        assert_eq!(s.test.rows(), 10);

        assert!(split(&data, 0..6, 5..10, 0).is_err());
        assert!(split(&data, 0..6, 6..11, 0).is_err());
    }

    #[test]
    fn inner_is_subset_of_inputs() {
        let a = series("a", &[1, 3, 5, 7, 9, 11], &[0.0; 6]);
        let b = series("b", &[2, 3, 4, 5, 9, 12], &[0.0; 6]);
        let c = series("c", &[3, 5, 9, 10], &[0.0; 4]);
        let out = align(&[a.clone(), b.clone(), c.clone()], AlignPolicy::Inner).unwrap();
        for t in &out.timestamps {
            for s in [&a, &b, &c] {
                assert!(s.timestamps().contains(t));
            }
        }
        assert_eq!(out.timestamps, vec![3, 5, 9]);
    }

    #[test]
    fn csv_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let s = TimeSeries::new(
            "y",
            vec![16000, 16001, 16004],
            vec![1.25, -3.0, 7.5],
            TimeKind::Iso,
        )
        .unwrap();
        let p = dir.path().join("y.csv");
        s.write_csv(&p).unwrap();
        let back: TimeSeries<f64> = load_csv(&p, "date", "value").unwrap();
        assert_eq!(back, s);
    }
}
