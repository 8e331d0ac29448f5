//! Online ECUSUM / CUSUM over an externally supplied stream of observation
//! increments.
//!
//! Input is CSV with a required header `t,dxi,occ`: the timestamp (strictly
//! increasing, the first interval starts at 0), the increment of the
//! observation process over `(prev_t, t]`, and `1` when an occurrence was
//! observed at `t`. With [`InputForm::Levels`] the header is `t,xi,occ` and
//! the second column carries levels of the observation process instead.

use std::io::Read;

use thiserror::Error;

use crate::simulate::{EcusumState, Variant};
use crate::types::{loglik_increment, ParamError, Threshold};

/// One observation interval ending at `t`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StreamRecord {
    pub t: f64,
    pub dxi: f64,
    pub occ: bool,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AlarmReport {
    /// Timestamp of the first record at which the statistic reached `nu`.
    pub alarm_time: Option<f64>,
    pub final_y: f64,
    pub n_records: u64,
    pub n_occurrences: u64,
}

pub const ALARM_CSV_HEADER: &str = "alarm_time,final_y,n_records,n_occurrences";

impl AlarmReport {
    pub fn to_csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.alarm_time.map(|t| t.to_string()).unwrap_or_default(),
            self.final_y,
            self.n_records,
            self.n_occurrences
        )
    }

    pub fn to_text(&self) -> String {
        let alarm = match self.alarm_time {
            Some(t) => t.to_string(),
            None => "none".to_string(),
        };
        format!(
            "alarm_time: {alarm}\nfinal_y: {}\nn_records: {}\nn_occurrences: {}\n",
            self.final_y, self.n_records, self.n_occurrences
        )
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StreamError {
    #[error("line {line}: {reason}")]
    Malformed { line: u64, reason: String },
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Param(#[from] ParamError),
}

/// Why a single record was refused.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum RecordError {
    #[error("timestamp {t} is not after the previous timestamp {prev}")]
    NonIncreasing { t: f64, prev: f64 },
    #[error("{0} is not finite")]
    NonFinite(&'static str),
    #[error("detector already alarmed")]
    AlreadyStopped,
}

/// Constant-memory detector fed one record at a time.
#[derive(Debug, Clone)]
pub struct StreamDetector {
    mu: f64,
    nu: Threshold,
    variant: Variant,
    state: EcusumState,
    prev_t: f64,
    n_records: u64,
    n_occurrences: u64,
    alarm_time: Option<f64>,
}

impl StreamDetector {
    pub fn new(mu: f64, nu: Threshold, variant: Variant) -> Result<Self, ParamError> {
        if !mu.is_finite() {
            return Err(ParamError::NonFinite { name: "mu", value: mu });
        }
        if mu == 0.0 {
            return Err(ParamError::ZeroDrift);
        }
        Ok(Self {
            mu,
            nu,
            variant,
            state: EcusumState::new(0.0),
            prev_t: 0.0,
            n_records: 0,
            n_occurrences: 0,
            alarm_time: None,
        })
    }

    pub fn y(&self) -> f64 {
        self.state.y
    }

    pub fn alarm_time(&self) -> Option<f64> {
        self.alarm_time
    }

    /// Applies `du = -mu^2 (t - prev_t)/2 + mu dxi`, then the reset rule of
    /// the variant. Returns the alarm time once the statistic reaches `nu`.
    pub fn push(&mut self, record: StreamRecord) -> Result<Option<f64>, RecordError> {
        if self.alarm_time.is_some() {
            return Err(RecordError::AlreadyStopped);
        }
        if !record.t.is_finite() {
            return Err(RecordError::NonFinite("t"));
        }
        if !record.dxi.is_finite() {
            return Err(RecordError::NonFinite("dxi"));
        }
        if record.t <= self.prev_t {
            return Err(RecordError::NonIncreasing {
                t: record.t,
                prev: self.prev_t,
            });
        }
        let elapsed = record.t - self.prev_t;
        let du = loglik_increment(self.mu, elapsed, record.dxi);
        self.state = self.variant.step(self.state, elapsed, du, record.occ, self.nu);
        self.prev_t = record.t;
        self.n_records += 1;
        if record.occ {
            self.n_occurrences += 1;
        }
        if self.state.stopped {
            self.alarm_time = Some(record.t);
        }
        Ok(self.alarm_time)
    }

    pub fn report(&self) -> AlarmReport {
        AlarmReport {
            alarm_time: self.alarm_time,
            final_y: self.state.y,
            n_records: self.n_records,
            n_occurrences: self.n_occurrences,
        }
    }
}

/// Runs the detector until the first alarm or the end of `records`.
/// Errors carry the 1-based position of the offending record.
pub fn run_detector<I>(records: I, mu: f64, nu: Threshold, variant: Variant) -> Result<AlarmReport, StreamError>
where
    I: IntoIterator<Item = StreamRecord>,
{
    let mut detector = StreamDetector::new(mu, nu, variant)?;
    for (i, record) in records.into_iter().enumerate() {
        detector.push(record).map_err(|e| StreamError::Malformed {
            line: i as u64 + 1,
            reason: e.to_string(),
        })?;
        if detector.alarm_time().is_some() {
            break;
        }
    }
    Ok(detector.report())
}

/// Whether the second CSV column holds increments or levels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum InputForm {
    #[default]
    Increments,
    /// Levels `xi_t` with `xi_0 = 0`; differenced on the fly.
    Levels,
}

impl InputForm {
    fn header(self) -> [&'static str; 3] {
        match self {
            InputForm::Increments => ["t", "dxi", "occ"],
            InputForm::Levels => ["t", "xi", "occ"],
        }
    }
}

fn malformed(line: u64, reason: impl Into<String>) -> StreamError {
    StreamError::Malformed {
        line,
        reason: reason.into(),
    }
}

fn csv_error(err: csv::Error) -> StreamError {
    let line = err.position().map(|p| p.line()).unwrap_or(0);
    match err.kind() {
        csv::ErrorKind::Io(e) => StreamError::Io(e.to_string()),
        _ => malformed(line, err.to_string()),
    }
}

fn parse_field(value: &str, name: &str, line: u64) -> Result<f64, StreamError> {
    value
        .parse::<f64>()
        .map_err(|_| malformed(line, format!("field '{name}' is not a number: '{value}'")))
}

/// Reads `t,dxi,occ` CSV and runs the detector. The reader is consumed
/// lazily and processing ends at the first alarm.
pub fn run_detector_csv<R: Read>(
    reader: R,
    mu: f64,
    nu: Threshold,
    variant: Variant,
    form: InputForm,
) -> Result<AlarmReport, StreamError> {
    let mut detector = StreamDetector::new(mu, nu, variant)?;
    let mut csv = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(reader);

    let expected = form.header();
    let header = csv.headers().map_err(csv_error)?.clone();
    if header.is_empty() {
        // empty input: no header, no records
        return Ok(detector.report());
    }
    if header.iter().collect::<Vec<_>>() != expected {
        return Err(malformed(
            1,
            format!(
                "expected header '{}', found '{}'",
                expected.join(","),
                header.iter().collect::<Vec<_>>().join(",")
            ),
        ));
    }

    let mut prev_level = 0.0_f64;
    let mut row = csv::StringRecord::new();
    while csv.read_record(&mut row).map_err(csv_error)? {
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        if row.len() != 3 {
            return Err(malformed(line, format!("expected 3 fields, found {}", row.len())));
        }
        let t = parse_field(&row[0], "t", line)?;
        let second = parse_field(&row[1], expected[1], line)?;
        let occ = match &row[2] {
            "0" => false,
            "1" => true,
            other => return Err(malformed(line, format!("field 'occ' must be 0 or 1, found '{other}'"))),
        };
        let dxi = match form {
            InputForm::Increments => second,
            InputForm::Levels => {
                let d = second - prev_level;
                prev_level = second;
                d
            }
        };
        detector
            .push(StreamRecord { t, dxi, occ })
            .map_err(|e| malformed(line, e.to_string()))?;
        if detector.alarm_time().is_some() {
            break;
        }
    }
    Ok(detector.report())
}
