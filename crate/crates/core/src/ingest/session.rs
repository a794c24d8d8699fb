use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const MIN_DURATION_S: f64 = 20.0;
pub const MIN_RATE_HZ: f64 = 50.0;
pub const MAX_ABS_ACCEL: f64 = 100.0;
pub const MISSING_MAX: f64 = 0.10;

/// One accelerometer recording as read from disk.
///
/// Rows with a missing or non-finite component hold `NaN` in that axis.
#[derive(Debug, Clone, PartialEq)]
pub struct RawSession {
    pub subject_id: String,
    pub timestamps: Vec<f64>,
    pub samples: Vec<[f64; 3]>,
    pub source_path: String,
}

impl RawSession {
    pub fn new(subject_id: &str, source_path: &str, timestamps: Vec<f64>, samples: Vec<[f64; 3]>) -> Result<Self> {
        if timestamps.len() != samples.len() {
            return Err(Error::format("session", "timestamp and sample counts differ"));
        }
        if timestamps.is_empty() {
            return Err(Error::format("session", "no samples"));
        }
        if let Some(i) = timestamps.windows(2).position(|w| !(w[1] >= w[0])) {
            return Err(Error::format("session", format!("timestamp decreases at row {}", i + 1)));
        }
        Ok(RawSession { subject_id: subject_id.to_string(), timestamps, samples, source_path: source_path.to_string() })
    }

    /// Seconds between the first and last timestamp.
    pub fn duration(&self) -> f64 {
        self.timestamps.last().unwrap_or(&0.0) - self.timestamps.first().unwrap_or(&0.0)
    }

    pub fn is_complete_row(&self, i: usize) -> bool {
        self.samples[i].iter().all(|v| v.is_finite())
    }
}

fn parse_field(s: &str) -> Option<f64> {
    let s = s.trim();
    if s.is_empty() {
        return None;
    }
    s.parse::<f64>().ok()
}

/// Parses a session CSV with header `t,x,y,z` (seconds, m/s²).
///
/// Empty or unparseable acceleration fields become `NaN` and count as
/// missing values; the timestamp column must always be a finite number.
pub fn parse_session_csv(text: &str, subject_id: &str, source_path: &str) -> Result<RawSession> {
    let mut rdr =
        csv::ReaderBuilder::new().has_headers(true).flexible(true).trim(csv::Trim::All).from_reader(text.as_bytes());
    let header = rdr.headers().map_err(|e| Error::format("session csv", e.to_string()))?.clone();
    let cols: Vec<String> = header.iter().map(|h| h.to_ascii_lowercase()).collect();
    if cols != ["t", "x", "y", "z"] {
        return Err(Error::format("session csv", format!("expected header t,x,y,z, got {}", cols.join(","))));
    }
    let mut timestamps = Vec::new();
    let mut samples = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| Error::format("session csv", e.to_string()))?;
        let t = rec
            .get(0)
            .and_then(parse_field)
            .filter(|t| t.is_finite())
            .ok_or_else(|| Error::format("session csv", format!("row {}: bad timestamp", row + 1)))?;
        let mut xyz = [f64::NAN; 3];
        for (axis, v) in xyz.iter_mut().enumerate() {
            if let Some(x) = rec.get(axis + 1).and_then(parse_field).filter(|x| x.is_finite()) {
                *v = x;
            }
        }
        timestamps.push(t);
        samples.push(xyz);
    }
    RawSession::new(subject_id, source_path, timestamps, samples)
}

pub fn write_session_csv(raw: &RawSession) -> String {
    let mut out = String::from("t,x,y,z\n");
    for (t, s) in raw.timestamps.iter().zip(&raw.samples) {
        let f = |v: f64| if v.is_finite() { format!("{v:.6}") } else { String::new() };
        out.push_str(&format!("{t},{},{},{}\n", f(s[0]), f(s[1]), f(s[2])));
    }
    out
}

/// Sampling rate as the reciprocal of the median timestamp increment.
pub fn estimate_sampling_rate(timestamps: &[f64]) -> Result<f64> {
    if timestamps.len() < 2 {
        return Err(Error::InsufficientData(format!("{} timestamps, need at least 2", timestamps.len())));
    }
    let mut diffs: Vec<f64> = timestamps.windows(2).map(|w| w[1] - w[0]).collect();
    let bad = diffs.iter().filter(|d| !(**d > 0.0)).count();
    if 2 * bad > diffs.len() {
        return Err(Error::DegenerateClock(bad, diffs.len()));
    }
    diffs.sort_by(|a, b| a.total_cmp(b));
    let n = diffs.len();
    let median = if n % 2 == 1 { diffs[n / 2] } else { 0.5 * (diffs[n / 2 - 1] + diffs[n / 2]) };
    if !(median > 0.0) {
        return Err(Error::DegenerateClock(bad, n));
    }
    Ok(1.0 / median)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectionReason {
    TooShort,
    LowRate,
    ExtremeValues,
    MissingValues,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "verdict", content = "reason")]
pub enum Verdict {
    Accepted,
    Rejected(RejectionReason),
}

/// Outcome of the session quality rules, with the measured quantities.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RejectionReport {
    pub session_path: String,
    #[serde(flatten)]
    pub verdict: Verdict,
    pub duration_s: f64,
    pub fs_est: Option<f64>,
    pub missing_fraction: Option<f64>,
}

impl RejectionReport {
    pub fn accepted(&self) -> bool {
        self.verdict == Verdict::Accepted
    }
}

/// Fraction of samples missing relative to what the estimated rate implies.
pub fn missing_fraction(raw: &RawSession, fs_est: f64) -> f64 {
    let expected = (raw.duration() * fs_est).round() + 1.0;
    let present = (0..raw.samples.len()).filter(|&i| raw.is_complete_row(i)).count() as f64;
    ((expected - present) / expected).max(0.0)
}

/// Applies the rejection rules in order; the first rule that fires decides.
/// A clock whose rate cannot be estimated counts as a low rate.
pub fn validate_session(raw: &RawSession) -> RejectionReport {
    let duration_s = raw.duration();
    let fs = estimate_sampling_rate(&raw.timestamps).ok();
    let missing = fs.map(|f| missing_fraction(raw, f));
    let reject = |reason| Verdict::Rejected(reason);
    let verdict = if duration_s < MIN_DURATION_S {
        reject(RejectionReason::TooShort)
    } else if fs.is_none_or(|f| f < MIN_RATE_HZ) {
        reject(RejectionReason::LowRate)
    } else if raw.samples.iter().flatten().any(|v| v.is_finite() && v.abs() > MAX_ABS_ACCEL) {
        reject(RejectionReason::ExtremeValues)
    } else if missing.is_some_and(|m| m > MISSING_MAX) {
        reject(RejectionReason::MissingValues)
    } else {
        Verdict::Accepted
    };
    RejectionReport {
        session_path: raw.source_path.clone(),
        verdict,
        duration_s,
        fs_est: fs,
        missing_fraction: missing,
    }
}


#[cfg(test)]
mod report_tests {
    use super::*;

    #[test]
    fn report_json_round_trips() {
        let r = RejectionReport {
            session_path: "a.csv".into(),
            verdict: Verdict::Rejected(RejectionReason::LowRate),
            duration_s: 30.0,
            fs_est: Some(40.0),
            missing_fraction: None,
        };
        let s = serde_json::to_string(&r).unwrap();
        assert!(s.contains("\"verdict\":\"rejected\""));
        assert!(s.contains("\"reason\":\"low_rate\""));
        assert_eq!(serde_json::from_str::<RejectionReport>(&s).unwrap(), r);
        let ok = RejectionReport { verdict: Verdict::Accepted, ..r };
        let s = serde_json::to_string(&ok).unwrap();
        assert_eq!(serde_json::from_str::<RejectionReport>(&s).unwrap(), ok);
    }
}
