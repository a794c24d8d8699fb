//! Signal conditioning and spectral features.

mod fir;
mod resample;
mod welch;

pub(crate) use fir::sinc;
pub use fir::{design_highpass, remove_gravity, FirFilter, HIGHPASS_CUTOFF_HZ, HIGHPASS_ORDER};
pub use resample::{rational_approx, resample_to_100hz, TARGET_RATE_HZ};
pub use welch::{
    band_energy, total_energy, welch_spectrum, Spectrum, SEGMENT_LEN, SPECTRUM_BINS, TREMOR_BAND_HZ, WELCH_OVERLAP,
    WELCH_WINDOW,
};

use crate::error::{Error, Result};
use crate::ingest::RawSession;

/// Seconds removed from each end of a session.
pub const EDGE_TRIM_S: f64 = 5.0;

/// Uniformly sampled 100 Hz session, one buffer per axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Session {
    pub subject_id: String,
    pub session_id: String,
    pub fs: f64,
    pub samples: [Vec<f64>; 3],
}

impl Session {
    pub fn len(&self) -> usize {
        self.samples[0].len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn duration(&self) -> f64 {
        self.len() as f64 / self.fs
    }
}

/// Removes `trim` seconds from both ends.
pub fn trim_edges(s: &Session, trim: f64) -> Result<Session> {
    if s.duration() <= 2.0 * trim {
        return Err(Error::TooShortAfterTrim(s.duration(), trim));
    }
    let cut = (trim * s.fs).round() as usize;
    let end = s.len() - cut;
    Ok(Session {
        subject_id: s.subject_id.clone(),
        session_id: s.session_id.clone(),
        fs: s.fs,
        samples: s.samples.clone().map(|axis| axis[cut..end].to_vec()),
    })
}

/// Resample, trim and remove gravity: the full conditioning chain for an
/// accepted session.
pub fn condition(raw: &RawSession, fs_est: f64, filter: &FirFilter) -> Result<Session> {
    let s = resample_to_100hz(raw, fs_est)?;
    let s = trim_edges(&s, EDGE_TRIM_S)?;
    Ok(remove_gravity(&s, filter))
}

/// Spectra as CSV, one row of 76 coefficients per segment.
pub fn spectra_csv<'a>(spectra: impl IntoIterator<Item = &'a Spectrum>) -> String {
    let mut out = (0..SPECTRUM_BINS).map(|k| format!("bin{k}")).collect::<Vec<_>>().join(",");
    out.push('\n');
    for sp in spectra {
        let row: Vec<String> = sp.0.iter().map(|v| format!("{v:.9e}")).collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}
