use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use crate::error::{Error, Result};

/// Segment length in samples (5 s at 100 Hz).
pub const SEGMENT_LEN: usize = 500;
/// Welch window: 3 s at 100 Hz, also the FFT length.
pub const WELCH_WINDOW: usize = 300;
/// 75 % overlap between consecutive windows.
pub const WELCH_OVERLAP: usize = 225;
/// Bins 0..=75 cover 0-25 Hz at 1/3 Hz spacing.
pub const SPECTRUM_BINS: usize = 76;
pub const TREMOR_BAND_HZ: (f64, f64) = (3.0, 7.0);

const FS: f64 = 100.0;

/// Summed-axes Welch power spectral density over 0-25 Hz.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Spectrum(pub [f64; SPECTRUM_BINS]);

impl Spectrum {
    pub const ZERO: Spectrum = Spectrum([0.0; SPECTRUM_BINS]);

    pub fn bin_hz(k: usize) -> f64 {
        k as f64 * FS / WELCH_WINDOW as f64
    }
}

fn plan() -> &'static Arc<dyn Fft<f64>> {
    static PLAN: OnceLock<Arc<dyn Fft<f64>>> = OnceLock::new();
    PLAN.get_or_init(|| FftPlanner::new().plan_fft_forward(WELCH_WINDOW))
}

fn hann() -> &'static [f64; WELCH_WINDOW] {
    static WIN: OnceLock<[f64; WELCH_WINDOW]> = OnceLock::new();
    WIN.get_or_init(|| {
        let mut w = [0.0; WELCH_WINDOW];
        for (n, v) in w.iter_mut().enumerate() {
            *v = 0.5 - 0.5 * (2.0 * PI * n as f64 / WELCH_WINDOW as f64).cos();
        }
        w
    })
}

/// One-sided PSD of a single axis, accumulated into `acc`.
fn accumulate_axis(x: &[f64], acc: &mut [f64; SPECTRUM_BINS]) {
    let win = hann();
    let fft = plan();
    let step = WELCH_WINDOW - WELCH_OVERLAP;
    let starts: Vec<usize> = (0..=x.len() - WELCH_WINDOW).step_by(step).collect();
    let power: f64 = win.iter().map(|w| w * w).sum();
    let scale = 1.0 / (FS * power * starts.len() as f64);
    let mut buf = vec![Complex::new(0.0, 0.0); WELCH_WINDOW];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for s in starts {
        for (b, (&v, &w)) in buf.iter_mut().zip(x[s..s + WELCH_WINDOW].iter().zip(win.iter())) {
            *b = Complex::new(v * w, 0.0);
        }
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (k, a) in acc.iter_mut().enumerate() {
            // every kept bin except DC has a mirrored negative-frequency twin
            let one_sided = if k == 0 { 1.0 } else { 2.0 };
            *a += one_sided * scale * buf[k].norm_sqr();
        }
    }
}

/// Welch spectrum of a 3 x 500 segment: Hann windows of 300 samples with
/// 225 samples overlap, averaged per axis, then summed over axes.
pub fn welch_spectrum(segment: [&[f64]; 3]) -> Result<Spectrum> {
    if let Some(bad) = segment.iter().find(|a| a.len() != SEGMENT_LEN) {
        return Err(Error::BadWindow(bad.len()));
    }
    let mut acc = [0.0; SPECTRUM_BINS];
    for axis in segment {
        accumulate_axis(axis, &mut acc);
    }
    Ok(Spectrum(acc))
}

fn band_bins(lo: f64, hi: f64) -> std::ops::RangeInclusive<usize> {
    let per_hz = WELCH_WINDOW as f64 / FS;
    let first = (lo * per_hz - 1e-9).ceil().max(0.0) as usize;
    let last = ((hi * per_hz + 1e-9).floor() as usize).min(SPECTRUM_BINS - 1);
    first..=last
}

/// Sum of the coefficients whose bin frequency lies in `[lo, hi]` Hz.
pub fn band_energy(sp: &Spectrum, lo: f64, hi: f64) -> f64 {
    if !(lo < hi) {
        return 0.0;
    }
    sp.0[band_bins(lo, hi)].iter().sum()
}

pub fn total_energy(sp: &Spectrum) -> f64 {
    sp.0.iter().sum()
}
