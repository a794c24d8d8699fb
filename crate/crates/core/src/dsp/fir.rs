use std::f64::consts::PI;

use super::Session;

pub const HIGHPASS_ORDER: usize = 512;
pub const HIGHPASS_CUTOFF_HZ: f64 = 1.0;

/// Linear-phase FIR filter.
#[derive(Debug, Clone, PartialEq)]
pub struct FirFilter {
    pub taps: Vec<f64>,
    pub fs: f64,
}

impl FirFilter {
    /// Magnitude of the frequency response at `f` Hz.
    pub fn magnitude(&self, f: f64) -> f64 {
        let w = 2.0 * PI * f / self.fs;
        let (mut re, mut im) = (0.0, 0.0);
        for (n, &h) in self.taps.iter().enumerate() {
            re += h * (w * n as f64).cos();
            im -= h * (w * n as f64).sin();
        }
        re.hypot(im)
    }

    pub fn group_delay(&self) -> usize {
        (self.taps.len() - 1) / 2
    }

    pub fn taps_csv(&self) -> String {
        let mut out = String::from("index,tap\n");
        for (i, t) in self.taps.iter().enumerate() {
            out.push_str(&format!("{i},{t:.17e}\n"));
        }
        out
    }
}

pub(crate) fn sinc(x: f64) -> f64 {
    if x == 0.0 {
        1.0
    } else {
        (PI * x).sin() / (PI * x)
    }
}

/// Order-512 high-pass at 1 Hz (fs = 100 Hz): a Hamming-windowed sinc
/// low-pass, normalised to unit DC gain, subtracted from a delayed impulse.
pub fn design_highpass() -> FirFilter {
    let fs = 100.0;
    let n = HIGHPASS_ORDER + 1;
    let mid = HIGHPASS_ORDER / 2;
    let wc = HIGHPASS_CUTOFF_HZ / fs;
    let mut lp = vec![0.0; n];
    // compute one half and mirror so the taps are exactly symmetric
    for i in 0..=mid {
        let d = i as f64 - mid as f64;
        let win = 0.54 - 0.46 * (2.0 * PI * i as f64 / HIGHPASS_ORDER as f64).cos();
        let v = 2.0 * wc * sinc(2.0 * wc * d) * win;
        lp[i] = v;
        lp[HIGHPASS_ORDER - i] = v;
    }
    let sum: f64 = lp.iter().sum();
    let mut taps: Vec<f64> = lp.iter().map(|v| -v / sum).collect();
    taps[mid] += 1.0;
    FirFilter { taps, fs }
}

fn reflect(i: isize, n: usize) -> usize {
    let n = n as isize;
    if n == 1 {
        return 0;
    }
    let period = 2 * (n - 1);
    let mut j = i.rem_euclid(period);
    if j >= n {
        j = period - j;
    }
    j as usize
}

/// Zero-phase application of a symmetric FIR filter to every axis.
///
/// Each axis is reflect-padded by the group delay on both sides, filtered
/// and cropped back to its original length.
pub fn remove_gravity(s: &Session, f: &FirFilter) -> Session {
    let half = f.group_delay();
    let samples = s.samples.clone().map(|axis| {
        let n = axis.len();
        if n == 0 {
            return axis;
        }
        let padded: Vec<f64> = (0..n + 2 * half).map(|i| axis[reflect(i as isize - half as isize, n)]).collect();
        (0..n).map(|i| padded[i..i + f.taps.len()].iter().zip(&f.taps).map(|(x, h)| x * h).sum()).collect()
    });
    Session { subject_id: s.subject_id.clone(), session_id: s.session_id.clone(), fs: s.fs, samples }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn reflection_indices() {
        let idx: Vec<usize> = (-3..8).map(|i| reflect(i, 5)).collect();
        assert_eq!(idx, vec![3, 2, 1, 0, 1, 2, 3, 4, 3, 2, 1]);
        assert_eq!(reflect(-4, 1), 0);
    }
}
