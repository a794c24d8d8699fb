use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::ingest::{RawSession, MIN_RATE_HZ};

use super::fir::sinc;
use super::Session;

pub const TARGET_RATE_HZ: f64 = 100.0;
/// Largest denominator considered when approximating the rate ratio.
const MAX_DENOMINATOR: u64 = 1000;
/// Zero crossings of the anti-alias sinc kept on each side of its centre.
const ZERO_CROSSINGS: f64 = 16.0;

/// Nearest fraction `p / q` to `ratio` with `q <= 1000`, in lowest terms.
/// Ties go to the smaller denominator.
pub fn rational_approx(ratio: f64) -> (u64, u64) {
    let mut best = (1u64, 1u64);
    let mut best_err = f64::INFINITY;
    for q in 1..=MAX_DENOMINATOR {
        let p = (ratio * q as f64).round().max(1.0) as u64;
        let err = (p as f64 / q as f64 - ratio).abs();
        if err < best_err {
            best = (p, q);
            best_err = err;
        }
    }
    let g = gcd(best.0, best.1);
    (best.0 / g, best.1 / g)
}

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

fn blackman(i: usize, n: usize) -> f64 {
    let x = 2.0 * PI * i as f64 / (n - 1) as f64;
    0.42 - 0.5 * x.cos() + 0.08 * (2.0 * x).cos()
}

/// Linear interpolation of the complete rows onto `t0 + k / fs`.
fn uniform_grid(raw: &RawSession, fs: f64) -> Result<[Vec<f64>; 3]> {
    let rows: Vec<usize> = (0..raw.samples.len()).filter(|&i| raw.is_complete_row(i)).collect();
    if rows.len() < 2 {
        return Err(Error::InsufficientData("fewer than 2 complete rows".into()));
    }
    let t0 = raw.timestamps[rows[0]];
    let t_end = raw.timestamps[*rows.last().unwrap()];
    let n = ((t_end - t0) * fs + 1e-6).floor() as usize + 1;
    let mut out = [Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n)];
    let mut j = 0;
    for k in 0..n {
        let t = t0 + k as f64 / fs;
        while j + 2 < rows.len() && raw.timestamps[rows[j + 1]] <= t {
            j += 1;
        }
        let (a, b) = (rows[j], rows[j + 1]);
        let (ta, tb) = (raw.timestamps[a], raw.timestamps[b]);
        let w = if tb > ta { ((t - ta) / (tb - ta)).clamp(0.0, 1.0) } else { 0.0 };
        for (axis, buf) in out.iter_mut().enumerate() {
            let (xa, xb) = (raw.samples[a][axis], raw.samples[b][axis]);
            buf.push(xa + w * (xb - xa));
        }
    }
    Ok(out)
}

/// Polyphase rate conversion by `p / q` with a Blackman-windowed sinc
/// anti-alias filter at `cutoff` Hz. Every output is normalised by the sum
/// of the taps of its phase, so constants pass unchanged; the signal is
/// extended with its edge values.
fn polyphase(x: &[f64], p: usize, q: usize, fs_in: f64, cutoff: f64) -> Vec<f64> {
    let fs_up = p as f64 * fs_in;
    let wc = cutoff / fs_up;
    let half = (ZERO_CROSSINGS / (2.0 * wc)).ceil() as usize;
    let len = 2 * half + 1;
    let h: Vec<f64> =
        (0..len).map(|i| 2.0 * wc * sinc(2.0 * wc * (i as f64 - half as f64)) * blackman(i, len)).collect();
    let n_out = (x.len() - 1) * p / q + 1;
    let last = x.len() as i64 - 1;
    let (half_i, p_i) = (half as i64, p as i64);
    let mut y = Vec::with_capacity(n_out);
    for m in 0..n_out as i64 {
        let c = m * q as i64;
        // inputs n with |c - n p| <= half
        let n_lo = (c - half_i).div_euclid(p_i) + i64::from((c - half_i).rem_euclid(p_i) != 0);
        let n_hi = (c + half_i).div_euclid(p_i);
        let (mut acc, mut norm) = (0.0, 0.0);
        for n in n_lo..=n_hi {
            let tap = h[(half_i + c - n * p_i) as usize];
            acc += tap * x[n.clamp(0, last) as usize];
            norm += tap;
        }
        y.push(acc / norm);
    }
    y
}

/// Brings a session to a uniform 100 Hz grid: linear interpolation at the
/// estimated rate, then rational polyphase conversion to 100 Hz.
pub fn resample_to_100hz(raw: &RawSession, fs_est: f64) -> Result<Session> {
    if !(fs_est >= MIN_RATE_HZ) {
        return Err(Error::Precondition(format!("sampling rate {fs_est} Hz is below {MIN_RATE_HZ} Hz")));
    }
    let grid = uniform_grid(raw, fs_est)?;
    let (p, q) = rational_approx(TARGET_RATE_HZ / fs_est);
    let samples = if p == q {
        grid
    } else {
        let cutoff = 0.9 * (TARGET_RATE_HZ / 2.0).min(fs_est / 2.0);
        grid.map(|axis| polyphase(&axis, p as usize, q as usize, fs_est, cutoff))
    };
    Ok(Session { subject_id: raw.subject_id.clone(), session_id: raw.source_path.clone(), fs: TARGET_RATE_HZ, samples })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rational_examples() {
        assert_eq!(rational_approx(100.0 / 120.0), (5, 6));
        assert_eq!(rational_approx(0.5), (1, 2));
        assert_eq!(rational_approx(2.0), (2, 1));
        assert_eq!(rational_approx(100.0 / 128.0), (25, 32));
        assert_eq!(rational_approx(1.0), (1, 1));
        let (p, q) = rational_approx(100.0 / 119.7);
        assert!(q <= 1000);
        assert!((p as f64 / q as f64 - 100.0 / 119.7).abs() < 1e-5);
    }
}
