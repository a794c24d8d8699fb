//! Synthetic accelerometer corpus with known tremor bursts.
//!
//! Every session carries slowly rotating gravity plus low-pass Gaussian
//! noise. Positive subjects additionally receive amplitude-modulated
//! rotational bursts (equal sinusoids on the three axes, a third of a cycle
//! apart), each exactly covering one analysis segment of the conditioned
//! signal.

use std::f64::consts::PI;
use std::path::Path;

use rand::seq::{index, SliceRandom};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::dsp::{EDGE_TRIM_S, SEGMENT_LEN, TARGET_RATE_HZ};
use crate::error::{Error, Result};
use crate::fsutil::write_atomic;
use crate::ingest::{write_session_csv, RawSession};
use crate::seed::derive_seed;

const GRAVITY: f64 = 9.81;
const NOISE_CUTOFF_HZ: f64 = 15.0;
const NOISE_TAPS: usize = 101;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthSpec {
    pub n_subjects: usize,
    pub positive_fraction: f64,
    pub sessions_per_subject: usize,
    pub session_seconds: f64,
    pub tremor_freq: f64,
    pub tremor_amplitude: f64,
    pub burst_fraction: f64,
    pub noise_level: f64,
    /// Device rates, cycled over sessions.
    pub sample_rates: Vec<f64>,
    pub seed: u64,
}

impl Default for SynthSpec {
    fn default() -> Self {
        SynthSpec {
            n_subjects: 20,
            positive_fraction: 0.5,
            sessions_per_subject: 2,
            session_seconds: 165.0,
            tremor_freq: 5.0,
            tremor_amplitude: 1.5,
            burst_fraction: 0.05,
            noise_level: 0.3,
            sample_rates: vec![100.0, 128.0, 50.0],
            seed: 7,
        }
    }
}

impl SynthSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Precondition(m));
        if !(self.burst_fraction > 0.0 && self.burst_fraction <= 1.0) {
            return bad(format!("burst_fraction {} outside (0, 1]", self.burst_fraction));
        }
        if !(3.0..=7.0).contains(&self.tremor_freq) {
            return bad(format!("tremor_freq {} outside [3, 7] Hz", self.tremor_freq));
        }
        if !(0.0..=1.0).contains(&self.positive_fraction) {
            return bad(format!("positive_fraction {} outside [0, 1]", self.positive_fraction));
        }
        if self.n_subjects == 0 || self.sessions_per_subject == 0 {
            return bad("need at least one subject and one session".into());
        }
        if self.segments_per_session() == 0 {
            return bad(format!("sessions of {} s hold no full segment", self.session_seconds));
        }
        if self.sample_rates.is_empty() || self.sample_rates.iter().any(|&r| !(r > 0.0)) {
            return bad("sample_rates must be positive".into());
        }
        if !(self.noise_level >= 0.0 && self.tremor_amplitude >= 0.0) {
            return bad("noise_level and tremor_amplitude must be non-negative".into());
        }
        Ok(())
    }

    /// Segments in one conditioned session.
    pub fn segments_per_session(&self) -> usize {
        let kept = (self.session_seconds - 2.0 * EDGE_TRIM_S).max(0.0);
        ((kept * TARGET_RATE_HZ).round() as usize) / SEGMENT_LEN
    }

    pub fn n_positive(&self) -> usize {
        (self.n_subjects as f64 * self.positive_fraction).round() as usize
    }

    /// Bursts injected into each positive subject.
    pub fn bursts_per_subject(&self) -> usize {
        let total = self.segments_per_session() * self.sessions_per_subject;
        ((self.burst_fraction * total as f64).ceil() as usize).clamp(1, total)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BurstRef {
    pub session: String,
    /// Sample offset within the conditioned session.
    pub offset: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SubjectTruth {
    pub id: String,
    pub label: u8,
    pub bursts: Vec<BurstRef>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub spec: SynthSpec,
    pub subjects: Vec<SubjectTruth>,
}

impl Truth {
    pub fn subject(&self, id: &str) -> Option<&SubjectTruth> {
        self.subjects.iter().find(|s| s.id == id)
    }
}

#[derive(Serialize)]
struct ManifestSubject<'a> {
    id: &'a str,
    updrs16: u8,
    updrs20: [u8; 2],
    updrs21: [u8; 2],
    sp_expert: u8,
    sessions: &'a [String],
}

#[derive(Serialize)]
struct Manifest<'a> {
    subjects: Vec<ManifestSubject<'a>>,
}

fn lowpass_taps(cutoff: f64, fs: f64) -> Vec<f64> {
    let wc = (cutoff / fs).min(0.5);
    let mid = (NOISE_TAPS / 2) as f64;
    let taps: Vec<f64> = (0..NOISE_TAPS)
        .map(|i| {
            let d = i as f64 - mid;
            let win = 0.54 - 0.46 * (2.0 * PI * i as f64 / (NOISE_TAPS - 1) as f64).cos();
            2.0 * wc * crate::dsp::sinc(2.0 * wc * d) * win
        })
        .collect();
    // unit output variance for unit white input
    let norm = taps.iter().map(|t| t * t).sum::<f64>().sqrt();
    taps.into_iter().map(|t| t / norm).collect()
}

fn band_limited_noise(rng: &mut ChaCha8Rng, n: usize, fs: f64, std: f64) -> Vec<f64> {
    let taps = lowpass_taps(NOISE_CUTOFF_HZ, fs);
    let white: Vec<f64> = (0..n + taps.len()).map(|_| StandardNormal.sample(rng)).collect();
    (0..n).map(|i| std * taps.iter().zip(&white[i..]).map(|(t, w)| t * w).sum::<f64>()).collect()
}

/// Per-axis phase offsets of the tremor: a circular rotation of the wrist.
const TREMOR_PHASES: [f64; 3] = [0.0, 2.0 * PI / 3.0, 4.0 * PI / 3.0];

/// Generates one session; `bursts` lists segment indices to fill with tremor.
fn session_signal(spec: &SynthSpec, fs: f64, bursts: &[usize], rng: &mut ChaCha8Rng) -> (Vec<f64>, Vec<[f64; 3]>) {
    let n = (spec.session_seconds * fs).round() as usize;
    let ts: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
    let noise: [Vec<f64>; 3] = std::array::from_fn(|_| band_limited_noise(rng, n, fs, spec.noise_level));
    let phase = rng.random_range(0.0..2.0 * PI);
    let drift = 0.02 + rng.random_range(0.0..0.03);
    let seg_s = SEGMENT_LEN as f64 / TARGET_RATE_HZ;
    // Rotational tremor: equal amplitude on every axis; each burst starts at
    // a random point of the cycle.
    let axis_amp = spec.tremor_amplitude / 3f64.sqrt();
    let starts: Vec<f64> = bursts.iter().map(|_| rng.random_range(0.0..2.0 * PI)).collect();

    let samples = ts
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            let theta = 0.3 * (2.0 * PI * drift * t + phase).sin();
            let mut s = [GRAVITY * theta.sin() + noise[0][i], noise[1][i], GRAVITY * theta.cos() + noise[2][i]];
            let rel = t - EDGE_TRIM_S;
            if rel >= 0.0 {
                let seg = (rel / seg_s) as usize;
                if let Some(k) = bursts.iter().position(|&b| b == seg) {
                    let u = (rel - seg as f64 * seg_s) / seg_s;
                    let env = 0.6 + 0.4 * (PI * u).sin();
                    for (a, ph) in s.iter_mut().zip(TREMOR_PHASES) {
                        *a += axis_amp * env * (2.0 * PI * spec.tremor_freq * t + starts[k] + ph).sin();
                    }
                }
            }
            s
        })
        .collect();
    (ts, samples)
}

/// Writes `manifest.json`, `truth.json` and `sessions/*.csv` under `out`.
pub fn generate(spec: &SynthSpec, out: &Path) -> Result<Truth> {
    spec.validate()?;
    let mut order: Vec<usize> = (0..spec.n_subjects).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[u64::MAX])));
    let positives: Vec<usize> = order[..spec.n_positive()].to_vec();
    let per_session = spec.segments_per_session();
    let burst_sessions = spec.sessions_per_subject.div_ceil(2);

    let width = spec.n_subjects.saturating_sub(1).to_string().len().max(2);
    let mut truth = Vec::with_capacity(spec.n_subjects);
    let mut session_lists = Vec::with_capacity(spec.n_subjects);
    for subj in 0..spec.n_subjects {
        let id = format!("subj{subj:0width$}");
        let label = u8::from(positives.contains(&subj));
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(spec.seed, &[subj as u64]));
        let mut by_session: Vec<Vec<usize>> = vec![Vec::new(); spec.sessions_per_subject];
        if label == 1 {
            let pool = burst_sessions * per_session;
            let n = spec.bursts_per_subject().min(pool);
            for flat in index::sample(&mut rng, pool, n).into_vec() {
                by_session[flat / per_session].push(flat % per_session);
            }
        }
        let mut sessions = Vec::with_capacity(spec.sessions_per_subject);
        let mut bursts = Vec::new();
        for (k, segs) in by_session.iter_mut().enumerate() {
            segs.sort_unstable();
            let fs = spec.sample_rates[(subj * spec.sessions_per_subject + k) % spec.sample_rates.len()];
            let rel = format!("sessions/{id}_s{k}.csv");
            let (ts, samples) = session_signal(spec, fs, segs, &mut rng);
            let raw = RawSession::new(&id, &rel, ts, samples)?;
            write_atomic(&out.join(&rel), write_session_csv(&raw).as_bytes())?;
            bursts.extend(segs.iter().map(|&s| BurstRef { session: rel.clone(), offset: (s * SEGMENT_LEN) as u64 }));
            sessions.push(rel);
        }
        truth.push(SubjectTruth { id, label, bursts });
        session_lists.push(sessions);
    }

    let manifest = Manifest {
        subjects: truth
            .iter()
            .zip(&session_lists)
            .map(|(t, sessions)| {
                let s = t.label * 2;
                ManifestSubject {
                    id: &t.id,
                    updrs16: s,
                    updrs20: [s, t.label],
                    updrs21: [t.label, 0],
                    sp_expert: t.label,
                    sessions,
                }
            })
            .collect(),
    };
    let json = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    write_atomic(&out.join("manifest.json"), json.as_bytes())?;
    let truth = Truth { spec: spec.clone(), subjects: truth };
    let json = serde_json::to_string_pretty(&truth).expect("truth serializes");
    write_atomic(&out.join("truth.json"), json.as_bytes())?;
    Ok(truth)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dsp::{band_energy, welch_spectrum};
    use crate::ingest::{load_manifest, parse_session_csv, validate_session, LabelSet};

    fn small() -> SynthSpec {
        SynthSpec {
            n_subjects: 4,
            session_seconds: 40.0,
            sessions_per_subject: 2,
            burst_fraction: 0.2,
            ..SynthSpec::default()
        }
    }

    #[test]
    fn class_balance_and_validation() {
        let s = SynthSpec { n_subjects: 20, ..SynthSpec::default() };
        assert_eq!(s.n_positive(), 10);
        assert_eq!(s.segments_per_session(), 31);
        assert_eq!(s.bursts_per_subject(), 4);
        assert!(SynthSpec { tremor_freq: 8.0, ..s.clone() }.validate().is_err());
        assert!(SynthSpec { burst_fraction: 0.0, ..s.clone() }.validate().is_err());
        assert!(SynthSpec { session_seconds: 12.0, ..s }.validate().is_err());
    }

    #[test]
    fn corpus_is_readable_and_deterministic() {
        let a = tempfile::tempdir().unwrap();
        let b = tempfile::tempdir().unwrap();
        let truth = generate(&small(), a.path()).unwrap();
        generate(&small(), b.path()).unwrap();
        for f in ["manifest.json", "truth.json", "sessions/subj00_s0.csv", "sessions/subj03_s1.csv"] {
            assert_eq!(std::fs::read(a.path().join(f)).unwrap(), std::fs::read(b.path().join(f)).unwrap(), "{f}");
        }
        let manifest = load_manifest(&a.path().join("manifest.json")).unwrap();
        assert_eq!(manifest.len(), 4);
        for (entry, t) in manifest.iter().zip(&truth.subjects) {
            assert_eq!(LabelSet::from_annotation(&entry.annotation), LabelSet::uniform(t.label));
            for s in &entry.sessions {
                let text = std::fs::read_to_string(&s.path).unwrap();
                let raw = parse_session_csv(&text, &t.id, &s.id).unwrap();
                assert!(validate_session(&raw).accepted());
            }
            assert_eq!(t.bursts.is_empty(), t.label == 0);
        }
        assert_eq!(truth.subjects.iter().filter(|s| s.label == 1).count(), 2);
    }

    #[test]
    fn bursts_dominate_the_tremor_band() {
        let spec = SynthSpec { sample_rates: vec![100.0], ..small() };
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let (_, samples) = session_signal(&spec, 100.0, &[2], &mut rng);
        let axis = |k: usize, seg: usize| -> Vec<f64> {
            let start = (EDGE_TRIM_S * 100.0) as usize + seg * SEGMENT_LEN;
            samples[start..start + SEGMENT_LEN].iter().map(|s| s[k]).collect::<Vec<_>>()
        };
        let ratio = |seg: usize| {
            let (x, y, z) = (axis(0, seg), axis(1, seg), axis(2, seg));
            let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
            let c = |v: Vec<f64>| {
                let m = mean(&v);
                v.into_iter().map(|a| a - m).collect::<Vec<_>>()
            };
            let (x, y, z) = (c(x), c(y), c(z));
            let sp = welch_spectrum([&x, &y, &z]).unwrap();
            band_energy(&sp, 3.0, 7.0) / crate::dsp::total_energy(&sp)
        };
        assert!(ratio(2) > 0.5, "{}", ratio(2));
        assert!(ratio(1) < 0.5);
    }
}
