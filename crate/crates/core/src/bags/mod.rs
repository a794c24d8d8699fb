//! Segmentation, energy filtering and fixed-capacity bag assembly.

mod cache;

pub use cache::{decode_bag, encode_bag, BAG_MAGIC, BAG_VERSION};

use std::cmp::Ordering;
use std::collections::BTreeMap;

use crate::dsp::{
    band_energy, total_energy, welch_spectrum, Session, Spectrum, SEGMENT_LEN, SPECTRUM_BINS, TREMOR_BAND_HZ,
};
use crate::ingest::LabelSet;

pub const E_MIN: f64 = 0.15;
pub const MIN_SEGMENTS_PER_SESSION: usize = 2;
pub const MIN_SEGMENTS_PER_SUBJECT: usize = 30;
pub const DEFAULT_BAG_SIZE: usize = 1500;

/// Values per instance in the raw `[3, 500]` layout.
pub const RAW_LEN: usize = 3 * SEGMENT_LEN;

/// One window of a conditioned session.
#[derive(Debug, Clone, PartialEq)]
pub struct Instance {
    /// Axis-major `[3, 500]`.
    pub raw: Vec<f32>,
    pub spectrum: Spectrum,
    pub band_e: f64,
    pub total_e: f64,
    pub session_id: String,
    pub offset: u64,
}

impl Instance {
    /// Builds an instance from a 500-sample window of each axis. Raw samples and
    /// spectrum are stored at single precision; energies use the full spectrum.
    pub fn from_window(axes: [&[f64]; 3], session_id: &str, offset: u64) -> crate::Result<Self> {
        let sp = welch_spectrum(axes)?;
        let band_e = band_energy(&sp, TREMOR_BAND_HZ.0, TREMOR_BAND_HZ.1);
        let total_e = total_energy(&sp);
        let raw = axes.iter().flat_map(|a| a.iter().map(|&v| v as f32)).collect();
        Ok(Instance {
            raw,
            spectrum: Spectrum(sp.0.map(|v| v as f32 as f64)),
            band_e,
            total_e,
            session_id: session_id.to_string(),
            offset,
        })
    }

    pub fn spectrum_f32(&self) -> [f32; SPECTRUM_BINS] {
        self.spectrum.0.map(|v| v as f32)
    }

    fn rank(&self, other: &Instance) -> Ordering {
        other
            .band_e
            .total_cmp(&self.band_e)
            .then_with(|| self.session_id.cmp(&other.session_id))
            .then_with(|| self.offset.cmp(&other.offset))
    }
}

/// Per-subject bag. Only real instances are held; padded slots are implicit
/// zeros and masked out.
#[derive(Debug, Clone, PartialEq)]
pub struct Bag {
    pub subject_id: String,
    pub labels: LabelSet,
    pub capacity: usize,
    pub instances: Vec<Instance>,
    /// Instances available after filtering, before truncation to capacity.
    pub pool_size: usize,
}

impl Bag {
    pub fn real_count(&self) -> usize {
        self.instances.len()
    }

    pub fn mask(&self) -> Vec<bool> {
        (0..self.capacity).map(|i| i < self.instances.len()).collect()
    }

    /// Restricts the bag to its first `k` slots.
    pub fn truncated(&self, k: usize) -> Bag {
        Bag {
            subject_id: self.subject_id.clone(),
            labels: self.labels,
            capacity: k,
            instances: self.instances.iter().take(k).cloned().collect(),
            pool_size: self.pool_size,
        }
    }
}

/// Cuts a session into non-overlapping 500-sample windows; the remainder is dropped.
pub fn segment_session(s: &Session) -> crate::Result<Vec<Instance>> {
    let n = s.len() / SEGMENT_LEN;
    (0..n)
        .map(|i| {
            let r = i * SEGMENT_LEN..(i + 1) * SEGMENT_LEN;
            let axes = [&s.samples[0][r.clone()], &s.samples[1][r.clone()], &s.samples[2][r]];
            Instance::from_window(axes, &s.session_id, (i * SEGMENT_LEN) as u64)
        })
        .collect()
}

/// Keeps instances whose total energy exceeds `e_min`, then drops every
/// session left with fewer than two survivors. Input order is preserved.
pub fn filter_segments(instances: Vec<Instance>, e_min: f64) -> Vec<Instance> {
    let kept: Vec<Instance> = instances.into_iter().filter(|i| i.total_e > e_min).collect();
    let mut per_session: BTreeMap<&str, usize> = BTreeMap::new();
    for i in &kept {
        *per_session.entry(&i.session_id).or_default() += 1;
    }
    let dropped: Vec<String> =
        per_session.into_iter().filter(|&(_, n)| n < MIN_SEGMENTS_PER_SESSION).map(|(s, _)| s.to_string()).collect();
    kept.into_iter().filter(|i| !dropped.contains(&i.session_id)).collect()
}

pub fn build_bag(subject_id: &str, mut instances: Vec<Instance>, labels: LabelSet, capacity: usize) -> Bag {
    let pool_size = instances.len();
    instances.sort_by(|a, b| a.rank(b));
    instances.truncate(capacity);
    Bag { subject_id: subject_id.to_string(), labels, capacity, instances, pool_size }
}

/// Segments, filters and ranks all sessions of one subject.
pub fn bag_from_sessions(
    subject_id: &str,
    sessions: &[Session],
    labels: LabelSet,
    e_min: f64,
    capacity: usize,
) -> crate::Result<Bag> {
    let mut pool = Vec::new();
    for s in sessions {
        pool.extend(filter_segments(segment_session(s)?, e_min));
    }
    Ok(build_bag(subject_id, pool, labels, capacity))
}

/// Minimum-size rule, counted on the filtered pool before truncation.
pub fn subject_eligible(bag: &Bag, min_segments: usize) -> bool {
    bag.pool_size >= min_segments
}
