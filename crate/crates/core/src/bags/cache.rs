//! Binary bag container.
//!
//! ```text
//! "MTBG" version:u32 subject:str16 capacity:u32 count:u32 pool:u32 labels:[u8;4]
//! capacity x (raw:[f32;1500] spectrum:[f32;76])      padded slots are zero
//! count x (session:str16 offset:u64 band_e:f64 total_e:f64)
//! mask:[u8;capacity]
//! ```

use super::{Bag, Instance, RAW_LEN};
use crate::codec::{Reader, Writer};
use crate::dsp::{Spectrum, SPECTRUM_BINS};
use crate::error::Result;
use crate::ingest::LabelSet;

pub const BAG_MAGIC: &[u8; 4] = b"MTBG";
pub const BAG_VERSION: u32 = 1;

const SLOT_FLOATS: usize = RAW_LEN + SPECTRUM_BINS;

pub fn encode_bag(bag: &Bag) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(BAG_MAGIC);
    w.u32(BAG_VERSION);
    w.str16(&bag.subject_id);
    w.u32(bag.capacity as u32);
    w.u32(bag.instances.len() as u32);
    w.u32(bag.pool_size as u32);
    w.bytes(&bag.labels.0);
    for inst in &bag.instances {
        w.f32s(inst.raw.iter().copied());
        w.f32s(inst.spectrum_f32());
    }
    let pad = bag.capacity - bag.instances.len();
    w.bytes(&vec![0u8; pad * SLOT_FLOATS * 4]);
    for inst in &bag.instances {
        w.str16(&inst.session_id);
        w.u64(inst.offset);
        w.u64(inst.band_e.to_bits());
        w.u64(inst.total_e.to_bits());
    }
    for m in bag.mask() {
        w.u8(m as u8);
    }
    w.buf
}

pub fn decode_bag(bytes: &[u8]) -> Result<Bag> {
    let mut r = Reader::new(bytes, "bag cache");
    if r.take(4)? != BAG_MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != BAG_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let subject_id = r.str16()?;
    let capacity = r.u32()? as usize;
    let count = r.u32()? as usize;
    let pool_size = r.u32()? as usize;
    if count > capacity || count > pool_size {
        return Err(r.err(format!("count {count} exceeds capacity {capacity} or pool {pool_size}")));
    }
    let mut labels = [0u8; 4];
    labels.copy_from_slice(r.take(4)?);
    if labels.iter().any(|&l| l > 1) {
        return Err(r.err("labels must be 0 or 1"));
    }

    let slot_bytes = capacity.checked_mul(SLOT_FLOATS * 4).ok_or_else(|| r.err("capacity overflows"))?;
    if slot_bytes > r.remaining() {
        return Err(r.err("truncated slot data"));
    }
    let mut slots = Vec::with_capacity(count);
    for _ in 0..count {
        let raw = r.f32s(RAW_LEN)?;
        let sp = r.f32s(SPECTRUM_BINS)?;
        let mut spectrum = Spectrum::ZERO;
        for (d, s) in spectrum.0.iter_mut().zip(&sp) {
            *d = *s as f64;
        }
        slots.push((raw, spectrum));
    }
    let pad = r.take((capacity - count) * SLOT_FLOATS * 4)?;
    if pad.iter().any(|&b| b != 0) {
        return Err(r.err("padded slot is not zero"));
    }

    let mut instances = Vec::with_capacity(count);
    for (raw, spectrum) in slots {
        let session_id = r.str16()?;
        let offset = r.u64()?;
        let band_e = f64::from_bits(r.u64()?);
        let total_e = f64::from_bits(r.u64()?);
        if !(band_e.is_finite() && total_e.is_finite() && band_e <= total_e) {
            return Err(r.err("instance energies are inconsistent"));
        }
        if spectrum.0.iter().any(|v| !(v.is_finite() && *v >= 0.0)) {
            return Err(r.err("spectrum must be finite and non-negative"));
        }
        if instances.last().is_some_and(|p: &Instance| p.band_e < band_e) {
            return Err(r.err("instances are not sorted by band energy"));
        }
        instances.push(Instance { raw, spectrum, band_e, total_e, session_id, offset });
    }
    let mask = r.take(capacity)?;
    for (i, &m) in mask.iter().enumerate() {
        if m != u8::from(i < count) {
            return Err(r.err(format!("mask byte {i} disagrees with count {count}")));
        }
    }
    r.finish()?;
    Ok(Bag { subject_id, labels: LabelSet(labels), capacity, instances, pool_size })
}
