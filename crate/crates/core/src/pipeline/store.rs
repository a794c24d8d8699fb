//! Conditioned-session container written by `preprocess`.
//!
//! ```text
//! "MTCS" version:u32 subject:str16 labels:[u8;4] config_hash:str16 sessions:u32
//! per session: id:str16 fs:f64 len:u32 x:[f64;len] y:[f64;len] z:[f64;len]
//! ```

use crate::codec::{Reader, Writer};
use crate::dsp::Session;
use crate::error::Result;
use crate::ingest::LabelSet;

pub const CONDITIONED_MAGIC: &[u8; 4] = b"MTCS";
pub const CONDITIONED_VERSION: u32 = 1;

/// All accepted, conditioned sessions of one subject.
#[derive(Debug, Clone, PartialEq)]
pub struct ConditionedSubject {
    pub subject_id: String,
    pub labels: LabelSet,
    pub config_hash: String,
    pub sessions: Vec<Session>,
}

pub fn encode_conditioned(c: &ConditionedSubject) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(CONDITIONED_MAGIC);
    w.u32(CONDITIONED_VERSION);
    w.str16(&c.subject_id);
    w.bytes(&c.labels.0);
    w.str16(&c.config_hash);
    w.u32(c.sessions.len() as u32);
    for s in &c.sessions {
        w.str16(&s.session_id);
        w.f64(s.fs);
        w.u32(s.len() as u32);
        for axis in &s.samples {
            for &v in axis {
                w.f64(v);
            }
        }
    }
    w.buf
}

pub fn decode_conditioned(bytes: &[u8]) -> Result<ConditionedSubject> {
    let mut r = Reader::new(bytes, "conditioned sessions");
    if r.take(4)? != CONDITIONED_MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != CONDITIONED_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let subject_id = r.str16()?;
    let labels: [u8; 4] = r.take(4)?.try_into().unwrap();
    if labels.iter().any(|&l| l > 1) {
        return Err(r.err("labels must be 0 or 1"));
    }
    let config_hash = r.str16()?;
    let n = r.u32()? as usize;
    let mut sessions = Vec::new();
    for _ in 0..n {
        let session_id = r.str16()?;
        let fs = r.f64()?;
        if !(fs > 0.0 && fs.is_finite()) {
            return Err(r.err(format!("bad sampling rate {fs}")));
        }
        let len = r.u32()? as usize;
        let samples = [r.f64s(len)?, r.f64s(len)?, r.f64s(len)?];
        if samples.iter().flatten().any(|v| !v.is_finite()) {
            return Err(r.err("non-finite sample"));
        }
        sessions.push(Session { subject_id: subject_id.clone(), session_id, fs, samples });
    }
    r.finish()?;
    Ok(ConditionedSubject { subject_id, labels: LabelSet(labels), config_hash, sessions })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ConditionedSubject {
        let s = Session {
            subject_id: "p1".into(),
            session_id: "a.csv".into(),
            fs: 100.0,
            samples: [vec![0.5, -1.0], vec![0.0, 2.0], vec![1e-3, 3.0]],
        };
        ConditionedSubject {
            subject_id: "p1".into(),
            labels: LabelSet([1, 0, 1, 1]),
            config_hash: "abc".into(),
            sessions: vec![s],
        }
    }

    #[test]
    fn round_trip_and_rejections() {
        let c = sample();
        let bytes = encode_conditioned(&c);
        assert_eq!(decode_conditioned(&bytes).unwrap(), c);
        assert!(decode_conditioned(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_conditioned(&extra).is_err());
        let mut magic = bytes;
        magic[0] = b'X';
        assert!(decode_conditioned(&magic).is_err());
    }
}
