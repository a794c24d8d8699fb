//! Versioned binary parameter checkpoints.
//!
//! ```text
//! "MTCK" | version u32 | kind str16 | tensor count u32
//! per tensor: name str16 | ndim u8 | dims u32 * ndim | f32 LE data
//! ```

use crate::codec::{Reader, Writer};
use crate::error::Result;

use super::{ParamStore, Scalar, Tensor};

pub const CHECKPOINT_MAGIC: &[u8; 4] = b"MTCK";
pub const CHECKPOINT_VERSION: u32 = 1;
const MAX_DIMS: u8 = 8;

/// Decoded checkpoint: a model kind tag and named tensors in layer order.
#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub kind: String,
    pub tensors: Vec<(String, Tensor<f32>)>,
}

pub fn encode_checkpoint<T: Scalar>(kind: &str, params: &ParamStore<T>) -> Vec<u8> {
    let mut w = Writer::default();
    w.bytes(CHECKPOINT_MAGIC);
    w.u32(CHECKPOINT_VERSION);
    w.str16(kind);
    w.u32(params.len() as u32);
    for (name, t) in params.iter() {
        w.str16(name);
        w.u8(t.shape().len() as u8);
        for &d in t.shape() {
            w.u32(d as u32);
        }
        w.f32s(t.data().iter().map(|v| v.as_f64() as f32));
    }
    w.buf
}

pub fn decode_checkpoint(bytes: &[u8]) -> Result<Checkpoint> {
    let mut r = Reader::new(bytes, "checkpoint");
    if r.take(4)? != CHECKPOINT_MAGIC {
        return Err(r.err("bad magic"));
    }
    let version = r.u32()?;
    if version != CHECKPOINT_VERSION {
        return Err(r.err(format!("unsupported version {version}")));
    }
    let kind = r.str16()?;
    let count = r.u32()? as usize;
    let mut tensors = Vec::new();
    for _ in 0..count {
        let name = r.str16()?;
        let ndim = r.u8()?;
        if ndim > MAX_DIMS {
            return Err(r.err(format!("{ndim} dimensions")));
        }
        let mut shape = Vec::with_capacity(ndim as usize);
        let mut len = 1usize;
        for _ in 0..ndim {
            let d = r.u32()? as usize;
            len = len.checked_mul(d).ok_or_else(|| r.err("tensor size overflows"))?;
            shape.push(d);
        }
        let data = r.f32s(len)?;
        tensors.push((name, Tensor::new(&shape, data)?));
    }
    r.finish()?;
    Ok(Checkpoint { kind, tensors })
}

impl Checkpoint {
    /// Copies the stored tensors into `params`, which must have identical
    /// names and shapes in the same order.
    pub fn load_into<T: Scalar>(&self, params: &mut ParamStore<T>) -> Result<()> {
        if self.tensors.len() != params.len() {
            return Err(crate::Error::Shape(format!(
                "checkpoint holds {} tensors, model has {}",
                self.tensors.len(),
                params.len()
            )));
        }
        for (i, (name, t)) in self.tensors.iter().enumerate() {
            if params.name(i) != name || params.get(i).shape() != t.shape() {
                return Err(crate::Error::Shape(format!(
                    "tensor {i}: checkpoint has {name} {:?}, model has {} {:?}",
                    t.shape(),
                    params.name(i),
                    params.get(i).shape()
                )));
            }
            *params.get_mut(i) = t.cast();
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample() -> ParamStore<f32> {
        let mut s = ParamStore::new();
        s.add("a.weight", Tensor::new(&[2, 3], vec![1.0, -2.0, 3.5, 0.0, 1e-3, 7.0]).unwrap());
        s.add("a.bias", Tensor::new(&[3], vec![0.25, 0.5, -0.75]).unwrap());
        s
    }

    #[test]
    fn round_trip_is_exact_and_deterministic() {
        let s = sample();
        let bytes = encode_checkpoint("fc", &s);
        assert_eq!(bytes, encode_checkpoint("fc", &s));
        let ck = decode_checkpoint(&bytes).unwrap();
        assert_eq!(ck.kind, "fc");
        let mut t = sample();
        t.get_mut(0).data_mut().fill(0.0);
        ck.load_into(&mut t).unwrap();
        assert_eq!(t, s);
    }

    #[test]
    fn rejects_corruption() {
        let bytes = encode_checkpoint("fc", &sample());
        assert!(decode_checkpoint(&bytes[..bytes.len() - 1]).is_err());
        let mut bad = bytes.clone();
        bad[0] = b'X';
        assert!(decode_checkpoint(&bad).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(decode_checkpoint(&extra).is_err());
        assert!(decode_checkpoint(&[]).is_err());
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let ck = decode_checkpoint(&encode_checkpoint("fc", &sample())).unwrap();
        let mut other = ParamStore::<f32>::new();
        other.add("a.weight", Tensor::zeros(&[3, 2]));
        other.add("a.bias", Tensor::zeros(&[3]));
        assert!(ck.load_into(&mut other).is_err());
    }
}
