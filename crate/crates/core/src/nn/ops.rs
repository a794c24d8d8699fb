//! Single-call forward helpers over the graph operations.

use rand::Rng;

use crate::error::Result;

use super::graph::{softmax_in_place, Graph};
use super::{Scalar, Tensor};

/// `x @ w + b` with `x: [batch, in]`, `w: [in, out]`, `b: [out]`.
pub fn dense_forward<T: Scalar>(x: &Tensor<T>, w: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let (x, w, b) = (g.input(x.clone()), g.input(w.clone()), g.input(b.clone()));
    let y = g.dense(x, w, b)?;
    Ok(g.value(y).clone())
}

/// Valid cross-correlation of a single `[c_in, len]` signal.
pub fn conv1d_forward<T: Scalar>(x: &Tensor<T>, kernels: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let mut g = Graph::new();
    let xv = g.input(x.clone().reshape(&shape)?);
    let (w, b) = (g.input(kernels.clone()), g.input(b.clone()));
    let y = g.conv1d(xv, w, b)?;
    let out = g.value(y).clone();
    let s = out.shape()[1..].to_vec();
    out.reshape(&s)
}

/// Stride-`k` max pooling of a single `[c, len]` signal.
pub fn maxpool1d_forward<T: Scalar>(x: &Tensor<T>, k: usize) -> Result<Tensor<T>> {
    let mut shape = vec![1];
    shape.extend_from_slice(x.shape());
    let mut g = Graph::new();
    let xv = g.input(x.clone().reshape(&shape)?);
    let y = g.maxpool1d(xv, k)?;
    let out = g.value(y).clone();
    let s = out.shape()[1..].to_vec();
    out.reshape(&s)
}

pub fn leaky_relu(x: f64, alpha: f64) -> f64 {
    if x >= 0.0 {
        x
    } else {
        alpha * x
    }
}

pub fn softmax2(logits: [f64; 2]) -> [f64; 2] {
    let mut v = logits;
    softmax_in_place(&mut v);
    v
}

/// Inverted dropout; `rng == None` means evaluation mode.
pub fn dropout<T: Scalar, R: Rng + ?Sized>(x: &Tensor<T>, p: f64, rng: Option<&mut R>) -> Result<Tensor<T>> {
    let mut g = Graph::new();
    let xv = g.input(x.clone());
    let y = g.dropout(xv, p, rng)?;
    Ok(g.value(y).clone())
}
