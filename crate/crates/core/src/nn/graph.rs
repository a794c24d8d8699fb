//! Tape-based reverse-mode automatic differentiation over [`Tensor`]s.
//!
//! A [`Graph`] records every operation as it is evaluated. Calling
//! [`Graph::backward`] walks the tape in reverse and accumulates gradients
//! for every node that transitively depends on a parameter or a
//! gradient-tracking leaf.

use rand::Rng;

use crate::error::{Error, Result};

use super::scalar::{gemm, Strides};
use super::{Scalar, Tensor};

/// Lower and upper clamp applied to probabilities inside the cross-entropy.
pub const PROB_CLAMP: f64 = 1e-7;

/// Handle to a node on the tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Var(usize);

enum Op<T> {
    Input,
    Param(usize),
    MatMul { a: Var, b: Var, trans_b: bool },
    AddBias { x: Var, bias: Var },
    Conv1d { x: Var, w: Var, b: Var, cols: Vec<T>, k: usize },
    MaxPool1d { x: Var, argmax: Vec<u32> },
    LeakyRelu { x: Var, alpha: T },
    Tanh { x: Var },
    Sigmoid { x: Var },
    Dropout { x: Var, mask: Vec<T> },
    Reshape { x: Var },
    Softmax { x: Var },
    CrossEntropy { probs: Var, target: T },
}

struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    needs_grad: bool,
}

/// Gradients produced by one backward pass.
pub struct Gradients<T> {
    nodes: Vec<Option<Tensor<T>>>,
    params: Vec<Option<Tensor<T>>>,
}

impl<T: Scalar> Gradients<T> {
    /// Gradient with respect to a tracked node, if it received any.
    pub fn wrt(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes.get(v.0).and_then(|g| g.as_ref())
    }

    /// Gradient for parameter `id`; `None` if it did not influence the output.
    pub fn param(&self, id: usize) -> Option<&Tensor<T>> {
        self.params.get(id).and_then(|g| g.as_ref())
    }

    pub fn into_params(self) -> Vec<Option<Tensor<T>>> {
        self.params
    }
}

#[derive(Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
}

fn shape_err(msg: String) -> Error {
    Error::Shape(msg)
}

fn accumulate<T: Scalar>(grads: &mut [Option<Tensor<T>>], v: Var, g: Tensor<T>) {
    match &mut grads[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, needs_grad: bool) -> Var {
        self.nodes.push(Node { value, op, needs_grad });
        Var(self.nodes.len() - 1)
    }

    fn tracks(&self, v: Var) -> bool {
        self.nodes[v.0].needs_grad
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Constant input; no gradient is computed for it.
    pub fn input(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, false)
    }

    /// Input whose gradient is tracked (used by layer-level checks).
    pub fn leaf(&mut self, t: Tensor<T>) -> Var {
        self.push(t, Op::Input, true)
    }

    pub fn param(&mut self, id: usize, t: &Tensor<T>) -> Var {
        self.push(t.clone(), Op::Param(id), true)
    }

    fn matrix_dims(&self, v: Var) -> Result<(usize, usize)> {
        match self.value(v).shape() {
            [r, c] => Ok((*r, *c)),
            s => Err(shape_err(format!("expected a matrix, got shape {s:?}"))),
        }
    }

    /// `a @ b` for `a: [m, k]`, `b: [k, n]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, false)
    }

    /// `a @ b^T` for `a: [m, k]`, `b: [n, k]`.
    pub fn matmul_bt(&mut self, a: Var, b: Var) -> Result<Var> {
        self.matmul_impl(a, b, true)
    }

    fn matmul_impl(&mut self, a: Var, b: Var, trans_b: bool) -> Result<Var> {
        let (m, k) = self.matrix_dims(a)?;
        let (br, bc) = self.matrix_dims(b)?;
        let (kb, n, sb) = if trans_b { (bc, br, Strides::transposed(bc)) } else { (br, bc, Strides::row_major(bc)) };
        if k != kb {
            return Err(shape_err(format!("matmul inner dimensions differ: [{m}, {k}] x [{kb}, {n}]")));
        }
        let mut out = vec![T::zero(); m * n];
        gemm(
            m,
            k,
            n,
            T::one(),
            self.value(a).data(),
            Strides::row_major(k),
            self.value(b).data(),
            sb,
            T::zero(),
            &mut out,
            Strides::row_major(n),
        );
        let needs = self.tracks(a) || self.tracks(b);
        Ok(self.push(Tensor::new(&[m, n], out)?, Op::MatMul { a, b, trans_b }, needs))
    }

    /// Adds `bias: [c]` to every row of `x: [r, c]`.
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var> {
        let (_, c) = self.matrix_dims(x)?;
        if self.value(bias).shape() != [c] {
            return Err(shape_err(format!("bias shape {:?} does not match {c} columns", self.value(bias).shape())));
        }
        let mut out = self.value(x).clone();
        let b = self.value(bias).data();
        for row in out.data_mut().chunks_mut(c) {
            for (v, &bv) in row.iter_mut().zip(b) {
                *v = *v + bv;
            }
        }
        let needs = self.tracks(x) || self.tracks(bias);
        Ok(self.push(out, Op::AddBias { x, bias }, needs))
    }

    /// Fully connected layer `x @ w + b` with `w: [in, out]`.
    pub fn dense(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let y = self.matmul(x, w)?;
        self.add_bias(y, b)
    }

    /// Valid (unpadded) 1-D cross-correlation.
    ///
    /// `x: [n, c_in, len]`, `w: [c_out, c_in, k]`, `b: [c_out]`, result
    /// `[n, c_out, len - k + 1]`.
    pub fn conv1d(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (n, cin, len) = match self.value(x).shape() {
            [n, c, l] => (*n, *c, *l),
            s => return Err(shape_err(format!("conv1d input must be [n, c, len], got {s:?}"))),
        };
        let (cout, wcin, k) = match self.value(w).shape() {
            [o, c, k] => (*o, *c, *k),
            s => return Err(shape_err(format!("conv1d kernel must be [out, in, k], got {s:?}"))),
        };
        if wcin != cin {
            return Err(shape_err(format!("conv1d expects {wcin} input channels, got {cin}")));
        }
        if self.value(b).shape() != [cout] {
            return Err(shape_err(format!("conv1d bias must be [{cout}]")));
        }
        if k == 0 || len < k {
            return Err(shape_err(format!("conv1d kernel {k} longer than signal {len}")));
        }
        let lout = len - k + 1;
        let ck = cin * k;
        let chunk = conv_chunk(ck, lout);
        // im2col per chunk of instances: row (c, j), column (instance, t).
        // Chunk starting at instance s occupies cols[s * ck * lout..].
        let mut cols = vec![T::zero(); n * ck * lout];
        let mut out = vec![T::zero(); n * cout * lout];
        {
            let xd = self.value(x).data();
            let wd = self.value(w).data();
            let bd = self.value(b).data();
            let mut wide_out = vec![T::zero(); cout * chunk * lout];
            for s in (0..n).step_by(chunk) {
                let m = chunk.min(n - s);
                let wide = m * lout;
                let cc = &mut cols[s * ck * lout..(s + m) * ck * lout];
                for c in 0..cin {
                    for j in 0..k {
                        let row = &mut cc[(c * k + j) * wide..(c * k + j + 1) * wide];
                        for i in 0..m {
                            let src = (((s + i) * cin + c) * len) + j;
                            row[i * lout..(i + 1) * lout].copy_from_slice(&xd[src..src + lout]);
                        }
                    }
                }
                gemm(
                    cout,
                    ck,
                    wide,
                    T::one(),
                    wd,
                    Strides::row_major(ck),
                    cc,
                    Strides::row_major(wide),
                    T::zero(),
                    &mut wide_out[..cout * wide],
                    Strides::row_major(wide),
                );
                for o in 0..cout {
                    for i in 0..m {
                        let src = &wide_out[o * wide + i * lout..o * wide + (i + 1) * lout];
                        let d0 = ((s + i) * cout + o) * lout;
                        for (d, &v) in out[d0..d0 + lout].iter_mut().zip(src) {
                            *d = v + bd[o];
                        }
                    }
                }
            }
        }
        let needs = self.tracks(x) || self.tracks(w) || self.tracks(b);
        let value = Tensor::new(&[n, cout, lout], out)?;
        Ok(self.push(value, Op::Conv1d { x, w, b, cols, k }, needs))
    }

    /// Non-overlapping max pooling over the last axis of `[n, c, len]`.
    /// A trailing remainder shorter than `k` is dropped.
    pub fn maxpool1d(&mut self, x: Var, k: usize) -> Result<Var> {
        let (n, c, len) = match self.value(x).shape() {
            [n, c, l] => (*n, *c, *l),
            s => return Err(shape_err(format!("maxpool input must be [n, c, len], got {s:?}"))),
        };
        if k == 0 || len < k {
            return Err(shape_err(format!("cannot pool length {len} with window {k}")));
        }
        let lout = len / k;
        let xd = self.value(x).data();
        let mut out = Vec::with_capacity(n * c * lout);
        let mut argmax = Vec::with_capacity(n * c * lout);
        for row in 0..n * c {
            let base = row * len;
            if k == 2 {
                for t in 0..lout {
                    let i = base + 2 * t;
                    // strict comparison: first maximal index wins ties
                    let best = if xd[i + 1] > xd[i] { i + 1 } else { i };
                    out.push(xd[best]);
                    argmax.push(best as u32);
                }
                continue;
            }
            for t in 0..lout {
                let start = base + t * k;
                let mut best = start;
                for idx in start + 1..start + k {
                    // strict comparison: first maximal index wins ties
                    if xd[idx] > xd[best] {
                        best = idx;
                    }
                }
                out.push(xd[best]);
                argmax.push(best as u32);
            }
        }
        let needs = self.tracks(x);
        let value = Tensor::new(&[n, c, lout], out)?;
        Ok(self.push(value, Op::MaxPool1d { x, argmax }, needs))
    }

    pub fn leaky_relu(&mut self, x: Var, alpha: f64) -> Var {
        let alpha = T::from_f64(alpha);
        let out = self.value(x).map(|v| if v >= T::zero() { v } else { alpha * v });
        let needs = self.tracks(x);
        self.push(out, Op::LeakyRelu { x, alpha }, needs)
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.tanh());
        let needs = self.tracks(x);
        self.push(out, Op::Tanh { x }, needs)
    }

    pub fn sigmoid(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| T::one() / (T::one() + (-v).exp()));
        let needs = self.tracks(x);
        self.push(out, Op::Sigmoid { x }, needs)
    }

    /// Inverted dropout. With `rng == None` (evaluation) this is the identity
    /// and records nothing.
    pub fn dropout<R: Rng + ?Sized>(&mut self, x: Var, p: f64, rng: Option<&mut R>) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Precondition(format!("dropout probability {p} outside [0, 1)")));
        }
        let Some(rng) = rng else {
            return Ok(x);
        };
        if p == 0.0 {
            return Ok(x);
        }
        let keep = T::from_f64(1.0 / (1.0 - p));
        let mask: Vec<T> =
            (0..self.value(x).len()).map(|_| if rng.random::<f64>() < p { T::zero() } else { keep }).collect();
        self.dropout_with_mask(x, mask)
    }

    /// Dropout with an explicit (already scaled) mask.
    pub fn dropout_with_mask(&mut self, x: Var, mask: Vec<T>) -> Result<Var> {
        if mask.len() != self.value(x).len() {
            return Err(shape_err("dropout mask length mismatch".into()));
        }
        let mut out = self.value(x).clone();
        for (v, &m) in out.data_mut().iter_mut().zip(&mask) {
            *v = *v * m;
        }
        let needs = self.tracks(x);
        Ok(self.push(out, Op::Dropout { x, mask }, needs))
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var> {
        let out = self.value(x).clone().reshape(shape)?;
        let needs = self.tracks(x);
        Ok(self.push(out, Op::Reshape { x }, needs))
    }

    /// Numerically stable softmax over each row of a matrix.
    pub fn softmax(&mut self, x: Var) -> Result<Var> {
        let (_, c) = self.matrix_dims(x)?;
        let mut out = self.value(x).clone();
        for row in out.data_mut().chunks_mut(c) {
            softmax_in_place(row);
        }
        let needs = self.tracks(x);
        Ok(self.push(out, Op::Softmax { x }, needs))
    }

    /// Mean binary cross-entropy of the class-1 column of `probs: [r, 2]`
    /// against a shared target label.
    pub fn cross_entropy(&mut self, probs: Var, target: f64) -> Result<Var> {
        let (r, c) = self.matrix_dims(probs)?;
        if c != 2 || r == 0 {
            return Err(shape_err(format!("cross-entropy expects [r, 2] probabilities, got [{r}, {c}]")));
        }
        let y = target;
        let total: f64 = self
            .value(probs)
            .data()
            .chunks(2)
            .map(|row| {
                let p = clamp_prob(row[1].as_f64());
                -(y * p.ln() + (1.0 - y) * (1.0 - p).ln())
            })
            .sum();
        let loss = Tensor::new(&[1], vec![T::from_f64(total / r as f64)])?;
        let needs = self.tracks(probs);
        Ok(self.push(loss, Op::CrossEntropy { probs, target: T::from_f64(y) }, needs))
    }

    /// Reverse pass from a scalar output.
    pub fn backward(&self, out: Var) -> Gradients<T> {
        let seed = Tensor::new(self.value(out).shape(), vec![T::one(); self.value(out).len()])
            .expect("seed matches output shape");
        self.backward_with(out, seed)
    }

    /// Reverse pass with an explicit upstream gradient for `out`.
    pub fn backward_with(&self, out: Var, seed: Tensor<T>) -> Gradients<T> {
        assert_eq!(seed.shape(), self.value(out).shape(), "seed shape mismatch");
        let mut grads: Vec<Option<Tensor<T>>> = (0..self.nodes.len()).map(|_| None).collect();
        let n_params = self
            .nodes
            .iter()
            .filter_map(|n| match n.op {
                Op::Param(id) => Some(id + 1),
                _ => None,
            })
            .max()
            .unwrap_or(0);
        let mut params: Vec<Option<Tensor<T>>> = (0..n_params).map(|_| None).collect();
        grads[out.0] = Some(seed);

        for idx in (0..=out.0).rev() {
            let node = &self.nodes[idx];
            if !node.needs_grad {
                grads[idx] = None;
                continue;
            }
            let Some(g) = grads[idx].take() else { continue };
            match &node.op {
                Op::Input => {
                    grads[idx] = Some(g);
                }
                Op::Param(id) => match &mut params[*id] {
                    Some(existing) => existing.add_assign(&g),
                    slot @ None => *slot = Some(g),
                },
                Op::MatMul { a, b, trans_b } => self.back_matmul(&mut grads, &g, *a, *b, *trans_b),
                Op::AddBias { x, bias } => {
                    if self.tracks(*bias) {
                        let c = self.value(*bias).len();
                        let mut db = vec![T::zero(); c];
                        for row in g.data().chunks(c) {
                            for (d, &v) in db.iter_mut().zip(row) {
                                *d = *d + v;
                            }
                        }
                        accumulate(&mut grads, *bias, Tensor::new(&[c], db).unwrap());
                    }
                    if self.tracks(*x) {
                        accumulate(&mut grads, *x, g);
                    }
                }
                Op::Conv1d { x, w, b, cols, k } => self.back_conv1d(&mut grads, &g, *x, *w, *b, cols, *k),
                Op::MaxPool1d { x, argmax } => {
                    let mut dx = Tensor::zeros(self.value(*x).shape());
                    let d = dx.data_mut();
                    for (&pos, &gv) in argmax.iter().zip(g.data()) {
                        d[pos as usize] = d[pos as usize] + gv;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::LeakyRelu { x, alpha } => {
                    let xv = self.value(*x).data();
                    let mut dx = g;
                    for (d, &v) in dx.data_mut().iter_mut().zip(xv) {
                        if v < T::zero() {
                            *d = *d * *alpha;
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Tanh { x } => {
                    let mut dx = g;
                    for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d = *d * (T::one() - y * y);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Sigmoid { x } => {
                    let mut dx = g;
                    for (d, &y) in dx.data_mut().iter_mut().zip(node.value.data()) {
                        *d = *d * y * (T::one() - y);
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Dropout { x, mask } => {
                    let mut dx = g;
                    for (d, &m) in dx.data_mut().iter_mut().zip(mask) {
                        *d = *d * m;
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::Reshape { x } => {
                    let dx = g.reshape(self.value(*x).shape()).expect("reshape preserves length");
                    accumulate(&mut grads, *x, dx);
                }
                Op::Softmax { x } => {
                    let c = node.value.shape()[1];
                    let mut dx = g;
                    for (drow, yrow) in dx.data_mut().chunks_mut(c).zip(node.value.data().chunks(c)) {
                        let dot: T = drow.iter().zip(yrow).map(|(&d, &y)| d * y).sum();
                        for (d, &y) in drow.iter_mut().zip(yrow) {
                            *d = y * (*d - dot);
                        }
                    }
                    accumulate(&mut grads, *x, dx);
                }
                Op::CrossEntropy { probs, target } => {
                    let pv = self.value(*probs);
                    let r = pv.shape()[0];
                    let scale = g.data()[0].as_f64() / r as f64;
                    let y = target.as_f64();
                    // Straight after a softmax the logit gradient is p - t, which
                    // stays informative when p saturates in the clamp region.
                    if let Op::Softmax { x } = self.nodes[probs.0].op {
                        let mut dx = Tensor::zeros(pv.shape());
                        for (drow, prow) in dx.data_mut().chunks_mut(2).zip(pv.data().chunks(2)) {
                            drow[0] = T::from_f64(scale * (prow[0].as_f64() - (1.0 - y)));
                            drow[1] = T::from_f64(scale * (prow[1].as_f64() - y));
                        }
                        if self.tracks(x) {
                            accumulate(&mut grads, x, dx);
                        }
                        continue;
                    }
                    let mut dp = Tensor::zeros(pv.shape());
                    for (drow, prow) in dp.data_mut().chunks_mut(2).zip(pv.data().chunks(2)) {
                        let raw = prow[1].as_f64();
                        if raw > PROB_CLAMP && raw < 1.0 - PROB_CLAMP {
                            drow[1] = T::from_f64(scale * (-y / raw + (1.0 - y) / (1.0 - raw)));
                        }
                    }
                    accumulate(&mut grads, *probs, dp);
                }
            }
        }
        Gradients { nodes: grads, params }
    }

    fn back_matmul(&self, grads: &mut [Option<Tensor<T>>], g: &Tensor<T>, a: Var, b: Var, trans_b: bool) {
        let av = self.value(a);
        let bv = self.value(b);
        let (m, k) = (av.shape()[0], av.shape()[1]);
        let n = g.shape()[1];
        if self.tracks(a) {
            // dA = G @ B_eff^T
            let sb = if trans_b { Strides::row_major(k) } else { Strides::transposed(n) };
            let mut da = vec![T::zero(); m * k];
            gemm(
                m,
                n,
                k,
                T::one(),
                g.data(),
                Strides::row_major(n),
                bv.data(),
                sb,
                T::zero(),
                &mut da,
                Strides::row_major(k),
            );
            accumulate(grads, a, Tensor::new(&[m, k], da).unwrap());
        }
        if self.tracks(b) {
            let mut db = vec![T::zero(); k * n];
            if trans_b {
                // d(B stored [n, k]) = G^T @ A
                gemm(
                    n,
                    m,
                    k,
                    T::one(),
                    g.data(),
                    Strides::transposed(n),
                    av.data(),
                    Strides::row_major(k),
                    T::zero(),
                    &mut db,
                    Strides::row_major(k),
                );
            } else {
                gemm(
                    k,
                    m,
                    n,
                    T::one(),
                    av.data(),
                    Strides::transposed(k),
                    g.data(),
                    Strides::row_major(n),
                    T::zero(),
                    &mut db,
                    Strides::row_major(n),
                );
            }
            accumulate(grads, b, Tensor::new(bv.shape(), db).unwrap());
        }
    }

    #[allow(clippy::too_many_arguments)]
    fn back_conv1d(
        &self,
        grads: &mut [Option<Tensor<T>>],
        g: &Tensor<T>,
        x: Var,
        w: Var,
        b: Var,
        cols: &[T],
        k: usize,
    ) {
        let (n, cin, len) = {
            let s = self.value(x).shape();
            (s[0], s[1], s[2])
        };
        let cout = self.value(w).shape()[0];
        let lout = len - k + 1;
        let ck = cin * k;
        let chunk = conv_chunk(ck, lout);
        let gd = g.data();
        let (tw, tb, tx) = (self.tracks(w), self.tracks(b), self.tracks(x));
        let wd = self.value(w).data();
        let mut dw = vec![T::zero(); cout * ck];
        let mut db = vec![T::zero(); cout];
        let mut dx = if tx { vec![T::zero(); n * cin * len] } else { Vec::new() };
        let mut gw = vec![T::zero(); cout * chunk * lout];
        let mut dcols = if tx { vec![T::zero(); ck * chunk * lout] } else { Vec::new() };
        for s in (0..n).step_by(chunk) {
            let m = chunk.min(n - s);
            let wide = m * lout;
            // gradient in [cout, (instance, t)] layout to match the im2col columns
            for i in 0..m {
                for o in 0..cout {
                    let src = ((s + i) * cout + o) * lout;
                    gw[o * wide + i * lout..o * wide + (i + 1) * lout].copy_from_slice(&gd[src..src + lout]);
                }
            }
            let gw = &gw[..cout * wide];
            let cc = &cols[s * ck * lout..(s + m) * ck * lout];
            if tw {
                gemm(
                    cout,
                    wide,
                    ck,
                    T::one(),
                    gw,
                    Strides::row_major(wide),
                    cc,
                    Strides::transposed(wide),
                    T::one(),
                    &mut dw,
                    Strides::row_major(ck),
                );
            }
            if tb {
                for (d, row) in db.iter_mut().zip(gw.chunks(wide)) {
                    *d = *d + row.iter().copied().sum::<T>();
                }
            }
            if tx {
                let dc = &mut dcols[..ck * wide];
                gemm(
                    ck,
                    cout,
                    wide,
                    T::one(),
                    wd,
                    Strides::transposed(ck),
                    gw,
                    Strides::row_major(wide),
                    T::zero(),
                    dc,
                    Strides::row_major(wide),
                );
                for c in 0..cin {
                    for j in 0..k {
                        let row = &dc[(c * k + j) * wide..(c * k + j + 1) * wide];
                        for i in 0..m {
                            let d0 = ((s + i) * cin + c) * len + j;
                            for (d, &v) in dx[d0..d0 + lout].iter_mut().zip(&row[i * lout..(i + 1) * lout]) {
                                *d = *d + v;
                            }
                        }
                    }
                }
            }
        }
        if tw {
            accumulate(grads, w, Tensor::new(&[cout, cin, k], dw).unwrap());
        }
        if tb {
            accumulate(grads, b, Tensor::new(&[cout], db).unwrap());
        }
        if tx {
            accumulate(grads, x, Tensor::new(&[n, cin, len], dx).unwrap());
        }
    }
}

/// Instances per im2col block, sized to keep a block cache resident.
fn conv_chunk(ck: usize, lout: usize) -> usize {
    const BLOCK_ELEMS: usize = 1 << CONV_BLOCK_SHIFT;
    (BLOCK_ELEMS / (ck * lout).max(1)).max(1)
}

const CONV_BLOCK_SHIFT: u32 = 17;

pub(crate) fn clamp_prob(p: f64) -> f64 {
    p.clamp(PROB_CLAMP, 1.0 - PROB_CLAMP)
}

/// Max-subtracted softmax of a single row.
pub fn softmax_in_place<T: Scalar>(row: &mut [T]) {
    let max = row.iter().copied().fold(T::neg_infinity(), T::max);
    let mut sum = T::zero();
    for v in row.iter_mut() {
        *v = (*v - max).exp();
        sum = sum + *v;
    }
    for v in row.iter_mut() {
        *v = *v / sum;
    }
}
