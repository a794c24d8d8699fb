use super::{ParamStore, Scalar, Tensor};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;
pub const BASE_LR: f64 = 0.001;
pub const LR_DECAY: f64 = 0.9;

/// Adam optimiser state: first and second moments per parameter tensor.
#[derive(Debug, Clone)]
pub struct AdamState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    pub t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Scalar> AdamState<T> {
    pub fn new(params: &ParamStore<T>, lr: f64) -> Self {
        let zeros = || params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect::<Vec<_>>();
        AdamState { m: zeros(), v: zeros(), t: 0, lr, beta1: BETA1, beta2: BETA2, eps: EPSILON }
    }

    /// One bias-corrected Adam update. Parameters without a gradient are
    /// left untouched, along with their moments.
    pub fn step(&mut self, params: &mut ParamStore<T>, grads: &[Option<Tensor<T>>]) {
        self.t += 1;
        let t = self.t as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        let (b1, b2) = (T::from_f64(self.beta1), T::from_f64(self.beta2));
        let (ob1, ob2) = (T::from_f64(1.0 - self.beta1), T::from_f64(1.0 - self.beta2));
        let (lr, eps) = (T::from_f64(self.lr), T::from_f64(self.eps));
        let (c1, c2) = (T::from_f64(c1), T::from_f64(c2));
        for (i, p) in params.tensors_mut().iter_mut().enumerate() {
            let Some(g) = grads.get(i).and_then(|g| g.as_ref()) else {
                continue;
            };
            debug_assert_eq!(g.shape(), p.shape());
            let m = self.m[i].data_mut();
            let v = self.v[i].data_mut();
            for (((pv, &gv), mv), vv) in p.data_mut().iter_mut().zip(g.data()).zip(m).zip(v) {
                *mv = b1 * *mv + ob1 * gv;
                *vv = b2 * *vv + ob2 * gv * gv;
                let mhat = *mv / c1;
                let vhat = *vv / c2;
                *pv = *pv - lr * mhat / (vhat.sqrt() + eps);
            }
        }
    }
}

/// Learning rate at the start of `epoch` (0-based) of `total`: constant for
/// the first half, then multiplied by `factor` at the start of every epoch.
pub fn lr_schedule(epoch: usize, total: usize, base: f64, factor: f64) -> f64 {
    let half = total.div_ceil(2);
    if epoch < half {
        base
    } else {
        base * factor.powi((epoch - half + 1) as i32)
    }
}
