use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::{Bag, Instance};
use crate::dsp::{SEGMENT_LEN, SPECTRUM_BINS};
use crate::error::{Error, Result};
use crate::nn::{
    decode_checkpoint, encode_checkpoint, glorot, Graph, LayerCount, LayerSpec, Mode, ParamStore, Scalar, Stack,
    Tensor, Var, LEAKY_SLOPE,
};
use crate::seed::derive_seed;

pub const EMBED_DIM: usize = 64;
pub const ATTN_DIM: usize = 16;
pub const THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Variant {
    Fc,
    Cnn,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Fc => "fc",
            Variant::Cnn => "cnn",
        }
    }

    pub fn default_epochs(self) -> usize {
        match self {
            Variant::Fc => 1000,
            Variant::Cnn => 50,
        }
    }

    /// Per-instance input shape.
    pub fn input_shape(self) -> Vec<usize> {
        match self {
            Variant::Fc => vec![SPECTRUM_BINS],
            Variant::Cnn => vec![3, SEGMENT_LEN],
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fc" => Ok(Variant::Fc),
            "cnn" => Ok(Variant::Cnn),
            _ => Err(Error::Precondition(format!("unknown variant {s:?} (expected fc or cnn)"))),
        }
    }
}

fn lrelu() -> LayerSpec {
    LayerSpec::LeakyRelu { slope: LEAKY_SLOPE }
}

pub fn phi_specs(variant: Variant) -> Vec<LayerSpec> {
    match variant {
        Variant::Fc => vec![
            LayerSpec::Dense { inputs: SPECTRUM_BINS, outputs: 256 },
            lrelu(),
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { inputs: 256, outputs: 128 },
            lrelu(),
            LayerSpec::Dropout { p: 0.5 },
            LayerSpec::Dense { inputs: 128, outputs: EMBED_DIM },
        ],
        Variant::Cnn => {
            let mut v = Vec::new();
            for (kernel, filters) in [(8, 32), (8, 32), (16, 16), (16, 16)] {
                v.push(LayerSpec::Conv1d { filters, kernel });
                v.push(lrelu());
                v.push(LayerSpec::MaxPool1d { kernel: 2 });
            }
            v.push(LayerSpec::Flatten);
            v.push(LayerSpec::Dense { inputs: 288, outputs: EMBED_DIM });
            v
        }
    }
}

pub fn rho_specs() -> Vec<LayerSpec> {
    vec![
        LayerSpec::Dense { inputs: EMBED_DIM, outputs: 32 },
        lrelu(),
        LayerSpec::Dropout { p: 0.2 },
        LayerSpec::Dense { inputs: 32, outputs: 16 },
        lrelu(),
        LayerSpec::Dropout { p: 0.2 },
        LayerSpec::Dense { inputs: 16, outputs: 2 },
        LayerSpec::Softmax,
    ]
}

/// Stacks the instances of a bag into the input tensor of `variant`.
pub fn instance_input<T: Scalar>(variant: Variant, instances: &[Instance]) -> Tensor<T> {
    let n = instances.len();
    let (shape, data): (Vec<usize>, Vec<T>) = match variant {
        Variant::Fc => (
            vec![n, SPECTRUM_BINS],
            instances.iter().flat_map(|i| i.spectrum.0.iter().map(|&v| T::from_f64(v))).collect(),
        ),
        Variant::Cnn => (
            vec![n, 3, SEGMENT_LEN],
            instances.iter().flat_map(|i| i.raw.iter().map(|&v| T::from_f64(v as f64))).collect(),
        ),
    };
    Tensor::new(&shape, data).expect("instance layout")
}

/// Binary cross-entropy of a class-1 probability, clamped away from 0 and 1.
pub fn bag_loss(p: f64, y: u8) -> f64 {
    let p = crate::nn::clamp_prob(p);
    if y == 1 {
        -p.ln()
    } else {
        -(1.0 - p).ln()
    }
}

/// Loss and parameter gradients on one bag, shared by the trainable models.
pub(crate) trait Objective: Sync {
    fn loss_grads(
        &self,
        params: &ParamStore<f32>,
        x: &Tensor<f32>,
        label: u8,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<Option<Tensor<f32>>>)>;
}

/// Parameter layout of the attention model.
#[derive(Debug, Clone, PartialEq)]
pub struct MilArch {
    pub variant: Variant,
    phi: Stack,
    rho: Stack,
    attn_v: usize,
    attn_w: usize,
}

impl MilArch {
    fn build<T: Scalar, R: Rng + ?Sized>(variant: Variant, store: &mut ParamStore<T>, rng: &mut R) -> Result<Self> {
        let phi = Stack::build("phi", &phi_specs(variant), &variant.input_shape(), store, rng)?;
        let attn_v = store.add("attention.V", glorot(&[ATTN_DIM, EMBED_DIM], EMBED_DIM, ATTN_DIM, rng));
        let attn_w = store.add("attention.w", glorot(&[ATTN_DIM], ATTN_DIM, 1, rng));
        let rho = Stack::build("rho", &rho_specs(), &[EMBED_DIM], store, rng)?;
        Ok(MilArch { variant, phi, rho, attn_v, attn_w })
    }

    /// `x: [n, ..input]` to `h: [n, 64]`.
    pub fn embed<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        params: &ParamStore<T>,
        x: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let got = &g.value(x).shape()[1..];
        if got != self.variant.input_shape() {
            return Err(Error::InputKind(match self.variant {
                Variant::Fc => "fc variant expects [n, 76] spectra",
                Variant::Cnn => "cnn variant expects [n, 3, 500] raw segments",
            }));
        }
        self.phi.forward(g, params, x, mode)
    }

    /// Returns the pooled embedding `[1, 64]` and the attention row `[1, n]`.
    pub fn attention_pool<T: Scalar>(&self, g: &mut Graph<T>, params: &ParamStore<T>, h: Var) -> Result<(Var, Var)> {
        let n = g.value(h).shape()[0];
        if n == 0 {
            return Err(Error::EmptyBag);
        }
        let v = g.param(self.attn_v, params.get(self.attn_v));
        let w = g.param(self.attn_w, params.get(self.attn_w));
        let u = g.matmul_bt(h, v)?;
        let u = g.tanh(u);
        let w = g.reshape(w, &[ATTN_DIM, 1])?;
        let s = g.matmul(u, w)?;
        let s = g.reshape(s, &[1, n])?;
        let a = g.softmax(s)?;
        let z = g.matmul(a, h)?;
        Ok((z, a))
    }

    /// `z: [1, 64]` to class probabilities `[1, 2]`.
    pub fn classify<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        params: &ParamStore<T>,
        z: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        self.rho.forward(g, params, z, mode)
    }

    /// Full forward pass; returns (probabilities, attention).
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        params: &ParamStore<T>,
        x: Tensor<T>,
        mode: &mut Mode<'_, R>,
    ) -> Result<(Var, Var)> {
        let x = g.input(x);
        let h = self.embed(g, params, x, mode)?;
        let (z, a) = self.attention_pool(g, params, h)?;
        let p = self.classify(g, params, z, mode)?;
        Ok((p, a))
    }

    /// Loss on one bag and its gradients. `rng = None` disables dropout.
    pub fn loss_and_grads<T: Scalar>(
        &self,
        params: &ParamStore<T>,
        x: Tensor<T>,
        label: u8,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<(f64, Vec<Option<Tensor<T>>>)> {
        let mut g = Graph::new();
        let mut mode = match rng {
            Some(r) => Mode::Train(r),
            None => Mode::Eval,
        };
        let (p, _) = self.forward(&mut g, params, x, &mut mode)?;
        let loss = g.cross_entropy(p, label as f64)?;
        let value = g.value(loss).data()[0].as_f64();
        Ok((value, g.backward(loss).into_params()))
    }

    pub fn layer_counts<T: Scalar>(&self, params: &ParamStore<T>) -> Vec<LayerCount> {
        let mut out = self.phi.layer_counts(params);
        out.push(LayerCount {
            layer: format!("attention V [{ATTN_DIM}x{EMBED_DIM}] + w [{ATTN_DIM}]"),
            params: params.get(self.attn_v).len() + params.get(self.attn_w).len(),
        });
        out.extend(self.rho.layer_counts(params));
        out
    }
}

impl Objective for MilArch {
    fn loss_grads(
        &self,
        params: &ParamStore<f32>,
        x: &Tensor<f32>,
        label: u8,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<Option<Tensor<f32>>>)> {
        self.loss_and_grads(params, x.clone(), label, Some(rng))
    }
}

/// Bag-level output of the attention model.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BagPrediction {
    pub subject_id: String,
    pub probability: f64,
    pub label: u8,
    /// One weight per slot of the bag; zero on padded slots.
    pub attention: Vec<f64>,
}

pub fn threshold_label(p: f64) -> u8 {
    u8::from(p >= THRESHOLD)
}

/// Attention-pooled MIL model.
#[derive(Debug, Clone, PartialEq)]
pub struct MilModel<T> {
    pub arch: MilArch,
    pub params: ParamStore<T>,
}

impl<T: Scalar> MilModel<T> {
    pub fn new(variant: Variant, seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
        let mut params = ParamStore::new();
        let arch = MilArch::build(variant, &mut params, &mut rng)?;
        Ok(MilModel { arch, params })
    }

    pub fn variant(&self) -> Variant {
        self.arch.variant
    }

    pub fn cast<U: Scalar>(&self) -> MilModel<U> {
        MilModel { arch: self.arch.clone(), params: self.params.cast() }
    }

    /// Eval-mode class-1 probability and per-instance attention over the
    /// given instances.
    pub fn forward_instances(&self, instances: &[Instance]) -> Result<(f64, Vec<f64>)> {
        if instances.is_empty() {
            return Err(Error::EmptyBag);
        }
        let mut g = Graph::new();
        let x = instance_input(self.arch.variant, instances);
        let (p, a) = self.arch.forward::<T, ChaCha8Rng>(&mut g, &self.params, x, &mut Mode::Eval)?;
        let prob = g.value(p).data()[1].as_f64();
        let att = g.value(a).data().iter().map(|v| v.as_f64()).collect();
        Ok((prob, att))
    }

    pub fn predict(&self, bag: &Bag) -> Result<BagPrediction> {
        let (probability, mut attention) = self.forward_instances(&bag.instances)?;
        attention.resize(bag.capacity.max(attention.len()), 0.0);
        Ok(BagPrediction {
            subject_id: bag.subject_id.clone(),
            probability,
            label: threshold_label(probability),
            attention,
        })
    }

    pub fn layer_counts(&self) -> Vec<LayerCount> {
        self.arch.layer_counts(&self.params)
    }

    pub fn param_count(&self) -> usize {
        self.params.count()
    }

    pub fn checkpoint_kind(&self) -> String {
        format!("mil-{}", self.arch.variant)
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        encode_checkpoint(&self.checkpoint_kind(), &self.params)
    }

    pub fn from_checkpoint(bytes: &[u8]) -> Result<Self> {
        let ck = decode_checkpoint(bytes)?;
        let variant = match ck.kind.strip_prefix("mil-") {
            Some(v) => v.parse()?,
            None => return Err(Error::format("checkpoint", format!("not an attention model: {:?}", ck.kind))),
        };
        let mut model = MilModel::new(variant, 0)?;
        ck.load_into(&mut model.params)?;
        Ok(model)
    }
}
