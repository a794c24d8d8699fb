use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

use super::graph::{Graph, Var};
use super::{Scalar, Tensor};

/// Default negative slope of every leaky ReLU in the model.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Declarative description of one layer.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Dense {
        inputs: usize,
        outputs: usize,
    },
    /// `inputs` is inferred from the incoming shape.
    Conv1d {
        filters: usize,
        kernel: usize,
    },
    MaxPool1d {
        kernel: usize,
    },
    LeakyRelu {
        slope: f64,
    },
    Dropout {
        p: f64,
    },
    Flatten,
    Softmax,
    Tanh,
    Sigmoid,
}

/// Owned parameter tensors with names, addressed by index.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamStore<T> {
    names: Vec<String>,
    tensors: Vec<Tensor<T>>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        ParamStore { names: Vec::new(), tensors: Vec::new() }
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, t: Tensor<T>) -> usize {
        self.names.push(name.into());
        self.tensors.push(t);
        self.tensors.len() - 1
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: usize) -> &Tensor<T> {
        &self.tensors[id]
    }

    pub fn get_mut(&mut self, id: usize) -> &mut Tensor<T> {
        &mut self.tensors[id]
    }

    pub fn name(&self, id: usize) -> &str {
        &self.names[id]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors_mut(&mut self) -> &mut [Tensor<T>] {
        &mut self.tensors
    }

    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore { names: self.names.clone(), tensors: self.tensors.iter().map(Tensor::cast).collect() }
    }
}

/// Uniform Glorot initialisation, `±sqrt(6 / (fan_in + fan_out))`.
pub fn glorot<T: Scalar, R: Rng + ?Sized>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let limit = (6.0 / (fan_in + fan_out) as f64).sqrt();
    let n: usize = shape.iter().product();
    let data = (0..n).map(|_| T::from_f64(rng.random_range(-limit..limit))).collect();
    Tensor::new(shape, data).expect("length from shape")
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Layer {
    Dense { w: usize, b: usize },
    Conv1d { w: usize, b: usize },
    MaxPool1d { kernel: usize },
    LeakyRelu { slope: f64 },
    Dropout { p: f64 },
    Flatten,
    Softmax,
    Tanh,
    Sigmoid,
}

/// Per-layer parameter count, for reporting.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct LayerCount {
    pub layer: String,
    pub params: usize,
}

/// Sequential stack of layers whose parameters live in a [`ParamStore`].
///
/// Shapes exclude the leading instance axis.
#[derive(Debug, Clone, PartialEq)]
pub struct Stack {
    prefix: String,
    specs: Vec<LayerSpec>,
    layers: Vec<Layer>,
    in_shape: Vec<usize>,
    out_shape: Vec<usize>,
}

/// Evaluation mode of a forward pass.
pub enum Mode<'a, R: Rng + ?Sized> {
    Eval,
    Train(&'a mut R),
}

impl<R: Rng + ?Sized> Mode<'_, R> {
    pub fn rng(&mut self) -> Option<&mut R> {
        match self {
            Mode::Eval => None,
            Mode::Train(r) => Some(&mut **r),
        }
    }
}

fn propagate(spec: &LayerSpec, shape: &[usize]) -> Result<Vec<usize>> {
    let bad = |what: &str| Error::Shape(format!("{what} cannot accept input shape {shape:?}"));
    Ok(match *spec {
        LayerSpec::Dense { inputs, outputs } => match shape {
            [d] if *d == inputs => vec![outputs],
            _ => return Err(bad(&format!("dense {inputs}->{outputs}"))),
        },
        LayerSpec::Conv1d { filters, kernel } => match shape {
            [_, len] if *len >= kernel && kernel > 0 => vec![filters, len - kernel + 1],
            _ => return Err(bad("conv1d")),
        },
        LayerSpec::MaxPool1d { kernel } => match shape {
            [c, len] if *len >= kernel && kernel > 0 => vec![*c, len / kernel],
            _ => return Err(bad("maxpool1d")),
        },
        LayerSpec::Flatten => vec![shape.iter().product()],
        LayerSpec::Softmax => match shape {
            [_] => shape.to_vec(),
            _ => return Err(bad("softmax")),
        },
        LayerSpec::LeakyRelu { .. } | LayerSpec::Dropout { .. } | LayerSpec::Tanh | LayerSpec::Sigmoid => {
            shape.to_vec()
        }
    })
}

impl Stack {
    /// Allocates and initialises the parameters of `specs` for inputs of
    /// shape `in_shape`.
    pub fn build<T: Scalar, R: Rng + ?Sized>(
        prefix: &str,
        specs: &[LayerSpec],
        in_shape: &[usize],
        store: &mut ParamStore<T>,
        rng: &mut R,
    ) -> Result<Stack> {
        let mut shape = in_shape.to_vec();
        let mut layers = Vec::with_capacity(specs.len());
        for (i, spec) in specs.iter().enumerate() {
            let next = propagate(spec, &shape)?;
            let layer = match *spec {
                LayerSpec::Dense { inputs, outputs } => {
                    let w = store.add(format!("{prefix}.{i}.weight"), glorot(&[inputs, outputs], inputs, outputs, rng));
                    let b = store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[outputs]));
                    Layer::Dense { w, b }
                }
                LayerSpec::Conv1d { filters, kernel } => {
                    let cin = shape[0];
                    let w = store.add(
                        format!("{prefix}.{i}.weight"),
                        glorot(&[filters, cin, kernel], cin * kernel, filters * kernel, rng),
                    );
                    let b = store.add(format!("{prefix}.{i}.bias"), Tensor::zeros(&[filters]));
                    Layer::Conv1d { w, b }
                }
                LayerSpec::MaxPool1d { kernel } => Layer::MaxPool1d { kernel },
                LayerSpec::LeakyRelu { slope } => Layer::LeakyRelu { slope },
                LayerSpec::Dropout { p } => {
                    if !(0.0..1.0).contains(&p) {
                        return Err(Error::Precondition(format!("dropout probability {p}")));
                    }
                    Layer::Dropout { p }
                }
                LayerSpec::Flatten => Layer::Flatten,
                LayerSpec::Softmax => Layer::Softmax,
                LayerSpec::Tanh => Layer::Tanh,
                LayerSpec::Sigmoid => Layer::Sigmoid,
            };
            layers.push(layer);
            shape = next;
        }
        Ok(Stack {
            prefix: prefix.to_string(),
            specs: specs.to_vec(),
            layers,
            in_shape: in_shape.to_vec(),
            out_shape: shape,
        })
    }

    pub fn in_shape(&self) -> &[usize] {
        &self.in_shape
    }

    pub fn out_shape(&self) -> &[usize] {
        &self.out_shape
    }

    pub fn specs(&self) -> &[LayerSpec] {
        &self.specs
    }

    /// Forward pass over a batch `x: [n, ..in_shape]`.
    pub fn forward<T: Scalar, R: Rng + ?Sized>(
        &self,
        g: &mut Graph<T>,
        store: &ParamStore<T>,
        x: Var,
        mode: &mut Mode<'_, R>,
    ) -> Result<Var> {
        let mut h = x;
        for layer in &self.layers {
            h = match *layer {
                Layer::Dense { w, b } => {
                    let wv = g.param(w, store.get(w));
                    let bv = g.param(b, store.get(b));
                    g.dense(h, wv, bv)?
                }
                Layer::Conv1d { w, b } => {
                    let wv = g.param(w, store.get(w));
                    let bv = g.param(b, store.get(b));
                    g.conv1d(h, wv, bv)?
                }
                Layer::MaxPool1d { kernel } => g.maxpool1d(h, kernel)?,
                Layer::LeakyRelu { slope } => g.leaky_relu(h, slope),
                Layer::Dropout { p } => g.dropout(h, p, mode.rng())?,
                Layer::Flatten => {
                    let n = g.value(h).shape()[0];
                    let rest: usize = g.value(h).shape()[1..].iter().product();
                    g.reshape(h, &[n, rest])?
                }
                Layer::Softmax => g.softmax(h)?,
                Layer::Tanh => g.tanh(h),
                Layer::Sigmoid => g.sigmoid(h),
            };
        }
        Ok(h)
    }

    /// Trainable parameter count per parameterised layer.
    pub fn layer_counts<T: Scalar>(&self, store: &ParamStore<T>) -> Vec<LayerCount> {
        self.layers
            .iter()
            .zip(&self.specs)
            .enumerate()
            .filter_map(|(i, (layer, spec))| match *layer {
                Layer::Dense { w, b } | Layer::Conv1d { w, b } => Some(LayerCount {
                    layer: format!("{}.{i} {}", self.prefix, describe(spec, store.get(w).shape())),
                    params: store.get(w).len() + store.get(b).len(),
                }),
                _ => None,
            })
            .collect()
    }
}

fn describe(spec: &LayerSpec, wshape: &[usize]) -> String {
    match *spec {
        LayerSpec::Dense { inputs, outputs } => format!("dense {inputs}->{outputs}"),
        LayerSpec::Conv1d { filters, kernel } => {
            format!("conv1d k={kernel} f={filters} (in {})", wshape.get(1).copied().unwrap_or(0))
        }
        _ => String::new(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn shape_propagation_through_cnn_stack() {
        let specs = [
            LayerSpec::Conv1d { filters: 32, kernel: 8 },
            LayerSpec::MaxPool1d { kernel: 2 },
            LayerSpec::Conv1d { filters: 32, kernel: 8 },
            LayerSpec::MaxPool1d { kernel: 2 },
            LayerSpec::Conv1d { filters: 16, kernel: 16 },
            LayerSpec::MaxPool1d { kernel: 2 },
            LayerSpec::Conv1d { filters: 16, kernel: 16 },
            LayerSpec::MaxPool1d { kernel: 2 },
            LayerSpec::Flatten,
        ];
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let stack = Stack::build("phi", &specs, &[3, 500], &mut store, &mut rng).unwrap();
        // 500 -> 493 -> 246 -> 239 -> 119 -> 104 -> 52 -> 37 -> 18
        assert_eq!(stack.out_shape(), &[288]);
    }

    #[test]
    fn glorot_bounds_and_zero_bias() {
        let mut store = ParamStore::<f64>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let stack =
            Stack::build("d", &[LayerSpec::Dense { inputs: 10, outputs: 6 }], &[10], &mut store, &mut rng).unwrap();
        let limit = (6.0f64 / 16.0).sqrt();
        assert!(store.get(0).data().iter().all(|v| v.abs() <= limit));
        assert!(store.get(1).data().iter().all(|&v| v == 0.0));
        assert_eq!(stack.layer_counts(&store)[0].params, 66);
    }

    #[test]
    fn rejects_incompatible_specs() {
        let mut store = ParamStore::<f32>::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(Stack::build("x", &[LayerSpec::Dense { inputs: 5, outputs: 2 }], &[4], &mut store, &mut rng).is_err());
        assert!(Stack::build("x", &[LayerSpec::MaxPool1d { kernel: 2 }], &[1, 1], &mut store, &mut rng).is_err());
        assert!(Stack::build("x", &[LayerSpec::Dropout { p: 1.0 }], &[4], &mut store, &mut rng).is_err());
    }
}
