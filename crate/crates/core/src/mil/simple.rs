//! Instance-level baseline: every instance inherits its bag label and the
//! bag probability is the mean instance probability.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bags::{Bag, Instance};
use crate::error::{Error, Result};
use crate::nn::{encode_checkpoint, Graph, Mode, ParamStore, Scalar, Stack, Tensor};
use crate::seed::derive_seed;

use super::model::{instance_input, phi_specs, rho_specs, Objective, Variant, EMBED_DIM};
use super::train::{fit, training_labels, TrainConfig, Trained};

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleArch {
    phi: Stack,
    rho: Stack,
}

impl SimpleArch {
    /// Per-instance class-1 probabilities `[n, 2]`.
    fn forward<T: Scalar>(
        &self,
        g: &mut Graph<T>,
        params: &ParamStore<T>,
        x: Tensor<T>,
        mode: &mut Mode<'_, ChaCha8Rng>,
    ) -> Result<crate::nn::Var> {
        let x = g.input(x);
        let h = self.phi.forward(g, params, x, mode)?;
        self.rho.forward(g, params, h, mode)
    }
}

impl Objective for SimpleArch {
    fn loss_grads(
        &self,
        params: &ParamStore<f32>,
        x: &Tensor<f32>,
        label: u8,
        rng: &mut ChaCha8Rng,
    ) -> Result<(f64, Vec<Option<Tensor<f32>>>)> {
        let mut g = Graph::new();
        let p = self.forward(&mut g, params, x.clone(), &mut Mode::Train(rng))?;
        let loss = g.cross_entropy(p, label as f64)?;
        let value = g.value(loss).data()[0].as_f64();
        Ok((value, g.backward(loss).into_params()))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimpleMilModel {
    pub arch: SimpleArch,
    pub params: ParamStore<f32>,
}

impl SimpleMilModel {
    pub fn new(seed: u64) -> Result<Self> {
        let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(seed, &[0]));
        let mut params = ParamStore::new();
        let phi = Stack::build("phi", &phi_specs(Variant::Fc), &Variant::Fc.input_shape(), &mut params, &mut rng)?;
        let rho = Stack::build("rho", &rho_specs(), &[EMBED_DIM], &mut params, &mut rng)?;
        Ok(SimpleMilModel { arch: SimpleArch { phi, rho }, params })
    }

    pub fn instance_probabilities(&self, instances: &[Instance]) -> Result<Vec<f64>> {
        if instances.is_empty() {
            return Err(Error::EmptyBag);
        }
        let mut g = Graph::new();
        let x = instance_input::<f32>(Variant::Fc, instances);
        let p = self.arch.forward(&mut g, &self.params, x, &mut Mode::Eval)?;
        Ok(g.value(p).data().chunks(2).map(|r| r[1] as f64).collect())
    }

    pub fn predict_proba(&self, bag: &Bag) -> Result<f64> {
        Ok(mean_probability(&self.instance_probabilities(&bag.instances)?))
    }

    pub fn to_checkpoint(&self) -> Vec<u8> {
        encode_checkpoint("simple-fc", &self.params)
    }
}

/// Bag probability of the baseline: the mean of its instance probabilities.
pub fn mean_probability(ps: &[f64]) -> f64 {
    ps.iter().sum::<f64>() / ps.len() as f64
}

/// Trains the baseline with one step per bag on the mean instance loss. The
/// variant of `cfg` is ignored: the baseline always uses the spectral stack.
pub fn simple_mil_train(bags: &[&Bag], cfg: &TrainConfig) -> Result<Trained<SimpleMilModel>> {
    let labels = training_labels(bags, cfg.scheme)?;
    let inputs: Vec<Tensor<f32>> = bags.iter().map(|b| instance_input(Variant::Fc, &b.instances)).collect();
    let mut model = SimpleMilModel::new(cfg.seed)?;
    let history = fit(&model.arch, &mut model.params, &inputs, &labels, cfg)?;
    Ok(Trained { model, history })
}

/// Trains on `train` and returns bag probabilities for `test`.
pub fn simple_mil_train_predict(train: &[&Bag], test: &[&Bag], cfg: &TrainConfig) -> Result<Vec<f64>> {
    let trained = simple_mil_train(train, cfg)?;
    test.iter().map(|b| trained.model.predict_proba(b)).collect()
}
