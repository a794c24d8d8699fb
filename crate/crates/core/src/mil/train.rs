use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::bags::Bag;
use crate::error::{Error, Result};
use crate::ingest::AnnotationScheme;
use crate::nn::{lr_schedule, AdamState, ParamStore, Tensor, BASE_LR, LR_DECAY};
use crate::seed::derive_seed;

use super::model::{instance_input, MilModel, Objective, Variant};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub variant: Variant,
    pub epochs: usize,
    pub base_lr: f64,
    pub decay: f64,
    pub seed: u64,
    pub scheme: AnnotationScheme,
}

impl TrainConfig {
    pub fn new(variant: Variant, seed: u64) -> Self {
        TrainConfig {
            variant,
            epochs: variant.default_epochs(),
            base_lr: BASE_LR,
            decay: LR_DECAY,
            seed,
            scheme: AnnotationScheme::SpExpert,
        }
    }
}

/// Labels of the training bags under `scheme`, refusing single-class sets
/// and empty bags.
pub(crate) fn training_labels(bags: &[&Bag], scheme: AnnotationScheme) -> Result<Vec<u8>> {
    if let Some(b) = bags.iter().find(|b| b.instances.is_empty()) {
        return Err(Error::Precondition(format!("bag {} has no instances", b.subject_id)));
    }
    let labels: Vec<u8> = bags.iter().map(|b| b.labels.get(scheme)).collect();
    let pos = labels.iter().filter(|&&l| l == 1).count();
    if pos == 0 || pos == labels.len() {
        return Err(Error::DegenerateLabels(format!(
            "{pos} positive of {} training bags under {scheme}",
            labels.len()
        )));
    }
    Ok(labels)
}

/// Runs Adam over `inputs` for the configured epochs, one bag per step, and
/// returns the mean training loss of every epoch.
pub(crate) fn fit<O: Objective>(
    objective: &O,
    params: &mut ParamStore<f32>,
    inputs: &[Tensor<f32>],
    labels: &[u8],
    cfg: &TrainConfig,
) -> Result<Vec<f64>> {
    if cfg.epochs == 0 {
        return Err(Error::Precondition("epochs must be at least 1".into()));
    }
    let mut order_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[1]));
    let mut dropout_rng = ChaCha8Rng::seed_from_u64(derive_seed(cfg.seed, &[2]));
    let mut adam = AdamState::new(params, cfg.base_lr);
    let mut order: Vec<usize> = (0..inputs.len()).collect();
    let mut history = Vec::with_capacity(cfg.epochs);
    for epoch in 0..cfg.epochs {
        adam.lr = lr_schedule(epoch, cfg.epochs, cfg.base_lr, cfg.decay);
        order.shuffle(&mut order_rng);
        let mut total = 0.0;
        for &i in &order {
            let (loss, grads) = objective.loss_grads(params, &inputs[i], labels[i], &mut dropout_rng)?;
            if !loss.is_finite() {
                return Err(Error::Diverged(format!("non-finite loss at epoch {epoch}")));
            }
            total += loss;
            adam.step(params, &grads);
        }
        history.push(total / inputs.len() as f64);
        log::debug!("epoch {epoch}: loss {:.5}", history[epoch]);
    }
    Ok(history)
}

/// Trained model with its per-epoch training loss.
#[derive(Debug, Clone)]
pub struct Trained<M> {
    pub model: M,
    pub history: Vec<f64>,
}

pub fn train(bags: &[&Bag], cfg: &TrainConfig) -> Result<Trained<MilModel<f32>>> {
    let labels = training_labels(bags, cfg.scheme)?;
    let inputs: Vec<Tensor<f32>> = bags.iter().map(|b| instance_input(cfg.variant, &b.instances)).collect();
    let mut model = MilModel::<f32>::new(cfg.variant, cfg.seed)?;
    let history = fit(&model.arch, &mut model.params, &inputs, &labels, cfg)?;
    Ok(Trained { model, history })
}

/// Eval-mode mean bag loss.
pub fn mean_loss(model: &MilModel<f32>, bags: &[&Bag], scheme: AnnotationScheme) -> Result<f64> {
    let mut total = 0.0;
    for b in bags {
        let (p, _) = model.forward_instances(&b.instances)?;
        total += super::bag_loss(p, b.labels.get(scheme));
    }
    Ok(total / bags.len().max(1) as f64)
}
