use std::collections::{BTreeMap, HashMap, HashSet};

use rayon::prelude::*;
use serde::Serialize;

use crate::bags::Bag;
use crate::error::{Error, Result};
use crate::ingest::AnnotationScheme;
use crate::mil::{simple_mil_train, threshold_label, train, MilModel, SimpleMilModel, TrainConfig};

use super::metrics::{compute_metrics, Counts, MeanStd, Metrics};
use super::plan::FoldPlan;

/// Bag probability with optional per-slot attention.
#[derive(Debug, Clone, PartialEq)]
pub struct Scored {
    pub probability: f64,
    pub attention: Option<Vec<f64>>,
}

/// A trainable bag classifier, as seen by the protocols.
pub trait Learner: Sync {
    type Model: Send;

    fn name(&self) -> String;
    fn fit(&self, train: &[&Bag], scheme: AnnotationScheme, seed: u64) -> Result<Self::Model>;
    fn score(&self, model: &Self::Model, bag: &Bag) -> Result<Scored>;

    fn checkpoint(&self, _model: &Self::Model) -> Option<Vec<u8>> {
        None
    }
}

/// Attention MIL with the given training configuration; seed and label
/// scheme are replaced per run.
#[derive(Debug, Clone)]
pub struct AttentionLearner(pub TrainConfig);

impl Learner for AttentionLearner {
    type Model = MilModel<f32>;

    fn name(&self) -> String {
        format!("attention-mil-{}", self.0.variant)
    }

    fn fit(&self, train_bags: &[&Bag], scheme: AnnotationScheme, seed: u64) -> Result<Self::Model> {
        let cfg = TrainConfig { seed, scheme, ..self.0.clone() };
        Ok(train(train_bags, &cfg)?.model)
    }

    fn score(&self, model: &Self::Model, bag: &Bag) -> Result<Scored> {
        let p = model.predict(bag)?;
        Ok(Scored { probability: p.probability, attention: Some(p.attention) })
    }

    fn checkpoint(&self, model: &Self::Model) -> Option<Vec<u8>> {
        Some(model.to_checkpoint())
    }
}

#[derive(Debug, Clone)]
pub struct SimpleLearner(pub TrainConfig);

impl Learner for SimpleLearner {
    type Model = SimpleMilModel;

    fn name(&self) -> String {
        "simple-mil-fc".into()
    }

    fn fit(&self, train_bags: &[&Bag], scheme: AnnotationScheme, seed: u64) -> Result<Self::Model> {
        let cfg = TrainConfig { seed, scheme, ..self.0.clone() };
        Ok(simple_mil_train(train_bags, &cfg)?.model)
    }

    fn score(&self, model: &Self::Model, bag: &Bag) -> Result<Scored> {
        Ok(Scored { probability: model.predict_proba(bag)?, attention: None })
    }

    fn checkpoint(&self, model: &Self::Model) -> Option<Vec<u8>> {
        Some(model.to_checkpoint())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubjectPrediction {
    pub subject_id: String,
    pub probability: f64,
    pub label: u8,
    #[serde(skip)]
    pub attention: Option<Vec<f64>>,
}

/// One training run: a fold under one trial seed.
#[derive(Debug, Clone, Serialize)]
pub struct TrialOutcome {
    pub fold: usize,
    pub repetition: usize,
    pub trial: usize,
    pub seed: u64,
    pub predictions: Vec<SubjectPrediction>,
    #[serde(skip)]
    pub checkpoint: Option<Vec<u8>>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MetricsReport {
    pub model: String,
    pub eval_scheme: AnnotationScheme,
    pub precision: MeanStd,
    pub sensitivity: MeanStd,
    pub specificity: MeanStd,
    pub f1: MeanStd,
    /// Confusion counts of every aggregation unit (repetition, trial).
    pub counts: Vec<Counts>,
}

#[derive(Debug, Clone, Serialize)]
pub struct ProtocolOutcome {
    pub model: String,
    pub train_scheme: AnnotationScheme,
    pub runs: Vec<TrialOutcome>,
    pub reports: Vec<MetricsReport>,
}

impl ProtocolOutcome {
    pub fn report(&self, scheme: AnnotationScheme) -> Option<&MetricsReport> {
        self.reports.iter().find(|r| r.eval_scheme == scheme)
    }
}

/// Worker count: `MILTREMOR_THREADS` if set and positive, else all cores.
pub fn worker_threads() -> usize {
    std::env::var("MILTREMOR_THREADS")
        .ok()
        .and_then(|v| v.trim().parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Runs `f` on a pool capped at [`worker_threads`].
pub fn with_workers<R: Send>(f: impl FnOnce() -> R + Send) -> R {
    match rayon::ThreadPoolBuilder::new().num_threads(worker_threads()).build() {
        Ok(pool) => pool.install(f),
        Err(_) => f(),
    }
}

fn run_one<L: Learner>(
    plan: &FoldPlan,
    by_id: &HashMap<&str, &Bag>,
    learner: &L,
    train_scheme: AnnotationScheme,
    fold_idx: usize,
    trial: usize,
) -> Result<TrialOutcome> {
    let fold = &plan.folds[fold_idx];
    let train_set: HashSet<&str> = fold.train.iter().map(String::as_str).collect();
    if let Some(leak) = fold.test.iter().find(|t| train_set.contains(t.as_str())) {
        return Err(Error::Precondition(format!("subject {leak} is in both train and test")));
    }
    let lookup = |id: &String| -> Result<&Bag> {
        by_id.get(id.as_str()).copied().ok_or_else(|| Error::NoData(format!("no bag for subject {id}")))
    };
    let train_bags = fold.train.iter().map(lookup).collect::<Result<Vec<_>>>()?;
    let seed = plan.trial_seed(fold_idx, trial);
    let model = learner.fit(&train_bags, train_scheme, seed)?;
    let mut predictions = Vec::with_capacity(fold.test.len());
    for id in &fold.test {
        let s = learner.score(&model, lookup(id)?)?;
        predictions.push(SubjectPrediction {
            subject_id: id.clone(),
            probability: s.probability,
            label: threshold_label(s.probability),
            attention: s.attention,
        });
    }
    Ok(TrialOutcome {
        fold: fold_idx,
        repetition: fold.repetition,
        trial,
        seed,
        predictions,
        checkpoint: learner.checkpoint(&model),
    })
}

/// Trains every (fold, trial) on `train_scheme` labels and scores the
/// held-out subjects against each of `eval_schemes`. Predictions of one
/// (repetition, trial) are pooled over its folds before computing metrics;
/// mean and std run across those pools.
pub fn run_protocol<L: Learner>(
    plan: &FoldPlan,
    bags: &[Bag],
    learner: &L,
    train_scheme: AnnotationScheme,
    eval_schemes: &[AnnotationScheme],
) -> Result<ProtocolOutcome> {
    let by_id: HashMap<&str, &Bag> = bags.iter().map(|b| (b.subject_id.as_str(), b)).collect();
    let jobs: Vec<(usize, usize)> =
        (0..plan.folds.len()).flat_map(|f| (0..plan.trials_per_fold).map(move |t| (f, t))).collect();
    let results: Vec<Result<TrialOutcome>> = with_workers(|| {
        jobs.par_iter()
            .map(|&(f, t)| {
                run_one(plan, &by_id, learner, train_scheme, f, t)
                    .map_err(|e| Error::Fold { fold: f, source: Box::new(e) })
            })
            .collect()
    });
    let runs = results.into_iter().collect::<Result<Vec<_>>>()?;

    let mut reports = Vec::with_capacity(eval_schemes.len());
    for &scheme in eval_schemes {
        let mut units: BTreeMap<(usize, usize), (Vec<u8>, Vec<u8>)> = BTreeMap::new();
        for run in &runs {
            let entry = units.entry((run.repetition, run.trial)).or_default();
            for p in &run.predictions {
                entry.0.push(p.label);
                entry.1.push(by_id[p.subject_id.as_str()].labels.get(scheme));
            }
        }
        let metrics = units.values().map(|(p, y)| compute_metrics(p, y)).collect::<Result<Vec<Metrics>>>()?;
        let pick = |f: fn(&Metrics) -> f64| MeanStd::of(&metrics.iter().map(f).collect::<Vec<_>>());
        reports.push(MetricsReport {
            model: learner.name(),
            eval_scheme: scheme,
            precision: pick(|m| m.precision),
            sensitivity: pick(|m| m.sensitivity),
            specificity: pick(|m| m.specificity),
            f1: pick(|m| m.f1),
            counts: metrics.iter().map(|m| m.counts).collect(),
        });
    }
    Ok(ProtocolOutcome { model: learner.name(), train_scheme, runs, reports })
}
