use serde::Serialize;

use crate::bags::Bag;
use crate::error::{Error, Result};
use crate::nn::Scalar;

use super::model::{BagPrediction, MilModel};

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct KeyInstance {
    pub index: usize,
    pub session_id: String,
    pub offset: u64,
    pub weight: f64,
    pub band_e: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttentionReport {
    pub subject_id: String,
    pub probability: f64,
    pub label: u8,
    /// Highest weights first.
    pub top: Vec<KeyInstance>,
    /// The `n` lowest weights, still in descending order.
    pub bottom: Vec<KeyInstance>,
}

/// Real-instance indices ordered by attention weight, highest first; ties
/// go to the lower index.
pub fn rank_by_attention(attention: &[f64], real: usize) -> Vec<usize> {
    let mut idx: Vec<usize> = (0..real).collect();
    idx.sort_by(|&a, &b| attention[b].total_cmp(&attention[a]).then(a.cmp(&b)));
    idx
}

pub fn attention_report<T: Scalar>(model: &MilModel<T>, bag: &Bag, n: usize) -> Result<AttentionReport> {
    let real = bag.real_count();
    if real < 2 * n {
        return Err(Error::BagTooSmall { have: real, need: 2 * n });
    }
    let pred = model.predict(bag)?;
    Ok(report_from_prediction(bag, &pred, n))
}

pub(crate) fn report_from_prediction(bag: &Bag, pred: &BagPrediction, n: usize) -> AttentionReport {
    let order = rank_by_attention(&pred.attention, bag.real_count());
    let key = |i: usize| {
        let inst = &bag.instances[i];
        KeyInstance {
            index: i,
            session_id: inst.session_id.clone(),
            offset: inst.offset,
            weight: pred.attention[i],
            band_e: inst.band_e,
        }
    };
    AttentionReport {
        subject_id: bag.subject_id.clone(),
        probability: pred.probability,
        label: pred.label,
        top: order[..n].iter().map(|&i| key(i)).collect(),
        bottom: order[order.len() - n..].iter().map(|&i| key(i)).collect(),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TopInstance {
    pub session: String,
    pub offset: u64,
    pub weight: f64,
}

/// One line of the prediction JSONL output.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PredictionRecord {
    pub subject_id: String,
    pub probability: f64,
    pub label: u8,
    pub top_instances: Vec<TopInstance>,
}

impl PredictionRecord {
    /// Without attention weights (an instance-level model) the record has
    /// no top instances.
    pub fn new(bag: &Bag, pred: &BagPrediction, top: usize) -> Self {
        let order =
            if pred.attention.is_empty() { Vec::new() } else { rank_by_attention(&pred.attention, bag.real_count()) };
        PredictionRecord {
            subject_id: pred.subject_id.clone(),
            probability: pred.probability,
            label: pred.label,
            top_instances: order
                .iter()
                .take(top)
                .map(|&i| TopInstance {
                    session: bag.instances[i].session_id.clone(),
                    offset: bag.instances[i].offset,
                    weight: pred.attention[i],
                })
                .collect(),
        }
    }
}
