//! Attention-pooled multiple-instance model, its training loop, prediction,
//! attention reporting and the instance-level baseline.

mod model;
mod report;
mod simple;
mod train;

pub use model::{
    bag_loss, instance_input, phi_specs, rho_specs, threshold_label, BagPrediction, MilArch, MilModel, Variant,
    ATTN_DIM, EMBED_DIM, THRESHOLD,
};
pub use report::{attention_report, rank_by_attention, AttentionReport, KeyInstance, PredictionRecord, TopInstance};
pub use simple::{mean_probability, simple_mil_train, simple_mil_train_predict, SimpleMilModel};
pub use train::{mean_loss, train, TrainConfig, Trained};
