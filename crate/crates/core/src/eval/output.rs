use serde::Serialize;

use crate::bags::Bag;
use crate::error::Result;
use crate::ingest::AnnotationScheme;

use super::metrics::MeanStd;
use super::plan::FoldPlan;
use super::protocol::{run_protocol, Learner, MetricsReport};

pub const DEFAULT_SWEEP_SIZES: [usize; 6] = [10, 100, 250, 500, 1000, 1500];

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub k_t: usize,
    pub f1: MeanStd,
}

/// Re-runs the protocol on bag prefixes of each size.
pub fn bag_size_sweep<L: Learner>(
    sizes: &[usize],
    plan: &FoldPlan,
    bags: &[Bag],
    learner: &L,
    train_scheme: AnnotationScheme,
    eval_scheme: AnnotationScheme,
) -> Result<Vec<SweepRow>> {
    sizes
        .iter()
        .map(|&k| {
            let cut: Vec<Bag> = bags.iter().map(|b| b.truncated(k)).collect();
            let out = run_protocol(plan, &cut, learner, train_scheme, &[eval_scheme])?;
            Ok(SweepRow { k_t: k, f1: out.reports[0].f1 })
        })
        .collect()
}

fn with_header(config_hash: &str, body: Vec<u8>) -> String {
    format!("# config_hash={config_hash}\n{}", String::from_utf8(body).expect("csv output is UTF-8"))
}

/// Sweep table with columns `K_t,f1_mean,f1_std`.
pub fn sweep_csv(rows: &[SweepRow], config_hash: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(["K_t", "f1_mean", "f1_std"]).expect("in-memory write");
    for r in rows {
        w.write_record([r.k_t.to_string(), r.f1.mean.to_string(), r.f1.std.to_string()]).expect("in-memory write");
    }
    with_header(config_hash, w.into_inner().expect("in-memory flush"))
}

/// One row per (evaluation scheme, model), mean and std per metric.
pub fn reports_csv(reports: &[MetricsReport], config_hash: &str) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record([
        "eval_scheme",
        "model",
        "precision_mean",
        "precision_std",
        "sensitivity_mean",
        "sensitivity_std",
        "specificity_mean",
        "specificity_std",
        "f1_mean",
        "f1_std",
    ])
    .expect("in-memory write");
    for r in reports {
        let mut rec = vec![r.eval_scheme.to_string(), r.model.clone()];
        for m in [r.precision, r.sensitivity, r.specificity, r.f1] {
            rec.push(m.mean.to_string());
            rec.push(m.std.to_string());
        }
        w.write_record(&rec).expect("in-memory write");
    }
    with_header(config_hash, w.into_inner().expect("in-memory flush"))
}
