//! Batch commands over on-disk artifacts: the library side of the CLI.
//!
//! Cache layout under `--cache`:
//!
//! ```text
//! rejections.jsonl              one quality verdict or read error per session
//! highpass_taps.csv             gravity-removal filter coefficients
//! conditioned/<subject>.mtcs    accepted sessions after conditioning
//! bags/<subject>.mtbg           bags of eligible subjects
//! bags/eligibility.json         pool sizes and verdicts of all subjects
//! bags/spectra/<subject>.csv    spectra of the bag instances
//! ```

mod config;
mod store;
mod svg;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use rayon::prelude::*;
use serde::Serialize;

use crate::bags::{bag_from_sessions, decode_bag, encode_bag, subject_eligible, Bag};
use crate::dsp::{condition, design_highpass, spectra_csv, FirFilter};
use crate::error::{Error, Result};
use crate::eval::{
    bag_size_sweep, plan_loso, plan_rkf, reports_csv, run_protocol, sweep_csv, with_workers, AttentionLearner,
    FoldPlan, Learner, MetricsReport, ProtocolOutcome, SimpleLearner, SweepRow, TrialOutcome,
};
use crate::fsutil::{read, read_string, write_atomic};
use crate::ingest::{load_manifest, parse_session_csv, validate_session, AnnotationScheme, LabelSet, RejectionReport};
use crate::mil::{attention_report, train, AttentionReport, BagPrediction, MilModel, PredictionRecord, Variant};
use crate::nn::LayerCount;
use crate::synth::{generate, SynthSpec, Truth};

pub use config::{parse_eval_labels, Paths, PipelineConfig, SchemeKind};
pub use store::{decode_conditioned, encode_conditioned, ConditionedSubject, CONDITIONED_MAGIC, CONDITIONED_VERSION};
pub use svg::attention_svg;

pub const CONDITIONED_DIR: &str = "conditioned";
pub const BAGS_DIR: &str = "bags";
pub const REJECTIONS_FILE: &str = "rejections.jsonl";
pub const ELIGIBILITY_FILE: &str = "eligibility.json";

/// Which bag classifier `evaluate` and `sweep` run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum LearnerKind {
    Attention,
    Simple,
}

/// Subject id as a file stem: anything outside `[A-Za-z0-9._-]` becomes `_`.
pub fn file_stem(subject_id: &str) -> String {
    let s: String =
        subject_id.chars().map(|c| if c.is_ascii_alphanumeric() || "._-".contains(c) { c } else { '_' }).collect();
    if s.is_empty() || s.starts_with('.') {
        format!("_{s}")
    } else {
        s
    }
}

fn json<T: Serialize>(v: &T) -> Vec<u8> {
    let mut s = serde_json::to_string_pretty(v).expect("output serializes");
    s.push('\n');
    s.into_bytes()
}

/// Files in `dir` with extension `ext`, sorted by name. A missing directory
/// yields an empty list.
fn list_files(dir: &Path, ext: &str) -> Result<Vec<PathBuf>> {
    let rd = match fs::read_dir(dir) {
        Ok(rd) => rd,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
        Err(e) => return Err(Error::io(dir, e)),
    };
    let mut out = Vec::new();
    for entry in rd {
        let p = entry.map_err(|e| Error::io(dir, e))?.path();
        if p.is_file() && p.extension().is_some_and(|x| x == ext) {
            out.push(p);
        }
    }
    out.sort();
    Ok(out)
}

fn clear_files(dir: &Path, ext: &str) -> Result<()> {
    for p in list_files(dir, ext)? {
        fs::remove_file(&p).map_err(|e| Error::io(&p, e))?;
    }
    Ok(())
}

fn check_stems<'a>(ids: impl IntoIterator<Item = &'a str>) -> Result<()> {
    let mut seen = HashSet::new();
    for id in ids {
        if !seen.insert(file_stem(id)) {
            return Err(Error::DuplicateSubject(format!("{id} (file name collides after sanitizing)")));
        }
    }
    Ok(())
}

pub fn cmd_synth(spec: &SynthSpec, out: &Path) -> Result<Truth> {
    generate(spec, out)
}

#[derive(Serialize)]
struct VerdictLine<'a> {
    config_hash: &'a str,
    subject_id: &'a str,
    #[serde(flatten)]
    report: &'a RejectionReport,
}

#[derive(Serialize)]
struct FailureLine<'a> {
    config_hash: &'a str,
    subject_id: &'a str,
    session_path: &'a str,
    verdict: &'static str,
    message: String,
}

enum SessionOutcome {
    Kept(RejectionReport, crate::dsp::Session),
    Rejected(RejectionReport),
    Failed(Error),
}

fn process_session(subject: &str, id: &str, path: &Path, filter: &FirFilter) -> SessionOutcome {
    let run = || -> Result<SessionOutcome> {
        let text = read_string(path)?;
        let raw = parse_session_csv(&text, subject, id)?;
        let report = validate_session(&raw);
        if !report.accepted() {
            return Ok(SessionOutcome::Rejected(report));
        }
        let fs_est = report.fs_est.expect("accepted sessions have a rate");
        let session = condition(&raw, fs_est, filter)?;
        Ok(SessionOutcome::Kept(report, session))
    };
    run().unwrap_or_else(SessionOutcome::Failed)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct PreprocessSummary {
    pub accepted: usize,
    pub rejected: usize,
    pub failed: usize,
}

impl PreprocessSummary {
    pub fn total(&self) -> usize {
        self.accepted + self.rejected + self.failed
    }
}

/// Validates and conditions every manifest session. Unreadable or malformed
/// files are logged and skipped; the command fails only when every session
/// fails that way.
pub fn cmd_preprocess(cfg: &PipelineConfig) -> Result<PreprocessSummary> {
    let entries = load_manifest(cfg.manifest()?)?;
    let cache = cfg.cache()?;
    check_stems(entries.iter().map(|e| e.annotation.subject_id.as_str()))?;
    let hash = cfg.hash();
    let filter = design_highpass();
    let jobs: Vec<(usize, usize)> =
        entries.iter().enumerate().flat_map(|(i, e)| (0..e.sessions.len()).map(move |j| (i, j))).collect();
    let outcomes: Vec<SessionOutcome> = with_workers(|| {
        jobs.par_iter()
            .map(|&(i, j)| {
                let s = &entries[i].sessions[j];
                process_session(&entries[i].annotation.subject_id, &s.id, &s.path, &filter)
            })
            .collect()
    });

    let mut summary = PreprocessSummary { accepted: 0, rejected: 0, failed: 0 };
    let mut log = Vec::new();
    let mut kept: Vec<Vec<crate::dsp::Session>> = vec![Vec::new(); entries.len()];
    for (&(i, j), outcome) in jobs.iter().zip(outcomes) {
        let subject_id = entries[i].annotation.subject_id.as_str();
        let line = match outcome {
            SessionOutcome::Kept(report, session) => {
                summary.accepted += 1;
                kept[i].push(session);
                serde_json::to_string(&VerdictLine { config_hash: &hash, subject_id, report: &report })
            }
            SessionOutcome::Rejected(report) => {
                summary.rejected += 1;
                serde_json::to_string(&VerdictLine { config_hash: &hash, subject_id, report: &report })
            }
            SessionOutcome::Failed(e) => {
                summary.failed += 1;
                log::warn!("{}: {e}", entries[i].sessions[j].path.display());
                serde_json::to_string(&FailureLine {
                    config_hash: &hash,
                    subject_id,
                    session_path: &entries[i].sessions[j].id,
                    verdict: "error",
                    message: e.to_string(),
                })
            }
        };
        log.extend_from_slice(line.expect("log line serializes").as_bytes());
        log.push(b'\n');
    }
    write_atomic(&cache.join(REJECTIONS_FILE), &log)?;
    write_atomic(&cache.join("highpass_taps.csv"), filter.taps_csv().as_bytes())?;

    let dir = cache.join(CONDITIONED_DIR);
    clear_files(&dir, "mtcs")?;
    for (entry, sessions) in entries.iter().zip(kept) {
        let c = ConditionedSubject {
            subject_id: entry.annotation.subject_id.clone(),
            labels: LabelSet::from_annotation(&entry.annotation),
            config_hash: hash.clone(),
            sessions,
        };
        let path = dir.join(format!("{}.mtcs", file_stem(&c.subject_id)));
        write_atomic(&path, &encode_conditioned(&c))?;
    }
    if summary.total() > 0 && summary.failed == summary.total() {
        return Err(Error::NoData(format!("all {} session files failed to load", summary.failed)));
    }
    Ok(summary)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct Eligibility {
    pub subject_id: String,
    /// Segments surviving the energy filter, before truncation.
    pub pool_size: usize,
    pub real_instances: usize,
    pub eligible: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BuildSummary {
    pub config_hash: String,
    pub e_min: f64,
    pub bag_size: usize,
    pub min_segments: usize,
    pub subjects: Vec<Eligibility>,
}

impl BuildSummary {
    pub fn eligible(&self) -> impl Iterator<Item = &Eligibility> {
        self.subjects.iter().filter(|s| s.eligible)
    }
}

pub fn load_conditioned(cache: &Path) -> Result<Vec<ConditionedSubject>> {
    let files = list_files(&cache.join(CONDITIONED_DIR), "mtcs")?;
    if files.is_empty() {
        return Err(Error::NoData(format!("no conditioned sessions under {}", cache.display())));
    }
    files.iter().map(|p| decode_conditioned(&read(p)?)).collect()
}

/// Builds one bag per subject from the conditioned cache and keeps those
/// meeting the minimum segment count.
pub fn cmd_build_bags(cfg: &PipelineConfig) -> Result<BuildSummary> {
    let cache = cfg.cache()?;
    let subjects = load_conditioned(cache)?;
    let bags: Vec<Result<Bag>> = with_workers(|| {
        subjects
            .par_iter()
            .map(|c| bag_from_sessions(&c.subject_id, &c.sessions, c.labels, cfg.e_min, cfg.bag_size))
            .collect()
    });
    let dir = cache.join(BAGS_DIR);
    clear_files(&dir, "mtbg")?;
    clear_files(&dir.join("spectra"), "csv")?;
    let mut rows = Vec::with_capacity(bags.len());
    for bag in bags {
        let bag = bag?;
        let eligible = subject_eligible(&bag, cfg.min_segments);
        if eligible {
            let stem = file_stem(&bag.subject_id);
            write_atomic(&dir.join(format!("{stem}.mtbg")), &encode_bag(&bag))?;
            let spectra = spectra_csv(bag.instances.iter().map(|i| &i.spectrum));
            write_atomic(&dir.join("spectra").join(format!("{stem}.csv")), spectra.as_bytes())?;
        } else {
            log::info!("subject {} ineligible: {} segments", bag.subject_id, bag.pool_size);
        }
        rows.push(Eligibility {
            subject_id: bag.subject_id.clone(),
            pool_size: bag.pool_size,
            real_instances: bag.real_count(),
            eligible,
        });
    }
    let summary = BuildSummary {
        config_hash: cfg.hash(),
        e_min: cfg.e_min,
        bag_size: cfg.bag_size,
        min_segments: cfg.min_segments,
        subjects: rows,
    };
    write_atomic(&dir.join(ELIGIBILITY_FILE), &json(&summary))?;
    Ok(summary)
}

/// All bags in the cache, ordered by file name.
pub fn load_bags(cache: &Path) -> Result<Vec<Bag>> {
    let files = list_files(&cache.join(BAGS_DIR), "mtbg")?;
    if files.is_empty() {
        return Err(Error::NoData(format!("no bags under {}", cache.join(BAGS_DIR).display())));
    }
    files.iter().map(|p| decode_bag(&read(p)?)).collect()
}

/// Bags re-capped at the configured size; caches built with a larger
/// capacity are truncated, smaller ones are kept as they are.
fn bags_for(cfg: &PipelineConfig) -> Result<Vec<Bag>> {
    Ok(load_bags(cfg.cache()?)?
        .into_iter()
        .map(|b| if b.capacity > cfg.bag_size { b.truncated(cfg.bag_size) } else { b })
        .collect())
}

#[derive(Debug, Clone, Serialize)]
pub struct TrainSummary {
    pub config_hash: String,
    pub model: String,
    pub train_labels: AnnotationScheme,
    pub epochs: usize,
    pub subjects: Vec<String>,
    pub history: Vec<f64>,
    pub layers: Vec<LayerCount>,
    pub total_params: usize,
}

/// Fits one attention model on every bag; writes `model.ckpt` and `train.json`.
pub fn cmd_train(cfg: &PipelineConfig) -> Result<TrainSummary> {
    let out = cfg.out()?;
    let bags = bags_for(cfg)?;
    let refs: Vec<&Bag> = bags.iter().collect();
    let tc = cfg.train_config(cfg.variant);
    let trained = with_workers(|| train(&refs, &tc))?;
    let model = trained.model;
    write_atomic(&out.join("model.ckpt"), &model.to_checkpoint())?;
    let summary = TrainSummary {
        config_hash: cfg.hash(),
        model: model.checkpoint_kind(),
        train_labels: cfg.train_labels,
        epochs: tc.epochs,
        subjects: bags.iter().map(|b| b.subject_id.clone()).collect(),
        history: trained.history,
        layers: model.layer_counts(),
        total_params: model.param_count(),
    };
    write_atomic(&out.join("train.json"), &json(&summary))?;
    Ok(summary)
}

pub fn make_plan(cfg: &PipelineConfig, bags: &[Bag]) -> Result<FoldPlan> {
    let subjects: Vec<String> = bags.iter().map(|b| b.subject_id.clone()).collect();
    match cfg.scheme {
        SchemeKind::Loso => plan_loso(&subjects, cfg.trials(), cfg.seed),
        SchemeKind::Rkf => plan_rkf(&subjects, cfg.k, cfg.repeats, cfg.trials(), cfg.seed),
    }
}

/// Instances listed per line of `predictions.jsonl`.
pub const PREDICTION_TOP: usize = 5;

#[derive(Serialize)]
struct PredictionLine<'a> {
    config_hash: &'a str,
    fold: usize,
    repetition: usize,
    trial: usize,
    #[serde(flatten)]
    record: PredictionRecord,
}

fn prediction_lines(hash: &str, bags: &[Bag], runs: &[TrialOutcome]) -> Vec<u8> {
    let mut out = Vec::new();
    for run in runs {
        for p in &run.predictions {
            let Some(bag) = bags.iter().find(|b| b.subject_id == p.subject_id) else { continue };
            let pred = BagPrediction {
                subject_id: p.subject_id.clone(),
                probability: p.probability,
                label: p.label,
                attention: p.attention.clone().unwrap_or_default(),
            };
            let line = PredictionLine {
                config_hash: hash,
                fold: run.fold,
                repetition: run.repetition,
                trial: run.trial,
                record: PredictionRecord::new(bag, &pred, PREDICTION_TOP),
            };
            out.extend_from_slice(serde_json::to_string(&line).expect("prediction serializes").as_bytes());
            out.push(b'\n');
        }
    }
    out
}

#[derive(Serialize)]
struct EvaluationFile<'a> {
    config_hash: &'a str,
    model: &'a str,
    scheme: String,
    train_labels: AnnotationScheme,
    folds: usize,
    trials_per_fold: usize,
    reports: &'a [MetricsReport],
    runs: &'a [TrialOutcome],
}

fn protocol<L: Learner>(cfg: &PipelineConfig, plan: &FoldPlan, bags: &[Bag], learner: &L) -> Result<ProtocolOutcome> {
    run_protocol(plan, bags, learner, cfg.train_labels, &cfg.eval_labels)
}

/// Runs the configured cross-validation; writes `report.json`, `report.csv`,
/// `predictions.jsonl` and one checkpoint per (fold, trial) under
/// `checkpoints/`.
pub fn cmd_evaluate(cfg: &PipelineConfig, kind: LearnerKind) -> Result<ProtocolOutcome> {
    let out = cfg.out()?;
    let bags = bags_for(cfg)?;
    let plan = make_plan(cfg, &bags)?;
    let outcome = match kind {
        LearnerKind::Attention => protocol(cfg, &plan, &bags, &AttentionLearner(cfg.train_config(cfg.variant)))?,
        LearnerKind::Simple => protocol(cfg, &plan, &bags, &SimpleLearner(cfg.train_config(Variant::Fc)))?,
    };
    let hash = cfg.hash();
    let ckpt_dir = out.join("checkpoints");
    clear_files(&ckpt_dir, "ckpt")?;
    for run in &outcome.runs {
        if let Some(bytes) = &run.checkpoint {
            write_atomic(&ckpt_dir.join(format!("fold{:03}_trial{:02}.ckpt", run.fold, run.trial)), bytes)?;
        }
    }
    let file = EvaluationFile {
        config_hash: &hash,
        model: &outcome.model,
        scheme: cfg.scheme.to_string(),
        train_labels: cfg.train_labels,
        folds: plan.folds.len(),
        trials_per_fold: plan.trials_per_fold,
        reports: &outcome.reports,
        runs: &outcome.runs,
    };
    write_atomic(&out.join("report.json"), &json(&file))?;
    write_atomic(&out.join("report.csv"), reports_csv(&outcome.reports, &hash).as_bytes())?;
    write_atomic(&out.join("predictions.jsonl"), &prediction_lines(&hash, &bags, &outcome.runs))?;
    Ok(outcome)
}

/// F1 against bag size, scored on the training labels; writes `sweep.csv`.
pub fn cmd_sweep(cfg: &PipelineConfig, kind: LearnerKind) -> Result<Vec<SweepRow>> {
    let out = cfg.out()?;
    let bags = bags_for(cfg)?;
    let plan = make_plan(cfg, &bags)?;
    let (train_s, eval_s) = (cfg.train_labels, cfg.train_labels);
    let rows = match kind {
        LearnerKind::Attention => {
            let l = AttentionLearner(cfg.train_config(cfg.variant));
            bag_size_sweep(&cfg.sweep_sizes, &plan, &bags, &l, train_s, eval_s)?
        }
        LearnerKind::Simple => {
            let l = SimpleLearner(cfg.train_config(Variant::Fc));
            bag_size_sweep(&cfg.sweep_sizes, &plan, &bags, &l, train_s, eval_s)?
        }
    };
    write_atomic(&out.join("sweep.csv"), sweep_csv(&rows, &cfg.hash()).as_bytes())?;
    Ok(rows)
}

#[derive(Serialize)]
struct AttentionFile<'a> {
    config_hash: &'a str,
    checkpoint: String,
    #[serde(flatten)]
    report: &'a AttentionReport,
}

/// Top and bottom `n` instances of one bag under a saved model; writes
/// `attention_<subject>.json` and `.svg`.
pub fn cmd_attention(cfg: &PipelineConfig, checkpoint: &Path, bag_path: &Path, n: usize) -> Result<AttentionReport> {
    let out = cfg.out()?;
    let model = MilModel::<f32>::from_checkpoint(&read(checkpoint)?)?;
    let bag = decode_bag(&read(bag_path)?)?;
    let report = attention_report(&model, &bag, n)?;
    let stem = format!("attention_{}", file_stem(&bag.subject_id));
    let file =
        AttentionFile { config_hash: &cfg.hash(), checkpoint: checkpoint.display().to_string(), report: &report };
    write_atomic(&out.join(format!("{stem}.json")), &json(&file))?;
    write_atomic(&out.join(format!("{stem}.svg")), attention_svg(&bag, &report).as_bytes())?;
    Ok(report)
}

#[cfg(test)]
mod tests;
