use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::*;
use crate::dsp::{Session, SEGMENT_LEN};

fn small_spec(n: usize) -> SynthSpec {
    SynthSpec { n_subjects: n, session_seconds: 40.0, burst_fraction: 0.2, seed: 3, ..SynthSpec::default() }
}

fn config(root: &Path) -> PipelineConfig {
    let mut cfg = PipelineConfig::default();
    cfg.paths = Paths {
        manifest: Some(root.join("corpus/manifest.json")),
        cache: Some(root.join("cache")),
        out: Some(root.join("out")),
    };
    cfg.min_segments = 5;
    cfg.bag_size = 20;
    cfg
}

fn noise_session(subject: &str, id: &str, segments: usize, seed: u64) -> Session {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = segments * SEGMENT_LEN;
    let samples = std::array::from_fn(|_| (0..n).map(|_| StandardNormal.sample(&mut rng)).collect());
    Session { subject_id: subject.into(), session_id: id.into(), fs: 100.0, samples }
}

fn read_lines(path: &Path) -> Vec<serde_json::Value> {
    fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

#[test]
fn stems_are_safe() {
    assert_eq!(file_stem("subj01"), "subj01");
    assert_eq!(file_stem("a/b c"), "a_b_c");
    assert_eq!(file_stem(".."), "_..");
    assert!(check_stems(["a/b", "a_b"]).is_err());
}

#[test]
fn clean_corpus_has_no_rejections() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    cmd_synth(&small_spec(4), &dir.path().join("corpus")).unwrap();
    let s = cmd_preprocess(&cfg).unwrap();
    assert_eq!(s, PreprocessSummary { accepted: 8, rejected: 0, failed: 0 });
    let lines = read_lines(&dir.path().join("cache").join(REJECTIONS_FILE));
    assert_eq!(lines.len(), 8);
    assert!(lines.iter().all(|l| l["verdict"] == "accepted" && l["config_hash"] == cfg.hash().as_str()));
    assert_eq!(load_conditioned(cfg.cache().unwrap()).unwrap().len(), 4);
}

#[test]
fn short_and_broken_sessions_are_logged() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    let corpus = dir.path().join("corpus");
    cmd_synth(&small_spec(2), &corpus).unwrap();
    let ts: Vec<f64> = (0..1000).map(|i| i as f64 / 100.0).collect();
    let raw = crate::ingest::RawSession::new("x", "short.csv", ts, vec![[0.0, 0.0, 9.81]; 1000]).unwrap();
    fs::write(corpus.join("short.csv"), crate::ingest::write_session_csv(&raw)).unwrap();
    fs::write(corpus.join("broken.csv"), "nonsense\n1,2").unwrap();
    let manifest = r#"{"subjects":[
        {"id":"subj00","updrs16":0,"updrs20":[0,0],"updrs21":[0,0],"sp_expert":0,
         "sessions":["sessions/subj00_s0.csv","short.csv","broken.csv","missing.csv"]}]}"#;
    fs::write(corpus.join("manifest.json"), manifest).unwrap();
    let s = cmd_preprocess(&cfg).unwrap();
    assert_eq!(s, PreprocessSummary { accepted: 1, rejected: 1, failed: 2 });
    assert_eq!(s.total(), 4);
    let lines = read_lines(&dir.path().join("cache").join(REJECTIONS_FILE));
    assert_eq!(lines[1]["session_path"], "short.csv");
    assert_eq!(lines[1]["reason"], "too_short");
    assert_eq!(lines[2]["verdict"], "error");
    assert_eq!(lines[3]["verdict"], "error");

    let only_missing = r#"{"subjects":[
        {"id":"a","updrs16":0,"updrs20":[0,0],"updrs21":[0,0],"sp_expert":0,"sessions":["missing.csv"]}]}"#;
    fs::write(corpus.join("manifest.json"), only_missing).unwrap();
    let err = cmd_preprocess(&cfg).unwrap_err();
    assert!(matches!(err, Error::NoData(_)), "{err}");
    assert_eq!(err.exit_code(), 2);
}

#[test]
fn eligibility_boundary_and_determinism() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cfg.min_segments = 30;
    cfg.bag_size = 1500;
    let cache = cfg.cache().unwrap().to_path_buf();
    for (id, segs) in [("few", 29usize), ("enough", 30)] {
        let c = ConditionedSubject {
            subject_id: id.into(),
            labels: LabelSet::uniform(0),
            config_hash: String::new(),
            sessions: vec![noise_session(id, "s0", segs - 10, 1), noise_session(id, "s1", 10, 2)],
        };
        write_atomic(&cache.join(CONDITIONED_DIR).join(format!("{id}.mtcs")), &encode_conditioned(&c)).unwrap();
    }
    let summary = cmd_build_bags(&cfg).unwrap();
    let row = |id: &str| summary.subjects.iter().find(|s| s.subject_id == id).unwrap().clone();
    assert_eq!(
        row("few"),
        Eligibility { subject_id: "few".into(), pool_size: 29, real_instances: 29, eligible: false }
    );
    assert!(row("enough").eligible);
    let bags = load_bags(&cache).unwrap();
    assert_eq!(bags.len(), 1);
    assert_eq!(bags[0].real_count(), 30);

    let first = fs::read(cache.join(BAGS_DIR).join("enough.mtbg")).unwrap();
    cmd_build_bags(&cfg).unwrap();
    assert_eq!(fs::read(cache.join(BAGS_DIR).join("enough.mtbg")).unwrap(), first);
}

#[test]
fn missing_inputs_are_no_data() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    assert!(matches!(cmd_build_bags(&cfg), Err(Error::NoData(_))));
    assert!(matches!(cmd_evaluate(&cfg, LearnerKind::Attention), Err(Error::NoData(_))));
    let mut no_out = cfg.clone();
    no_out.paths.out = None;
    assert!(matches!(cmd_train(&no_out), Err(Error::Config(_))));
}

#[test]
fn rkf_run_and_attention_outputs() {
    let dir = tempfile::tempdir().unwrap();
    let mut cfg = config(dir.path());
    cmd_synth(&small_spec(6), &dir.path().join("corpus")).unwrap();
    cmd_preprocess(&cfg).unwrap();
    assert_eq!(cmd_build_bags(&cfg).unwrap().eligible().count(), 6);

    cfg.variant = Variant::Fc;
    cfg.epochs = Some(1);
    cfg.scheme = SchemeKind::Rkf;
    cfg.k = 5;
    cfg.repeats = 2;
    cfg.trials = Some(1);
    let outcome = cmd_evaluate(&cfg, LearnerKind::Attention).unwrap();
    assert_eq!(outcome.runs.len(), 10);
    assert_eq!(outcome.reports.len(), 4);
    let out = cfg.out().unwrap();
    assert_eq!(list_files(&out.join("checkpoints"), "ckpt").unwrap().len(), 10);
    let csv = fs::read_to_string(out.join("report.csv")).unwrap();
    assert!(csv.starts_with(&format!("# config_hash={}\n", cfg.hash())));

    let preds = read_lines(&out.join("predictions.jsonl"));
    assert_eq!(preds.len(), 12);
    assert!(preds.iter().all(|l| l["top_instances"].as_array().unwrap().len() == PREDICTION_TOP));

    let ckpt = out.join("checkpoints/fold000_trial00.ckpt");
    let bag = cfg.cache().unwrap().join("bags/subj01.mtbg");
    let report = cmd_attention(&cfg, &ckpt, &bag, 2).unwrap();
    assert_eq!((report.top.len(), report.bottom.len()), (2, 2));
    let svg = fs::read_to_string(out.join("attention_subj01.svg")).unwrap();
    assert_eq!(svg.matches("<g>").count(), 4);
    assert_eq!(svg.matches("<polyline").count(), 12);
    assert!(matches!(cmd_attention(&cfg, &ckpt, &bag, 50), Err(Error::BagTooSmall { .. })));

    cmd_evaluate(&cfg, LearnerKind::Simple).unwrap();
    let preds = read_lines(&out.join("predictions.jsonl"));
    assert_eq!(preds.len(), 12);
    assert!(preds.iter().all(|l| l["top_instances"].as_array().unwrap().is_empty()));
}

#[test]
fn untrained_attention_is_near_uniform() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = config(dir.path());
    cmd_synth(&small_spec(2), &dir.path().join("corpus")).unwrap();
    cmd_preprocess(&cfg).unwrap();
    cmd_build_bags(&cfg).unwrap();
    let model = MilModel::<f32>::new(Variant::Cnn, 5).unwrap();
    let ckpt = dir.path().join("init.ckpt");
    fs::write(&ckpt, model.to_checkpoint()).unwrap();
    let bag_path = cfg.cache().unwrap().join("bags/subj00.mtbg");
    let report = cmd_attention(&cfg, &ckpt, &bag_path, 2).unwrap();
    let n = decode_bag(&fs::read(&bag_path).unwrap()).unwrap().real_count() as f64;
    for k in report.top.iter().chain(&report.bottom) {
        assert!((k.weight * n - 1.0).abs() < 0.5, "{}", k.weight * n);
    }
}
