use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn miltremor(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_miltremor"))
        .current_dir(dir)
        .env("MILTREMOR_THREADS", "1")
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

const CONFIG: &str = r#"
min_segments = 5
bag_size = 20
variant = "fc"
epochs = 1
scheme = "loso"
trials = 1

[paths]
manifest = "corpus/manifest.json"
cache = "cache"

[synth]
n_subjects = 6
session_seconds = 40.0
burst_fraction = 0.2
"#;

#[test]
fn full_run_through_the_binary() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    fs::write(root.join("run.toml"), CONFIG).unwrap();
    let steps: [&[&str]; 5] = [
        &["synth", "--config", "run.toml", "--out", "corpus"],
        &["preprocess", "--config", "run.toml"],
        &["build-bags", "--config", "run.toml"],
        &["train", "--config", "run.toml", "--out", "model"],
        &["evaluate", "--config", "run.toml", "--out", "eval", "--eval-labels", "updrs16"],
    ];
    for args in steps {
        let o = miltremor(root, args);
        assert_eq!(code(&o), 0, "{args:?}: {}", String::from_utf8_lossy(&o.stderr));
    }
    let train = String::from_utf8(miltremor(root, steps[3]).stdout).unwrap();
    assert!(train.contains("total") && train.contains("64546"), "{train}");

    let report = fs::read_to_string(root.join("eval/report.csv")).unwrap();
    assert!(report.starts_with("# config_hash="));
    assert_eq!(report.lines().filter(|l| l.contains("updrs16")).count(), 1);
    assert!(root.join("eval/predictions.jsonl").is_file());
    assert!(root.join("model/model.ckpt").is_file());

    let o = miltremor(
        root,
        &[
            "attention",
            "--config",
            "run.toml",
            "--out",
            "att",
            "--checkpoint",
            "model/model.ckpt",
            "--bag",
            "cache/bags/subj00.mtbg",
        ],
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(root.join("att/attention_subj00.svg").is_file());
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    assert_eq!(code(&miltremor(root, &["--help"])), 0);
    assert_eq!(code(&miltremor(root, &["frobnicate"])), 1);
    assert_eq!(code(&miltremor(root, &["evaluate", "--variant", "rnn"])), 1);
    assert_eq!(code(&miltremor(root, &["evaluate", "--eval-labels", "nope"])), 1);
    assert_eq!(code(&miltremor(root, &["preprocess"])), 1);
    fs::write(root.join("bad.toml"), "bag_size = 0\n").unwrap();
    assert_eq!(code(&miltremor(root, &["train", "--config", "bad.toml"])), 1);
    assert_eq!(code(&miltremor(root, &["build-bags", "--cache", "empty"])), 2);
    fs::write(root.join("manifest.json"), "{not json").unwrap();
    assert_eq!(code(&miltremor(root, &["preprocess", "--manifest", "manifest.json", "--cache", "c"])), 2);
}
