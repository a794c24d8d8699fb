//! End-to-end acceptance checks, one verdict line per criterion.
//!
//! Runs as a plain binary so every line is printed regardless of outcome.
//! Pass criterion numbers (e.g. `acceptance 3 5`) to run a subset.

use std::collections::HashSet;
use std::f64::consts::PI;
use std::path::Path;
use std::time::{Duration, Instant};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use miltremor::bags::{build_bag, decode_bag, encode_bag, Bag, Instance};
use miltremor::dsp::{
    band_energy, design_highpass, remove_gravity, resample_to_100hz, total_energy, welch_spectrum, Session,
};
use miltremor::eval::ProtocolOutcome;
use miltremor::ingest::{AnnotationScheme, LabelSet, RawSession};
use miltremor::mil::{instance_input, rank_by_attention, MilModel, Variant};
use miltremor::nn::{grad_check_steps, Tensor, FD_STEPS};
use miltremor::pipeline::{
    cmd_build_bags, cmd_evaluate, cmd_preprocess, cmd_sweep, cmd_synth, cmd_train, load_bags, LearnerKind, Paths,
    PipelineConfig, SchemeKind,
};
use miltremor::synth::{SynthSpec, Truth};

const GRAD_TOL: f64 = 1e-4;
const GRAD_TIME: Duration = Duration::from_secs(60);
const INVARIANCE_TOL: f64 = 1e-6;
const INVARIANCE_BAGS: u64 = 100;
const TONE_RATIO: f64 = 0.95;
const LOW_RETAINED: f64 = 0.01;
const TREMOR_RETAINED: f64 = 0.06;
const RESAMPLE_RMS: f64 = 0.01;
const E2E_F1: f64 = 0.90;
const E2E_TIME: Duration = Duration::from_secs(15 * 60);
const E2E_EPOCHS: usize = 50;
const E2E_BAG: usize = 250;
const E2E_SEEDS: [u64; 3] = [0, 1, 2];
const KEY_FRACTION: f64 = 0.80;
const KEY_TOP: usize = 5;
const SWEEP_SIZES: [usize; 3] = [10, 100, 250];
const SWEEP_EPOCHS: usize = 50;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn sine(f: f64, fs: f64, n: usize) -> Vec<f64> {
    (0..n).map(|i| (2.0 * PI * f * i as f64 / fs).sin()).collect()
}

fn session(x: Vec<f64>) -> Session {
    let n = x.len();
    Session { subject_id: "s".into(), session_id: "s".into(), fs: 100.0, samples: [x, vec![0.0; n], vec![0.0; n]] }
}

fn random_instance(rng: &mut ChaCha8Rng, idx: u64) -> Instance {
    let axes: [Vec<f64>; 3] = std::array::from_fn(|_| (0..500).map(|_| rng.random_range(-2.0..2.0)).collect());
    Instance::from_window([&axes[0], &axes[1], &axes[2]], "s", idx * 500).unwrap()
}

fn random_bag(rng: &mut ChaCha8Rng, n: usize, capacity: usize) -> Bag {
    let inst = (0..n as u64).map(|i| random_instance(rng, i)).collect();
    build_bag("b", inst, LabelSet::uniform(1), capacity)
}

fn c1_gradients() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let bag = random_bag(&mut rng, 3, 3);
    let mut worst = Vec::new();
    for variant in [Variant::Fc, Variant::Cnn] {
        let model = MilModel::<f64>::new(variant, 11).map_err(|e| e.to_string())?;
        let x: Tensor<f64> = instance_input(variant, &bag.instances);
        let err = grad_check_steps(&model.params, 500, 3, &FD_STEPS, |p| {
            let mut drop_rng = ChaCha8Rng::seed_from_u64(99);
            model.arch.loss_and_grads(p, x.clone(), 1, Some(&mut drop_rng))
        })
        .map_err(|e| e.to_string())?;
        worst.push((variant, err));
    }
    let elapsed = start.elapsed();
    let ok = worst.iter().all(|(_, e)| *e < GRAD_TOL) && elapsed < GRAD_TIME;
    check(
        ok,
        format!(
            "max rel err fc {:.2e}, cnn {:.2e} (< {GRAD_TOL:.0e}); {:.1} s",
            worst[0].1,
            worst[1].1,
            elapsed.as_secs_f64()
        ),
    )
}

fn c2_invariance() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let mut worst_p: f64 = 0.0;
    let mut worst_sum: f64 = 0.0;
    let mut masked_nonzero = 0usize;
    for variant in [Variant::Fc, Variant::Cnn] {
        let model = MilModel::<f32>::new(variant, 21).map_err(|e| e.to_string())?;
        for _ in 0..INVARIANCE_BAGS {
            let n = rng.random_range(1..=12);
            let bag = random_bag(&mut rng, n, n);
            let base = model.predict(&bag).map_err(|e| e.to_string())?;
            worst_sum = worst_sum.max((base.attention.iter().sum::<f64>() - 1.0).abs());

            let mut perm = bag.clone();
            for i in (1..perm.instances.len()).rev() {
                perm.instances.swap(i, rng.random_range(0..=i));
            }
            let pp = model.predict(&perm).map_err(|e| e.to_string())?;
            worst_p = worst_p.max((pp.probability - base.probability).abs());

            let pad = rng.random_range(1..=750);
            let padded =
                decode_bag(&encode_bag(&Bag { capacity: n + pad, ..bag.clone() })).map_err(|e| e.to_string())?;
            let pm = model.predict(&padded).map_err(|e| e.to_string())?;
            worst_p = worst_p.max((pm.probability - base.probability).abs());
            worst_sum = worst_sum.max((pm.attention.iter().sum::<f64>() - 1.0).abs());
            masked_nonzero += pm.attention[n..].iter().filter(|&&a| a != 0.0).count();
        }
    }
    check(
        worst_p <= INVARIANCE_TOL && worst_sum <= INVARIANCE_TOL && masked_nonzero == 0,
        format!(
            "{} bags per variant: max |dp| {worst_p:.1e}, max |sum a - 1| {worst_sum:.1e}, nonzero masked weights {masked_nonzero}",
            INVARIANCE_BAGS
        ),
    )
}

fn c3_spectral() -> Verdict {
    let z = vec![0.0; 500];
    let tone = sine(5.0, 100.0, 500);
    let sp = welch_spectrum([&tone, &z, &z]).map_err(|e| e.to_string())?;
    let argmax = (0..sp.0.len()).max_by(|&a, &b| sp.0[a].total_cmp(&sp.0[b])).unwrap();
    let ratio = band_energy(&sp, 3.0, 7.0) / total_energy(&sp);

    let f = design_highpass();
    let n = 3000;
    let margin = 300;
    let interior_peak = |x: &[f64]| x[margin..n - margin].iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let low = interior_peak(&remove_gravity(&session(sine(0.2, 100.0, n)), &f).samples[0]);
    let mid = interior_peak(&remove_gravity(&session(sine(5.0, 100.0, n)), &f).samples[0]);
    check(
        argmax == 15 && ratio >= TONE_RATIO && low < LOW_RETAINED && (mid - 1.0).abs() <= TREMOR_RETAINED,
        format!(
            "argmax bin {argmax}, band ratio {ratio:.4}, 0.2 Hz kept {:.3}%, 5 Hz kept {:.2}%",
            low * 100.0,
            mid * 100.0
        ),
    )
}

fn c4_resampler() -> Verdict {
    let tone = |t: f64| (2.0 * PI * 5.0 * t).sin();
    let mut parts = Vec::new();
    let mut ok = true;
    for fs in [50.0, 120.0, 128.0, 200.0] {
        let n = (30.0 * fs) as usize;
        let ts: Vec<f64> = (0..n).map(|i| i as f64 / fs).collect();
        let xs = ts.iter().map(|&t| [tone(t), 0.0, 0.0]).collect();
        let raw = RawSession::new("s", "s.csv", ts, xs).map_err(|e| e.to_string())?;
        let out = resample_to_100hz(&raw, fs).map_err(|e| e.to_string())?;
        let x = &out.samples[0];
        let interior = 100..x.len() - 100;
        let count = interior.len() as f64;
        let rms = (interior.map(|i| (x[i] - tone(i as f64 / 100.0)).powi(2)).sum::<f64>() / count).sqrt();
        ok &= rms < RESAMPLE_RMS;
        parts.push(format!("{fs} Hz {:.3}%", rms * 100.0));
    }
    check(ok, format!("interior RMS error {}", parts.join(", ")))
}

struct Corpus {
    _dir: tempfile::TempDir,
    cfg: PipelineConfig,
    truth: Truth,
    bags: Vec<Bag>,
    prep: Duration,
}

fn corpus() -> Result<Corpus, String> {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let spec = SynthSpec { n_subjects: 20, positive_fraction: 0.5, burst_fraction: 0.05, ..SynthSpec::default() };
    let truth = cmd_synth(&spec, &dir.path().join("corpus")).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.paths = Paths {
        manifest: Some(dir.path().join("corpus/manifest.json")),
        cache: Some(dir.path().join("cache")),
        out: Some(dir.path().join("out")),
    };
    cfg.bag_size = E2E_BAG;
    cfg.variant = Variant::Cnn;
    cfg.epochs = Some(E2E_EPOCHS);
    cfg.scheme = SchemeKind::Loso;
    cfg.trials = Some(1);
    cfg.eval_labels = vec![AnnotationScheme::SpExpert];
    cmd_preprocess(&cfg).map_err(|e| e.to_string())?;
    cmd_build_bags(&cfg).map_err(|e| e.to_string())?;
    let bags = load_bags(cfg.cache().unwrap()).map_err(|e| e.to_string())?;
    Ok(Corpus { _dir: dir, cfg, truth, bags, prep: start.elapsed() })
}

fn f1_of(o: &ProtocolOutcome) -> f64 {
    o.report(AnnotationScheme::SpExpert).map_or(f64::NAN, |r| r.f1.mean)
}

fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

struct Detection {
    outcomes: Vec<ProtocolOutcome>,
    elapsed: Duration,
}

fn run_detection(c: &Corpus) -> Result<Detection, String> {
    let start = Instant::now();
    let mut outcomes = Vec::new();
    for seed in E2E_SEEDS {
        let cfg = PipelineConfig { seed, ..c.cfg.clone() };
        let o = cmd_evaluate(&cfg, LearnerKind::Attention).map_err(|e| e.to_string())?;
        println!("    seed {seed}: F1 {:.3} after {:.0} s", f1_of(&o), start.elapsed().as_secs_f64());
        outcomes.push(o);
    }
    Ok(Detection { outcomes, elapsed: start.elapsed() + c.prep })
}

fn c5_detection(c: &Corpus, d: &Detection) -> Verdict {
    let f1s: Vec<f64> = d.outcomes.iter().map(f1_of).collect();
    let f1 = mean(&f1s);
    let positives = c.truth.subjects.iter().filter(|s| s.label == 1).count();
    let secs = d.elapsed.as_secs_f64();
    check(
        f1 >= E2E_F1 && d.elapsed <= E2E_TIME && positives == 10,
        format!(
            "{} subjects ({positives} positive), per-seed F1 {:?}, mean F1 {f1:.3} (>= {E2E_F1}); runtime {:.1} min (<= {:.0} min) on {} worker(s)",
            c.bags.len(),
            f1s.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>(),
            secs / 60.0,
            E2E_TIME.as_secs_f64() / 60.0,
            miltremor::eval::worker_threads()
        ),
    )
}

fn c6_key_instances(c: &Corpus, d: &Detection) -> Verdict {
    let mut worst = 1.0f64;
    let mut worst_subject = String::new();
    let mut checked = 0;
    for o in &d.outcomes {
        for run in &o.runs {
            for p in &run.predictions {
                let Some(t) = c.truth.subject(&p.subject_id) else { continue };
                if t.label != 1 {
                    continue;
                }
                let bag = c.bags.iter().find(|b| b.subject_id == p.subject_id).ok_or("bag missing")?;
                let bag = bag.truncated(E2E_BAG);
                let att = p.attention.as_ref().ok_or("no attention recorded")?;
                let bursts: HashSet<(&str, u64)> = t.bursts.iter().map(|b| (b.session.as_str(), b.offset)).collect();
                let top = rank_by_attention(att, bag.real_count());
                let top = &top[..KEY_TOP.min(top.len())];
                let hits = top
                    .iter()
                    .filter(|&&i| bursts.contains(&(bag.instances[i].session_id.as_str(), bag.instances[i].offset)))
                    .count();
                let frac = hits as f64 / top.len() as f64;
                checked += 1;
                if frac < worst {
                    worst = frac;
                    worst_subject = format!("{} (seed {})", p.subject_id, run.seed);
                }
            }
        }
    }
    check(
        checked > 0 && worst >= KEY_FRACTION,
        format!(
            "{checked} positive test bags; worst top-{KEY_TOP} burst fraction {:.0}%{} (>= {:.0}%)",
            worst * 100.0,
            if worst < 1.0 { format!(" at {worst_subject}") } else { String::new() },
            KEY_FRACTION * 100.0
        ),
    )
}

fn c7_baseline(c: &Corpus, d: &Detection) -> Verdict {
    let mut f1s = Vec::new();
    for seed in E2E_SEEDS {
        let cfg = PipelineConfig {
            seed,
            paths: Paths { out: Some(c.cfg.out().unwrap().join("simple")), ..c.cfg.paths.clone() },
            ..c.cfg.clone()
        };
        f1s.push(f1_of(&cmd_evaluate(&cfg, LearnerKind::Simple).map_err(|e| e.to_string())?));
    }
    let simple = mean(&f1s);
    let attention = mean(&d.outcomes.iter().map(f1_of).collect::<Vec<_>>());
    check(simple < attention, format!("simple-MIL mean F1 {simple:.3} vs attention-MIL {attention:.3}"))
}

fn c8_sweep(c: &Corpus) -> Verdict {
    let cfg = PipelineConfig {
        variant: Variant::Fc,
        epochs: Some(SWEEP_EPOCHS),
        sweep_sizes: SWEEP_SIZES.to_vec(),
        paths: Paths { out: Some(c.cfg.out().unwrap().join("sweep")), ..c.cfg.paths.clone() },
        ..c.cfg.clone()
    };
    let rows = cmd_sweep(&cfg, LearnerKind::Attention).map_err(|e| e.to_string())?;
    let f1 = |k: usize| rows.iter().find(|r| r.k_t == k).map_or(f64::NAN, |r| r.f1.mean);
    let line = rows.iter().map(|r| format!("F1({})={:.3}", r.k_t, r.f1.mean)).collect::<Vec<_>>().join(", ");
    check(f1(250) >= f1(10), format!("fc, LOSO: {line}"))
}

fn pipeline_once(root: &Path) -> Result<Vec<(String, Vec<u8>)>, String> {
    let spec = SynthSpec { n_subjects: 6, session_seconds: 40.0, burst_fraction: 0.2, seed: 9, ..SynthSpec::default() };
    cmd_synth(&spec, &root.join("corpus")).map_err(|e| e.to_string())?;
    let mut cfg = PipelineConfig::default();
    cfg.paths = Paths {
        manifest: Some(root.join("corpus/manifest.json")),
        cache: Some(root.join("cache")),
        out: Some(root.join("out")),
    };
    cfg.min_segments = 5;
    cfg.bag_size = 16;
    cfg.epochs = Some(2);
    cfg.scheme = SchemeKind::Rkf;
    cfg.k = 3;
    cfg.repeats = 2;
    cfg.trials = Some(1);
    cmd_preprocess(&cfg).map_err(|e| e.to_string())?;
    cmd_build_bags(&cfg).map_err(|e| e.to_string())?;
    for variant in [Variant::Fc, Variant::Cnn] {
        let cfg = PipelineConfig {
            variant,
            paths: Paths { out: Some(root.join("out").join(variant.name())), ..cfg.paths.clone() },
            ..cfg.clone()
        };
        cmd_train(&cfg).map_err(|e| e.to_string())?;
        cmd_evaluate(&cfg, LearnerKind::Attention).map_err(|e| e.to_string())?;
    }
    let mut files = Vec::new();
    let mut stack = vec![root.join("cache"), root.join("out")];
    while let Some(dir) = stack.pop() {
        for entry in std::fs::read_dir(&dir).map_err(|e| e.to_string())? {
            let p = entry.map_err(|e| e.to_string())?.path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().display().to_string();
                files.push((rel, std::fs::read(&p).map_err(|e| e.to_string())?));
            }
        }
    }
    files.sort();
    Ok(files)
}

fn c9_determinism() -> Verdict {
    let a = tempfile::tempdir().map_err(|e| e.to_string())?;
    let b = tempfile::tempdir().map_err(|e| e.to_string())?;
    let fa = pipeline_once(a.path())?;
    let fb = pipeline_once(b.path())?;
    let names: Vec<&str> = fa.iter().map(|(n, _)| n.as_str()).collect();
    let kinds = ["mtbg", "ckpt", "json", "csv", "jsonl"];
    let covered: Vec<&str> =
        kinds.iter().copied().filter(|k| names.iter().any(|n| n.ends_with(&format!(".{k}")))).collect();
    let differing: Vec<&str> = fa.iter().zip(&fb).filter(|(x, y)| x != y).map(|(x, _)| x.0.as_str()).collect();
    check(
        fa.len() == fb.len() && differing.is_empty() && covered.len() == kinds.len(),
        format!("{} files compared ({}), {} differ {:?}", fa.len(), covered.join(", "), differing.len(), differing),
    )
}

fn c10_parameters() -> Verdict {
    // fan-in x fan-out + bias, written out by hand
    let fc_phi = (76 * 256 + 256) + (256 * 128 + 128) + (128 * 64 + 64);
    let cnn_phi = (3 * 8 * 32 + 32) + (32 * 8 * 32 + 32) + (32 * 16 * 16 + 16) + (16 * 16 * 16 + 16) + (288 * 64 + 64);
    let attention = 16 * 64 + 16;
    let rho = (64 * 32 + 32) + (32 * 16 + 16) + (16 * 2 + 2);
    let mut ok = fc_phi == 19712 + 32896 + 8256;
    let mut parts = Vec::new();
    for (variant, phi) in [(Variant::Fc, fc_phi), (Variant::Cnn, cnn_phi)] {
        let model = MilModel::<f32>::new(variant, 0).map_err(|e| e.to_string())?;
        println!("    {variant}:");
        for l in model.layer_counts() {
            println!("      {:<44} {:>7}", l.layer, l.params);
        }
        println!("      {:<44} {:>7}", "total", model.param_count());
        let hand = phi + attention + rho;
        ok &= model.param_count() == hand;
        parts.push(format!("{variant} {} (hand {hand})", model.param_count()));
    }
    check(ok, format!("{}; published totals 65603 / 46627 differ", parts.join(", ")))
}

fn main() {
    let wanted: Vec<usize> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let want = |n: usize| wanted.is_empty() || wanted.contains(&n);
    let mut failed = 0;
    let mut emit = |n: usize, name: &str, v: Verdict| {
        let (tag, detail) = match v {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} criterion {n:>2} [{name}]: {detail}");
    };

    let simple: [(usize, &str, fn() -> Verdict); 5] = [
        (1, "gradient check", c1_gradients),
        (2, "permutation and mask invariance", c2_invariance),
        (3, "spectral oracle", c3_spectral),
        (4, "resampler", c4_resampler),
        (10, "parameter accounting", c10_parameters),
    ];
    for (n, name, f) in simple {
        if want(n) {
            emit(n, name, f());
        }
    }
    if want(9) {
        emit(9, "determinism", c9_determinism());
    }

    if [5, 6, 7, 8].iter().any(|&n| want(n)) {
        match corpus() {
            Err(e) => {
                for (n, name) in
                    [(5, "synthetic detection"), (6, "key instances"), (7, "baseline ordering"), (8, "bag-size trend")]
                {
                    if want(n) {
                        emit(n, name, Err(format!("corpus setup failed: {e}")));
                    }
                }
            }
            Ok(c) => {
                if [5, 6, 7].iter().any(|&n| want(n)) {
                    match run_detection(&c) {
                        Ok(d) => {
                            if want(5) {
                                emit(5, "synthetic detection", c5_detection(&c, &d));
                            }
                            if want(6) {
                                emit(6, "key instances", c6_key_instances(&c, &d));
                            }
                            if want(7) {
                                emit(7, "baseline ordering", c7_baseline(&c, &d));
                            }
                        }
                        Err(e) => {
                            for (n, name) in
                                [(5, "synthetic detection"), (6, "key instances"), (7, "baseline ordering")]
                            {
                                if want(n) {
                                    emit(n, name, Err(format!("training failed: {e}")));
                                }
                            }
                        }
                    }
                }
                if want(8) {
                    emit(8, "bag-size trend", c8_sweep(&c));
                }
            }
        }
    }

    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
