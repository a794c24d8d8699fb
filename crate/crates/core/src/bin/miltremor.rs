use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

use miltremor::mil::Variant;
use miltremor::pipeline::{
    cmd_attention, cmd_build_bags, cmd_evaluate, cmd_preprocess, cmd_sweep, cmd_synth, cmd_train, parse_eval_labels,
    LearnerKind, PipelineConfig, SchemeKind,
};
use miltremor::Result;

#[derive(Parser)]
#[command(name = "miltremor", version, about = "Tremor detection from in-the-wild accelerometer recordings")]
struct Cli {
    #[command(subcommand)]
    command: Command,
    #[command(flatten)]
    common: Common,
}

#[derive(Args)]
struct Common {
    /// TOML configuration file; flags override its values.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    #[arg(long, global = true)]
    manifest: Option<PathBuf>,
    #[arg(long, global = true)]
    cache: Option<PathBuf>,
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true, value_enum)]
    variant: Option<VariantArg>,
    #[arg(long, global = true, value_enum)]
    scheme: Option<SchemeArg>,
    #[arg(long, global = true)]
    k: Option<usize>,
    #[arg(long, global = true)]
    repeats: Option<usize>,
    #[arg(long, global = true)]
    trials: Option<usize>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    #[arg(long, global = true)]
    bag_size: Option<usize>,
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// updrs16, updrs20, updrs21, sp_expert or all.
    #[arg(long, global = true)]
    eval_labels: Option<String>,
}

#[derive(Clone, Copy, ValueEnum)]
enum VariantArg {
    Fc,
    Cnn,
}

#[derive(Clone, Copy, ValueEnum)]
enum SchemeArg {
    Loso,
    Rkf,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModelArg {
    Attention,
    Simple,
}

impl From<ModelArg> for LearnerKind {
    fn from(m: ModelArg) -> Self {
        match m {
            ModelArg::Attention => LearnerKind::Attention,
            ModelArg::Simple => LearnerKind::Simple,
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Generate a synthetic corpus with known tremor bursts.
    Synth,
    /// Validate and condition every session in the manifest.
    Preprocess,
    /// Segment, filter and rank conditioned sessions into bags.
    BuildBags,
    /// Fit one attention model on all bags.
    Train,
    /// Cross-validate and write metric reports.
    Evaluate {
        #[arg(long, value_enum, default_value = "attention")]
        model: ModelArg,
    },
    /// F1 as a function of bag size.
    Sweep {
        #[arg(long, value_enum, default_value = "attention")]
        model: ModelArg,
        /// Comma-separated bag sizes.
        #[arg(long, value_delimiter = ',')]
        sizes: Option<Vec<usize>>,
    },
    /// Highest- and lowest-weighted instances of one bag.
    Attention {
        #[arg(long)]
        checkpoint: PathBuf,
        #[arg(long)]
        bag: PathBuf,
        #[arg(long, default_value_t = 2)]
        n: usize,
    },
}

fn resolve(c: &Common, command: &Command) -> Result<PipelineConfig> {
    let mut cfg = match &c.config {
        Some(p) => PipelineConfig::load(p)?,
        None => PipelineConfig::default(),
    };
    let paths = &mut cfg.paths;
    for (dst, src) in [(&mut paths.manifest, &c.manifest), (&mut paths.cache, &c.cache), (&mut paths.out, &c.out)] {
        if src.is_some() {
            dst.clone_from(src);
        }
    }
    if let Some(v) = c.variant {
        cfg.variant = match v {
            VariantArg::Fc => Variant::Fc,
            VariantArg::Cnn => Variant::Cnn,
        };
    }
    if let Some(s) = c.scheme {
        cfg.scheme = match s {
            SchemeArg::Loso => SchemeKind::Loso,
            SchemeArg::Rkf => SchemeKind::Rkf,
        };
    }
    cfg.k = c.k.unwrap_or(cfg.k);
    cfg.repeats = c.repeats.unwrap_or(cfg.repeats);
    cfg.trials = c.trials.or(cfg.trials);
    cfg.epochs = c.epochs.or(cfg.epochs);
    cfg.bag_size = c.bag_size.unwrap_or(cfg.bag_size);
    if let Some(seed) = c.seed {
        cfg.seed = seed;
        cfg.synth.seed = seed;
    }
    if let Some(l) = &c.eval_labels {
        cfg.eval_labels = parse_eval_labels(l)?;
    }
    if let Command::Sweep { sizes: Some(s), .. } = command {
        cfg.sweep_sizes = s.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> Result<()> {
    let cfg = resolve(&cli.common, &cli.command)?;
    match cli.command {
        Command::Synth => {
            let truth = cmd_synth(&cfg.synth, cfg.out()?)?;
            let pos = truth.subjects.iter().filter(|s| s.label == 1).count();
            println!("wrote {} subjects ({pos} positive) to {}", truth.subjects.len(), cfg.out()?.display());
        }
        Command::Preprocess => {
            let s = cmd_preprocess(&cfg)?;
            println!("sessions: {} accepted, {} rejected, {} failed", s.accepted, s.rejected, s.failed);
        }
        Command::BuildBags => {
            let s = cmd_build_bags(&cfg)?;
            for row in &s.subjects {
                let verdict = if row.eligible { "eligible" } else { "ineligible" };
                println!("{:<16} {:>6} segments  {verdict}", row.subject_id, row.pool_size);
            }
            println!("{} of {} subjects eligible", s.eligible().count(), s.subjects.len());
        }
        Command::Train => {
            let s = cmd_train(&cfg)?;
            println!("{} trainable parameters per layer:", s.model);
            for l in &s.layers {
                println!("  {:<48} {:>7}", l.layer, l.params);
            }
            println!("  {:<48} {:>7}", "total", s.total_params);
            if let Some(last) = s.history.last() {
                println!("final training loss {last:.6}");
            }
        }
        Command::Evaluate { model } => {
            let outcome = cmd_evaluate(&cfg, model.into())?;
            println!("{} trained on {} over {} runs", outcome.model, outcome.train_scheme, outcome.runs.len());
            for r in &outcome.reports {
                println!(
                    "  {:<10} P {:.3}±{:.3}  Se {:.3}±{:.3}  Sp {:.3}±{:.3}  F1 {:.3}±{:.3}",
                    r.eval_scheme.to_string(),
                    r.precision.mean,
                    r.precision.std,
                    r.sensitivity.mean,
                    r.sensitivity.std,
                    r.specificity.mean,
                    r.specificity.std,
                    r.f1.mean,
                    r.f1.std
                );
            }
        }
        Command::Sweep { model, .. } => {
            for row in cmd_sweep(&cfg, model.into())? {
                println!("K_t {:>5}  F1 {:.3}±{:.3}", row.k_t, row.f1.mean, row.f1.std);
            }
        }
        Command::Attention { checkpoint, bag, n } => {
            let r = cmd_attention(&cfg, &checkpoint, &bag, n)?;
            println!("{} p={:.4} label={}", r.subject_id, r.probability, r.label);
            for (name, list) in [("top", &r.top), ("bottom", &r.bottom)] {
                for k in list {
                    println!("  {name:<6} a={:.6} {} @{} band_e={:.4}", k.weight, k.session_id, k.offset, k.band_e);
                }
            }
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
