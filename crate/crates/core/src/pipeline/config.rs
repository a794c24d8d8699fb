use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::bags::{DEFAULT_BAG_SIZE, E_MIN, MIN_SEGMENTS_PER_SUBJECT};
use crate::dsp::SEGMENT_LEN;
use crate::error::{Error, Result};
use crate::eval::{DEFAULT_K, DEFAULT_LOSO_TRIALS, DEFAULT_REPEATS, DEFAULT_RKF_TRIALS, DEFAULT_SWEEP_SIZES};
use crate::ingest::AnnotationScheme;
use crate::mil::{TrainConfig, Variant};
use crate::nn::{BASE_LR, LR_DECAY};
use crate::synth::SynthSpec;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchemeKind {
    Loso,
    Rkf,
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SchemeKind::Loso => "loso",
            SchemeKind::Rkf => "rkf",
        })
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "loso" => Ok(SchemeKind::Loso),
            "rkf" => Ok(SchemeKind::Rkf),
            _ => Err(Error::Config(format!("unknown scheme `{s}` (expected loso or rkf)"))),
        }
    }
}

/// Filesystem locations; excluded from the config hash so that runs in
/// different directories stay comparable.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub manifest: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Segment length in samples; only 500 is supported.
    pub window: usize,
    pub e_min: f64,
    pub bag_size: usize,
    pub min_segments: usize,
    pub variant: Variant,
    /// Defaults to the variant's epoch count.
    pub epochs: Option<usize>,
    pub learning_rate: f64,
    pub lr_decay: f64,
    pub scheme: SchemeKind,
    pub k: usize,
    pub repeats: usize,
    /// Defaults to 10 for LOSO and 5 for repeated k-fold.
    pub trials: Option<usize>,
    pub seed: u64,
    pub train_labels: AnnotationScheme,
    pub eval_labels: Vec<AnnotationScheme>,
    pub sweep_sizes: Vec<usize>,
    pub paths: Paths,
    pub synth: SynthSpec,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            window: SEGMENT_LEN,
            e_min: E_MIN,
            bag_size: DEFAULT_BAG_SIZE,
            min_segments: MIN_SEGMENTS_PER_SUBJECT,
            variant: Variant::Cnn,
            epochs: None,
            learning_rate: BASE_LR,
            lr_decay: LR_DECAY,
            scheme: SchemeKind::Loso,
            k: DEFAULT_K,
            repeats: DEFAULT_REPEATS,
            trials: None,
            seed: 0,
            train_labels: AnnotationScheme::SpExpert,
            eval_labels: AnnotationScheme::ALL.to_vec(),
            sweep_sizes: DEFAULT_SWEEP_SIZES.to_vec(),
            paths: Paths::default(),
            synth: SynthSpec::default(),
        }
    }
}

impl PipelineConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a TOML file; relative paths inside it resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_toml(&text)?;
        let base = path.parent().unwrap_or(Path::new(""));
        for p in [&mut cfg.paths.manifest, &mut cfg.paths.cache, &mut cfg.paths.out].into_iter().flatten() {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.window != SEGMENT_LEN {
            return bad(format!("window must be {SEGMENT_LEN} samples, got {}", self.window));
        }
        if !(self.e_min > 0.0 && self.e_min.is_finite()) {
            return bad(format!("e_min must be positive, got {}", self.e_min));
        }
        if !(self.learning_rate > 0.0 && self.lr_decay > 0.0) {
            return bad("learning_rate and lr_decay must be positive".into());
        }
        let counts = [
            ("bag_size", self.bag_size),
            ("min_segments", self.min_segments),
            ("k", self.k),
            ("repeats", self.repeats),
            ("epochs", self.epochs.unwrap_or(1)),
            ("trials", self.trials.unwrap_or(1)),
        ];
        if let Some((name, _)) = counts.iter().find(|(_, v)| *v == 0) {
            return bad(format!("{name} must be positive"));
        }
        if self.eval_labels.is_empty() {
            return bad("eval_labels is empty".into());
        }
        if self.sweep_sizes.contains(&0) {
            return bad("sweep sizes must be positive".into());
        }
        self.synth.validate().map_err(|e| Error::Config(format!("synth: {e}")))
    }

    pub fn epochs(&self) -> usize {
        self.epochs.unwrap_or_else(|| self.variant.default_epochs())
    }

    pub fn trials(&self) -> usize {
        self.trials.unwrap_or(match self.scheme {
            SchemeKind::Loso => DEFAULT_LOSO_TRIALS,
            SchemeKind::Rkf => DEFAULT_RKF_TRIALS,
        })
    }

    pub fn train_config(&self, variant: Variant) -> TrainConfig {
        TrainConfig {
            variant,
            epochs: self.epochs(),
            base_lr: self.learning_rate,
            decay: self.lr_decay,
            seed: self.seed,
            scheme: self.train_labels,
        }
    }

    /// SHA-256 over the canonical JSON form without paths, hex, first 16
    /// characters.
    pub fn hash(&self) -> String {
        let mut c = self.clone();
        c.paths = Paths::default();
        let json = serde_json::to_vec(&c).expect("config serializes");
        let digest = Sha256::digest(&json);
        digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
    }

    pub fn manifest(&self) -> Result<&Path> {
        required(&self.paths.manifest, "manifest")
    }

    pub fn cache(&self) -> Result<&Path> {
        required(&self.paths.cache, "cache")
    }

    pub fn out(&self) -> Result<&Path> {
        required(&self.paths.out, "out")
    }
}

fn required<'a>(p: &'a Option<PathBuf>, name: &str) -> Result<&'a Path> {
    p.as_deref().ok_or_else(|| Error::Config(format!("no {name} path given (use --{name} or [paths] {name})")))
}

/// Parses `--eval-labels`: a scheme name or `all`.
pub fn parse_eval_labels(s: &str) -> Result<Vec<AnnotationScheme>> {
    if s == "all" {
        return Ok(AnnotationScheme::ALL.to_vec());
    }
    s.parse::<AnnotationScheme>().map(|a| vec![a]).map_err(|_| Error::Config(format!("unknown label scheme `{s}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_and_overrides() {
        let c = PipelineConfig::default();
        assert_eq!((c.window, c.bag_size, c.min_segments), (500, 1500, 30));
        assert_eq!(c.e_min, 0.15);
        assert_eq!(c.epochs(), 50);
        assert_eq!(c.trials(), 10);
        let c = PipelineConfig::from_toml("variant = \"fc\"\nscheme = \"rkf\"\n[synth]\nn_subjects = 6\n").unwrap();
        assert_eq!(c.epochs(), 1000);
        assert_eq!(c.trials(), 5);
        assert_eq!(c.synth.n_subjects, 6);
        assert_eq!(c.synth.tremor_freq, 5.0);
    }

    #[test]
    fn rejects_bad_values() {
        for bad in [
            "window = 256",
            "bag_size = 0",
            "e_min = -1.0",
            "nonsense = 1",
            "eval_labels = []",
            "[synth]\ntremor_freq = 9.0",
        ] {
            assert!(matches!(PipelineConfig::from_toml(bad), Err(Error::Config(_))), "{bad}");
        }
    }

    #[test]
    fn hash_ignores_paths_only() {
        let a = PipelineConfig::default();
        let mut b = a.clone();
        b.paths.out = Some("/elsewhere".into());
        assert_eq!(a.hash(), b.hash());
        assert_eq!(a.hash().len(), 16);
        b.seed = 1;
        assert_ne!(a.hash(), b.hash());
    }

    #[test]
    fn eval_label_flag() {
        assert_eq!(parse_eval_labels("all").unwrap().len(), 4);
        assert_eq!(parse_eval_labels("updrs20").unwrap(), vec![AnnotationScheme::Updrs20]);
        assert!(parse_eval_labels("x").is_err());
    }
}
