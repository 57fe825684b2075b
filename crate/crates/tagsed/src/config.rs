//! Run configuration: a flat `key = value` file with dotted prefixes.
//!
//! Unknown keys are rejected so typos surface immediately. `#` starts a
//! comment. See the repository README for the full key reference.

use std::collections::HashMap;
use std::path::{Path, PathBuf};

use crate::augment::AugmentConfig;
use crate::error::{Error, Result};
use crate::numerics::Real;
use crate::train::{AflConfig, SslConfig, TrainConfig};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum PoolingKind {
    Attention,
    ExpSoftmax,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Stage2Arch {
    Fdy,
    Crnn,
}

#[derive(Clone, Debug)]
pub struct StageOneConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: Real,
    pub width_div: usize,
    pub warmup_epochs: usize,
    pub ema_decay: Real,
    pub consistency_weight: Real,
    pub ict: bool,
    pub ict_alpha: Real,
    pub augment: bool,
    /// Also supervise strong clips at frame level instead of only using
    /// their weakified labels.
    pub use_strong_frames: bool,
    pub pseudo_threshold: Real,
    pub keep_empty_pseudo: bool,
    /// Clip pooling used at inference time for pseudo-labels.
    pub pooling: PoolingKind,
    /// Optional pretrained backbone to load before training.
    pub init_checkpoint: Option<PathBuf>,
}

#[derive(Clone, Debug)]
pub struct StageTwoConfig {
    pub arch: Stage2Arch,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: Real,
    pub warmup_epochs: usize,
    pub ema_decay: Real,
    pub consistency_weight: Real,
    pub ict: bool,
    pub ict_alpha: Real,
    pub augment: bool,
    pub gamma: Real,
    pub zeta: Real,
    pub conv_filters: Vec<usize>,
    pub gru_hidden: usize,
    pub basis_kernels: usize,
    /// Run without pseudo-weak labels (two-stage ablation); the
    /// unlabeled clips then contribute consistency only.
    pub allow_missing_pseudo: bool,
}

#[derive(Clone, Debug)]
pub struct RunConfig {
    pub seed: u64,
    pub threads: usize,
    /// When false, the seed is drawn from OS entropy at command start.
    pub deterministic: bool,
    pub out_dir: PathBuf,
    pub audio_root: PathBuf,
    pub classes: Vec<String>,
    pub strong_manifest: PathBuf,
    pub weak_manifest: PathBuf,
    pub unlabeled_manifest: PathBuf,
    pub validation_manifest: PathBuf,
    pub feature_cache: bool,
    /// Cache location override; defaults to `<out_dir>/features`. Point
    /// several runs over one corpus at the same directory to share it.
    pub feature_cache_dir: Option<PathBuf>,
    pub stage1: StageOneConfig,
    pub stage2: StageTwoConfig,
    pub median_beta: Real,
    /// Per-class median-duration overrides (seconds).
    pub median_duration_overrides: HashMap<String, Real>,
}

impl RunConfig {
    /// Desk-scale defaults; paths must still be set.
    pub fn desk_defaults() -> Self {
        RunConfig {
            seed: 1,
            threads: 4,
            deterministic: true,
            out_dir: PathBuf::from("runs/desk"),
            audio_root: PathBuf::from("audio"),
            classes: crate::synth::class_names(3),
            strong_manifest: PathBuf::from("strong.tsv"),
            weak_manifest: PathBuf::from("weak.tsv"),
            unlabeled_manifest: PathBuf::from("unlabeled.tsv"),
            validation_manifest: PathBuf::from("validation.tsv"),
            feature_cache: true,
            feature_cache_dir: None,
            stage1: StageOneConfig {
                epochs: 12,
                batch_size: 8,
                lr: 1e-3,
                width_div: 8,
                warmup_epochs: 3,
                ema_decay: 0.999,
                consistency_weight: 2.0,
                ict: true,
                ict_alpha: 0.5,
                augment: true,
                use_strong_frames: false,
                pseudo_threshold: 0.5,
                keep_empty_pseudo: true,
                pooling: PoolingKind::ExpSoftmax,
                init_checkpoint: None,
            },
            stage2: StageTwoConfig {
                arch: Stage2Arch::Fdy,
                epochs: 12,
                batch_size: 8,
                lr: 1e-3,
                warmup_epochs: 3,
                ema_decay: 0.999,
                consistency_weight: 2.0,
                ict: true,
                ict_alpha: 0.5,
                augment: true,
                gamma: 0.625,
                zeta: 1.0,
                conv_filters: vec![8, 16, 32, 32, 32, 32, 32],
                gru_hidden: 32,
                basis_kernels: 4,
                allow_missing_pseudo: false,
            },
            median_beta: 1.0 / 3.0,
            median_duration_overrides: HashMap::new(),
        }
    }

    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        let mut cfg = RunConfig::desk_defaults();
        let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!(
                    "{}:{}: expected `key = value`, got `{raw}`",
                    path.display(),
                    lineno + 1
                )));
            };
            cfg.apply(key.trim(), value.trim(), &base).map_err(|e| {
                Error::Config(format!("{}:{}: {e}", path.display(), lineno + 1))
            })?;
        }
        // env var override for the output directory
        if let Ok(dir) = std::env::var("TAGSED_OUT_DIR") {
            if !dir.is_empty() {
                cfg.out_dir = PathBuf::from(dir);
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, key: &str, value: &str, base: &Path) -> Result<()> {
        fn parse<T: std::str::FromStr>(key: &str, v: &str) -> Result<T> {
            v.parse()
                .map_err(|_| Error::Config(format!("cannot parse `{v}` for `{key}`")))
        }
        let rel = |v: &str| -> PathBuf {
            let p = PathBuf::from(v);
            if p.is_absolute() {
                p
            } else {
                base.join(p)
            }
        };
        if let Some(name) = key.strip_prefix("median.duration.") {
            self.median_duration_overrides
                .insert(name.to_string(), parse(key, value)?);
            return Ok(());
        }
        match key {
            "seed" => self.seed = parse(key, value)?,
            "threads" => self.threads = parse(key, value)?,
            "deterministic" => self.deterministic = parse(key, value)?,
            "out_dir" => self.out_dir = rel(value),
            "audio_root" => self.audio_root = rel(value),
            "classes" => {
                self.classes = value.split(',').map(|s| s.trim().to_string()).collect();
            }
            "strong_manifest" => self.strong_manifest = rel(value),
            "weak_manifest" => self.weak_manifest = rel(value),
            "unlabeled_manifest" => self.unlabeled_manifest = rel(value),
            "validation_manifest" => self.validation_manifest = rel(value),
            "feature_cache" => self.feature_cache = parse(key, value)?,
            "feature_cache_dir" => {
                self.feature_cache_dir = (!value.is_empty()).then(|| rel(value));
            }
            "median.beta" => self.median_beta = parse(key, value)?,
            "stage1.epochs" => self.stage1.epochs = parse(key, value)?,
            "stage1.batch_size" => self.stage1.batch_size = parse(key, value)?,
            "stage1.lr" => self.stage1.lr = parse(key, value)?,
            "stage1.width_div" => self.stage1.width_div = parse(key, value)?,
            "stage1.warmup_epochs" => self.stage1.warmup_epochs = parse(key, value)?,
            "stage1.ema_decay" => self.stage1.ema_decay = parse(key, value)?,
            "stage1.consistency_weight" => self.stage1.consistency_weight = parse(key, value)?,
            "stage1.ict" => self.stage1.ict = parse(key, value)?,
            "stage1.ict_alpha" => self.stage1.ict_alpha = parse(key, value)?,
            "stage1.augment" => self.stage1.augment = parse(key, value)?,
            "stage1.use_strong_frames" => self.stage1.use_strong_frames = parse(key, value)?,
            "stage1.pseudo_threshold" => self.stage1.pseudo_threshold = parse(key, value)?,
            "stage1.keep_empty_pseudo" => self.stage1.keep_empty_pseudo = parse(key, value)?,
            "stage1.init_checkpoint" => {
                self.stage1.init_checkpoint = (!value.is_empty()).then(|| rel(value));
            }
            "stage1.pooling" => {
                self.stage1.pooling = match value {
                    "attention" => PoolingKind::Attention,
                    "exp-softmax" | "exp_softmax" => PoolingKind::ExpSoftmax,
                    other => return Err(Error::Config(format!("unknown pooling `{other}`"))),
                }
            }
            "stage2.arch" => {
                self.stage2.arch = match value {
                    "fdy" | "fdy-crnn" => Stage2Arch::Fdy,
                    "crnn" => Stage2Arch::Crnn,
                    other => return Err(Error::Config(format!("unknown stage-2 arch `{other}`"))),
                }
            }
            "stage2.epochs" => self.stage2.epochs = parse(key, value)?,
            "stage2.batch_size" => self.stage2.batch_size = parse(key, value)?,
            "stage2.lr" => self.stage2.lr = parse(key, value)?,
            "stage2.warmup_epochs" => self.stage2.warmup_epochs = parse(key, value)?,
            "stage2.ema_decay" => self.stage2.ema_decay = parse(key, value)?,
            "stage2.consistency_weight" => self.stage2.consistency_weight = parse(key, value)?,
            "stage2.ict" => self.stage2.ict = parse(key, value)?,
            "stage2.ict_alpha" => self.stage2.ict_alpha = parse(key, value)?,
            "stage2.augment" => self.stage2.augment = parse(key, value)?,
            "stage2.gamma" => self.stage2.gamma = parse(key, value)?,
            "stage2.zeta" => self.stage2.zeta = parse(key, value)?,
            "stage2.conv_filters" => {
                self.stage2.conv_filters = value
                    .split(',')
                    .map(|s| parse("stage2.conv_filters", s.trim()))
                    .collect::<Result<_>>()?;
            }
            "stage2.gru_hidden" => self.stage2.gru_hidden = parse(key, value)?,
            "stage2.basis_kernels" => self.stage2.basis_kernels = parse(key, value)?,
            "stage2.allow_missing_pseudo" => self.stage2.allow_missing_pseudo = parse(key, value)?,
            other => return Err(Error::Config(format!("unknown config key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.classes.is_empty() {
            return Err(Error::Config("classes must not be empty".into()));
        }
        if !(0.0..1.0).contains(&self.stage1.pseudo_threshold) || self.stage1.pseudo_threshold <= 0.0 {
            return Err(Error::Config("stage1.pseudo_threshold must lie in (0, 1)".into()));
        }
        if self.stage1.batch_size == 0 || self.stage2.batch_size == 0 {
            return Err(Error::Config("batch sizes must be positive".into()));
        }
        Ok(())
    }

    /// Training hyperparameters for stage 1; the effective seed accounts
    /// for the deterministic flag.
    pub fn stage1_train(&self, seed: u64) -> TrainConfig {
        let s = &self.stage1;
        TrainConfig {
            epochs: s.epochs,
            batch_size: s.batch_size,
            adam: crate::numerics::AdamConfig {
                lr: s.lr,
                ..Default::default()
            },
            ssl: SslConfig {
                ema_decay: s.ema_decay,
                consistency_weight_max: s.consistency_weight,
                warmup_epochs: s.warmup_epochs,
                ict_enabled: s.ict,
                ict_alpha: s.ict_alpha,
            },
            loss: AflConfig::default(),
            augment: stage1_augment(s.augment),
            bn_momentum: 0.1,
            seed,
            threads: self.threads,
        }
    }

    pub fn stage2_train(&self, seed: u64) -> TrainConfig {
        let s = &self.stage2;
        TrainConfig {
            epochs: s.epochs,
            batch_size: s.batch_size,
            adam: crate::numerics::AdamConfig {
                lr: s.lr,
                ..Default::default()
            },
            ssl: SslConfig {
                ema_decay: s.ema_decay,
                consistency_weight_max: s.consistency_weight,
                warmup_epochs: s.warmup_epochs,
                ict_enabled: s.ict,
                ict_alpha: s.ict_alpha,
            },
            loss: AflConfig {
                gamma: s.gamma,
                zeta: s.zeta,
            },
            augment: stage2_augment(s.augment),
            bn_momentum: 0.1,
            seed,
            threads: self.threads,
        }
    }
}

/// Stage-1 menu: time-masking, frame-shifting, mixup, Gaussian noise.
pub fn stage1_augment(enabled: bool) -> AugmentConfig {
    if !enabled {
        return AugmentConfig::disabled();
    }
    AugmentConfig {
        enable_filter_aug: false,
        ..AugmentConfig::default()
    }
}

/// Stage-2 menu: time-masking, frame-shifting, mixup, filter
/// augmentation.
pub fn stage2_augment(enabled: bool) -> AugmentConfig {
    if !enabled {
        return AugmentConfig::disabled();
    }
    AugmentConfig {
        enable_noise: false,
        ..AugmentConfig::default()
    }
}
