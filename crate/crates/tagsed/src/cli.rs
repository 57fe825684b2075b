//! Command implementations behind the `tagsed` binary: corpus synthesis,
//! the two training stages, pseudo-label inference, evaluation, and
//! report emission.

use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::{PoolingKind, RunConfig, Stage2Arch};
use crate::error::{Error, Result};
use crate::features::cached_logmel;
use crate::labels::manifest::{parse_strong, parse_unlabeled, parse_weak, write_strong, write_weak};
use crate::labels::{frame_targets, pseudo_label, weakify, EventList, Vocabulary, WeakLabel};
use crate::models::{
    exp_softmax_pool_tensor, load_model, save_model, AtBackbone, AtBackboneConfig, Crnn,
    CrnnConfig, FdyConfig, FdyCrnn, SedModel,
};
use crate::numerics::{Real, Tensor};
use crate::postprocess::{binarize, decode_events, median_filter, MedianConfig};
use crate::psds::{compute_psds, compute_psds_from_events, roc_csv, PsdsConfig, PsdsReport};
use crate::synth::{generate, SynthConfig};
use crate::train::{log_to_csv, SlotLoss, StageData, TrainClip, TrainOutcome, Validation};

pub struct ArtifactPaths {
    pub stage1_ckpt: PathBuf,
    pub stage1_log: PathBuf,
    pub pseudo_weak: PathBuf,
    pub stage2_ckpt: PathBuf,
    pub stage2_log: PathBuf,
    pub predictions: PathBuf,
    pub psds_json: [PathBuf; 2],
    pub roc_csv: [PathBuf; 2],
}

impl ArtifactPaths {
    pub fn new(out_dir: &Path) -> Self {
        ArtifactPaths {
            stage1_ckpt: out_dir.join("stage1.ckpt"),
            stage1_log: out_dir.join("stage1_log.csv"),
            pseudo_weak: out_dir.join("pseudo_weak.tsv"),
            stage2_ckpt: out_dir.join("stage2.ckpt"),
            stage2_log: out_dir.join("stage2_log.csv"),
            predictions: out_dir.join("predictions.tsv"),
            psds_json: [
                out_dir.join("psds_scenario1.json"),
                out_dir.join("psds_scenario2.json"),
            ],
            roc_csv: [
                out_dir.join("roc_scenario1.csv"),
                out_dir.join("roc_scenario2.csv"),
            ],
        }
    }
}

fn effective_seed(cfg: &RunConfig) -> u64 {
    if cfg.deterministic {
        cfg.seed
    } else {
        rand::random()
    }
}

fn vocab_of(cfg: &RunConfig) -> Result<Vocabulary> {
    Vocabulary::new(&cfg.classes)
}

fn cache_dir(cfg: &RunConfig) -> Option<PathBuf> {
    cfg.feature_cache.then(|| {
        cfg.feature_cache_dir
            .clone()
            .unwrap_or_else(|| cfg.out_dir.join("features"))
    })
}

fn features_for(cfg: &RunConfig, clip_id: &str, n_mels: usize) -> Result<Tensor> {
    let path = cfg.audio_root.join(clip_id);
    let cache = cache_dir(cfg);
    Ok(cached_logmel(&path, cache.as_deref(), n_mels)?.frames)
}

fn stage1_model(cfg: &RunConfig, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Result<AtBackbone> {
    let mut at_cfg = AtBackboneConfig::desk(vocab.len());
    at_cfg.width_div = cfg.stage1.width_div;
    AtBackbone::new(at_cfg, rng)
}

fn stage2_crnn_config(cfg: &RunConfig, vocab: &Vocabulary) -> CrnnConfig {
    let mut base = CrnnConfig::new(vocab.len());
    base.conv_filters = cfg.stage2.conv_filters.clone();
    base.gru_hidden = cfg.stage2.gru_hidden;
    base
}

enum Stage2Model {
    Fdy(FdyCrnn),
    Crnn(Crnn),
}

impl Stage2Model {
    fn build(cfg: &RunConfig, vocab: &Vocabulary, rng: &mut ChaCha8Rng) -> Result<Self> {
        let base = stage2_crnn_config(cfg, vocab);
        Ok(match cfg.stage2.arch {
            Stage2Arch::Fdy => {
                let fdy_cfg = FdyConfig {
                    base,
                    basis_kernels: cfg.stage2.basis_kernels,
                    ..FdyConfig::new(vocab.len())
                };
                Stage2Model::Fdy(FdyCrnn::new(fdy_cfg, rng)?)
            }
            Stage2Arch::Crnn => Stage2Model::Crnn(Crnn::new(base, rng)?),
        })
    }

}

/// Frame-target grid of a model for a 626-frame input.
fn target_grid(model: &dyn SedModel) -> (usize, Real) {
    (
        model.output_frames(626),
        crate::features::FRAME_HOP_S * model.time_downsample() as Real,
    )
}

pub fn cmd_synthdata(out_dir: &Path, n_clips: usize, n_classes: usize, seed: u64) -> Result<()> {
    let cfg = SynthConfig {
        n_clips,
        n_classes,
        seed,
        ..SynthConfig::default()
    };
    let summary = generate(out_dir, &cfg)?;
    let conf = format!(
        "# generated by `tagsed synthdata`\nseed = {seed}\nout_dir = run\naudio_root = audio\n\
         classes = {classes}\nstrong_manifest = strong.tsv\nweak_manifest = weak.tsv\n\
         unlabeled_manifest = unlabeled.tsv\nvalidation_manifest = validation.tsv\n",
        classes = summary.vocab.names().join(",")
    );
    std::fs::write(out_dir.join("run.conf"), conf)?;
    println!(
        "synthdata: {} clips ({} strong / {} weak / {} unlabeled / {} validation) under {}",
        n_clips,
        summary.n_strong,
        summary.n_weak,
        summary.n_unlabeled,
        summary.n_validation,
        out_dir.display()
    );
    Ok(())
}

fn stage1_data(cfg: &RunConfig, vocab: &Vocabulary, model: &dyn SedModel) -> Result<StageData> {
    let n_mels = model.n_mels();
    let strong = parse_strong(&cfg.strong_manifest, vocab)?;
    let (grid_frames, grid_hop) = target_grid(model);

    let mut weakified = Vec::with_capacity(strong.len());
    for clip in &strong {
        let features = features_for(cfg, &clip.clip_id, n_mels)?;
        let clip_label = Some(weakify(clip).multi_hot(vocab.len()));
        let frame_label = cfg
            .stage1
            .use_strong_frames
            .then(|| frame_targets(clip, grid_frames, grid_hop, vocab.len()));
        weakified.push(TrainClip {
            clip_id: clip.clip_id.clone(),
            features,
            clip_label,
            frame_label,
        });
    }

    let weak = parse_weak(&cfg.weak_manifest, vocab)?;
    let mut weak_clips = Vec::with_capacity(weak.len());
    for label in &weak {
        weak_clips.push(TrainClip {
            clip_id: label.clip_id.clone(),
            features: features_for(cfg, &label.clip_id, n_mels)?,
            clip_label: Some(label.multi_hot(vocab.len())),
            frame_label: None,
        });
    }

    let unlabeled = parse_unlabeled(&cfg.unlabeled_manifest)?;
    let mut unlabeled_clips = Vec::with_capacity(unlabeled.len());
    for clip_id in &unlabeled {
        unlabeled_clips.push(TrainClip {
            clip_id: clip_id.clone(),
            features: features_for(cfg, clip_id, n_mels)?,
            clip_label: None,
            frame_label: None,
        });
    }

    let validation = parse_strong(&cfg.validation_manifest, vocab)?;
    let mut val_clips = Vec::with_capacity(validation.len());
    for clip in &validation {
        val_clips.push(TrainClip {
            clip_id: clip.clip_id.clone(),
            features: features_for(cfg, &clip.clip_id, n_mels)?,
            clip_label: Some(weakify(clip).multi_hot(vocab.len())),
            frame_label: None,
        });
    }

    let slot0_loss = if cfg.stage1.use_strong_frames {
        SlotLoss::Frame
    } else {
        SlotLoss::Clip
    };
    Ok(StageData {
        slots: [weakified, weak_clips, unlabeled_clips],
        slot_loss: [slot0_loss, SlotLoss::Clip, SlotLoss::Unsupervised],
        validation: Validation::ClipF1(val_clips),
    })
}

pub fn cmd_train_stage1(cfg: &RunConfig) -> Result<TrainOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let vocab = vocab_of(cfg)?;
    let seed = effective_seed(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x51a6e1);
    let mut model = stage1_model(cfg, &vocab, &mut rng)?;
    if let Some(init) = &cfg.stage1.init_checkpoint {
        load_model(init, model.arch_name(), &mut model.params)?;
        println!("stage1: initialized from {}", init.display());
    }
    let data = stage1_data(cfg, &vocab, &model)?;
    let outcome = crate::train::train_stage1(&mut model, &data, &cfg.stage1_train(seed))?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    save_model(&paths.stage1_ckpt, model.arch_name(), vocab.len(), model.n_mels(), &model.params)?;
    std::fs::write(&paths.stage1_log, log_to_csv(&outcome.log))?;
    println!(
        "stage1: trained {} epochs, best clip-F1 {:?} at epoch {:?}; checkpoint {}",
        outcome.log.len(),
        outcome.best_metric,
        outcome.best_epoch,
        paths.stage1_ckpt.display()
    );
    Ok(outcome)
}

pub fn cmd_infer_pseudo(cfg: &RunConfig) -> Result<usize> {
    let vocab = vocab_of(cfg)?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    if !paths.stage1_ckpt.is_file() {
        return Err(Error::MissingArtifact {
            what: format!("stage-1 checkpoint {}", paths.stage1_ckpt.display()),
            hint: "tagsed train-stage1".into(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(effective_seed(cfg) ^ 0x1f2);
    let mut model = stage1_model(cfg, &vocab, &mut rng)?;
    load_model(&paths.stage1_ckpt, model.arch_name(), &mut model.params)?;

    let unlabeled = parse_unlabeled(&cfg.unlabeled_manifest)?;
    let mut labels = Vec::with_capacity(unlabeled.len());
    for clip_id in &unlabeled {
        let features = features_for(cfg, clip_id, model.n_mels())?;
        let p = model.infer(&features)?;
        let clip_probs = match cfg.stage1.pooling {
            PoolingKind::Attention => p.clip,
            PoolingKind::ExpSoftmax => exp_softmax_pool_tensor(&p.frame)?,
        };
        let classes = pseudo_label(clip_probs.data(), cfg.stage1.pseudo_threshold);
        if classes.is_empty() && !cfg.stage1.keep_empty_pseudo {
            continue;
        }
        labels.push(WeakLabel {
            clip_id: clip_id.clone(),
            classes,
        });
    }
    write_weak(&paths.pseudo_weak, &labels, &vocab)?;
    println!(
        "infer-pseudo: {} pseudo-weak labels written to {}",
        labels.len(),
        paths.pseudo_weak.display()
    );
    Ok(labels.len())
}

fn stage2_data(
    cfg: &RunConfig,
    vocab: &Vocabulary,
    model: &dyn SedModel,
    pseudo: Option<Vec<WeakLabel>>,
) -> Result<StageData> {
    let n_mels = model.n_mels();
    let (grid_frames, grid_hop) = target_grid(model);
    let strong = parse_strong(&cfg.strong_manifest, vocab)?;
    let mut strong_clips = Vec::with_capacity(strong.len());
    for clip in &strong {
        strong_clips.push(TrainClip {
            clip_id: clip.clip_id.clone(),
            features: features_for(cfg, &clip.clip_id, n_mels)?,
            clip_label: Some(weakify(clip).multi_hot(vocab.len())),
            frame_label: Some(frame_targets(clip, grid_frames, grid_hop, vocab.len())),
        });
    }

    let weak = parse_weak(&cfg.weak_manifest, vocab)?;
    let mut weak_clips = Vec::with_capacity(weak.len());
    for label in &weak {
        weak_clips.push(TrainClip {
            clip_id: label.clip_id.clone(),
            features: features_for(cfg, &label.clip_id, n_mels)?,
            clip_label: Some(label.multi_hot(vocab.len())),
            frame_label: None,
        });
    }

    // third slot: pseudo-weak labels when available, otherwise the raw
    // unlabeled clips contribute consistency only (two-stage ablation)
    let (slot2, slot2_loss) = match pseudo {
        Some(labels) => {
            let mut clips = Vec::with_capacity(labels.len());
            for label in &labels {
                clips.push(TrainClip {
                    clip_id: label.clip_id.clone(),
                    features: features_for(cfg, &label.clip_id, n_mels)?,
                    clip_label: Some(label.multi_hot(vocab.len())),
                    frame_label: None,
                });
            }
            (clips, SlotLoss::Clip)
        }
        None => {
            let unlabeled = parse_unlabeled(&cfg.unlabeled_manifest)?;
            let mut clips = Vec::with_capacity(unlabeled.len());
            for clip_id in &unlabeled {
                clips.push(TrainClip {
                    clip_id: clip_id.clone(),
                    features: features_for(cfg, clip_id, n_mels)?,
                    clip_label: None,
                    frame_label: None,
                });
            }
            (clips, SlotLoss::Unsupervised)
        }
    };

    let refs = parse_strong(&cfg.validation_manifest, vocab)?;
    let mut val_clips = Vec::with_capacity(refs.len());
    for clip in &refs {
        val_clips.push(TrainClip {
            clip_id: clip.clip_id.clone(),
            features: features_for(cfg, &clip.clip_id, n_mels)?,
            clip_label: None,
            frame_label: None,
        });
    }
    let median = median_config(cfg, vocab, &strong, grid_hop)?;
    Ok(StageData {
        slots: [strong_clips, weak_clips, slot2],
        slot_loss: [SlotLoss::Frame, SlotLoss::Clip, slot2_loss],
        validation: Validation::Psds {
            clips: val_clips,
            refs,
            median,
        },
    })
}

/// Median windows sized from the training strong annotations, with
/// per-class duration overrides from the config.
fn median_config(
    cfg: &RunConfig,
    vocab: &Vocabulary,
    strong_refs: &[EventList],
    frame_hop_s: Real,
) -> Result<MedianConfig> {
    let mut median = MedianConfig::from_refs(strong_refs, vocab.len(), frame_hop_s);
    median.beta = vec![cfg.median_beta; vocab.len()];
    for (name, duration) in &cfg.median_duration_overrides {
        let Some(id) = vocab.id(name) else {
            return Err(Error::Config(format!(
                "median.duration override names unknown class `{name}`"
            )));
        };
        median.durations[id] = *duration;
    }
    median.validate()?;
    Ok(median)
}

pub fn cmd_train_stage2(cfg: &RunConfig) -> Result<TrainOutcome> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let vocab = vocab_of(cfg)?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let pseudo = if paths.pseudo_weak.is_file() {
        Some(parse_weak(&paths.pseudo_weak, &vocab)?)
    } else if cfg.stage2.allow_missing_pseudo {
        None
    } else {
        return Err(Error::MissingArtifact {
            what: format!("pseudo-weak labels {}", paths.pseudo_weak.display()),
            hint: "tagsed infer-pseudo".into(),
        });
    };

    let seed = effective_seed(cfg);
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x57a6e2);
    let mut model = Stage2Model::build(cfg, &vocab, &mut rng)?;
    let train_cfg = cfg.stage2_train(seed);
    let (outcome, params, arch, n_mels) = match &mut model {
        Stage2Model::Fdy(m) => {
            let data = stage2_data(cfg, &vocab, m, pseudo)?;
            let o = crate::train::train_stage2(m, &data, &train_cfg)?;
            (o, &m.params, "fdy-crnn", m.n_mels())
        }
        Stage2Model::Crnn(m) => {
            let data = stage2_data(cfg, &vocab, m, pseudo)?;
            let o = crate::train::train_stage2(m, &data, &train_cfg)?;
            (o, &m.params, "crnn", m.n_mels())
        }
    };
    save_model(&paths.stage2_ckpt, arch, vocab.len(), n_mels, params)?;
    std::fs::write(&paths.stage2_log, log_to_csv(&outcome.log))?;
    println!(
        "stage2 ({arch}): trained {} epochs, best PSDS sum {:?} at epoch {:?}; checkpoint {}",
        outcome.log.len(),
        outcome.best_metric,
        outcome.best_epoch,
        paths.stage2_ckpt.display()
    );
    Ok(outcome)
}

/// Evaluate either a trained stage-2 checkpoint or a prediction-events
/// TSV against the validation references. Returns (PSDS1, PSDS2).
pub fn cmd_evaluate(cfg: &RunConfig, predictions: Option<&Path>) -> Result<(Real, Real)> {
    std::fs::create_dir_all(&cfg.out_dir)?;
    let vocab = vocab_of(cfg)?;
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let refs = parse_strong(&cfg.validation_manifest, &vocab)?;
    let strong = parse_strong(&cfg.strong_manifest, &vocab)?;

    let reports: [PsdsReport; 2] = if let Some(pred_path) = predictions {
        let dets = parse_strong(pred_path, &vocab)?;
        // every validation clip counts toward the dataset duration even
        // if the prediction file omits it
        let n_clips = refs.len();
        [
            compute_psds_from_events(&dets, &refs, vocab.len(), n_clips, &PsdsConfig::scenario1())?,
            compute_psds_from_events(&dets, &refs, vocab.len(), n_clips, &PsdsConfig::scenario2())?,
        ]
    } else {
        if !paths.stage2_ckpt.is_file() {
            return Err(Error::MissingArtifact {
                what: format!("stage-2 checkpoint {}", paths.stage2_ckpt.display()),
                hint: "tagsed train-stage2".into(),
            });
        }
        let mut rng = ChaCha8Rng::seed_from_u64(effective_seed(cfg) ^ 0xe7a1);
        let mut model = Stage2Model::build(cfg, &vocab, &mut rng)?;
        let (median, frame_probs) = match &mut model {
            Stage2Model::Fdy(m) => {
                load_model(&paths.stage2_ckpt, "fdy-crnn", &mut m.params)?;
                evaluate_forward(cfg, &vocab, m, &refs, &strong)?
            }
            Stage2Model::Crnn(m) => {
                load_model(&paths.stage2_ckpt, "crnn", &mut m.params)?;
                evaluate_forward(cfg, &vocab, m, &refs, &strong)?
            }
        };
        // decoded events at the 0.5 operating point for inspection
        let windows = median.windows();
        let mut decoded = Vec::new();
        for (clip_id, probs) in &frame_probs {
            let hard = binarize(probs, 0.5);
            let filtered = median_filter(&hard, &windows);
            decoded.push(decode_events(&filtered, median.frame_hop_s, clip_id));
        }
        write_strong(&paths.predictions, &decoded, &vocab)?;
        [
            compute_psds(&frame_probs, &refs, &median, &PsdsConfig::scenario1())?,
            compute_psds(&frame_probs, &refs, &median, &PsdsConfig::scenario2())?,
        ]
    };

    for (i, report) in reports.iter().enumerate() {
        std::fs::write(&paths.psds_json[i], serde_json::to_string_pretty(report)?)?;
        std::fs::write(&paths.roc_csv[i], roc_csv(report))?;
    }
    println!(
        "evaluate: PSDS1 = {:.4}, PSDS2 = {:.4} (reports under {})",
        reports[0].score,
        reports[1].score,
        cfg.out_dir.display()
    );
    Ok((reports[0].score, reports[1].score))
}

#[allow(clippy::type_complexity)]
fn evaluate_forward<M: SedModel>(
    cfg: &RunConfig,
    vocab: &Vocabulary,
    model: &M,
    refs: &[EventList],
    strong: &[EventList],
) -> Result<(MedianConfig, Vec<(String, Tensor)>)> {
    let (_, grid_hop) = target_grid(model);
    let median = median_config(cfg, vocab, strong, grid_hop)?;
    let mut frame_probs = Vec::with_capacity(refs.len());
    for clip in refs {
        let features = features_for(cfg, &clip.clip_id, model.n_mels())?;
        let p = model.infer(&features)?;
        frame_probs.push((clip.clip_id.clone(), p.frame));
    }
    Ok((median, frame_probs))
}

/// Merge the stage logs and evaluation scores into plot-ready CSVs.
pub fn cmd_report(cfg: &RunConfig) -> Result<()> {
    let paths = ArtifactPaths::new(&cfg.out_dir);
    let mut training = String::from("stage,epoch,warmup,supervised_loss,consistency_loss,consistency_weight,val_metric\n");
    let mut any = false;
    for (stage, log_path) in [("stage1", &paths.stage1_log), ("stage2", &paths.stage2_log)] {
        if let Ok(text) = std::fs::read_to_string(log_path) {
            any = true;
            for line in text.lines().skip(1) {
                training.push_str(&format!("{stage},{line}\n"));
            }
        }
    }
    let mut scores = String::from("scenario,score\n");
    for json_path in &paths.psds_json {
        if let Ok(text) = std::fs::read_to_string(json_path) {
            let report: serde_json::Value = serde_json::from_str(&text)?;
            if let (Some(s), Some(v)) = (report["scenario"].as_str(), report["score"].as_f64()) {
                any = true;
                scores.push_str(&format!("{s},{v}\n"));
            }
        }
    }
    if !any {
        return Err(Error::MissingArtifact {
            what: format!("no logs or evaluation reports under {}", cfg.out_dir.display()),
            hint: "tagsed train-stage1 / evaluate".into(),
        });
    }
    std::fs::write(cfg.out_dir.join("report_training.csv"), &training)?;
    std::fs::write(cfg.out_dir.join("report_scores.csv"), &scores)?;
    println!(
        "report: wrote {} and {}",
        cfg.out_dir.join("report_training.csv").display(),
        cfg.out_dir.join("report_scores.csv").display()
    );
    Ok(())
}
