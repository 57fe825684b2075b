//! Training drivers: supervised + mean-teacher objectives, warmup,
//! per-epoch validation and checkpoint selection.
//!
//! Batches mix three provenance slots (see [`BatchPlan`]); each slot
//! carries one supervision kind. Per-clip forward/backward passes are
//! independent and may run on worker threads; gradients are reduced in
//! clip order afterwards, so results are bit-identical for any thread
//! count.

pub mod loss;

use std::fmt::Write as _;

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Beta, Distribution};

use crate::augment::{self, AugmentConfig};
use crate::error::{Error, Result};
use crate::labels::batch::{BatchPlan, BatchSampler};
use crate::labels::EventList;
use crate::metrics::clip_macro_f1;
use crate::models::{apply_bn_updates, SedModel};
use crate::numerics::{adam_step, AdamConfig, AdamState, ParamSet, Real, Tape, Tensor};
use crate::postprocess::MedianConfig;
use crate::psds::{compute_psds, PsdsConfig};

pub use loss::{afl_loss, bce_loss, consistency_loss, warmup_coefficient, AflConfig};

/// Mean-teacher / ICT settings.
#[derive(Clone, Copy, Debug)]
pub struct SslConfig {
    pub ema_decay: Real,
    pub consistency_weight_max: Real,
    pub warmup_epochs: usize,
    pub ict_enabled: bool,
    pub ict_alpha: Real,
}

impl Default for SslConfig {
    fn default() -> Self {
        SslConfig {
            ema_decay: 0.999,
            consistency_weight_max: 2.0,
            warmup_epochs: 50,
            ict_enabled: false,
            ict_alpha: 0.5,
        }
    }
}

#[derive(Clone, Debug)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub ssl: SslConfig,
    pub loss: AflConfig,
    pub augment: AugmentConfig,
    pub bn_momentum: Real,
    pub seed: u64,
    pub threads: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 40,
            batch_size: 8,
            adam: AdamConfig::default(),
            ssl: SslConfig::default(),
            loss: AflConfig::default(),
            augment: AugmentConfig::default(),
            bn_momentum: 0.1,
            seed: 1,
            threads: 1,
        }
    }
}

/// Which loss a slot's clips contribute.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SlotLoss {
    /// Clip-level loss against the multi-hot label.
    Clip,
    /// Frame-level loss against rasterized targets.
    Frame,
    /// Consistency only.
    Unsupervised,
}

/// One training clip with whatever labels its provenance provides.
#[derive(Clone, Debug)]
pub struct TrainClip {
    pub clip_id: String,
    /// [T, M] log-mel features.
    pub features: Tensor,
    /// [K] multi-hot (possibly soft after mixup).
    pub clip_label: Option<Tensor>,
    /// [T', K] on the model's output grid.
    pub frame_label: Option<Tensor>,
}

/// Validation data and the metric used for checkpoint selection.
pub enum Validation {
    /// Clip-level macro-F1 at threshold 0.5.
    ClipF1(Vec<TrainClip>),
    /// PSDS scenario-1 + scenario-2 sum over decoded events.
    Psds {
        clips: Vec<TrainClip>,
        refs: Vec<EventList>,
        median: MedianConfig,
    },
    None,
}

pub struct StageData {
    /// Slot order matches [`BatchPlan`]: (strong, weak, unlabeled).
    pub slots: [Vec<TrainClip>; 3],
    pub slot_loss: [SlotLoss; 3],
    pub validation: Validation,
}

#[derive(Clone, Debug)]
pub struct EpochLog {
    pub epoch: usize,
    pub warmup: Real,
    pub supervised_loss: Real,
    pub consistency_loss: Real,
    pub consistency_weight: Real,
    pub val_metric: Option<Real>,
}

pub struct TrainOutcome {
    pub log: Vec<EpochLog>,
    pub best_metric: Option<Real>,
    pub best_epoch: Option<usize>,
}

pub fn log_to_csv(log: &[EpochLog]) -> String {
    let mut out = String::from("epoch,warmup,supervised_loss,consistency_loss,consistency_weight,val_metric\n");
    for e in log {
        writeln!(
            out,
            "{},{:.6},{:.6},{:.6},{:.6},{}",
            e.epoch,
            e.warmup,
            e.supervised_loss,
            e.consistency_loss,
            e.consistency_weight,
            e.val_metric.map(|v| format!("{v:.6}")).unwrap_or_default()
        )
        .expect("infallible string write");
    }
    out
}

fn mix_seed(parts: &[u64]) -> u64 {
    // splitmix64 over the folded parts
    let mut z = 0x9e3779b97f4a7c15u64;
    for &p in parts {
        z = z.wrapping_add(p).wrapping_add(0x9e3779b97f4a7c15);
        z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
        z ^= z >> 31;
    }
    z
}

struct ClipTask {
    /// Input for the supervised (and non-ICT consistency) forward.
    main_input: Tensor,
    sup: Option<(SlotLoss, Tensor)>,
    /// Teacher posteriors for consistency on the main input.
    cons_main: Option<(Tensor, Tensor)>,
    /// ICT: interpolated input with interpolated teacher targets.
    cons_mixed: Option<(Tensor, Tensor, Tensor)>,
    sup_weight: Real,
    cons_weight: Real,
    dropout_seed: u64,
}

struct TaskResult {
    grads: Vec<Tensor>,
    sup: Option<Real>,
    cons: Option<Real>,
    bn: Vec<(String, Vec<(Real, Real)>)>,
}

fn teacher_infer<M: SedModel + Sync + ?Sized>(
    model: &M,
    teacher: &ParamSet,
    x: &Tensor,
) -> Result<(Tensor, Tensor)> {
    let mut tape = Tape::new();
    let bound = teacher.bind(&mut tape);
    let fwd = model.forward_bound(&mut tape, &bound, x, false, None)?;
    Ok((
        tape.value(fwd.frame_probs).clone(),
        tape.value(fwd.clip_probs).clone(),
    ))
}

fn run_task<M: SedModel + Sync + ?Sized>(model: &M, task: &ClipTask, loss_cfg: AflConfig) -> Result<TaskResult> {
    let mut tape = Tape::new();
    let bound = model.params().bind(&mut tape);
    let mut rng = ChaCha8Rng::seed_from_u64(task.dropout_seed);
    let mut bn = Vec::new();
    let mut terms: Vec<crate::numerics::NodeId> = Vec::new();
    let mut sup_value = None;
    let mut cons_value = 0.0;
    let mut cons_terms = 0usize;

    if task.sup.is_some() || task.cons_main.is_some() {
        let fwd = model.forward_bound(&mut tape, &bound, &task.main_input, true, Some(&mut rng))?;
        bn.extend(fwd.bn_updates.iter().cloned());
        if let Some((kind, target)) = &task.sup {
            let y = tape.leaf(target.clone());
            let l = match kind {
                SlotLoss::Clip => afl_loss(&mut tape, fwd.clip_probs, y, loss_cfg),
                SlotLoss::Frame => afl_loss(&mut tape, fwd.frame_probs, y, loss_cfg),
                SlotLoss::Unsupervised => unreachable!("unsupervised slots carry no targets"),
            };
            sup_value = Some(tape.value(l).item());
            let w = tape.scale(l, task.sup_weight);
            terms.push(w);
        }
        if let Some((t_frame, t_clip)) = &task.cons_main {
            let tf = tape.leaf(t_frame.clone());
            let tc = tape.leaf(t_clip.clone());
            let c = consistency_loss(&mut tape, fwd.frame_probs, fwd.clip_probs, tf, tc);
            cons_value += tape.value(c).item();
            cons_terms += 1;
            let w = tape.scale(c, task.cons_weight);
            terms.push(w);
        }
    }
    if let Some((mixed, t_frame, t_clip)) = &task.cons_mixed {
        let fwd = model.forward_bound(&mut tape, &bound, mixed, true, Some(&mut rng))?;
        bn.extend(fwd.bn_updates.iter().cloned());
        let tf = tape.leaf(t_frame.clone());
        let tc = tape.leaf(t_clip.clone());
        let c = consistency_loss(&mut tape, fwd.frame_probs, fwd.clip_probs, tf, tc);
        cons_value += tape.value(c).item();
        cons_terms += 1;
        let w = tape.scale(c, task.cons_weight);
        terms.push(w);
    }

    let Some(mut total) = terms.first().copied() else {
        // nothing to optimize for this clip
        return Ok(TaskResult {
            grads: model
                .params()
                .trainable()
                .map(|e| Tensor::zeros(e.tensor.shape()))
                .collect(),
            sup: None,
            cons: None,
            bn,
        });
    };
    for t in &terms[1..] {
        total = tape.add(total, *t);
    }
    let grads = tape.backward(total)?;
    let out = bound
        .trainable_ids()
        .iter()
        .map(|(_, id)| grads.get(*id).clone())
        .collect();
    Ok(TaskResult {
        grads: out,
        sup: sup_value,
        cons: (cons_terms > 0).then_some(cons_value / cons_terms as Real),
        bn,
    })
}

fn validate<M: SedModel + Sync + ?Sized>(model: &M, validation: &Validation) -> Result<Option<Real>> {
    match validation {
        Validation::None => Ok(None),
        Validation::ClipF1(clips) => {
            let mut probs = Vec::with_capacity(clips.len());
            let mut targets = Vec::with_capacity(clips.len());
            for clip in clips {
                let p = model.infer(&clip.features)?;
                probs.push(p.clip);
                targets.push(clip.clip_label.clone().ok_or_else(|| {
                    Error::Config("clip-F1 validation requires clip labels".into())
                })?);
            }
            Ok(Some(clip_macro_f1(&probs, &targets, 0.5)))
        }
        Validation::Psds {
            clips,
            refs,
            median,
        } => {
            let mut frame_probs = Vec::with_capacity(clips.len());
            for clip in clips {
                let p = model.infer(&clip.features)?;
                frame_probs.push((clip.clip_id.clone(), p.frame));
            }
            let s1 = compute_psds(&frame_probs, refs, median, &PsdsConfig::scenario1())?;
            let s2 = compute_psds(&frame_probs, refs, median, &PsdsConfig::scenario2())?;
            Ok(Some(s1.score + s2.score))
        }
    }
}

/// Augment one slot's worth of batch clips. Returns the (possibly
/// shifted/masked/mixed) features and labels.
#[allow(clippy::type_complexity)]
fn augment_slot(
    clips: Vec<TrainClip>,
    downsample: usize,
    cfg: &AugmentConfig,
    apply: &[bool; 5],
    rng: &mut ChaCha8Rng,
) -> Vec<TrainClip> {
    let [do_mask, do_shift, do_mixup, do_noise, do_filter] = *apply;
    let mut out: Vec<TrainClip> = clips;
    for clip in &mut out {
        if do_mask {
            clip.features = augment::time_mask(&clip.features, rng, cfg);
        }
        if do_shift {
            let (f, t) = augment::frame_shift(&clip.features, clip.frame_label.as_ref(), downsample, rng, cfg);
            clip.features = f;
            if let Some(t) = t {
                clip.frame_label = Some(t);
            }
        }
        if do_noise {
            clip.features = augment::add_gaussian_noise(&clip.features, rng, cfg);
        }
        if do_filter {
            clip.features = augment::filter_augment(&clip.features, rng, cfg);
        }
    }
    // mixup pairs clips within the slot so label structures match
    if do_mixup && out.len() >= 2 && out[0].clip_label.is_some() {
        let lambda = augment::mixup_lambda(rng, cfg.mixup_alpha);
        let mut perm: Vec<usize> = (0..out.len()).collect();
        use rand::seq::SliceRandom;
        perm.shuffle(rng);
        let originals = out.clone();
        for (i, clip) in out.iter_mut().enumerate() {
            let partner = &originals[perm[i]];
            clip.features = clip
                .features
                .zip_map(&partner.features, "mixup", |a, b| lambda * a + (1.0 - lambda) * b)
                .expect("slot features share a shape");
            if let (Some(a), Some(b)) = (&clip.clip_label, &partner.clip_label) {
                clip.clip_label = Some(a.zip_map(b, "mixup", |x, y| lambda * x + (1.0 - lambda) * y).unwrap());
            }
            if let (Some(a), Some(b)) = (&clip.frame_label, &partner.frame_label) {
                clip.frame_label = Some(a.zip_map(b, "mixup", |x, y| lambda * x + (1.0 - lambda) * y).unwrap());
            }
        }
    }
    out
}

/// Train a model on the given stage data. On return, the model holds the
/// parameters of the best validation epoch (or of the final epoch when
/// no validation is configured); the teacher is discarded.
pub fn train_model<M: SedModel + Sync>(
    model: &mut M,
    data: &StageData,
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let sizes = [data.slots[0].len(), data.slots[1].len(), data.slots[2].len()];
    if sizes.iter().all(|&s| s == 0) {
        return Err(Error::Config("no training clips in any slot".into()));
    }
    let has_supervised = (0..3).any(|i| sizes[i] > 0 && data.slot_loss[i] != SlotLoss::Unsupervised);
    if !has_supervised {
        return Err(Error::Config("no labeled sources; at least one supervised slot is required".into()));
    }

    let plan = BatchPlan::for_batch_size(cfg.batch_size);
    let mut sampler = BatchSampler::new(
        sizes,
        plan,
        ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0xba7c])),
    );
    let plan = sampler.plan();
    let quotas = [plan.n_strong, plan.n_weak, plan.n_unlabeled];
    let steps_per_epoch = (0..3)
        .filter(|&i| quotas[i] > 0)
        .map(|i| sizes[i].div_ceil(quotas[i]))
        .max()
        .unwrap_or(1);

    let mut teacher = model.params().clone();
    let trainable_shapes: Vec<Vec<usize>> = model
        .params()
        .trainable()
        .map(|e| e.tensor.shape().to_vec())
        .collect();
    let shape_refs: Vec<&[usize]> = trainable_shapes.iter().map(|s| s.as_slice()).collect();
    let mut adam = AdamState::new(&shape_refs, cfg.adam);

    let mut aug_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[cfg.seed, 0xa06]));
    let threads = cfg.threads.max(1);
    let need_teacher = cfg.ssl.consistency_weight_max > 0.0;

    let mut log = Vec::with_capacity(cfg.epochs);
    let mut best: Option<(Real, usize, ParamSet)> = None;

    for epoch in 0..cfg.epochs {
        let warm = warmup_coefficient(epoch, cfg.ssl.warmup_epochs);
        let cons_weight = cfg.ssl.consistency_weight_max * warm;
        let mut sup_sum = 0.0;
        let mut sup_count = 0usize;
        let mut cons_sum = 0.0;
        let mut cons_count = 0usize;

        for step in 0..steps_per_epoch {
            let batch = sampler.next_batch();
            let picked = [&batch.strong, &batch.weak, &batch.unlabeled];

            // batch-level transform decisions
            let a = &cfg.augment;
            let roll = |rng: &mut ChaCha8Rng, on: bool| on && rng.random_range(0.0..1.0) < a.apply_prob as f64;
            let apply = [
                roll(&mut aug_rng, a.enable_time_mask),
                roll(&mut aug_rng, a.enable_frame_shift),
                roll(&mut aug_rng, a.enable_mixup),
                roll(&mut aug_rng, a.enable_noise),
                roll(&mut aug_rng, a.enable_filter_aug),
            ];

            let mut slot_clips: Vec<(usize, Vec<TrainClip>)> = Vec::new();
            for slot in 0..3 {
                if picked[slot].is_empty() {
                    continue;
                }
                let clips: Vec<TrainClip> = picked[slot]
                    .iter()
                    .map(|&i| data.slots[slot][i].clone())
                    .collect();
                let mut slot_rng = ChaCha8Rng::seed_from_u64(mix_seed(&[
                    cfg.seed,
                    epoch as u64,
                    step as u64,
                    slot as u64,
                    0xa46,
                ]));
                let clips = augment_slot(clips, model.time_downsample(), a, &apply, &mut slot_rng);
                slot_clips.push((slot, clips));
            }

            // flatten, remembering supervision kinds
            let mut flat: Vec<(SlotLoss, TrainClip)> = Vec::new();
            for (slot, clips) in slot_clips {
                for clip in clips {
                    flat.push((data.slot_loss[slot], clip));
                }
            }
            let n_all = flat.len();
            let n_sup = flat
                .iter()
                .filter(|(kind, _)| *kind != SlotLoss::Unsupervised)
                .count();

            // ICT interpolation plan
            let mut ict: Option<(Real, Vec<usize>)> = None;
            if need_teacher && cfg.ssl.ict_enabled && n_all >= 2 {
                let beta = Beta::new(cfg.ssl.ict_alpha as f64, cfg.ssl.ict_alpha as f64)
                    .map_err(|_| Error::Config("ict_alpha must be positive".into()))?;
                let lambda = beta.sample(&mut aug_rng) as Real;
                let mut perm: Vec<usize> = (0..n_all).collect();
                use rand::seq::SliceRandom;
                perm.shuffle(&mut aug_rng);
                ict = Some((lambda, perm));
            }

            let teacher_out: Vec<Option<(Tensor, Tensor)>> = if need_teacher {
                flat.iter()
                    .map(|(_, clip)| teacher_infer(model, &teacher, &clip.features).map(Some))
                    .collect::<Result<_>>()?
            } else {
                vec![None; n_all]
            };

            let mut tasks = Vec::with_capacity(n_all);
            for (i, (kind, clip)) in flat.iter().enumerate() {
                let sup = match kind {
                    SlotLoss::Clip => Some((SlotLoss::Clip, clip.clip_label.clone().ok_or_else(|| {
                        Error::Config(format!("clip `{}` lacks the clip label its slot requires", clip.clip_id))
                    })?)),
                    SlotLoss::Frame => Some((SlotLoss::Frame, clip.frame_label.clone().ok_or_else(|| {
                        Error::Config(format!("clip `{}` lacks the frame targets its slot requires", clip.clip_id))
                    })?)),
                    SlotLoss::Unsupervised => None,
                };
                let (cons_main, cons_mixed) = match (&teacher_out[i], &ict) {
                    (Some(t), None) => (Some(t.clone()), None),
                    (Some(t), Some((lambda, perm))) => {
                        let j = perm[i];
                        let partner = &flat[j].1;
                        let tp = teacher_out[j].as_ref().expect("teacher ran on all clips");
                        let mixed_in = clip
                            .features
                            .zip_map(&partner.features, "ict", |a, b| lambda * a + (1.0 - lambda) * b)?;
                        let mixed_frame = t.0.zip_map(&tp.0, "ict", |a, b| lambda * a + (1.0 - lambda) * b)?;
                        let mixed_clip = t.1.zip_map(&tp.1, "ict", |a, b| lambda * a + (1.0 - lambda) * b)?;
                        (None, Some((mixed_in, mixed_frame, mixed_clip)))
                    }
                    (None, _) => (None, None),
                };
                tasks.push(ClipTask {
                    main_input: clip.features.clone(),
                    sup,
                    cons_main,
                    cons_mixed,
                    sup_weight: if n_sup > 0 { 1.0 / n_sup as Real } else { 0.0 },
                    cons_weight: if n_all > 0 { cons_weight / n_all as Real } else { 0.0 },
                    dropout_seed: mix_seed(&[cfg.seed, epoch as u64, step as u64, i as u64, 0xd20]),
                });
            }

            // evaluate clips (possibly in parallel), reduce in clip order
            let loss_cfg = cfg.loss;
            let results: Vec<TaskResult> = if threads <= 1 || tasks.len() <= 1 {
                tasks
                    .iter()
                    .map(|t| run_task(&*model, t, loss_cfg))
                    .collect::<Result<_>>()?
            } else {
                let chunk = tasks.len().div_ceil(threads);
                let model_ref = &*model;
                std::thread::scope(|scope| {
                    let handles: Vec<_> = tasks
                        .chunks(chunk)
                        .map(|slice| {
                            scope.spawn(move || {
                                slice
                                    .iter()
                                    .map(|t| run_task(model_ref, t, loss_cfg))
                                    .collect::<Result<Vec<_>>>()
                            })
                        })
                        .collect();
                    let mut all = Vec::with_capacity(tasks.len());
                    for h in handles {
                        all.extend(h.join().expect("worker panicked")?);
                    }
                    Ok::<_, Error>(all)
                })?
            };

            let mut grad_sum: Vec<Tensor> = trainable_shapes.iter().map(|s| Tensor::zeros(s)).collect();
            for r in &results {
                for (g, c) in grad_sum.iter_mut().zip(&r.grads) {
                    for (a, b) in g.data_mut().iter_mut().zip(c.data()) {
                        *a += b;
                    }
                }
                if let Some(s) = r.sup {
                    sup_sum += s;
                    sup_count += 1;
                }
                if let Some(c) = r.cons {
                    cons_sum += c;
                    cons_count += 1;
                }
            }

            // optimizer step on the student
            let mut params: Vec<Tensor> = model
                .params()
                .trainable()
                .map(|e| e.tensor.clone())
                .collect();
            adam_step(&mut adam, &mut params, &grad_sum, warm);
            let names: Vec<String> = model.params().trainable().map(|e| e.name.clone()).collect();
            for (name, tensor) in names.iter().zip(params) {
                *model.params_mut().get_mut(name) = tensor;
            }
            // one running-stat update per step from the batch-averaged
            // per-clip statistics; per-clip updates would leave the
            // running estimates tracking only the most recent clips
            let mut merged: Vec<(String, Vec<(Real, Real)>)> = Vec::new();
            let mut seen: std::collections::HashMap<String, (usize, usize)> = std::collections::HashMap::new();
            for r in &results {
                for (prefix, stats) in &r.bn {
                    match seen.get(prefix) {
                        Some(&(idx, _)) => {
                            let (count, entry) = {
                                let e = &mut merged[idx];
                                for (acc, s) in e.1.iter_mut().zip(stats) {
                                    acc.0 += s.0;
                                    acc.1 += s.1;
                                }
                                let c = seen.get_mut(prefix).unwrap();
                                c.1 += 1;
                                (c.1, idx)
                            };
                            let _ = (count, entry);
                        }
                        None => {
                            seen.insert(prefix.clone(), (merged.len(), 1));
                            merged.push((prefix.clone(), stats.clone()));
                        }
                    }
                }
            }
            for (prefix, stats) in &mut merged {
                let n = seen[prefix.as_str()].1 as Real;
                for s in stats.iter_mut() {
                    s.0 /= n;
                    s.1 /= n;
                }
            }
            apply_bn_updates(model.params_mut(), &merged, cfg.bn_momentum);
            if need_teacher {
                ema_param_sets(&mut teacher, model.params(), cfg.ssl.ema_decay);
            }
        }

        let val_metric = validate(&*model, &data.validation)?;
        if let Some(v) = val_metric {
            let improved = best.as_ref().map(|(b, _, _)| v > *b).unwrap_or(true);
            if improved {
                best = Some((v, epoch, model.params().clone()));
            }
        }
        log.push(EpochLog {
            epoch,
            warmup: warm,
            supervised_loss: if sup_count > 0 { sup_sum / sup_count as Real } else { 0.0 },
            consistency_loss: if cons_count > 0 { cons_sum / cons_count as Real } else { 0.0 },
            consistency_weight: cons_weight,
            val_metric,
        });
    }

    let (best_metric, best_epoch) = match best {
        Some((v, e, params)) => {
            let names: Vec<String> = params.iter().map(|p| p.name.clone()).collect();
            for name in names {
                *model.params_mut().get_mut(&name) = params.get(&name).clone();
            }
            (Some(v), Some(e))
        }
        None => (None, None),
    };
    Ok(TrainOutcome {
        log,
        best_metric,
        best_epoch,
    })
}

/// EMA over every entry (trainable weights and running statistics).
pub fn ema_param_sets(teacher: &mut ParamSet, student: &ParamSet, decay: Real) {
    let names: Vec<String> = teacher.iter().map(|e| e.name.clone()).collect();
    for name in names {
        let s = student.get(&name);
        let t = teacher.get_mut(&name);
        for (tv, &sv) in t.data_mut().iter_mut().zip(s.data()) {
            *tv = decay * *tv + (1.0 - decay) * sv;
        }
    }
}

/// Stage-1: audio tagging on weakified + weak labels with unlabeled
/// consistency.
pub fn train_stage1<M: SedModel + Sync>(model: &mut M, data: &StageData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    let labeled = data.slots[0].len() + data.slots[1].len();
    if labeled == 0 {
        return Err(Error::Config(
            "stage-1 needs weakified or weak labeled clips; both sources are empty".into(),
        ));
    }
    train_model(model, data, cfg)
}

/// Stage-2: sound event detection on strong + weak + pseudo-weak labels.
pub fn train_stage2<M: SedModel + Sync>(model: &mut M, data: &StageData, cfg: &TrainConfig) -> Result<TrainOutcome> {
    train_model(model, data, cfg)
}
