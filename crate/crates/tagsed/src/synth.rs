//! Synthetic desk-scale corpus: 10-second WAVs of class-distinct tone
//! events over a quiet noise floor, with exact strong annotations, split
//! into strong / weak / unlabeled / validation manifests.

use std::path::{Path, PathBuf};

use rand::{RngExt, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::features::{CLIP_SAMPLES, TARGET_RATE};
use crate::labels::manifest::{write_strong, write_unlabeled, write_weak};
use crate::labels::{weakify, Event, EventList, Vocabulary};
use crate::numerics::Real;

/// Tone frequency per class index; spaced to land in well-separated mel
/// bands.
fn class_freq(class: usize) -> Real {
    400.0 * (2.2 as Real).powi(class as i32)
}

pub const MAX_SYNTH_CLASSES: usize = 5;

#[derive(Clone, Debug)]
pub struct SynthConfig {
    pub n_clips: usize,
    pub n_classes: usize,
    pub seed: u64,
    /// Fractions of clips per split: strong, weak, unlabeled; the rest
    /// is validation.
    pub split: (f64, f64, f64),
    pub events_per_clip: (usize, usize),
    pub event_duration_s: (Real, Real),
    pub event_amplitude: Real,
    pub noise_floor: Real,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            n_clips: 60,
            n_classes: 3,
            seed: 7,
            // unlabeled-heavy, mirroring the semi-supervised regime
            split: (0.10, 0.07, 0.6),
            events_per_clip: (1, 3),
            event_duration_s: (1.0, 4.0),
            event_amplitude: 0.25,
            noise_floor: 0.003,
        }
    }
}

pub struct SynthSummary {
    pub vocab: Vocabulary,
    pub audio_dir: PathBuf,
    pub strong_manifest: PathBuf,
    pub weak_manifest: PathBuf,
    pub unlabeled_manifest: PathBuf,
    pub validation_manifest: PathBuf,
    pub n_strong: usize,
    pub n_weak: usize,
    pub n_unlabeled: usize,
    pub n_validation: usize,
}

pub fn class_names(n_classes: usize) -> Vec<String> {
    (0..n_classes)
        .map(|i| format!("tone_{}", (b'a' + i as u8) as char))
        .collect()
}

fn synth_events(cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Event> {
    let n = rng.random_range(cfg.events_per_clip.0..=cfg.events_per_clip.1);
    let mut events = Vec::with_capacity(n);
    for _ in 0..n {
        let class = rng.random_range(0..cfg.n_classes);
        let dur = rng.random_range(cfg.event_duration_s.0..=cfg.event_duration_s.1);
        let onset = rng.random_range(0.0..=(10.0 - dur));
        // snap to the 64 ms decoded-frame grid so targets are crisp
        let onset = (onset / 0.064).round() * 0.064;
        let offset = ((onset + dur) / 0.064).round() * 0.064;
        let offset = offset.min(10.0);
        events.push(Event {
            class,
            onset,
            offset: offset.max(onset + 0.064),
        });
    }
    events
}

fn render_clip(events: &[Event], cfg: &SynthConfig, rng: &mut ChaCha8Rng) -> Vec<Real> {
    let noise = Normal::new(0.0f64, cfg.noise_floor as f64).expect("positive noise floor");
    let mut samples: Vec<Real> = (0..CLIP_SAMPLES).map(|_| noise.sample(rng) as Real).collect();
    let ramp = (0.01 * TARGET_RATE as Real) as usize; // 10 ms fade
    for e in events {
        let start = (e.onset * TARGET_RATE as Real) as usize;
        let end = ((e.offset * TARGET_RATE as Real) as usize).min(CLIP_SAMPLES);
        let freq = class_freq(e.class);
        for (k, i) in (start..end).enumerate() {
            let t = i as Real / TARGET_RATE as Real;
            let mut a = cfg.event_amplitude;
            if k < ramp {
                a *= k as Real / ramp as Real;
            }
            let tail = end - start - k;
            if tail < ramp {
                a *= tail as Real / ramp as Real;
            }
            samples[i] += a * (2.0 * std::f64::consts::PI as Real * freq * t).sin();
        }
    }
    samples
}

fn write_wav(path: &Path, samples: &[Real]) -> Result<()> {
    let spec = hound::WavSpec {
        channels: 1,
        sample_rate: TARGET_RATE,
        bits_per_sample: 16,
        sample_format: hound::SampleFormat::Int,
    };
    let mut w = hound::WavWriter::create(path, spec)
        .map_err(|e| Error::Invalid(format!("{}: {e}", path.display())))?;
    for &s in samples {
        let v = (s.clamp(-1.0, 1.0) * 32767.0).round() as i16;
        w.write_sample(v).map_err(|e| Error::Invalid(e.to_string()))?;
    }
    w.finalize().map_err(|e| Error::Invalid(e.to_string()))?;
    Ok(())
}

/// Generate the corpus under `out_dir`: WAVs in `audio/`, manifests next
/// to them. Byte-identical for a fixed config.
pub fn generate(out_dir: &Path, cfg: &SynthConfig) -> Result<SynthSummary> {
    if cfg.n_classes == 0 || cfg.n_classes > MAX_SYNTH_CLASSES {
        return Err(Error::Config(format!(
            "synthdata supports 1..={MAX_SYNTH_CLASSES} classes, got {}",
            cfg.n_classes
        )));
    }
    if cfg.n_clips < 4 {
        return Err(Error::Config("need at least 4 clips to populate every split".into()));
    }
    let vocab = Vocabulary::new(&class_names(cfg.n_classes))?;
    let audio_dir = out_dir.join("audio");
    std::fs::create_dir_all(&audio_dir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut clips: Vec<EventList> = Vec::with_capacity(cfg.n_clips);
    for i in 0..cfg.n_clips {
        let clip_id = format!("clip_{i:04}.wav");
        let mut events = synth_events(cfg, &mut rng);
        // guarantee at least one event of each class across the corpus
        if i < cfg.n_classes {
            events[0].class = i;
        }
        let samples = render_clip(&events, cfg, &mut rng);
        write_wav(&audio_dir.join(&clip_id), &samples)?;
        clips.push(EventList { clip_id, events });
    }

    let n_strong = (cfg.n_clips as f64 * cfg.split.0).round() as usize;
    let n_weak = (cfg.n_clips as f64 * cfg.split.1).round() as usize;
    let n_unlabeled = (cfg.n_clips as f64 * cfg.split.2).round() as usize;
    let n_validation = cfg
        .n_clips
        .checked_sub(n_strong + n_weak + n_unlabeled)
        .filter(|&n| n > 0)
        .ok_or_else(|| Error::Config("split fractions leave no validation clips".into()))?;

    let strong = &clips[..n_strong];
    let weak: Vec<_> = clips[n_strong..n_strong + n_weak].iter().map(weakify).collect();
    let unlabeled: Vec<String> = clips[n_strong + n_weak..n_strong + n_weak + n_unlabeled]
        .iter()
        .map(|c| c.clip_id.clone())
        .collect();
    let validation = &clips[n_strong + n_weak + n_unlabeled..];

    let strong_manifest = out_dir.join("strong.tsv");
    let weak_manifest = out_dir.join("weak.tsv");
    let unlabeled_manifest = out_dir.join("unlabeled.tsv");
    let validation_manifest = out_dir.join("validation.tsv");
    write_strong(&strong_manifest, strong, &vocab)?;
    write_weak(&weak_manifest, &weak, &vocab)?;
    write_unlabeled(&unlabeled_manifest, &unlabeled)?;
    write_strong(&validation_manifest, validation, &vocab)?;

    Ok(SynthSummary {
        vocab,
        audio_dir,
        strong_manifest,
        weak_manifest,
        unlabeled_manifest,
        validation_manifest,
        n_strong,
        n_weak,
        n_unlabeled,
        n_validation,
    })
}
