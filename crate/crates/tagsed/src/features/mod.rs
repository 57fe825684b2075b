//! Audio ingestion and log-mel feature extraction.

pub mod audio;
pub mod logmel;

use std::path::Path;

use crate::error::Result;
use crate::numerics::checkpoint;

pub use audio::{load_audio, resample, Waveform, CLIP_SAMPLES, CLIP_SECONDS, TARGET_RATE};
pub use logmel::{logmel, mel_center_frequencies, mel_filterbank, LogMel, FRAME_HOP_S};

/// Log-mel features for a clip, by way of an on-disk cache: one file per
/// (clip, n_mels) pair in the checkpoint binary format.
pub fn cached_logmel(wav_path: &Path, cache_dir: Option<&Path>, n_mels: usize) -> Result<LogMel> {
    let Some(dir) = cache_dir else {
        let w = load_audio(wav_path)?;
        return logmel(&w, n_mels);
    };
    let stem = wav_path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "clip".to_string());
    let cache_path = dir.join(format!("{stem}.mel{n_mels}.feat"));
    if cache_path.is_file() {
        let frames = checkpoint::load_matrix(&cache_path, "logmel")?;
        return Ok(LogMel {
            frames,
            frame_hop_s: FRAME_HOP_S,
        });
    }
    let w = load_audio(wav_path)?;
    let lm = logmel(&w, n_mels)?;
    std::fs::create_dir_all(dir)?;
    checkpoint::save_matrix(&cache_path, "logmel", &lm.frames)?;
    Ok(lm)
}
