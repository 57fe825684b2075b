//! WAV ingestion: decode, downmix, resample to 16 kHz, fix length to
//! exactly 10 seconds.

use std::path::Path;

use crate::error::{Error, Result};
use crate::numerics::Real;

pub const TARGET_RATE: u32 = 16_000;
pub const CLIP_SECONDS: usize = 10;
pub const CLIP_SAMPLES: usize = TARGET_RATE as usize * CLIP_SECONDS;

/// Half-width of the windowed-sinc resampling kernel.
const SINC_TAPS: isize = 32;

/// Mono 16 kHz waveform of exactly [`CLIP_SAMPLES`] samples.
#[derive(Clone, Debug)]
pub struct Waveform {
    pub samples: Vec<Real>,
    pub rate: u32,
}

fn wav_err(path: &Path, detail: impl Into<String>) -> Error {
    Error::WavFormat {
        path: path.to_path_buf(),
        detail: detail.into(),
    }
}

/// Load a PCM WAV (8/16/24-bit, any rate, mono or stereo), downmix to
/// mono by channel mean, resample to 16 kHz, and zero-pad or truncate to
/// 10 seconds.
pub fn load_audio(path: &Path) -> Result<Waveform> {
    let mut reader =
        hound::WavReader::open(path).map_err(|e| wav_err(path, format!("cannot decode: {e}")))?;
    let spec = reader.spec();
    if spec.sample_format != hound::SampleFormat::Int {
        return Err(wav_err(
            path,
            "sample format is IEEE float; expected 8/16/24-bit PCM",
        ));
    }
    if !matches!(spec.bits_per_sample, 8 | 16 | 24) {
        return Err(wav_err(
            path,
            format!("{}-bit PCM; expected 8/16/24-bit", spec.bits_per_sample),
        ));
    }
    if spec.channels == 0 || spec.channels > 2 {
        return Err(wav_err(
            path,
            format!("{} channels; expected mono or stereo", spec.channels),
        ));
    }
    let full_scale = (1i64 << (spec.bits_per_sample - 1)) as Real;
    let channels = spec.channels as usize;
    let mut mono = Vec::new();
    let mut frame_acc = 0.0;
    let mut in_frame = 0;
    for s in reader.samples::<i32>() {
        let s = s.map_err(|e| wav_err(path, format!("corrupt sample data: {e}")))?;
        frame_acc += s as Real / full_scale;
        in_frame += 1;
        if in_frame == channels {
            mono.push(frame_acc / channels as Real);
            frame_acc = 0.0;
            in_frame = 0;
        }
    }
    let mut samples = if spec.sample_rate == TARGET_RATE {
        mono
    } else {
        resample(&mono, spec.sample_rate, TARGET_RATE)
    };
    samples.resize(CLIP_SAMPLES, 0.0);
    Ok(Waveform {
        samples,
        rate: TARGET_RATE,
    })
}

fn sinc(x: Real) -> Real {
    if x.abs() < 1e-12 {
        1.0
    } else {
        let px = std::f64::consts::PI as Real * x;
        px.sin() / px
    }
}

/// Polyphase-style windowed-sinc resampler (Hann window, 64 taps). Taps
/// are renormalized per output sample so a constant input maps to the
/// same constant.
pub fn resample(input: &[Real], rate_in: u32, rate_out: u32) -> Vec<Real> {
    if input.is_empty() || rate_in == rate_out {
        return input.to_vec();
    }
    let ratio = rate_in as Real / rate_out as Real;
    let cutoff: Real = (rate_out as Real / rate_in as Real).min(1.0);
    let out_len = ((input.len() as Real) / ratio).floor() as usize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let center = n as Real * ratio;
        let lo = (center.ceil() as isize - SINC_TAPS).max(0);
        let hi = ((center.floor() as isize) + SINC_TAPS).min(input.len() as isize - 1);
        let mut acc = 0.0;
        let mut norm = 0.0;
        for m in lo..=hi {
            let d = center - m as Real;
            let w = 0.5 * (1.0 + (std::f64::consts::PI as Real * d / SINC_TAPS as Real).cos());
            let k = cutoff * sinc(cutoff * d) * w;
            acc += input[m as usize] * k;
            norm += k;
        }
        out.push(if norm.abs() > 1e-12 { acc / norm } else { 0.0 });
    }
    out
}
