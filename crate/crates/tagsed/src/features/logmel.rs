//! Log-mel spectrogram extraction: Hann STFT (window 2048, hop 256,
//! reflect-centered), triangular mel filterbank on a Slaney-style scale
//! over 0-8 kHz, natural log with a 1e-10 floor.

use realfft::RealFftPlanner;

use super::audio::{Waveform, CLIP_SAMPLES, TARGET_RATE};
use crate::error::{Error, Result};
use crate::numerics::tensor::gemm;
use crate::numerics::{Real, Tensor};

pub const WIN_SIZE: usize = 2048;
pub const HOP_SIZE: usize = 256;
pub const N_FFT_BINS: usize = WIN_SIZE / 2 + 1;
pub const FMIN: Real = 0.0;
pub const FMAX: Real = 8_000.0;
pub const LOG_FLOOR: Real = 1e-10;

/// Frame hop in seconds at the feature frame rate.
pub const FRAME_HOP_S: Real = HOP_SIZE as Real / TARGET_RATE as Real;

/// Time-by-mel matrix of log-mel energies for one clip.
#[derive(Clone, Debug)]
pub struct LogMel {
    /// [T, M] log energies.
    pub frames: Tensor,
    pub frame_hop_s: Real,
}

impl LogMel {
    pub fn n_frames(&self) -> usize {
        self.frames.shape()[0]
    }

    pub fn n_mels(&self) -> usize {
        self.frames.shape()[1]
    }
}

fn hz_to_mel(f: Real) -> Real {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4 as Real).ln() / 27.0;
    if f >= min_log_hz {
        min_log_mel + (f / min_log_hz).ln() / logstep
    } else {
        f / f_sp
    }
}

fn mel_to_hz(m: Real) -> Real {
    let f_sp = 200.0 / 3.0;
    let min_log_hz = 1000.0;
    let min_log_mel = min_log_hz / f_sp;
    let logstep = (6.4 as Real).ln() / 27.0;
    if m >= min_log_mel {
        min_log_hz * (logstep * (m - min_log_mel)).exp()
    } else {
        f_sp * m
    }
}

/// Edge frequencies (Hz) of the triangular filters: n_mels + 2 points
/// equally spaced on the mel scale between FMIN and FMAX.
fn mel_edges(n_mels: usize) -> Vec<Real> {
    let lo = hz_to_mel(FMIN);
    let hi = hz_to_mel(FMAX);
    (0..n_mels + 2)
        .map(|i| mel_to_hz(lo + (hi - lo) * i as Real / (n_mels + 1) as Real))
        .collect()
}

/// Center frequency (Hz) of each mel filter.
pub fn mel_center_frequencies(n_mels: usize) -> Vec<Real> {
    mel_edges(n_mels)[1..=n_mels].to_vec()
}

/// Area-normalized triangular filterbank, [n_mels, N_FFT_BINS].
pub fn mel_filterbank(n_mels: usize) -> Tensor {
    let edges = mel_edges(n_mels);
    let bin_hz = TARGET_RATE as Real / WIN_SIZE as Real;
    let mut data = vec![0.0; n_mels * N_FFT_BINS];
    for k in 0..n_mels {
        let (lo, mid, hi) = (edges[k], edges[k + 1], edges[k + 2]);
        let norm = 2.0 / (hi - lo);
        for bin in 0..N_FFT_BINS {
            let f = bin as Real * bin_hz;
            let rising = (f - lo) / (mid - lo);
            let falling = (hi - f) / (hi - mid);
            let w = rising.min(falling).max(0.0);
            data[k * N_FFT_BINS + bin] = w * norm;
        }
    }
    Tensor::new(vec![n_mels, N_FFT_BINS], data).unwrap()
}

/// Reflect-pad by half a window on both sides so frame t is centered at
/// t * HOP_SIZE.
fn reflect_pad(x: &[Real]) -> Vec<Real> {
    let half = WIN_SIZE / 2;
    let n = x.len();
    let mut out = Vec::with_capacity(n + WIN_SIZE);
    for i in 0..half {
        out.push(x[half - i]);
    }
    out.extend_from_slice(x);
    for i in 0..half {
        out.push(x[n - 2 - i]);
    }
    out
}

/// Magnitude spectrogram [T, N_FFT_BINS] of a 10 s clip; T = 626.
fn magnitude_stft(w: &Waveform) -> Tensor {
    debug_assert_eq!(w.samples.len(), CLIP_SAMPLES);
    let padded = reflect_pad(&w.samples);
    let n_frames = 1 + CLIP_SAMPLES / HOP_SIZE;
    let window: Vec<Real> = (0..WIN_SIZE)
        .map(|i| {
            0.5 * (1.0
                - (2.0 * std::f64::consts::PI as Real * i as Real / WIN_SIZE as Real).cos())
        })
        .collect();

    let mut planner = RealFftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(WIN_SIZE);
    let mut buf = fft.make_input_vec();
    let mut spectrum = fft.make_output_vec();

    let mut out = vec![0.0; n_frames * N_FFT_BINS];
    for t in 0..n_frames {
        let start = t * HOP_SIZE;
        for (i, b) in buf.iter_mut().enumerate() {
            *b = (padded[start + i] * window[i]) as f64;
        }
        fft.process(&mut buf, &mut spectrum).expect("fft buffers sized by planner");
        for (i, c) in spectrum.iter().enumerate() {
            out[t * N_FFT_BINS + i] = c.norm() as Real;
        }
    }
    Tensor::new(vec![n_frames, N_FFT_BINS], out).unwrap()
}

/// Log-mel features of a 10 s, 16 kHz waveform: [626, n_mels].
pub fn logmel(w: &Waveform, n_mels: usize) -> Result<LogMel> {
    if n_mels == 0 {
        return Err(Error::Config("n_mels must be a positive integer".into()));
    }
    if w.rate != TARGET_RATE || w.samples.len() != CLIP_SAMPLES {
        return Err(Error::Invalid(format!(
            "logmel expects a {TARGET_RATE} Hz, {CLIP_SAMPLES}-sample waveform; got {} Hz, {} samples",
            w.rate,
            w.samples.len()
        )));
    }
    let mag = magnitude_stft(w);
    let fb_t = mel_filterbank(n_mels).transposed();
    let t = mag.shape()[0];
    let mut mel = vec![0.0; t * n_mels];
    gemm(t, N_FFT_BINS, n_mels, 1.0, mag.data(), fb_t.data(), 0.0, &mut mel);
    for v in &mut mel {
        *v = v.max(LOG_FLOOR).ln();
    }
    Ok(LogMel {
        frames: Tensor::new(vec![t, n_mels], mel)?,
        frame_hop_s: FRAME_HOP_S,
    })
}
