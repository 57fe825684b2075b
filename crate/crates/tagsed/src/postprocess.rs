//! Threshold and median-filter post-processing, and the frames-to-events
//! decoder.
//!
//! Median windows adapt per class: window_c = duration_c * beta_c,
//! converted to frames and forced odd.

use crate::error::{Error, Result};
use crate::labels::{Event, EventList, CLIP_LEN_S};
use crate::numerics::{Real, Tensor};

/// Per-class median filter sizing.
#[derive(Clone, Debug)]
pub struct MedianConfig {
    /// Per-class window factor; 1/3 unless overridden.
    pub beta: Vec<Real>,
    /// Per-class median event duration in seconds.
    pub durations: Vec<Real>,
    pub frame_hop_s: Real,
}

impl MedianConfig {
    pub fn uniform(n_classes: usize, duration_s: Real, frame_hop_s: Real) -> Self {
        MedianConfig {
            beta: vec![1.0 / 3.0; n_classes],
            durations: vec![duration_s; n_classes],
            frame_hop_s,
        }
    }

    /// Median event duration per class measured from reference
    /// annotations; classes without events fall back to 1 second.
    pub fn from_refs(refs: &[EventList], n_classes: usize, frame_hop_s: Real) -> Self {
        let mut per_class: Vec<Vec<Real>> = vec![Vec::new(); n_classes];
        for clip in refs {
            for e in &clip.events {
                per_class[e.class].push(e.duration());
            }
        }
        let durations = per_class
            .into_iter()
            .map(|mut ds| {
                if ds.is_empty() {
                    1.0
                } else {
                    ds.sort_by(|a, b| a.partial_cmp(b).unwrap());
                    let n = ds.len();
                    if n % 2 == 1 {
                        ds[n / 2]
                    } else {
                        0.5 * (ds[n / 2 - 1] + ds[n / 2])
                    }
                }
            })
            .collect();
        MedianConfig {
            beta: vec![1.0 / 3.0; n_classes],
            durations,
            frame_hop_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.beta.len() != self.durations.len() {
            return Err(Error::Config("beta and durations must align per class".into()));
        }
        if self.frame_hop_s <= 0.0
            || self.beta.iter().any(|&b| b <= 0.0)
            || self.durations.iter().any(|&d| d <= 0.0)
        {
            return Err(Error::Config("median config values must be positive".into()));
        }
        Ok(())
    }

    /// Window per class, in frames.
    pub fn windows(&self) -> Vec<usize> {
        (0..self.beta.len()).map(|c| adaptive_window(c, self)).collect()
    }
}

/// round(duration_c * beta_c / hop) forced odd, at least 1.
pub fn adaptive_window(class: usize, cfg: &MedianConfig) -> usize {
    let frames = (cfg.durations[class] * cfg.beta[class] / cfg.frame_hop_s).round() as i64;
    let mut w = frames.max(1);
    if w % 2 == 0 {
        w -= 1;
    }
    w.max(1) as usize
}

/// probs >= threshold, elementwise.
pub fn binarize(probs: &Tensor, threshold: Real) -> Tensor {
    probs.map(|p| if p >= threshold { 1.0 } else { 0.0 })
}

/// Per-class 1-d sliding median over binary frames [T, K], zero padded
/// at both ends; windows must be odd.
pub fn median_filter(frames: &Tensor, windows: &[usize]) -> Tensor {
    let (t, k) = (frames.shape()[0], frames.shape()[1]);
    assert_eq!(windows.len(), k, "one window per class");
    assert!(windows.iter().all(|w| w % 2 == 1), "windows must be odd");
    let mut out = Tensor::zeros(frames.shape());
    for c in 0..k {
        let half = windows[c] / 2;
        let majority = half + 1;
        for i in 0..t {
            let lo = i.saturating_sub(half);
            let hi = (i + half).min(t - 1);
            let mut ones = 0usize;
            for j in lo..=hi {
                if frames.data()[j * k + c] != 0.0 {
                    ones += 1;
                }
            }
            // frames outside [0, T) count as zeros
            if ones >= majority {
                out.data_mut()[i * k + c] = 1.0;
            }
        }
    }
    out
}

/// Maximal runs of 1s per class become events: onset = start * hop,
/// offset = (end + 1) * hop, clipped to the clip bounds.
pub fn decode_events(frames: &Tensor, frame_hop_s: Real, clip_id: &str) -> EventList {
    let (t, k) = (frames.shape()[0], frames.shape()[1]);
    let mut events = Vec::new();
    for c in 0..k {
        let mut run_start: Option<usize> = None;
        for i in 0..=t {
            let active = i < t && frames.data()[i * k + c] != 0.0;
            match (active, run_start) {
                (true, None) => run_start = Some(i),
                (false, Some(start)) => {
                    let onset = (start as Real * frame_hop_s).min(CLIP_LEN_S);
                    let offset = (i as Real * frame_hop_s).min(CLIP_LEN_S);
                    if offset > onset {
                        events.push(Event {
                            class: c,
                            onset,
                            offset,
                        });
                    }
                    run_start = None;
                }
                _ => {}
            }
        }
    }
    EventList {
        clip_id: clip_id.to_string(),
        events,
    }
}
