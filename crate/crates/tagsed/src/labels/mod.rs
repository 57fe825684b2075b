//! Label domain: class vocabulary, strong event lists, weak label sets,
//! the strong-to-weak flattening that feeds Stage-1, frame-level target
//! rasterization, and pseudo-label thresholding.

pub mod batch;
pub mod manifest;

use std::collections::{BTreeSet, HashMap};

use crate::error::{Error, Result};
use crate::numerics::{Real, Tensor};

/// Clip length in seconds; event times live in [0, CLIP_LEN_S].
pub const CLIP_LEN_S: Real = 10.0;

/// The ten domestic sound classes used by default.
pub const DEFAULT_CLASSES: [&str; 10] = [
    "Alarm_bell_ringing",
    "Blender",
    "Cat",
    "Dishes",
    "Dog",
    "Electric_shaver_toothbrush",
    "Frying",
    "Running_water",
    "Speech",
    "Vacuum_cleaner",
];

/// Ordered class vocabulary; class ids index into it.
#[derive(Clone, Debug)]
pub struct Vocabulary {
    classes: Vec<String>,
    index: HashMap<String, usize>,
}

impl Vocabulary {
    pub fn new(classes: &[impl AsRef<str>]) -> Result<Self> {
        let mut index = HashMap::new();
        let mut out = Vec::with_capacity(classes.len());
        for (i, c) in classes.iter().enumerate() {
            let name = c.as_ref().to_string();
            if index.insert(name.clone(), i).is_some() {
                return Err(Error::Config(format!("duplicate class `{name}` in vocabulary")));
            }
            out.push(name);
        }
        if out.is_empty() {
            return Err(Error::Config("vocabulary must not be empty".into()));
        }
        Ok(Vocabulary {
            classes: out,
            index,
        })
    }

    pub fn default_classes() -> Self {
        Vocabulary::new(&DEFAULT_CLASSES).unwrap()
    }

    pub fn id(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn name(&self, id: usize) -> &str {
        &self.classes[id]
    }

    pub fn len(&self) -> usize {
        self.classes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.classes.is_empty()
    }

    pub fn names(&self) -> &[String] {
        &self.classes
    }
}

/// One annotated (or detected) event.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Event {
    pub class: usize,
    pub onset: Real,
    pub offset: Real,
}

impl Event {
    pub fn duration(&self) -> Real {
        self.offset - self.onset
    }
}

/// Per-clip list of (class, onset, offset); the strong-label and
/// decoded-prediction representation.
#[derive(Clone, Debug, Default)]
pub struct EventList {
    pub clip_id: String,
    pub events: Vec<Event>,
}

impl EventList {
    pub fn validate(&self, n_classes: usize) -> Result<()> {
        for e in &self.events {
            if e.class >= n_classes {
                return Err(Error::Invalid(format!(
                    "{}: class id {} out of range",
                    self.clip_id, e.class
                )));
            }
            if !(0.0..CLIP_LEN_S).contains(&e.onset) || e.offset <= e.onset || e.offset > CLIP_LEN_S {
                return Err(Error::Invalid(format!(
                    "{}: event times ({}, {}) violate 0 <= onset < offset <= {CLIP_LEN_S}",
                    self.clip_id, e.onset, e.offset
                )));
            }
        }
        Ok(())
    }
}

/// Per-clip set of active classes: weak, weakified, or pseudo-weak.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct WeakLabel {
    pub clip_id: String,
    pub classes: BTreeSet<usize>,
}

impl WeakLabel {
    /// Multi-hot vector of length `n_classes`.
    pub fn multi_hot(&self, n_classes: usize) -> Tensor {
        Tensor::from_fn(&[n_classes], |i| if self.classes.contains(&i) { 1.0 } else { 0.0 })
    }
}

/// Drop onsets/offsets, keep the set of event classes.
pub fn weakify(events: &EventList) -> WeakLabel {
    WeakLabel {
        clip_id: events.clip_id.clone(),
        classes: events.events.iter().map(|e| e.class).collect(),
    }
}

/// Rasterize events onto a frame grid: cell (i, c) is 1 iff some event of
/// class c spans the frame center (i + 0.5) * frame_hop_s.
pub fn frame_targets(events: &EventList, n_frames: usize, frame_hop_s: Real, n_classes: usize) -> Tensor {
    assert!(frame_hop_s > 0.0, "frame_hop_s must be positive");
    let mut out = Tensor::zeros(&[n_frames, n_classes]);
    for e in &events.events {
        for i in 0..n_frames {
            let center = (i as Real + 0.5) * frame_hop_s;
            if e.onset <= center && center < e.offset {
                out.data_mut()[i * n_classes + e.class] = 1.0;
            }
        }
    }
    out
}

/// Threshold clip posteriors into a pseudo-weak label set (inclusive
/// comparison: prob >= threshold keeps the class). Clips where nothing
/// clears the threshold yield an empty set.
pub fn pseudo_label(clip_probs: &[Real], threshold: Real) -> BTreeSet<usize> {
    clip_probs
        .iter()
        .enumerate()
        .filter(|(_, &p)| p >= threshold)
        .map(|(c, _)| c)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ev(class: usize, onset: Real, offset: Real) -> Event {
        Event {
            class,
            onset,
            offset,
        }
    }

    #[test]
    fn weakify_dedups_and_drops_times() {
        let list = EventList {
            clip_id: "a.wav".into(),
            events: vec![ev(4, 1.2, 3.4), ev(2, 0.0, 2.0), ev(4, 5.0, 6.0)],
        };
        let w = weakify(&list);
        assert_eq!(w.classes, BTreeSet::from([2, 4]));
    }

    #[test]
    fn weakify_of_empty_list_is_empty() {
        let list = EventList {
            clip_id: "b.wav".into(),
            events: vec![],
        };
        assert!(weakify(&list).classes.is_empty());
    }

    #[test]
    fn weakify_many_duplicates_single_class() {
        let list = EventList {
            clip_id: "c.wav".into(),
            events: (0..10).map(|i| ev(8, i as Real * 0.5, i as Real * 0.5 + 0.4)).collect(),
        };
        assert_eq!(weakify(&list).classes, BTreeSet::from([8]));
    }

    #[test]
    fn full_clip_event_fills_column() {
        let list = EventList {
            clip_id: "d.wav".into(),
            events: vec![ev(1, 0.0, 10.0)],
        };
        let t = frame_targets(&list, 156, 0.064, 3);
        for i in 0..156 {
            assert_eq!(t.data()[i * 3 + 1], 1.0);
            assert_eq!(t.data()[i * 3], 0.0);
        }
    }

    #[test]
    fn frame_center_rule_boundaries() {
        // (2.0, 4.0) at 64 ms: centers (i + 0.5) * 0.064 in [2, 4) are
        // frames 31..=61.
        let list = EventList {
            clip_id: "e.wav".into(),
            events: vec![ev(0, 2.0, 4.0)],
        };
        let t = frame_targets(&list, 156, 0.064, 1);
        for i in 0..156 {
            let want = (31..=61).contains(&i);
            assert_eq!(t.data()[i] == 1.0, want, "frame {i}");
        }
    }

    #[test]
    fn empty_event_list_rasterizes_to_zeros() {
        let list = EventList {
            clip_id: "f.wav".into(),
            events: vec![],
        };
        let t = frame_targets(&list, 20, 0.064, 4);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn pseudo_label_threshold_is_inclusive() {
        let set = pseudo_label(&[0.9, 0.2, 0.5], 0.5);
        assert_eq!(set, BTreeSet::from([0, 2]));
        let all = pseudo_label(&[0.9, 0.2, 0.5], 1e-9);
        assert_eq!(all.len(), 3);
        let none = pseudo_label(&[0.0, 0.0], 0.5);
        assert!(none.is_empty());
    }

    #[test]
    fn event_validation_rejects_inverted_times() {
        let list = EventList {
            clip_id: "g.wav".into(),
            events: vec![ev(0, 5.0, 3.0)],
        };
        assert!(list.validate(1).is_err());
    }
}
