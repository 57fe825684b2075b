//! Tab-separated manifests in the DESED layout, so real dataset files
//! drop in unchanged.
//!
//! strong:    `filename<TAB>onset<TAB>offset<TAB>event_label`, one event per row
//! weak:      `filename<TAB>event_labels` with comma-joined labels
//! unlabeled: `filename`
//!
//! Each file starts with the corresponding header row. Pseudo-weak label
//! files use the weak layout.

use std::collections::HashMap;
use std::fmt::Write as _;
use std::path::Path;

use super::{Event, EventList, Vocabulary, WeakLabel, CLIP_LEN_S};
use crate::error::{Error, Result};
use crate::numerics::Real;

pub const STRONG_HEADER: &str = "filename\tonset\toffset\tevent_label";
pub const WEAK_HEADER: &str = "filename\tevent_labels";
pub const UNLABELED_HEADER: &str = "filename";

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ManifestKind {
    Strong,
    Weak,
    Unlabeled,
}

/// Parsed manifest contents, grouped by clip.
pub enum ManifestData {
    Strong(Vec<EventList>),
    Weak(Vec<WeakLabel>),
    Unlabeled(Vec<String>),
}

fn row_err(path: &Path, line: usize, detail: impl Into<String>) -> Error {
    Error::Manifest {
        path: path.to_path_buf(),
        line,
        detail: detail.into(),
    }
}

pub fn parse_manifest(path: &Path, kind: ManifestKind, vocab: &Vocabulary) -> Result<ManifestData> {
    Ok(match kind {
        ManifestKind::Strong => ManifestData::Strong(parse_strong(path, vocab)?),
        ManifestKind::Weak => ManifestData::Weak(parse_weak(path, vocab)?),
        ManifestKind::Unlabeled => ManifestData::Unlabeled(parse_unlabeled(path)?),
    })
}

fn read_rows(path: &Path, header: &str) -> Result<Vec<(usize, Vec<String>)>> {
    let text = std::fs::read_to_string(path)?;
    let mut lines = text.lines().enumerate();
    match lines.next() {
        Some((_, first)) if first.trim_end() == header => {}
        Some((_, first)) => {
            return Err(row_err(
                path,
                1,
                format!("expected header `{header}`, got `{first}`"),
            ))
        }
        None => return Err(row_err(path, 1, "empty file, missing header")),
    }
    let mut rows = Vec::new();
    for (i, line) in lines {
        if line.trim().is_empty() {
            continue;
        }
        rows.push((i + 1, line.split('\t').map(|s| s.trim().to_string()).collect()));
    }
    Ok(rows)
}

/// Strong manifest -> per-clip event lists, clips ordered by first
/// appearance.
pub fn parse_strong(path: &Path, vocab: &Vocabulary) -> Result<Vec<EventList>> {
    let mut by_clip: HashMap<String, usize> = HashMap::new();
    let mut out: Vec<EventList> = Vec::new();
    for (line, cols) in read_rows(path, STRONG_HEADER)? {
        if cols.len() != 4 {
            return Err(row_err(path, line, format!("expected 4 columns, got {}", cols.len())));
        }
        let onset: Real = cols[1]
            .parse()
            .map_err(|_| row_err(path, line, format!("bad onset `{}`", cols[1])))?;
        let offset: Real = cols[2]
            .parse()
            .map_err(|_| row_err(path, line, format!("bad offset `{}`", cols[2])))?;
        if onset >= offset {
            return Err(row_err(
                path,
                line,
                format!("onset {onset} must be strictly before offset {offset}"),
            ));
        }
        if onset < 0.0 || offset > CLIP_LEN_S {
            return Err(row_err(
                path,
                line,
                format!("event ({onset}, {offset}) outside [0, {CLIP_LEN_S}]"),
            ));
        }
        let class = vocab
            .id(&cols[3])
            .ok_or_else(|| row_err(path, line, format!("unknown class `{}`", cols[3])))?;
        let idx = *by_clip.entry(cols[0].clone()).or_insert_with(|| {
            out.push(EventList {
                clip_id: cols[0].clone(),
                events: Vec::new(),
            });
            out.len() - 1
        });
        out[idx].events.push(Event {
            class,
            onset,
            offset,
        });
    }
    Ok(out)
}

/// Weak manifest -> per-clip label sets. A clip may appear once only; an
/// empty label field yields an empty set.
pub fn parse_weak(path: &Path, vocab: &Vocabulary) -> Result<Vec<WeakLabel>> {
    let mut seen: HashMap<String, usize> = HashMap::new();
    let mut out = Vec::new();
    for (line, cols) in read_rows(path, WEAK_HEADER)? {
        if cols.len() != 2 {
            return Err(row_err(path, line, format!("expected 2 columns, got {}", cols.len())));
        }
        if seen.insert(cols[0].clone(), line).is_some() {
            return Err(row_err(path, line, format!("duplicate clip `{}`", cols[0])));
        }
        let mut classes = std::collections::BTreeSet::new();
        if !cols[1].is_empty() {
            for name in cols[1].split(',') {
                let name = name.trim();
                let id = vocab
                    .id(name)
                    .ok_or_else(|| row_err(path, line, format!("unknown class `{name}`")))?;
                classes.insert(id);
            }
        }
        out.push(WeakLabel {
            clip_id: cols[0].clone(),
            classes,
        });
    }
    Ok(out)
}

pub fn parse_unlabeled(path: &Path) -> Result<Vec<String>> {
    let mut out = Vec::new();
    for (line, cols) in read_rows(path, UNLABELED_HEADER)? {
        if cols.len() != 1 {
            return Err(row_err(path, line, format!("expected 1 column, got {}", cols.len())));
        }
        out.push(cols[0].clone());
    }
    Ok(out)
}

pub fn write_strong(path: &Path, clips: &[EventList], vocab: &Vocabulary) -> Result<()> {
    let mut text = String::from(STRONG_HEADER);
    text.push('\n');
    for clip in clips {
        for e in &clip.events {
            writeln!(
                text,
                "{}\t{:.3}\t{:.3}\t{}",
                clip.clip_id,
                e.onset,
                e.offset,
                vocab.name(e.class)
            )
            .expect("infallible string write");
        }
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_weak(path: &Path, labels: &[WeakLabel], vocab: &Vocabulary) -> Result<()> {
    let mut text = String::from(WEAK_HEADER);
    text.push('\n');
    for label in labels {
        let names: Vec<&str> = label.classes.iter().map(|&c| vocab.name(c)).collect();
        writeln!(text, "{}\t{}", label.clip_id, names.join(",")).expect("infallible string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

pub fn write_unlabeled(path: &Path, clips: &[String]) -> Result<()> {
    let mut text = String::from(UNLABELED_HEADER);
    text.push('\n');
    for clip in clips {
        writeln!(text, "{clip}").expect("infallible string write");
    }
    std::fs::write(path, text)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::BTreeSet;

    fn vocab() -> Vocabulary {
        Vocabulary::new(&["Dog", "Cat", "Speech"]).unwrap()
    }

    fn write(dir: &Path, name: &str, content: &str) -> std::path::PathBuf {
        let p = dir.join(name);
        std::fs::write(&p, content).unwrap();
        p
    }

    #[test]
    fn strong_row_parses_to_event_list() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "strong.tsv",
            "filename\tonset\toffset\tevent_label\na.wav\t2.0\t4.0\tDog\n",
        );
        let lists = parse_strong(&p, &vocab()).unwrap();
        assert_eq!(lists.len(), 1);
        assert_eq!(lists[0].clip_id, "a.wav");
        assert_eq!(lists[0].events, vec![Event { class: 0, onset: 2.0, offset: 4.0 }]);
    }

    #[test]
    fn weak_row_parses_to_label_set() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "weak.tsv",
            "filename\tevent_labels\nb.wav\tDog,Cat\nc.wav\t\n",
        );
        let labels = parse_weak(&p, &vocab()).unwrap();
        assert_eq!(labels[0].classes, BTreeSet::from([0, 1]));
        assert!(labels[1].classes.is_empty());
    }

    #[test]
    fn inverted_times_error_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "bad.tsv",
            "filename\tonset\toffset\tevent_label\na.wav\t1.0\t2.0\tDog\na.wav\t5.0\t3.0\tDog\n",
        );
        let err = parse_strong(&p, &vocab()).unwrap_err().to_string();
        assert!(err.contains(":3:"), "error should carry line 3: {err}");
    }

    #[test]
    fn unknown_class_and_bad_header_are_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "unk.tsv",
            "filename\tonset\toffset\tevent_label\na.wav\t1.0\t2.0\tWhale\n",
        );
        assert!(parse_strong(&p, &vocab()).is_err());
        let p = write(dir.path(), "hdr.tsv", "file,onset\n");
        assert!(parse_strong(&p, &vocab()).is_err());
    }

    #[test]
    fn weak_roundtrip_is_identity() {
        let dir = tempfile::tempdir().unwrap();
        let labels = vec![
            WeakLabel {
                clip_id: "x.wav".into(),
                classes: BTreeSet::from([0, 2]),
            },
            WeakLabel {
                clip_id: "y.wav".into(),
                classes: BTreeSet::new(),
            },
        ];
        let p = dir.path().join("weak.tsv");
        write_weak(&p, &labels, &vocab()).unwrap();
        let back = parse_weak(&p, &vocab()).unwrap();
        assert_eq!(back, labels);
    }

    #[test]
    fn strong_grouping_by_clip() {
        let dir = tempfile::tempdir().unwrap();
        let p = write(
            dir.path(),
            "multi.tsv",
            "filename\tonset\toffset\tevent_label\na.wav\t1.0\t2.0\tDog\nb.wav\t0.5\t1.0\tCat\na.wav\t3.0\t4.0\tSpeech\n",
        );
        let lists = parse_strong(&p, &vocab()).unwrap();
        assert_eq!(lists.len(), 2);
        assert_eq!(lists[0].events.len(), 2);
        assert_eq!(lists[1].clip_id, "b.wav");
    }
}
