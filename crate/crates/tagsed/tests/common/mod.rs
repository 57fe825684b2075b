//! Shared test oracles: a brute-force PSDS reimplementation built from
//! direct interval sums, independent of the library's evaluator.

#![allow(dead_code)]

use tagsed::labels::EventList;
use tagsed::numerics::Real;
use tagsed::psds::PsdsConfig;

#[derive(Clone, Debug, PartialEq)]
pub struct NaiveCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    pub ct: Vec<Vec<usize>>,
}

fn overlap(a_on: Real, a_off: Real, b_on: Real, b_off: Real) -> Real {
    let lo = if a_on > b_on { a_on } else { b_on };
    let hi = if a_off < b_off { a_off } else { b_off };
    if hi > lo {
        hi - lo
    } else {
        0.0
    }
}

/// Does this detection satisfy the DTC against same-class references?
fn det_passes_dtc(det_idx: usize, dets: &EventList, refs: &EventList, rho_dtc: Real) -> bool {
    let det = &dets.events[det_idx];
    let mut covered = 0.0;
    for r in &refs.events {
        if r.class == det.class {
            covered += overlap(det.onset, det.offset, r.onset, r.offset);
        }
    }
    covered / (det.offset - det.onset) >= rho_dtc
}

/// Quadratic reimplementation of intersection-criteria matching: every
/// ratio is recomputed from scratch with explicit loops.
pub fn naive_match(dets: &EventList, refs: &EventList, n_classes: usize, cfg: &PsdsConfig) -> NaiveCounts {
    let mut out = NaiveCounts {
        tp: vec![0; n_classes],
        fp: vec![0; n_classes],
        ct: vec![vec![0; n_classes]; n_classes],
    };
    for (i, det) in dets.events.iter().enumerate() {
        if det_passes_dtc(i, dets, refs, cfg.rho_dtc) {
            continue;
        }
        out.fp[det.class] += 1;
        for other in 0..n_classes {
            if other == det.class {
                continue;
            }
            let mut covered = 0.0;
            for r in &refs.events {
                if r.class == other {
                    covered += overlap(det.onset, det.offset, r.onset, r.offset);
                }
            }
            if covered / (det.offset - det.onset) >= cfg.rho_cttc {
                out.ct[det.class][other] += 1;
            }
        }
    }
    for r in &refs.events {
        let mut covered = 0.0;
        for (i, det) in dets.events.iter().enumerate() {
            if det.class == r.class && det_passes_dtc(i, dets, refs, cfg.rho_dtc) {
                covered += overlap(det.onset, det.offset, r.onset, r.offset);
            }
        }
        if covered / (r.offset - r.onset) >= cfg.rho_gtc {
            out.tp[r.class] += 1;
        }
    }
    out
}

fn refs_for<'a>(refs: &'a [EventList], clip_id: &str) -> EventList {
    refs.iter()
        .find(|r| r.clip_id == clip_id)
        .cloned()
        .unwrap_or_else(|| EventList {
            clip_id: clip_id.to_string(),
            events: Vec::new(),
        })
}

/// Brute-force PSDS over explicit operating points.
pub fn naive_psds(
    ops: &[(Real, Vec<EventList>)],
    refs: &[EventList],
    n_classes: usize,
    n_clips: usize,
    cfg: &PsdsConfig,
) -> Real {
    let hours = n_clips as Real * 10.0 / 3600.0;
    let mut n_refs = vec![0usize; n_classes];
    let mut gt_hours = vec![0.0 as Real; n_classes];
    for clip in refs {
        for e in &clip.events {
            n_refs[e.class] += 1;
            gt_hours[e.class] += (e.offset - e.onset) / 3600.0;
        }
    }
    let active: Vec<usize> = (0..n_classes).filter(|&c| n_refs[c] > 0).collect();
    if active.is_empty() {
        return 0.0;
    }

    // per operating point, per class: (efpr, tpr)
    let mut points: Vec<Vec<(Real, Real)>> = Vec::new();
    for (_, dets) in ops {
        let mut tp = vec![0usize; n_classes];
        let mut fp = vec![0usize; n_classes];
        let mut ct = vec![vec![0usize; n_classes]; n_classes];
        for d in dets {
            let r = refs_for(refs, &d.clip_id);
            let m = naive_match(d, &r, n_classes, cfg);
            for c in 0..n_classes {
                tp[c] += m.tp[c];
                fp[c] += m.fp[c];
                for k in 0..n_classes {
                    ct[c][k] += m.ct[c][k];
                }
            }
        }
        let mut rates = Vec::with_capacity(n_classes);
        for c in 0..n_classes {
            let tpr = if n_refs[c] > 0 {
                tp[c] as Real / n_refs[c] as Real
            } else {
                0.0
            };
            let mut efpr = fp[c] as Real / hours;
            if cfg.alpha_ct > 0.0 {
                let mut sum = 0.0;
                let mut n = 0usize;
                for k in 0..n_classes {
                    if k != c && gt_hours[k] > 0.0 {
                        sum += ct[c][k] as Real / gt_hours[k];
                        n += 1;
                    }
                }
                if n > 0 {
                    efpr += cfg.alpha_ct * sum / n as Real;
                }
            }
            rates.push((efpr, tpr));
        }
        points.push(rates);
    }

    let mut support: Vec<Real> = vec![0.0, cfg.e_max];
    for rates in &points {
        for &(e, _) in rates {
            if e <= cfg.e_max {
                support.push(e);
            }
        }
    }
    support.sort_by(|a, b| a.partial_cmp(b).unwrap());
    support.dedup();

    let mut area = 0.0;
    for (i, &e) in support.iter().enumerate() {
        let next = support.get(i + 1).copied().unwrap_or(cfg.e_max);
        let mut tprs = Vec::with_capacity(active.len());
        for &c in &active {
            let mut best = 0.0 as Real;
            for rates in &points {
                let (efpr, tpr) = rates[c];
                if efpr <= e && tpr > best {
                    best = tpr;
                }
            }
            tprs.push(best);
        }
        let mean = tprs.iter().sum::<Real>() / tprs.len() as Real;
        let var = tprs.iter().map(|t| (t - mean) * (t - mean)).sum::<Real>() / tprs.len() as Real;
        let etpr = (mean - cfg.alpha_st * var.sqrt()).max(0.0);
        area += etpr * (next - e);
    }
    area / cfg.e_max
}
