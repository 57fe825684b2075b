//! PSDS: polyphonic sound detection score under intersection-based
//! matching.
//!
//! Matching per clip and class:
//! - a detection passes the DTC iff its summed intersection with
//!   same-class references, divided by its own duration, reaches rho_dtc;
//!   detections failing the DTC are false positives;
//! - a reference is a true positive iff its summed intersection with
//!   DTC-passing same-class detections, divided by its duration, reaches
//!   rho_gtc;
//! - DTC-failing detections are screened against every other class's
//!   references with rho_cttc and counted as cross-triggers.
//!
//! Rates: TPR per class over dataset reference counts; FPR as false
//! positives per hour of audio; cross-trigger rate per hour of the
//! triggered class's reference audio. The score is the normalized area
//! under the effective-TPR staircase over [0, e_max], where
//! eTPR(e) = mean_c TPR_c(e) - alpha_st * std_c TPR_c(e), floored at 0.

use std::collections::HashMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::labels::EventList;
use crate::numerics::{Real, Tensor};
use crate::postprocess::{binarize, decode_events, median_filter, MedianConfig};

#[derive(Clone, Debug)]
pub struct PsdsConfig {
    pub rho_dtc: Real,
    pub rho_gtc: Real,
    pub rho_cttc: Real,
    pub alpha_st: Real,
    pub alpha_ct: Real,
    /// Upper integration bound, in false positives per hour.
    pub e_max: Real,
    /// Strictly increasing decision thresholds in (0, 1).
    pub thresholds: Vec<Real>,
    pub scenario: String,
}

fn default_thresholds() -> Vec<Real> {
    // 50 operating points: 0.01, 0.03, ..., 0.99
    (0..50).map(|i| 0.01 + 0.02 * i as Real).collect()
}

impl PsdsConfig {
    /// Temporal-localization scenario: strict intersection ratios.
    pub fn scenario1() -> Self {
        PsdsConfig {
            rho_dtc: 0.7,
            rho_gtc: 0.7,
            rho_cttc: 0.3,
            alpha_st: 1.0,
            alpha_ct: 0.0,
            e_max: 100.0,
            thresholds: default_thresholds(),
            scenario: "scenario1".into(),
        }
    }

    /// Class-confusion scenario: loose ratios, cross-triggers penalized.
    pub fn scenario2() -> Self {
        PsdsConfig {
            rho_dtc: 0.1,
            rho_gtc: 0.1,
            rho_cttc: 0.3,
            alpha_st: 1.0,
            alpha_ct: 0.5,
            e_max: 100.0,
            thresholds: default_thresholds(),
            scenario: "scenario2".into(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let ok_rho = |r: Real| r > 0.0 && r <= 1.0;
        if !ok_rho(self.rho_dtc) || !ok_rho(self.rho_gtc) || !ok_rho(self.rho_cttc) {
            return Err(Error::Config("intersection ratios must lie in (0, 1]".into()));
        }
        if self.e_max <= 0.0 {
            return Err(Error::Config("e_max must be positive".into()));
        }
        if self.thresholds.is_empty()
            || self.thresholds.windows(2).any(|w| w[0] >= w[1])
            || self.thresholds.iter().any(|&t| !(0.0..1.0).contains(&t) || t <= 0.0)
        {
            return Err(Error::Config("thresholds must be strictly increasing in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Matching counts for one operating point.
#[derive(Clone, Debug, Serialize, PartialEq)]
pub struct MatchCounts {
    pub tp: Vec<usize>,
    pub fp: Vec<usize>,
    /// ct[c][k] counts class-c detections cross-triggering class k.
    pub ct: Vec<Vec<usize>>,
}

impl MatchCounts {
    pub fn zeros(n_classes: usize) -> Self {
        MatchCounts {
            tp: vec![0; n_classes],
            fp: vec![0; n_classes],
            ct: vec![vec![0; n_classes]; n_classes],
        }
    }

    pub fn add(&mut self, other: &MatchCounts) {
        for c in 0..self.tp.len() {
            self.tp[c] += other.tp[c];
            self.fp[c] += other.fp[c];
            for k in 0..self.tp.len() {
                self.ct[c][k] += other.ct[c][k];
            }
        }
    }
}

fn intersection(a_on: Real, a_off: Real, b_on: Real, b_off: Real) -> Real {
    (a_off.min(b_off) - a_on.max(b_on)).max(0.0)
}

/// Intersection-criteria matching for one clip.
pub fn match_dtc_gtc(
    detections: &EventList,
    refs: &EventList,
    n_classes: usize,
    cfg: &PsdsConfig,
) -> Result<MatchCounts> {
    detections.validate(n_classes)?;
    refs.validate(n_classes)?;
    let mut counts = MatchCounts::zeros(n_classes);
    let mut dtc_pass: Vec<bool> = Vec::with_capacity(detections.events.len());
    for det in &detections.events {
        let inter: Real = refs
            .events
            .iter()
            .filter(|r| r.class == det.class)
            .map(|r| intersection(det.onset, det.offset, r.onset, r.offset))
            .sum();
        let pass = inter / det.duration() >= cfg.rho_dtc;
        dtc_pass.push(pass);
        if !pass {
            counts.fp[det.class] += 1;
            // cross-trigger screening against the other classes
            for k in 0..n_classes {
                if k == det.class {
                    continue;
                }
                let cross: Real = refs
                    .events
                    .iter()
                    .filter(|r| r.class == k)
                    .map(|r| intersection(det.onset, det.offset, r.onset, r.offset))
                    .sum();
                if cross / det.duration() >= cfg.rho_cttc {
                    counts.ct[det.class][k] += 1;
                }
            }
        }
    }
    for r in &refs.events {
        let covered: Real = detections
            .events
            .iter()
            .zip(&dtc_pass)
            .filter(|(d, &pass)| pass && d.class == r.class)
            .map(|(d, _)| intersection(d.onset, d.offset, r.onset, r.offset))
            .sum();
        if covered / r.duration() >= cfg.rho_gtc {
            counts.tp[r.class] += 1;
        }
    }
    Ok(counts)
}

#[derive(Clone, Debug, Serialize)]
pub struct RocPoint {
    pub efpr: Real,
    pub etpr: Real,
}

#[derive(Clone, Debug, Serialize)]
pub struct ThresholdCounts {
    pub threshold: Real,
    #[serde(flatten)]
    pub counts: MatchCounts,
}

/// Per-scenario score with the counts and ROC points behind it.
#[derive(Clone, Debug, Serialize)]
pub struct PsdsReport {
    pub scenario: String,
    pub score: Real,
    pub n_classes: usize,
    pub dataset_hours: Real,
    pub per_threshold: Vec<ThresholdCounts>,
    pub roc: Vec<RocPoint>,
}

/// Reference-side totals the rates are normalized by.
struct RefStats {
    n_refs: Vec<usize>,
    gt_hours: Vec<Real>,
}

fn ref_stats(refs: &[EventList], n_classes: usize) -> RefStats {
    let mut n_refs = vec![0usize; n_classes];
    let mut gt_hours = vec![0.0; n_classes];
    for clip in refs {
        for e in &clip.events {
            n_refs[e.class] += 1;
            gt_hours[e.class] += e.duration() / 3600.0;
        }
    }
    RefStats { n_refs, gt_hours }
}

/// Per-class (eFPR, TPR) for one operating point.
fn class_rates(counts: &MatchCounts, stats: &RefStats, dataset_hours: Real, cfg: &PsdsConfig) -> Vec<(Real, Real)> {
    let n = counts.tp.len();
    (0..n)
        .map(|c| {
            let tpr = if stats.n_refs[c] > 0 {
                counts.tp[c] as Real / stats.n_refs[c] as Real
            } else {
                0.0
            };
            let fpr = counts.fp[c] as Real / dataset_hours;
            let mut ct_rate = 0.0;
            if cfg.alpha_ct > 0.0 {
                let mut sum = 0.0;
                let mut n_other = 0usize;
                for k in 0..n {
                    if k != c && stats.gt_hours[k] > 0.0 {
                        sum += counts.ct[c][k] as Real / stats.gt_hours[k];
                        n_other += 1;
                    }
                }
                if n_other > 0 {
                    ct_rate = sum / n_other as Real;
                }
            }
            (fpr + cfg.alpha_ct * ct_rate, tpr)
        })
        .collect()
}

/// Area under the effective-TPR staircase from per-class operating
/// points; `active` marks classes that have references.
fn score_from_rates(all_rates: &[Vec<(Real, Real)>], active: &[bool], cfg: &PsdsConfig) -> (Real, Vec<RocPoint>) {
    let n = active.len();
    let class_ids: Vec<usize> = (0..n).filter(|&c| active[c]).collect();
    if class_ids.is_empty() {
        return (0.0, Vec::new());
    }
    // per-class monotone staircase support
    let mut support: Vec<Real> = vec![0.0];
    for rates in all_rates {
        for &(efpr, _) in rates.iter() {
            if efpr <= cfg.e_max {
                support.push(efpr);
            }
        }
    }
    support.push(cfg.e_max);
    support.sort_by(|a, b| a.partial_cmp(b).unwrap());
    support.dedup();

    let tpr_at = |c: usize, e: Real| -> Real {
        all_rates
            .iter()
            .flat_map(|rates| {
                let (efpr, tpr) = rates[c];
                (efpr <= e).then_some(tpr)
            })
            .fold(0.0, Real::max)
    };

    let mut roc = Vec::with_capacity(support.len());
    for &e in &support {
        let tprs: Vec<Real> = class_ids.iter().map(|&c| tpr_at(c, e)).collect();
        let mean = tprs.iter().sum::<Real>() / tprs.len() as Real;
        let var = tprs.iter().map(|t| (t - mean) * (t - mean)).sum::<Real>() / tprs.len() as Real;
        let etpr = (mean - cfg.alpha_st * var.sqrt()).max(0.0);
        roc.push(RocPoint { efpr: e, etpr });
    }
    let mut area = 0.0;
    for i in 0..roc.len() {
        let hi = if i + 1 < roc.len() { roc[i + 1].efpr } else { cfg.e_max };
        area += roc[i].etpr * (hi - roc[i].efpr);
    }
    (area / cfg.e_max, roc)
}

/// Full evaluation from frame posteriors: binarize at each threshold,
/// median-filter, decode events, match against references, build the
/// ROC, and integrate.
pub fn compute_psds(
    clips: &[(String, Tensor)],
    refs: &[EventList],
    median_cfg: &MedianConfig,
    cfg: &PsdsConfig,
) -> Result<PsdsReport> {
    median_cfg.validate()?;
    let n_classes = median_cfg.beta.len();
    let windows = median_cfg.windows();
    let mut ops = Vec::with_capacity(cfg.thresholds.len());
    for &theta in &cfg.thresholds {
        let mut dets = Vec::with_capacity(clips.len());
        for (clip_id, frame_probs) in clips {
            let hard = binarize(frame_probs, theta);
            let filtered = median_filter(&hard, &windows);
            dets.push(decode_events(&filtered, median_cfg.frame_hop_s, clip_id));
        }
        ops.push((theta, dets));
    }
    compute_psds_from_operating_points(&ops, refs, n_classes, clips.len(), cfg)
}

/// Evaluation from one set of already-decoded events (a single operating
/// point).
pub fn compute_psds_from_events(
    detections: &[EventList],
    refs: &[EventList],
    n_classes: usize,
    n_clips: usize,
    cfg: &PsdsConfig,
) -> Result<PsdsReport> {
    let ops = vec![(0.5, detections.to_vec())];
    compute_psds_from_operating_points(&ops, refs, n_classes, n_clips, cfg)
}

/// Core scoring path: per-operating-point detections, matched and
/// integrated into the PSDS.
pub fn compute_psds_from_operating_points(
    ops: &[(Real, Vec<EventList>)],
    refs: &[EventList],
    n_classes: usize,
    n_clips: usize,
    cfg: &PsdsConfig,
) -> Result<PsdsReport> {
    cfg.validate()?;
    if n_clips == 0 {
        return Err(Error::Invalid("dataset has zero duration; nothing to evaluate".into()));
    }
    let dataset_hours = n_clips as Real * crate::labels::CLIP_LEN_S / 3600.0;
    let stats = ref_stats(refs, n_classes);
    let refs_by_clip: HashMap<&str, &EventList> =
        refs.iter().map(|r| (r.clip_id.as_str(), r)).collect();
    let empty = EventList::default();

    let mut per_threshold = Vec::with_capacity(ops.len());
    let mut all_rates = Vec::with_capacity(ops.len());
    for (theta, detections) in ops {
        let mut counts = MatchCounts::zeros(n_classes);
        for dets in detections {
            let clip_refs = refs_by_clip.get(dets.clip_id.as_str()).copied().unwrap_or(&empty);
            counts.add(&match_dtc_gtc(dets, clip_refs, n_classes, cfg)?);
        }
        all_rates.push(class_rates(&counts, &stats, dataset_hours, cfg));
        per_threshold.push(ThresholdCounts {
            threshold: *theta,
            counts,
        });
    }
    let active: Vec<bool> = stats.n_refs.iter().map(|&n| n > 0).collect();
    let (score, roc) = score_from_rates(&all_rates, &active, cfg);
    Ok(PsdsReport {
        scenario: cfg.scenario.clone(),
        score,
        n_classes,
        dataset_hours,
        per_threshold,
        roc,
    })
}

/// ROC points as a plot-ready CSV.
pub fn roc_csv(report: &PsdsReport) -> String {
    let mut out = String::from("efpr,etpr\n");
    for p in &report.roc {
        out.push_str(&format!("{},{}\n", p.efpr, p.etpr));
    }
    out
}
