//! F1 helpers used for validation-time checkpoint selection and the
//! overfit checks.

use crate::numerics::{Real, Tensor};

fn f1(tp: usize, fp: usize, fn_: usize) -> Real {
    if tp == 0 {
        return 0.0;
    }
    let p = tp as Real / (tp + fp) as Real;
    let r = tp as Real / (tp + fn_) as Real;
    2.0 * p * r / (p + r)
}

/// Macro-averaged clip-level F1 at a fixed threshold. Predictions and
/// targets are [n_clips][K]; classes absent from every target are
/// skipped.
pub fn clip_macro_f1(probs: &[Tensor], targets: &[Tensor], threshold: Real) -> Real {
    assert_eq!(probs.len(), targets.len());
    if probs.is_empty() {
        return 0.0;
    }
    let k = probs[0].shape()[0];
    let mut f1s = Vec::new();
    for c in 0..k {
        let (mut tp, mut fp, mut fn_, mut pos) = (0usize, 0usize, 0usize, 0usize);
        for (p, y) in probs.iter().zip(targets) {
            let hit = p.data()[c] >= threshold;
            let active = y.data()[c] >= 0.5;
            if active {
                pos += 1;
            }
            match (hit, active) {
                (true, true) => tp += 1,
                (true, false) => fp += 1,
                (false, true) => fn_ += 1,
                (false, false) => {}
            }
        }
        if pos > 0 {
            f1s.push(f1(tp, fp, fn_));
        }
    }
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<Real>() / f1s.len() as Real
    }
}

/// Macro-averaged frame-level F1 at a fixed threshold over [T, K] pairs.
pub fn frame_macro_f1(probs: &[Tensor], targets: &[Tensor], threshold: Real) -> Real {
    assert_eq!(probs.len(), targets.len());
    if probs.is_empty() {
        return 0.0;
    }
    let k = probs[0].shape()[1];
    let mut f1s = Vec::new();
    for c in 0..k {
        let (mut tp, mut fp, mut fn_, mut pos) = (0usize, 0usize, 0usize, 0usize);
        for (p, y) in probs.iter().zip(targets) {
            let t = p.shape()[0];
            for i in 0..t {
                let hit = p.data()[i * k + c] >= threshold;
                let active = y.data()[i * k + c] >= 0.5;
                if active {
                    pos += 1;
                }
                match (hit, active) {
                    (true, true) => tp += 1,
                    (true, false) => fp += 1,
                    (false, true) => fn_ += 1,
                    (false, false) => {}
                }
            }
        }
        if pos > 0 {
            f1s.push(f1(tp, fp, fn_));
        }
    }
    if f1s.is_empty() {
        0.0
    } else {
        f1s.iter().sum::<Real>() / f1s.len() as Real
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_clip_predictions_score_one() {
        let y = vec![
            Tensor::new(vec![3], vec![1.0, 0.0, 1.0]).unwrap(),
            Tensor::new(vec![3], vec![0.0, 1.0, 0.0]).unwrap(),
        ];
        assert_eq!(clip_macro_f1(&y, &y, 0.5), 1.0);
    }

    #[test]
    fn all_misses_score_zero() {
        let p = vec![Tensor::new(vec![2], vec![0.0, 0.0]).unwrap()];
        let y = vec![Tensor::new(vec![2], vec![1.0, 1.0]).unwrap()];
        assert_eq!(clip_macro_f1(&p, &y, 0.5), 0.0);
    }

    #[test]
    fn frame_f1_counts_cells() {
        let p = vec![Tensor::new(vec![2, 2], vec![0.9, 0.1, 0.9, 0.1]).unwrap()];
        let y = vec![Tensor::new(vec![2, 2], vec![1.0, 0.0, 0.0, 0.0]).unwrap()];
        // class 0: tp=1, fp=1, fn=0 -> P=0.5, R=1 -> F1=2/3; class 1 has
        // no positives and is skipped.
        let f = frame_macro_f1(&p, &y, 0.5);
        assert!((f - 2.0 / 3.0).abs() < 1e-12);
    }
}
