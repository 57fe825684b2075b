//! Loss graph builders: binary cross-entropy, asymmetric focal loss,
//! mean-teacher consistency, interpolation consistency, and the
//! exponential warmup ramp.

use crate::numerics::{NodeId, Real, Tape};

const P_CLAMP: Real = 1e-7;

/// Asymmetric focal loss hyperparameters; (0, 0) reduces to plain BCE.
#[derive(Clone, Copy, Debug)]
pub struct AflConfig {
    pub gamma: Real,
    pub zeta: Real,
}

impl Default for AflConfig {
    fn default() -> Self {
        AflConfig {
            gamma: 0.0,
            zeta: 0.0,
        }
    }
}

/// -mean[y ln p + (1-y) ln(1-p)] with p clamped away from {0, 1}.
pub fn bce_loss(tape: &mut Tape, p: NodeId, y: NodeId) -> NodeId {
    let pc = tape.clamp(p, P_CLAMP, 1.0 - P_CLAMP);
    let one_minus_p = tape.affine(pc, -1.0, 1.0);
    let one_minus_y = tape.affine(y, -1.0, 1.0);
    let ln_p = tape.ln(pc);
    let ln_q = tape.ln(one_minus_p);
    let pos = tape.mul(y, ln_p);
    let neg = tape.mul(one_minus_y, ln_q);
    let term = tape.add(pos, neg);
    let mean = tape.mean_all(term);
    tape.scale(mean, -1.0)
}

/// -mean[(1-p)^gamma y ln p + p^zeta (1-y) ln(1-p)].
pub fn afl_loss(tape: &mut Tape, p: NodeId, y: NodeId, cfg: AflConfig) -> NodeId {
    let pc = tape.clamp(p, P_CLAMP, 1.0 - P_CLAMP);
    let one_minus_p = tape.affine(pc, -1.0, 1.0);
    let one_minus_y = tape.affine(y, -1.0, 1.0);
    let ln_p = tape.ln(pc);
    let ln_q = tape.ln(one_minus_p);
    let focus_pos = tape.powf(one_minus_p, cfg.gamma);
    let focus_neg = tape.powf(pc, cfg.zeta);
    let wy = tape.mul(focus_pos, y);
    let pos = tape.mul(wy, ln_p);
    let wq = tape.mul(focus_neg, one_minus_y);
    let neg = tape.mul(wq, ln_q);
    let term = tape.add(pos, neg);
    let mean = tape.mean_all(term);
    tape.scale(mean, -1.0)
}

/// Mean squared error between student and teacher posteriors, averaged
/// over the frame and clip terms. Detach teacher nodes before calling.
pub fn consistency_loss(
    tape: &mut Tape,
    student_frame: NodeId,
    student_clip: NodeId,
    teacher_frame: NodeId,
    teacher_clip: NodeId,
) -> NodeId {
    let df = tape.sub(student_frame, teacher_frame);
    let sf = tape.mul(df, df);
    let mf = tape.mean_all(sf);
    let dc = tape.sub(student_clip, teacher_clip);
    let sc = tape.mul(dc, dc);
    let mc = tape.mean_all(sc);
    let sum = tape.add(mf, mc);
    tape.scale(sum, 0.5)
}

/// exp(-5 (1 - min(epoch / warmup, 1))^2); 1.0 once warmed up or when no
/// warmup is configured.
pub fn warmup_coefficient(epoch: usize, warmup_epochs: usize) -> Real {
    if warmup_epochs == 0 {
        return 1.0;
    }
    let r = (epoch as Real / warmup_epochs as Real).min(1.0);
    (-5.0 * (1.0 - r) * (1.0 - r)).exp()
}
