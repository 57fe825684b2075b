//! Model architectures and pooling heads.
//!
//! All three models share the same contract: a log-mel clip [T, M] in,
//! frame posteriors [T', K] and clip posteriors [K] out, with T' the
//! input frame count divided by the architecture's time downsample.

pub mod at;
pub mod crnn;
pub mod fdy;

use std::path::Path;

use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::numerics::{checkpoint, BoundParams, NodeId, ParamSet, Real, Tape, Tensor};

pub use at::{at_analytic_param_count, AtBackbone, AtBackboneConfig};
pub use crnn::{crnn_analytic_param_count, Crnn, CrnnConfig};
pub use fdy::{fdy_conv, FdyConfig, FdyCrnn};

/// Frame and clip probabilities for one clip.
#[derive(Clone, Debug)]
pub struct Posteriors {
    /// [T', K] in [0, 1].
    pub frame: Tensor,
    /// [K] in [0, 1].
    pub clip: Tensor,
}

/// Node handles produced by one forward pass.
pub struct Forward {
    pub frame_probs: NodeId,
    pub clip_probs: NodeId,
    /// Per batch-norm layer: (param prefix, per-channel (mean, var)).
    pub bn_updates: Vec<(String, Vec<(Real, Real)>)>,
}

impl Forward {
    pub fn posteriors(&self, tape: &Tape) -> Posteriors {
        Posteriors {
            frame: tape.value(self.frame_probs).clone(),
            clip: tape.value(self.clip_probs).clone(),
        }
    }
}

/// Common interface the training drivers program against.
pub trait SedModel {
    fn arch_name(&self) -> &'static str;
    fn n_classes(&self) -> usize;
    fn n_mels(&self) -> usize;
    /// Input frames per output frame.
    fn time_downsample(&self) -> usize;
    /// Output frame count for an input of `input_frames`, accounting for
    /// the truncation each pooling stage applies.
    fn output_frames(&self, input_frames: usize) -> usize;
    fn params(&self) -> &ParamSet;
    fn params_mut(&mut self) -> &mut ParamSet;
    fn forward_bound(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: &Tensor,
        train: bool,
        rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward>;

    /// Convenience single-shot inference.
    fn infer(&self, x: &Tensor) -> Result<Posteriors> {
        let mut tape = Tape::new();
        let bound = self.params().bind(&mut tape);
        let fwd = self.forward_bound(&mut tape, &bound, x, false, None)?;
        Ok(fwd.posteriors(&tape))
    }
}

/// Attention pooling: clip(c) = sum_t softmax_t(logit(t,c)) * prob(t,c).
pub fn attention_pool(tape: &mut Tape, frame_logits: NodeId, frame_probs: NodeId) -> NodeId {
    let weights = tape.softmax_cols(frame_logits);
    let weighted = tape.mul(weights, frame_probs);
    tape.sum_rows(weighted)
}

/// Exponential-softmax pooling of frame probabilities:
/// y = sum_i y_i * exp(y_i) / sum_i exp(y_i), per class.
pub fn exp_softmax_pool(tape: &mut Tape, frame_probs: NodeId) -> NodeId {
    let e = tape.exp(frame_probs);
    let weighted = tape.mul(frame_probs, e);
    let num = tape.sum_rows(weighted);
    let den = tape.sum_rows(e);
    tape.div(num, den)
}

/// Tensor-level exponential-softmax pooling for inference and metrics;
/// same arithmetic as the tape version.
pub fn exp_softmax_pool_tensor(frame_probs: &Tensor) -> Result<Tensor> {
    if frame_probs.shape().len() != 2 || frame_probs.shape()[0] == 0 {
        return Err(Error::shape(
            "exp_softmax_pool",
            format!("expected non-empty [T,K], got {:?}", frame_probs.shape()),
        ));
    }
    let mut tape = Tape::new();
    let x = tape.leaf(frame_probs.clone());
    let y = exp_softmax_pool(&mut tape, x);
    Ok(tape.value(y).clone())
}

// ---- shared building blocks ----

pub(crate) fn dense(tape: &mut Tape, x: NodeId, bound: &BoundParams, prefix: &str) -> NodeId {
    let w = bound.id(&format!("{prefix}.w"));
    let b = bound.id(&format!("{prefix}.b"));
    let y = tape.matmul(x, w);
    tape.bias_cols(y, b)
}

/// Per-clip batch normalization. Clips are normalized by their own
/// statistics at training and inference alike, so the two modes compute
/// the same function; running estimates are still tracked during
/// training (and persisted in checkpoints) via `bn_updates`.
pub(crate) fn batch_norm(
    tape: &mut Tape,
    x: NodeId,
    bound: &BoundParams,
    prefix: &str,
    train: bool,
    eps: Real,
    bn_updates: &mut Vec<(String, Vec<(Real, Real)>)>,
) -> NodeId {
    let gamma = bound.id(&format!("{prefix}.gamma"));
    let beta = bound.id(&format!("{prefix}.beta"));
    let (y, stats) = tape.batch_norm_train(x, gamma, beta, eps);
    if train {
        bn_updates.push((prefix.to_string(), stats));
    }
    y
}

/// Two-layer bidirectional GRU stack; parameter names follow
/// `gru{layer}.{fwd|bwd}.{wi,wh,bi,bh}`.
pub(crate) fn bigru_stack(
    tape: &mut Tape,
    mut x: NodeId,
    bound: &BoundParams,
    layers: usize,
) -> NodeId {
    for layer in 0..layers {
        let dir = |tape: &mut Tape, input: NodeId, name: &str| -> NodeId {
            let wi = bound.id(&format!("gru{layer}.{name}.wi"));
            let wh = bound.id(&format!("gru{layer}.{name}.wh"));
            let bi = bound.id(&format!("gru{layer}.{name}.bi"));
            let bh = bound.id(&format!("gru{layer}.{name}.bh"));
            tape.gru(input, wi, wh, bi, bh)
        };
        let fwd = dir(tape, x, "fwd");
        let rev_in = tape.reverse_rows(x);
        let bwd_rev = dir(tape, rev_in, "bwd");
        let bwd = tape.reverse_rows(bwd_rev);
        x = tape.concat_cols(fwd, bwd);
    }
    x
}

/// Inverted dropout as a constant mask multiply; identity in eval mode.
pub(crate) fn dropout(
    tape: &mut Tape,
    x: NodeId,
    p: Real,
    train: bool,
    rng: Option<&mut ChaCha8Rng>,
) -> NodeId {
    if !train || p <= 0.0 {
        return x;
    }
    let rng = rng.expect("dropout in train mode needs an RNG");
    use rand::RngExt;
    let keep = 1.0 - p;
    let shape = tape.value(x).shape().to_vec();
    let mask = Tensor::from_fn(&shape, |_| {
        if rng.random_range(0.0..1.0) < keep as f64 {
            1.0 / keep
        } else {
            0.0
        }
    });
    let m = tape.leaf(mask);
    tape.mul(x, m)
}

pub(crate) fn gru_param_init(
    params: &mut ParamSet,
    rng: &mut ChaCha8Rng,
    layers: usize,
    input_dim: usize,
    hidden: usize,
) {
    use crate::numerics::params::uniform_init;
    let limit = 1.0 / (hidden as Real).sqrt();
    for layer in 0..layers {
        let d = if layer == 0 { input_dim } else { 2 * hidden };
        for dir in ["fwd", "bwd"] {
            params.insert(
                format!("gru{layer}.{dir}.wi"),
                uniform_init(rng, &[3 * hidden, d], limit),
                true,
            );
            params.insert(
                format!("gru{layer}.{dir}.wh"),
                uniform_init(rng, &[3 * hidden, hidden], limit),
                true,
            );
            params.insert(format!("gru{layer}.{dir}.bi"), uniform_init(rng, &[3 * hidden], limit), true);
            params.insert(format!("gru{layer}.{dir}.bh"), uniform_init(rng, &[3 * hidden], limit), true);
        }
    }
}

pub(crate) fn bn_param_init(params: &mut ParamSet, prefix: &str, channels: usize) {
    params.insert(format!("{prefix}.gamma"), Tensor::full(&[channels], 1.0), true);
    params.insert(format!("{prefix}.beta"), Tensor::zeros(&[channels]), true);
    params.insert(format!("{prefix}.mean"), Tensor::zeros(&[channels]), false);
    params.insert(format!("{prefix}.var"), Tensor::full(&[channels], 1.0), false);
}

pub(crate) fn head_param_init(params: &mut ParamSet, rng: &mut ChaCha8Rng, input_dim: usize, n_classes: usize) {
    use crate::numerics::params::uniform_init;
    let limit = 1.0 / (input_dim as Real).sqrt();
    for head in ["head.frame", "head.attn"] {
        params.insert(
            format!("{head}.w"),
            uniform_init(rng, &[input_dim, n_classes], limit),
            true,
        );
        params.insert(format!("{head}.b"), uniform_init(rng, &[n_classes], limit), true);
    }
}

/// Apply accumulated batch statistics to the running estimates with the
/// given momentum.
pub fn apply_bn_updates(params: &mut ParamSet, updates: &[(String, Vec<(Real, Real)>)], momentum: Real) {
    for (prefix, stats) in updates {
        let mean_name = format!("{prefix}.mean");
        let var_name = format!("{prefix}.var");
        for (ci, &(m, v)) in stats.iter().enumerate() {
            let rm = &mut params.get_mut(&mean_name).data_mut()[ci];
            *rm = (1.0 - momentum) * *rm + momentum * m;
            let rv = &mut params.get_mut(&var_name).data_mut()[ci];
            *rv = (1.0 - momentum) * *rv + momentum * v;
        }
    }
}

// ---- checkpoint with architecture sidecar ----

/// Save parameters plus a small text sidecar (`<path>.meta`) recording
/// the architecture for load-time integrity checking.
pub fn save_model(path: &Path, arch: &str, n_classes: usize, n_mels: usize, params: &ParamSet) -> Result<()> {
    checkpoint::save(path, params.iter().map(|e| (e.name.as_str(), &e.tensor)))?;
    let meta = format!("arch={arch}\nn_classes={n_classes}\nn_mels={n_mels}\n");
    std::fs::write(meta_path(path), meta)?;
    Ok(())
}

fn meta_path(path: &Path) -> std::path::PathBuf {
    let mut p = path.as_os_str().to_owned();
    p.push(".meta");
    std::path::PathBuf::from(p)
}

/// Load a checkpoint into an existing parameter set, verifying the
/// sidecar architecture tag first.
pub fn load_model(path: &Path, expected_arch: &str, params: &mut ParamSet) -> Result<()> {
    let meta = std::fs::read_to_string(meta_path(path)).map_err(|_| Error::Checkpoint {
        path: path.to_path_buf(),
        detail: "missing .meta sidecar".into(),
    })?;
    let arch = meta
        .lines()
        .find_map(|l| l.strip_prefix("arch="))
        .unwrap_or("");
    if arch != expected_arch {
        return Err(Error::Checkpoint {
            path: path.to_path_buf(),
            detail: format!("architecture `{arch}` does not match expected `{expected_arch}`"),
        });
    }
    params.load_entries(checkpoint::load(path)?)
}
