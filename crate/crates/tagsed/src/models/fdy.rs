//! Frequency-dynamic CRNN: the baseline skeleton with every 2-d
//! convolution replaced by a frequency-adaptive mixture of basis kernels.
//!
//! Per output frequency row f the effective kernel is
//! sum_k w_k(f) * kernel_k, where the weights come from a per-frequency
//! descriptor (mean over channels and time) pushed through a small MLP
//! and a temperature softmax, so w(f) lies on the K_b simplex.

use rand_chacha::ChaCha8Rng;

use super::{
    attention_pool, batch_norm, bigru_stack, bn_param_init, dense, dropout, gru_param_init,
    head_param_init, CrnnConfig, Forward, SedModel,
};
use crate::error::{Error, Result};
use crate::numerics::conv::{col2im, conv_dims, im2col, ConvSpec};
use crate::numerics::params::uniform_init;
use crate::numerics::tensor::gemm;
use crate::numerics::{BoundParams, NodeId, ParamSet, Real, Tape, Tensor};

#[derive(Clone, Debug)]
pub struct FdyConfig {
    /// Shared CRNN skeleton (filters, pooling, GRU, heads).
    pub base: CrnnConfig,
    /// Number of basis kernels per block.
    pub basis_kernels: usize,
    pub attention_temperature: Real,
    pub attention_hidden: usize,
}

impl FdyConfig {
    pub fn new(n_classes: usize) -> Self {
        FdyConfig {
            base: CrnnConfig::new(n_classes),
            basis_kernels: 4,
            attention_temperature: 31.0,
            attention_hidden: 16,
        }
    }

    pub fn desk(n_classes: usize) -> Self {
        FdyConfig {
            base: CrnnConfig::desk(n_classes),
            ..FdyConfig::new(n_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.base.validate()?;
        if self.basis_kernels == 0 {
            return Err(Error::Config("basis_kernels must be >= 1".into()));
        }
        Ok(())
    }
}

/// Frequency-adaptive convolution of x [Cin,F,T] with `kernels` (each
/// [Cout,Cin,3,3]) mixed per output row by `attn` [F, K_b]; stride 1,
/// padding 1 so the grid is preserved.
pub fn fdy_conv(tape: &mut Tape, x: NodeId, kernels: &[NodeId], attn: NodeId) -> NodeId {
    let spec = ConvSpec::unit_pad((1, 1));
    let value = fdy_conv_value(
        tape.value(x),
        &kernels.iter().map(|&k| tape.value(k).clone()).collect::<Vec<_>>(),
        tape.value(attn),
        spec,
    );
    let x_id = x;
    let kernel_ids = kernels.to_vec();
    let attn_id = attn;
    tape.push_op(
        "fdy_conv",
        value,
        Some(Box::new(move |vals, g, grads| {
            let kt: Vec<Tensor> = kernel_ids.iter().map(|k| vals[k.0].clone()).collect();
            let (dx, dks, dattn) = fdy_conv_backward(&vals[x_id.0], &kt, &vals[attn_id.0], spec, g);
            crate::numerics::tape::acc(grads, x_id, &dx);
            for (id, dk) in kernel_ids.iter().zip(&dks) {
                crate::numerics::tape::acc(grads, *id, dk);
            }
            crate::numerics::tape::acc(grads, attn_id, &dattn);
        })),
    )
}

fn fdy_conv_value(x: &Tensor, kernels: &[Tensor], attn: &Tensor, spec: ConvSpec) -> Tensor {
    let d = conv_dims(x, &kernels[0], spec).unwrap_or_else(|e| panic!("{e}"));
    assert_eq!(d.f_out, d.f_in, "fdy_conv requires grid-preserving padding");
    assert_eq!(
        attn.shape(),
        &[d.f_out, kernels.len()],
        "attention must be [F, K_b]"
    );
    let k = d.c_in * d.kh * d.kw;
    let n = d.f_out * d.t_out;
    let cols = im2col(x, &d, spec);
    let mut out = vec![0.0; d.c_out * n];
    let mut keff = vec![0.0; d.c_out * k];
    let mut row_out = vec![0.0; d.c_out * d.t_out];
    for f in 0..d.f_out {
        mix_kernels(&mut keff, kernels, attn, f);
        // out[:, f, :] = keff @ cols[:, f*T .. (f+1)*T]
        let mut cols_f = vec![0.0; k * d.t_out];
        for p in 0..k {
            cols_f[p * d.t_out..(p + 1) * d.t_out]
                .copy_from_slice(&cols[p * n + f * d.t_out..p * n + (f + 1) * d.t_out]);
        }
        gemm(d.c_out, k, d.t_out, 1.0, &keff, &cols_f, 0.0, &mut row_out);
        for co in 0..d.c_out {
            out[(co * d.f_out + f) * d.t_out..(co * d.f_out + f + 1) * d.t_out]
                .copy_from_slice(&row_out[co * d.t_out..(co + 1) * d.t_out]);
        }
    }
    Tensor::new(vec![d.c_out, d.f_out, d.t_out], out).unwrap()
}

fn mix_kernels(keff: &mut [Real], kernels: &[Tensor], attn: &Tensor, f: usize) {
    let kb = kernels.len();
    keff.fill(0.0);
    for (ki, kernel) in kernels.iter().enumerate() {
        let w = attn.data()[f * kb + ki];
        if w == 0.0 {
            continue;
        }
        for (o, &v) in keff.iter_mut().zip(kernel.data()) {
            *o += w * v;
        }
    }
}

fn fdy_conv_backward(
    x: &Tensor,
    kernels: &[Tensor],
    attn: &Tensor,
    spec: ConvSpec,
    g: &Tensor,
) -> (Tensor, Vec<Tensor>, Tensor) {
    let d = conv_dims(x, &kernels[0], spec).expect("shapes validated in forward");
    let k = d.c_in * d.kh * d.kw;
    let n = d.f_out * d.t_out;
    let kb = kernels.len();
    let cols = im2col(x, &d, spec);

    let mut d_kernels = vec![vec![0.0; d.c_out * k]; kb];
    let mut d_attn = vec![0.0; d.f_out * kb];
    let mut grad_cols = vec![0.0; k * n];
    let mut keff = vec![0.0; d.c_out * k];
    let mut dkeff = vec![0.0; d.c_out * k];
    let mut g_f = vec![0.0; d.c_out * d.t_out];
    let mut cols_f = vec![0.0; k * d.t_out];
    let mut cols_f_t = vec![0.0; d.t_out * k];
    let mut gcol_f = vec![0.0; k * d.t_out];
    for f in 0..d.f_out {
        for co in 0..d.c_out {
            g_f[co * d.t_out..(co + 1) * d.t_out]
                .copy_from_slice(&g.data()[(co * d.f_out + f) * d.t_out..(co * d.f_out + f + 1) * d.t_out]);
        }
        for p in 0..k {
            cols_f[p * d.t_out..(p + 1) * d.t_out]
                .copy_from_slice(&cols[p * n + f * d.t_out..p * n + (f + 1) * d.t_out]);
        }
        // dKeff = g_f [Cout,T] @ cols_f^T [T,K]
        for p in 0..k {
            for t in 0..d.t_out {
                cols_f_t[t * k + p] = cols_f[p * d.t_out + t];
            }
        }
        gemm(d.c_out, d.t_out, k, 1.0, &g_f, &cols_f_t, 0.0, &mut dkeff);
        for (ki, kernel) in kernels.iter().enumerate() {
            let w = attn.data()[f * kb + ki];
            let dk = &mut d_kernels[ki];
            let mut dot = 0.0;
            for i in 0..d.c_out * k {
                dk[i] += w * dkeff[i];
                dot += kernel.data()[i] * dkeff[i];
            }
            d_attn[f * kb + ki] = dot;
        }
        // grad_cols[:, f-block] = keff^T [K,Cout] @ g_f [Cout,T]
        mix_kernels(&mut keff, kernels, attn, f);
        let keff_t = Tensor::new(vec![d.c_out, k], keff.clone()).unwrap().transposed();
        gemm(k, d.c_out, d.t_out, 1.0, keff_t.data(), &g_f, 0.0, &mut gcol_f);
        for p in 0..k {
            grad_cols[p * n + f * d.t_out..p * n + (f + 1) * d.t_out]
                .copy_from_slice(&gcol_f[p * d.t_out..(p + 1) * d.t_out]);
        }
    }
    let mut dx = vec![0.0; x.numel()];
    col2im(&grad_cols, &d, spec, &mut dx);
    (
        Tensor::new(x.shape().to_vec(), dx).unwrap(),
        d_kernels
            .into_iter()
            .map(|dk| Tensor::new(kernels[0].shape().to_vec(), dk).unwrap())
            .collect(),
        Tensor::new(vec![d.f_out, kb], d_attn).unwrap(),
    )
}

/// Per-frequency mixing weights: mean over channels and time, two-layer
/// MLP shared across frequencies, temperature softmax over the bases.
fn attention_weights(
    tape: &mut Tape,
    x: NodeId,
    bound: &BoundParams,
    prefix: &str,
    temperature: Real,
) -> NodeId {
    let f = tape.value(x).shape()[1];
    let desc = tape.mean_chan_time(x);
    let desc = tape.reshape(desc, vec![f, 1]);
    let h = tape.matmul(desc, bound.id(&format!("{prefix}.w1")));
    let h = tape.bias_cols(h, bound.id(&format!("{prefix}.b1")));
    let h = tape.relu(h);
    let logits = tape.matmul(h, bound.id(&format!("{prefix}.w2")));
    let logits = tape.bias_cols(logits, bound.id(&format!("{prefix}.b2")));
    tape.softmax_rows(logits, temperature)
}

pub struct FdyCrnn {
    pub cfg: FdyConfig,
    pub params: ParamSet,
}

impl FdyCrnn {
    pub fn new(cfg: FdyConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let base = &cfg.base;
        let mut c_in = 1;
        for (i, &c_out) in base.conv_filters.iter().enumerate() {
            let limit = 1.0 / ((c_in * 9) as Real).sqrt();
            for ki in 0..cfg.basis_kernels {
                params.insert(
                    format!("block{i}.fdy.kernel{ki}"),
                    uniform_init(rng, &[c_out, c_in, 3, 3], limit),
                    true,
                );
            }
            let hl = 1.0;
            params.insert(format!("block{i}.attn.w1"), uniform_init(rng, &[1, cfg.attention_hidden], hl), true);
            params.insert(format!("block{i}.attn.b1"), Tensor::zeros(&[cfg.attention_hidden]), true);
            let l2 = 1.0 / (cfg.attention_hidden as Real).sqrt();
            params.insert(
                format!("block{i}.attn.w2"),
                uniform_init(rng, &[cfg.attention_hidden, cfg.basis_kernels], l2),
                true,
            );
            params.insert(format!("block{i}.attn.b2"), Tensor::zeros(&[cfg.basis_kernels]), true);
            bn_param_init(&mut params, &format!("block{i}.bn"), c_out);
            c_in = c_out;
        }
        gru_param_init(&mut params, rng, base.gru_layers, c_in, base.gru_hidden);
        head_param_init(&mut params, rng, 2 * base.gru_hidden, base.n_classes);
        Ok(FdyCrnn { cfg, params })
    }

    /// Copy a baseline CRNN's weights into basis kernel 0 and the shared
    /// trunk; with K_b = 1 the two models compute the same function.
    pub fn load_from_crnn(&mut self, crnn: &super::Crnn) {
        for (i, _) in self.cfg.base.conv_filters.iter().enumerate() {
            let w = crnn.params.get(&format!("block{i}.conv.weight")).clone();
            *self.params.get_mut(&format!("block{i}.fdy.kernel0")) = w;
            for stat in ["gamma", "beta", "mean", "var"] {
                let v = crnn.params.get(&format!("block{i}.bn.{stat}")).clone();
                *self.params.get_mut(&format!("block{i}.bn.{stat}")) = v;
            }
        }
        for layer in 0..self.cfg.base.gru_layers {
            for dir in ["fwd", "bwd"] {
                for part in ["wi", "wh", "bi", "bh"] {
                    let name = format!("gru{layer}.{dir}.{part}");
                    *self.params.get_mut(&name) = crnn.params.get(&name).clone();
                }
            }
        }
        for head in ["head.frame.w", "head.frame.b", "head.attn.w", "head.attn.b"] {
            *self.params.get_mut(head) = crnn.params.get(head).clone();
        }
    }
}

impl SedModel for FdyCrnn {
    fn arch_name(&self) -> &'static str {
        "fdy-crnn"
    }

    fn n_classes(&self) -> usize {
        self.cfg.base.n_classes
    }

    fn n_mels(&self) -> usize {
        self.cfg.base.n_mels
    }

    fn time_downsample(&self) -> usize {
        self.cfg.base.time_downsample()
    }

    fn output_frames(&self, input_frames: usize) -> usize {
        self.cfg.base.output_frames(input_frames)
    }

    fn params(&self) -> &ParamSet {
        &self.params
    }

    fn params_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    fn forward_bound(
        &self,
        tape: &mut Tape,
        bound: &BoundParams,
        x: &Tensor,
        train: bool,
        mut rng: Option<&mut ChaCha8Rng>,
    ) -> Result<Forward> {
        let base = &self.cfg.base;
        if x.shape().len() != 2 || x.shape()[1] != base.n_mels {
            return Err(Error::shape(
                "fdy_crnn_forward",
                format!("expected [T, {}] input, got {:?}", base.n_mels, x.shape()),
            ));
        }
        let mut bn_updates = Vec::new();
        let input = tape.leaf(x.clone());
        let tr = tape.transpose(input);
        let (t, m) = (x.shape()[0], x.shape()[1]);
        let mut h = tape.reshape(tr, vec![1, m, t]);
        for i in 0..base.conv_filters.len() {
            let kernels: Vec<NodeId> = (0..self.cfg.basis_kernels)
                .map(|ki| bound.id(&format!("block{i}.fdy.kernel{ki}")))
                .collect();
            let attn = attention_weights(
                tape,
                h,
                bound,
                &format!("block{i}.attn"),
                self.cfg.attention_temperature,
            );
            h = fdy_conv(tape, h, &kernels, attn);
            h = batch_norm(tape, h, bound, &format!("block{i}.bn"), train, base.bn_eps, &mut bn_updates);
            h = tape.leaky_relu(h, base.leaky_slope);
            h = tape.avg_pool2d(h, base.pools[i]);
        }
        let fm = tape.freq_mean(h);
        let seq = tape.transpose(fm);
        let rnn = bigru_stack(tape, seq, bound, base.gru_layers);
        let rnn = dropout(tape, rnn, base.dropout, train, rng.as_deref_mut());
        let frame_logits = dense(tape, rnn, bound, "head.frame");
        let frame_probs = tape.sigmoid(frame_logits);
        let attn_logits = dense(tape, rnn, bound, "head.attn");
        let clip_probs = attention_pool(tape, attn_logits, frame_probs);
        Ok(Forward {
            frame_probs,
            clip_probs,
            bn_updates,
        })
    }
}
