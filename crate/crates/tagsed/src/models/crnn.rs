//! Baseline CRNN: 7 conv blocks (3x3 conv, batch norm, leaky ReLU,
//! average pooling), a 2-layer BiGRU, a sigmoid frame head, and an
//! attention-pooled clip head.

use rand_chacha::ChaCha8Rng;

use super::{
    attention_pool, batch_norm, bigru_stack, bn_param_init, dense, dropout, gru_param_init,
    head_param_init, Forward, SedModel,
};
use crate::error::{Error, Result};
use crate::numerics::params::uniform_init;
use crate::numerics::{BoundParams, ConvSpec, ParamSet, Real, Tape, Tensor};

#[derive(Clone, Debug)]
pub struct CrnnConfig {
    pub conv_filters: Vec<usize>,
    /// Pooling per block as (frequency, time).
    pub pools: Vec<(usize, usize)>,
    pub gru_hidden: usize,
    pub gru_layers: usize,
    pub n_classes: usize,
    pub n_mels: usize,
    pub leaky_slope: Real,
    pub dropout: Real,
    pub bn_eps: Real,
}

impl CrnnConfig {
    pub fn new(n_classes: usize) -> Self {
        CrnnConfig {
            conv_filters: vec![16, 32, 64, 128, 128, 128, 128],
            pools: vec![(2, 2), (2, 2), (2, 1), (2, 1), (2, 1), (2, 1), (2, 1)],
            gru_hidden: 128,
            gru_layers: 2,
            n_classes,
            n_mels: 128,
            leaky_slope: 0.01,
            dropout: 0.5,
            bn_eps: 1e-5,
        }
    }

    /// Narrow variant for CPU-scale training; same depth and pooling.
    pub fn desk(n_classes: usize) -> Self {
        CrnnConfig {
            conv_filters: vec![8, 16, 32, 32, 32, 32, 32],
            gru_hidden: 32,
            ..CrnnConfig::new(n_classes)
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.conv_filters.len() != self.pools.len() || self.conv_filters.is_empty() {
            return Err(Error::Config(
                "conv_filters and pools must have the same nonzero length".into(),
            ));
        }
        let freq_down: usize = self.pools.iter().map(|p| p.0).product();
        if freq_down != self.n_mels {
            return Err(Error::Config(format!(
                "frequency pooling product {freq_down} must collapse all {} mel bins",
                self.n_mels
            )));
        }
        Ok(())
    }

    pub fn time_downsample(&self) -> usize {
        self.pools.iter().map(|p| p.1).product()
    }

    pub fn output_frames(&self, input_frames: usize) -> usize {
        self.pools.iter().fold(input_frames, |t, p| t / p.1)
    }
}

pub struct Crnn {
    pub cfg: CrnnConfig,
    pub params: ParamSet,
}

impl Crnn {
    pub fn new(cfg: CrnnConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut c_in = 1;
        for (i, &c_out) in cfg.conv_filters.iter().enumerate() {
            let limit = 1.0 / ((c_in * 9) as Real).sqrt();
            params.insert(
                format!("block{i}.conv.weight"),
                uniform_init(rng, &[c_out, c_in, 3, 3], limit),
                true,
            );
            bn_param_init(&mut params, &format!("block{i}.bn"), c_out);
            c_in = c_out;
        }
        gru_param_init(&mut params, rng, cfg.gru_layers, c_in, cfg.gru_hidden);
        head_param_init(&mut params, rng, 2 * cfg.gru_hidden, cfg.n_classes);
        Ok(Crnn { cfg, params })
    }
}

impl SedModel for Crnn {
    fn arch_name(&self) -> &'static str {
        "crnn"
    }

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn n_mels(&self) -> usize {
        self.cfg.n_mels
    }

    fn time_downsample(&self) -> usize {
        self.cfg.time_downsample()
    }

    fn output_frames(&self, input_frames: usize) -> usize {
        self.cfg.output_frames(input_frames)
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
        if x.shape().len() != 2 || x.shape()[1] != self.cfg.n_mels {
            return Err(Error::shape(
                "crnn_forward",
                format!("expected [T, {}] input, got {:?}", self.cfg.n_mels, x.shape()),
            ));
        }
        let cfg = &self.cfg;
        let mut bn_updates = Vec::new();

        let input = tape.leaf(x.clone());
        let tr = tape.transpose(input);
        let (t, m) = (x.shape()[0], x.shape()[1]);
        let mut h = tape.reshape(tr, vec![1, m, t]);
        for i in 0..cfg.conv_filters.len() {
            let k = bound.id(&format!("block{i}.conv.weight"));
            h = tape.conv2d(h, k, ConvSpec::unit_pad((1, 1)));
            h = batch_norm(tape, h, bound, &format!("block{i}.bn"), train, cfg.bn_eps, &mut bn_updates);
            h = tape.leaky_relu(h, cfg.leaky_slope);
            h = tape.avg_pool2d(h, cfg.pools[i]);
        }
        // [C, 1, T'] -> [T', C]
        let fm = tape.freq_mean(h);
        let seq = tape.transpose(fm);
        let rnn = bigru_stack(tape, seq, bound, cfg.gru_layers);
        let rnn = dropout(tape, rnn, cfg.dropout, train, rng.as_deref_mut());

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

/// Closed-form parameter count for the baseline CRNN; the architecture
/// accounting tests compare the live ParamSet against this.
pub fn crnn_analytic_param_count(cfg: &CrnnConfig) -> usize {
    let mut total = 0usize;
    let mut c_in = 1;
    for &c_out in &cfg.conv_filters {
        total += c_out * c_in * 9; // conv kernels (no bias; BN affine follows)
        total += 2 * c_out; // gamma, beta
        c_in = c_out;
    }
    let h = cfg.gru_hidden;
    for layer in 0..cfg.gru_layers {
        let d = if layer == 0 { c_in } else { 2 * h };
        total += 2 * (3 * h * d + 3 * h * h + 6 * h); // both directions
    }
    total += 2 * (2 * h * cfg.n_classes + cfg.n_classes); // frame + attention heads
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn forward_shapes_from_626_by_128() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let model = Crnn::new(CrnnConfig::desk(3), &mut rng).unwrap();
        let x = Tensor::from_fn(&[626, 128], |i| ((i % 97) as Real) * 0.01 - 0.5);
        let p = model.infer(&x).unwrap();
        assert_eq!(p.frame.shape(), &[156, 3]);
        assert_eq!(p.clip.shape(), &[3]);
        assert!(p.frame.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert!(p.clip.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn mel_mismatch_is_an_error() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let model = Crnn::new(CrnnConfig::desk(3), &mut rng).unwrap();
        let x = Tensor::zeros(&[626, 64]);
        assert!(model.infer(&x).is_err());
    }

    #[test]
    fn zero_weights_give_half_probability_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut model = Crnn::new(CrnnConfig::desk(2), &mut rng).unwrap();
        let zeroed: Vec<String> = model
            .params
            .iter()
            .filter(|e| e.trainable)
            .map(|e| e.name.clone())
            .collect();
        for name in zeroed {
            let t = model.params.get_mut(&name);
            let shape = t.shape().to_vec();
            *t = Tensor::zeros(&shape);
        }
        let x = Tensor::from_fn(&[626, 128], |i| (i as Real * 0.001).sin());
        let p = model.infer(&x).unwrap();
        for &v in p.frame.data() {
            assert!((v - 0.5).abs() < 1e-12, "sigmoid(0) expected, got {v}");
        }
    }

    #[test]
    fn param_count_matches_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for cfg in [CrnnConfig::new(10), CrnnConfig::desk(3)] {
            let model = Crnn::new(cfg.clone(), &mut rng).unwrap();
            assert_eq!(model.params.trainable_count(), crnn_analytic_param_count(&cfg));
        }
    }

    #[test]
    fn config_invariant_rejects_bad_pooling() {
        let mut cfg = CrnnConfig::new(10);
        cfg.n_mels = 64;
        assert!(cfg.validate().is_err());
    }
}
