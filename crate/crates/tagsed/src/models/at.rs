//! CNN-14-style audio-tagging backbone: 6 blocks of two 3x3 convs with
//! batch norm and ReLU, 2x2 average pooling per block, then a 2-layer
//! BiGRU and the frame/clip heads. Channel widths divide by `width_div`
//! for CPU-scale runs; the full-width configuration exists for parameter
//! accounting only.

use rand_chacha::ChaCha8Rng;

use super::{
    attention_pool, batch_norm, bigru_stack, bn_param_init, dense, dropout, gru_param_init,
    head_param_init, Forward, SedModel,
};
use crate::error::{Error, Result};
use crate::numerics::params::uniform_init;
use crate::numerics::{BoundParams, ConvSpec, ParamSet, Real, Tape, Tensor};

pub const AT_BLOCKS: usize = 6;
pub const AT_CONVS_PER_BLOCK: usize = 2;
const FULL_CHANNELS: [usize; AT_BLOCKS] = [64, 128, 256, 512, 1024, 2048];
const FULL_GRU_HIDDEN: usize = 1024;

#[derive(Clone, Debug)]
pub struct AtBackboneConfig {
    /// Divides every channel width and the GRU hidden size.
    pub width_div: usize,
    pub n_classes: usize,
    pub n_mels: usize,
    pub dropout: Real,
    pub bn_eps: Real,
}

impl AtBackboneConfig {
    /// Published-width configuration; used only for parameter counting.
    pub fn full(n_classes: usize) -> Self {
        AtBackboneConfig {
            width_div: 1,
            n_classes,
            n_mels: 64,
            dropout: 0.5,
            bn_eps: 1e-5,
        }
    }

    /// Default desk-scale width (channels and GRU divided by 8).
    pub fn desk(n_classes: usize) -> Self {
        AtBackboneConfig {
            width_div: 8,
            ..AtBackboneConfig::full(n_classes)
        }
    }

    pub fn channels(&self) -> Vec<usize> {
        FULL_CHANNELS
            .iter()
            .map(|&c| (c / self.width_div).max(1))
            .collect()
    }

    pub fn gru_hidden(&self) -> usize {
        (FULL_GRU_HIDDEN / self.width_div).max(1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_div == 0 {
            return Err(Error::Config("width_div must be >= 1".into()));
        }
        if self.n_mels != 64 {
            return Err(Error::Config(format!(
                "the tagging backbone expects 64 mel bins, got {}",
                self.n_mels
            )));
        }
        Ok(())
    }
}

pub struct AtBackbone {
    pub cfg: AtBackboneConfig,
    pub params: ParamSet,
}

impl AtBackbone {
    pub fn new(cfg: AtBackboneConfig, rng: &mut ChaCha8Rng) -> Result<Self> {
        cfg.validate()?;
        let mut params = ParamSet::new();
        let mut c_in = 1;
        for (i, c_out) in cfg.channels().into_iter().enumerate() {
            for conv in 1..=AT_CONVS_PER_BLOCK {
                let cin = if conv == 1 { c_in } else { c_out };
                let limit = 1.0 / ((cin * 9) as Real).sqrt();
                params.insert(
                    format!("block{i}.conv{conv}.weight"),
                    uniform_init(rng, &[c_out, cin, 3, 3], limit),
                    true,
                );
                bn_param_init(&mut params, &format!("block{i}.bn{conv}"), c_out);
            }
            c_in = c_out;
        }
        gru_param_init(&mut params, rng, 2, c_in, cfg.gru_hidden());
        head_param_init(&mut params, rng, 2 * cfg.gru_hidden(), cfg.n_classes);
        Ok(AtBackbone { cfg, params })
    }
}

impl SedModel for AtBackbone {
    fn arch_name(&self) -> &'static str {
        "at-cnn14"
    }

    fn n_classes(&self) -> usize {
        self.cfg.n_classes
    }

    fn n_mels(&self) -> usize {
        self.cfg.n_mels
    }

    fn time_downsample(&self) -> usize {
        1 << AT_BLOCKS
    }

    fn output_frames(&self, input_frames: usize) -> usize {
        (0..AT_BLOCKS).fold(input_frames, |t, _| t / 2)
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
        let cfg = &self.cfg;
        if x.shape().len() != 2 || x.shape()[1] != cfg.n_mels {
            return Err(Error::shape(
                "at_forward",
                format!("expected [T, {}] input, got {:?}", cfg.n_mels, x.shape()),
            ));
        }
        let mut bn_updates = Vec::new();
        let input = tape.leaf(x.clone());
        let tr = tape.transpose(input);
        let (t, m) = (x.shape()[0], x.shape()[1]);
        let mut h = tape.reshape(tr, vec![1, m, t]);
        for i in 0..AT_BLOCKS {
            for conv in 1..=AT_CONVS_PER_BLOCK {
                let k = bound.id(&format!("block{i}.conv{conv}.weight"));
                h = tape.conv2d(h, k, ConvSpec::unit_pad((1, 1)));
                h = batch_norm(
                    tape,
                    h,
                    bound,
                    &format!("block{i}.bn{conv}"),
                    train,
                    cfg.bn_eps,
                    &mut bn_updates,
                );
                h = tape.relu(h);
            }
            h = tape.avg_pool2d(h, (2, 2));
        }
        let fm = tape.freq_mean(h);
        let seq = tape.transpose(fm);
        let rnn = bigru_stack(tape, seq, bound, 2);
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

/// Closed-form trainable parameter count for the tagging backbone.
pub fn at_analytic_param_count(cfg: &AtBackboneConfig) -> usize {
    let mut total = 0usize;
    let mut c_in = 1;
    for c_out in cfg.channels() {
        total += c_out * c_in * 9 + 2 * c_out; // conv1 + bn1
        total += c_out * c_out * 9 + 2 * c_out; // conv2 + bn2
        c_in = c_out;
    }
    let h = cfg.gru_hidden();
    for layer in 0..2 {
        let d = if layer == 0 { c_in } else { 2 * h };
        total += 2 * (3 * h * d + 3 * h * h + 6 * h);
    }
    total += 2 * (2 * h * cfg.n_classes + cfg.n_classes);
    total
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn time_downsample_64_gives_9_output_frames() {
        let mut rng = ChaCha8Rng::seed_from_u64(40);
        let model = AtBackbone::new(AtBackboneConfig::desk(3), &mut rng).unwrap();
        let x = Tensor::from_fn(&[626, 64], |i| ((i % 31) as Real) * 0.01);
        let p = model.infer(&x).unwrap();
        assert_eq!(p.frame.shape(), &[9, 3]);
        assert_eq!(p.clip.shape(), &[3]);
    }

    #[test]
    fn full_width_count_is_near_118m() {
        let cfg = AtBackboneConfig::full(10);
        let count = at_analytic_param_count(&cfg) as f64;
        let target = 118e6;
        assert!(
            (count - target).abs() / target < 0.10,
            "full-width parameter count {count} not within 10% of 118M"
        );
    }

    #[test]
    fn live_params_match_closed_form() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let cfg = AtBackboneConfig::desk(10);
        let model = AtBackbone::new(cfg.clone(), &mut rng).unwrap();
        assert_eq!(model.params.trainable_count(), at_analytic_param_count(&cfg));
    }

    #[test]
    fn desk_forward_under_a_second() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let model = AtBackbone::new(AtBackboneConfig::desk(10), &mut rng).unwrap();
        let x = Tensor::from_fn(&[626, 64], |i| ((i % 61) as Real) * 0.01 - 0.3);
        let start = std::time::Instant::now();
        model.infer(&x).unwrap();
        let elapsed = start.elapsed();
        assert!(elapsed.as_secs_f64() < 1.0, "forward took {elapsed:?}");
    }

    #[test]
    fn rejects_wrong_mel_count() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let model = AtBackbone::new(AtBackboneConfig::desk(3), &mut rng).unwrap();
        assert!(model.infer(&Tensor::zeros(&[626, 128])).is_err());
    }
}
