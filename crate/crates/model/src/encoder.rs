//! The representation encoder: a strided CNN front-end (cumulative stride
//! 320, one frame per 20 ms packet) followed by a pre-norm Transformer stack.
//! Lost frames are substituted with a learnable masked embedding before the
//! Transformer, and two taps are exposed: the first-layer hidden state
//! (acoustic, fine-grained) and the final-layer hidden state (phonetic).

use gpse_dsp::AudioBuffer;
use ndarray::Array2;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::{Ctx, EvalCtx};
use gpse_nn::layers::{Conv1d, LayerNorm, Linear, MultiHeadAttention, Padding};
use gpse_nn::param::{HasParams, Param};
use gpse_nn::tensor::{from_vec, Tensor};
use gpse_nn::zeros;

use crate::error::{ModelError, Result};

pub const ENCODER_RATE: u32 = 16000;
pub const FRAME_HOP: usize = 320;

/// CNN front-end plan: kernel equals stride in every layer and the strides
/// multiply to exactly 320, so each CNN frame reads exactly its own 20 ms
/// packet and nothing else. That non-overlap is what makes masked-frame
/// substitution sever all dependence on the lost samples.
const CONV_PLAN: [(usize, usize); 5] = [(5, 5), (4, 4), (4, 4), (2, 2), (2, 2)];

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct EncoderConfig {
    pub conv_channels: usize,
    pub n_transformer_layers: usize,
    pub d_model: usize,
    pub n_heads: usize,
    pub frame_hop: usize,
}

impl Default for EncoderConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl EncoderConfig {
    pub fn toy() -> Self {
        Self { conv_channels: 64, n_transformer_layers: 4, d_model: 192, n_heads: 4, frame_hop: FRAME_HOP }
    }

    /// Large reference dimensions (24 layers, d_model 1024); used for
    /// construct-and-forward checks only at desk scale.
    pub fn full_size() -> Self {
        Self { conv_channels: 512, n_transformer_layers: 24, d_model: 1024, n_heads: 16, frame_hop: FRAME_HOP }
    }

    pub fn validate(&self) -> Result<()> {
        if self.d_model % self.n_heads != 0 {
            return Err(ModelError::ConfigError(format!(
                "d_model {} must divide by n_heads {}",
                self.d_model, self.n_heads
            )));
        }
        if self.frame_hop != FRAME_HOP {
            return Err(ModelError::ConfigError(format!(
                "frame_hop must be {FRAME_HOP} to stay aligned with the packet frames"
            )));
        }
        Ok(())
    }

    pub fn n_frames(&self, samples: usize) -> usize {
        samples.div_ceil(self.frame_hop)
    }
}

/// The three frame-aligned representation streams.
#[derive(Debug, Clone)]
pub struct RepresentationBundle {
    /// Noisy acoustic representations (first-layer tap on the input).
    pub r_a0: Tensor,
    /// Enhanced phonetic representations (final-layer tap).
    pub r_p: Tensor,
    /// Enhanced acoustic representations; absent until the adapter runs.
    pub r_a: Option<Tensor>,
}

impl RepresentationBundle {
    pub fn check_aligned(&self) -> Result<()> {
        let frames = self.r_a0.shape()[0];
        let mut ok = self.r_p.shape()[0] == frames;
        if let Some(r_a) = &self.r_a {
            ok &= r_a.shape()[0] == frames;
        }
        if !ok {
            return Err(ModelError::ShapeMismatch(
                "representation streams disagree on frame count".into(),
            ));
        }
        for t in [Some(&self.r_a0), Some(&self.r_p), self.r_a.as_ref()].into_iter().flatten() {
            if t.iter().any(|v| !v.is_finite()) {
                return Err(ModelError::InvalidSignal("non-finite representation".into()));
            }
        }
        Ok(())
    }
}

struct TransformerLayer {
    norm1: LayerNorm,
    attn: MultiHeadAttention,
    norm2: LayerNorm,
    ff1: Linear,
    ff2: Linear,
}

impl TransformerLayer {
    fn new(rng: &mut ChaCha20Rng, name: &str, d: usize, heads: usize) -> Self {
        Self {
            norm1: LayerNorm::new(&format!("{name}.norm1"), d),
            attn: MultiHeadAttention::new(rng, &format!("{name}.attn"), d, heads),
            norm2: LayerNorm::new(&format!("{name}.norm2"), d),
            ff1: Linear::new(rng, &format!("{name}.ff1"), d, 4 * d, true),
            ff2: Linear::new(rng, &format!("{name}.ff2"), 4 * d, d, true),
        }
    }

    fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let h = self.norm1.forward(c, x);
        let h = self.attn.forward(c, &h);
        let x = c.add(x, &h);
        let h = self.norm2.forward(c, &x);
        let h = self.ff1.forward(c, &h);
        let h = c.gelu(&h);
        let h = self.ff2.forward(c, &h);
        c.add(&x, &h)
    }
}

impl HasParams for TransformerLayer {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.norm1.visit_params(out);
        self.attn.visit_params(out);
        self.norm2.visit_params(out);
        self.ff1.visit_params(out);
        self.ff2.visit_params(out);
    }
}

pub struct Encoder {
    pub config: EncoderConfig,
    convs: Vec<Conv1d>,
    proj: Linear,
    /// Shared learnable substitution vector for lost frames.
    pub masked_embedding: Param,
    layers: Vec<TransformerLayer>,
}

impl Encoder {
    pub fn new(config: &EncoderConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let c = config.conv_channels;
        let convs = CONV_PLAN
            .iter()
            .enumerate()
            .map(|(i, (k, s))| {
                let c_in = if i == 0 { 1 } else { c };
                Conv1d::new(&mut rng, &format!("encoder.conv{i}"), c_in, c, *k, *s, 1, Padding::Valid, true)
            })
            .collect();
        let proj = Linear::new(&mut rng, "encoder.proj", c, config.d_model, true);
        let masked_embedding = Param::new(
            "encoder.masked_embedding",
            gpse_nn::uniform_init(&mut rng, &[1, config.d_model], config.d_model),
        );
        let layers = (0..config.n_transformer_layers)
            .map(|i| TransformerLayer::new(&mut rng, &format!("encoder.layer{i}"), config.d_model, config.n_heads))
            .collect();
        Ok(Self { config: config.clone(), convs, proj, masked_embedding, layers })
    }

    fn positional_encoding(frames: usize, d: usize) -> Tensor {
        let mut pe = Array2::<f64>::zeros((frames, d));
        for t in 0..frames {
            for i in 0..d / 2 {
                let rate = 1.0 / 10000f64.powf(2.0 * i as f64 / d as f64);
                pe[(t, 2 * i)] = (t as f64 * rate).sin();
                pe[(t, 2 * i + 1)] = (t as f64 * rate).cos();
            }
        }
        pe.into_dyn().into_shared()
    }

    /// Generic forward: `samples [N]` (plus optional per-frame loss flags)
    /// to the two taps `([frames, d], [frames, d])`.
    pub fn forward<C: Ctx>(
        &self,
        c: &mut C,
        samples: &C::T,
        loss_flags: Option<&[bool]>,
    ) -> (C::T, C::T) {
        let n = c.shape(samples)[0];
        let frames = self.config.n_frames(n);
        // Zero-pad to a whole number of packet frames; the tail frame sees
        // only its own samples plus zeros.
        let padded_len = frames * self.config.frame_hop;
        let mut h = c.reshape(samples, &[1, 1, n]);
        if padded_len > n {
            h = c.pad_axis(&h, 2, 0, padded_len - n);
        }
        for conv in &self.convs {
            h = conv.forward(c, &h);
            h = c.gelu(&h);
        }
        debug_assert_eq!(c.shape(&h), vec![1, self.config.conv_channels, frames]);
        let h = c.permute(&h, &[0, 2, 1]);
        let h = c.reshape(&h, &[frames, self.config.conv_channels]);
        let mut h = self.proj.forward(c, &h); // CNN output, [frames, d]

        if let Some(flags) = loss_flags {
            assert_eq!(flags.len(), frames, "loss flags must match frame count");
            if flags.iter().any(|f| *f) {
                // Replace flagged CNN outputs with the masked embedding:
                // h = h * (1 - m) + embedding * m, m in {0, 1} per frame.
                let mask = from_vec(
                    &[frames, 1],
                    flags.iter().map(|f| if *f { 1.0 } else { 0.0 }).collect(),
                );
                let keep = from_vec(
                    &[frames, 1],
                    flags.iter().map(|f| if *f { 0.0 } else { 1.0 }).collect(),
                );
                let mask = c.constant(mask);
                let keep = c.constant(keep);
                let emb = c.param(&self.masked_embedding);
                let kept = c.mul(&h, &keep);
                let subst = c.mul(&emb, &mask);
                h = c.add(&kept, &subst);
            }
        }

        let pe = c.constant(Self::positional_encoding(frames, self.config.d_model));
        let mut h = c.add(&h, &pe);
        let mut tap_acoustic = None;
        for (i, layer) in self.layers.iter().enumerate() {
            h = layer.forward(c, &h);
            if i == 0 {
                tap_acoustic = Some(h.clone());
            }
        }
        (tap_acoustic.expect("at least one transformer layer"), h)
    }

    /// Inference entry point at 16 kHz.
    pub fn encode(
        &self,
        x: &AudioBuffer,
        loss_flags: Option<&[bool]>,
    ) -> Result<RepresentationBundle> {
        if x.sample_rate != ENCODER_RATE {
            return Err(ModelError::RateMismatch(x.sample_rate, ENCODER_RATE));
        }
        if x.is_empty() {
            return Err(ModelError::DegenerateInput("encode of empty buffer".into()));
        }
        x.check_finite()?;
        let frames = self.config.n_frames(x.len());
        if let Some(flags) = loss_flags {
            if flags.len() != frames {
                return Err(ModelError::ShapeMismatch(format!(
                    "{} loss flags for {} frames",
                    flags.len(),
                    frames
                )));
            }
        }
        let mut c = EvalCtx::new();
        let samples = c.constant(from_vec(&[x.len()], x.samples.clone()));
        let (r_a0, r_p) = self.forward(&mut c, &samples, loss_flags);
        Ok(RepresentationBundle { r_a0, r_p, r_a: None })
    }

    /// Mean-squared error over both taps, used for representation
    /// distillation against a frozen teacher.
    pub fn distill_loss<C: Ctx>(
        c: &mut C,
        student: (&C::T, &C::T),
        teacher: (&C::T, &C::T),
    ) -> C::T {
        let d0 = c.sub(student.0, teacher.0);
        let d0 = c.square(&d0);
        let m0 = c.mean_all(&d0);
        let d1 = c.sub(student.1, teacher.1);
        let d1 = c.square(&d1);
        let m1 = c.mean_all(&d1);
        c.add(&m0, &m1)
    }

    pub fn zero_masked_embedding_for_tests(&mut self) {
        self.masked_embedding.value = zeros(&[1, self.config.d_model]);
    }
}

impl HasParams for Encoder {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for conv in &mut self.convs {
            conv.visit_params(out);
        }
        self.proj.visit_params(out);
        out.push(&mut self.masked_embedding);
        for layer in &mut self.layers {
            layer.visit_params(out);
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn one_second_gives_50_frames() {
        let enc = Encoder::new(&EncoderConfig::toy(), 1).unwrap();
        let x = AudioBuffer::new(vec![0.01; 16000], 16000).unwrap();
        let b = enc.encode(&x, None).unwrap();
        assert_eq!(b.r_a0.shape(), &[50, 192]);
        assert_eq!(b.r_p.shape(), &[50, 192]);
        b.check_aligned().unwrap();
    }

    #[test]
    fn frame_count_is_ceil_for_odd_lengths() {
        let enc = Encoder::new(&EncoderConfig::toy(), 1).unwrap();
        for n in [320, 16001, 4801] {
            let x = AudioBuffer::new(vec![0.01; n], 16000).unwrap();
            let b = enc.encode(&x, None).unwrap();
            assert_eq!(b.r_a0.shape()[0], n.div_ceil(320), "len {n}");
        }
    }

    #[test]
    fn wrong_rate_rejected() {
        let enc = Encoder::new(&EncoderConfig::toy(), 1).unwrap();
        let x = AudioBuffer::new(vec![0.01; 8000], 8000).unwrap();
        assert!(matches!(enc.encode(&x, None), Err(ModelError::RateMismatch(8000, 16000))));
    }

    #[test]
    fn flag_length_mismatch_rejected() {
        let enc = Encoder::new(&EncoderConfig::toy(), 1).unwrap();
        let x = AudioBuffer::new(vec![0.01; 16000], 16000).unwrap();
        let flags = vec![false; 49];
        assert!(matches!(enc.encode(&x, Some(&flags)), Err(ModelError::ShapeMismatch(_))));
    }

    #[test]
    fn no_flags_equals_all_false_flags() {
        let enc = Encoder::new(&EncoderConfig::toy(), 2).unwrap();
        let x = AudioBuffer::new((0..8000).map(|i| (i as f64 * 0.01).sin() * 0.3).collect(), 16000)
            .unwrap();
        let a = enc.encode(&x, None).unwrap();
        let b = enc.encode(&x, Some(&[false; 25])).unwrap();
        assert_eq!(a.r_a0, b.r_a0);
        assert_eq!(a.r_p, b.r_p);
    }

    #[test]
    fn config_rejects_bad_heads() {
        let mut cfg = EncoderConfig::toy();
        cfg.n_heads = 5;
        assert!(Encoder::new(&cfg, 0).is_err());
    }
}
