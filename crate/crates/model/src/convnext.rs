//! ConvNeXt-1D backbone shared by the Adapter and the Vocoder, plus the
//! iSTFT synthesis head that turns acoustic representations back into a
//! 16 kHz waveform.

use gpse_dsp::{AudioBuffer, StftConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::{Ctx, EvalCtx};
use gpse_nn::layers::{Conv1d, LayerNorm, Linear, Padding};
use gpse_nn::param::{HasParams, Param};
use gpse_nn::specops;
use gpse_nn::tensor::{from_vec, Tensor};

use crate::error::{ModelError, Result};

/// Soft-clip range for the log-magnitude head: `log_mag = C * tanh(z / C)`.
pub const MAG_LOG_CLIP: f64 = 4.0;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ConvNeXtBackboneConfig {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub intermediate_dim: usize,
    pub has_istft_head: bool,
    pub istft_cfg: Option<StftConfigSer>,
}

/// Serializable mirror of [`StftConfig`] for config blocks.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct StftConfigSer {
    pub fft_size: usize,
    pub hop_size: usize,
}

impl From<StftConfigSer> for StftConfig {
    fn from(s: StftConfigSer) -> Self {
        StftConfig::new(s.fft_size, s.hop_size)
    }
}

impl From<StftConfig> for StftConfigSer {
    fn from(c: StftConfig) -> Self {
        Self { fft_size: c.fft_size, hop_size: c.hop_size }
    }
}

impl ConvNeXtBackboneConfig {
    pub fn toy_adapter(d_model: usize) -> Self {
        Self {
            input_dim: d_model,
            hidden_dim: 192,
            n_blocks: 4,
            intermediate_dim: 576,
            has_istft_head: false,
            istft_cfg: None,
        }
    }

    pub fn toy_vocoder(d_model: usize) -> Self {
        Self {
            input_dim: d_model,
            hidden_dim: 192,
            n_blocks: 4,
            intermediate_dim: 576,
            has_istft_head: true,
            istft_cfg: Some(StftConfig::canonical_16k().into()),
        }
    }

    /// Reference full-scale dimensions: hidden 1024, 12 blocks,
    /// intermediate 3072, FFT 1280 / hop 320 on the head.
    pub fn full_size(input_dim: usize, with_head: bool) -> Self {
        Self {
            input_dim,
            hidden_dim: 1024,
            n_blocks: 12,
            intermediate_dim: 3072,
            has_istft_head: with_head,
            istft_cfg: with_head.then(|| StftConfig::canonical_16k().into()),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.has_istft_head && self.istft_cfg.is_none() {
            return Err(ModelError::ConfigError(
                "iSTFT head requires an STFT config".into(),
            ));
        }
        if self.input_dim == 0 || self.hidden_dim == 0 || self.intermediate_dim == 0 {
            return Err(ModelError::ConfigError("zero model dimension".into()));
        }
        Ok(())
    }
}

struct ConvNeXtBlock {
    dwconv: Conv1d,
    norm: LayerNorm,
    pw1: Linear,
    pw2: Linear,
    layer_scale: Param,
}

impl ConvNeXtBlock {
    fn new(rng: &mut ChaCha20Rng, name: &str, dim: usize, intermediate: usize) -> Self {
        Self {
            dwconv: Conv1d::new(rng, &format!("{name}.dwconv"), dim, dim, 7, 1, dim, Padding::Same, true),
            norm: LayerNorm::new(&format!("{name}.norm"), dim),
            pw1: Linear::new(rng, &format!("{name}.pw1"), dim, intermediate, true),
            pw2: Linear::new(rng, &format!("{name}.pw2"), intermediate, dim, true),
            layer_scale: Param::new(format!("{name}.layer_scale"), from_vec(&[dim], vec![0.1; dim])),
        }
    }

    /// `x [frames, dim] -> [frames, dim]`.
    fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let frames = c.shape(x)[0];
        let dim = c.shape(x)[1];
        let t = c.permute(x, &[1, 0]);
        let t = c.reshape(&t, &[1, dim, frames]);
        let t = self.dwconv.forward(c, &t);
        let t = c.reshape(&t, &[dim, frames]);
        let t = c.permute(&t, &[1, 0]);
        let t = self.norm.forward(c, &t);
        let t = self.pw1.forward(c, &t);
        let t = c.gelu(&t);
        let t = self.pw2.forward(c, &t);
        let scale = c.param(&self.layer_scale);
        let t = c.mul(&t, &scale);
        c.add(x, &t)
    }
}

impl HasParams for ConvNeXtBlock {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.dwconv.visit_params(out);
        self.norm.visit_params(out);
        self.pw1.visit_params(out);
        self.pw2.visit_params(out);
        out.push(&mut self.layer_scale);
    }
}

pub struct ConvNeXtBackbone {
    pub config: ConvNeXtBackboneConfig,
    embed: Conv1d,
    embed_norm: LayerNorm,
    blocks: Vec<ConvNeXtBlock>,
    final_norm: LayerNorm,
}

impl ConvNeXtBackbone {
    pub fn new(config: &ConvNeXtBackboneConfig, name: &str, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let embed = Conv1d::new(
            &mut rng,
            &format!("{name}.embed"),
            config.input_dim,
            config.hidden_dim,
            7,
            1,
            1,
            Padding::Same,
            true,
        );
        let embed_norm = LayerNorm::new(&format!("{name}.embed_norm"), config.hidden_dim);
        let blocks = (0..config.n_blocks)
            .map(|i| {
                ConvNeXtBlock::new(
                    &mut rng,
                    &format!("{name}.block{i}"),
                    config.hidden_dim,
                    config.intermediate_dim,
                )
            })
            .collect();
        let final_norm = LayerNorm::new(&format!("{name}.final_norm"), config.hidden_dim);
        Ok(Self { config: config.clone(), embed, embed_norm, blocks, final_norm })
    }

    /// `x [frames, input_dim] -> [frames, hidden_dim]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let frames = c.shape(x)[0];
        let d_in = c.shape(x)[1];
        let t = c.permute(x, &[1, 0]);
        let t = c.reshape(&t, &[1, d_in, frames]);
        let t = self.embed.forward(c, &t);
        let t = c.reshape(&t, &[self.config.hidden_dim, frames]);
        let mut h = c.permute(&t, &[1, 0]);
        h = self.embed_norm.forward(c, &h);
        for block in &self.blocks {
            h = block.forward(c, &h);
        }
        self.final_norm.forward(c, &h)
    }
}

impl HasParams for ConvNeXtBackbone {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.embed.visit_params(out);
        self.embed_norm.visit_params(out);
        for b in &mut self.blocks {
            b.visit_params(out);
        }
        self.final_norm.visit_params(out);
    }
}

/// Maps enhanced phonetic representations to enhanced acoustic ones,
/// conditioned on the noisy acoustic stream by element-wise addition.
pub struct Adapter {
    pub backbone: ConvNeXtBackbone,
    pub out_proj: Linear,
    pub d_model: usize,
}

impl Adapter {
    pub fn new(config: &ConvNeXtBackboneConfig, d_model: usize, seed: u64) -> Result<Self> {
        if config.has_istft_head {
            return Err(ModelError::ConfigError("adapter backbone excludes the iSTFT head".into()));
        }
        let backbone = ConvNeXtBackbone::new(config, "adapter", seed)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0xADA7);
        let out_proj = Linear::new(&mut rng, "adapter.out_proj", config.hidden_dim, d_model, true);
        Ok(Self { backbone, out_proj, d_model })
    }

    /// `R_A = OutProj(Backbone(R_P + R_A0))`; shapes `[frames, d_model]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, r_p: &C::T, r_a0: &C::T) -> C::T {
        let fused = c.add(r_p, r_a0);
        let h = self.backbone.forward(c, &fused);
        self.out_proj.forward(c, &h)
    }

    pub fn adapt(&self, r_p: &Tensor, r_a0: &Tensor) -> Result<Tensor> {
        if r_p.shape() != r_a0.shape() {
            return Err(ModelError::ShapeMismatch(format!(
                "R_P {:?} vs R_A0 {:?}",
                r_p.shape(),
                r_a0.shape()
            )));
        }
        let mut c = EvalCtx::new();
        Ok(self.forward(&mut c, r_p, r_a0))
    }
}

impl HasParams for Adapter {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.backbone.visit_params(out);
        self.out_proj.visit_params(out);
    }
}

/// Reconstructs the 16 kHz waveform from acoustic representations through a
/// magnitude/phase iSTFT head.
pub struct Vocoder {
    pub backbone: ConvNeXtBackbone,
    pub head: Linear,
    pub istft_cfg: StftConfig,
}

impl Vocoder {
    pub fn new(config: &ConvNeXtBackboneConfig, seed: u64) -> Result<Self> {
        if !config.has_istft_head {
            return Err(ModelError::ConfigError("vocoder requires the iSTFT head".into()));
        }
        let istft_cfg: StftConfig = config.istft_cfg.expect("validated").into();
        istft_cfg.validate().map_err(ModelError::Dsp)?;
        let backbone = ConvNeXtBackbone::new(config, "vocoder", seed)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed ^ 0x70C0);
        let bins = istft_cfg.n_bins();
        let head = Linear::new(&mut rng, "vocoder.head", config.hidden_dim, 3 * bins, true);
        Ok(Self { backbone, head, istft_cfg })
    }

    /// `R_A [frames, d] -> waveform [frames * hop]`.
    ///
    /// The head emits a soft-clipped log magnitude and a raw (cos, sin)
    /// direction pair per bin; the synthesized phase is the angle
    /// `atan2(sin_raw, cos_raw)`, realized as the normalized pair so an
    /// all-zero head yields exact silence.
    pub fn forward<C: Ctx>(&self, c: &mut C, r_a: &C::T) -> C::T {
        let frames = c.shape(r_a)[0];
        let bins = self.istft_cfg.n_bins();
        let h = self.backbone.forward(c, r_a);
        let head = self.head.forward(c, &h); // [frames, 3*bins]
        let mag_logit = c.slice_axis(&head, 1, 0, bins);
        let cos_raw = c.slice_axis(&head, 1, bins, 2 * bins);
        let sin_raw = c.slice_axis(&head, 1, 2 * bins, 3 * bins);

        let z = c.scale(&mag_logit, 1.0 / MAG_LOG_CLIP);
        let z = c.tanh(&z);
        let log_mag = c.scale(&z, MAG_LOG_CLIP);
        let mag = c.exp(&log_mag);

        let c2 = c.square(&cos_raw);
        let s2 = c.square(&sin_raw);
        let r2 = c.add(&c2, &s2);
        let r2 = c.add_scalar(&r2, 1e-16);
        let r = c.sqrt(&r2);
        let cos_p = c.div(&cos_raw, &r);
        let sin_p = c.div(&sin_raw, &r);

        let re = c.mul(&mag, &cos_p);
        let im = c.mul(&mag, &sin_p);
        let re = c.reshape(&re, &[frames, bins, 1]);
        let im = c.reshape(&im, &[frames, bins, 1]);
        let packed = c.concat(2, &[re, im]);
        specops::istft_frames(c, &packed, &self.istft_cfg)
    }

    pub fn vocode(&self, r_a: &Tensor) -> Result<AudioBuffer> {
        if r_a.iter().any(|v| !v.is_finite()) {
            return Err(ModelError::InvalidSignal("non-finite representation".into()));
        }
        let mut c = EvalCtx::new();
        let wave = self.forward(&mut c, r_a);
        AudioBuffer::new(wave.iter().copied().collect(), crate::encoder::ENCODER_RATE)
            .map_err(ModelError::Dsp)
    }

    pub fn zero_head_for_tests(&mut self) {
        let bins = self.istft_cfg.n_bins();
        self.head = Linear::new_zeroed("vocoder.head", self.backbone.config.hidden_dim, 3 * bins, true);
    }
}

impl HasParams for Vocoder {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.backbone.visit_params(out);
        self.head.visit_params(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gpse_nn::tensor::zeros;
    use rand::Rng;

    fn rand_t(shape: &[usize], seed: u64) -> Tensor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        from_vec(shape, (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect())
    }

    #[test]
    fn adapter_with_zero_conditioning_equals_backbone_of_rp() {
        let cfg = ConvNeXtBackboneConfig::toy_adapter(32);
        let adapter = Adapter::new(&cfg, 32, 3).unwrap();
        let r_p = rand_t(&[10, 32], 4);
        let zero = zeros(&[10, 32]);
        let a = adapter.adapt(&r_p, &zero).unwrap();
        // R_P + 0 is bitwise R_P, so the whole pipeline is identical.
        let mut c = EvalCtx::new();
        let h = adapter.backbone.forward(&mut c, &r_p);
        let b = adapter.out_proj.forward(&mut c, &h);
        assert_eq!(a, b);
    }

    #[test]
    fn adapter_input_stage_is_commutative() {
        let cfg = ConvNeXtBackboneConfig::toy_adapter(16);
        let adapter = Adapter::new(&cfg, 16, 5).unwrap();
        let a = rand_t(&[6, 16], 6);
        let b = rand_t(&[6, 16], 7);
        assert_eq!(adapter.adapt(&a, &b).unwrap(), adapter.adapt(&b, &a).unwrap());
    }

    fn int_t(shape: &[usize], seed: u64, span: i64) -> Tensor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let n: usize = shape.iter().product();
        from_vec(shape, (0..n).map(|_| rng.gen_range(-span..=span) as f64).collect())
    }

    #[test]
    fn adapter_conditioning_is_exactly_additive() {
        // Integer-valued tensors make every addition exact, so the shifted
        // pair (R_P + d, R_A0 - d) fuses to the bit-identical sum. Only the
        // sum may enter the network.
        let cfg = ConvNeXtBackboneConfig::toy_adapter(16);
        let adapter = Adapter::new(&cfg, 16, 8).unwrap();
        for trial in 0..5u64 {
            let r_p = int_t(&[6, 16], 90 + trial, 8);
            let r_a0 = int_t(&[6, 16], 190 + trial, 8);
            let delta = int_t(&[6, 16], 290 + trial, 8);
            let shifted_p = (&r_p.view() + &delta.view()).into_shared();
            let shifted_a0 = (&r_a0.view() - &delta.view()).into_shared();
            let base = adapter.adapt(&r_p, &r_a0).unwrap();
            let shifted = adapter.adapt(&shifted_p, &shifted_a0).unwrap();
            assert_eq!(base, shifted, "trial {trial}");
        }
    }

    #[test]
    fn vocoder_emits_320_samples_per_frame() {
        let cfg = ConvNeXtBackboneConfig::toy_vocoder(24);
        let voc = Vocoder::new(&cfg, 12).unwrap();
        let r_a = rand_t(&[50, 24], 13);
        let y = voc.vocode(&r_a).unwrap();
        assert_eq!(y.len(), 16000);
        assert_eq!(y.sample_rate, 16000);
    }

    #[test]
    fn zeroed_head_is_silent() {
        let cfg = ConvNeXtBackboneConfig::toy_vocoder(24);
        let mut voc = Vocoder::new(&cfg, 14).unwrap();
        voc.zero_head_for_tests();
        let y = voc.vocode(&zeros(&[10, 24])).unwrap();
        assert!(y.samples.iter().all(|s| *s == 0.0));
        // Even on non-zero representations the zeroed head stays silent.
        let y = voc.vocode(&rand_t(&[10, 24], 15)).unwrap();
        assert!(y.samples.iter().all(|s| *s == 0.0));
    }

    #[test]
    fn random_vocoder_output_is_bounded() {
        // Derived bound: per-frame synthesis amplitude is at most
        // exp(MAG_LOG_CLIP); overlap-add divides by the window-square
        // envelope, so |y| <= exp(C) * max_n sum_f w[n - f*hop] / env[n].
        let cfg = ConvNeXtBackboneConfig::toy_vocoder(24);
        let voc = Vocoder::new(&cfg, 16).unwrap();
        let istft = StftConfig::canonical_16k();
        let frames = 20;
        let w = istft.window_values();
        let env = gpse_dsp::ola_envelope(frames, &istft);
        let mut worst = 0.0f64;
        let pad = istft.fft_size / 2;
        for n in pad..pad + frames * istft.hop_size {
            let mut wsum = 0.0;
            for f in 0..frames {
                let start = f * istft.hop_size;
                if n >= start && n - start < istft.fft_size {
                    wsum += w[n - start];
                }
            }
            worst = worst.max(wsum / env[n].max(1e-12));
        }
        let bound = MAG_LOG_CLIP.exp() * worst;
        let y = voc.vocode(&rand_t(&[frames, 24], 17)).unwrap();
        assert!(y.peak() <= bound, "peak {} above bound {}", y.peak(), bound);
        assert!(y.samples.iter().all(|s| s.is_finite()));
    }

    #[test]
    fn full_size_config_constructs() {
        ConvNeXtBackboneConfig::full_size(1024, true).validate().unwrap();
        ConvNeXtBackboneConfig::full_size(1024, false).validate().unwrap();
    }
}
