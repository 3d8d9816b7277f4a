//! Fusion and bandwidth extension: both branch waveforms are upsampled to
//! 48 kHz, stacked as input channels on a shared STFT grid, processed per
//! subband by a weight-shared dual-path core, and synthesized as a single
//! 48 kHz waveform that is finally resampled to the caller's original rate.

use gpse_dsp::{resample, AudioBuffer, StftConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::{Ctx, EvalCtx};
use gpse_nn::layers::{LayerNorm, Linear};
use gpse_nn::param::{HasParams, Param};
use gpse_nn::specops;
use gpse_nn::tensor::from_vec;

use crate::convnext::StftConfigSer;
use crate::dualpath::{DualPathConfig, DualPathCore};
use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PostNetConfig {
    pub n_subbands: usize,
    pub core: DualPathConfig,
    /// Internal 48 kHz analysis grid. The FFT size is chosen so the bin
    /// count (fft/2 + 1) splits evenly into subbands.
    pub stft: StftConfigSer,
    pub in_rate: u32,
    pub out_rate: u32,
}

impl Default for PostNetConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl PostNetConfig {
    pub fn toy() -> Self {
        Self {
            n_subbands: 4,
            core: DualPathConfig {
                n_blocks: 1,
                lstm_hidden: 48,
                emb_dim: 12,
                attn_heads: 2,
                attn_qk_dim: 4,
            },
            stft: StftConfigSer { fft_size: 1022, hop_size: 256 },
            in_rate: 16000,
            out_rate: 48000,
        }
    }

    /// Large-configuration stand-in; construct-and-forward only at desk scale.
    pub fn full_size() -> Self {
        Self {
            n_subbands: 4,
            core: DualPathConfig {
                n_blocks: 4,
                lstm_hidden: 256,
                emb_dim: 48,
                attn_heads: 4,
                attn_qk_dim: 4,
            },
            stft: StftConfigSer { fft_size: 1022, hop_size: 256 },
            in_rate: 16000,
            out_rate: 48000,
        }
    }

    pub fn stft_config(&self) -> StftConfig {
        self.stft.into()
    }

    pub fn validate(&self) -> Result<()> {
        if self.out_rate != 3 * self.in_rate {
            return Err(ModelError::ConfigError(format!(
                "out_rate {} must be 3x in_rate {}",
                self.out_rate, self.in_rate
            )));
        }
        let bins = self.stft.fft_size / 2 + 1;
        if self.n_subbands == 0 || bins % self.n_subbands != 0 {
            return Err(ModelError::ConfigError(format!(
                "{} subbands must divide the {} analysis bins",
                self.n_subbands, bins
            )));
        }
        self.stft_config().validate().map_err(ModelError::Dsp)?;
        self.core.validate()
    }
}

/// `bins [T, B, C] -> [S, T, B/S, C]`: uniform partition of the bin axis.
pub fn split_subbands<C: Ctx>(c: &mut C, bins: &C::T, n_subbands: usize) -> C::T {
    let shape = c.shape(bins);
    let (t, b, ch) = (shape[0], shape[1], shape[2]);
    let per = b / n_subbands;
    let r = c.reshape(bins, &[t, n_subbands, per, ch]);
    c.permute(&r, &[1, 0, 2, 3])
}

/// Inverse of [`split_subbands`].
pub fn merge_subbands<C: Ctx>(c: &mut C, sb: &C::T) -> C::T {
    let shape = c.shape(sb);
    let (s, t, per, ch) = (shape[0], shape[1], shape[2], shape[3]);
    let r = c.permute(sb, &[1, 0, 2, 3]);
    c.reshape(&r, &[t, s * per, ch])
}

pub struct PostNet {
    pub config: PostNetConfig,
    embed: Linear,
    embed_norm: LayerNorm,
    core: DualPathCore,
    out_norm: LayerNorm,
    /// Zero-initialized; with the mean-input residual the untrained net
    /// passes the branch average through.
    pub out_proj: Linear,
}

impl PostNet {
    pub fn new(config: &PostNetConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = config.core.emb_dim;
        Ok(Self {
            config: config.clone(),
            embed: Linear::new(&mut rng, "postnet.embed", 4, d, true),
            embed_norm: LayerNorm::new("postnet.embed_norm", d),
            core: DualPathCore::new(&config.core, "postnet", &mut rng)?,
            out_norm: LayerNorm::new("postnet.out_norm", d),
            out_proj: Linear::new_zeroed("postnet.out_proj", d, 2, true),
        })
    }

    /// Both inputs are 48 kHz waveform nodes of equal length; returns the
    /// fused 48 kHz waveform node of the same length.
    pub fn forward<C: Ctx>(&self, c: &mut C, gen48: &C::T, pred48: &C::T) -> C::T {
        let n = c.shape(gen48)[0];
        let cfg = self.config.stft_config();
        let bins_g = specops::stft_frames(c, gen48, &cfg); // [T, B, 2]
        let bins_p = specops::stft_frames(c, pred48, &cfg);
        let feats = c.concat(2, &[bins_g.clone(), bins_p.clone()]); // [T, B, 4]

        let sb = split_subbands(c, &feats, self.config.n_subbands); // [S, T, F, 4]
        let h = self.embed.forward(c, &sb);
        let h = self.embed_norm.forward(c, &h);
        let h = self.core.forward(c, &h);
        let h = self.out_norm.forward(c, &h);
        let out = self.out_proj.forward(c, &h); // [S, T, F, 2]
        let out = merge_subbands(c, &out); // [T, B, 2]

        let sum = c.add(&bins_g, &bins_p);
        let avg = c.scale(&sum, 0.5);
        let out_bins = c.add(&out, &avg);
        let wave = specops::istft_frames(c, &out_bins, &cfg);
        c.slice_axis(&wave, 0, 0, n)
    }

    /// Fuses the two 16 kHz branch outputs into a 48 kHz waveform of exactly
    /// three times the input length.
    pub fn fuse_and_extend(&self, gen16: &AudioBuffer, pred16: &AudioBuffer) -> Result<AudioBuffer> {
        if gen16.sample_rate != self.config.in_rate || pred16.sample_rate != self.config.in_rate {
            return Err(ModelError::ShapeMismatch(format!(
                "branch rates {} / {} Hz, expected {}",
                gen16.sample_rate, pred16.sample_rate, self.config.in_rate
            )));
        }
        if gen16.len() != pred16.len() {
            return Err(ModelError::ShapeMismatch(format!(
                "branch lengths differ: {} vs {}",
                gen16.len(),
                pred16.len()
            )));
        }
        if gen16.is_empty() {
            return Err(ModelError::DegenerateInput("empty branch signals".into()));
        }
        let g48 = resample(gen16, self.config.out_rate)?;
        let p48 = resample(pred16, self.config.out_rate)?;
        let mut c = EvalCtx::new();
        let g = c.constant(from_vec(&[g48.len()], g48.samples));
        let p = c.constant(from_vec(&[p48.len()], p48.samples));
        let y = self.forward(&mut c, &g, &p);
        AudioBuffer::new(y.iter().copied().collect(), self.config.out_rate).map_err(ModelError::Dsp)
    }
}

impl HasParams for PostNet {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.embed.visit_params(out);
        self.embed_norm.visit_params(out);
        self.core.visit_params(out);
        self.out_norm.visit_params(out);
        self.out_proj.visit_params(out);
    }
}

/// Downsamples the 48 kHz output to the original input rate; passthrough at
/// 48 kHz.
pub fn finalize(y48: &AudioBuffer, original_rate: u32) -> Result<AudioBuffer> {
    if original_rate > 48000 {
        return Err(ModelError::UnsupportedRate(original_rate));
    }
    if y48.sample_rate != 48000 {
        return Err(ModelError::RateMismatch(y48.sample_rate, 48000));
    }
    resample(y48, original_rate).map_err(ModelError::Dsp)
}
