//! The predictive branch: complex spectrogram in, dual-path blocks, direct
//! complex-spectrum output with a residual connection from the input
//! spectrum, overlap-add synthesis back to the waveform.

use gpse_dsp::{AudioBuffer, StftConfig};
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
use crate::encoder::ENCODER_RATE;
use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct PredictorConfig {
    pub core: DualPathConfig,
    pub stft: StftConfigSer,
}

impl Default for PredictorConfig {
    fn default() -> Self {
        Self::toy()
    }
}

impl PredictorConfig {
    pub fn toy() -> Self {
        Self {
            core: DualPathConfig {
                n_blocks: 2,
                lstm_hidden: 64,
                emb_dim: 16,
                attn_heads: 2,
                attn_qk_dim: 4,
            },
            stft: StftConfigSer { fft_size: 512, hop_size: 128 },
        }
    }

    /// Large-configuration stand-in; construct-and-forward only at desk scale.
    pub fn full_size() -> Self {
        Self {
            core: DualPathConfig {
                n_blocks: 6,
                lstm_hidden: 256,
                emb_dim: 64,
                attn_heads: 4,
                attn_qk_dim: 4,
            },
            stft: StftConfigSer { fft_size: 512, hop_size: 128 },
        }
    }

    pub fn stft_config(&self) -> StftConfig {
        self.stft.into()
    }
}

pub struct Predictor {
    pub config: PredictorConfig,
    embed: Linear,
    embed_norm: LayerNorm,
    core: DualPathCore,
    out_norm: LayerNorm,
    /// Zero-initialized so the untrained predictor is an identity in the
    /// spectrum domain (residual passthrough).
    pub out_proj: Linear,
}

impl Predictor {
    pub fn new(config: &PredictorConfig, seed: u64) -> Result<Self> {
        config.stft_config().validate().map_err(ModelError::Dsp)?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let d = config.core.emb_dim;
        let embed = Linear::new(&mut rng, "predictor.embed", 2, d, true);
        let embed_norm = LayerNorm::new("predictor.embed_norm", d);
        let core = DualPathCore::new(&config.core, "predictor", &mut rng)?;
        let out_norm = LayerNorm::new("predictor.out_norm", d);
        let out_proj = Linear::new_zeroed("predictor.out_proj", d, 2, true);
        Ok(Self { config: config.clone(), embed, embed_norm, core, out_norm, out_proj })
    }

    /// `x [N]` waveform node to enhanced waveform node of the same length.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let n = c.shape(x)[0];
        let cfg = self.config.stft_config();
        let bins = specops::stft_frames(c, x, &cfg); // [T, F, 2]
        let shape = c.shape(&bins);
        let (t, f) = (shape[0], shape[1]);

        let h = self.embed.forward(c, &bins);
        let h = self.embed_norm.forward(c, &h);
        let h = c.reshape(&h, &[1, t, f, self.config.core.emb_dim]);
        let h = self.core.forward(c, &h);
        let h = c.reshape(&h, &[t, f, self.config.core.emb_dim]);
        let h = self.out_norm.forward(c, &h);
        let out = self.out_proj.forward(c, &h); // [T, F, 2]
        let out_bins = c.add(&out, &bins);
        let wave = specops::istft_frames(c, &out_bins, &cfg); // [T * hop]
        c.slice_axis(&wave, 0, 0, n)
    }

    /// Inference at 16 kHz; output length equals input length.
    pub fn predict(&self, x: &AudioBuffer) -> Result<AudioBuffer> {
        if x.sample_rate != ENCODER_RATE {
            return Err(ModelError::RateMismatch(x.sample_rate, ENCODER_RATE));
        }
        let hop = self.config.stft.hop_size;
        if x.len() < hop {
            return Err(ModelError::DegenerateInput(format!(
                "input of {} samples is shorter than one frame ({hop})",
                x.len()
            )));
        }
        x.check_finite()?;
        let mut c = EvalCtx::new();
        let xs = c.constant(from_vec(&[x.len()], x.samples.clone()));
        let y = self.forward(&mut c, &xs);
        AudioBuffer::new(y.iter().copied().collect(), ENCODER_RATE).map_err(ModelError::Dsp)
    }
}

impl HasParams for Predictor {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.embed.visit_params(out);
        self.embed_norm.visit_params(out);
        self.core.visit_params(out);
        self.out_norm.visit_params(out);
        self.out_proj.visit_params(out);
    }
}
