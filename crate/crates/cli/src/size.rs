//! Parameter and MACs accounting. Parameters are the exact sum over named
//! tensors of each constructed component. MACs are analytic multiply-
//! accumulate counts for one second of audio (16 kHz inputs, 48 kHz inside
//! the fusion stage), counting conv, linear, attention, and recurrent cells
//! only; normalizations, activations, and FFTs are excluded. The published
//! full-scale reference totals are printed for manual comparison and never
//! asserted.

use gpse_model::{
    Adapter, ConvNeXtBackboneConfig, DualPathConfig, Encoder, EncoderConfig, PostNet,
    PostNetConfig, Predictor, PredictorConfig, Vocoder,
};
use gpse_nn::HasParams;

use crate::config::RunConfig;
use crate::error::Result;

/// Published totals for the full-scale system, for side-by-side display.
pub const REFERENCE_FULL_PARAMS_M: f64 = 567.76;
pub const REFERENCE_FULL_GMACS: f64 = 472.84;

pub fn linear_macs(d_in: usize, d_out: usize, positions: usize) -> u64 {
    (d_in * d_out * positions) as u64
}

pub fn conv1d_macs(c_in: usize, c_out: usize, k: usize, groups: usize, t_out: usize) -> u64 {
    (t_out * c_out * (c_in / groups) * k) as u64
}

/// Gate MACs per LSTM: `steps * batch * 4H * (d_in + H)`.
pub fn lstm_macs(d_in: usize, hidden: usize, steps: usize, batch: usize) -> u64 {
    (steps * batch * 4 * hidden * (d_in + hidden)) as u64
}

#[derive(Debug, Clone)]
pub struct ComponentSize {
    pub name: &'static str,
    pub params: usize,
    pub gmacs: f64,
}

#[derive(Debug, Clone)]
pub struct SizeReport {
    pub components: Vec<ComponentSize>,
}

impl SizeReport {
    pub fn total_params(&self) -> usize {
        self.components.iter().map(|c| c.params).sum()
    }

    pub fn total_gmacs(&self) -> f64 {
        self.components.iter().map(|c| c.gmacs).sum()
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("{:<12} {:>14} {:>12}\n", "component", "params", "GMACs/s"));
        for c in &self.components {
            out.push_str(&format!("{:<12} {:>14} {:>12.3}\n", c.name, c.params, c.gmacs));
        }
        out.push_str(&format!(
            "{:<12} {:>14} {:>12.3}\n",
            "total",
            self.total_params(),
            self.total_gmacs()
        ));
        out.push_str(&format!(
            "reference full-scale totals (manual comparison only): {:.2}M params, {:.2} GMACs/s\n",
            REFERENCE_FULL_PARAMS_M, REFERENCE_FULL_GMACS
        ));
        out.push_str(
            "convention: conv/linear/attention/recurrent MACs only, per second of input audio\n",
        );
        out
    }
}

/// The CNN plan mirrored from the encoder (kernel = stride).
const ENCODER_CONV_PLAN: [(usize, usize); 5] = [(5, 5), (4, 4), (4, 4), (2, 2), (2, 2)];

fn encoder_macs(cfg: &EncoderConfig, samples: usize) -> u64 {
    let frames = cfg.n_frames(samples);
    let mut macs = 0u64;
    let mut t = samples;
    let c = cfg.conv_channels;
    for (i, (k, s)) in ENCODER_CONV_PLAN.iter().enumerate() {
        let c_in = if i == 0 { 1 } else { c };
        t /= s;
        macs += conv1d_macs(c_in, c, *k, 1, t);
    }
    macs += linear_macs(c, cfg.d_model, frames);
    let d = cfg.d_model;
    let per_layer = linear_macs(d, d, frames) * 4 // q, k, v, o
        + (frames * frames * d) as u64 * 2               // scores + mix
        + linear_macs(d, 4 * d, frames)
        + linear_macs(4 * d, d, frames);
    macs + per_layer * cfg.n_transformer_layers as u64
}

fn backbone_macs(cfg: &ConvNeXtBackboneConfig, frames: usize) -> u64 {
    let h = cfg.hidden_dim;
    let mut macs = conv1d_macs(cfg.input_dim, h, 7, 1, frames);
    let per_block = conv1d_macs(h, h, 7, h, frames)
        + linear_macs(h, cfg.intermediate_dim, frames)
        + linear_macs(cfg.intermediate_dim, h, frames);
    macs += per_block * cfg.n_blocks as u64;
    macs
}

fn dualpath_macs(cfg: &DualPathConfig, subbands: usize, t: usize, f: usize) -> u64 {
    let d = cfg.emb_dim;
    let h = cfg.lstm_hidden;
    let dv = d / cfg.attn_heads;
    let per_block = 2 * lstm_macs(d, h, f, subbands * t)      // freq path, both directions
        + linear_macs(2 * h, d, subbands * t * f)
        + 2 * lstm_macs(d, h, t, subbands * f)                // time path
        + linear_macs(2 * h, d, subbands * t * f)
        + cfg.attn_heads as u64
            * (2 * linear_macs(d, cfg.attn_qk_dim, subbands * t * f)
                + linear_macs(d, dv, subbands * t * f)
                + (subbands * t * t * f * cfg.attn_qk_dim) as u64
                + (subbands * t * t * f * dv) as u64)
        + linear_macs(d, d, subbands * t * f);
    per_block * cfg.n_blocks as u64
}

fn predictor_macs(cfg: &PredictorConfig, samples: usize) -> u64 {
    let stft = cfg.stft_config();
    let t = stft.frame_count(samples);
    let f = stft.n_bins();
    let d = cfg.core.emb_dim;
    linear_macs(2, d, t * f) + dualpath_macs(&cfg.core, 1, t, f) + linear_macs(d, 2, t * f)
}

fn postnet_macs(cfg: &PostNetConfig, samples48: usize) -> u64 {
    let stft = cfg.stft_config();
    let t = stft.frame_count(samples48);
    let bins = stft.n_bins();
    let s = cfg.n_subbands;
    let f = bins / s;
    let d = cfg.core.emb_dim;
    // Two 48 kHz analysis transforms feed 4 features per bin.
    linear_macs(4, d, s * t * f) + dualpath_macs(&cfg.core, s, t, f) + linear_macs(d, 2, s * t * f)
}

/// Builds every component at the configured scale and accounts it.
pub fn count_params_and_macs(cfg: &RunConfig) -> Result<SizeReport> {
    let enc_cfg = cfg.encoder_config();
    let mut components = Vec::new();

    {
        let mut m = Encoder::new(&enc_cfg, 0)?;
        components.push(ComponentSize {
            name: "encoder",
            params: m.param_count(),
            gmacs: encoder_macs(&enc_cfg, 16000) as f64 / 1e9,
        });
    }
    {
        let a_cfg = cfg.adapter_config();
        let mut m = Adapter::new(&a_cfg, enc_cfg.d_model, 0)?;
        let frames = enc_cfg.n_frames(16000);
        let macs = backbone_macs(&a_cfg, frames)
            + linear_macs(a_cfg.hidden_dim, enc_cfg.d_model, frames);
        components.push(ComponentSize {
            name: "adapter",
            params: m.param_count(),
            gmacs: macs as f64 / 1e9,
        });
    }
    {
        let v_cfg = cfg.vocoder_config();
        let mut m = Vocoder::new(&v_cfg, 0)?;
        let frames = enc_cfg.n_frames(16000);
        let bins = gpse_dsp::StftConfig::canonical_16k().n_bins();
        let macs =
            backbone_macs(&v_cfg, frames) + linear_macs(v_cfg.hidden_dim, 3 * bins, frames);
        components.push(ComponentSize {
            name: "vocoder",
            params: m.param_count(),
            gmacs: macs as f64 / 1e9,
        });
    }
    {
        let p_cfg = cfg.predictor_config();
        let mut m = Predictor::new(&p_cfg, 0)?;
        components.push(ComponentSize {
            name: "predictor",
            params: m.param_count(),
            gmacs: predictor_macs(&p_cfg, 16000) as f64 / 1e9,
        });
    }
    {
        let pn_cfg = cfg.postnet_config();
        let mut m = PostNet::new(&pn_cfg, 0)?;
        components.push(ComponentSize {
            name: "postnet",
            params: m.param_count(),
            gmacs: postnet_macs(&pn_cfg, 48000) as f64 / 1e9,
        });
    }
    Ok(SizeReport { components })
}
