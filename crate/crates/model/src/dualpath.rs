//! Dual-path time-frequency core: per-frame recurrence across frequency,
//! per-bin recurrence across time, and frame-level self-attention. The
//! predictor runs it on the full band; the fusion stage runs it per subband
//! with shared weights via the leading batch axis.

use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::Ctx;
use gpse_nn::layers::{BiLstm, LayerNorm, Linear};
use gpse_nn::param::{HasParams, Param};

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct DualPathConfig {
    pub n_blocks: usize,
    pub lstm_hidden: usize,
    pub emb_dim: usize,
    pub attn_heads: usize,
    pub attn_qk_dim: usize,
}

impl DualPathConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_blocks == 0 || self.lstm_hidden == 0 || self.emb_dim == 0 {
            return Err(ModelError::ConfigError("zero dual-path dimension".into()));
        }
        if self.emb_dim % self.attn_heads != 0 {
            return Err(ModelError::ConfigError(format!(
                "emb_dim {} must divide by attn_heads {}",
                self.emb_dim, self.attn_heads
            )));
        }
        Ok(())
    }
}

struct AttnHead {
    q: Linear, // per-bin D -> qk
    k: Linear,
    v: Linear, // per-bin D -> D/heads
}

struct FrameAttention {
    heads: Vec<AttnHead>,
    out: Linear, // per-bin D -> D
    qk_dim: usize,
}

impl FrameAttention {
    fn new(rng: &mut ChaCha20Rng, name: &str, cfg: &DualPathConfig) -> Self {
        let d = cfg.emb_dim;
        let dv = d / cfg.attn_heads;
        let heads = (0..cfg.attn_heads)
            .map(|h| AttnHead {
                q: Linear::new(rng, &format!("{name}.h{h}.q"), d, cfg.attn_qk_dim, true),
                k: Linear::new(rng, &format!("{name}.h{h}.k"), d, cfg.attn_qk_dim, true),
                v: Linear::new(rng, &format!("{name}.h{h}.v"), d, dv, true),
            })
            .collect();
        Self {
            heads,
            out: Linear::new(rng, &format!("{name}.out"), d, d, true),
            qk_dim: cfg.attn_qk_dim,
        }
    }

    /// `x [S, T, F, D]`: attention across the T axis; queries and keys are
    /// whole frames (all bins flattened after a per-bin projection).
    fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let shape = c.shape(x);
        let (s, t, f) = (shape[0], shape[1], shape[2]);
        let mut head_outs = Vec::with_capacity(self.heads.len());
        for head in &self.heads {
            let q = head.q.forward(c, x); // [S, T, F, qk]
            let k = head.k.forward(c, x);
            let v = head.v.forward(c, x); // [S, T, F, dv]
            let e = f * self.qk_dim;
            let q = c.reshape(&q, &[s, t, e]);
            let k = c.reshape(&k, &[s, t, e]);
            let dv = c.shape(&v)[3];
            let v = c.reshape(&v, &[s, t, f * dv]);
            let kt = c.permute(&k, &[0, 2, 1]);
            let scores = c.bmm(&q, &kt);
            let scores = c.scale(&scores, 1.0 / (e as f64).sqrt());
            let att = c.softmax_last(&scores); // [S, T, T]
            let mixed = c.bmm(&att, &v); // [S, T, F*dv]
            head_outs.push(c.reshape(&mixed, &[s, t, f, dv]));
        }
        let merged = c.concat(3, &head_outs); // [S, T, F, D]
        self.out.forward(c, &merged)
    }
}

impl HasParams for FrameAttention {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for h in &mut self.heads {
            h.q.visit_params(out);
            h.k.visit_params(out);
            h.v.visit_params(out);
        }
        self.out.visit_params(out);
    }
}

struct DualPathBlock {
    freq_norm: LayerNorm,
    freq_lstm: BiLstm,
    freq_proj: Linear,
    time_norm: LayerNorm,
    time_lstm: BiLstm,
    time_proj: Linear,
    attn_norm: LayerNorm,
    attn: FrameAttention,
}

impl DualPathBlock {
    fn new(rng: &mut ChaCha20Rng, name: &str, cfg: &DualPathConfig) -> Self {
        let d = cfg.emb_dim;
        let h = cfg.lstm_hidden;
        Self {
            freq_norm: LayerNorm::new(&format!("{name}.freq_norm"), d),
            freq_lstm: BiLstm::new(rng, &format!("{name}.freq_lstm"), d, h),
            freq_proj: Linear::new(rng, &format!("{name}.freq_proj"), 2 * h, d, true),
            time_norm: LayerNorm::new(&format!("{name}.time_norm"), d),
            time_lstm: BiLstm::new(rng, &format!("{name}.time_lstm"), d, h),
            time_proj: Linear::new(rng, &format!("{name}.time_proj"), 2 * h, d, true),
            attn_norm: LayerNorm::new(&format!("{name}.attn_norm"), d),
            attn: FrameAttention::new(rng, &format!("{name}.attn"), cfg),
        }
    }

    fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let shape = c.shape(x);
        let (s, t, f, d) = (shape[0], shape[1], shape[2], shape[3]);

        // Across frequency, each (subband, frame) is a batch element.
        let h = self.freq_norm.forward(c, x);
        let h = c.reshape(&h, &[s * t, f, d]);
        let h = self.freq_lstm.forward(c, &h);
        let h = self.freq_proj.forward(c, &h);
        let h = c.reshape(&h, &[s, t, f, d]);
        let x = c.add(&x.clone(), &h);

        // Across time, each (subband, bin) is a batch element.
        let h = self.time_norm.forward(c, &x);
        let h = c.permute(&h, &[0, 2, 1, 3]); // [S, F, T, D]
        let h = c.reshape(&h, &[s * f, t, d]);
        let h = self.time_lstm.forward(c, &h);
        let h = self.time_proj.forward(c, &h);
        let h = c.reshape(&h, &[s, f, t, d]);
        let h = c.permute(&h, &[0, 2, 1, 3]);
        let x = c.add(&x, &h);

        // Frame-level self-attention.
        let h = self.attn_norm.forward(c, &x);
        let h = self.attn.forward(c, &h);
        c.add(&x, &h)
    }
}

impl HasParams for DualPathBlock {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.freq_norm.visit_params(out);
        self.freq_lstm.visit_params(out);
        self.freq_proj.visit_params(out);
        self.time_norm.visit_params(out);
        self.time_lstm.visit_params(out);
        self.time_proj.visit_params(out);
        self.attn_norm.visit_params(out);
        self.attn.visit_params(out);
    }
}

pub struct DualPathCore {
    pub config: DualPathConfig,
    blocks: Vec<DualPathBlock>,
}

impl DualPathCore {
    pub fn new(cfg: &DualPathConfig, name: &str, rng: &mut ChaCha20Rng) -> Result<Self> {
        cfg.validate()?;
        let blocks =
            (0..cfg.n_blocks).map(|i| DualPathBlock::new(rng, &format!("{name}.block{i}"), cfg)).collect();
        Ok(Self { config: *cfg, blocks })
    }

    /// `x [S, T, F, D] -> [S, T, F, D]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> C::T {
        let mut h = x.clone();
        for b in &self.blocks {
            h = b.forward(c, &h);
        }
        h
    }
}

impl HasParams for DualPathCore {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for b in &mut self.blocks {
            b.visit_params(out);
        }
    }
}
