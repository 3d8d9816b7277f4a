//! The three adversarial critic families: a multi-period waveform
//! discriminator, a multi-band multi-resolution STFT discriminator, and a
//! 1-D convolutional discriminator over the representation frame axis.

use gpse_dsp::StftConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::Ctx;
use gpse_nn::layers::{Conv1d, Padding};
use gpse_nn::param::{HasParams, Param};
use gpse_nn::specops;
use gpse_nn::tensor::Tensor;

use crate::error::{ModelError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct DiscriminatorSuiteConfig {
    pub mpd_periods: Vec<usize>,
    /// (fft, hop) per STFT resolution.
    pub stft_resolutions: Vec<(usize, usize)>,
    pub stft_bands: usize,
    pub repr_dim: usize,
    pub base_channels: usize,
}

impl DiscriminatorSuiteConfig {
    pub fn toy(repr_dim: usize) -> Self {
        Self {
            mpd_periods: vec![2, 3, 5, 7, 11],
            stft_resolutions: vec![(512, 128), (1024, 256), (2048, 512)],
            stft_bands: 3,
            repr_dim,
            base_channels: 8,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::BTreeSet::new();
        for p in &self.mpd_periods {
            if !seen.insert(*p) {
                return Err(ModelError::ConfigError(format!("duplicate MPD period {p}")));
            }
        }
        if self.stft_resolutions.len() < 2 {
            return Err(ModelError::ConfigError(
                "need at least 2 STFT discriminator resolutions".into(),
            ));
        }
        Ok(())
    }
}

/// Logit maps plus intermediate features for feature matching.
pub struct DiscOutput<T> {
    pub logits: Vec<T>,
    pub features: Vec<Vec<T>>,
}

/// Pads with zeros to a period multiple and folds `[N]` into
/// `[ceil(N/p) rows x p columns]`.
pub fn fold_audio(x: &Tensor, period: usize) -> Tensor {
    let n = x.len();
    let rows = n.div_ceil(period);
    let mut data = vec![0.0; rows * period];
    for (i, v) in x.iter().enumerate() {
        data[i] = *v;
    }
    gpse_nn::from_vec(&[rows, period], data)
}

struct ConvStack {
    convs: Vec<Conv1d>,
    post: Conv1d,
}

impl ConvStack {
    fn new(
        rng: &mut ChaCha20Rng,
        name: &str,
        c_in: usize,
        widths: &[usize],
        kernel: usize,
        stride: usize,
    ) -> Self {
        let mut convs = Vec::new();
        let mut prev = c_in;
        for (i, w) in widths.iter().enumerate() {
            convs.push(Conv1d::new(
                rng,
                &format!("{name}.conv{i}"),
                prev,
                *w,
                kernel,
                stride,
                1,
                Padding::Same,
                true,
            ));
            prev = *w;
        }
        let post = Conv1d::new(rng, &format!("{name}.post"), prev, 1, 3, 1, 1, Padding::Same, true);
        Self { convs, post }
    }

    /// `x [B, C, T]` -> (logits `[B, 1, T']`, leaky-activated features).
    fn forward<C: Ctx>(&self, c: &mut C, x: &C::T) -> (C::T, Vec<C::T>) {
        let mut h = x.clone();
        let mut feats = Vec::new();
        for conv in &self.convs {
            h = conv.forward(c, &h);
            h = c.leaky_relu(&h, 0.1);
            feats.push(h.clone());
        }
        let logits = self.post.forward(c, &h);
        (logits, feats)
    }
}

impl HasParams for ConvStack {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for conv in &mut self.convs {
            conv.visit_params(out);
        }
        self.post.visit_params(out);
    }
}

/// One sub-discriminator per period: the folded columns become the batch, so
/// convolution runs along the `ceil(N/p)` row axis with shared weights and
/// never mixes across periods.
pub struct MultiPeriodDiscriminator {
    pub periods: Vec<usize>,
    stacks: Vec<ConvStack>,
}

impl MultiPeriodDiscriminator {
    fn new(rng: &mut ChaCha20Rng, periods: &[usize], base: usize) -> Self {
        let stacks = periods
            .iter()
            .map(|p| {
                ConvStack::new(rng, &format!("mpd.p{p}"), 1, &[base, 2 * base, 4 * base], 5, 3)
            })
            .collect();
        Self { periods: periods.to_vec(), stacks }
    }

    pub fn forward<C: Ctx>(&self, c: &mut C, wave: &C::T) -> DiscOutput<C::T> {
        let n = c.shape(wave)[0];
        let mut out = DiscOutput { logits: Vec::new(), features: Vec::new() };
        for (p, stack) in self.periods.iter().zip(&self.stacks) {
            let rows = n.div_ceil(*p);
            let padded = c.pad_axis(wave, 0, 0, rows * p - n);
            let folded = c.reshape(&padded, &[rows, *p]);
            // columns -> batch of p mono sequences
            let seq = c.permute(&folded, &[1, 0]);
            let seq = c.reshape(&seq, &[*p, 1, rows]);
            let (logits, feats) = stack.forward(c, &seq);
            out.logits.push(logits);
            out.features.push(feats);
        }
        out
    }
}

impl HasParams for MultiPeriodDiscriminator {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for s in &mut self.stacks {
            s.visit_params(out);
        }
    }
}

/// Per resolution and per frequency band, a conv stack over frames with
/// (re, im) x band-bins as input channels.
pub struct MultiBandStftDiscriminator {
    pub resolutions: Vec<StftConfig>,
    pub n_bands: usize,
    stacks: Vec<ConvStack>, // resolutions x bands, row-major
    band_edges: Vec<Vec<(usize, usize)>>,
}

impl MultiBandStftDiscriminator {
    fn new(rng: &mut ChaCha20Rng, resolutions: &[(usize, usize)], n_bands: usize, base: usize) -> Self {
        let configs: Vec<StftConfig> =
            resolutions.iter().map(|(fft, hop)| StftConfig::new(*fft, *hop)).collect();
        let mut stacks = Vec::new();
        let mut band_edges = Vec::new();
        for cfg in &configs {
            let bins = cfg.n_bins();
            let mut edges = Vec::new();
            let base_width = bins / n_bands;
            for b in 0..n_bands {
                let start = b * base_width;
                let end = if b == n_bands - 1 { bins } else { (b + 1) * base_width };
                edges.push((start, end));
                let c_in = 2 * (end - start);
                stacks.push(ConvStack::new(
                    rng,
                    &format!("stftd.r{}b{b}", cfg.fft_size),
                    c_in,
                    &[base, 2 * base],
                    5,
                    2,
                ));
            }
            band_edges.push(edges);
        }
        Self { resolutions: configs, n_bands, stacks, band_edges }
    }

    pub fn forward<C: Ctx>(&self, c: &mut C, wave: &C::T) -> DiscOutput<C::T> {
        let mut out = DiscOutput { logits: Vec::new(), features: Vec::new() };
        for (ri, cfg) in self.resolutions.iter().enumerate() {
            let bins = specops::stft_frames(c, wave, cfg); // [T, bins, 2]
            let frames = c.shape(&bins)[0];
            for (bi, (start, end)) in self.band_edges[ri].iter().enumerate() {
                let band = c.slice_axis(&bins, 1, *start, *end); // [T, W, 2]
                let w = end - start;
                let band = c.reshape(&band, &[frames, 2 * w]);
                let band = c.permute(&band, &[1, 0]);
                let band = c.reshape(&band, &[1, 2 * w, frames]);
                let stack = &self.stacks[ri * self.n_bands + bi];
                let (logits, feats) = stack.forward(c, &band);
                out.logits.push(logits);
                out.features.push(feats);
            }
        }
        out
    }
}

impl HasParams for MultiBandStftDiscriminator {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        for s in &mut self.stacks {
            s.visit_params(out);
        }
    }
}

/// 1-D conv critic over the frame axis of a representation matrix.
pub struct ReprDiscriminator {
    pub d_model: usize,
    stack: ConvStack,
}

impl ReprDiscriminator {
    fn new(rng: &mut ChaCha20Rng, d_model: usize, base: usize) -> Self {
        Self {
            d_model,
            stack: ConvStack::new(rng, "reprd", d_model, &[4 * base, 4 * base], 5, 1),
        }
    }

    /// `r [frames, d_model]`.
    pub fn forward<C: Ctx>(&self, c: &mut C, r: &C::T) -> DiscOutput<C::T> {
        let frames = c.shape(r)[0];
        let d = c.shape(r)[1];
        let h = c.permute(r, &[1, 0]);
        let h = c.reshape(&h, &[1, d, frames]);
        let (logits, feats) = self.stack.forward(c, &h);
        DiscOutput { logits: vec![logits], features: vec![feats] }
    }
}

impl HasParams for ReprDiscriminator {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.stack.visit_params(out);
    }
}

/// The full critic suite.
pub struct DiscriminatorSuite {
    pub config: DiscriminatorSuiteConfig,
    pub mpd: MultiPeriodDiscriminator,
    pub stft: MultiBandStftDiscriminator,
    pub repr: ReprDiscriminator,
}

/// What a discriminator is asked to judge.
pub enum DiscInput<'a, T> {
    Audio(&'a T),
    Representation(&'a T),
}

impl DiscriminatorSuite {
    pub fn new(config: &DiscriminatorSuiteConfig, seed: u64) -> Result<Self> {
        config.validate()?;
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        Ok(Self {
            config: config.clone(),
            mpd: MultiPeriodDiscriminator::new(&mut rng, &config.mpd_periods, config.base_channels),
            stft: MultiBandStftDiscriminator::new(
                &mut rng,
                &config.stft_resolutions,
                config.stft_bands,
                config.base_channels,
            ),
            repr: ReprDiscriminator::new(&mut rng, config.repr_dim, config.base_channels),
        })
    }

    /// Judges a waveform with both audio families (MPD + multi-band STFT).
    pub fn discriminate_audio<C: Ctx>(&self, c: &mut C, input: DiscInput<C::T>) -> Result<DiscOutput<C::T>> {
        let wave = match input {
            DiscInput::Audio(w) => w,
            DiscInput::Representation(_) => {
                return Err(ModelError::TypeMismatch(
                    "audio discriminators require a waveform input".into(),
                ))
            }
        };
        let mut out = self.mpd.forward(c, wave);
        let mut stft_out = self.stft.forward(c, wave);
        out.logits.append(&mut stft_out.logits);
        out.features.append(&mut stft_out.features);
        Ok(out)
    }

    /// Judges a representation matrix with the representation critic.
    pub fn discriminate_repr<C: Ctx>(&self, c: &mut C, input: DiscInput<C::T>) -> Result<DiscOutput<C::T>> {
        let r = match input {
            DiscInput::Representation(r) => r,
            DiscInput::Audio(_) => {
                return Err(ModelError::TypeMismatch(
                    "the representation discriminator requires a matrix input".into(),
                ))
            }
        };
        Ok(self.repr.forward(c, r))
    }
}

impl HasParams for DiscriminatorSuite {
    fn visit_params<'a>(&'a mut self, out: &mut Vec<&'a mut Param>) {
        self.mpd.visit_params(out);
        self.stft.visit_params(out);
        self.repr.visit_params(out);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use gpse_nn::ctx::EvalCtx;
    use gpse_nn::from_vec;
    use rand::Rng;

    fn rand_wave(n: usize, seed: u64) -> Tensor {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        from_vec(&[n], (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect())
    }

    #[test]
    fn fold_shape_matches_ceil_oracle() {
        for (n, p) in [(16000usize, 7usize), (16001, 11), (100, 3), (5, 5)] {
            let x = rand_wave(n, 1);
            let folded = fold_audio(&x, p);
            assert_eq!(folded.shape(), &[n.div_ceil(p), p], "n={n} p={p}");
        }
    }

    #[test]
    fn two_res_three_band_gives_six_logit_maps() {
        let mut cfg = DiscriminatorSuiteConfig::toy(16);
        cfg.stft_resolutions = vec![(512, 128), (1024, 256)];
        let suite = DiscriminatorSuite::new(&cfg, 3).unwrap();
        let mut c = EvalCtx::new();
        let wave = rand_wave(4000, 2);
        let out = suite.stft.forward(&mut c, &wave);
        assert_eq!(out.logits.len(), 6);
    }

    #[test]
    fn wrong_input_kind_is_type_mismatch() {
        let suite = DiscriminatorSuite::new(&DiscriminatorSuiteConfig::toy(16), 4).unwrap();
        let mut c = EvalCtx::new();
        let wave = rand_wave(1000, 5);
        assert!(matches!(
            suite.discriminate_audio(&mut c, DiscInput::Representation(&wave)),
            Err(ModelError::TypeMismatch(_))
        ));
        assert!(matches!(
            suite.discriminate_repr(&mut c, DiscInput::Audio(&wave)),
            Err(ModelError::TypeMismatch(_))
        ));
    }

    #[test]
    fn mpd_runs_on_all_periods() {
        let suite = DiscriminatorSuite::new(&DiscriminatorSuiteConfig::toy(16), 6).unwrap();
        let mut c = EvalCtx::new();
        let wave = rand_wave(3199, 7);
        let out = suite.mpd.forward(&mut c, &wave);
        assert_eq!(out.logits.len(), 5);
        assert_eq!(out.features.len(), 5);
        assert!(out.features.iter().all(|f| f.len() == 3));
    }
}
