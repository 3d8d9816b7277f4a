//! Loss suite: least-squares adversarial terms, feature matching,
//! multi-scale log-mel reconstruction, the STFT-domain predictor loss, and
//! the metric-hook interface for the fusion stage.

use std::collections::BTreeMap;

use gpse_dsp::{MelFilterbank, StftConfig};
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::Ctx;
use gpse_nn::graph::NodeId;
use gpse_nn::specops;
use gpse_nn::tensor::from_vec;
use gpse_nn::GraphCtx;

use crate::discrim::DiscOutput;
use crate::error::Result;

/// Loss-term weights for the generative stages.
#[derive(Debug, Clone, Copy, Serialize, Deserialize, PartialEq)]
pub struct LossWeights {
    pub mel: f64,
    pub adversarial: f64,
    pub feature_matching: f64,
}

impl Default for LossWeights {
    fn default() -> Self {
        Self { mel: 15.0, adversarial: 1.0, feature_matching: 2.0 }
    }
}

pub fn mse<C: Ctx>(c: &mut C, a: &C::T, b: &C::T) -> C::T {
    let d = c.sub(a, b);
    let d = c.square(&d);
    c.mean_all(&d)
}

pub fn l1<C: Ctx>(c: &mut C, a: &C::T, b: &C::T) -> C::T {
    let d = c.sub(a, b);
    let d = c.abs(&d);
    c.mean_all(&d)
}

/// Least-squares GAN generator term: sum over sub-critics of mean (D(fake)-1)^2.
pub fn lsgan_generator<C: Ctx>(c: &mut C, fake: &DiscOutput<C::T>) -> C::T {
    let mut total = None;
    for logit in &fake.logits {
        let d = c.add_scalar(logit, -1.0);
        let d = c.square(&d);
        let m = c.mean_all(&d);
        total = Some(match total {
            None => m,
            Some(t) => c.add(&t, &m),
        });
    }
    total.expect("at least one sub-critic")
}

/// Least-squares GAN critic term: mean (D(real)-1)^2 + mean D(fake)^2.
pub fn lsgan_discriminator<C: Ctx>(
    c: &mut C,
    real: &DiscOutput<C::T>,
    fake: &DiscOutput<C::T>,
) -> C::T {
    let mut total = None;
    for (lr, lf) in real.logits.iter().zip(&fake.logits) {
        let dr = c.add_scalar(lr, -1.0);
        let dr = c.square(&dr);
        let mr = c.mean_all(&dr);
        let df = c.square(lf);
        let mf = c.mean_all(&df);
        let s = c.add(&mr, &mf);
        total = Some(match total {
            None => s,
            Some(t) => c.add(&t, &s),
        });
    }
    total.expect("at least one sub-critic")
}

/// L1 distance between critic activations on real vs generated inputs.
pub fn feature_matching<C: Ctx>(
    c: &mut C,
    real: &DiscOutput<C::T>,
    fake: &DiscOutput<C::T>,
) -> C::T {
    let mut total = None;
    for (fr, ff) in real.features.iter().zip(&fake.features) {
        for (r, f) in fr.iter().zip(ff) {
            let m = l1(c, r, f);
            total = Some(match total {
                None => m,
                Some(t) => c.add(&t, &m),
            });
        }
    }
    total.expect("at least one feature map")
}

/// Multi-scale log-mel reconstruction loss. Scales are (fft, hop = fft/4)
/// with mel counts chosen so every mel row has a contributing bin at both
/// pipeline rates.
pub struct MultiScaleMel {
    pub sample_rate: u32,
    scales: Vec<(StftConfig, MelFilterbank)>,
}

pub const MEL_SCALES: [(usize, usize); 4] = [(256, 12), (512, 24), (1024, 48), (2048, 80)];

impl MultiScaleMel {
    pub fn new(sample_rate: u32) -> Result<Self> {
        let mut scales = Vec::new();
        for (fft, n_mels) in MEL_SCALES {
            let cfg = StftConfig::new(fft, fft / 4);
            let fb = MelFilterbank::new(n_mels, 0.0, sample_rate as f64 / 2.0, sample_rate, fft)
                .map_err(crate::error::ModelError::Dsp)?;
            scales.push((cfg, fb));
        }
        Ok(Self { sample_rate, scales })
    }

    /// Sum over scales of L1 between log-mel matrices of the two waves.
    pub fn loss<C: Ctx>(&self, c: &mut C, y_hat: &C::T, y: &C::T) -> C::T {
        let mut total = None;
        for (cfg, fb) in &self.scales {
            let bins = fb.weights.dim().1;
            let wt = from_vec(
                &[bins, fb.n_mels],
                {
                    let mut data = Vec::with_capacity(bins * fb.n_mels);
                    for k in 0..bins {
                        for m in 0..fb.n_mels {
                            data.push(fb.weights[(m, k)]);
                        }
                    }
                    data
                },
            );
            let wt = c.constant(wt);
            let mel_hat = specops::log_mel(c, y_hat, cfg, &wt);
            let mel_ref = specops::log_mel(c, y, cfg, &wt);
            let m = l1(c, &mel_hat, &mel_ref);
            total = Some(match total {
                None => m,
                Some(t) => c.add(&t, &m),
            });
        }
        total.expect("at least one mel scale")
    }
}

/// STFT-domain loss: L1 on real parts + L1 on imaginary parts + L1 on
/// magnitudes, each averaged. Returns the three terms separately.
pub struct StftDomainTerms<T> {
    pub total: T,
    pub real_l1: T,
    pub imag_l1: T,
    pub mag_l1: T,
}

/// [`stft_domain_loss_with`] on the canonical 16 kHz grid.
pub fn stft_domain_loss<C: Ctx>(c: &mut C, y_hat: &C::T, y: &C::T) -> StftDomainTerms<C::T> {
    stft_domain_loss_with(c, y_hat, y, &StftConfig::canonical_16k())
}

pub fn stft_domain_loss_with<C: Ctx>(
    c: &mut C,
    y_hat: &C::T,
    y: &C::T,
    cfg: &StftConfig,
) -> StftDomainTerms<C::T> {
    let bh = specops::stft_frames(c, y_hat, cfg);
    let br = specops::stft_frames(c, y, cfg);
    let re_h = c.slice_axis(&bh, 2, 0, 1);
    let im_h = c.slice_axis(&bh, 2, 1, 2);
    let re_r = c.slice_axis(&br, 2, 0, 1);
    let im_r = c.slice_axis(&br, 2, 1, 2);
    let real_l1 = l1(c, &re_h, &re_r);
    let imag_l1 = l1(c, &im_h, &im_r);
    let mag = |c: &mut C, re: &C::T, im: &C::T| {
        let p1 = c.square(re);
        let p2 = c.square(im);
        let p = c.add(&p1, &p2);
        let p = c.add_scalar(&p, 1e-24);
        c.sqrt(&p)
    };
    let mh = mag(c, &re_h, &im_h);
    let mr = mag(c, &re_r, &im_r);
    let mag_l1 = l1(c, &mh, &mr);
    let s = c.add(&real_l1, &imag_l1);
    let total = c.add(&s, &mag_l1);
    StftDomainTerms { total, real_l1, imag_l1, mag_l1 }
}

/// A differentiable extra loss term for the fusion stage (external quality
/// surrogates plug in here). Implementations must be pure.
pub trait MetricHook {
    fn name(&self) -> &str;
    fn loss(&self, c: &mut GraphCtx, y_hat: NodeId, y: NodeId) -> NodeId;
}

/// A hook returning a constant zero; the base loss must be unchanged by it.
pub struct NullHook;

impl MetricHook for NullHook {
    fn name(&self) -> &str {
        "null"
    }
    fn loss(&self, c: &mut GraphCtx, _y_hat: NodeId, _y: NodeId) -> NodeId {
        c.constant(gpse_nn::scalar(0.0))
    }
}

/// `c * (-si_sdr_proxy)`: a differentiable fidelity surrogate,
/// `-10 log10(|y|^2 / (|y - y_hat|^2 + eps))`.
pub struct SiSdrProxyHook {
    pub weight: f64,
}

impl MetricHook for SiSdrProxyHook {
    fn name(&self) -> &str {
        "si_sdr_proxy"
    }
    fn loss(&self, c: &mut GraphCtx, y_hat: NodeId, y: NodeId) -> NodeId {
        let err = c.sub(&y, &y_hat);
        let err = c.square(&err);
        let err = c.sum_all(&err);
        let err = c.add_scalar(&err, 1e-9);
        let sig = c.square(&y);
        let sig = c.sum_all(&sig);
        let sig = c.add_scalar(&sig, 1e-9);
        let ratio = c.div(&sig, &err);
        let ln_ratio = c.ln(&ratio);
        // -10 log10(r) = -10/ln(10) * ln(r)
        let db = c.scale(&ln_ratio, -10.0 / std::f64::consts::LN_10);
        c.scale(&db, self.weight)
    }
}

/// Scalar values of the logged loss terms for one step.
pub type TermValues = BTreeMap<&'static str, f64>;

/// Total plus per-term scalar values of a generative loss.
pub struct GenLossTerms {
    pub total: NodeId,
    pub values: TermValues,
}

fn scalar_of(c: &GraphCtx, id: NodeId) -> f64 {
    gpse_nn::scalar_value(c.graph.value(id))
}

/// Vocoder objective: weighted multi-scale mel + least-squares adversarial
/// and feature-matching terms from both audio critic families. Critic
/// parameters are bound frozen here, so generator gradients never reach them.
pub fn vocoder_loss(
    c: &mut GraphCtx,
    y_hat: NodeId,
    y: NodeId,
    suite: &crate::discrim::DiscriminatorSuite,
    mel: &MultiScaleMel,
    w: &LossWeights,
) -> Result<GenLossTerms> {
    let mel_term = mel.loss(c, &y_hat, &y);
    let was = c.trainable;
    c.set_trainable(false);
    let fake = suite.discriminate_audio(c, crate::discrim::DiscInput::Audio(&y_hat))?;
    let real = suite.discriminate_audio(c, crate::discrim::DiscInput::Audio(&y))?;
    c.set_trainable(was);
    let adv = lsgan_generator(c, &fake);
    let fm = feature_matching(c, &real, &fake);

    let mut values = TermValues::new();
    values.insert("mel", scalar_of(c, mel_term));
    values.insert("adv", scalar_of(c, adv));
    values.insert("fm", scalar_of(c, fm));

    let mel_w = c.scale(&mel_term, w.mel);
    let adv_w = c.scale(&adv, w.adversarial);
    let fm_w = c.scale(&fm, w.feature_matching);
    let s = c.add(&mel_w, &adv_w);
    let total = c.add(&s, &fm_w);
    values.insert("total", scalar_of(c, total));
    Ok(GenLossTerms { total, values })
}

/// Adapter objective: representation MSE plus adversarial and
/// feature-matching terms from the representation critic.
pub fn adapter_loss(
    c: &mut GraphCtx,
    r_a_hat: NodeId,
    r_a_target: NodeId,
    suite: &crate::discrim::DiscriminatorSuite,
    w: &LossWeights,
) -> Result<GenLossTerms> {
    let mse_term = mse(c, &r_a_hat, &r_a_target);
    let was = c.trainable;
    c.set_trainable(false);
    let fake = suite.discriminate_repr(c, crate::discrim::DiscInput::Representation(&r_a_hat))?;
    let real = suite.discriminate_repr(c, crate::discrim::DiscInput::Representation(&r_a_target))?;
    c.set_trainable(was);
    let adv = lsgan_generator(c, &fake);
    let fm = feature_matching(c, &real, &fake);

    let mut values = TermValues::new();
    values.insert("mse", scalar_of(c, mse_term));
    values.insert("adv", scalar_of(c, adv));
    values.insert("fm", scalar_of(c, fm));

    let adv_w = c.scale(&adv, w.adversarial);
    let fm_w = c.scale(&fm, w.feature_matching);
    let s = c.add(&mse_term, &adv_w);
    let total = c.add(&s, &fm_w);
    values.insert("total", scalar_of(c, total));
    Ok(GenLossTerms { total, values })
}

/// Fusion objective: the vocoder loss rebuilt on the 48 kHz grid plus any
/// differentiable metric hooks. Absent hooks leave the base loss untouched.
pub fn postnet_loss(
    c: &mut GraphCtx,
    y_hat48: NodeId,
    y48: NodeId,
    suite48: &crate::discrim::DiscriminatorSuite,
    mel48: &MultiScaleMel,
    w: &LossWeights,
    hooks: &[&dyn MetricHook],
) -> Result<GenLossTerms> {
    let mut base = vocoder_loss(c, y_hat48, y48, suite48, mel48, w)?;
    let mut total = base.total;
    for hook in hooks {
        let h = hook.loss(c, y_hat48, y48);
        total = c.add(&total, &h);
    }
    base.values.insert("total", scalar_of(c, total));
    base.total = total;
    Ok(base)
}
