//! Stage trainers. Every stage is strictly sequential, single-writer, and
//! seed-deterministic; generator and critic alternate 1:1 where a critic
//! exists. Frozen upstream models are evaluated outside the tape, so their
//! parameters can never receive gradients.

use gpse_degrade::DegradationRecipe;
use gpse_dsp::{resample, AudioBuffer};
use serde::{Deserialize, Serialize};

use gpse_nn::ctx::{Ctx, EvalCtx, GraphCtx};
use gpse_nn::graph::Graph;
use gpse_nn::param::HasParams;
use gpse_nn::tensor::from_vec;
use gpse_nn::{Adam, AdamConfig};

use crate::convnext::{Adapter, Vocoder};
use crate::discrim::{DiscInput, DiscriminatorSuite};
use crate::encoder::{Encoder, ENCODER_RATE, FRAME_HOP};
use crate::error::{ModelError, Result};
use crate::losses::{
    self, adapter_loss, lsgan_discriminator, postnet_loss, vocoder_loss, LossWeights, MetricHook,
    MultiScaleMel,
};
use crate::metrics_log::MetricsLog;
use crate::postnet::PostNet;
use crate::predictor::Predictor;

/// One training utterance: clean target, degraded input, and the recipe
/// sidecar that produced it (if any).
#[derive(Debug, Clone)]
pub struct TrainPair {
    pub clean: AudioBuffer,
    pub degraded: AudioBuffer,
    pub recipe: Option<DegradationRecipe>,
}

impl TrainPair {
    pub fn loss_flags(&self, n_frames: usize) -> Option<Vec<bool>> {
        let frames = self.recipe.as_ref()?.loss_frames.as_ref()?;
        let mut flags = vec![false; n_frames];
        for f in frames {
            if *f < n_frames {
                flags[*f] = true;
            }
        }
        Some(flags)
    }
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct TrainOptions {
    pub steps: usize,
    pub lr: f64,
    pub critic_lr: f64,
    pub weights: LossWeights,
}

impl Default for TrainOptions {
    fn default() -> Self {
        Self { steps: 200, lr: 1e-3, critic_lr: 1e-3, weights: LossWeights::default() }
    }
}

/// Per-step values of the stage's primary loss (the overfit-smoke metric).
#[derive(Debug, Clone)]
pub struct TrainReport {
    pub primary: Vec<f64>,
}

impl TrainReport {
    pub fn initial(&self) -> f64 {
        *self.primary.first().unwrap_or(&f64::NAN)
    }

    pub fn final_loss(&self) -> f64 {
        *self.primary.last().unwrap_or(&f64::NAN)
    }
}

fn wave_const<C: Ctx>(c: &mut C, x: &AudioBuffer) -> C::T {
    c.constant(from_vec(&[x.len()], x.samples.clone()))
}

/// Representation distillation against a frozen teacher evaluated on the
/// paired clean audio.
pub fn train_encoder(
    student: &mut Encoder,
    teacher: &Encoder,
    pairs: &[TrainPair],
    opts: &TrainOptions,
    log: &mut MetricsLog,
) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(ModelError::NoData);
    }
    let mut adam = Adam::new(AdamConfig::with_lr(opts.lr));
    let mut report = TrainReport { primary: Vec::with_capacity(opts.steps) };
    for step in 0..opts.steps {
        let pair = &pairs[step % pairs.len()];
        let frames = student.config.n_frames(pair.degraded.len());
        let flags = pair.loss_flags(frames);

        let mut ev = EvalCtx::new();
        let clean = wave_const(&mut ev, &pair.clean);
        let (t_a, t_p) = teacher.forward(&mut ev, &clean, None);

        let mut graph = Graph::new();
        let mut ctx = GraphCtx::new(&mut graph);
        let degraded = wave_const(&mut ctx, &pair.degraded);
        let (s_a, s_p) = student.forward(&mut ctx, &degraded, flags.as_deref());
        let teacher_a = ctx.constant(t_a);
        let teacher_p = ctx.constant(t_p);
        let loss = Encoder::distill_loss(&mut ctx, (&s_a, &s_p), (&teacher_a, &teacher_p));
        let loss_value = gpse_nn::scalar_value(&ctx.value(&loss));

        let grads = ctx.graph.backward(loss);
        let by_name = ctx.grads_by_name(&grads);
        let mut params = Vec::new();
        student.visit_params(&mut params);
        adam.step(&mut params, &by_name);

        log.log(&[
            ("stage", "encoder".into()),
            ("step", step.to_string()),
            ("distill", format!("{loss_value:.6e}")),
        ]);
        report.primary.push(loss_value);
    }
    Ok(report)
}

/// Vocoder stage: clean speech only; targets are the inputs. The encoder is
/// frozen and supplies the acoustic representations.
pub fn train_vocoder(
    vocoder: &mut Vocoder,
    critics: &mut DiscriminatorSuite,
    encoder: &Encoder,
    clean: &[AudioBuffer],
    mel: &MultiScaleMel,
    opts: &TrainOptions,
    log: &mut MetricsLog,
) -> Result<TrainReport> {
    if clean.is_empty() {
        return Err(ModelError::NoData);
    }
    let mut adam_g = Adam::new(AdamConfig::with_lr(opts.lr));
    let mut adam_d = Adam::new(AdamConfig::with_lr(opts.critic_lr));
    let mut report = TrainReport { primary: Vec::with_capacity(opts.steps) };
    for step in 0..opts.steps {
        let utt = &clean[step % clean.len()];
        let mut ev = EvalCtx::new();
        let wave = wave_const(&mut ev, utt);
        let (r_a, _) = encoder.forward(&mut ev, &wave, None);

        // Generator update.
        let mut graph = Graph::new();
        let mut ctx = GraphCtx::new(&mut graph);
        let r_a_node = ctx.constant(r_a);
        let y_hat = vocoder.forward(&mut ctx, &r_a_node);
        let n = ctx.shape(&y_hat)[0].min(utt.len());
        let y_hat = ctx.slice_axis(&y_hat, 0, 0, n);
        let target = ctx.constant(from_vec(&[n], utt.samples[..n].to_vec()));
        let terms = vocoder_loss(&mut ctx, y_hat, target, critics, mel, &opts.weights)?;
        let y_hat_value = ctx.value(&y_hat);
        let grads = ctx.graph.backward(terms.total);
        let by_name = ctx.grads_by_name(&grads);
        let mut params = Vec::new();
        vocoder.visit_params(&mut params);
        adam_g.step(&mut params, &by_name);

        // Critic update on the detached fake.
        let mut graph_d = Graph::new();
        let mut ctx_d = GraphCtx::new(&mut graph_d);
        let fake = ctx_d.constant(y_hat_value);
        let real = ctx_d.constant(from_vec(&[n], utt.samples[..n].to_vec()));
        let fake_out = critics.discriminate_audio(&mut ctx_d, DiscInput::Audio(&fake))?;
        let real_out = critics.discriminate_audio(&mut ctx_d, DiscInput::Audio(&real))?;
        let d_loss = lsgan_discriminator(&mut ctx_d, &real_out, &fake_out);
        let d_value = gpse_nn::scalar_value(&ctx_d.value(&d_loss));
        let grads_d = ctx_d.graph.backward(d_loss);
        let by_name_d = ctx_d.grads_by_name(&grads_d);
        let mut params_d = Vec::new();
        critics.visit_params(&mut params_d);
        adam_d.step(&mut params_d, &by_name_d);

        let mel_value = terms.values["mel"];
        log.log(&[
            ("stage", "vocoder".into()),
            ("step", step.to_string()),
            ("mel", format!("{mel_value:.6e}")),
            ("adv", format!("{:.6e}", terms.values["adv"])),
            ("fm", format!("{:.6e}", terms.values["fm"])),
            ("total", format!("{:.6e}", terms.values["total"])),
            ("critic", format!("{d_value:.6e}")),
        ]);
        report.primary.push(mel_value);
    }
    Ok(report)
}

/// Adapter stage: maps the degraded utterance's representations onto the
/// clean utterance's acoustic representations through the frozen encoder.
pub fn train_adapter(
    adapter: &mut Adapter,
    critics: &mut DiscriminatorSuite,
    encoder: &Encoder,
    pairs: &[TrainPair],
    opts: &TrainOptions,
    log: &mut MetricsLog,
) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(ModelError::NoData);
    }
    let mut adam_g = Adam::new(AdamConfig::with_lr(opts.lr));
    let mut adam_d = Adam::new(AdamConfig::with_lr(opts.critic_lr));
    let mut report = TrainReport { primary: Vec::with_capacity(opts.steps) };
    for step in 0..opts.steps {
        let pair = &pairs[step % pairs.len()];
        let frames = encoder.config.n_frames(pair.degraded.len());
        let flags = pair.loss_flags(frames);

        let mut ev = EvalCtx::new();
        let degraded = wave_const(&mut ev, &pair.degraded);
        let (r_a0, r_p) = encoder.forward(&mut ev, &degraded, flags.as_deref());
        let clean = wave_const(&mut ev, &pair.clean);
        let (target_a, _) = encoder.forward(&mut ev, &clean, None);

        let mut graph = Graph::new();
        let mut ctx = GraphCtx::new(&mut graph);
        let r_p_node = ctx.constant(r_p);
        let r_a0_node = ctx.constant(r_a0);
        let r_a_hat = adapter.forward(&mut ctx, &r_p_node, &r_a0_node);
        let target = ctx.constant(target_a.clone());
        let terms = adapter_loss(&mut ctx, r_a_hat, target, critics, &opts.weights)?;
        let fake_value = ctx.value(&r_a_hat);
        let grads = ctx.graph.backward(terms.total);
        let by_name = ctx.grads_by_name(&grads);
        let mut params = Vec::new();
        adapter.visit_params(&mut params);
        adam_g.step(&mut params, &by_name);

        let mut graph_d = Graph::new();
        let mut ctx_d = GraphCtx::new(&mut graph_d);
        let fake = ctx_d.constant(fake_value);
        let real = ctx_d.constant(target_a);
        let fake_out = critics.discriminate_repr(&mut ctx_d, DiscInput::Representation(&fake))?;
        let real_out = critics.discriminate_repr(&mut ctx_d, DiscInput::Representation(&real))?;
        let d_loss = lsgan_discriminator(&mut ctx_d, &real_out, &fake_out);
        let d_value = gpse_nn::scalar_value(&ctx_d.value(&d_loss));
        let grads_d = ctx_d.graph.backward(d_loss);
        let by_name_d = ctx_d.grads_by_name(&grads_d);
        let mut params_d = Vec::new();
        critics.visit_params(&mut params_d);
        adam_d.step(&mut params_d, &by_name_d);

        let mse_value = terms.values["mse"];
        log.log(&[
            ("stage", "adapter".into()),
            ("step", step.to_string()),
            ("mse", format!("{mse_value:.6e}")),
            ("adv", format!("{:.6e}", terms.values["adv"])),
            ("fm", format!("{:.6e}", terms.values["fm"])),
            ("critic", format!("{d_value:.6e}")),
        ]);
        report.primary.push(mse_value);
    }
    Ok(report)
}

/// Predictive stage. Pairs whose recipe contains packet loss or bandwidth
/// limitation are outside this branch's distortion subset and are skipped
/// with a logged notice.
pub fn train_predictor(
    predictor: &mut Predictor,
    pairs: &[TrainPair],
    opts: &TrainOptions,
    log: &mut MetricsLog,
) -> Result<TrainReport> {
    let mut kept: Vec<&TrainPair> = Vec::new();
    for (i, pair) in pairs.iter().enumerate() {
        let excluded = pair.recipe.as_ref().is_some_and(|r| {
            r.has_packet_loss() || r.bandwidth_hz.is_some()
        });
        if excluded {
            log.log(&[
                ("stage", "predictor".into()),
                ("event", "skip".into()),
                ("pair", i.to_string()),
                ("reason", "outside_distortion_subset".into()),
            ]);
        } else {
            kept.push(pair);
        }
    }
    if kept.is_empty() {
        return Err(ModelError::NoData);
    }
    let mut adam = Adam::new(AdamConfig::with_lr(opts.lr));
    let mut report = TrainReport { primary: Vec::with_capacity(opts.steps) };
    for step in 0..opts.steps {
        let pair = kept[step % kept.len()];
        let mut graph = Graph::new();
        let mut ctx = GraphCtx::new(&mut graph);
        let x = wave_const(&mut ctx, &pair.degraded);
        let y_hat = predictor.forward(&mut ctx, &x);
        let y = wave_const(&mut ctx, &pair.clean);
        let terms = losses::stft_domain_loss(&mut ctx, &y_hat, &y);
        let loss_value = gpse_nn::scalar_value(&ctx.value(&terms.total));
        let grads = ctx.graph.backward(terms.total);
        let by_name = ctx.grads_by_name(&grads);
        let mut params = Vec::new();
        predictor.visit_params(&mut params);
        adam.step(&mut params, &by_name);

        log.log(&[
            ("stage", "predictor".into()),
            ("step", step.to_string()),
            ("stft", format!("{loss_value:.6e}")),
            ("real", format!("{:.6e}", gpse_nn::scalar_value(&ctx.value(&terms.real_l1)))),
            ("imag", format!("{:.6e}", gpse_nn::scalar_value(&ctx.value(&terms.imag_l1)))),
            ("mag", format!("{:.6e}", gpse_nn::scalar_value(&ctx.value(&terms.mag_l1)))),
        ]);
        report.primary.push(loss_value);
    }
    Ok(report)
}

/// The frozen upstream models the fusion stage reads through.
pub struct FrozenBranches<'a> {
    pub encoder: &'a Encoder,
    pub adapter: &'a Adapter,
    pub vocoder: &'a Vocoder,
    pub predictor: &'a Predictor,
}

impl FrozenBranches<'_> {
    /// Runs both branches on a degraded 16 kHz utterance.
    pub fn branch_outputs(&self, degraded: &AudioBuffer) -> Result<(AudioBuffer, AudioBuffer)> {
        let mask = gpse_plc::detect_loss(degraded, FRAME_HOP)?;
        let frames = self.encoder.config.n_frames(degraded.len());
        let flags = gpse_plc::embed_mask(&mask, frames)?;
        let bundle = self.encoder.encode(degraded, Some(&flags))?;
        let r_a = self.adapter.adapt(&bundle.r_p, &bundle.r_a0)?;
        let mut gen = self.vocoder.vocode(&r_a)?;
        gen.samples.truncate(degraded.len());
        let pred = self.predictor.predict(degraded)?;
        Ok((gen, pred))
    }
}

/// Fusion stage: both branches frozen; 48 kHz targets are the upsampled
/// clean utterances.
#[allow(clippy::too_many_arguments)]
pub fn train_postnet(
    postnet: &mut PostNet,
    critics48: &mut DiscriminatorSuite,
    mel48: &MultiScaleMel,
    branches: &FrozenBranches,
    pairs: &[TrainPair],
    hooks: &[&dyn MetricHook],
    opts: &TrainOptions,
    log: &mut MetricsLog,
) -> Result<TrainReport> {
    if pairs.is_empty() {
        return Err(ModelError::NoData);
    }
    // Branch outputs are fixed by the frozen models; compute once per pair.
    let mut prepared = Vec::with_capacity(pairs.len());
    for pair in pairs {
        let (gen16, pred16) = branches.branch_outputs(&pair.degraded)?;
        let g48 = resample(&gen16, postnet.config.out_rate)?;
        let p48 = resample(&pred16, postnet.config.out_rate)?;
        let t48 = resample(&pair.clean, postnet.config.out_rate)?;
        prepared.push((g48, p48, t48));
    }
    let mut adam_g = Adam::new(AdamConfig::with_lr(opts.lr));
    let mut adam_d = Adam::new(AdamConfig::with_lr(opts.critic_lr));
    let mut report = TrainReport { primary: Vec::with_capacity(opts.steps) };
    for step in 0..opts.steps {
        let (g48, p48, t48) = &prepared[step % prepared.len()];
        let mut graph = Graph::new();
        let mut ctx = GraphCtx::new(&mut graph);
        let g = wave_const(&mut ctx, g48);
        let p = wave_const(&mut ctx, p48);
        let y_hat = postnet.forward(&mut ctx, &g, &p);
        let n = ctx.shape(&y_hat)[0].min(t48.len());
        let y_hat = ctx.slice_axis(&y_hat, 0, 0, n);
        let target = ctx.constant(from_vec(&[n], t48.samples[..n].to_vec()));
        let terms = postnet_loss(&mut ctx, y_hat, target, critics48, mel48, &opts.weights, hooks)?;
        let y_hat_value = ctx.value(&y_hat);
        let grads = ctx.graph.backward(terms.total);
        let by_name = ctx.grads_by_name(&grads);
        let mut params = Vec::new();
        postnet.visit_params(&mut params);
        adam_g.step(&mut params, &by_name);

        let mut graph_d = Graph::new();
        let mut ctx_d = GraphCtx::new(&mut graph_d);
        let fake = ctx_d.constant(y_hat_value);
        let real = ctx_d.constant(from_vec(&[n], t48.samples[..n].to_vec()));
        let fake_out = critics48.discriminate_audio(&mut ctx_d, DiscInput::Audio(&fake))?;
        let real_out = critics48.discriminate_audio(&mut ctx_d, DiscInput::Audio(&real))?;
        let d_loss = lsgan_discriminator(&mut ctx_d, &real_out, &fake_out);
        let d_value = gpse_nn::scalar_value(&ctx_d.value(&d_loss));
        let grads_d = ctx_d.graph.backward(d_loss);
        let by_name_d = ctx_d.grads_by_name(&grads_d);
        let mut params_d = Vec::new();
        critics48.visit_params(&mut params_d);
        adam_d.step(&mut params_d, &by_name_d);

        let mel_value = terms.values["mel"];
        log.log(&[
            ("stage", "postnet".into()),
            ("step", step.to_string()),
            ("mel", format!("{mel_value:.6e}")),
            ("adv", format!("{:.6e}", terms.values["adv"])),
            ("fm", format!("{:.6e}", terms.values["fm"])),
            ("critic", format!("{d_value:.6e}")),
        ]);
        report.primary.push(mel_value);
    }
    Ok(report)
}

/// Sanity check used by trainers and the pipeline: 16 kHz mono.
pub fn expect_16k(x: &AudioBuffer) -> Result<()> {
    if x.sample_rate != ENCODER_RATE {
        return Err(ModelError::RateMismatch(x.sample_rate, ENCODER_RATE));
    }
    Ok(())
}
