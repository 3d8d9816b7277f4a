//! The end-to-end enhancement graph: resample to 16 kHz, detect lost
//! frames, run the generative and predictive branches in parallel, fuse and
//! bandwidth-extend to 48 kHz, and return to the caller's rate.

use std::path::PathBuf;

use gpse_dsp::{resample, AudioBuffer};
use gpse_model::{
    finalize, Adapter, Encoder, PostNet, Predictor, RepresentationBundle, Vocoder, FRAME_HOP,
};
use gpse_plc::{detect_loss, embed_mask};

use crate::error::{CliError, Result};
use crate::stages;

/// The rates the pipeline accepts end to end.
pub const SUPPORTED_RATES: [u32; 7] = [8000, 16000, 22050, 24000, 32000, 44100, 48000];

/// Paths to the five stage checkpoints.
#[derive(Debug, Clone)]
pub struct PipelineCheckpointSet {
    pub encoder: PathBuf,
    pub adapter: PathBuf,
    pub vocoder: PathBuf,
    pub predictor: PathBuf,
    pub postnet: PathBuf,
}

impl PipelineCheckpointSet {
    /// Conventional layout: five `.ckpt` files in one directory.
    pub fn in_dir(dir: &std::path::Path) -> Self {
        Self {
            encoder: dir.join("encoder.ckpt"),
            adapter: dir.join("adapter.ckpt"),
            vocoder: dir.join("vocoder.ckpt"),
            predictor: dir.join("predictor.ckpt"),
            postnet: dir.join("postnet.ckpt"),
        }
    }
}

/// Observation points for tests and debugging; all methods default to no-ops.
pub trait EnhanceProbe {
    fn on_input_16k(&mut self, _x: &AudioBuffer) {}
    fn on_loss_flags(&mut self, _flags: &[bool]) {}
    fn on_representations(&mut self, _bundle: &RepresentationBundle) {}
    fn on_generative(&mut self, _gen16: &AudioBuffer) {}
    fn on_predictive(&mut self, _pred16: &AudioBuffer) {}
    fn on_fused_48k(&mut self, _y48: &AudioBuffer) {}
}

pub struct NoProbe;

impl EnhanceProbe for NoProbe {}

pub struct Pipeline {
    pub encoder: Encoder,
    pub adapter: Adapter,
    pub vocoder: Vocoder,
    pub predictor: Predictor,
    pub postnet: PostNet,
}

impl Pipeline {
    pub fn load(set: &PipelineCheckpointSet) -> Result<Self> {
        for (name, path) in [
            ("encoder", &set.encoder),
            ("adapter", &set.adapter),
            ("vocoder", &set.vocoder),
            ("predictor", &set.predictor),
            ("postnet", &set.postnet),
        ] {
            if !path.exists() {
                return Err(CliError::MissingDependency(format!(
                    "{name} checkpoint missing at {}",
                    path.display()
                )));
            }
        }
        Self::from_models(
            stages::load_encoder(&set.encoder)?,
            stages::load_adapter(&set.adapter)?,
            stages::load_vocoder(&set.vocoder)?,
            stages::load_predictor(&set.predictor)?,
            stages::load_postnet(&set.postnet)?,
        )
    }

    /// Wires pre-built models, enforcing cross-stage compatibility.
    pub fn from_models(
        encoder: Encoder,
        adapter: Adapter,
        vocoder: Vocoder,
        predictor: Predictor,
        postnet: PostNet,
    ) -> Result<Self> {
        let d = encoder.config.d_model;
        if adapter.d_model != d || adapter.backbone.config.input_dim != d {
            return Err(CliError::ConfigMismatch(format!(
                "adapter dims (in {}, out {}) do not match encoder d_model {}",
                adapter.backbone.config.input_dim, adapter.d_model, d
            )));
        }
        if vocoder.backbone.config.input_dim != d {
            return Err(CliError::ConfigMismatch(format!(
                "vocoder input dim {} does not match encoder d_model {}",
                vocoder.backbone.config.input_dim, d
            )));
        }
        if vocoder.istft_cfg.hop_size != FRAME_HOP {
            return Err(CliError::ConfigMismatch(format!(
                "vocoder hop {} must equal the encoder frame hop {}",
                vocoder.istft_cfg.hop_size, FRAME_HOP
            )));
        }
        if postnet.config.in_rate != 16000 || postnet.config.out_rate != 48000 {
            return Err(CliError::ConfigMismatch(
                "fusion stage must map 16 kHz branches to 48 kHz".into(),
            ));
        }
        Ok(Self { encoder, adapter, vocoder, predictor, postnet })
    }

    /// Enhances one utterance; the output is at the input rate and within
    /// one sample of the input length.
    pub fn enhance(&self, x: &AudioBuffer, probe: &mut dyn EnhanceProbe) -> Result<AudioBuffer> {
        if x.sample_rate > 48000 || !SUPPORTED_RATES.contains(&x.sample_rate) {
            return Err(CliError::UnsupportedRate(x.sample_rate));
        }
        if x.is_empty() {
            return Err(CliError::Model(gpse_model::ModelError::DegenerateInput(
                "empty input".into(),
            )));
        }
        let original_rate = x.sample_rate;
        let x16 = resample(x, 16000)?;
        probe.on_input_16k(&x16);

        let mask = detect_loss(&x16, FRAME_HOP)?;
        let frames = self.encoder.config.n_frames(x16.len());
        let flags = embed_mask(&mask, frames)?;
        probe.on_loss_flags(&flags);

        // The two branches share only the input; run them concurrently.
        let (gen_result, pred_result) = std::thread::scope(|scope| {
            let gen = scope.spawn(|| -> Result<(RepresentationBundle, AudioBuffer)> {
                let mut bundle = self.encoder.encode(&x16, Some(&flags))?;
                let r_a = self.adapter.adapt(&bundle.r_p, &bundle.r_a0)?;
                bundle.r_a = Some(r_a.clone());
                let mut gen16 = self.vocoder.vocode(&r_a)?;
                gen16.samples.truncate(x16.len());
                Ok((bundle, gen16))
            });
            let pred = scope.spawn(|| -> Result<AudioBuffer> {
                Ok(self.predictor.predict(&x16)?)
            });
            (gen.join().expect("generative branch panicked"),
             pred.join().expect("predictive branch panicked"))
        });
        let (bundle, gen16) = gen_result?;
        let pred16 = pred_result?;
        probe.on_representations(&bundle);
        probe.on_generative(&gen16);
        probe.on_predictive(&pred16);

        let y48 = self.postnet.fuse_and_extend(&gen16, &pred16)?;
        probe.on_fused_48k(&y48);
        let out = finalize(&y48, original_rate)?;
        Ok(out)
    }
}
