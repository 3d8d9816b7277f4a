use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use serde::{Deserialize, Serialize};

use crate::{apply_reverb, bandlimit, clip, mix_at_snr, synthesize_rir, DegradeError, Result};
use gpse_dsp::AudioBuffer;
use gpse_plc::{inject_loss, LossMask};

/// Full parameterization of one simulated distortion chain.
///
/// A recipe replays to bit-identical output given the same input and noise
/// source; the seed drives the impulse-response synthesis.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegradationRecipe {
    pub seed: u64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub snr_db: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub rt60_s: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub clip_eta: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub bandwidth_hz: Option<u32>,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub loss_frames: Option<Vec<usize>>,
}

impl DegradationRecipe {
    pub fn validate(&self) -> Result<()> {
        let any = self.snr_db.is_some()
            || self.rt60_s.is_some()
            || self.clip_eta.is_some()
            || self.bandwidth_hz.is_some()
            || self.loss_frames.as_ref().is_some_and(|v| !v.is_empty());
        if !any {
            return Err(DegradeError::InvalidParameter(
                "recipe must contain at least one distortion".into(),
            ));
        }
        if let Some(eta) = self.clip_eta {
            if !(eta > 0.0 && eta <= 1.0) {
                return Err(DegradeError::InvalidParameter(format!(
                    "clip eta {eta} out of (0, 1]"
                )));
            }
        }
        if let Some(rt60) = self.rt60_s {
            if !(rt60 > 0.0) {
                return Err(DegradeError::InvalidParameter(format!("rt60 {rt60} <= 0")));
            }
        }
        Ok(())
    }

    pub fn has_packet_loss(&self) -> bool {
        self.loss_frames.as_ref().is_some_and(|v| !v.is_empty())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("recipe serialization cannot fail")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s)
            .map_err(|e| DegradeError::InvalidParameter(format!("bad recipe JSON: {e}")))
    }
}

/// Ranges and probabilities for drawing recipes. The reverberation range
/// defaults to RT60 in [0.6, 1.6] s; everything else is a configurable
/// choice with no canonical value.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub p_reverb: f64,
    pub rt60_range_s: (f64, f64),
    pub p_noise: f64,
    pub snr_range_db: (f64, f64),
    pub p_clip: f64,
    pub clip_eta_range: (f64, f64),
    pub p_bandlimit: f64,
    pub bandwidth_choices_hz: Vec<u32>,
    pub p_packet_loss: f64,
    /// Per-frame loss probability once packet loss is active.
    pub loss_frame_rate: f64,
}

impl Default for SimulationConfig {
    fn default() -> Self {
        Self {
            p_reverb: 0.5,
            rt60_range_s: (0.6, 1.6),
            p_noise: 0.9,
            snr_range_db: (-5.0, 20.0),
            p_clip: 0.25,
            clip_eta_range: (0.5, 0.99),
            p_bandlimit: 0.25,
            bandwidth_choices_hz: vec![2000, 4000, 6000],
            p_packet_loss: 0.25,
            loss_frame_rate: 0.1,
        }
    }
}

/// Draws a fully-resolved recipe for an utterance of `n_frames` loss frames.
/// The same `(config, seed, n_frames)` always yields the same recipe, and at
/// least one distortion is always present.
pub fn sample_recipe(cfg: &SimulationConfig, seed: u64, n_frames: usize) -> DegradationRecipe {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    loop {
        let mut r = DegradationRecipe {
            seed,
            snr_db: None,
            rt60_s: None,
            clip_eta: None,
            bandwidth_hz: None,
            loss_frames: None,
        };
        if rng.gen_bool(cfg.p_reverb.clamp(0.0, 1.0)) {
            r.rt60_s = Some(rng.gen_range(cfg.rt60_range_s.0..=cfg.rt60_range_s.1));
        }
        if rng.gen_bool(cfg.p_noise.clamp(0.0, 1.0)) {
            r.snr_db = Some(rng.gen_range(cfg.snr_range_db.0..=cfg.snr_range_db.1));
        }
        if rng.gen_bool(cfg.p_clip.clamp(0.0, 1.0)) {
            r.clip_eta = Some(rng.gen_range(cfg.clip_eta_range.0..=cfg.clip_eta_range.1));
        }
        if !cfg.bandwidth_choices_hz.is_empty() && rng.gen_bool(cfg.p_bandlimit.clamp(0.0, 1.0)) {
            let i = rng.gen_range(0..cfg.bandwidth_choices_hz.len());
            r.bandwidth_hz = Some(cfg.bandwidth_choices_hz[i]);
        }
        if n_frames > 0 && rng.gen_bool(cfg.p_packet_loss.clamp(0.0, 1.0)) {
            let frames: Vec<usize> =
                (0..n_frames).filter(|_| rng.gen_bool(cfg.loss_frame_rate.clamp(0.0, 1.0))).collect();
            if !frames.is_empty() {
                r.loss_frames = Some(frames);
            }
        }
        if r.validate().is_ok() {
            return r;
        }
        // Nothing was drawn; continue the stream and try again.
    }
}

/// Loss frames are 20 ms regardless of rate.
fn loss_frame_size(rate: u32) -> usize {
    (rate as usize) / 50
}

/// Applies the recipe in fixed order: reverb, noise, clip, bandlimit, packet
/// loss. Returns the degraded audio and the recipe for sidecar serialization.
pub fn apply_recipe(
    x: &AudioBuffer,
    recipe: &DegradationRecipe,
    noise_source: &AudioBuffer,
) -> Result<(AudioBuffer, DegradationRecipe)> {
    recipe.validate()?;
    let mut y = x.clone();
    if let Some(rt60) = recipe.rt60_s {
        let rir = synthesize_rir(rt60, rt60 * 1.25, x.sample_rate, recipe.seed)?;
        y = apply_reverb(&y, &rir)?;
    }
    if let Some(snr) = recipe.snr_db {
        y = mix_at_snr(&y, noise_source, snr)?;
    }
    if let Some(eta) = recipe.clip_eta {
        y = clip(&y, eta)?;
    }
    if let Some(bw) = recipe.bandwidth_hz {
        y = bandlimit(&y, bw)?;
    }
    if let Some(frames) = &recipe.loss_frames {
        let mask = LossMask::new(loss_frame_size(x.sample_rate), frames.iter().copied());
        y = inject_loss(&y, &mask)?;
    }
    Ok((y, recipe.clone()))
}
