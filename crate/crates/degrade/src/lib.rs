//! Reproducible degradation simulation for training data: additive noise at a
//! target SNR, reverberation from synthesized impulse responses, clipping,
//! bandwidth limitation, and packet loss, all driven by a seeded recipe that
//! replays to bit-identical output.

mod recipe;
mod reverb;

use gpse_dsp::{resample, AudioBuffer, DspError};
use gpse_plc::PlcError;
use thiserror::Error;

pub use recipe::{apply_recipe, sample_recipe, DegradationRecipe, SimulationConfig};
pub use reverb::{apply_reverb, schroeder_rt60, synthesize_rir, RoomImpulseResponse};

#[derive(Error, Debug)]
pub enum DegradeError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
    #[error("sample-rate mismatch: {0} Hz vs {1} Hz")]
    RateMismatch(u32, u32),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Plc(#[from] PlcError),
}

pub type Result<T> = std::result::Result<T, DegradeError>;

/// Mixes `noise` into `speech` at the requested SNR.
///
/// The noise is tiled or trimmed to the speech length first, and the gain is
/// `sqrt(P_s / (P_n * 10^(snr/10)))` computed from the powers of the signals
/// actually mixed, so the measured output SNR lands within 0.01 dB.
pub fn mix_at_snr(speech: &AudioBuffer, noise: &AudioBuffer, snr_db: f64) -> Result<AudioBuffer> {
    if speech.is_empty() || noise.is_empty() {
        return Err(DegradeError::DegenerateInput("empty speech or noise".into()));
    }
    if speech.sample_rate != noise.sample_rate {
        return Err(DegradeError::RateMismatch(speech.sample_rate, noise.sample_rate));
    }
    let tiled = tile_to_length(noise, speech.len());
    let p_s = speech.power();
    let p_n = tiled.power();
    if p_s == 0.0 {
        return Err(DegradeError::DegenerateInput("zero-power speech".into()));
    }
    if p_n == 0.0 {
        return Err(DegradeError::DegenerateInput("zero-power noise".into()));
    }
    let alpha = (p_s / (p_n * 10f64.powf(snr_db / 10.0))).sqrt();
    let samples = speech
        .samples
        .iter()
        .zip(&tiled.samples)
        .map(|(s, n)| s + alpha * n)
        .collect();
    Ok(AudioBuffer { samples, sample_rate: speech.sample_rate })
}

fn tile_to_length(noise: &AudioBuffer, len: usize) -> AudioBuffer {
    let mut samples = Vec::with_capacity(len);
    while samples.len() < len {
        let take = (len - samples.len()).min(noise.len());
        samples.extend_from_slice(&noise.samples[..take]);
    }
    AudioBuffer { samples, sample_rate: noise.sample_rate }
}

/// Hard-clips at `eta` times the utterance peak, `0 < eta <= 1`.
pub fn clip(x: &AudioBuffer, eta: f64) -> Result<AudioBuffer> {
    if !(eta > 0.0 && eta <= 1.0) {
        return Err(DegradeError::InvalidParameter(format!(
            "clip eta must be in (0, 1], got {eta}"
        )));
    }
    let c = eta * x.peak();
    let samples = x.samples.iter().map(|s| s.clamp(-c, c)).collect();
    Ok(AudioBuffer { samples, sample_rate: x.sample_rate })
}

/// Restricts content to `bandwidth_hz` by resampling down to `2 * bandwidth`
/// and back, the way narrowband recordings arise. Length is preserved.
pub fn bandlimit(x: &AudioBuffer, bandwidth_hz: u32) -> Result<AudioBuffer> {
    if bandwidth_hz == 0 || 2 * bandwidth_hz > x.sample_rate {
        return Err(DegradeError::InvalidParameter(format!(
            "bandwidth {bandwidth_hz} Hz out of range (0, {}]",
            x.sample_rate / 2
        )));
    }
    let down = resample(x, 2 * bandwidth_hz)?;
    let mut up = resample(&down, x.sample_rate)?;
    // Rounding in the two rational ratios can drift by one sample.
    up.samples.resize(x.len(), 0.0);
    Ok(up)
}
