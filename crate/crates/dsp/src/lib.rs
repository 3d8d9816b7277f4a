//! Deterministic signal-processing primitives shared by the whole pipeline:
//! STFT/iSTFT, mel filterbanks, rational-ratio resampling, and WAV I/O.
//!
//! Everything here is a pure function of its inputs and safe to call from
//! any number of threads.

mod audio;
mod error;
mod mel;
mod resample;
mod stft;
pub mod wav;

pub use audio::AudioBuffer;
pub use error::{DspError, Result};
pub use mel::{mel_spectrogram, MelFilterbank, MEL_LOG_FLOOR};
pub use resample::resample;
pub use stft::{
    hann_periodic, istft, mirror_index, ola_envelope, pad_reflect, stft, Spectrogram, StftConfig,
    WindowKind,
};
