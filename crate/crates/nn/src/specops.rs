//! Differentiable STFT analysis and synthesis built from tape ops, matching
//! the conventions of `gpse_dsp::{stft, istft}` exactly: reflection padding,
//! `ceil(len/hop)` frames, and squared-window normalized overlap-add.

use gpse_dsp::{ola_envelope, StftConfig};

use crate::ctx::Ctx;
use crate::tensor::from_vec;

fn window_const<C: Ctx>(c: &mut C, cfg: &StftConfig) -> C::T {
    let w = cfg.window_values();
    let fft = cfg.fft_size;
    c.constant(from_vec(&[1, fft], w))
}

/// Centered STFT of a 1-d signal node: `[T] -> [frames, fft/2+1, 2]`.
pub fn stft_frames<C: Ctx>(c: &mut C, x: &C::T, cfg: &StftConfig) -> C::T {
    let len = c.shape(x)[0];
    assert!(len > 0, "stft of empty signal");
    let frames = cfg.frame_count(len);
    let pad = cfg.fft_size / 2;
    let padded = c.reflect_pad1d(x, pad, pad);
    let framed = c.frame_signal(&padded, cfg.fft_size, cfg.hop_size, frames);
    let w = window_const(c, cfg);
    let windowed = c.mul(&framed, &w);
    c.rfft_frames(&windowed)
}

/// Normalized overlap-add synthesis: `[frames, fft/2+1, 2] -> [frames * hop]`.
///
/// Requires `hop <= fft/2` so the trimmed output region is fully covered.
pub fn istft_frames<C: Ctx>(c: &mut C, bins: &C::T, cfg: &StftConfig) -> C::T {
    assert!(
        cfg.hop_size <= cfg.fft_size / 2,
        "synthesis needs hop <= fft/2 for full coverage of the output"
    );
    let frames = c.shape(bins)[0];
    let time = c.irfft_frames(bins, cfg.fft_size);
    let w = window_const(c, cfg);
    let windowed = c.mul(&time, &w);
    let ola = c.overlap_add(&windowed, cfg.hop_size);
    let env: Vec<f64> = ola_envelope(frames, cfg).iter().map(|e| e.max(1e-12)).collect();
    let env_len = env.len();
    let env = c.constant(from_vec(&[env_len], env));
    let normalized = c.div(&ola, &env);
    let pad = cfg.fft_size / 2;
    c.slice_axis(&normalized, 0, pad, pad + frames * cfg.hop_size)
}

/// `|STFT|^2` as `[frames, bins]` from packed bins.
pub fn power_from_bins<C: Ctx>(c: &mut C, bins: &C::T) -> C::T {
    let shape = c.shape(bins);
    let (frames, n_bins) = (shape[0], shape[1]);
    let re = c.slice_axis(bins, 2, 0, 1);
    let im = c.slice_axis(bins, 2, 1, 2);
    let re2 = c.square(&re);
    let im2 = c.square(&im);
    let p = c.add(&re2, &im2);
    c.reshape(&p, &[frames, n_bins])
}

/// Log-mel matrix `[frames, n_mels]` of a 1-d signal node.
pub fn log_mel<C: Ctx>(
    c: &mut C,
    x: &C::T,
    cfg: &StftConfig,
    mel_weights_t: &C::T, // [bins, n_mels] constant
) -> C::T {
    let bins = stft_frames(c, x, cfg);
    let power = power_from_bins(c, &bins);
    let mel = c.matmul(&power, mel_weights_t);
    let mel = c.add_scalar(&mel, gpse_dsp::MEL_LOG_FLOOR);
    c.ln(&mel)
}
