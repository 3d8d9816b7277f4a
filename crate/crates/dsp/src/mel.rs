use ndarray::Array2;

use crate::audio::AudioBuffer;
use crate::error::{DspError, Result};
use crate::stft::{stft, StftConfig};

/// Floor added to mel power before the log so silence maps to `ln(MEL_LOG_FLOOR)`.
pub const MEL_LOG_FLOOR: f64 = 1e-5;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular mel filterbank over the non-negative FFT bins.
#[derive(Debug, Clone)]
pub struct MelFilterbank {
    pub n_mels: usize,
    pub f_min: f64,
    pub f_max: f64,
    pub sample_rate: u32,
    pub fft_size: usize,
    /// `[n_mels x (fft_size/2 + 1)]`, all weights >= 0.
    pub weights: Array2<f64>,
}

impl MelFilterbank {
    /// Builds the filterbank, rejecting frequency ranges outside
    /// `0 <= f_min < f_max <= rate/2` and resolutions that would leave a
    /// mel row with no contributing FFT bin.
    pub fn new(
        n_mels: usize,
        f_min: f64,
        f_max: f64,
        sample_rate: u32,
        fft_size: usize,
    ) -> Result<Self> {
        if n_mels == 0 {
            return Err(DspError::InvalidParameter("n_mels must be > 0".into()));
        }
        let nyquist = sample_rate as f64 / 2.0;
        if !(f_min >= 0.0 && f_min < f_max && f_max <= nyquist) {
            return Err(DspError::InvalidParameter(format!(
                "mel range [{f_min}, {f_max}] must satisfy 0 <= f_min < f_max <= {nyquist}"
            )));
        }
        let n_bins = fft_size / 2 + 1;
        let mel_lo = hz_to_mel(f_min);
        let mel_hi = hz_to_mel(f_max);
        // n_mels + 2 edge points, triangles between consecutive triples.
        let edges: Vec<f64> = (0..n_mels + 2)
            .map(|i| mel_to_hz(mel_lo + (mel_hi - mel_lo) * i as f64 / (n_mels + 1) as f64))
            .collect();
        let bin_hz = sample_rate as f64 / fft_size as f64;
        let mut weights = Array2::zeros((n_mels, n_bins));
        for m in 0..n_mels {
            let (lo, center, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            for k in 0..n_bins {
                let f = k as f64 * bin_hz;
                let w = if f <= lo || f >= hi {
                    0.0
                } else if f <= center {
                    (f - lo) / (center - lo)
                } else {
                    (hi - f) / (hi - center)
                };
                weights[(m, k)] = w;
            }
        }
        for m in 0..n_mels {
            if weights.row(m).iter().all(|w| *w == 0.0) {
                return Err(DspError::InvalidParameter(format!(
                    "mel row {m} has no contributing FFT bin; reduce n_mels or raise fft_size"
                )));
            }
        }
        Ok(Self { n_mels, f_min, f_max, sample_rate, fft_size, weights })
    }
}

/// Log-mel spectrogram: `ln(fb . |STFT|^2 + MEL_LOG_FLOOR)`, `[frames x n_mels]`.
pub fn mel_spectrogram(
    x: &AudioBuffer,
    cfg: &StftConfig,
    fb: &MelFilterbank,
) -> Result<Array2<f64>> {
    if fb.fft_size != cfg.fft_size {
        return Err(DspError::ShapeMismatch(format!(
            "filterbank built for fft {}, config has fft {}",
            fb.fft_size, cfg.fft_size
        )));
    }
    if fb.sample_rate != x.sample_rate {
        return Err(DspError::RateMismatch(fb.sample_rate, x.sample_rate));
    }
    let spec = stft(x, cfg)?;
    let frames = spec.n_frames();
    let mut out = Array2::zeros((frames, fb.n_mels));
    for f in 0..frames {
        for m in 0..fb.n_mels {
            let mut acc = 0.0;
            for k in 0..cfg.n_bins() {
                let w = fb.weights[(m, k)];
                if w != 0.0 {
                    acc += w * spec.bins[(f, k)].norm_sqr();
                }
            }
            out[(f, m)] = (acc + MEL_LOG_FLOOR).ln();
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn silence_hits_the_log_floor() {
        let cfg = StftConfig::canonical_16k();
        let fb = MelFilterbank::new(40, 0.0, 8000.0, 16000, cfg.fft_size).unwrap();
        let x = AudioBuffer::silence(16000, 16000);
        let m = mel_spectrogram(&x, &cfg, &fb).unwrap();
        assert_eq!(m.dim(), (50, 40));
        let floor = MEL_LOG_FLOOR.ln();
        assert!(m.iter().all(|v| (*v - floor).abs() < 1e-12));
    }

    #[test]
    fn identical_signals_give_identical_matrices() {
        let cfg = StftConfig::new(512, 128);
        let fb = MelFilterbank::new(24, 0.0, 8000.0, 16000, 512).unwrap();
        let x = AudioBuffer::new((0..4000).map(|i| (i as f64 * 0.013).sin()).collect(), 16000)
            .unwrap();
        let a = mel_spectrogram(&x, &cfg, &fb).unwrap();
        let b = mel_spectrogram(&x, &cfg, &fb).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn rejects_bad_range() {
        assert!(MelFilterbank::new(40, 4000.0, 4000.0, 16000, 1280).is_err());
        assert!(MelFilterbank::new(40, 0.0, 9000.0, 16000, 1280).is_err());
    }

    #[test]
    fn every_row_nonzero_for_loss_scales() {
        // Mel counts used by the multi-scale loss at both pipeline rates.
        for (fft, n_mels) in [(256, 12), (512, 24), (1024, 48), (2048, 80)] {
            for rate in [16000u32, 48000] {
                let fb = MelFilterbank::new(n_mels, 0.0, rate as f64 / 2.0, rate, fft).unwrap();
                assert!(fb.weights.iter().all(|w| *w >= 0.0));
            }
        }
    }

    #[test]
    fn rejects_fft_mismatch() {
        let cfg = StftConfig::canonical_16k();
        let fb = MelFilterbank::new(40, 0.0, 8000.0, 16000, 512).unwrap();
        let x = AudioBuffer::silence(16000, 16000);
        assert!(matches!(
            mel_spectrogram(&x, &cfg, &fb),
            Err(DspError::ShapeMismatch(_))
        ));
    }
}
