use ndarray::Array2;
use num_complex::Complex64;
use rustfft::FftPlanner;

use crate::audio::AudioBuffer;
use crate::error::{DspError, Result};

/// Analysis window shape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WindowKind {
    Hann,
}

/// Short-time Fourier transform configuration.
///
/// The canonical 16 kHz configuration is FFT 1280, hop 320, Hann, centered;
/// every frame-aligned module in the pipeline shares its hop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StftConfig {
    pub fft_size: usize,
    pub hop_size: usize,
    pub window: WindowKind,
    pub center_padding: bool,
}

impl StftConfig {
    pub fn new(fft_size: usize, hop_size: usize) -> Self {
        Self { fft_size, hop_size, window: WindowKind::Hann, center_padding: true }
    }

    /// FFT 1280 / hop 320 / Hann / centered.
    pub fn canonical_16k() -> Self {
        Self::new(1280, 320)
    }

    pub fn n_bins(&self) -> usize {
        self.fft_size / 2 + 1
    }

    /// Checks sizes and that the squared-window overlap-add envelope is
    /// strictly positive at this hop, which is what normalized overlap-add
    /// reconstruction requires.
    pub fn validate(&self) -> Result<()> {
        if self.fft_size == 0 {
            return Err(DspError::InvalidParameter("fft_size must be > 0".into()));
        }
        if self.hop_size == 0 || self.hop_size > self.fft_size {
            return Err(DspError::InvalidParameter(format!(
                "hop_size must satisfy 0 < hop ({}) <= fft ({})",
                self.hop_size, self.fft_size
            )));
        }
        let w = self.window_values();
        // Envelope over one hop period in the fully-overlapped interior.
        let mut min_env = f64::INFINITY;
        for n in 0..self.hop_size {
            let mut e = 0.0;
            let mut off = n;
            while off < self.fft_size {
                e += w[off] * w[off];
                off += self.hop_size;
            }
            min_env = min_env.min(e);
        }
        if !(min_env > 1e-8) {
            return Err(DspError::InvalidParameter(format!(
                "window/hop violate the overlap-add condition (min envelope {min_env:.3e})"
            )));
        }
        Ok(())
    }

    /// Periodic analysis window of length `fft_size`.
    pub fn window_values(&self) -> Vec<f64> {
        match self.window {
            WindowKind::Hann => hann_periodic(self.fft_size),
        }
    }

    /// Number of frames produced for an input of `len` samples:
    /// `ceil(len / hop)` when centered, the sliding-window count otherwise.
    pub fn frame_count(&self, len: usize) -> usize {
        if self.center_padding {
            len.div_ceil(self.hop_size)
        } else if len < self.fft_size {
            0
        } else {
            (len - self.fft_size) / self.hop_size + 1
        }
    }
}

/// Periodic Hann window: `0.5 * (1 - cos(2*pi*n/size))`.
pub fn hann_periodic(size: usize) -> Vec<f64> {
    (0..size)
        .map(|n| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * n as f64 / size as f64).cos()))
        .collect()
}

/// Mirrors `i` (possibly negative or past the end) into `[0, len)` by
/// reflection without edge repetition, librosa-style.
pub fn mirror_index(i: isize, len: usize) -> usize {
    debug_assert!(len > 0);
    if len == 1 {
        return 0;
    }
    let period = 2 * (len as isize - 1);
    let mut j = i.rem_euclid(period);
    if j >= len as isize {
        j = period - j;
    }
    j as usize
}

/// Reflection-pads `x` by `left` and `right` samples.
pub fn pad_reflect(x: &[f64], left: usize, right: usize) -> Vec<f64> {
    let n = x.len();
    let mut out = Vec::with_capacity(left + n + right);
    for i in 0..left {
        out.push(x[mirror_index(i as isize - left as isize, n)]);
    }
    out.extend_from_slice(x);
    for j in 0..right {
        out.push(x[mirror_index((n + j) as isize, n)]);
    }
    out
}

/// Squared-window overlap-add envelope for `frames` frames.
pub fn ola_envelope(frames: usize, cfg: &StftConfig) -> Vec<f64> {
    let len = if frames == 0 { 0 } else { (frames - 1) * cfg.hop_size + cfg.fft_size };
    let w = cfg.window_values();
    let mut env = vec![0.0; len];
    for f in 0..frames {
        let start = f * cfg.hop_size;
        for (i, wi) in w.iter().enumerate() {
            env[start + i] += wi * wi;
        }
    }
    env
}

/// A complex time-frequency matrix together with the config that produced it.
#[derive(Debug, Clone)]
pub struct Spectrogram {
    /// `[frames x (fft_size/2 + 1)]`
    pub bins: Array2<Complex64>,
    pub config: StftConfig,
    pub source_rate: u32,
}

impl Spectrogram {
    pub fn n_frames(&self) -> usize {
        self.bins.nrows()
    }

    pub fn check_consistent(&self) -> Result<()> {
        if self.bins.ncols() != self.config.n_bins() {
            return Err(DspError::ShapeMismatch(format!(
                "spectrogram has {} bins, config requires {}",
                self.bins.ncols(),
                self.config.n_bins()
            )));
        }
        if self.bins.iter().any(|c| !c.re.is_finite() || !c.im.is_finite()) {
            return Err(DspError::InvalidSignal("non-finite spectrogram bin".into()));
        }
        Ok(())
    }
}

/// Short-time Fourier transform.
///
/// With centered framing the input is reflection-padded by `fft/2` on each
/// side and frame `f` is centered at sample `f * hop`, giving exactly
/// `ceil(len / hop)` frames.
pub fn stft(x: &AudioBuffer, cfg: &StftConfig) -> Result<Spectrogram> {
    cfg.validate()?;
    if x.is_empty() {
        return Err(DspError::DegenerateInput("stft of empty buffer".into()));
    }
    x.check_finite()?;

    let fft = cfg.fft_size;
    let frames = cfg.frame_count(x.len());
    if frames == 0 {
        return Err(DspError::DegenerateInput(format!(
            "input of {} samples yields no frames (fft {}, uncentered)",
            x.len(),
            fft
        )));
    }
    let padded: Vec<f64> = if cfg.center_padding {
        pad_reflect(&x.samples, fft / 2, fft / 2)
    } else {
        x.samples.clone()
    };
    let w = cfg.window_values();

    let plan = FftPlanner::<f64>::new().plan_fft_forward(fft);
    let n_bins = cfg.n_bins();
    let mut bins = Array2::zeros((frames, n_bins));
    let mut buf = vec![Complex64::default(); fft];
    for f in 0..frames {
        let start = f * cfg.hop_size;
        for i in 0..fft {
            buf[i] = Complex64::new(padded[start + i] * w[i], 0.0);
        }
        plan.process(&mut buf);
        for (k, b) in buf.iter().take(n_bins).enumerate() {
            bins[(f, k)] = *b;
        }
    }
    Ok(Spectrogram { bins, config: *cfg, source_rate: x.sample_rate })
}

/// Inverse STFT by windowed overlap-add with squared-window normalization.
///
/// Returns `frames * hop` samples when centered (padding trimmed), so
/// `istft(stft(x))` reconstructs `x` over its original length.
pub fn istft(spec: &Spectrogram) -> Result<AudioBuffer> {
    spec.check_consistent()?;
    let cfg = &spec.config;
    cfg.validate()?;
    let fft = cfg.fft_size;
    let frames = spec.n_frames();
    if frames == 0 {
        return Ok(AudioBuffer::silence(0, spec.source_rate));
    }
    let w = cfg.window_values();

    let plan = FftPlanner::<f64>::new().plan_fft_inverse(fft);
    let ola_len = (frames - 1) * cfg.hop_size + fft;
    let mut acc = vec![0.0f64; ola_len];
    let mut full = vec![Complex64::default(); fft];
    let n_bins = cfg.n_bins();
    for f in 0..frames {
        // Hermitian extension of the non-negative bins.
        for k in 0..n_bins {
            full[k] = spec.bins[(f, k)];
        }
        for k in n_bins..fft {
            full[k] = spec.bins[(f, fft - k)].conj();
        }
        plan.process(&mut full);
        let start = f * cfg.hop_size;
        let scale = 1.0 / fft as f64;
        for i in 0..fft {
            acc[start + i] += full[i].re * scale * w[i];
        }
    }
    let env = ola_envelope(frames, cfg);
    for (a, e) in acc.iter_mut().zip(env.iter()) {
        *a /= e.max(1e-12);
    }

    let samples = if cfg.center_padding {
        let pad = fft / 2;
        let out_len = frames * cfg.hop_size;
        (0..out_len).map(|i| if pad + i < acc.len() { acc[pad + i] } else { 0.0 }).collect()
    } else {
        acc
    };
    AudioBuffer::new(samples, spec.source_rate)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canonical_config_is_valid() {
        StftConfig::canonical_16k().validate().unwrap();
    }

    #[test]
    fn frame_count_matches_ceil() {
        let cfg = StftConfig::canonical_16k();
        assert_eq!(cfg.frame_count(16000), 50);
        assert_eq!(cfg.frame_count(16001), 51);
        assert_eq!(cfg.frame_count(1), 1);
    }

    #[test]
    fn zero_in_zero_out() {
        let cfg = StftConfig::canonical_16k();
        let x = AudioBuffer::silence(16000, 16000);
        let s = stft(&x, &cfg).unwrap();
        assert_eq!(s.bins.dim(), (50, 641));
        assert!(s.bins.iter().all(|c| c.norm() == 0.0));
        let y = istft(&s).unwrap();
        assert_eq!(y.len(), 16000);
        assert!(y.samples.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn empty_input_rejected() {
        let cfg = StftConfig::canonical_16k();
        let x = AudioBuffer::silence(0, 16000);
        assert!(matches!(stft(&x, &cfg), Err(DspError::DegenerateInput(_))));
    }

    #[test]
    fn non_finite_rejected() {
        let cfg = StftConfig::canonical_16k();
        let x = AudioBuffer { samples: vec![f64::INFINITY; 400], sample_rate: 16000 };
        assert!(matches!(stft(&x, &cfg), Err(DspError::InvalidSignal(_))));
    }

    #[test]
    fn istft_rejects_wrong_bin_count() {
        let cfg = StftConfig::canonical_16k();
        let spec = Spectrogram {
            bins: Array2::zeros((10, 640)),
            config: cfg,
            source_rate: 16000,
        };
        assert!(matches!(istft(&spec), Err(DspError::ShapeMismatch(_))));
    }

    #[test]
    fn mirror_index_reflects() {
        assert_eq!(mirror_index(-1, 5), 1);
        assert_eq!(mirror_index(-2, 5), 2);
        assert_eq!(mirror_index(5, 5), 3);
        assert_eq!(mirror_index(0, 5), 0);
        assert_eq!(mirror_index(-3, 1), 0);
    }
}
