//! Oracle checks for the DSP primitives: a naive per-frame DFT, band-energy
//! measurements, and analytic constants, all independent of the library's
//! FFT/resampler code paths.

use gpse_dsp::{istft, mel_spectrogram, resample, stft, AudioBuffer, MelFilterbank, StftConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn noise(len: usize, rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.gen_range(-1.0..1.0)).collect(), rate).unwrap()
}

/// Independent mirror padding (no edge repetition) used by the DFT oracle.
fn oracle_pad(x: &[f64], pad: usize) -> Vec<f64> {
    let n = x.len() as isize;
    let period = 2 * (n - 1);
    let reflect = |i: isize| -> f64 {
        let mut j = i.rem_euclid(period);
        if j >= n {
            j = period - j;
        }
        x[j as usize]
    };
    (-(pad as isize)..n + pad as isize).map(reflect).collect()
}

#[test]
fn stft_matches_naive_dft_oracle() {
    let cfg = StftConfig::canonical_16k();
    let x = noise(16000, 16000, 11);
    let spec = stft(&x, &cfg).unwrap();
    assert_eq!(spec.bins.dim(), (50, 641));

    let fft = cfg.fft_size;
    let padded = oracle_pad(&x.samples, fft / 2);
    let window: Vec<f64> = (0..fft)
        .map(|i| 0.5 * (1.0 - (2.0 * std::f64::consts::PI * i as f64 / fft as f64).cos()))
        .collect();

    let mut max_err = 0.0f64;
    for f in 0..50 {
        let start = f * cfg.hop_size;
        for k in 0..=fft / 2 {
            let mut re = 0.0;
            let mut im = 0.0;
            for n in 0..fft {
                let v = padded[start + n] * window[n];
                let ang = -2.0 * std::f64::consts::PI * (k * n) as f64 / fft as f64;
                re += v * ang.cos();
                im += v * ang.sin();
            }
            let b = spec.bins[(f, k)];
            max_err = max_err.max((b.re - re).abs()).max((b.im - im).abs());
        }
    }
    assert!(max_err < 1e-6, "max abs error vs naive DFT: {max_err}");
}

#[test]
fn round_trip_reconstructs_within_1e6() {
    let cfg = StftConfig::canonical_16k();
    let x = noise(16000, 16000, 22);
    let y = istft(&stft(&x, &cfg).unwrap()).unwrap();
    assert_eq!(y.len(), 16000);
    let max_err = x
        .samples
        .iter()
        .zip(&y.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err < 1e-6, "round-trip max err {max_err}");
}

#[test]
fn fifty_frames_give_exactly_16000_samples() {
    let cfg = StftConfig::canonical_16k();
    let x = noise(16000, 16000, 33);
    let spec = stft(&x, &cfg).unwrap();
    assert_eq!(spec.n_frames(), 50);
    assert_eq!(istft(&spec).unwrap().len(), 50 * 320);
}

#[test]
fn parseval_energy_ratio_within_one_percent() {
    let cfg = StftConfig::canonical_16k();
    let x = noise(64000, 16000, 44);
    let spec = stft(&x, &cfg).unwrap();
    let stft_energy: f64 = spec
        .bins
        .rows()
        .into_iter()
        .flat_map(|row| {
            // Hermitian double-count for the interior bins.
            row.iter()
                .enumerate()
                .map(|(k, c)| {
                    let m = if k == 0 || k == cfg.fft_size / 2 { 1.0 } else { 2.0 };
                    m * c.norm_sqr()
                })
                .collect::<Vec<_>>()
        })
        .sum();
    let sig_energy: f64 = x.samples.iter().map(|v| v * v).sum();
    let w = gpse_dsp::hann_periodic(cfg.fft_size);
    let w2: f64 = w.iter().map(|v| v * v).sum();
    let expected = cfg.fft_size as f64 * w2 / cfg.hop_size as f64;
    let ratio = stft_energy / sig_energy / expected;
    assert!((ratio - 1.0).abs() < 0.01, "Parseval ratio off by {}", (ratio - 1.0).abs());
}

#[test]
fn mel_matches_matrix_multiply_oracle() {
    let cfg = StftConfig::new(512, 128);
    let fb = MelFilterbank::new(24, 0.0, 8000.0, 16000, 512).unwrap();
    let x = noise(8000, 16000, 55);
    let got = mel_spectrogram(&x, &cfg, &fb).unwrap();

    let spec = stft(&x, &cfg).unwrap();
    let mut max_err = 0.0f64;
    for f in 0..spec.n_frames() {
        for m in 0..fb.n_mels {
            let mut acc = 0.0;
            for k in 0..cfg.n_bins() {
                let c = spec.bins[(f, k)];
                acc += fb.weights[(m, k)] * (c.re * c.re + c.im * c.im);
            }
            let want = (acc + gpse_dsp::MEL_LOG_FLOOR).ln();
            max_err = max_err.max((got[(f, m)] - want).abs());
        }
    }
    assert!(max_err < 1e-5, "mel oracle max err {max_err}");
}

#[test]
fn upsampled_sine_keeps_its_peak_and_gains_no_images() {
    // 1 kHz sine at 16 kHz, resampled to 48 kHz.
    let n = 16000;
    let x = AudioBuffer::new(
        (0..n)
            .map(|i| (2.0 * std::f64::consts::PI * 1000.0 * i as f64 / 16000.0).sin())
            .collect(),
        16000,
    )
    .unwrap();
    let y = resample(&x, 48000).unwrap();
    assert_eq!(y.len(), 48000);

    // FFT-peak oracle over the interior (edges carry filter transients).
    let seg = &y.samples[4800..43200];
    let m = seg.len();
    let mut planner = rustfft::FftPlanner::<f64>::new();
    let fft = planner.plan_fft_forward(m);
    let mut buf: Vec<rustfft::num_complex::Complex<f64>> =
        seg.iter().map(|v| rustfft::num_complex::Complex::new(*v, 0.0)).collect();
    fft.process(&mut buf);
    let hz_per_bin = 48000.0 / m as f64;
    let half = m / 2;
    let mags: Vec<f64> = buf[..half].iter().map(|c| c.norm_sqr()).collect();
    let peak_bin = mags
        .iter()
        .enumerate()
        .max_by(|a, b| a.1.partial_cmp(b.1).unwrap())
        .unwrap()
        .0;
    let peak_hz = peak_bin as f64 * hz_per_bin;
    assert!((peak_hz - 1000.0).abs() < 5.0, "peak at {peak_hz} Hz");

    let cut = (8000.0 / hz_per_bin).ceil() as usize;
    let low: f64 = mags[..cut].iter().sum();
    let high: f64 = mags[cut..].iter().sum();
    let rejection_db = 10.0 * (high / low).log10();
    assert!(rejection_db < -60.0, "image rejection only {rejection_db:.1} dB");
}

#[test]
fn down_up_round_trip_preserves_bandlimited_content() {
    // Sum of seeded sinusoids below 7 kHz: exactly band-limited content.
    let mut rng = ChaCha20Rng::seed_from_u64(66);
    let n = 48000;
    let mut x = vec![0.0f64; n];
    for _ in 0..40 {
        let f = rng.gen_range(50.0..7000.0);
        let a = rng.gen_range(0.01..0.1);
        let p = rng.gen_range(0.0..std::f64::consts::TAU);
        for (i, v) in x.iter_mut().enumerate() {
            *v += a * (std::f64::consts::TAU * f * i as f64 / 48000.0 + p).sin();
        }
    }
    let x = AudioBuffer::new(x, 48000).unwrap();
    let y = resample(&resample(&x, 16000).unwrap(), 48000).unwrap();
    assert_eq!(y.len(), x.len());

    // SI-SDR over the interior, avoiding edge transients.
    let a = &x.samples[2400..45600];
    let b = &y.samples[2400..45600];
    let dot: f64 = a.iter().zip(b).map(|(s, e)| s * e).sum();
    let ref_energy: f64 = a.iter().map(|s| s * s).sum();
    let alpha = dot / ref_energy;
    let err: f64 = a.iter().zip(b).map(|(s, e)| (alpha * s - e).powi(2)).sum();
    let si_sdr = 10.0 * (alpha * alpha * ref_energy / err).log10();
    assert!(si_sdr > 40.0, "SI-SDR after 48k->16k->48k: {si_sdr:.1} dB");
}
