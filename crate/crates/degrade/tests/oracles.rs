//! Oracle checks for the degradation chain: power-ratio SNR measurement,
//! Schroeder RT60 estimation, direct convolution, analytic clipping
//! fractions, band energies, and staged recipe replay.

use gpse_degrade::{
    apply_recipe, apply_reverb, bandlimit, clip, mix_at_snr, schroeder_rt60, synthesize_rir,
    DegradationRecipe,
};
use gpse_dsp::{stft, AudioBuffer, StftConfig};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn noise_buf(len: usize, rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    AudioBuffer::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), rate).unwrap()
}

fn measured_snr_db(mix: &AudioBuffer, speech: &AudioBuffer) -> f64 {
    let noise_power = mix
        .samples
        .iter()
        .zip(&speech.samples)
        .map(|(m, s)| (m - s) * (m - s))
        .sum::<f64>()
        / mix.len() as f64;
    10.0 * (speech.power() / noise_power).log10()
}

#[test]
fn snr_20_db_measures_20_db() {
    let s = noise_buf(16000, 16000, 1);
    let n = noise_buf(16000, 16000, 2);
    let y = mix_at_snr(&s, &n, 20.0).unwrap();
    let snr = measured_snr_db(&y, &s);
    assert!((snr - 20.0).abs() < 0.01, "measured {snr} dB");
}

#[test]
fn rir_estimates_stay_within_20_percent() {
    for (rt60, lo, hi) in [(1.0, 0.8, 1.2), (0.6, 0.48, 0.72), (1.6, 1.28, 1.92)] {
        for seed in [7u64, 8, 9] {
            let rir = synthesize_rir(rt60, rt60 * 1.25, 16000, seed).unwrap();
            let est = schroeder_rt60(&rir.taps, 16000).unwrap();
            assert!(
                est >= lo && est <= hi,
                "rt60 {rt60} seed {seed}: estimate {est} outside [{lo}, {hi}]"
            );
        }
    }
}

#[test]
fn reverb_matches_direct_convolution_oracle() {
    let x = noise_buf(4000, 16000, 3);
    let rir = synthesize_rir(0.25, 0.25, 16000, 4).unwrap();
    assert!(rir.taps.len() > 128, "exercise the FFT path");
    let y = apply_reverb(&x, &rir).unwrap();

    // Direct O(N*M) convolution, truncated and peak-normalized the same way.
    let mut direct = vec![0.0f64; x.len()];
    for (i, d) in direct.iter_mut().enumerate() {
        let mut acc = 0.0;
        for (j, h) in rir.taps.iter().enumerate() {
            if j > i {
                break;
            }
            acc += x.samples[i - j] * h;
        }
        *d = acc;
    }
    let peak_out = direct.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    let scale = x.peak() / peak_out;
    let max_err = y
        .samples
        .iter()
        .zip(&direct)
        .map(|(a, b)| (a - b * scale).abs())
        .fold(0.0f64, f64::max);
    assert!(max_err < 1e-6, "convolution oracle max err {max_err}");
}

#[test]
fn clipped_fraction_of_full_scale_sine_is_two_thirds() {
    // 50 Hz at 16 kHz over exactly 50 periods; analytic fraction
    // 1 - 2*asin(0.5)/pi = 2/3.
    let n = 16000;
    let x = AudioBuffer::new(
        (0..n).map(|i| (std::f64::consts::TAU * 50.0 * i as f64 / 16000.0).sin()).collect(),
        16000,
    )
    .unwrap();
    let y = clip(&x, 0.5).unwrap();
    let c = 0.5 * x.peak();
    let clipped = x
        .samples
        .iter()
        .zip(&y.samples)
        .filter(|(a, b)| a != b || b.abs() >= c * 0.999999)
        .count();
    let frac = clipped as f64 / n as f64;
    assert!((frac - 2.0 / 3.0).abs() < 0.01, "clipped fraction {frac}");
}

#[test]
fn bandlimit_suppresses_high_band_by_40_db() {
    let x = noise_buf(32000, 16000, 5);
    let y = bandlimit(&x, 4000).unwrap();
    let cfg = StftConfig::new(1024, 256);
    let band_energy = |b: &AudioBuffer, lo: f64, hi: f64| -> f64 {
        let s = stft(b, &cfg).unwrap();
        let hz = 16000.0 / 1024.0;
        s.bins
            .indexed_iter()
            .filter(|((_, k), _)| {
                let f = *k as f64 * hz;
                f >= lo && f <= hi
            })
            .map(|(_, c)| c.norm_sqr())
            .sum()
    };
    let before = band_energy(&x, 5000.0, 8000.0);
    let after = band_energy(&y, 5000.0, 8000.0);
    let drop_db = 10.0 * (after / before).log10();
    assert!(drop_db < -40.0, "high-band drop only {drop_db:.1} dB");
}

#[test]
fn bandlimit_at_nyquist_is_passthrough() {
    let x = noise_buf(16000, 16000, 6);
    let y = bandlimit(&x, 8000).unwrap();
    // 2 * 8000 = source rate, so both resampling hops are identity.
    assert_eq!(x.samples, y.samples);
}

#[test]
fn clip_only_recipe_with_eta_one_is_identity() {
    let x = noise_buf(8000, 16000, 7);
    let n = noise_buf(8000, 16000, 8);
    let r = DegradationRecipe {
        seed: 1,
        snr_db: None,
        rt60_s: None,
        clip_eta: Some(1.0),
        bandwidth_hz: None,
        loss_frames: None,
    };
    let (y, _) = apply_recipe(&x, &r, &n).unwrap();
    assert_eq!(x.samples, y.samples);
}

#[test]
fn recipes_replay_bit_identically() {
    let x = noise_buf(16000, 16000, 9);
    let n = noise_buf(12000, 16000, 10);
    let r = DegradationRecipe {
        seed: 77,
        snr_db: Some(3.0),
        rt60_s: Some(0.8),
        clip_eta: Some(0.7),
        bandwidth_hz: Some(4000),
        loss_frames: Some(vec![2, 3, 17]),
    };
    let (a, _) = apply_recipe(&x, &r, &n).unwrap();
    let (b, _) = apply_recipe(&x, &r, &n).unwrap();
    assert_eq!(a.samples, b.samples);
}

#[test]
fn staged_replay_oracle_confirms_pre_clip_snr() {
    let x = noise_buf(16000, 16000, 11);
    let n = noise_buf(16000, 16000, 12);
    let r = DegradationRecipe {
        seed: 5,
        snr_db: Some(5.0),
        rt60_s: None,
        clip_eta: Some(0.8),
        bandwidth_hz: None,
        loss_frames: None,
    };
    let (y, _) = apply_recipe(&x, &r, &n).unwrap();

    // Stage replay: the mix stage alone must measure 5 dB, and clipping it
    // must reproduce the full chain bit-for-bit.
    let mixed = mix_at_snr(&x, &n, 5.0).unwrap();
    let snr = measured_snr_db(&mixed, &x);
    assert!((snr - 5.0).abs() < 0.01, "pre-clip SNR {snr}");
    let clipped = clip(&mixed, 0.8).unwrap();
    assert_eq!(clipped.samples, y.samples);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    /// Mixing beta*s with beta*n at a given SNR equals beta times the mix.
    #[test]
    fn mix_is_scale_covariant(seed in 0u64..1000, beta in 0.05f64..4.0, snr in -10.0f64..30.0) {
        let s = noise_buf(4000, 16000, seed);
        let n = noise_buf(4000, 16000, seed ^ 0x5555);
        let base = mix_at_snr(&s, &n, snr).unwrap();
        let bs = AudioBuffer::new(s.samples.iter().map(|v| v * beta).collect(), 16000).unwrap();
        let bn = AudioBuffer::new(n.samples.iter().map(|v| v * beta).collect(), 16000).unwrap();
        let scaled = mix_at_snr(&bs, &bn, snr).unwrap();
        for (a, b) in scaled.samples.iter().zip(&base.samples) {
            prop_assert!((a - b * beta).abs() < 1e-9);
        }
    }

    /// A lower eta clips a superset of the samples clipped by a higher eta.
    #[test]
    fn clipping_is_monotone_in_eta(seed in 0u64..1000, e1 in 0.1f64..0.9) {
        let e2 = e1 + 0.05;
        let x = noise_buf(2000, 16000, seed);
        let y1 = clip(&x, e1).unwrap();
        let y2 = clip(&x, e2).unwrap();
        for i in 0..x.len() {
            let clipped2 = y2.samples[i] != x.samples[i];
            let clipped1 = y1.samples[i] != x.samples[i];
            if clipped2 {
                prop_assert!(clipped1, "sample {} clipped at eta {} but not {}", i, e2, e1);
            }
        }
    }

    /// Every RIR drawn from the augmentation range passes the Schroeder check.
    #[test]
    fn sampled_range_rirs_pass_schroeder(seed in 0u64..400) {
        let mut rng = ChaCha20Rng::seed_from_u64(seed);
        let rt60 = rng.gen_range(0.6..=1.6);
        let rir = synthesize_rir(rt60, rt60 * 1.25, 16000, seed).unwrap();
        let est = schroeder_rt60(&rir.taps, 16000).unwrap();
        prop_assert!(est >= 0.8 * rt60 && est <= 1.2 * rt60,
            "rt60 {} estimated {}", rt60, est);
    }
}
