use gpse_dsp::AudioBuffer;
use gpse_plc::{detect_loss, detect_loss_with, embed_mask, inject_loss, LossMask};
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn speech_like(len: usize, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    // Uniform noise has RMS ~0.58 * amp; keep well above the 0.05 RMS bar.
    AudioBuffer::new((0..len).map(|_| rng.gen_range(-0.5..0.5)).collect(), 16000).unwrap()
}

fn random_mask(n_frames: usize, seed: u64) -> LossMask {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    LossMask::new(320, (0..n_frames).filter(|_| rng.gen_bool(0.25)))
}

#[test]
fn inject_then_detect_recovers_the_mask_exactly() {
    for seed in 0..50u64 {
        let x = speech_like(16000, seed);
        assert!(x.rms() >= 0.05);
        let mask = random_mask(50, seed.wrapping_mul(7919));
        let degraded = inject_loss(&x, &mask).unwrap();
        let detected = detect_loss(&degraded, 320).unwrap();
        assert_eq!(detected.to_vec(), mask.to_vec(), "seed {seed}");
    }
}

#[test]
fn nonzero_sample_set_matches_complement_oracle() {
    let x = speech_like(16321, 99);
    let mask = random_mask(52, 100);
    let y = inject_loss(&x, &mask).unwrap();
    for (i, s) in y.samples.iter().enumerate() {
        let in_lost_frame = mask.contains(i / 320);
        if in_lost_frame {
            assert_eq!(*s, 0.0, "sample {i} should be zeroed");
        } else {
            assert_eq!(*s, x.samples[i], "sample {i} should be untouched");
        }
    }
}

#[test]
fn detection_is_gain_invariant_down_to_1e3() {
    let x = speech_like(16000, 7);
    let mask = random_mask(50, 8);
    for gain in [1.0, 0.1, 1e-2, 1e-3] {
        let scaled =
            AudioBuffer::new(x.samples.iter().map(|s| s * gain).collect(), 16000).unwrap();
        let degraded = inject_loss(&scaled, &mask).unwrap();
        let detected = detect_loss(&degraded, 320).unwrap();
        assert_eq!(detected.to_vec(), mask.to_vec(), "gain {gain}");
    }
}

#[test]
fn embed_matches_indicator_oracle() {
    let mask = random_mask(64, 42);
    let flags = embed_mask(&mask, 64).unwrap();
    for (f, flag) in flags.iter().enumerate() {
        assert_eq!(*flag, mask.contains(f));
    }
}

#[test]
fn custom_thresholds_are_honored() {
    // With a huge relative threshold everything is "lost".
    let x = speech_like(3200, 3);
    let mask = detect_loss_with(&x, 320, 1e-10, 10.0).unwrap();
    assert_eq!(mask.len(), 10);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn inject_is_idempotent(seed in 0u64..10_000, frames in 1usize..60) {
        let x = speech_like(frames * 320, seed);
        let mask = random_mask(frames, seed ^ 0xABCD);
        let once = inject_loss(&x, &mask).unwrap();
        let twice = inject_loss(&once, &mask).unwrap();
        prop_assert_eq!(once.samples, twice.samples);
    }
}
