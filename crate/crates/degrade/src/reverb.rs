use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;
use rustfft::FftPlanner;

use crate::{DegradeError, Result};
use gpse_dsp::AudioBuffer;

/// A synthesized room impulse response with a known decay target.
#[derive(Debug, Clone)]
pub struct RoomImpulseResponse {
    pub taps: Vec<f64>,
    pub sample_rate: u32,
    pub target_rt60_s: f64,
}

impl RoomImpulseResponse {
    pub fn unit_impulse(sample_rate: u32) -> Self {
        Self { taps: vec![1.0], sample_rate, target_rt60_s: 0.0 }
    }

    pub fn delayed_impulse(delay: usize, sample_rate: u32) -> Self {
        let mut taps = vec![0.0; delay + 1];
        taps[delay] = 1.0;
        Self { taps, sample_rate, target_rt60_s: 0.0 }
    }
}

/// Synthesizes an impulse response as a unit direct path followed by
/// Gaussian noise with an exponential envelope `exp(-t * ln(1000) / rt60)`,
/// which decays by 60 dB over `rt60_s` by construction.
pub fn synthesize_rir(
    rt60_s: f64,
    length_s: f64,
    sample_rate: u32,
    seed: u64,
) -> Result<RoomImpulseResponse> {
    if !(rt60_s > 0.0) {
        return Err(DegradeError::InvalidParameter(format!(
            "rt60 must be positive, got {rt60_s}"
        )));
    }
    if length_s < rt60_s {
        return Err(DegradeError::InvalidParameter(format!(
            "length {length_s} s is shorter than rt60 {rt60_s} s"
        )));
    }
    let n = (length_s * sample_rate as f64).round() as usize;
    let decay = (1000f64).ln() / rt60_s;
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let mut taps = Vec::with_capacity(n);
    taps.push(1.0);
    let tail_gain = 0.2;
    for i in 1..n {
        let t = i as f64 / sample_rate as f64;
        // Box-Muller standard normal.
        let u1: f64 = rng.gen_range(f64::EPSILON..1.0);
        let u2: f64 = rng.gen_range(0.0..1.0);
        let z = (-2.0 * u1.ln()).sqrt() * (std::f64::consts::TAU * u2).cos();
        taps.push(tail_gain * z * (-decay * t).exp());
    }
    // The direct path must stay the maximum tap.
    let tail_peak = taps[1..].iter().fold(0.0f64, |m, t| m.max(t.abs()));
    if tail_peak >= 1.0 {
        let s = 0.999 / tail_peak;
        for t in taps[1..].iter_mut() {
            *t *= s;
        }
    }
    Ok(RoomImpulseResponse { taps, sample_rate, target_rt60_s: rt60_s })
}

/// RT60 estimate by Schroeder backward integration: the energy-decay curve is
/// fit by least squares between -5 dB and -25 dB and extrapolated to -60 dB.
/// Returns `None` when the response has no usable decay region.
pub fn schroeder_rt60(taps: &[f64], sample_rate: u32) -> Option<f64> {
    if taps.len() < 2 {
        return None;
    }
    let mut edc: Vec<f64> = Vec::with_capacity(taps.len());
    let mut acc = 0.0;
    for t in taps.iter().rev() {
        acc += t * t;
        edc.push(acc);
    }
    edc.reverse();
    let total = edc[0];
    if total <= 0.0 {
        return None;
    }
    // (time_s, level_db) points inside the fit window.
    let pts: Vec<(f64, f64)> = edc
        .iter()
        .enumerate()
        .filter_map(|(i, e)| {
            let db = 10.0 * (e / total).log10();
            (-25.0..=-5.0).contains(&db).then(|| (i as f64 / sample_rate as f64, db))
        })
        .collect();
    if pts.len() < 8 {
        return None;
    }
    let n = pts.len() as f64;
    let sx: f64 = pts.iter().map(|p| p.0).sum();
    let sy: f64 = pts.iter().map(|p| p.1).sum();
    let sxx: f64 = pts.iter().map(|p| p.0 * p.0).sum();
    let sxy: f64 = pts.iter().map(|p| p.0 * p.1).sum();
    let denom = n * sxx - sx * sx;
    if denom.abs() < 1e-12 {
        return None;
    }
    let slope = (n * sxy - sx * sy) / denom; // dB per second, negative
    if slope >= -1e-9 {
        return None;
    }
    Some(-60.0 / slope)
}

/// Convolves with the impulse response, truncates to the input length, and
/// normalizes the result back to the pre-reverb peak.
pub fn apply_reverb(x: &AudioBuffer, rir: &RoomImpulseResponse) -> Result<AudioBuffer> {
    if x.sample_rate != rir.sample_rate {
        return Err(DegradeError::RateMismatch(x.sample_rate, rir.sample_rate));
    }
    if x.is_empty() || rir.taps.is_empty() {
        return Err(DegradeError::DegenerateInput("empty signal or impulse response".into()));
    }
    let full = convolve(&x.samples, &rir.taps);
    let mut out: Vec<f64> = full[..x.len()].to_vec();
    let peak_in = x.peak();
    let peak_out = out.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak_out > 0.0 && peak_in > 0.0 {
        let s = peak_in / peak_out;
        for v in out.iter_mut() {
            *v *= s;
        }
    }
    Ok(AudioBuffer { samples: out, sample_rate: x.sample_rate })
}

/// Full linear convolution; direct for short kernels (exact for impulses),
/// FFT-based otherwise.
fn convolve(x: &[f64], h: &[f64]) -> Vec<f64> {
    let out_len = x.len() + h.len() - 1;
    if h.len() <= 128 {
        let mut out = vec![0.0; out_len];
        for (j, hj) in h.iter().enumerate() {
            if *hj == 0.0 {
                continue;
            }
            for (i, xi) in x.iter().enumerate() {
                out[i + j] += xi * hj;
            }
        }
        return out;
    }
    let size = out_len.next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);
    let mut a: Vec<Complex64> =
        x.iter().map(|v| Complex64::new(*v, 0.0)).chain(std::iter::repeat(Complex64::default())).take(size).collect();
    let mut b: Vec<Complex64> =
        h.iter().map(|v| Complex64::new(*v, 0.0)).chain(std::iter::repeat(Complex64::default())).take(size).collect();
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..out_len].iter().map(|c| c.re * scale).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_impulse_is_identity() {
        let x = AudioBuffer::new((0..1000).map(|i| (i as f64 * 0.02).sin()).collect(), 16000)
            .unwrap();
        let y = apply_reverb(&x, &RoomImpulseResponse::unit_impulse(16000)).unwrap();
        assert_eq!(x.samples, y.samples);
    }

    #[test]
    fn delayed_impulse_shifts() {
        let x = AudioBuffer::new((0..100).map(|i| i as f64 / 100.0).collect(), 16000).unwrap();
        let y = apply_reverb(&x, &RoomImpulseResponse::delayed_impulse(10, 16000)).unwrap();
        assert_eq!(y.len(), 100);
        // Peak normalization rescales the shifted copy back to the input peak.
        let expected_scale = x.peak() / x.samples[..90].iter().fold(0.0f64, |m, s| m.max(s.abs()));
        for i in 0..90 {
            assert!((y.samples[i + 10] - x.samples[i] * expected_scale).abs() < 1e-12);
        }
        for i in 0..10 {
            assert_eq!(y.samples[i], 0.0);
        }
    }

    #[test]
    fn rate_mismatch_rejected() {
        let x = AudioBuffer::silence(100, 8000);
        let rir = RoomImpulseResponse::unit_impulse(16000);
        assert!(matches!(apply_reverb(&x, &rir), Err(DegradeError::RateMismatch(_, _))));
    }

    #[test]
    fn rir_needs_positive_rt60_and_enough_length() {
        assert!(synthesize_rir(0.0, 1.0, 16000, 1).is_err());
        assert!(synthesize_rir(-1.0, 1.0, 16000, 1).is_err());
        assert!(synthesize_rir(1.0, 0.5, 16000, 1).is_err());
    }

    #[test]
    fn direct_path_is_the_maximum() {
        for seed in 0..20 {
            let rir = synthesize_rir(1.0, 1.25, 16000, seed).unwrap();
            assert_eq!(rir.taps[0], 1.0);
            assert!(rir.taps[1..].iter().all(|t| t.abs() < 1.0));
        }
    }

    #[test]
    fn schroeder_recovers_analytic_decay() {
        // Deterministic pure exponential: amplitude halves every ... exact RT60 1.0 s.
        let rate = 16000u32;
        let decay = (1000f64).ln();
        let taps: Vec<f64> =
            (0..20000).map(|i| (-decay * i as f64 / rate as f64).exp()).collect();
        let est = schroeder_rt60(&taps, rate).unwrap();
        assert!((est - 1.0).abs() < 0.02, "estimate {est}");
    }
}
