use crate::audio::AudioBuffer;
use crate::error::{DspError, Result};

/// Zero crossings of the sinc prototype on each side of the origin.
const SINC_ZERO_CROSSINGS: usize = 64;
/// Kaiser window shape parameter.
const KAISER_BETA: f64 = 14.0;

fn gcd(a: u64, b: u64) -> u64 {
    if b == 0 {
        a
    } else {
        gcd(b, a % b)
    }
}

/// Zeroth-order modified Bessel function of the first kind.
fn bessel_i0(x: f64) -> f64 {
    let half = x / 2.0;
    let mut sum = 1.0;
    let mut term = 1.0;
    for k in 1..64 {
        term *= (half / k as f64) * (half / k as f64);
        sum += term;
        if term < sum * 1e-18 {
            break;
        }
    }
    sum
}

fn sinc(v: f64) -> f64 {
    if v.abs() < 1e-12 {
        1.0
    } else {
        let pv = std::f64::consts::PI * v;
        pv.sin() / pv
    }
}

/// Rational-ratio resampling by Kaiser-windowed sinc interpolation.
///
/// Output length is `round(len * target / source)`; the interpolation filter
/// is cut off at the lower of the two Nyquist frequencies, so the operation
/// is anti-aliased in both directions. Same-rate input passes through
/// bit-identically.
pub fn resample(x: &AudioBuffer, target_rate: u32) -> Result<AudioBuffer> {
    if target_rate == 0 {
        return Err(DspError::InvalidRate("target rate must be positive".into()));
    }
    if target_rate == x.sample_rate {
        return Ok(x.clone());
    }
    x.check_finite()?;

    let src = x.sample_rate as u64;
    let dst = target_rate as u64;
    let g = gcd(src, dst);
    let up = (dst / g) as usize; // phases
    let down = (src / g) as usize;

    let out_len = ((x.len() as f64) * dst as f64 / src as f64).round() as usize;
    if x.is_empty() || out_len == 0 {
        return Ok(AudioBuffer::silence(out_len, target_rate));
    }

    // Cutoff normalized to the input rate (Nyquist = 0.5).
    let fc = 0.5 * (up as f64 / down as f64).min(1.0);
    let half_width = SINC_ZERO_CROSSINGS as f64 / (2.0 * fc);
    let i0_beta = bessel_i0(KAISER_BETA);
    let kaiser = |r: f64| -> f64 {
        let t = 1.0 - r * r;
        if t <= 0.0 {
            0.0
        } else {
            bessel_i0(KAISER_BETA * t.sqrt()) / i0_beta
        }
    };

    // One tap set per output phase, normalized to unit DC gain.
    // Phase p interpolates at fractional offset p/up past the base sample.
    let mut phases: Vec<(isize, Vec<f64>)> = Vec::with_capacity(up);
    for p in 0..up {
        let frac = p as f64 / up as f64;
        let j_min = (frac - half_width).ceil() as isize;
        let j_max = (frac + half_width).floor() as isize;
        let mut taps = Vec::with_capacity((j_max - j_min + 1) as usize);
        let mut sum = 0.0;
        for j in j_min..=j_max {
            let u = frac - j as f64;
            let h = 2.0 * fc * sinc(2.0 * fc * u) * kaiser(u / half_width);
            taps.push(h);
            sum += h;
        }
        for t in taps.iter_mut() {
            *t /= sum;
        }
        phases.push((j_min, taps));
    }

    let n_in = x.len() as isize;
    let mut out = Vec::with_capacity(out_len);
    for n in 0..out_len {
        let pos = n * down; // in units of 1/up input samples
        let idx = (pos / up) as isize;
        let (j_min, taps) = &phases[pos % up];
        let mut acc = 0.0;
        for (m, t) in taps.iter().enumerate() {
            let k = idx + j_min + m as isize;
            if k >= 0 && k < n_in {
                acc += x.samples[k as usize] * t;
            }
        }
        out.push(acc);
    }
    AudioBuffer::new(out, target_rate)
}
