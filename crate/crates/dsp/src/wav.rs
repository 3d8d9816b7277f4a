use std::path::Path;

use hound::{SampleFormat, WavReader, WavSpec, WavWriter};

use crate::audio::AudioBuffer;
use crate::error::{DspError, Result};

/// On-disk sample encoding for [`write_wav`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum WavEncoding {
    Pcm16,
    Pcm24,
    Float32,
}

/// Reads a mono WAV file (PCM 16/24-bit or 32-bit float) into full-scale f64.
pub fn read_wav(path: &Path) -> Result<AudioBuffer> {
    let reader = WavReader::open(path)?;
    let spec = reader.spec();
    if spec.channels != 1 {
        return Err(DspError::UnsupportedChannels(spec.channels));
    }
    let samples: Vec<f64> = match (spec.sample_format, spec.bits_per_sample) {
        (SampleFormat::Int, 16) => reader
            .into_samples::<i16>()
            .map(|s| s.map(|v| v as f64 / 32768.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Int, 24) => reader
            .into_samples::<i32>()
            .map(|s| s.map(|v| v as f64 / 8_388_608.0))
            .collect::<std::result::Result<_, _>>()?,
        (SampleFormat::Float, 32) => reader
            .into_samples::<f32>()
            .map(|s| s.map(|v| v as f64))
            .collect::<std::result::Result<_, _>>()?,
        (fmt, bits) => {
            return Err(DspError::InvalidParameter(format!(
                "unsupported WAV encoding: {fmt:?} {bits}-bit (PCM 16/24 or float 32 required)"
            )))
        }
    };
    AudioBuffer::new(samples, spec.sample_rate)
}

/// Writes a mono WAV file in the requested encoding, clamping to full scale
/// for the integer formats.
pub fn write_wav(path: &Path, x: &AudioBuffer, encoding: WavEncoding) -> Result<()> {
    x.check_finite()?;
    let (bits, format) = match encoding {
        WavEncoding::Pcm16 => (16, SampleFormat::Int),
        WavEncoding::Pcm24 => (24, SampleFormat::Int),
        WavEncoding::Float32 => (32, SampleFormat::Float),
    };
    let spec = WavSpec {
        channels: 1,
        sample_rate: x.sample_rate,
        bits_per_sample: bits,
        sample_format: format,
    };
    let mut writer = WavWriter::create(path, spec)?;
    match encoding {
        WavEncoding::Pcm16 => {
            for &s in &x.samples {
                let v = (s * 32768.0).round().clamp(-32768.0, 32767.0) as i16;
                writer.write_sample(v)?;
            }
        }
        WavEncoding::Pcm24 => {
            for &s in &x.samples {
                let v = (s * 8_388_608.0).round().clamp(-8_388_608.0, 8_388_607.0) as i32;
                writer.write_sample(v)?;
            }
        }
        WavEncoding::Float32 => {
            for &s in &x.samples {
                writer.write_sample(s as f32)?;
            }
        }
    }
    writer.finalize()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_all_encodings() {
        let dir = tempfile::tempdir().unwrap();
        let x = AudioBuffer::new(
            (0..2000).map(|i| (i as f64 * 0.02).sin() * 0.7).collect(),
            16000,
        )
        .unwrap();
        for (enc, tol) in [
            (WavEncoding::Pcm16, 1.0 / 32768.0),
            (WavEncoding::Pcm24, 1.0 / 8_388_608.0),
            (WavEncoding::Float32, 1e-7),
        ] {
            let path = dir.path().join(format!("{enc:?}.wav"));
            write_wav(&path, &x, enc).unwrap();
            let y = read_wav(&path).unwrap();
            assert_eq!(y.sample_rate, 16000);
            assert_eq!(y.len(), x.len());
            let max_err = x
                .samples
                .iter()
                .zip(&y.samples)
                .map(|(a, b)| (a - b).abs())
                .fold(0.0f64, f64::max);
            assert!(max_err <= tol, "{enc:?}: max err {max_err} > {tol}");
        }
    }

    #[test]
    fn stereo_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("stereo.wav");
        let spec = WavSpec {
            channels: 2,
            sample_rate: 16000,
            bits_per_sample: 16,
            sample_format: SampleFormat::Int,
        };
        let mut w = WavWriter::create(&path, spec).unwrap();
        for _ in 0..100 {
            w.write_sample(0i16).unwrap();
            w.write_sample(0i16).unwrap();
        }
        w.finalize().unwrap();
        assert!(matches!(read_wav(&path), Err(DspError::UnsupportedChannels(2))));
    }
}
