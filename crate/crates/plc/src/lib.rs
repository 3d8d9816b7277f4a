//! Packet-loss handling: zero-fill loss injection, frame-energy loss
//! detection, and the per-frame substitution flags the encoder consumes.
//!
//! Loss frames are 20 ms at 16 kHz (320 samples), matching the encoder hop so
//! one lost packet maps to exactly one encoder frame.

use std::collections::BTreeSet;

use gpse_dsp::AudioBuffer;
use thiserror::Error;

/// Default loss-frame size in samples (20 ms at 16 kHz, the encoder hop).
pub const DEFAULT_FRAME_SIZE: usize = 320;

/// Absolute frame-energy floor below which a frame counts as lost.
pub const DETECT_EPS_ABS: f64 = 1e-10;
/// Relative threshold against the utterance mean frame energy.
pub const DETECT_EPS_REL: f64 = 1e-6;

#[derive(Error, Debug)]
pub enum PlcError {
    #[error("invalid mask: {0}")]
    InvalidMask(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
}

pub type Result<T> = std::result::Result<T, PlcError>;

/// Frame indices lost in transport, aligned to a fixed frame size.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LossMask {
    pub frame_size: usize,
    lost_frames: BTreeSet<usize>,
}

impl LossMask {
    pub fn new(frame_size: usize, lost: impl IntoIterator<Item = usize>) -> Self {
        Self { frame_size, lost_frames: lost.into_iter().collect() }
    }

    pub fn empty(frame_size: usize) -> Self {
        Self { frame_size, lost_frames: BTreeSet::new() }
    }

    pub fn lost_frames(&self) -> impl Iterator<Item = usize> + '_ {
        self.lost_frames.iter().copied()
    }

    pub fn to_vec(&self) -> Vec<usize> {
        self.lost_frames.iter().copied().collect()
    }

    pub fn contains(&self, frame: usize) -> bool {
        self.lost_frames.contains(&frame)
    }

    pub fn len(&self) -> usize {
        self.lost_frames.len()
    }

    pub fn is_empty(&self) -> bool {
        self.lost_frames.is_empty()
    }

    pub fn max_frame(&self) -> Option<usize> {
        self.lost_frames.iter().next_back().copied()
    }
}

fn n_frames(len: usize, frame_size: usize) -> usize {
    len.div_ceil(frame_size)
}

/// Zeroes the samples of every lost frame, leaving the rest untouched.
pub fn inject_loss(x: &AudioBuffer, mask: &LossMask) -> Result<AudioBuffer> {
    let total = n_frames(x.len(), mask.frame_size);
    if let Some(max) = mask.max_frame() {
        if max >= total {
            return Err(PlcError::InvalidMask(format!(
                "frame {max} out of range (signal has {total} frames)"
            )));
        }
    }
    let mut out = x.clone();
    for f in mask.lost_frames() {
        let start = f * mask.frame_size;
        let end = (start + mask.frame_size).min(out.len());
        out.samples[start..end].fill(0.0);
    }
    Ok(out)
}

/// Flags frame `i` as lost iff its energy falls below
/// `max(DETECT_EPS_ABS, DETECT_EPS_REL * mean frame energy)`.
///
/// The dual threshold separates digital zeros from quiet speech; on an
/// all-zero signal every frame is flagged.
pub fn detect_loss(x: &AudioBuffer, frame_size: usize) -> Result<LossMask> {
    detect_loss_with(x, frame_size, DETECT_EPS_ABS, DETECT_EPS_REL)
}

/// [`detect_loss`] with explicit thresholds.
pub fn detect_loss_with(
    x: &AudioBuffer,
    frame_size: usize,
    eps_abs: f64,
    eps_rel: f64,
) -> Result<LossMask> {
    if x.is_empty() {
        return Err(PlcError::DegenerateInput("detect_loss on empty buffer".into()));
    }
    if frame_size == 0 {
        return Err(PlcError::InvalidMask("frame_size must be > 0".into()));
    }
    let total = n_frames(x.len(), frame_size);
    let energies: Vec<f64> = (0..total)
        .map(|f| {
            let start = f * frame_size;
            let end = (start + frame_size).min(x.len());
            x.samples[start..end].iter().map(|s| s * s).sum()
        })
        .collect();
    let mean = energies.iter().sum::<f64>() / total as f64;
    let threshold = eps_abs.max(eps_rel * mean);
    let lost = energies
        .iter()
        .enumerate()
        .filter(|(_, e)| **e < threshold)
        .map(|(f, _)| f);
    Ok(LossMask::new(frame_size, lost))
}

/// Expands a mask into per-frame substitution flags of length `total_frames`.
pub fn embed_mask(mask: &LossMask, total_frames: usize) -> Result<Vec<bool>> {
    if let Some(max) = mask.max_frame() {
        if max >= total_frames {
            return Err(PlcError::ShapeMismatch(format!(
                "mask frame {max} does not fit in {total_frames} frames"
            )));
        }
    }
    let mut flags = vec![false; total_frames];
    for f in mask.lost_frames() {
        flags[f] = true;
    }
    Ok(flags)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_mask_is_identity() {
        let x = AudioBuffer::new((0..3200).map(|i| (i as f64 * 0.01).sin()).collect(), 16000)
            .unwrap();
        let y = inject_loss(&x, &LossMask::empty(320)).unwrap();
        assert_eq!(x.samples, y.samples);
    }

    #[test]
    fn frames_5_to_7_are_zeroed() {
        let x = AudioBuffer::new(vec![0.5; 3200], 16000).unwrap();
        let y = inject_loss(&x, &LossMask::new(320, [5, 6, 7])).unwrap();
        for (i, s) in y.samples.iter().enumerate() {
            if (1600..2560).contains(&i) {
                assert_eq!(*s, 0.0);
            } else {
                assert_eq!(*s, 0.5);
            }
        }
    }

    #[test]
    fn out_of_range_frame_rejected() {
        let x = AudioBuffer::new(vec![0.5; 3200], 16000).unwrap();
        assert!(matches!(
            inject_loss(&x, &LossMask::new(320, [10])),
            Err(PlcError::InvalidMask(_))
        ));
    }

    #[test]
    fn dithered_signal_has_empty_mask() {
        let x = AudioBuffer::new(vec![1e-3; 6400], 16000).unwrap();
        assert!(detect_loss(&x, 320).unwrap().is_empty());
    }

    #[test]
    fn all_zero_signal_flags_everything() {
        let x = AudioBuffer::silence(3200, 16000);
        let mask = detect_loss(&x, 320).unwrap();
        assert_eq!(mask.to_vec(), vec![0, 1, 2, 3, 4, 5, 6, 7, 8, 9]);
    }

    #[test]
    fn embed_mask_sets_exact_positions() {
        assert_eq!(embed_mask(&LossMask::empty(320), 10).unwrap(), vec![false; 10]);
        let flags = embed_mask(&LossMask::new(320, [0, 9]), 10).unwrap();
        let on: Vec<usize> =
            flags.iter().enumerate().filter(|(_, b)| **b).map(|(i, _)| i).collect();
        assert_eq!(on, vec![0, 9]);
        assert!(matches!(
            embed_mask(&LossMask::new(320, [10]), 10),
            Err(PlcError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn empty_input_rejected() {
        let x = AudioBuffer::silence(0, 16000);
        assert!(matches!(detect_loss(&x, 320), Err(PlcError::DegenerateInput(_))));
    }
}
