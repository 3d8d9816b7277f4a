//! Objective evaluation: SI-SDR and log-spectral distance computed in-repo,
//! plus a pluggable scorer interface whose metric names slot into the
//! standard report columns (neural quality scorers stay external).

use std::collections::BTreeMap;

use gpse_dsp::{stft, AudioBuffer, StftConfig};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum EvalError {
    #[error("degenerate input: {0}")]
    DegenerateInput(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Dsp(#[from] gpse_dsp::DspError),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Cap applied to SI-SDR so bit-identical pairs aggregate finitely.
pub const SI_SDR_CAP_DB: f64 = 100.0;

/// Report columns in canonical order; hook metrics slot into their reserved
/// names, in-repo metrics fill the last two.
pub const METRIC_COLUMNS: [&str; 11] = [
    "dnsmos", "nisqa", "utmos", "scoreq", "pesq", "estoi", "sbs", "lps", "spksim", "si_sdr", "lsd",
];

/// Scale-invariant signal-to-distortion ratio in dB, capped at
/// [`SI_SDR_CAP_DB`].
pub fn si_sdr(estimate: &AudioBuffer, reference: &AudioBuffer) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "length {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    let ref_energy: f64 = reference.samples.iter().map(|s| s * s).sum();
    if ref_energy == 0.0 {
        return Err(EvalError::DegenerateInput("zero reference".into()));
    }
    let dot: f64 = estimate.samples.iter().zip(&reference.samples).map(|(e, s)| e * s).sum();
    let alpha = dot / ref_energy;
    let target_energy = alpha * alpha * ref_energy;
    let err_energy: f64 = estimate
        .samples
        .iter()
        .zip(&reference.samples)
        .map(|(e, s)| {
            let d = alpha * s - e;
            d * d
        })
        .sum();
    if err_energy <= target_energy * 1e-10 {
        return Ok(SI_SDR_CAP_DB);
    }
    Ok((10.0 * (target_energy / err_energy).log10()).min(SI_SDR_CAP_DB))
}

/// Log-spectral distance in dB: per frame, the RMS over bins of the
/// difference of `20 log10(|S| + eps)`, averaged over frames.
pub fn lsd(estimate: &AudioBuffer, reference: &AudioBuffer, cfg: &StftConfig) -> Result<f64> {
    if estimate.len() != reference.len() {
        return Err(EvalError::ShapeMismatch(format!(
            "length {} vs {}",
            estimate.len(),
            reference.len()
        )));
    }
    const EPS: f64 = 1e-10;
    let se = stft(estimate, cfg)?;
    let sr = stft(reference, cfg)?;
    let (frames, bins) = se.bins.dim();
    let mut acc = 0.0;
    for f in 0..frames {
        let mut sq = 0.0;
        for k in 0..bins {
            let a = 20.0 * (se.bins[(f, k)].norm() + EPS).log10();
            let b = 20.0 * (sr.bins[(f, k)].norm() + EPS).log10();
            sq += (a - b) * (a - b);
        }
        acc += (sq / bins as f64).sqrt();
    }
    Ok(acc / frames as f64)
}

/// External scorer: a named function producing a map of metric values.
pub struct ScorerHook {
    pub name: String,
    #[allow(clippy::type_complexity)]
    pub score_fn: Box<dyn Fn(&AudioBuffer, &AudioBuffer) -> BTreeMap<String, f64> + Send + Sync>,
}

/// Per-utterance metric values plus aggregates and run metadata.
#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct MetricReport {
    pub per_utterance: BTreeMap<String, BTreeMap<String, f64>>,
    pub aggregates: BTreeMap<String, f64>,
    pub metadata: BTreeMap<String, String>,
    #[serde(default)]
    pub skipped: Vec<String>,
}

impl MetricReport {
    /// Columns present in this report, in canonical order, unknown names last.
    pub fn ordered_metrics(&self) -> Vec<String> {
        let mut known: Vec<String> = METRIC_COLUMNS
            .iter()
            .filter(|m| self.aggregates.contains_key(**m))
            .map(|m| m.to_string())
            .collect();
        for name in self.aggregates.keys() {
            if !METRIC_COLUMNS.contains(&name.as_str()) {
                known.push(name.clone());
            }
        }
        known
    }
}

/// Evaluates aligned (enhanced, clean) pairs: SI-SDR and LSD always, plus
/// every hook metric. Misaligned pairs are skipped with a note, not fatal.
pub fn evaluate(
    pairs: &[(String, AudioBuffer, AudioBuffer)],
    hooks: &[ScorerHook],
    lsd_cfg: &StftConfig,
    metadata: BTreeMap<String, String>,
) -> MetricReport {
    let mut report = MetricReport { metadata, ..Default::default() };
    for (id, enhanced, clean) in pairs {
        if enhanced.len() != clean.len() || enhanced.sample_rate != clean.sample_rate {
            report.skipped.push(format!(
                "{id}: misaligned pair ({} @ {} Hz vs {} @ {} Hz)",
                enhanced.len(),
                enhanced.sample_rate,
                clean.len(),
                clean.sample_rate
            ));
            continue;
        }
        let mut row = BTreeMap::new();
        match si_sdr(enhanced, clean) {
            Ok(v) => {
                row.insert("si_sdr".to_string(), v);
            }
            Err(e) => {
                report.skipped.push(format!("{id}: {e}"));
                continue;
            }
        }
        match lsd(enhanced, clean, lsd_cfg) {
            Ok(v) => {
                row.insert("lsd".to_string(), v);
            }
            Err(e) => {
                report.skipped.push(format!("{id}: {e}"));
                continue;
            }
        }
        for hook in hooks {
            for (k, v) in (hook.score_fn)(enhanced, clean) {
                row.insert(k, v);
            }
        }
        report.per_utterance.insert(id.clone(), row);
    }
    // Aggregates are the arithmetic means of per-utterance values.
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for row in report.per_utterance.values() {
        for (k, v) in row {
            let e = sums.entry(k.clone()).or_insert((0.0, 0));
            e.0 += v;
            e.1 += 1;
        }
    }
    report.aggregates =
        sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect();
    report
}
