//! Corpus curation: JSON-Lines manifests, the all-scores-over-threshold
//! quality gate (boundary inclusive), per-corpus filter bypass, and named
//! external-preprocessor hooks.
//!
//! Quality scores are always ingested from manifest columns; no scoring
//! model runs in this crate.

use std::collections::{BTreeMap, BTreeSet};
use std::io::{BufRead, Write};
use std::path::Path;

use gpse_dsp::AudioBuffer;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Error, Debug)]
pub enum CurationError {
    #[error("invalid filter: {0}")]
    InvalidFilter(String),
    #[error("duplicate hook: {0}")]
    DuplicateHook(String),
    #[error("duplicate utterance id: {0}")]
    DuplicateUtterance(String),
    #[error("bad manifest line {0}: {1}")]
    BadLine(usize, String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, CurationError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Verdict {
    Keep,
    Drop,
    Uncurated,
}

/// One corpus utterance with its quality scores.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub utterance_id: String,
    pub path: String,
    pub sample_rate: u32,
    pub duration_s: f64,
    #[serde(default)]
    pub scores: BTreeMap<String, f64>,
    #[serde(default)]
    pub corpus: Option<String>,
    #[serde(default = "default_verdict")]
    pub verdict: Verdict,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub drop_reason: Option<String>,
}

fn default_verdict() -> Verdict {
    Verdict::Uncurated
}

/// Reads a JSON-Lines manifest, enforcing unique utterance ids and positive
/// durations.
pub fn read_manifest(path: &Path) -> Result<Vec<ManifestEntry>> {
    let file = std::fs::File::open(path)?;
    let mut entries = Vec::new();
    let mut seen = BTreeSet::new();
    for (i, line) in std::io::BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: ManifestEntry = serde_json::from_str(&line)
            .map_err(|e| CurationError::BadLine(i + 1, e.to_string()))?;
        if entry.duration_s <= 0.0 {
            return Err(CurationError::BadLine(i + 1, "duration must be positive".into()));
        }
        if !seen.insert(entry.utterance_id.clone()) {
            return Err(CurationError::DuplicateUtterance(entry.utterance_id));
        }
        entries.push(entry);
    }
    Ok(entries)
}

pub fn write_manifest(path: &Path, entries: &[ManifestEntry]) -> Result<()> {
    let mut f = std::io::BufWriter::new(std::fs::File::create(path)?);
    for e in entries {
        writeln!(f, "{}", serde_json::to_string(e).expect("entry serializes"))?;
    }
    Ok(())
}

/// Filter settings: which scores are required, the keep threshold
/// (inclusive), and corpora exempt from filtering.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FilterConfig {
    pub required_scores: Vec<String>,
    pub threshold: f64,
    #[serde(default)]
    pub bypass_corpora: Vec<String>,
}

impl Default for FilterConfig {
    fn default() -> Self {
        Self {
            required_scores: vec!["ovrl".into(), "sig".into(), "bak".into(), "p808".into()],
            threshold: 3.0,
            bypass_corpora: Vec::new(),
        }
    }
}

/// Applies the gate: keep iff every required score is present and at or
/// above the threshold. Entries missing a required score drop with a
/// logged reason; bypassed corpora keep unconditionally. Order preserved.
pub fn apply_filter(entries: &[ManifestEntry], cfg: &FilterConfig) -> Result<Vec<ManifestEntry>> {
    if cfg.required_scores.is_empty() {
        return Err(CurationError::InvalidFilter("required score list is empty".into()));
    }
    if !cfg.threshold.is_finite() {
        return Err(CurationError::InvalidFilter("threshold must be finite".into()));
    }
    let bypass: BTreeSet<&str> = cfg.bypass_corpora.iter().map(|s| s.as_str()).collect();
    let mut out = Vec::with_capacity(entries.len());
    for e in entries {
        let mut e = e.clone();
        if e.corpus.as_deref().is_some_and(|c| bypass.contains(c)) {
            e.verdict = Verdict::Keep;
            e.drop_reason = None;
            out.push(e);
            continue;
        }
        let mut verdict = Verdict::Keep;
        let mut reason = None;
        for name in &cfg.required_scores {
            match e.scores.get(name) {
                None => {
                    verdict = Verdict::Drop;
                    reason = Some(format!("missing score {name}"));
                    break;
                }
                Some(v) if *v < cfg.threshold => {
                    verdict = Verdict::Drop;
                    reason = Some(format!("{name} below threshold ({v} < {})", cfg.threshold));
                    break;
                }
                Some(_) => {}
            }
        }
        e.verdict = verdict;
        e.drop_reason = reason;
        out.push(e);
    }
    Ok(out)
}

/// Aggregate curation statistics.
#[derive(Debug, Clone, Default, Serialize, Deserialize, PartialEq)]
pub struct CurationReport {
    pub kept: usize,
    pub dropped: usize,
    pub uncurated: usize,
    pub kept_hours: f64,
    pub drop_reasons: BTreeMap<String, usize>,
}

pub fn summarize(entries: &[ManifestEntry]) -> CurationReport {
    let mut report = CurationReport::default();
    for e in entries {
        match e.verdict {
            Verdict::Keep => {
                report.kept += 1;
                report.kept_hours += e.duration_s / 3600.0;
            }
            Verdict::Drop => {
                report.dropped += 1;
                // Bucket by the reason text, dropping the per-entry detail
                // in parentheses.
                let reason = e.drop_reason.as_deref().unwrap_or("unspecified");
                let key = reason.split(" (").next().unwrap_or(reason).to_string();
                *report.drop_reasons.entry(key).or_insert(0) += 1;
            }
            Verdict::Uncurated => report.uncurated += 1,
        }
    }
    report
}

/// A pluggable external quality scorer (never implemented here).
pub struct ScorerHook {
    pub name: String,
    pub score_fn: Box<dyn Fn(&AudioBuffer) -> BTreeMap<String, f64> + Send + Sync>,
}

/// A pluggable external preprocessing stage (e.g. vocal removal or a
/// pre-cleaning model), applied by name in the simulation pipeline.
pub type PreprocessFn = Box<dyn Fn(&AudioBuffer) -> AudioBuffer + Send + Sync>;

/// Registry of named preprocessor hooks. Referencing an unregistered name
/// in a pipeline skips the stage with a notice rather than failing.
#[derive(Default)]
pub struct PreprocessorRegistry {
    hooks: BTreeMap<String, PreprocessFn>,
    pub notices: Vec<String>,
}

impl PreprocessorRegistry {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn register(&mut self, name: &str, hook: PreprocessFn) -> Result<()> {
        if self.hooks.contains_key(name) {
            return Err(CurationError::DuplicateHook(name.to_string()));
        }
        self.hooks.insert(name.to_string(), hook);
        Ok(())
    }

    pub fn names(&self) -> Vec<String> {
        self.hooks.keys().cloned().collect()
    }

    /// Applies the named stages in order; absent hooks are skipped with a
    /// recorded notice and the audio passes through unchanged.
    pub fn apply(&mut self, stages: &[String], x: &AudioBuffer) -> AudioBuffer {
        let mut out = x.clone();
        for stage in stages {
            match self.hooks.get(stage) {
                Some(hook) => out = hook(&out),
                None => self
                    .notices
                    .push(format!("preprocessor '{stage}' not registered; stage skipped")),
            }
        }
        out
    }
}
