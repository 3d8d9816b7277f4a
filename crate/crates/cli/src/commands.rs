//! Implementations behind the CLI subcommands, kept in the library so the
//! integration tests can drive them directly.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gpse_curation::{
    apply_filter, read_manifest, summarize, write_manifest, CurationReport, FilterConfig,
    PreprocessorRegistry, Verdict,
};
use gpse_degrade::{apply_recipe, sample_recipe, SimulationConfig};
use gpse_dsp::wav::{read_wav, write_wav, WavEncoding};
use gpse_dsp::{resample, StftConfig};
use gpse_evalkit::{evaluate, MetricReport, ScorerHook};
use gpse_model::parse_line;

use crate::error::{CliError, Result};
use crate::pipeline::{NoProbe, Pipeline, PipelineCheckpointSet};
use crate::stages::PairEntry;

/// Output root override: when set, relative output paths land under it.
pub const OUT_ROOT_ENV: &str = "GPSE_OUT_ROOT";

pub fn resolve_out_dir(dir: &Path) -> PathBuf {
    if dir.is_absolute() {
        return dir.to_path_buf();
    }
    match std::env::var_os(OUT_ROOT_ENV) {
        Some(root) => PathBuf::from(root).join(dir),
        None => dir.to_path_buf(),
    }
}

/// Simulation settings file: distortion ranges plus named preprocessor
/// stages for speech and noise.
#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct SimulateConfig {
    #[serde(default)]
    pub ranges: SimulationConfig,
    #[serde(default)]
    pub preprocess_speech: Vec<String>,
    #[serde(default)]
    pub preprocess_noise: Vec<String>,
}

#[derive(Debug, Default)]
pub struct SimulateSummary {
    pub degraded: usize,
    pub skipped: usize,
    pub notices: Vec<String>,
    pub pairs_manifest: PathBuf,
}

/// Degrades every kept utterance of a manifest, writing degraded WAVs,
/// recipe sidecars, and a training-pairs manifest.
pub fn simulate(
    manifest: &Path,
    noise_dir: &Path,
    out_dir: &Path,
    cfg: &SimulateConfig,
    seed: u64,
    registry: &mut PreprocessorRegistry,
) -> Result<SimulateSummary> {
    let out_dir = resolve_out_dir(out_dir);
    std::fs::create_dir_all(&out_dir)?;
    let entries = read_manifest(manifest)?;

    let mut noise_files: Vec<PathBuf> = std::fs::read_dir(noise_dir)?
        .filter_map(|e| e.ok())
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|e| e == "wav"))
        .collect();
    noise_files.sort();
    if noise_files.is_empty() {
        return Err(CliError::Config(format!(
            "no .wav noise files in {}",
            noise_dir.display()
        )));
    }

    let mut summary = SimulateSummary {
        pairs_manifest: out_dir.join("pairs.jsonl"),
        ..Default::default()
    };
    let mut pairs_lines = Vec::new();
    for (i, entry) in entries.iter().enumerate() {
        if entry.verdict == Verdict::Drop {
            summary.skipped += 1;
            continue;
        }
        let clean = read_wav(Path::new(&entry.path))?;
        let clean = registry.apply(&cfg.preprocess_speech, &clean);

        let noise_path = &noise_files[(seed as usize + i) % noise_files.len()];
        let noise_raw = read_wav(noise_path)?;
        let noise_raw = registry.apply(&cfg.preprocess_noise, &noise_raw);
        let noise = if noise_raw.sample_rate == clean.sample_rate {
            noise_raw
        } else {
            resample(&noise_raw, clean.sample_rate)?
        };

        let frame = clean.sample_rate as usize / 50;
        let n_frames = clean.len().div_ceil(frame);
        let recipe = sample_recipe(&cfg.ranges, seed.wrapping_add(i as u64), n_frames);
        let (degraded, resolved) = apply_recipe(&clean, &recipe, &noise)?;

        let wav_path = out_dir.join(format!("{}.wav", entry.utterance_id));
        let recipe_path = out_dir.join(format!("{}.recipe.json", entry.utterance_id));
        write_wav(&wav_path, &degraded, WavEncoding::Float32)?;
        std::fs::write(&recipe_path, resolved.to_json())?;
        pairs_lines.push(
            serde_json::to_string(&PairEntry {
                clean: PathBuf::from(&entry.path),
                degraded: wav_path,
                recipe: Some(recipe_path),
            })
            .expect("pair entry serializes"),
        );
        summary.degraded += 1;
    }
    std::fs::write(&summary.pairs_manifest, pairs_lines.join("\n") + "\n")?;
    summary.notices = registry.notices.clone();
    Ok(summary)
}

/// Applies the quality gate and writes the verdict-annotated manifest plus a
/// JSON report.
pub fn curate(
    manifest: &Path,
    out_manifest: &Path,
    report_path: &Path,
    cfg: &FilterConfig,
) -> Result<CurationReport> {
    let entries = read_manifest(manifest)?;
    let filtered = apply_filter(&entries, cfg)?;
    write_manifest(out_manifest, &filtered)?;
    let report = summarize(&filtered);
    std::fs::write(report_path, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(report)
}

/// Enhances one file or every WAV in a directory.
pub fn enhance_paths(
    input: &Path,
    output_dir: &Path,
    checkpoints: &PipelineCheckpointSet,
) -> Result<Vec<PathBuf>> {
    let output_dir = resolve_out_dir(output_dir);
    std::fs::create_dir_all(&output_dir)?;
    let pipeline = Pipeline::load(checkpoints)?;
    let inputs: Vec<PathBuf> = if input.is_dir() {
        let mut v: Vec<PathBuf> = std::fs::read_dir(input)?
            .filter_map(|e| e.ok())
            .map(|e| e.path())
            .filter(|p| p.extension().is_some_and(|e| e == "wav"))
            .collect();
        v.sort();
        v
    } else {
        vec![input.to_path_buf()]
    };
    let mut written = Vec::new();
    for path in inputs {
        let x = read_wav(&path)?;
        let y = pipeline.enhance(&x, &mut NoProbe)?;
        let name = path.file_name().expect("input file has a name");
        let out = output_dir.join(name);
        write_wav(&out, &y, WavEncoding::Float32)?;
        written.push(out);
    }
    Ok(written)
}

/// One line of an evaluation-pairs manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct EvalPairEntry {
    pub id: String,
    pub enhanced: PathBuf,
    pub clean: PathBuf,
}

pub fn eval_pairs(pairs_path: &Path, report_path: &Path) -> Result<MetricReport> {
    let text = std::fs::read_to_string(pairs_path)?;
    let mut pairs = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: EvalPairEntry = serde_json::from_str(line)
            .map_err(|e| CliError::Config(format!("bad eval pairs line {}: {e}", i + 1)))?;
        let enhanced = read_wav(&entry.enhanced)?;
        let clean = read_wav(&entry.clean)?;
        pairs.push((entry.id, enhanced, clean));
    }
    let hooks: Vec<ScorerHook> = Vec::new();
    let mut metadata = BTreeMap::new();
    metadata.insert("pairs_manifest".to_string(), pairs_path.display().to_string());
    let report = evaluate(&pairs, &hooks, &StftConfig::new(1024, 256), metadata);
    std::fs::write(report_path, serde_json::to_string_pretty(&report).expect("report serializes"))?;
    Ok(report)
}

pub fn render_metric_table(report: &MetricReport) -> String {
    let metrics = report.ordered_metrics();
    let mut out = String::new();
    out.push_str(&format!("{:<16}", "utterance"));
    for m in &metrics {
        out.push_str(&format!(" {m:>10}"));
    }
    out.push('\n');
    for (id, row) in &report.per_utterance {
        out.push_str(&format!("{id:<16}"));
        for m in &metrics {
            match row.get(m) {
                Some(v) => out.push_str(&format!(" {v:>10.3}")),
                None => out.push_str(&format!(" {:>10}", "-")),
            }
        }
        out.push('\n');
    }
    out.push_str(&format!("{:<16}", "mean"));
    for m in &metrics {
        out.push_str(&format!(" {:>10.3}", report.aggregates[m]));
    }
    out.push('\n');
    if !report.skipped.is_empty() {
        out.push_str(&format!("skipped: {}\n", report.skipped.len()));
    }
    out
}

/// Summarizes a metrics log: per stage, the first/last/min of every numeric
/// column.
pub fn render_log_report(log_path: &Path) -> Result<String> {
    let text = std::fs::read_to_string(log_path)?;
    let mut stages: BTreeMap<String, BTreeMap<String, Vec<f64>>> = BTreeMap::new();
    let mut skips: BTreeMap<String, usize> = BTreeMap::new();
    for line in text.lines() {
        let kv = parse_line(line);
        let Some(stage) = kv.get("stage") else { continue };
        if kv.get("event").map(String::as_str) == Some("skip") {
            *skips.entry(stage.clone()).or_insert(0) += 1;
            continue;
        }
        let cols = stages.entry(stage.clone()).or_default();
        for (k, v) in &kv {
            if k == "stage" || k == "step" {
                continue;
            }
            if let Ok(x) = v.parse::<f64>() {
                cols.entry(k.clone()).or_default().push(x);
            }
        }
    }
    let mut out = String::new();
    out.push_str(&format!(
        "{:<10} {:<8} {:>6} {:>12} {:>12} {:>12}\n",
        "stage", "metric", "steps", "first", "last", "min"
    ));
    for (stage, cols) in &stages {
        for (metric, values) in cols {
            let min = values.iter().cloned().fold(f64::INFINITY, f64::min);
            out.push_str(&format!(
                "{:<10} {:<8} {:>6} {:>12.4e} {:>12.4e} {:>12.4e}\n",
                stage,
                metric,
                values.len(),
                values.first().unwrap(),
                values.last().unwrap(),
                min
            ));
        }
    }
    for (stage, n) in skips {
        out.push_str(&format!("{stage:<10} skipped pairs: {n}\n"));
    }
    Ok(out)
}
