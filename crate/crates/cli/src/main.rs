use std::path::PathBuf;

use anyhow::Context;
use clap::{Parser, Subcommand};

use gpse_cli::commands::{self, SimulateConfig};
use gpse_cli::config::RunConfig;
use gpse_cli::pipeline::PipelineCheckpointSet;
use gpse_cli::stages::{run_stage, Stage};
use gpse_curation::{FilterConfig, PreprocessorRegistry};

#[derive(Parser)]
#[command(name = "gpse", about = "Generative-predictive speech enhancement pipeline", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Degrade clean utterances into training data with recipe sidecars.
    Simulate {
        /// Curation manifest (JSON Lines) of clean utterances.
        #[arg(long)]
        manifest: PathBuf,
        /// Directory of noise WAV files.
        #[arg(long)]
        noise_dir: PathBuf,
        /// Output directory for degraded WAVs, sidecars, and pairs.jsonl.
        #[arg(long)]
        out: PathBuf,
        /// Optional TOML file with distortion ranges and preprocessor stages.
        #[arg(long)]
        sim_config: Option<PathBuf>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Apply the quality-score gate to a manifest.
    Curate {
        #[arg(long)]
        manifest: PathBuf,
        /// Output manifest with verdicts.
        #[arg(long)]
        out: PathBuf,
        /// Output JSON report.
        #[arg(long)]
        report: PathBuf,
        #[arg(long, default_value_t = 3.0)]
        threshold: f64,
        /// Comma-separated required score names.
        #[arg(long, default_value = "ovrl,sig,bak,p808")]
        require: String,
        /// Corpora exempt from filtering (repeatable).
        #[arg(long)]
        bypass: Vec<String>,
    },
    /// Train one pipeline stage from a run config.
    Train {
        #[arg(value_enum)]
        stage: Stage,
        #[arg(long)]
        config: PathBuf,
    },
    /// Enhance a WAV file or a directory of WAV files.
    Enhance {
        #[arg(long)]
        input: PathBuf,
        #[arg(long)]
        output: PathBuf,
        /// Directory holding the five stage checkpoints.
        #[arg(long)]
        checkpoints: PathBuf,
    },
    /// Compute metrics over (enhanced, clean) pairs.
    Eval {
        /// JSON-Lines manifest: {"id", "enhanced", "clean"}.
        #[arg(long)]
        pairs: PathBuf,
        #[arg(long)]
        report: PathBuf,
    },
    /// Summarize a training metrics log.
    Report {
        #[arg(long)]
        log: PathBuf,
    },
    /// Print parameter counts and analytic MACs for a configuration.
    Size {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Use the full-scale reference configuration.
        #[arg(long)]
        full: bool,
    },
}

fn main() -> anyhow::Result<()> {
    match Cli::parse().command {
        Command::Simulate { manifest, noise_dir, out, sim_config, seed } => {
            let cfg: SimulateConfig = match sim_config {
                Some(p) => toml::from_str(
                    &std::fs::read_to_string(&p)
                        .with_context(|| format!("reading {}", p.display()))?,
                )
                .with_context(|| format!("parsing {}", p.display()))?,
                None => SimulateConfig::default(),
            };
            let mut registry = PreprocessorRegistry::new();
            let summary =
                commands::simulate(&manifest, &noise_dir, &out, &cfg, seed, &mut registry)?;
            for notice in &summary.notices {
                eprintln!("notice: {notice}");
            }
            println!(
                "degraded {} utterances ({} skipped); pairs manifest at {}",
                summary.degraded,
                summary.skipped,
                summary.pairs_manifest.display()
            );
        }
        Command::Curate { manifest, out, report, threshold, require, bypass } => {
            let cfg = FilterConfig {
                required_scores: require.split(',').map(|s| s.trim().to_string()).collect(),
                threshold,
                bypass_corpora: bypass,
            };
            let summary = commands::curate(&manifest, &out, &report, &cfg)?;
            println!(
                "kept {} ({:.2} h), dropped {}, uncurated {}",
                summary.kept, summary.kept_hours, summary.dropped, summary.uncurated
            );
            for (reason, n) in &summary.drop_reasons {
                println!("  drop: {reason}: {n}");
            }
        }
        Command::Train { stage, config } => {
            let (mut cfg, _text) = RunConfig::load(&config)?;
            cfg.out_dir = commands::resolve_out_dir(&cfg.out_dir);
            let path = run_stage(stage, &cfg)?;
            let hash = gpse_nn::file_sha256(&path)?;
            println!("stage {} checkpoint: {} (sha256 {})", stage.name(), path.display(), hash);
        }
        Command::Enhance { input, output, checkpoints } => {
            let set = PipelineCheckpointSet::in_dir(&checkpoints);
            let written = commands::enhance_paths(&input, &output, &set)?;
            for w in &written {
                println!("wrote {}", w.display());
            }
        }
        Command::Eval { pairs, report } => {
            let metrics = commands::eval_pairs(&pairs, &report)?;
            print!("{}", commands::render_metric_table(&metrics));
            println!("report written to {}", report.display());
        }
        Command::Report { log } => {
            print!("{}", commands::render_log_report(&log)?);
        }
        Command::Size { config, full } => {
            let mut cfg = match config {
                Some(p) => RunConfig::load(&p)?.0,
                None => RunConfig::default(),
            };
            if full {
                cfg.full_size = true;
            }
            let report = gpse_cli::count_params_and_macs(&cfg)?;
            print!("{}", report.render());
        }
    }
    Ok(())
}
