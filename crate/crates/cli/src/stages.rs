//! Stage execution: dependency checks, data loading, provenance hashing,
//! and checkpoint save/load. Stages are strictly sequential; no stage ever
//! fine-tunes an upstream model.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gpse_degrade::DegradationRecipe;
use gpse_dsp::wav::read_wav;
use gpse_model::{
    train_adapter, train_encoder, train_postnet, train_predictor, train_vocoder, Adapter,
    ConvNeXtBackboneConfig, DiscriminatorSuite, Encoder, EncoderConfig, FrozenBranches,
    MetricsLog, PostNet, PostNetConfig, Predictor, PredictorConfig, TrainPair, Vocoder,
};
use gpse_nn::{hex_digest, Checkpoint, HasParams};

use crate::config::RunConfig;
use crate::error::{CliError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, clap::ValueEnum)]
pub enum Stage {
    Encoder,
    Adapter,
    Vocoder,
    Predictor,
    Postnet,
}

impl Stage {
    pub fn name(&self) -> &'static str {
        match self {
            Stage::Encoder => "encoder",
            Stage::Adapter => "adapter",
            Stage::Vocoder => "vocoder",
            Stage::Predictor => "predictor",
            Stage::Postnet => "postnet",
        }
    }

    /// Upstream checkpoints this stage reads through.
    pub fn dependencies(&self) -> &'static [Stage] {
        match self {
            Stage::Encoder | Stage::Predictor => &[],
            Stage::Adapter | Stage::Vocoder => &[Stage::Encoder],
            Stage::Postnet => &[Stage::Encoder, Stage::Adapter, Stage::Vocoder, Stage::Predictor],
        }
    }
}

/// One line of a training-pairs manifest.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PairEntry {
    pub clean: PathBuf,
    pub degraded: PathBuf,
    #[serde(default)]
    pub recipe: Option<PathBuf>,
}

pub fn read_pairs_manifest(path: &Path) -> Result<Vec<PairEntry>> {
    let text = std::fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let entry: PairEntry = serde_json::from_str(line)
            .map_err(|e| CliError::Config(format!("bad pairs manifest line {}: {e}", i + 1)))?;
        out.push(entry);
    }
    Ok(out)
}

fn load_pairs(entries: &[PairEntry]) -> Result<Vec<TrainPair>> {
    let mut pairs = Vec::with_capacity(entries.len());
    for e in entries {
        let clean = read_wav(&e.clean)?;
        let degraded = read_wav(&e.degraded)?;
        let recipe = match &e.recipe {
            Some(p) => Some(DegradationRecipe::from_json(&std::fs::read_to_string(p)?)?),
            None => None,
        };
        pairs.push(TrainPair { clean, degraded, recipe });
    }
    Ok(pairs)
}

/// Hash over the referenced file contents in manifest order, so a
/// checkpoint records exactly what it was trained on, independent of where
/// the files happen to live.
fn data_hash(entries: &[PairEntry]) -> Result<String> {
    let mut bytes = Vec::new();
    for e in entries {
        bytes.extend_from_slice(&std::fs::read(&e.clean)?);
        bytes.extend_from_slice(&std::fs::read(&e.degraded)?);
        if let Some(r) = &e.recipe {
            bytes.extend_from_slice(&std::fs::read(r)?);
        }
    }
    Ok(hex_digest(&bytes))
}

fn save_model<M: HasParams>(
    model: &mut M,
    config: serde_json::Value,
    stage: &str,
    config_hash: &str,
    data_hash_hex: &str,
    path: &Path,
) -> Result<()> {
    let mut meta = BTreeMap::new();
    meta.insert("stage".to_string(), stage.to_string());
    meta.insert("config_hash".to_string(), config_hash.to_string());
    meta.insert("data_hash".to_string(), data_hash_hex.to_string());
    let ckpt = Checkpoint::new(model.snapshot(), config, meta);
    if let Some(dir) = path.parent() {
        std::fs::create_dir_all(dir)?;
    }
    ckpt.save(path)?;
    Ok(())
}

fn model_config<T: serde::de::DeserializeOwned>(ckpt: &Checkpoint, what: &str) -> Result<T> {
    serde_json::from_value(ckpt.config.clone())
        .map_err(|e| CliError::Config(format!("checkpoint does not hold a {what} config: {e}")))
}

pub fn load_encoder(path: &Path) -> Result<Encoder> {
    let ckpt = Checkpoint::load(path)?;
    let cfg: EncoderConfig = model_config(&ckpt, "encoder")?;
    let mut model = Encoder::new(&cfg, 0)?;
    model.load_snapshot(&ckpt.tensors).map_err(CliError::Other)?;
    Ok(model)
}

#[derive(Serialize, Deserialize)]
struct AdapterCkptConfig {
    backbone: ConvNeXtBackboneConfig,
    d_model: usize,
}

pub fn load_adapter(path: &Path) -> Result<Adapter> {
    let ckpt = Checkpoint::load(path)?;
    let cfg: AdapterCkptConfig = model_config(&ckpt, "adapter")?;
    let mut model = Adapter::new(&cfg.backbone, cfg.d_model, 0)?;
    model.load_snapshot(&ckpt.tensors).map_err(CliError::Other)?;
    Ok(model)
}

pub fn load_vocoder(path: &Path) -> Result<Vocoder> {
    let ckpt = Checkpoint::load(path)?;
    let cfg: ConvNeXtBackboneConfig = model_config(&ckpt, "vocoder")?;
    let mut model = Vocoder::new(&cfg, 0)?;
    model.load_snapshot(&ckpt.tensors).map_err(CliError::Other)?;
    Ok(model)
}

pub fn load_predictor(path: &Path) -> Result<Predictor> {
    let ckpt = Checkpoint::load(path)?;
    let cfg: PredictorConfig = model_config(&ckpt, "predictor")?;
    let mut model = Predictor::new(&cfg, 0)?;
    model.load_snapshot(&ckpt.tensors).map_err(CliError::Other)?;
    Ok(model)
}

pub fn load_postnet(path: &Path) -> Result<PostNet> {
    let ckpt = Checkpoint::load(path)?;
    let cfg: PostNetConfig = model_config(&ckpt, "postnet")?;
    let mut model = PostNet::new(&cfg, 0)?;
    model.load_snapshot(&ckpt.tensors).map_err(CliError::Other)?;
    Ok(model)
}

/// Runs one training stage from the run config and writes its checkpoint,
/// embedding the semantic config hash and the data-content hash for
/// reproducibility.
pub fn run_stage(stage: Stage, cfg: &RunConfig) -> Result<PathBuf> {
    for dep in stage.dependencies() {
        let p = cfg.checkpoint_path(dep.name());
        if !p.exists() {
            return Err(CliError::MissingDependency(format!(
                "stage {} requires the {} checkpoint at {}",
                stage.name(),
                dep.name(),
                p.display()
            )));
        }
    }
    let manifest = cfg.data.pairs_manifest.as_ref().ok_or_else(|| {
        CliError::Config("data.pairs_manifest is required for training".into())
    })?;
    let entries = read_pairs_manifest(manifest)?;
    let pairs = load_pairs(&entries)?;
    let dhash = data_hash(&entries)?;
    let chash = cfg.semantic_hash();

    std::fs::create_dir_all(&cfg.out_dir)?;
    let mut log = MetricsLog::to_file(&cfg.metrics_log_path()).map_err(CliError::Model)?;
    let out_path = cfg.checkpoint_path(stage.name());

    match stage {
        Stage::Encoder => {
            let enc_cfg = cfg.encoder_config();
            let mut student = Encoder::new(&enc_cfg, cfg.seed)?;
            let teacher = match &cfg.data.teacher_checkpoint {
                Some(p) => load_encoder(p)?,
                None => Encoder::new(&enc_cfg, cfg.seed)?,
            };
            train_encoder(&mut student, &teacher, &pairs, &cfg.train.encoder, &mut log)?;
            save_model(
                &mut student,
                serde_json::to_value(&enc_cfg).expect("config serializes"),
                stage.name(),
                &chash,
                &dhash,
                &out_path,
            )?;
        }
        Stage::Adapter => {
            let encoder = load_encoder(&cfg.checkpoint_path("encoder"))?;
            let d = encoder.config.d_model;
            let backbone = cfg.adapter_config();
            let mut adapter = Adapter::new(&backbone, d, cfg.seed ^ 0xA0A0)?;
            let mut critics = DiscriminatorSuite::new(&cfg.critics_config(), cfg.seed ^ 0xD0)?;
            train_adapter(&mut adapter, &mut critics, &encoder, &pairs, &cfg.train.adapter, &mut log)?;
            let conf = serde_json::to_value(AdapterCkptConfig { backbone, d_model: d })
                .expect("config serializes");
            save_model(&mut adapter, conf, stage.name(), &chash, &dhash, &out_path)?;
        }
        Stage::Vocoder => {
            let encoder = load_encoder(&cfg.checkpoint_path("encoder"))?;
            let voc_cfg = cfg.vocoder_config();
            let mut vocoder = Vocoder::new(&voc_cfg, cfg.seed ^ 0x70C0)?;
            let mut critics = DiscriminatorSuite::new(&cfg.critics_config(), cfg.seed ^ 0xD1)?;
            let mel = gpse_model::MultiScaleMel::new(16000)?;
            let clean: Vec<_> = pairs.iter().map(|p| p.clean.clone()).collect();
            train_vocoder(&mut vocoder, &mut critics, &encoder, &clean, &mel, &cfg.train.vocoder, &mut log)?;
            save_model(
                &mut vocoder,
                serde_json::to_value(&voc_cfg).expect("config serializes"),
                stage.name(),
                &chash,
                &dhash,
                &out_path,
            )?;
        }
        Stage::Predictor => {
            let pred_cfg = cfg.predictor_config();
            let mut predictor = Predictor::new(&pred_cfg, cfg.seed ^ 0x9E0)?;
            train_predictor(&mut predictor, &pairs, &cfg.train.predictor, &mut log)?;
            save_model(
                &mut predictor,
                serde_json::to_value(&pred_cfg).expect("config serializes"),
                stage.name(),
                &chash,
                &dhash,
                &out_path,
            )?;
        }
        Stage::Postnet => {
            let encoder = load_encoder(&cfg.checkpoint_path("encoder"))?;
            let adapter = load_adapter(&cfg.checkpoint_path("adapter"))?;
            let vocoder = load_vocoder(&cfg.checkpoint_path("vocoder"))?;
            let predictor = load_predictor(&cfg.checkpoint_path("predictor"))?;
            let post_cfg = cfg.postnet_config();
            let mut postnet = PostNet::new(&post_cfg, cfg.seed ^ 0xF0)?;
            let mut critics48 =
                DiscriminatorSuite::new(&cfg.critics_config(), cfg.seed ^ 0xD2)?;
            let mel48 = gpse_model::MultiScaleMel::new(48000)?;
            let branches = FrozenBranches {
                encoder: &encoder,
                adapter: &adapter,
                vocoder: &vocoder,
                predictor: &predictor,
            };
            train_postnet(
                &mut postnet,
                &mut critics48,
                &mel48,
                &branches,
                &pairs,
                &[],
                &cfg.train.postnet,
                &mut log,
            )?;
            save_model(
                &mut postnet,
                serde_json::to_value(&post_cfg).expect("config serializes"),
                stage.name(),
                &chash,
                &dhash,
                &out_path,
            )?;
        }
    }
    Ok(out_path)
}
