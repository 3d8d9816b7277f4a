//! Run configuration: one human-readable TOML document per run. Every
//! section has defaults, so a minimal file only needs the paths it uses.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use gpse_model::{
    ConvNeXtBackboneConfig, DiscriminatorSuiteConfig, EncoderConfig, LossWeights, PostNetConfig,
    PredictorConfig, TrainOptions,
};

use crate::error::{CliError, Result};

#[derive(Debug, Clone, Serialize, Deserialize, Default)]
pub struct DataConfig {
    /// JSON-Lines training pairs: `{"clean": path, "degraded": path, "recipe": path?}`.
    #[serde(default)]
    pub pairs_manifest: Option<PathBuf>,
    /// Optional teacher checkpoint for the encoder stage; absent means a
    /// frozen copy of the student initialization (smoke-test mode).
    #[serde(default)]
    pub teacher_checkpoint: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default)]
    pub encoder: TrainOptions,
    #[serde(default)]
    pub adapter: TrainOptions,
    #[serde(default)]
    pub vocoder: TrainOptions,
    #[serde(default)]
    pub predictor: TrainOptions,
    #[serde(default)]
    pub postnet: TrainOptions,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            encoder: TrainOptions::default(),
            adapter: TrainOptions::default(),
            vocoder: TrainOptions::default(),
            predictor: TrainOptions::default(),
            postnet: TrainOptions::default(),
        }
    }
}

/// Backbone dimensions for the adapter/vocoder sections; the input dim and
/// head wiring are derived from the encoder config.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BackboneSection {
    pub hidden_dim: usize,
    pub n_blocks: usize,
    pub intermediate_dim: usize,
}

impl Default for BackboneSection {
    fn default() -> Self {
        Self { hidden_dim: 192, n_blocks: 4, intermediate_dim: 576 }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunConfig {
    #[serde(default = "default_seed")]
    pub seed: u64,
    /// Selects the full-scale reference configuration for every component
    /// (construct-and-forward scale, not training scale).
    #[serde(default)]
    pub full_size: bool,
    #[serde(default = "default_out_dir")]
    pub out_dir: PathBuf,
    #[serde(default)]
    pub data: DataConfig,
    #[serde(default)]
    pub encoder: EncoderConfig,
    #[serde(default)]
    pub adapter: BackboneSection,
    #[serde(default)]
    pub vocoder: BackboneSection,
    #[serde(default)]
    pub predictor: PredictorConfig,
    #[serde(default)]
    pub postnet: PostNetConfig,
    #[serde(default = "default_critic_channels")]
    pub critic_channels: usize,
    #[serde(default)]
    pub loss_weights: LossWeights,
    #[serde(default)]
    pub train: TrainSection,
}

fn default_seed() -> u64 {
    17
}

fn default_out_dir() -> PathBuf {
    PathBuf::from("runs/default")
}

fn default_critic_channels() -> usize {
    8
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            seed: default_seed(),
            full_size: false,
            out_dir: default_out_dir(),
            data: DataConfig::default(),
            encoder: EncoderConfig::toy(),
            adapter: BackboneSection::default(),
            vocoder: BackboneSection::default(),
            predictor: PredictorConfig::toy(),
            postnet: PostNetConfig::toy(),
            critic_channels: default_critic_channels(),
            loss_weights: LossWeights::default(),
            train: TrainSection::default(),
        }
    }
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Config(format!("cannot read {}: {e}", path.display())))?;
        let cfg: RunConfig = toml::from_str(&text)
            .map_err(|e| CliError::Config(format!("bad config {}: {e}", path.display())))?;
        Ok((cfg, text))
    }

    pub fn encoder_config(&self) -> EncoderConfig {
        if self.full_size {
            EncoderConfig::full_size()
        } else {
            self.encoder.clone()
        }
    }

    pub fn adapter_config(&self) -> ConvNeXtBackboneConfig {
        let d = self.encoder_config().d_model;
        if self.full_size {
            ConvNeXtBackboneConfig::full_size(d, false)
        } else {
            ConvNeXtBackboneConfig {
                input_dim: d,
                hidden_dim: self.adapter.hidden_dim,
                n_blocks: self.adapter.n_blocks,
                intermediate_dim: self.adapter.intermediate_dim,
                has_istft_head: false,
                istft_cfg: None,
            }
        }
    }

    pub fn vocoder_config(&self) -> ConvNeXtBackboneConfig {
        let d = self.encoder_config().d_model;
        if self.full_size {
            ConvNeXtBackboneConfig::full_size(d, true)
        } else {
            ConvNeXtBackboneConfig {
                input_dim: d,
                hidden_dim: self.vocoder.hidden_dim,
                n_blocks: self.vocoder.n_blocks,
                intermediate_dim: self.vocoder.intermediate_dim,
                has_istft_head: true,
                istft_cfg: Some(gpse_dsp::StftConfig::canonical_16k().into()),
            }
        }
    }

    pub fn predictor_config(&self) -> PredictorConfig {
        if self.full_size {
            PredictorConfig::full_size()
        } else {
            self.predictor.clone()
        }
    }

    pub fn postnet_config(&self) -> PostNetConfig {
        if self.full_size {
            PostNetConfig::full_size()
        } else {
            self.postnet.clone()
        }
    }

    pub fn critics_config(&self) -> DiscriminatorSuiteConfig {
        let mut cfg = DiscriminatorSuiteConfig::toy(self.encoder_config().d_model);
        cfg.base_channels = self.critic_channels;
        cfg
    }

    /// Hash of everything that affects training math: storage locations
    /// (out_dir, manifest paths) are normalized away so two runs over the
    /// same content hash identically regardless of where files live.
    pub fn semantic_hash(&self) -> String {
        let mut c = self.clone();
        c.out_dir = PathBuf::new();
        c.data.pairs_manifest = None;
        c.data.teacher_checkpoint =
            c.data.teacher_checkpoint.map(|_| PathBuf::from("<teacher>"));
        let json = serde_json::to_string(&c).expect("config serializes");
        gpse_nn::hex_digest(json.as_bytes())
    }

    pub fn checkpoint_path(&self, stage: &str) -> PathBuf {
        self.out_dir.join(format!("{stage}.ckpt"))
    }

    pub fn metrics_log_path(&self) -> PathBuf {
        self.out_dir.join("metrics.log")
    }
}
