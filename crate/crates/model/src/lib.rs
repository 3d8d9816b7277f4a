//! Model zoo for the two-branch enhancement pipeline: the distilled
//! representation encoder with packet-loss-aware masking, the ConvNeXt
//! adapter and vocoder with their critic suite, the dual-path predictive
//! branch, the subband fusion/bandwidth-extension stage, and the trainers
//! that wire them together.

mod convnext;
mod discrim;
mod dualpath;
mod encoder;
mod error;
mod losses;
mod metrics_log;
mod postnet;
mod predictor;
mod train;

pub use convnext::{
    Adapter, ConvNeXtBackbone, ConvNeXtBackboneConfig, StftConfigSer, Vocoder, MAG_LOG_CLIP,
};
pub use discrim::{
    fold_audio, DiscInput, DiscOutput, DiscriminatorSuite, DiscriminatorSuiteConfig,
    MultiBandStftDiscriminator, MultiPeriodDiscriminator, ReprDiscriminator,
};
pub use dualpath::{DualPathConfig, DualPathCore};
pub use encoder::{Encoder, EncoderConfig, RepresentationBundle, ENCODER_RATE, FRAME_HOP};
pub use error::{ModelError, Result};
pub use losses::{
    adapter_loss, feature_matching, l1, lsgan_discriminator, lsgan_generator, mse, postnet_loss,
    stft_domain_loss, stft_domain_loss_with, vocoder_loss, GenLossTerms, LossWeights, MetricHook,
    MultiScaleMel, NullHook, SiSdrProxyHook, StftDomainTerms, TermValues, MEL_SCALES,
};
pub use metrics_log::{parse_line, MetricsLog};
pub use postnet::{finalize, merge_subbands, split_subbands, PostNet, PostNetConfig};
pub use predictor::{Predictor, PredictorConfig};
pub use train::{
    expect_16k, train_adapter, train_encoder, train_postnet, train_predictor, train_vocoder,
    FrozenBranches, TrainOptions, TrainPair, TrainReport,
};
