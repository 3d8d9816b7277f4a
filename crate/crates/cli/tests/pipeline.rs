//! End-to-end enhancement contracts with random-weight toy models: length
//! preservation across the supported rates, internal-rate probes, strict
//! determinism, and checkpoint compatibility errors.

use gpse_cli::pipeline::{EnhanceProbe, NoProbe, Pipeline};
use gpse_cli::CliError;
use gpse_dsp::AudioBuffer;
use gpse_model::{
    Adapter, ConvNeXtBackboneConfig, Encoder, EncoderConfig, PostNet, PostNetConfig, Predictor,
    PredictorConfig, RepresentationBundle, Vocoder,
};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha20Rng;

fn toy_pipeline(seed: u64) -> Pipeline {
    // Smaller than the defaults to keep the rate sweep fast.
    let enc_cfg = EncoderConfig {
        conv_channels: 24,
        n_transformer_layers: 2,
        d_model: 48,
        n_heads: 2,
        frame_hop: 320,
    };
    let encoder = Encoder::new(&enc_cfg, seed).unwrap();
    let mut ad_cfg = ConvNeXtBackboneConfig::toy_adapter(48);
    ad_cfg.hidden_dim = 48;
    ad_cfg.n_blocks = 1;
    ad_cfg.intermediate_dim = 96;
    let adapter = Adapter::new(&ad_cfg, 48, seed + 1).unwrap();
    let mut voc_cfg = ConvNeXtBackboneConfig::toy_vocoder(48);
    voc_cfg.hidden_dim = 48;
    voc_cfg.n_blocks = 1;
    voc_cfg.intermediate_dim = 96;
    let vocoder = Vocoder::new(&voc_cfg, seed + 2).unwrap();
    let pred_cfg = PredictorConfig {
        core: gpse_model::DualPathConfig {
            n_blocks: 1,
            lstm_hidden: 16,
            emb_dim: 8,
            attn_heads: 2,
            attn_qk_dim: 2,
        },
        stft: gpse_model::StftConfigSer { fft_size: 512, hop_size: 128 },
    };
    let predictor = Predictor::new(&pred_cfg, seed + 3).unwrap();
    let mut post_cfg = PostNetConfig::toy();
    post_cfg.core.n_blocks = 1;
    post_cfg.core.lstm_hidden = 12;
    post_cfg.core.emb_dim = 8;
    let postnet = PostNet::new(&post_cfg, seed + 4).unwrap();
    Pipeline::from_models(encoder, adapter, vocoder, predictor, postnet).unwrap()
}

fn tone(n: usize, rate: u32, seed: u64) -> AudioBuffer {
    let mut rng = ChaCha20Rng::seed_from_u64(seed);
    let f = rng.gen_range(200.0..1200.0);
    AudioBuffer::new(
        (0..n)
            .map(|i| {
                0.3 * (std::f64::consts::TAU * f * i as f64 / rate as f64).sin()
                    + 0.02 * rng.gen_range(-1.0..1.0)
            })
            .collect(),
        rate,
    )
    .unwrap()
}

#[derive(Default)]
struct ShapeProbe {
    input_16k: Option<(usize, u32)>,
    flags_len: Option<usize>,
    rep_frames: Option<usize>,
    gen: Option<(usize, u32)>,
    pred: Option<(usize, u32)>,
    fused: Option<(usize, u32)>,
}

impl EnhanceProbe for ShapeProbe {
    fn on_input_16k(&mut self, x: &AudioBuffer) {
        self.input_16k = Some((x.len(), x.sample_rate));
    }
    fn on_loss_flags(&mut self, flags: &[bool]) {
        self.flags_len = Some(flags.len());
    }
    fn on_representations(&mut self, b: &RepresentationBundle) {
        self.rep_frames = Some(b.r_a0.shape()[0]);
    }
    fn on_generative(&mut self, g: &AudioBuffer) {
        self.gen = Some((g.len(), g.sample_rate));
    }
    fn on_predictive(&mut self, p: &AudioBuffer) {
        self.pred = Some((p.len(), p.sample_rate));
    }
    fn on_fused_48k(&mut self, y: &AudioBuffer) {
        self.fused = Some((y.len(), y.sample_rate));
    }
}

#[test]
fn length_within_one_sample_at_all_supported_rates() {
    let pipeline = toy_pipeline(1);
    for rate in gpse_cli::SUPPORTED_RATES {
        let n = rate as usize / 2; // half a second
        let x = tone(n, rate, rate as u64);
        let y = pipeline.enhance(&x, &mut NoProbe).unwrap();
        assert_eq!(y.sample_rate, rate);
        let diff = (y.len() as i64 - n as i64).abs();
        assert!(diff <= 1, "rate {rate}: {} vs {} samples", y.len(), n);
        assert!(y.samples.iter().all(|v| v.is_finite()));
    }
}

#[test]
fn internal_signals_run_at_the_documented_rates() {
    let pipeline = toy_pipeline(2);
    let x = tone(48000, 48000, 5);
    let mut probe = ShapeProbe::default();
    let y = pipeline.enhance(&x, &mut probe).unwrap();
    assert!((y.len() as i64 - 48000).abs() <= 1);

    let (n16, r16) = probe.input_16k.unwrap();
    assert_eq!(r16, 16000);
    assert_eq!(n16, 16000);
    assert_eq!(probe.flags_len.unwrap(), 50);
    assert_eq!(probe.rep_frames.unwrap(), 50);
    let (gn, gr) = probe.gen.unwrap();
    assert_eq!((gn, gr), (16000, 16000));
    let (pn, pr) = probe.pred.unwrap();
    assert_eq!((pn, pr), (16000, 16000));
    let (fn_, fr) = probe.fused.unwrap();
    assert_eq!((fn_, fr), (48000, 48000));
}

#[test]
fn enhance_is_bit_deterministic() {
    let pipeline = toy_pipeline(3);
    let x = tone(16000, 16000, 6);
    let a = pipeline.enhance(&x, &mut NoProbe).unwrap();
    let b = pipeline.enhance(&x, &mut NoProbe).unwrap();
    assert_eq!(a.samples, b.samples);
}

#[test]
fn unsupported_rates_are_rejected() {
    let pipeline = toy_pipeline(4);
    for rate in [96000u32, 11025, 7999] {
        let x = AudioBuffer::new(vec![0.1; 1000], rate).unwrap();
        assert!(
            matches!(pipeline.enhance(&x, &mut NoProbe), Err(CliError::UnsupportedRate(_))),
            "rate {rate} must be rejected"
        );
    }
}

#[test]
fn mismatched_checkpoints_are_rejected() {
    let enc = Encoder::new(
        &EncoderConfig { conv_channels: 24, n_transformer_layers: 2, d_model: 48, n_heads: 2, frame_hop: 320 },
        7,
    )
    .unwrap();
    // Adapter built for a different width.
    let ad_cfg = ConvNeXtBackboneConfig::toy_adapter(64);
    let adapter = Adapter::new(&ad_cfg, 64, 8).unwrap();
    let voc_cfg = ConvNeXtBackboneConfig::toy_vocoder(48);
    let vocoder = Vocoder::new(&voc_cfg, 9).unwrap();
    let predictor = Predictor::new(&PredictorConfig::toy(), 10).unwrap();
    let postnet = PostNet::new(&PostNetConfig::toy(), 11).unwrap();
    assert!(matches!(
        Pipeline::from_models(enc, adapter, vocoder, predictor, postnet),
        Err(CliError::ConfigMismatch(_))
    ));
}

#[test]
fn packet_loss_zeroes_reach_the_masked_path() {
    // A signal with zeroed 20 ms frames produces loss flags, and the
    // enhanced output is still finite and full length.
    let pipeline = toy_pipeline(5);
    let mut x = tone(16000, 16000, 12);
    for f in [3usize, 4, 20] {
        for i in f * 320..(f + 1) * 320 {
            x.samples[i] = 0.0;
        }
    }
    let mut probe = ShapeProbe::default();
    let y = pipeline.enhance(&x, &mut probe).unwrap();
    assert_eq!(probe.flags_len.unwrap(), 50);
    assert!((y.len() as i64 - 16000).abs() <= 1);
}
