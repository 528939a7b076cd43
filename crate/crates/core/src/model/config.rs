use serde::{Deserialize, Serialize};

use super::vocab::Vocab;
use crate::error::{Error, Result};
use crate::nn::CbhgConfig;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum AttentionMode {
    Soft,
    #[default]
    Monotonic,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelConfig {
    /// Characters in id order; padding and end-of-sequence ids are implicit.
    pub vocab: String,
    pub char_embed_dim: usize,
    /// The last entry is the encoder width `d` carried through the CBHG.
    pub encoder_prenet_dims: Vec<usize>,
    pub encoder_cbhg: CbhgConfig,
    /// Residual around the CBHG conv projections (encoder and post-net).
    pub cbhg_inner_residual: bool,
    pub attention_dim: usize,
    pub attention_rnn_dim: usize,
    pub decoder_rnn_dim: usize,
    pub decoder_layers: usize,
    pub decoder_prenet_dims: Vec<usize>,
    pub prenet_dropout: f64,
    pub n_mels: usize,
    /// Linear-spectrogram bins predicted by the post-net, `n_fft / 2 + 1`.
    pub linear_bins: usize,
    pub postnet_cbhg: CbhgConfig,
    pub r: usize,
    pub n_emotions: usize,
    pub emotion_embed_dim: usize,
    pub emotion_dropout: f64,
    /// Separate emotion embeddings for the attention RNN and the decoder RNN.
    pub separate_emotion_embeddings: bool,
    pub attention_mode: AttentionMode,
    /// Scale of the pre-sigmoid Gaussian noise on monotonic energies while training.
    pub monotonic_noise: f64,
    pub monotonic_energy_bias: f64,
    /// Feed the previous context vector into the attention RNN.
    pub feed_context: bool,
    /// Feed the emotion embedding into the attention RNN.
    pub inject_emotion_attn: bool,
    pub max_decoder_steps: usize,
    pub stop_threshold: f64,
    pub stop_patience: usize,
    /// Permit values other than the six-emotion, 64-unit, 0.5-dropout embedding.
    pub allow_nonpaper: bool,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            vocab: "abcdefghij".into(),
            char_embed_dim: 64,
            encoder_prenet_dims: vec![64, 32],
            encoder_cbhg: CbhgConfig::default(),
            cbhg_inner_residual: true,
            attention_dim: 64,
            attention_rnn_dim: 64,
            decoder_rnn_dim: 64,
            decoder_layers: 2,
            decoder_prenet_dims: vec![64, 32],
            prenet_dropout: 0.5,
            n_mels: 80,
            linear_bins: 513,
            postnet_cbhg: CbhgConfig { k: 4, channels: 32, highway_layers: 4 },
            r: 2,
            n_emotions: 6,
            emotion_embed_dim: 64,
            emotion_dropout: 0.5,
            separate_emotion_embeddings: false,
            attention_mode: AttentionMode::Monotonic,
            monotonic_noise: 1.0,
            monotonic_energy_bias: -1.0,
            feed_context: true,
            inject_emotion_attn: true,
            max_decoder_steps: 200,
            stop_threshold: 0.01,
            stop_patience: 3,
            allow_nonpaper: false,
        }
    }
}

impl ModelConfig {
    pub fn encoder_dim(&self) -> usize {
        self.encoder_prenet_dims.last().copied().unwrap_or(0)
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        Vocab::new(&self.vocab)?;
        if self.r == 0 {
            return fail("r must be at least 1".into());
        }
        if self.decoder_layers != 2 {
            return fail(format!("decoder_layers is fixed at 2, got {}", self.decoder_layers));
        }
        if !self.allow_nonpaper {
            if self.n_emotions != 6 {
                return fail(format!("n_emotions must be 6, got {} (set allow_nonpaper to override)", self.n_emotions));
            }
            if self.emotion_embed_dim != 64 {
                return fail(format!(
                    "emotion_embed_dim must be 64, got {} (set allow_nonpaper to override)",
                    self.emotion_embed_dim
                ));
            }
            if self.emotion_dropout != 0.5 {
                return fail(format!(
                    "emotion_dropout must be 0.5, got {} (set allow_nonpaper to override)",
                    self.emotion_dropout
                ));
            }
        }
        if self.n_emotions == 0 || self.n_emotions > 6 {
            return fail(format!("n_emotions must be in 1..=6, got {}", self.n_emotions));
        }
        for (name, v) in [
            ("char_embed_dim", self.char_embed_dim),
            ("attention_dim", self.attention_dim),
            ("attention_rnn_dim", self.attention_rnn_dim),
            ("decoder_rnn_dim", self.decoder_rnn_dim),
            ("n_mels", self.n_mels),
            ("linear_bins", self.linear_bins),
            ("emotion_embed_dim", self.emotion_embed_dim),
            ("max_decoder_steps", self.max_decoder_steps),
            ("stop_patience", self.stop_patience),
        ] {
            if v == 0 {
                return fail(format!("{name} must be positive"));
            }
        }
        if self.encoder_prenet_dims.is_empty() || self.encoder_prenet_dims.contains(&0) {
            return fail("encoder_prenet_dims must be non-empty and positive".into());
        }
        if self.decoder_prenet_dims.is_empty() || self.decoder_prenet_dims.contains(&0) {
            return fail("decoder_prenet_dims must be non-empty and positive".into());
        }
        if self.encoder_dim() % 2 != 0 {
            return fail(format!("encoder width {} must be even for the residual bi-GRU", self.encoder_dim()));
        }
        if self.n_mels % 2 != 0 {
            return fail(format!("n_mels {} must be even for the post-net residual bi-GRU", self.n_mels));
        }
        for (name, p) in [("prenet_dropout", self.prenet_dropout), ("emotion_dropout", self.emotion_dropout)] {
            if !(0.0..1.0).contains(&p) {
                return fail(format!("{name} must be in [0, 1), got {p}"));
            }
        }
        if self.monotonic_noise < 0.0 || !self.monotonic_noise.is_finite() {
            return fail("monotonic_noise must be finite and non-negative".into());
        }
        if !(self.stop_threshold > 0.0) {
            return fail("stop_threshold must be positive".into());
        }
        Ok(())
    }
}
