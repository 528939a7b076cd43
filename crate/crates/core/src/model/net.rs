use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::config::{AttentionMode, ModelConfig};
use super::vocab::{Emotion, Vocab};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::nn::{glorot, Activation, Bound, Cbhg, Dense, GruCell, ParamId, ParamStore, PreNet};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Content-based tanh energy: `e_j = v' tanh(W h + V m_j)`.
#[derive(Clone, Debug)]
pub struct Energy {
    pub query: Dense,
    pub key: Dense,
    pub v: ParamId,
}

impl Energy {
    fn new<T: Scalar>(store: &mut ParamStore<T>, rng: &mut ChaCha8Rng, name: &str, cfg: &ModelConfig) -> Result<Self> {
        let a = cfg.attention_dim;
        let query = Dense::new(store, rng, &format!("{name}.query"), cfg.attention_rnn_dim, a, Activation::None)?;
        let key = Dense::new(store, rng, &format!("{name}.key"), cfg.encoder_dim(), a, Activation::None)?;
        let v = store.add(format!("{name}.v"), glorot(&[a, 1], a, 1, rng))?;
        Ok(Energy { query, key, v })
    }

    /// Energies for every memory row as a `[1, N]` row, given projected keys `[N, a]`.
    fn energies<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, h_att: Var, keys: Var) -> Result<Var> {
        let n = g.shape(keys)[0];
        let q = self.query.forward(g, p, h_att)?;
        let s = g.add(keys, q)?;
        let s = g.tanh(s)?;
        let e = g.matmul(s, p.var(self.v))?;
        g.reshape(e, &[1, n])
    }
}

/// Encoder outputs plus per-attention key projections computed once per utterance.
#[derive(Clone, Copy, Debug)]
pub struct Memory {
    pub values: Var,
    pub keys: Var,
    pub len: usize,
    pub dim: usize,
}

/// Emotion embedding as seen by the attention RNN and the decoder RNN.
#[derive(Clone, Copy, Debug)]
pub struct EmotionVars {
    pub attn: Var,
    pub dec: Var,
}

#[derive(Clone, Debug)]
pub(crate) struct Layers {
    pub embedding: ParamId,
    pub enc_prenet: PreNet,
    pub enc_cbhg: Cbhg,
    pub emotion: Dense,
    pub emotion_dec: Option<Dense>,
    pub dec_prenet: PreNet,
    pub attn_proj: Dense,
    pub attn_rnn: GruCell,
    pub energy: Energy,
    pub mono_bias: Option<ParamId>,
    pub dec_in: Dense,
    pub dec_rnn: [GruCell; 2],
    pub frame_proj: Dense,
    pub post_cbhg: Cbhg,
    pub post_proj: Dense,
}

/// The emotional Tacotron: parameters plus the layer layout that indexes them.
#[derive(Clone, Debug)]
pub struct Tacotron<T: Scalar> {
    cfg: ModelConfig,
    vocab: Vocab,
    params: ParamStore<T>,
    pub(crate) layers: Layers,
}

impl<T: Scalar> Tacotron<T> {
    pub fn new(cfg: &ModelConfig, seed: u64) -> Result<Self> {
        cfg.validate()?;
        let vocab = Vocab::new(&cfg.vocab)?;
        let mut store = ParamStore::new();
        let rng = &mut ChaCha8Rng::seed_from_u64(seed);
        let s = &mut store;
        let d = cfg.encoder_dim();
        let emb = cfg.emotion_embed_dim;

        let embedding = s.add("encoder.embedding", Tensor::uniform(&[vocab.size(), cfg.char_embed_dim], 0.5, rng))?;
        let enc_prenet =
            PreNet::new(s, rng, "encoder.prenet", cfg.char_embed_dim, &cfg.encoder_prenet_dims, cfg.prenet_dropout)?;
        let enc_cbhg = Cbhg::new(s, rng, "encoder.cbhg", d, &cfg.encoder_cbhg, cfg.cbhg_inner_residual)?;
        let emotion = Dense::new(s, rng, "emotion", cfg.n_emotions, emb, Activation::None)?;
        let emotion_dec = if cfg.separate_emotion_embeddings {
            Some(Dense::new(s, rng, "emotion_dec", cfg.n_emotions, emb, Activation::None)?)
        } else {
            None
        };
        let dec_prenet =
            PreNet::new(s, rng, "decoder.prenet", cfg.n_mels, &cfg.decoder_prenet_dims, cfg.prenet_dropout)?;
        let mut attn_in = dec_prenet.out_dim();
        if cfg.feed_context {
            attn_in += d;
        }
        if cfg.inject_emotion_attn {
            attn_in += emb;
        }
        let attn_proj = Dense::new(s, rng, "attention_rnn.proj", attn_in, cfg.attention_rnn_dim, Activation::None)?;
        let attn_rnn = GruCell::new(s, rng, "attention_rnn.gru", cfg.attention_rnn_dim, cfg.attention_rnn_dim)?;
        let (energy, mono_bias) = match cfg.attention_mode {
            AttentionMode::Soft => (Energy::new(s, rng, "attention.soft", cfg)?, None),
            AttentionMode::Monotonic => {
                let e = Energy::new(s, rng, "attention.monotonic", cfg)?;
                let b = s.add("attention.monotonic.r", Tensor::full(&[1], T::of(cfg.monotonic_energy_bias)))?;
                (e, Some(b))
            }
        };
        let h = cfg.decoder_rnn_dim;
        let dec_in = Dense::new(s, rng, "decoder.in", d + emb, h, Activation::None)?;
        let dec_rnn = [GruCell::new(s, rng, "decoder.gru1", h, h)?, GruCell::new(s, rng, "decoder.gru2", h, h)?];
        let frame_proj = Dense::new(s, rng, "decoder.frames", h, cfg.r * cfg.n_mels, Activation::None)?;
        let post_cbhg = Cbhg::new(s, rng, "postnet.cbhg", cfg.n_mels, &cfg.postnet_cbhg, cfg.cbhg_inner_residual)?;
        let post_proj = Dense::new(s, rng, "postnet.linear", cfg.n_mels, cfg.linear_bins, Activation::None)?;

        let layers = Layers {
            embedding,
            enc_prenet,
            enc_cbhg,
            emotion,
            emotion_dec,
            dec_prenet,
            attn_proj,
            attn_rnn,
            energy,
            mono_bias,
            dec_in,
            dec_rnn,
            frame_proj,
            post_cbhg,
            post_proj,
        };
        Ok(Tacotron { cfg: cfg.clone(), vocab, params: store, layers })
    }

    /// Rebuild the layout for `cfg` and adopt `params`, which must match it name for name.
    pub fn from_params(cfg: &ModelConfig, params: ParamStore<T>) -> Result<Self> {
        let mut model = Self::new(cfg, 0)?;
        if params.len() != model.params.len() {
            return Err(Error::Format(format!(
                "parameter registry has {} entries, configuration expects {}",
                params.len(),
                model.params.len()
            )));
        }
        for id in model.params.ids() {
            let (want, got) = (model.params.name(id), params.name(id));
            if want != got {
                return Err(Error::Format(format!("parameter {} is {got:?}, expected {want:?}", id.index())));
            }
            if model.params.get(id).shape() != params.get(id).shape() {
                return Err(Error::Format(format!(
                    "parameter {want:?} has shape {:?}, expected {:?}",
                    params.get(id).shape(),
                    model.params.get(id).shape()
                )));
            }
        }
        model.params = params;
        Ok(model)
    }

    pub fn config(&self) -> &ModelConfig {
        &self.cfg
    }

    pub fn vocab(&self) -> &Vocab {
        &self.vocab
    }

    pub fn params(&self) -> &ParamStore<T> {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut ParamStore<T> {
        &mut self.params
    }

    pub fn cast<U: Scalar>(&self) -> Tacotron<U> {
        Tacotron {
            cfg: self.cfg.clone(),
            vocab: self.vocab.clone(),
            params: self.params.cast(),
            layers: self.layers.clone(),
        }
    }

    /// Embedding, pre-net and CBHG over character ids; one memory row per id.
    pub fn encode_text(&self, g: &mut Graph<T>, p: &Bound, ids: &[usize], training: bool, seed: u64) -> Result<Memory> {
        if ids.is_empty() {
            return Err(Error::Contract("cannot encode an empty id sequence".into()));
        }
        if let Some(&bad) = ids.iter().find(|&&i| i >= self.vocab.size()) {
            return Err(Error::dim("embedding", format!("id {bad} outside vocabulary of {}", self.vocab.size())));
        }
        let l = &self.layers;
        let x = g.embedding(p.var(l.embedding), ids)?;
        let x = l.enc_prenet.forward(g, p, x, training, derive_seed(seed, 1))?;
        let values = l.enc_cbhg.forward(g, p, x)?;
        let keys = l.energy.key.forward(g, p, values)?;
        Ok(Memory { values, keys, len: ids.len(), dim: self.cfg.encoder_dim() })
    }

    /// Projected one-hot emotion, with dropout while training.
    pub fn embed_emotion(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        emotion: Emotion,
        training: bool,
        seed: u64,
    ) -> Result<EmotionVars> {
        let n = self.cfg.n_emotions;
        if emotion.id() >= n {
            return Err(Error::Label { label: emotion.name().into(), valid: Emotion::valid_labels() });
        }
        let mut onehot = vec![T::zero(); n];
        onehot[emotion.id()] = T::one();
        let x = g.constant(Tensor::row(onehot));
        let embed = |g: &mut Graph<T>, layer: &Dense, stream: u64| -> Result<Var> {
            let e = layer.forward(g, p, x)?;
            if training && self.cfg.emotion_dropout > 0.0 {
                g.dropout(e, self.cfg.emotion_dropout, derive_seed(seed, stream))
            } else {
                Ok(e)
            }
        };
        let attn = embed(g, &self.layers.emotion, 0)?;
        let dec = match &self.layers.emotion_dec {
            Some(layer) => embed(g, layer, 1)?,
            None => attn,
        };
        Ok(EmotionVars { attn, dec })
    }

    /// Soft attention: `alpha = softmax(e)`, `c = alpha M`.
    pub fn attend_soft(&self, g: &mut Graph<T>, p: &Bound, h_att: Var, mem: &Memory) -> Result<(Var, Var)> {
        if self.cfg.attention_mode != AttentionMode::Soft {
            return Err(Error::Config("model was built for monotonic attention".into()));
        }
        let e = self.layers.energy.energies(g, p, h_att, mem.keys)?;
        let alpha = g.softmax(e)?;
        let c = g.matmul(alpha, mem.values)?;
        Ok((alpha, c))
    }

    /// Selection probabilities `p_j = sigmoid(e_j + r + noise_scale * n_j)`, `[1, N]`.
    pub fn monotonic_probs(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        h_att: Var,
        mem: &Memory,
        noise_scale: f64,
        seed: u64,
    ) -> Result<Var> {
        let bias = self.layers.mono_bias.ok_or_else(|| Error::Config("model was built for soft attention".into()))?;
        let e = self.layers.energy.energies(g, p, h_att, mem.keys)?;
        let b = g.reshape(p.var(bias), &[1, 1])?;
        let ones = g.constant(Tensor::full(&[1, mem.len], T::one()));
        let b = g.matmul(b, ones)?;
        let mut e = g.add(e, b)?;
        if noise_scale > 0.0 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let noise: Vec<T> = (0..mem.len)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    T::of(noise_scale * z)
                })
                .collect();
            let n = g.constant(Tensor::row(noise));
            e = g.add(e, n)?;
        }
        g.sigmoid(e)
    }

    /// `h_att = GRU(proj([x_t | c_{t-1} | e]), h_att_prev)`; the context and
    /// emotion parts are present when their config flags are on.
    pub fn attention_rnn_step(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        x: Var,
        c_prev: Var,
        e: Var,
        h_prev: Var,
    ) -> Result<Var> {
        let mut parts = vec![x];
        if self.cfg.feed_context {
            parts.push(c_prev);
        }
        if self.cfg.inject_emotion_attn {
            parts.push(e);
        }
        let u = if parts.len() == 1 { x } else { g.concat(&parts)? };
        let v = self.layers.attn_proj.forward(g, p, u)?;
        self.layers.attn_rnn.step(g, p, v, h_prev)
    }

    /// Two residual GRU layers over `proj([c_t | e])`; returns the new hidden
    /// states and the top output.
    pub fn decoder_rnn_step(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        c: Var,
        e: Var,
        state: [Var; 2],
    ) -> Result<([Var; 2], Var)> {
        let u = g.concat(&[c, e])?;
        let in1 = self.layers.dec_in.forward(g, p, u)?;
        let s1 = self.layers.dec_rnn[0].step(g, p, in1, state[0])?;
        let h1 = g.add(in1, s1)?;
        let s2 = self.layers.dec_rnn[1].step(g, p, h1, state[1])?;
        let top = g.add(h1, s2)?;
        Ok(([s1, s2], top))
    }

    /// `r` mel frames from the top decoder output, `[r, n_mels]`.
    pub fn frame_projection(&self, g: &mut Graph<T>, p: &Bound, h_top: Var) -> Result<Var> {
        let y = self.layers.frame_proj.forward(g, p, h_top)?;
        g.reshape(y, &[self.cfg.r, self.cfg.n_mels])
    }

    /// Post-CBHG over mel frames followed by a projection to linear bins.
    pub fn postnet_linear(&self, g: &mut Graph<T>, p: &Bound, mel: Var) -> Result<Var> {
        let y = self.layers.post_cbhg.forward(g, p, mel)?;
        self.layers.post_proj.forward(g, p, y)
    }

    pub fn prenet_frame(&self, g: &mut Graph<T>, p: &Bound, frame: Var, training: bool, seed: u64) -> Result<Var> {
        self.layers.dec_prenet.forward(g, p, frame, training, seed)
    }
}

/// Hard monotonic choice: the first `j >= prev_pos` with `p_j >= 0.5`, or
/// `None` (end of input) with an all-zero row.
pub fn monotonic_hard_step<T: Scalar>(p: &[T], prev_pos: usize) -> (Option<usize>, Vec<T>) {
    let half = T::half();
    let pos = (prev_pos..p.len()).find(|&j| p[j] >= half);
    let mut alpha = vec![T::zero(); p.len()];
    if let Some(j) = pos {
        alpha[j] = T::one();
    }
    (pos, alpha)
}
