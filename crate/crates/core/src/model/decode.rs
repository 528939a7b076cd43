use serde::{Deserialize, Serialize};

use super::config::AttentionMode;
use super::net::{monotonic_hard_step, EmotionVars, Memory, Tacotron};
use super::vocab::Emotion;
use crate::autodiff::{Graph, Tensor, Var};
use crate::dsp::{db_denorm, deemphasize, griffin_lim, AudioConfig, Waveform};
use crate::error::{Error, Result};
use crate::nn::Bound;
use crate::rng::derive_seed;
use crate::scalar::Scalar;

/// Which previous frame feeds the decoder pre-net.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum DecodeMode {
    /// Ground truth `y_{t-1}`.
    Teacher,
    /// `0.5 (y_{t-1} + ŷ_{t-1})`.
    #[default]
    Semi,
    /// The model's own `ŷ_{t-1}`.
    #[serde(alias = "free-eval")]
    Free,
}

#[derive(Clone, Copy, Debug)]
pub struct DecodeOptions {
    pub mode: DecodeMode,
    /// Dropout and monotonic noise on.
    pub training: bool,
    /// Threshold monotonic probabilities instead of taking expectations.
    pub hard_monotonic: bool,
    pub seed: u64,
}

impl DecodeOptions {
    pub fn training(mode: DecodeMode, seed: u64) -> Self {
        DecodeOptions { mode, training: true, hard_monotonic: false, seed }
    }

    /// Deterministic teacher-forced pass with expected alignments, for diagnostics.
    pub fn analysis(mode: DecodeMode) -> Self {
        DecodeOptions { mode, training: false, hard_monotonic: false, seed: 0 }
    }

    /// Free-running inference; monotonic attention is thresholded.
    pub fn inference() -> Self {
        DecodeOptions { mode: DecodeMode::Free, training: false, hard_monotonic: true, seed: 0 }
    }
}

/// Output of [`Tacotron::decode_sequence`].
#[derive(Clone, Debug)]
pub struct Decoded<T> {
    /// `[steps * r, n_mels]`.
    pub mel: Var,
    /// Decoder steps × encoder steps.
    pub alignment: Tensor<T>,
    pub steps: usize,
    /// Free decoding hit `max_decoder_steps` without meeting the silence criterion.
    pub truncated: bool,
    /// Hard monotonic positions per step (`None` past the end of the input).
    pub positions: Vec<Option<usize>>,
}

/// Elementwise `0.5 (y + ŷ)`.
pub fn semi_teacher_input<T: Scalar>(y_prev: &Tensor<T>, yhat_prev: &Tensor<T>) -> Result<Tensor<T>> {
    if y_prev.shape() != yhat_prev.shape() {
        return Err(Error::dim("semi_teacher_input", format!("{:?} vs {:?}", y_prev.shape(), yhat_prev.shape())));
    }
    let half = T::half();
    let data = y_prev.data().iter().zip(yhat_prev.data()).map(|(&a, &b)| half * (a + b)).collect();
    Tensor::new(y_prev.shape().to_vec(), data)
}

/// One training/analysis item: ids, emotion, and normalized targets.
#[derive(Clone, Debug)]
pub struct Example<T> {
    pub ids: Vec<usize>,
    pub emotion: Emotion,
    /// `[frames, n_mels]`, frames a multiple of `r`.
    pub mel: Tensor<T>,
    /// `[frames, linear_bins]`.
    pub linear: Tensor<T>,
}

impl<T: Scalar> Example<T> {
    pub fn cast<U: Scalar>(&self) -> Example<U> {
        Example { ids: self.ids.clone(), emotion: self.emotion, mel: self.mel.cast(), linear: self.linear.cast() }
    }
}

/// Graph handles from a full forward pass.
#[derive(Clone, Debug)]
pub struct Forward<T> {
    pub mel: Var,
    pub linear: Var,
    pub decoded: Decoded<T>,
}

/// Everything produced while turning text into audio.
#[derive(Clone, Debug)]
pub struct Synthesis<T> {
    pub waveform: Waveform<T>,
    /// Normalized mel frames, `[frames, n_mels]`.
    pub mel: Tensor<T>,
    /// Normalized linear frames, `[frames, linear_bins]`.
    pub linear: Tensor<T>,
    pub alignment: Tensor<T>,
    pub steps: usize,
    pub truncated: bool,
    pub spectral_convergence: Vec<f64>,
}

fn quiet_group<T: Scalar>(frames: &Tensor<T>, threshold: f64) -> bool {
    let sum: f64 = frames.data().iter().map(|v| v.to_f64_lossy().clamp(0.0, 1.0)).sum();
    sum / (frames.numel() as f64) < threshold
}

impl<T: Scalar> Tacotron<T> {
    /// Run the decoder. With targets, one step per `r` target frames (free
    /// mode then only borrows their length). Free mode without targets runs
    /// until `stop_patience` consecutive groups have a mean clipped level below
    /// `stop_threshold`, or for `max_decoder_steps`.
    pub fn decode_sequence(
        &self,
        g: &mut Graph<T>,
        p: &Bound,
        mem: &Memory,
        e: EmotionVars,
        targets: Option<&Tensor<T>>,
        opts: &DecodeOptions,
    ) -> Result<Decoded<T>> {
        let cfg = self.config();
        let (r, n_mels) = (cfg.r, cfg.n_mels);
        let steps = match (opts.mode, targets) {
            (DecodeMode::Free, None) => cfg.max_decoder_steps,
            (_, None) => return Err(Error::Contract(format!("{:?} decoding needs target frames", opts.mode))),
            (_, Some(y)) => {
                if y.shape().len() != 2 || y.cols() != n_mels || y.rows() == 0 || y.rows() % r != 0 {
                    return Err(Error::Contract(format!(
                        "targets {:?} must be [k * {r}, {n_mels}] with k >= 1",
                        y.shape()
                    )));
                }
                y.rows() / r
            }
        };
        let monotonic = cfg.attention_mode == AttentionMode::Monotonic;
        let hard = monotonic && opts.hard_monotonic;
        let noise = if opts.training { cfg.monotonic_noise } else { 0.0 };

        let mut h_att = g.constant(Tensor::zeros(&[1, cfg.attention_rnn_dim]));
        let mut c_prev = g.constant(Tensor::zeros(&[1, mem.dim]));
        let mut dec_state = [
            g.constant(Tensor::zeros(&[1, cfg.decoder_rnn_dim])),
            g.constant(Tensor::zeros(&[1, cfg.decoder_rnn_dim])),
        ];
        let mut alpha_prev = {
            let mut a = vec![T::zero(); mem.len];
            a[0] = T::one();
            g.constant(Tensor::row(a))
        };
        let mut hard_pos = 0usize;
        let mut input = Tensor::<T>::zeros(&[1, n_mels]);
        let mut groups = Vec::with_capacity(steps);
        let mut align = Vec::with_capacity(steps * mem.len);
        let mut positions = Vec::new();
        let mut quiet = 0usize;
        let mut truncated = false;

        for t in 0..steps {
            let step_seed = derive_seed(opts.seed, 1000 + t as u64);
            let x_in = g.constant(input.clone());
            let x = self.prenet_frame(g, p, x_in, opts.training, derive_seed(step_seed, 0))?;
            h_att = self.attention_rnn_step(g, p, x, c_prev, e.attn, h_att)?;
            let (alpha, c) = if !monotonic {
                self.attend_soft(g, p, h_att, mem)?
            } else {
                let probs = self.monotonic_probs(g, p, h_att, mem, noise, derive_seed(step_seed, 1))?;
                if hard {
                    let (pos, row) = monotonic_hard_step(g.value(probs).data(), hard_pos);
                    positions.push(pos);
                    hard_pos = pos.unwrap_or(mem.len);
                    let a = g.constant(Tensor::row(row));
                    let c = g.matmul(a, mem.values)?;
                    (a, c)
                } else {
                    let a = g.monotonic_align(probs, alpha_prev)?;
                    alpha_prev = a;
                    let c = g.matmul(a, mem.values)?;
                    (a, c)
                }
            };
            align.extend_from_slice(g.value(alpha).data());
            let (state, top) = self.decoder_rnn_step(g, p, c, e.dec, dec_state)?;
            dec_state = state;
            c_prev = c;
            let frames = self.frame_projection(g, p, top)?;
            groups.push(frames);

            let fv = g.value(frames);
            let last = Tensor::row(fv.row_slice(r - 1).to_vec());
            input = match (opts.mode, targets) {
                (DecodeMode::Free, Some(_)) => last,
                (DecodeMode::Free, None) => {
                    quiet = if quiet_group(fv, cfg.stop_threshold) { quiet + 1 } else { 0 };
                    if quiet >= cfg.stop_patience {
                        break;
                    }
                    if t + 1 == steps {
                        truncated = true;
                    }
                    last
                }
                (DecodeMode::Teacher, Some(y)) => Tensor::row(y.row_slice((t + 1) * r - 1).to_vec()),
                (DecodeMode::Semi, Some(y)) => {
                    let truth = Tensor::row(y.row_slice((t + 1) * r - 1).to_vec());
                    semi_teacher_input(&truth, &last)?
                }
                _ => unreachable!("targets checked above"),
            };
        }
        let taken = groups.len();
        let mel = g.stack_rows(&groups)?;
        Ok(Decoded { mel, alignment: Tensor::new(vec![taken, mem.len], align)?, steps: taken, truncated, positions })
    }

    /// Encoder, decoder and post-net for one example.
    pub fn forward(&self, g: &mut Graph<T>, p: &Bound, ex: &Example<T>, opts: &DecodeOptions) -> Result<Forward<T>> {
        let mem = self.encode_text(g, p, &ex.ids, opts.training, derive_seed(opts.seed, 1))?;
        let e = self.embed_emotion(g, p, ex.emotion, opts.training, derive_seed(opts.seed, 2))?;
        let decoded = self.decode_sequence(g, p, &mem, e, Some(&ex.mel), opts)?;
        let linear = self.postnet_linear(g, p, decoded.mel)?;
        Ok(Forward { mel: decoded.mel, linear, decoded })
    }

    /// Text and emotion to audio: free decoding, post-net, de-normalization,
    /// Griffin-Lim and de-emphasis.
    pub fn synthesize(&self, text: &str, emotion: Emotion, audio: &AudioConfig) -> Result<Synthesis<T>> {
        if audio.n_mels != self.config().n_mels || audio.n_bins() != self.config().linear_bins {
            return Err(Error::Config(format!(
                "audio config gives {} mels / {} bins, model expects {} / {}",
                audio.n_mels,
                audio.n_bins(),
                self.config().n_mels,
                self.config().linear_bins
            )));
        }
        let ids = self.vocab().encode(text)?;
        let mut g = Graph::new();
        let p = self.params().bind_frozen(&mut g);
        let opts = DecodeOptions::inference();
        let mem = self.encode_text(&mut g, &p, &ids, false, 0)?;
        let e = self.embed_emotion(&mut g, &p, emotion, false, 0)?;
        let decoded = self.decode_sequence(&mut g, &p, &mem, e, None, &opts)?;
        let lin = self.postnet_linear(&mut g, &p, decoded.mel)?;
        let mel = g.value(decoded.mel).clone();
        let linear = g.value(lin).clone();
        let clipped = linear.map(|v| v.max(T::zero()).min(T::one()));
        let magnitude = db_denorm(&clipped, audio);
        let gl = griffin_lim(&magnitude, audio)?;
        let waveform = deemphasize(&gl.waveform, audio.preemphasis)?;
        Ok(Synthesis {
            waveform,
            mel,
            linear,
            alignment: decoded.alignment,
            steps: decoded.steps,
            truncated: decoded.truncated,
            spectral_convergence: gl.spectral_convergence,
        })
    }
}
