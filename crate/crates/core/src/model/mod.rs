//! The emotional Tacotron: character encoder, emotion embedding, soft or
//! monotonic attention, attention RNN fed with the previous context and the
//! emotion, residual two-layer decoder emitting `r` mel frames per step, and a
//! CBHG post-net to linear spectrograms.

mod config;
mod decode;
mod net;
mod vocab;

pub use config::{AttentionMode, ModelConfig};
pub use decode::{semi_teacher_input, DecodeMode, DecodeOptions, Decoded, Example, Forward, Synthesis};
pub use net::{monotonic_hard_step, EmotionVars, Energy, Memory, Tacotron};
pub use vocab::{Emotion, Vocab, EOS_ID, MAX_TEXT_CHARS, PAD_ID};
