use std::f64::consts::PI;
use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{manifest_string, ManifestEntry};
use crate::dsp::{wav_write, Waveform};
use crate::error::{Error, Result};
use crate::model::Emotion;
use crate::rng::chacha;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EmotionStyle {
    pub pitch: f64,
    pub duration: f64,
}

/// A tone language: each character is a sine at its own frequency, and each
/// emotion scales pitch and duration. The tables are arbitrary defaults.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSpec {
    pub alphabet: String,
    /// Frequency of the first character; each later one adds `step_hz`.
    pub base_hz: f64,
    pub step_hz: f64,
    pub char_ms: f64,
    pub ramp_ms: f64,
    pub amplitude: f64,
    pub sample_rate: u32,
    pub min_chars: usize,
    pub max_chars: usize,
    /// Range of the silence added before and after each utterance.
    pub margin_ms: (f64, f64),
    /// Indexed by emotion id.
    pub styles: [EmotionStyle; 6],
    /// Longest voiced duration the generator will produce.
    pub max_seconds: f64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        let s = |pitch, duration| EmotionStyle { pitch, duration };
        SyntheticSpec {
            alphabet: "abcdefghij".into(),
            base_hz: 200.0,
            step_hz: 50.0,
            char_ms: 100.0,
            ramp_ms: 10.0,
            amplitude: 0.5,
            sample_rate: 16_000,
            min_chars: 3,
            max_chars: 12,
            margin_ms: (50.0, 250.0),
            styles: [s(1.00, 1.00), s(1.15, 0.90), s(1.10, 1.05), s(1.20, 0.95), s(0.90, 1.15), s(1.25, 0.85)],
            max_seconds: 8.7,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.alphabet.is_empty() {
            return bad("alphabet is empty".into());
        }
        if self.styles.iter().any(|s| !(s.pitch > 0.0 && s.duration > 0.0)) {
            return bad("emotion multipliers must be positive".into());
        }
        if !(self.base_hz > 0.0 && self.char_ms > 0.0 && self.ramp_ms >= 0.0 && self.sample_rate > 0) {
            return bad("base_hz, char_ms and sample_rate must be positive".into());
        }
        if self.min_chars == 0 || self.min_chars > self.max_chars {
            return bad(format!("need 1 <= min_chars ({}) <= max_chars ({})", self.min_chars, self.max_chars));
        }
        if !(0.0 <= self.margin_ms.0 && self.margin_ms.0 <= self.margin_ms.1) {
            return bad("margin_ms must be an ordered non-negative range".into());
        }
        let nyquist = self.sample_rate as f64 / 2.0;
        let last = self.alphabet.chars().count() - 1;
        let top = Emotion::ALL.iter().map(|&e| self.frequency(last, e)).fold(0.0, f64::max);
        if top >= nyquist {
            return bad(format!("highest tone {top:.0} Hz is not below Nyquist {nyquist:.0} Hz"));
        }
        Ok(())
    }

    pub fn frequency(&self, char_index: usize, emotion: Emotion) -> f64 {
        (self.base_hz + self.step_hz * char_index as f64) * self.styles[emotion.id()].pitch
    }

    /// Samples per character for `emotion`.
    pub fn char_samples(&self, emotion: Emotion) -> usize {
        (self.char_ms * self.styles[emotion.id()].duration / 1000.0 * self.sample_rate as f64).round() as usize
    }

    /// Voiced audio for `text`: one ramped sine segment per character.
    pub fn render(&self, text: &str, emotion: Emotion) -> Result<Waveform<f64>> {
        let n = self.char_samples(emotion);
        let seconds = (n * text.chars().count()) as f64 / self.sample_rate as f64;
        if seconds > self.max_seconds {
            return Err(Error::Data(format!(
                "{text:?} as {emotion} lasts {seconds:.2} s, over the {} s limit",
                self.max_seconds
            )));
        }
        let ramp = ((self.ramp_ms / 1000.0 * self.sample_rate as f64).round() as usize).min(n / 2);
        let sr = self.sample_rate as f64;
        let mut out = Vec::with_capacity(n * text.len());
        for (pos, ch) in text.chars().enumerate() {
            let k = self.alphabet.chars().position(|c| c == ch).ok_or(Error::Vocab { ch, pos })?;
            let f = self.frequency(k, emotion);
            for i in 0..n {
                let edge = i.min(n - 1 - i);
                let env = if edge < ramp { 0.5 - 0.5 * (PI * (edge as f64 + 0.5) / ramp as f64).cos() } else { 1.0 };
                out.push(self.amplitude * env * (2.0 * PI * f * i as f64 / sr).sin());
            }
        }
        Waveform::new(out, self.sample_rate)
    }
}

/// Write `n` utterances and `manifest.jsonl` into `out_dir`. Emotions come in
/// shuffled cycles of six and every utterance draws its own text, so each
/// emotion sees the same text distribution.
pub fn generate_synthetic_corpus(
    n: usize,
    spec: &SyntheticSpec,
    seed: u64,
    out_dir: impl AsRef<Path>,
) -> Result<PathBuf> {
    if n == 0 {
        return Err(Error::Contract("corpus size must be at least 1".into()));
    }
    spec.validate()?;
    let out_dir = out_dir.as_ref();
    fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;
    let alphabet: Vec<char> = spec.alphabet.chars().collect();
    let mut rng = chacha(seed);
    let mut entries = Vec::with_capacity(n);
    while entries.len() < n {
        let mut order = Emotion::ALL;
        order.shuffle(&mut rng);
        for emotion in order.into_iter().take(n - entries.len()) {
            let len = rng.random_range(spec.min_chars..=spec.max_chars);
            let text: String = (0..len).map(|_| alphabet[rng.random_range(0..alphabet.len())]).collect();
            let voiced = spec.render(&text, emotion)?;
            let mut margin = || {
                let ms = rng.random_range(spec.margin_ms.0..=spec.margin_ms.1);
                (ms / 1000.0 * spec.sample_rate as f64).round() as usize
            };
            let (lead, tail) = (margin(), margin());
            let mut samples = vec![0.0; lead];
            samples.extend_from_slice(&voiced.samples);
            samples.resize(samples.len() + tail, 0.0);
            let id = format!("utt{:04}", entries.len());
            let wav_path = format!("{id}.wav");
            wav_write(out_dir.join(&wav_path), &Waveform::new(samples, spec.sample_rate)?)?;
            entries.push(ManifestEntry { id, text, emotion: emotion.name().into(), wav_path });
        }
    }
    let path = out_dir.join("manifest.jsonl");
    fs::write(&path, manifest_string(&entries)).map_err(|e| Error::io(&path, e))?;
    Ok(path)
}
