//! Manifests of `<text, audio, emotion>` pairs, the synthetic tone corpus,
//! feature extraction into a single-file cache, and the run configuration.

mod cache;
mod synthetic;

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::dsp::AudioConfig;
use crate::error::{Error, Result};
use crate::model::{Emotion, ModelConfig, Vocab, MAX_TEXT_CHARS};
use crate::scalar::Precision;
use crate::train::TrainConfig;

pub use cache::{
    cache_bytes, parse_cache, preprocess_corpus, read_cache, write_cache, CacheRecord, FeatureCache, PreprocessSummary,
    MAX_TRIMMED_SECONDS,
};
pub use synthetic::{generate_synthetic_corpus, EmotionStyle, SyntheticSpec};

/// One manifest line.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ManifestEntry {
    pub id: String,
    pub text: String,
    pub emotion: String,
    /// Relative to the manifest's directory.
    pub wav_path: String,
}

impl ManifestEntry {
    pub fn emotion(&self) -> Result<Emotion> {
        self.emotion.parse()
    }
}

/// Parse and validate JSON lines; blank lines are ignored.
pub fn parse_manifest(text: &str) -> Result<Vec<ManifestEntry>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (i, line) in text.lines().enumerate() {
        let n = i + 1;
        if line.trim().is_empty() {
            continue;
        }
        let e: ManifestEntry =
            serde_json::from_str(line).map_err(|err| Error::Data(format!("manifest line {n}: {err}")))?;
        if let Err(err) = e.emotion() {
            return Err(Error::Data(format!("manifest line {n}, entry {:?}: {err}", e.id)));
        }
        let chars = e.text.chars().count();
        if chars == 0 || chars > MAX_TEXT_CHARS {
            return Err(Error::Data(format!(
                "manifest line {n}, entry {:?}: text has {chars} characters; texts must have 1 to {MAX_TEXT_CHARS} (200-character cap)",
                e.id
            )));
        }
        if !seen.insert(e.id.clone()) {
            return Err(Error::Data(format!("manifest line {n}: duplicate id {:?}", e.id)));
        }
        out.push(e);
    }
    Ok(out)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<Vec<ManifestEntry>> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_manifest(&text)
}

pub fn manifest_string(entries: &[ManifestEntry]) -> String {
    entries.iter().map(|e| serde_json::to_string(e).expect("manifest entries serialize") + "\n").collect()
}

/// Every character of every text must be in the vocabulary.
pub fn check_vocab(entries: &[ManifestEntry], vocab: &Vocab) -> Result<()> {
    for e in entries {
        vocab.encode(&e.text).map_err(|err| Error::Config(format!("entry {:?}: {err}", e.id)))?;
    }
    Ok(())
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunPaths {
    pub manifest: Option<PathBuf>,
    pub cache: Option<PathBuf>,
    pub ckpt_dir: Option<PathBuf>,
    pub out_dir: Option<PathBuf>,
}

/// The single JSON document driving preprocessing and training.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub audio: AudioConfig,
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub paths: RunPaths,
    pub precision: Precision,
    /// Seeds parameter initialization.
    pub seed: u64,
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        self.audio.validate()?;
        self.model.validate()?;
        self.train.validate()?;
        if self.audio.n_mels != self.model.n_mels {
            return Err(Error::Config(format!(
                "audio.n_mels = {} but model.n_mels = {}",
                self.audio.n_mels, self.model.n_mels
            )));
        }
        if self.audio.n_bins() != self.model.linear_bins {
            return Err(Error::Config(format!(
                "audio.n_fft = {} gives {} bins but model.linear_bins = {}",
                self.audio.n_fft,
                self.audio.n_bins(),
                self.model.linear_bins
            )));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: RunConfig = serde_json::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }
}

#[cfg(test)]
mod tests;
