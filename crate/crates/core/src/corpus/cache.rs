//! `ETTC1\n`, a decimal header length and newline, a JSON index, then
//! little-endian f64 arrays (mel then linear for each record).

use std::fs;
use std::path::Path;

use log::{info, warn};
use serde::{Deserialize, Serialize};

use super::ManifestEntry;
use crate::autodiff::Tensor;
use crate::dsp::{amp_to_db_norm, preemphasize, stft, vad_trim, wav_read, AudioConfig, MelFilterbank, VadParams};
use crate::error::{Error, Result};
use crate::model::{Emotion, Example, Vocab};

const MAGIC: &[u8] = b"ETTC1\n";

/// Utterances longer than this after trimming are skipped.
pub const MAX_TRIMMED_SECONDS: f64 = 8.7;

#[derive(Clone, Debug, PartialEq)]
pub struct CacheRecord {
    pub id: String,
    pub text: String,
    pub emotion: Emotion,
    pub ids: Vec<usize>,
    /// Normalized, `[frames, n_mels]`.
    pub mel: Tensor<f64>,
    /// Normalized, `[frames, n_bins]`.
    pub linear: Tensor<f64>,
}

impl CacheRecord {
    pub fn example(&self) -> Example<f64> {
        Example { ids: self.ids.clone(), emotion: self.emotion, mel: self.mel.clone(), linear: self.linear.clone() }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct FeatureCache {
    pub audio: AudioConfig,
    pub vocab: String,
    pub records: Vec<CacheRecord>,
}

impl FeatureCache {
    pub fn examples(&self) -> Vec<Example<f64>> {
        self.records.iter().map(CacheRecord::example).collect()
    }

    pub fn find(&self, id: &str) -> Option<&CacheRecord> {
        self.records.iter().find(|r| r.id == id)
    }
}

#[derive(Clone, Debug, Default, PartialEq)]
pub struct PreprocessSummary {
    pub kept: usize,
    /// `(id, reason)` for every entry left out.
    pub skipped: Vec<(String, String)>,
    /// Trimmed audio kept, in hours.
    pub total_hours: f64,
}

fn extract(
    entry: &ManifestEntry,
    base: &Path,
    audio: &AudioConfig,
    bank: &MelFilterbank<f64>,
    vocab: &Vocab,
) -> Result<(CacheRecord, f64)> {
    let emotion = entry.emotion()?;
    let ids = vocab.encode(&entry.text)?;
    let wave = wav_read::<f64>(base.join(&entry.wav_path))?;
    if wave.sample_rate != audio.sample_rate {
        return Err(Error::Data(format!("sample rate {} Hz, expected {} Hz", wave.sample_rate, audio.sample_rate)));
    }
    let wave = preemphasize(&wave, audio.preemphasis)?;
    let trimmed = vad_trim(&wave, VadParams::default())?;
    let seconds = trimmed.duration_secs();
    if seconds > MAX_TRIMMED_SECONDS {
        return Err(Error::Data(format!(
            "{seconds:.2} s after silence trimming; utterances must be shorter than {MAX_TRIMMED_SECONDS} s"
        )));
    }
    let spec = stft(&trimmed, audio)?;
    let mel = bank.apply(&spec.magnitude)?;
    let record = CacheRecord {
        id: entry.id.clone(),
        text: entry.text.clone(),
        emotion,
        ids,
        mel: amp_to_db_norm(&mel, audio),
        linear: amp_to_db_norm(&spec.magnitude, audio),
    };
    Ok((record, seconds))
}

/// Read, pre-emphasize, trim, bound the duration, analyze and normalize every
/// entry. Bad entries are skipped with a warning; an empty result is an error.
/// `base` is the directory that `wav_path`s are relative to.
pub fn preprocess_corpus(
    entries: &[ManifestEntry],
    base: &Path,
    audio: &AudioConfig,
    vocab: &Vocab,
) -> Result<(FeatureCache, PreprocessSummary)> {
    audio.validate()?;
    let bank = MelFilterbank::new(audio)?;
    let mut records = Vec::new();
    let mut summary = PreprocessSummary::default();
    for entry in entries {
        match extract(entry, base, audio, &bank, vocab) {
            Ok((record, seconds)) => {
                records.push(record);
                summary.kept += 1;
                summary.total_hours += seconds / 3600.0;
            }
            Err(e) => {
                warn!("skipping {}: {e}", entry.id);
                summary.skipped.push((entry.id.clone(), e.to_string()));
            }
        }
    }
    if records.is_empty() {
        return Err(Error::Data(format!("no usable utterances among {} manifest entries", entries.len())));
    }
    info!("kept {} utterances ({:.4} h), skipped {}", summary.kept, summary.total_hours, summary.skipped.len());
    Ok((FeatureCache { audio: audio.clone(), vocab: vocab.chars().iter().collect(), records }, summary))
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    audio: AudioConfig,
    vocab: String,
    records: Vec<IndexEntry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct IndexEntry {
    id: String,
    text: String,
    emotion: String,
    ids: Vec<usize>,
    mel: Span,
    linear: Span,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Span {
    offset: usize,
    shape: [usize; 2],
}

pub fn cache_bytes(cache: &FeatureCache) -> Vec<u8> {
    let mut offset = 0;
    let mut span = |t: &Tensor<f64>| {
        let s = Span { offset, shape: [t.rows(), t.cols()] };
        offset += t.numel() * 8;
        s
    };
    let records = cache
        .records
        .iter()
        .map(|r| IndexEntry {
            id: r.id.clone(),
            text: r.text.clone(),
            emotion: r.emotion.name().into(),
            ids: r.ids.clone(),
            mel: span(&r.mel),
            linear: span(&r.linear),
        })
        .collect();
    let header = Header { audio: cache.audio.clone(), vocab: cache.vocab.clone(), records };
    let json = serde_json::to_vec(&header).expect("cache header serializes");
    let mut out = MAGIC.to_vec();
    out.extend_from_slice(format!("{}\n", json.len()).as_bytes());
    out.extend_from_slice(&json);
    for r in &cache.records {
        for t in [&r.mel, &r.linear] {
            for v in t.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
    }
    out
}

pub fn parse_cache(bytes: &[u8]) -> Result<FeatureCache> {
    let rest =
        bytes.strip_prefix(MAGIC).ok_or_else(|| Error::Format("bad magic: not an ETTC1 feature cache".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("truncated: missing header length".into()))?;
    let len: usize = std::str::from_utf8(&rest[..nl])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("header length is not a decimal number".into()))?;
    let rest = &rest[nl + 1..];
    if rest.len() < len {
        return Err(Error::Format(format!("truncated: header needs {len} bytes, {} present", rest.len())));
    }
    let header: Header =
        serde_json::from_slice(&rest[..len]).map_err(|e| Error::Format(format!("cache index: {e}")))?;
    let data = &rest[len..];
    let mut end_max = 0;
    let read = |what: &str, id: &str, s: &Span, end_max: &mut usize| -> Result<Tensor<f64>> {
        let end = s.offset + s.shape[0] * s.shape[1] * 8;
        if data.len() < end {
            return Err(Error::Format(format!("truncated: {what} of {id} needs bytes {}..{end}", s.offset)));
        }
        *end_max = (*end_max).max(end);
        let v = data[s.offset..end]
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
            .collect();
        Tensor::new(s.shape.to_vec(), v)
    };
    let mut records = Vec::with_capacity(header.records.len());
    for e in &header.records {
        let emotion: Emotion = e.emotion.parse().map_err(|err| Error::Format(format!("record {}: {err}", e.id)))?;
        records.push(CacheRecord {
            id: e.id.clone(),
            text: e.text.clone(),
            emotion,
            ids: e.ids.clone(),
            mel: read("mel", &e.id, &e.mel, &mut end_max)?,
            linear: read("linear", &e.id, &e.linear, &mut end_max)?,
        });
    }
    if end_max != data.len() {
        return Err(Error::Format(format!("{} bytes after the last array", data.len() as isize - end_max as isize)));
    }
    Ok(FeatureCache { audio: header.audio, vocab: header.vocab, records })
}

pub fn write_cache(path: impl AsRef<Path>, cache: &FeatureCache) -> Result<()> {
    let path = path.as_ref();
    fs::write(path, cache_bytes(cache)).map_err(|e| Error::io(path, e))
}

pub fn read_cache(path: impl AsRef<Path>) -> Result<FeatureCache> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_cache(&bytes)
}
