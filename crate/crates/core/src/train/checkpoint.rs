//! `ETTS1\n`, a decimal header length and newline, a JSON header (configs,
//! step, registry of name/shape/byte offset), then little-endian f64 arrays:
//! parameters, Adam first moments, Adam second moments.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::{OptimizerState, TrainConfig};
use crate::autodiff::Tensor;
use crate::dsp::AudioConfig;
use crate::error::{Error, Result};
use crate::model::{ModelConfig, Tacotron};
use crate::nn::ParamStore;
use crate::scalar::Scalar;

const MAGIC: &[u8] = b"ETTS1\n";

/// Everything needed to resume training or synthesize.
#[derive(Clone, Debug)]
pub struct Checkpoint<T: Scalar> {
    pub model: Tacotron<T>,
    pub opt: OptimizerState<T>,
    pub audio: AudioConfig,
    pub train: TrainConfig,
}

impl<T: Scalar> Checkpoint<T> {
    pub fn step(&self) -> u64 {
        self.opt.step
    }
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Header {
    step: u64,
    model: serde_json::Value,
    audio: AudioConfig,
    train: TrainConfig,
    registry: Vec<Entry>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct Entry {
    name: String,
    shape: Vec<usize>,
    offset: usize,
}

fn sections<'a, T: Scalar>(ck: &'a Checkpoint<T>) -> Vec<(String, &'a Tensor<T>)> {
    let params = ck.model.params();
    let mut out: Vec<(String, &Tensor<T>)> = params.iter().map(|(n, t)| (n.to_string(), t)).collect();
    out.extend(params.iter().zip(&ck.opt.m).map(|((n, _), t)| (format!("adam.m/{n}"), t)));
    out.extend(params.iter().zip(&ck.opt.v).map(|((n, _), t)| (format!("adam.v/{n}"), t)));
    out
}

pub fn checkpoint_bytes<T: Scalar>(ck: &Checkpoint<T>) -> Result<Vec<u8>> {
    let arrays = sections(ck);
    let mut offset = 0;
    let registry = arrays
        .iter()
        .map(|(name, t)| {
            let e = Entry { name: name.clone(), shape: t.shape().to_vec(), offset };
            offset += t.numel() * 8;
            e
        })
        .collect();
    let header = Header {
        step: ck.opt.step,
        model: serde_json::to_value(ck.model.config()).map_err(|e| Error::Format(e.to_string()))?,
        audio: ck.audio.clone(),
        train: ck.train.clone(),
        registry,
    };
    let json = serde_json::to_vec(&header).map_err(|e| Error::Format(e.to_string()))?;
    let mut out = Vec::with_capacity(MAGIC.len() + json.len() + 16 + offset);
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(format!("{}\n", json.len()).as_bytes());
    out.extend_from_slice(&json);
    for (_, t) in &arrays {
        for v in t.data() {
            out.extend_from_slice(&v.to_f64_lossy().to_le_bytes());
        }
    }
    Ok(out)
}

/// Write via a sibling temporary file so a crash never leaves a torn checkpoint.
pub fn save_checkpoint<T: Scalar>(path: impl AsRef<Path>, ck: &Checkpoint<T>) -> Result<()> {
    let path = path.as_ref();
    let bytes = checkpoint_bytes(ck)?;
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes).map_err(|e| Error::io(&tmp, e))?;
    fs::rename(&tmp, path).map_err(|e| Error::io(path, e))
}

pub fn load_checkpoint<T: Scalar>(path: impl AsRef<Path>) -> Result<Checkpoint<T>> {
    let path = path.as_ref();
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_checkpoint(&bytes)
}

/// Load and require the stored model configuration to equal `expected`,
/// naming the first field that differs.
pub fn load_checkpoint_for<T: Scalar>(path: impl AsRef<Path>, expected: &ModelConfig) -> Result<Checkpoint<T>> {
    let ck = load_checkpoint::<T>(path)?;
    let want = serde_json::to_value(expected).map_err(|e| Error::Format(e.to_string()))?;
    let got = serde_json::to_value(ck.model.config()).map_err(|e| Error::Format(e.to_string()))?;
    if let (Some(w), Some(g)) = (want.as_object(), got.as_object()) {
        for (key, wv) in w {
            let gv = g.get(key).unwrap_or(&serde_json::Value::Null);
            if gv != wv {
                return Err(Error::Format(format!("checkpoint config field `{key}` is {gv}, expected {wv}")));
            }
        }
    }
    Ok(ck)
}

pub fn parse_checkpoint<T: Scalar>(bytes: &[u8]) -> Result<Checkpoint<T>> {
    let rest = bytes.strip_prefix(MAGIC).ok_or_else(|| Error::Format("bad magic: not an ETTS1 checkpoint".into()))?;
    let nl = rest
        .iter()
        .position(|&b| b == b'\n')
        .ok_or_else(|| Error::Format("truncated: missing header length".into()))?;
    let header_len: usize = std::str::from_utf8(&rest[..nl])
        .ok()
        .and_then(|s| s.parse().ok())
        .ok_or_else(|| Error::Format("header length is not a decimal number".into()))?;
    let rest = &rest[nl + 1..];
    if rest.len() < header_len {
        return Err(Error::Format(format!("truncated: header needs {header_len} bytes, {} present", rest.len())));
    }
    let header: Header =
        serde_json::from_slice(&rest[..header_len]).map_err(|e| Error::Format(format!("header: {e}")))?;
    let data = &rest[header_len..];
    let cfg: ModelConfig =
        serde_json::from_value(header.model).map_err(|e| Error::Format(format!("model config: {e}")))?;
    cfg.validate().map_err(|e| Error::Format(format!("model config: {e}")))?;

    let template = Tacotron::<T>::new(&cfg, 0)?;
    let names: Vec<String> = template.params().iter().map(|(n, _)| n.to_string()).collect();
    let shapes: Vec<Vec<usize>> = template.params().iter().map(|(_, t)| t.shape().to_vec()).collect();
    let n = names.len();
    if header.registry.len() != 3 * n {
        return Err(Error::Format(format!(
            "registry lists {} arrays, configuration implies {}",
            header.registry.len(),
            3 * n
        )));
    }
    let mut params = ParamStore::new();
    let (mut m, mut v) = (Vec::with_capacity(n), Vec::with_capacity(n));
    let mut expected_offset = 0;
    for (k, entry) in header.registry.iter().enumerate() {
        let base = &names[k % n];
        let want_name = match k / n {
            0 => base.clone(),
            1 => format!("adam.m/{base}"),
            _ => format!("adam.v/{base}"),
        };
        if entry.name != want_name {
            return Err(Error::Format(format!("registry entry {k} is {:?}, expected {want_name:?}", entry.name)));
        }
        let want_shape = &shapes[k % n];
        if &entry.shape != want_shape {
            return Err(Error::Format(format!("{} has shape {:?}, expected {want_shape:?}", entry.name, entry.shape)));
        }
        if entry.offset != expected_offset {
            return Err(Error::Format(format!(
                "{} starts at byte {}, expected {expected_offset}",
                entry.name, entry.offset
            )));
        }
        let numel: usize = entry.shape.iter().product();
        let end = entry.offset + numel * 8;
        if data.len() < end {
            return Err(Error::Format(format!(
                "truncated: {} needs bytes {}..{end}, file has {}",
                entry.name,
                entry.offset,
                data.len()
            )));
        }
        let values = data[entry.offset..end]
            .chunks_exact(8)
            .map(|c| T::of(f64::from_le_bytes(c.try_into().expect("8-byte chunk"))))
            .collect();
        let t = Tensor::new(entry.shape.clone(), values)?;
        match k / n {
            0 => {
                params.add(entry.name.clone(), t)?;
            }
            1 => m.push(t),
            _ => v.push(t),
        }
        expected_offset = end;
    }
    if data.len() != expected_offset {
        return Err(Error::Format(format!("{} trailing bytes after the last array", data.len() - expected_offset)));
    }
    let model = Tacotron::from_params(&cfg, params)?;
    Ok(Checkpoint { model, opt: OptimizerState { m, v, step: header.step }, audio: header.audio, train: header.train })
}
