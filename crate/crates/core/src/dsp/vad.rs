use super::Waveform;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Energy-based trimming parameters.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct VadParams {
    pub frame_ms: f64,
    /// Activity threshold relative to the loudest frame's RMS, in dB.
    pub threshold_db: f64,
    pub pad_frames: usize,
}

impl Default for VadParams {
    fn default() -> Self {
        VadParams { frame_ms: 30.0, threshold_db: -40.0, pad_frames: 2 }
    }
}

/// Cut leading and trailing silence on a fixed frame grid anchored at sample 0.
/// Frames whose RMS exceeds `peak_rms_db + threshold_db` are active; the result
/// spans the first to last active frame plus `pad_frames` on each side.
pub fn vad_trim<T: Scalar>(w: &Waveform<T>, params: VadParams) -> Result<Waveform<T>> {
    if params.frame_ms <= 0.0 {
        return Err(Error::Contract(format!("frame_ms {} must be positive", params.frame_ms)));
    }
    let frame = ((params.frame_ms / 1000.0 * w.sample_rate as f64).round() as usize).max(1);
    let rms_db: Vec<f64> = w
        .samples
        .chunks(frame)
        .map(|c| {
            let ms = c.iter().map(|&s| s.to_f64_lossy().powi(2)).sum::<f64>() / c.len() as f64;
            if ms > 0.0 {
                10.0 * ms.log10()
            } else {
                f64::NEG_INFINITY
            }
        })
        .collect();
    let peak = rms_db.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !peak.is_finite() {
        return Err(Error::EmptyAudio);
    }
    let thresh = peak + params.threshold_db;
    let first = rms_db.iter().position(|&d| d > thresh).ok_or(Error::EmptyAudio)?;
    let last = rms_db.iter().rposition(|&d| d > thresh).ok_or(Error::EmptyAudio)?;
    let start = first.saturating_sub(params.pad_frames) * frame;
    let end = ((last + 1 + params.pad_frames) * frame).min(w.len());
    Waveform::new(w.samples[start..end].to_vec(), w.sample_rate)
}
