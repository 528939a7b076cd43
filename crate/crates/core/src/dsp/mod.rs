//! Audio front and back end: pre-emphasis, STFT, mel analysis, dB
//! normalization, silence trimming, Griffin-Lim and WAV I/O.

mod griffin_lim;
mod mel;
mod stft;
mod vad;
mod wav;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub use griffin_lim::{griffin_lim, spectral_convergence, GriffinLimOutput};
pub use mel::{amp_to_db_norm, db_denorm, MelFilterbank};
pub use stft::{istft, istft_len, stft, Stft, StftEngine};
pub use vad::{vad_trim, VadParams};
pub use wav::{wav_read, wav_read_bytes, wav_write, wav_write_bytes};

/// Analysis and reconstruction parameters.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AudioConfig {
    pub sample_rate: u32,
    pub win_length: usize,
    pub hop_length: usize,
    pub n_fft: usize,
    pub n_mels: usize,
    pub preemphasis: f64,
    pub ref_level_db: f64,
    pub min_level_db: f64,
    pub gl_power: f64,
    pub gl_iters: usize,
}

impl Default for AudioConfig {
    fn default() -> Self {
        AudioConfig {
            sample_rate: 16_000,
            win_length: 800,
            hop_length: 200,
            n_fft: 1024,
            n_mels: 80,
            preemphasis: 0.97,
            ref_level_db: 20.0,
            min_level_db: -100.0,
            gl_power: 1.2,
            gl_iters: 30,
        }
    }
}

impl AudioConfig {
    pub fn n_bins(&self) -> usize {
        self.n_fft / 2 + 1
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        if self.hop_length == 0 || self.hop_length > self.win_length || self.win_length > self.n_fft {
            return bad(format!(
                "need 0 < hop_length ({}) <= win_length ({}) <= n_fft ({})",
                self.hop_length, self.win_length, self.n_fft
            ));
        }
        if self.n_mels == 0 || self.n_mels >= self.n_bins() {
            return bad(format!("n_mels ({}) must be in 1..{}", self.n_mels, self.n_bins()));
        }
        if !(0.0..1.0).contains(&self.preemphasis) {
            return bad(format!("preemphasis {} outside [0, 1)", self.preemphasis));
        }
        if self.min_level_db >= 0.0 {
            return bad(format!("min_level_db {} must be negative", self.min_level_db));
        }
        if self.gl_power <= 0.0 {
            return bad(format!("gl_power {} must be positive", self.gl_power));
        }
        Ok(())
    }

    /// Seconds covered by `frames` analysis frames.
    pub fn frames_to_seconds(&self, frames: usize) -> f64 {
        frames as f64 * self.hop_length as f64 / self.sample_rate as f64
    }
}

/// Mono samples at a fixed rate.
#[derive(Clone, Debug, PartialEq)]
pub struct Waveform<T> {
    pub samples: Vec<T>,
    pub sample_rate: u32,
}

impl<T: Scalar> Waveform<T> {
    pub fn new(samples: Vec<T>, sample_rate: u32) -> Result<Self> {
        if samples.is_empty() {
            return Err(Error::Contract("waveform must be non-empty".into()));
        }
        Ok(Waveform { samples, sample_rate })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn duration_secs(&self) -> f64 {
        self.samples.len() as f64 / self.sample_rate as f64
    }

    pub fn peak(&self) -> T {
        self.samples.iter().fold(T::zero(), |m, &s| m.max(s.abs()))
    }

    /// Scale down so that the peak is at most one.
    pub fn normalized(mut self) -> Self {
        let p = self.peak();
        if p > T::one() {
            for s in &mut self.samples {
                *s /= p;
            }
        }
        self
    }
}

/// `out[0] = w[0]`, `out[t] = w[t] - coeff * w[t-1]`.
pub fn preemphasize<T: Scalar>(w: &Waveform<T>, coeff: f64) -> Result<Waveform<T>> {
    check_coeff(w, coeff)?;
    let c = T::of(coeff);
    let mut out = Vec::with_capacity(w.len());
    out.push(w.samples[0]);
    out.extend(w.samples.windows(2).map(|p| p[1] - c * p[0]));
    Waveform::new(out, w.sample_rate)
}

/// Exact inverse of [`preemphasize`] (running sum).
pub fn deemphasize<T: Scalar>(w: &Waveform<T>, coeff: f64) -> Result<Waveform<T>> {
    check_coeff(w, coeff)?;
    let c = T::of(coeff);
    let mut out = Vec::with_capacity(w.len());
    let mut prev = T::zero();
    for (i, &s) in w.samples.iter().enumerate() {
        let v = if i == 0 { s } else { s + c * prev };
        out.push(v);
        prev = v;
    }
    Waveform::new(out, w.sample_rate)
}

fn check_coeff<T>(w: &Waveform<T>, coeff: f64) -> Result<()> {
    if w.samples.is_empty() {
        return Err(Error::Contract("pre-emphasis of an empty waveform".into()));
    }
    if !(0.0..1.0).contains(&coeff) {
        return Err(Error::Contract(format!("pre-emphasis coefficient {coeff} outside [0, 1)")));
    }
    Ok(())
}
