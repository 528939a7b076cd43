use std::sync::Arc;

use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};

use super::{AudioConfig, Waveform};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Magnitude and phase, each `frames x (n_fft/2 + 1)`.
#[derive(Clone, Debug)]
pub struct Stft<T> {
    pub magnitude: Tensor<T>,
    pub phase: Tensor<T>,
}

/// Planned transforms and analysis window for one configuration.
///
/// Frames are Hann-windowed slices of the signal after reflect padding by
/// `win_length / 2` on both ends. The inverse is the least-squares overlap-add
/// estimate; padded positions are folded back onto the samples they mirror, so
/// `istft(stft(x)) == x` up to rounding.
pub struct StftEngine<T: Scalar> {
    cfg: AudioConfig,
    window: Vec<T>,
    fwd: Arc<dyn Fft<T>>,
    inv: Arc<dyn Fft<T>>,
}

impl<T: Scalar> StftEngine<T> {
    pub fn new(cfg: &AudioConfig) -> Result<Self> {
        cfg.validate()?;
        let win = cfg.win_length;
        let window =
            (0..win).map(|n| T::of(0.5 - 0.5 * (2.0 * std::f64::consts::PI * n as f64 / win as f64).cos())).collect();
        let mut planner = FftPlanner::new();
        Ok(StftEngine {
            cfg: cfg.clone(),
            window,
            fwd: planner.plan_fft_forward(cfg.n_fft),
            inv: planner.plan_fft_inverse(cfg.n_fft),
        })
    }

    fn pad(&self) -> usize {
        self.cfg.win_length / 2
    }

    /// Number of frames produced for a signal of `len` samples.
    pub fn frame_count(&self, len: usize) -> usize {
        1 + (len + 2 * self.pad() - self.cfg.win_length) / self.cfg.hop_length
    }

    /// Output length of [`StftEngine::inverse`] for `frames` frames.
    pub fn default_len(&self, frames: usize) -> usize {
        (frames - 1) * self.cfg.hop_length + self.cfg.win_length - 2 * self.pad()
    }

    pub fn forward(&self, samples: &[T]) -> Result<Stft<T>> {
        let cfg = &self.cfg;
        if samples.len() < cfg.win_length {
            return Err(Error::Contract(format!(
                "stft needs at least win_length = {} samples, got {}",
                cfg.win_length,
                samples.len()
            )));
        }
        let pad = self.pad();
        let len = samples.len();
        let padded: Vec<T> = (0..len + 2 * pad).map(|i| samples[reflect_index(i, pad, len)]).collect();
        let frames = self.frame_count(len);
        let bins = cfg.n_bins();
        let mut mag = Vec::with_capacity(frames * bins);
        let mut phase = Vec::with_capacity(frames * bins);
        let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.n_fft];
        for f in 0..frames {
            let start = f * cfg.hop_length;
            for (i, b) in buf.iter_mut().enumerate() {
                *b = if i < cfg.win_length {
                    Complex::new(padded[start + i] * self.window[i], T::zero())
                } else {
                    Complex::new(T::zero(), T::zero())
                };
            }
            self.fwd.process(&mut buf);
            for c in &buf[..bins] {
                mag.push(c.norm());
                phase.push(c.im.atan2(c.re));
            }
        }
        Ok(Stft { magnitude: Tensor::new(vec![frames, bins], mag)?, phase: Tensor::new(vec![frames, bins], phase)? })
    }

    /// Least-squares inverse producing exactly `len` samples.
    pub fn inverse(&self, mag: &Tensor<T>, phase: &Tensor<T>, len: usize) -> Result<Vec<T>> {
        let cfg = &self.cfg;
        let bins = cfg.n_bins();
        if mag.shape() != phase.shape() || mag.cols() != bins || mag.shape().len() != 2 {
            return Err(Error::dim(
                "istft",
                format!("magnitude {:?}, phase {:?}, expected [frames, {bins}]", mag.shape(), phase.shape()),
            ));
        }
        let frames = mag.rows();
        let pad = self.pad();
        if len <= pad {
            return Err(Error::Contract(format!("istft output length {len} must exceed {pad}")));
        }
        let covered = (frames - 1) * cfg.hop_length + cfg.win_length;
        let mut acc = vec![T::zero(); covered];
        let mut wsum = vec![T::zero(); covered];
        let mut buf = vec![Complex::new(T::zero(), T::zero()); cfg.n_fft];
        let scale = T::one() / T::of(cfg.n_fft as f64);
        for f in 0..frames {
            let m = mag.row_slice(f);
            let p = phase.row_slice(f);
            for k in 0..bins {
                buf[k] = Complex::from_polar(m[k], p[k]);
            }
            // Hermitian completion; DC and Nyquist must be real for a real signal.
            buf[0].im = T::zero();
            if cfg.n_fft % 2 == 0 {
                buf[bins - 1].im = T::zero();
            }
            for k in bins..cfg.n_fft {
                buf[k] = buf[cfg.n_fft - k].conj();
            }
            self.inv.process(&mut buf);
            let start = f * cfg.hop_length;
            for i in 0..cfg.win_length {
                let w = self.window[i];
                acc[start + i] += buf[i].re * scale * w;
                wsum[start + i] += w * w;
            }
        }
        let mut num = vec![T::zero(); len];
        let mut den = vec![T::zero(); len];
        for i in 0..covered.min(len + 2 * pad) {
            let o = reflect_index(i, pad, len);
            num[o] += acc[i];
            den[o] += wsum[i];
        }
        let tiny = T::of(1e-10);
        Ok(num.into_iter().zip(den).map(|(n, d)| if d > tiny { n / d } else { T::zero() }).collect())
    }
}

/// Map a position in the reflect-padded signal back to the original sample.
fn reflect_index(i: usize, pad: usize, len: usize) -> usize {
    if i < pad {
        pad - i
    } else if i < pad + len {
        i - pad
    } else {
        let k = i - pad - len;
        len - 2 - k
    }
}

pub fn stft<T: Scalar>(w: &Waveform<T>, cfg: &AudioConfig) -> Result<Stft<T>> {
    StftEngine::new(cfg)?.forward(&w.samples)
}

/// Inverse STFT with the default output length `(frames - 1) * hop_length`.
pub fn istft<T: Scalar>(mag: &Tensor<T>, phase: &Tensor<T>, cfg: &AudioConfig) -> Result<Waveform<T>> {
    let engine = StftEngine::new(cfg)?;
    let len = engine.default_len(mag.rows());
    istft_with(&engine, mag, phase, len, cfg)
}

/// Inverse STFT producing exactly `len` samples.
pub fn istft_len<T: Scalar>(mag: &Tensor<T>, phase: &Tensor<T>, cfg: &AudioConfig, len: usize) -> Result<Waveform<T>> {
    let engine = StftEngine::new(cfg)?;
    istft_with(&engine, mag, phase, len, cfg)
}

fn istft_with<T: Scalar>(
    engine: &StftEngine<T>,
    mag: &Tensor<T>,
    phase: &Tensor<T>,
    len: usize,
    cfg: &AudioConfig,
) -> Result<Waveform<T>> {
    Waveform::new(engine.inverse(mag, phase, len)?, cfg.sample_rate)
}
