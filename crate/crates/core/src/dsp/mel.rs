use super::AudioConfig;
use crate::autodiff::kernels::matmul_bt_acc;
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Triangular filters on the HTK mel scale, unit peak, edges evenly spaced in
/// mel between 0 Hz and Nyquist.
#[derive(Clone, Debug)]
pub struct MelFilterbank<T> {
    /// `n_mels x n_bins`
    pub weights: Tensor<T>,
    /// Center frequency of each filter in Hz.
    pub centers_hz: Vec<f64>,
}

impl<T: Scalar> MelFilterbank<T> {
    pub fn new(cfg: &AudioConfig) -> Result<Self> {
        cfg.validate()?;
        let bins = cfg.n_bins();
        let nyquist = cfg.sample_rate as f64 / 2.0;
        let top = hz_to_mel(nyquist);
        let edges: Vec<f64> =
            (0..cfg.n_mels + 2).map(|i| mel_to_hz(top * i as f64 / (cfg.n_mels + 1) as f64)).collect();
        let bin_hz = |k: usize| k as f64 * cfg.sample_rate as f64 / cfg.n_fft as f64;
        let mut w = vec![T::zero(); cfg.n_mels * bins];
        for m in 0..cfg.n_mels {
            let (lo, mid, hi) = (edges[m], edges[m + 1], edges[m + 2]);
            let mut any = false;
            for k in 0..bins {
                let f = bin_hz(k);
                let v = if f > lo && f <= mid {
                    (f - lo) / (mid - lo)
                } else if f > mid && f < hi {
                    (hi - f) / (hi - mid)
                } else {
                    0.0
                };
                if v > 0.0 {
                    any = true;
                }
                w[m * bins + k] = T::of(v);
            }
            if !any {
                return Err(Error::Config(format!(
                    "n_mels = {} is too large for {} frequency bins: filter {m} ({lo:.1}-{hi:.1} Hz) covers no bin",
                    cfg.n_mels, bins
                )));
            }
        }
        Ok(MelFilterbank {
            weights: Tensor::new(vec![cfg.n_mels, bins], w)?,
            centers_hz: edges[1..=cfg.n_mels].to_vec(),
        })
    }

    /// `[frames, bins] -> [frames, n_mels]`
    pub fn apply(&self, mag: &Tensor<T>) -> Result<Tensor<T>> {
        let (n_mels, bins) = (self.weights.rows(), self.weights.cols());
        if mag.cols() != bins {
            return Err(Error::dim("mel_filterbank", format!("spectrum has {} bins, bank expects {bins}", mag.cols())));
        }
        let frames = mag.rows();
        let mut out = vec![T::zero(); frames * n_mels];
        matmul_bt_acc(mag.data(), self.weights.data(), &mut out, frames, n_mels, bins);
        Tensor::new(vec![frames, n_mels], out)
    }

    /// Bin index with the largest weight in each filter.
    pub fn peak_bins(&self) -> Vec<usize> {
        (0..self.weights.rows())
            .map(|m| {
                let row = self.weights.row_slice(m);
                (0..row.len()).fold(0, |best, k| if row[k] > row[best] { k } else { best })
            })
            .collect()
    }
}

/// `clip((20 log10(max(1e-5, m)) - ref - min) / -min, 0, 1)`
pub fn amp_to_db_norm<T: Scalar>(mag: &Tensor<T>, cfg: &AudioConfig) -> Tensor<T> {
    let (r, min) = (cfg.ref_level_db, cfg.min_level_db);
    mag.map(|m| {
        let db = 20.0 * m.to_f64_lossy().max(1e-5).log10() - r;
        T::of(((db - min) / -min).clamp(0.0, 1.0))
    })
}

/// Inverse of [`amp_to_db_norm`] on its unclipped range.
pub fn db_denorm<T: Scalar>(values: &Tensor<T>, cfg: &AudioConfig) -> Tensor<T> {
    let (r, min) = (cfg.ref_level_db, cfg.min_level_db);
    values.map(|v| {
        let db = v.to_f64_lossy() * -min + min + r;
        T::of(10f64.powf(db / 20.0))
    })
}
