use super::stft::StftEngine;
use super::{AudioConfig, Waveform};
use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug)]
pub struct GriffinLimOutput<T> {
    pub waveform: Waveform<T>,
    /// `sc_k` for `k = 0..=gl_iters`, measured against the sharpened magnitude.
    pub spectral_convergence: Vec<f64>,
}

/// `||S - target||_F / ||target||_F`, defined as 0 for an all-zero target.
pub fn spectral_convergence<T: Scalar>(mag: &Tensor<T>, target: &Tensor<T>) -> f64 {
    let den = target.sq_norm().to_f64_lossy().sqrt();
    if den == 0.0 {
        return 0.0;
    }
    let num: f64 = mag.data().iter().zip(target.data()).map(|(&a, &b)| (a - b).to_f64_lossy().powi(2)).sum();
    num.sqrt() / den
}

/// Phase reconstruction from a linear magnitude spectrogram. Magnitudes are
/// raised to `gl_power` first and the phase starts at zero.
pub fn griffin_lim<T: Scalar>(mag: &Tensor<T>, cfg: &AudioConfig) -> Result<GriffinLimOutput<T>> {
    if mag.data().iter().any(|&m| m < T::zero() || !m.is_finite()) {
        return Err(Error::Contract("griffin_lim needs finite non-negative magnitudes".into()));
    }
    let engine = StftEngine::<T>::new(cfg)?;
    let power = T::of(cfg.gl_power);
    let target = mag.map(|m| m.powf(power));
    let len = engine.default_len(mag.rows());
    let mut phase = Tensor::zeros(target.shape());
    let mut samples = engine.inverse(&target, &phase, len)?;
    let mut sc = Vec::with_capacity(cfg.gl_iters + 1);
    for k in 0..=cfg.gl_iters {
        let spec = engine.forward(&samples)?;
        sc.push(spectral_convergence(&spec.magnitude, &target));
        if k == cfg.gl_iters {
            break;
        }
        phase = spec.phase;
        samples = engine.inverse(&target, &phase, len)?;
    }
    log::debug!("griffin-lim: {} iterations, final sc {:.4}", cfg.gl_iters, sc.last().copied().unwrap_or(0.0));
    Ok(GriffinLimOutput { waveform: Waveform::new(samples, cfg.sample_rate)?, spectral_convergence: sc })
}
