//! L1 objective over mel and linear frames (padding included), Adam with
//! global-norm clipping and a step-halving schedule, batch training and
//! checkpoints.

mod checkpoint;

use std::fmt;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::autodiff::{Graph, Tensor, Var};
use crate::diagnostics::{analyze, AnalyzeOptions};
use crate::error::{Error, Result};
use crate::model::{DecodeMode, DecodeOptions, Example, Tacotron, PAD_ID};
use crate::nn::ParamStore;
use crate::rng::{chacha, derive_seed};
use crate::scalar::Scalar;

pub use checkpoint::{
    checkpoint_bytes, load_checkpoint, load_checkpoint_for, parse_checkpoint, save_checkpoint, Checkpoint,
};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    /// Decoder input policy. `free` (alias `free-eval`) is evaluation only.
    pub mode: DecodeMode,
    pub lr: f64,
    /// Steps at which the learning rate is multiplied by `lr_decay`.
    pub lr_decay_steps: Vec<u64>,
    pub lr_decay: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub adam_eps: f64,
    pub grad_clip_norm: f64,
    pub batch_size: usize,
    pub max_steps: u64,
    pub seed: u64,
    pub w_mel: f64,
    pub w_lin: f64,
    pub log_interval: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            mode: DecodeMode::Semi,
            lr: 1e-3,
            lr_decay_steps: vec![1000, 3000],
            lr_decay: 0.5,
            beta1: 0.9,
            beta2: 0.999,
            adam_eps: 1e-8,
            grad_clip_norm: 1.0,
            batch_size: 4,
            max_steps: 2000,
            seed: 0,
            w_mel: 0.5,
            w_lin: 0.5,
            log_interval: 10,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if !(self.w_mel >= 0.0 && self.w_lin >= 0.0 && self.w_mel + self.w_lin > 0.0) {
            return bad(format!(
                "loss weights must be non-negative with a positive sum, got {} and {}",
                self.w_mel, self.w_lin
            ));
        }
        if !(self.lr >= 0.0) || !(self.lr_decay > 0.0) {
            return bad("lr must be non-negative and lr_decay positive".into());
        }
        if !(0.0..1.0).contains(&self.beta1) || !(0.0..1.0).contains(&self.beta2) || !(self.adam_eps > 0.0) {
            return bad("Adam needs betas in [0, 1) and a positive epsilon".into());
        }
        if !(self.grad_clip_norm > 0.0) {
            return bad("grad_clip_norm must be positive".into());
        }
        if self.batch_size == 0 || self.log_interval == 0 {
            return bad("batch_size and log_interval must be positive".into());
        }
        Ok(())
    }

    /// Learning rate for the update that follows `completed` updates.
    pub fn lr_at(&self, completed: u64) -> f64 {
        let halvings = self.lr_decay_steps.iter().filter(|&&s| completed >= s).count();
        self.lr * self.lr_decay.powi(halvings as i32)
    }
}

/// `w_mel · mean|Δmel| + w_lin · mean|Δlin|` over every frame, padding included.
pub fn compute_loss<T: Scalar>(
    g: &mut Graph<T>,
    pred_mel: Var,
    target_mel: Var,
    pred_lin: Var,
    target_lin: Var,
    w_mel: f64,
    w_lin: f64,
) -> Result<Var> {
    let mel = l1(g, pred_mel, target_mel, "mel")?;
    let lin = l1(g, pred_lin, target_lin, "linear")?;
    let mel = g.scale(mel, T::of(w_mel))?;
    let lin = g.scale(lin, T::of(w_lin))?;
    g.add(mel, lin)
}

fn l1<T: Scalar>(g: &mut Graph<T>, pred: Var, target: Var, what: &str) -> Result<Var> {
    if g.shape(pred) != g.shape(target) {
        return Err(Error::dim(
            "compute_loss",
            format!("{what} prediction {:?} vs target {:?}", g.shape(pred), g.shape(target)),
        ));
    }
    let d = g.sub(pred, target)?;
    let d = g.abs(d)?;
    g.mean(d)
}

/// Adam moments, one pair per parameter in registry order.
#[derive(Clone, Debug, PartialEq)]
pub struct OptimizerState<T> {
    pub m: Vec<Tensor<T>>,
    pub v: Vec<Tensor<T>>,
    /// Completed updates.
    pub step: u64,
}

impl<T: Scalar> OptimizerState<T> {
    pub fn new(params: &ParamStore<T>) -> Self {
        let zeros: Vec<Tensor<T>> = params.iter().map(|(_, t)| Tensor::zeros(t.shape())).collect();
        OptimizerState { m: zeros.clone(), v: zeros, step: 0 }
    }
}

/// One bias-corrected Adam update after clipping the global gradient norm.
/// Returns the norm before clipping.
pub fn adam_step<T: Scalar>(
    params: &mut ParamStore<T>,
    grads: &[Tensor<T>],
    opt: &mut OptimizerState<T>,
    lr: f64,
    cfg: &TrainConfig,
) -> Result<f64> {
    if grads.len() != params.len() || opt.m.len() != params.len() {
        return Err(Error::dim("adam_step", format!("{} gradients for {} parameters", grads.len(), params.len())));
    }
    let mut sq = 0.0;
    for (id, gt) in params.ids().zip(grads) {
        if gt.shape() != params.get(id).shape() {
            return Err(Error::dim("adam_step", format!("gradient of {} has shape {:?}", params.name(id), gt.shape())));
        }
        if !gt.all_finite() {
            return Err(Error::Numeric(format!(
                "non-finite gradient for parameter {} at step {}",
                params.name(id),
                opt.step + 1
            )));
        }
        sq += gt.data().iter().map(|v| v.to_f64_lossy().powi(2)).sum::<f64>();
    }
    let norm = sq.sqrt();
    let clip = if norm > cfg.grad_clip_norm { cfg.grad_clip_norm / norm } else { 1.0 };
    opt.step += 1;
    let t = opt.step as i32;
    let (b1, b2) = (cfg.beta1, cfg.beta2);
    let (c1, c2) = (1.0 - b1.powi(t), 1.0 - b2.powi(t));
    let ids: Vec<_> = params.ids().collect();
    for (k, id) in ids.into_iter().enumerate() {
        let p = params.get_mut(id).data_mut();
        let (m, v) = (opt.m[k].data_mut(), opt.v[k].data_mut());
        for (i, gv) in grads[k].data().iter().enumerate() {
            let gv = gv.to_f64_lossy() * clip;
            let mi = b1 * m[i].to_f64_lossy() + (1.0 - b1) * gv;
            let vi = b2 * v[i].to_f64_lossy() + (1.0 - b2) * gv * gv;
            m[i] = T::of(mi);
            v[i] = T::of(vi);
            let update = lr * (mi / c1) / ((vi / c2).sqrt() + cfg.adam_eps);
            p[i] = T::of(p[i].to_f64_lossy() - update);
        }
    }
    Ok(norm)
}

/// Pad texts with the padding id and spectrograms with normalized silence
/// (zeros) to the batch maximum, frames rounded up to a multiple of `r`.
pub fn collate<T: Scalar>(items: &[&Example<T>], r: usize) -> Result<Vec<Example<T>>> {
    if items.is_empty() {
        return Err(Error::Contract("empty batch".into()));
    }
    let text_len = items.iter().map(|e| e.ids.len()).max().unwrap_or(0);
    let frames = items.iter().map(|e| e.mel.rows()).max().unwrap_or(0).div_ceil(r).max(1) * r;
    items
        .iter()
        .map(|e| {
            let mut ids = e.ids.clone();
            ids.resize(text_len, PAD_ID);
            Ok(Example {
                ids,
                emotion: e.emotion,
                mel: pad_rows(&e.mel, frames)?,
                linear: pad_rows(&e.linear, frames)?,
            })
        })
        .collect()
}

fn pad_rows<T: Scalar>(t: &Tensor<T>, rows: usize) -> Result<Tensor<T>> {
    let mut data = t.data().to_vec();
    data.resize(rows * t.cols(), T::zero());
    Tensor::new(vec![rows, t.cols()], data)
}

#[derive(Clone, Debug)]
pub struct StepOutput<T> {
    /// Mean weighted loss over the batch.
    pub loss: f64,
    pub mel_loss: f64,
    pub lin_loss: f64,
    pub lr: f64,
    pub grad_norm: f64,
    /// Alignment of the first batch item.
    pub alignment: Tensor<T>,
}

struct ItemPass<T> {
    loss: f64,
    mel_loss: f64,
    lin_loss: f64,
    alignment: Tensor<T>,
    grads: Option<Vec<Tensor<T>>>,
}

fn item_pass<T: Scalar>(
    model: &Tacotron<T>,
    ex: &Example<T>,
    opts: &DecodeOptions,
    cfg: &TrainConfig,
    with_grads: bool,
) -> Result<ItemPass<T>> {
    let mut g = Graph::new();
    let p = if with_grads { model.params().bind(&mut g) } else { model.params().bind_frozen(&mut g) };
    let out = model.forward(&mut g, &p, ex, opts)?;
    let tm = g.constant(ex.mel.clone());
    let tl = g.constant(ex.linear.clone());
    let mel_loss = l1(&mut g, out.mel, tm, "mel")?;
    let lin_loss = l1(&mut g, out.linear, tl, "linear")?;
    let (ml, ll) = (g.value(mel_loss).item().to_f64_lossy(), g.value(lin_loss).item().to_f64_lossy());
    let loss = compute_loss(&mut g, out.mel, tm, out.linear, tl, cfg.w_mel, cfg.w_lin)?;
    let lv = g.value(loss).item().to_f64_lossy();
    if !lv.is_finite() {
        return Err(Error::Numeric(format!("loss is {lv}")));
    }
    let grads = if with_grads {
        g.backward(loss)?;
        Some(
            p.vars()
                .iter()
                .zip(model.params().iter())
                .map(|(&v, (_, t))| g.grad(v).cloned().unwrap_or_else(|| Tensor::zeros(t.shape())))
                .collect(),
        )
    } else {
        None
    };
    Ok(ItemPass { loss: lv, mel_loss: ml, lin_loss: ll, alignment: out.decoded.alignment, grads })
}

/// Forward every item in `cfg.mode` with dropout and noise on, average the
/// gradients and apply one Adam update.
pub fn train_step<T: Scalar>(
    model: &mut Tacotron<T>,
    opt: &mut OptimizerState<T>,
    batch: &[&Example<T>],
    cfg: &TrainConfig,
) -> Result<StepOutput<T>> {
    if cfg.mode == DecodeMode::Free {
        return Err(Error::Config("free decoding is evaluation only; train with teacher or semi".into()));
    }
    let items = collate(batch, model.config().r)?;
    let step_seed = derive_seed(cfg.seed, opt.step);
    let n = items.len() as f64;
    let mut total: Option<Vec<Tensor<T>>> = None;
    let (mut loss, mut mel_loss, mut lin_loss) = (0.0, 0.0, 0.0);
    let mut alignment = None;
    for (i, ex) in items.iter().enumerate() {
        let opts = DecodeOptions::training(cfg.mode, derive_seed(step_seed, i as u64));
        let pass = item_pass(model, ex, &opts, cfg, true)?;
        loss += pass.loss / n;
        mel_loss += pass.mel_loss / n;
        lin_loss += pass.lin_loss / n;
        let grads = pass.grads.expect("gradients requested");
        total = Some(match total {
            None => grads,
            Some(mut acc) => {
                for (a, g) in acc.iter_mut().zip(&grads) {
                    a.add_assign(g);
                }
                acc
            }
        });
        alignment.get_or_insert(pass.alignment);
    }
    let scale = T::of(1.0 / n);
    let grads: Vec<Tensor<T>> = total.unwrap_or_default().iter().map(|t| t.map(|v| v * scale)).collect();
    let lr = cfg.lr_at(opt.step);
    let grad_norm = adam_step(model.params_mut(), &grads, opt, lr, cfg)?;
    Ok(StepOutput { loss, mel_loss, lin_loss, lr, grad_norm, alignment: alignment.expect("non-empty batch") })
}

#[derive(Clone, Debug)]
pub struct Evaluation<T> {
    pub loss: f64,
    pub mel_loss: f64,
    pub lin_loss: f64,
    pub alignments: Vec<Tensor<T>>,
}

/// Deterministic pass (no dropout, no noise, expected alignments) without updates.
pub fn evaluate<T: Scalar>(
    model: &Tacotron<T>,
    batch: &[&Example<T>],
    mode: DecodeMode,
    cfg: &TrainConfig,
) -> Result<Evaluation<T>> {
    let items = collate(batch, model.config().r)?;
    let n = items.len() as f64;
    let mut ev = Evaluation { loss: 0.0, mel_loss: 0.0, lin_loss: 0.0, alignments: Vec::new() };
    for ex in &items {
        let pass = item_pass(model, ex, &DecodeOptions::analysis(mode), cfg, false)?;
        ev.loss += pass.loss / n;
        ev.mel_loss += pass.mel_loss / n;
        ev.lin_loss += pass.lin_loss / n;
        ev.alignments.push(pass.alignment);
    }
    Ok(ev)
}

/// One line of the training log.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LogRecord {
    pub step: u64,
    pub loss: f64,
    pub lr: f64,
    pub sharpness: f64,
    pub diagonality: f64,
}

impl fmt::Display for LogRecord {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{},{:.8},{},{:.6},{:.6}", self.step, self.loss, self.lr, self.sharpness, self.diagonality)
    }
}

/// Model, optimizer and data for a training run. Batches are a pure function
/// of the step count, so a resumed run continues the same sequence.
pub struct Trainer<T: Scalar> {
    pub model: Tacotron<T>,
    pub opt: OptimizerState<T>,
    pub cfg: TrainConfig,
    data: Vec<Example<T>>,
}

impl<T: Scalar> Trainer<T> {
    pub fn new(model: Tacotron<T>, cfg: TrainConfig, data: Vec<Example<T>>) -> Result<Self> {
        let opt = OptimizerState::new(model.params());
        Self::resume(model, opt, cfg, data)
    }

    pub fn resume(model: Tacotron<T>, opt: OptimizerState<T>, cfg: TrainConfig, data: Vec<Example<T>>) -> Result<Self> {
        cfg.validate()?;
        if data.is_empty() {
            return Err(Error::Data("no training examples".into()));
        }
        Ok(Trainer { model, opt, cfg, data })
    }

    pub fn data(&self) -> &[Example<T>] {
        &self.data
    }

    /// Indices of the batch for the update after `step` completed ones:
    /// consecutive slices of per-epoch shuffles.
    pub fn batch_indices(&self, step: u64) -> Vec<usize> {
        let n = self.data.len();
        let b = self.cfg.batch_size.min(n);
        let start = step as usize * b;
        let mut epoch_cache: Option<(usize, Vec<usize>)> = None;
        (start..start + b)
            .map(|pos| {
                let epoch = pos / n;
                if epoch_cache.as_ref().map(|(e, _)| *e) != Some(epoch) {
                    let mut order: Vec<usize> = (0..n).collect();
                    order.shuffle(&mut chacha(derive_seed(self.cfg.seed ^ 0x0ba7_c4e5, epoch as u64)));
                    epoch_cache = Some((epoch, order));
                }
                epoch_cache.as_ref().map(|(_, o)| o[pos % n]).unwrap_or(0)
            })
            .collect()
    }

    pub fn step(&mut self) -> Result<StepOutput<T>> {
        let idx = self.batch_indices(self.opt.step);
        let batch: Vec<&Example<T>> = idx.iter().map(|&i| &self.data[i]).collect();
        train_step(&mut self.model, &mut self.opt, &batch, &self.cfg)
    }

    /// Train until `opt.step == until`, reporting every `log_interval` steps
    /// and at the last one.
    pub fn run(&mut self, until: u64, mut on_log: impl FnMut(&LogRecord)) -> Result<Vec<LogRecord>> {
        let mut log = Vec::new();
        while self.opt.step < until {
            let out = self.step()?;
            let step = self.opt.step;
            if step % self.cfg.log_interval == 0 || step == until {
                let report = analyze(&out.alignment, &AnalyzeOptions::default())?;
                let rec = LogRecord {
                    step,
                    loss: out.loss,
                    lr: out.lr,
                    sharpness: report.sharpness,
                    diagonality: report.diagonality,
                };
                on_log(&rec);
                log.push(rec);
            }
        }
        Ok(log)
    }
}
