use rand::Rng;
use serde::{Deserialize, Serialize};

use super::params::{glorot, Bound, ParamId, ParamStore};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::rng::derive_seed;
use crate::scalar::Scalar;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    None,
    Relu,
    Tanh,
    Sigmoid,
}

impl Activation {
    pub fn apply<T: Scalar>(self, g: &mut Graph<T>, x: Var) -> Result<Var> {
        match self {
            Activation::None => Ok(x),
            Activation::Relu => g.relu(x),
            Activation::Tanh => g.tanh(x),
            Activation::Sigmoid => g.sigmoid(x),
        }
    }
}

/// `act(x W + b)` on row vectors, `W: [in, out]`.
#[derive(Clone, Debug)]
pub struct Dense {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub in_dim: usize,
    pub out_dim: usize,
}

impl Dense {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::Config(format!("{name}: dense dims must be positive, got {in_dim}x{out_dim}")));
        }
        let weight = store.add(format!("{name}.weight"), glorot(&[in_dim, out_dim], in_dim, out_dim, rng))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_dim]))?;
        Ok(Dense { weight, bias, activation, in_dim, out_dim })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.in_dim {
            return Err(Error::dim("dense", format!("input {:?}, layer expects [_, {}]", shape, self.in_dim)));
        }
        let y = g.matmul(x, p.var(self.weight))?;
        let y = g.add(y, p.var(self.bias))?;
        self.activation.apply(g, y)
    }
}

/// Dense+ReLU layers, each followed by dropout while training.
#[derive(Clone, Debug)]
pub struct PreNet {
    pub layers: Vec<Dense>,
    pub dropout: Vec<f64>,
}

impl PreNet {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        in_dim: usize,
        dims: &[usize],
        dropout: f64,
    ) -> Result<Self> {
        if dims.is_empty() {
            return Err(Error::Config(format!("{name}: pre-net needs at least one layer")));
        }
        let mut layers = Vec::with_capacity(dims.len());
        let mut prev = in_dim;
        for (i, &d) in dims.iter().enumerate() {
            layers.push(Dense::new(store, rng, &format!("{name}.{i}"), prev, d, Activation::Relu)?);
            prev = d;
        }
        Ok(PreNet { dropout: vec![dropout; layers.len()], layers })
    }

    pub fn out_dim(&self) -> usize {
        self.layers.last().map_or(0, |l| l.out_dim)
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, training: bool, seed: u64) -> Result<Var> {
        let mut h = x;
        for (i, (layer, &rate)) in self.layers.iter().zip(&self.dropout).enumerate() {
            h = layer.forward(g, p, h)?;
            if training && rate > 0.0 {
                h = g.dropout(h, rate, derive_seed(seed, i as u64))?;
            }
        }
        Ok(h)
    }
}

/// `y = T(x) * H(x) + (1 - T(x)) * x` with a ReLU transform and sigmoid gate.
#[derive(Clone, Debug)]
pub struct Highway {
    pub transform: Dense,
    pub gate: Dense,
}

pub const HIGHWAY_GATE_BIAS: f64 = -1.0;

impl Highway {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, dim: usize) -> Result<Self> {
        let transform = Dense::new(store, rng, &format!("{name}.transform"), dim, dim, Activation::Relu)?;
        let gate = Dense::new(store, rng, &format!("{name}.gate"), dim, dim, Activation::Sigmoid)?;
        *store.get_mut(gate.bias) = Tensor::full(&[dim], T::of(HIGHWAY_GATE_BIAS));
        Ok(Highway { transform, gate })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let h = self.transform.forward(g, p, x)?;
        let t = self.gate.forward(g, p, x)?;
        let diff = g.sub(h, x)?;
        let gated = g.mul(t, diff)?;
        g.add(x, gated)
    }
}

/// Same-length 1-D convolution over `[time, c_in]` with bias and activation.
#[derive(Clone, Debug)]
pub struct Conv1d {
    pub weight: ParamId,
    pub bias: ParamId,
    pub activation: Activation,
    pub width: usize,
    pub in_channels: usize,
    pub out_channels: usize,
}

impl Conv1d {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        width: usize,
        in_channels: usize,
        out_channels: usize,
        activation: Activation,
    ) -> Result<Self> {
        if width == 0 || in_channels == 0 || out_channels == 0 {
            return Err(Error::Config(format!("{name}: conv dims must be positive")));
        }
        let shape = [width, in_channels, out_channels];
        let weight = store.add(format!("{name}.weight"), glorot(&shape, width * in_channels, out_channels, rng))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[out_channels]))?;
        Ok(Conv1d { weight, bias, activation, width, in_channels, out_channels })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let y = g.conv1d(x, p.var(self.weight))?;
        let y = g.add(y, p.var(self.bias))?;
        self.activation.apply(g, y)
    }
}

/// Filters of widths `1..=K`, ReLU-activated and concatenated on the feature axis.
#[derive(Clone, Debug)]
pub struct ConvBank {
    pub filters: Vec<Conv1d>,
}

impl ConvBank {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        k: usize,
        in_channels: usize,
        channels: usize,
    ) -> Result<Self> {
        if k == 0 {
            return Err(Error::Config(format!("{name}: conv bank needs K >= 1")));
        }
        let filters = (1..=k)
            .map(|w| Conv1d::new(store, rng, &format!("{name}.k{w}"), w, in_channels, channels, Activation::Relu))
            .collect::<Result<_>>()?;
        Ok(ConvBank { filters })
    }

    pub fn out_dim(&self) -> usize {
        self.filters.iter().map(|f| f.out_channels).sum()
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let outs = self.filters.iter().map(|f| f.forward(g, p, x)).collect::<Result<Vec<_>>>()?;
        g.concat(&outs)
    }
}
