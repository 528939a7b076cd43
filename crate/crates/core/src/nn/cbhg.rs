use rand::Rng;
use serde::{Deserialize, Serialize};

use super::gru::BiGruResidual;
use super::layers::{Activation, Conv1d, ConvBank, Highway};
use super::params::{Bound, ParamStore};
use crate::autodiff::{Graph, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CbhgConfig {
    /// Conv bank widths run `1..=k`.
    pub k: usize,
    /// Output channels per bank filter.
    pub channels: usize,
    pub highway_layers: usize,
}

impl Default for CbhgConfig {
    fn default() -> Self {
        CbhgConfig { k: 8, channels: 32, highway_layers: 4 }
    }
}

/// Conv bank, max-pool, two width-3 projections, highway stack, residual bi-GRU.
#[derive(Clone, Debug)]
pub struct Cbhg {
    pub bank: ConvBank,
    pub proj1: Conv1d,
    pub proj2: Conv1d,
    pub highways: Vec<Highway>,
    pub bigru: BiGruResidual,
    pub dim: usize,
    /// Residual around the conv projections, added before the highway stack.
    pub inner_residual: bool,
}

impl Cbhg {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        dim: usize,
        cfg: &CbhgConfig,
        inner_residual: bool,
    ) -> Result<Self> {
        let bank = ConvBank::new(store, rng, &format!("{name}.bank"), cfg.k, dim, cfg.channels)?;
        let proj1 = Conv1d::new(store, rng, &format!("{name}.proj1"), 3, bank.out_dim(), dim, Activation::Relu)?;
        let proj2 = Conv1d::new(store, rng, &format!("{name}.proj2"), 3, dim, dim, Activation::None)?;
        let highways = (0..cfg.highway_layers)
            .map(|i| Highway::new(store, rng, &format!("{name}.highway{i}"), dim))
            .collect::<Result<_>>()?;
        let bigru = BiGruResidual::new(store, rng, &format!("{name}.bigru"), dim)?;
        Ok(Cbhg { bank, proj1, proj2, highways, bigru, dim, inner_residual })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::dim("cbhg", format!("input stage: got {:?}, expected [time, {}]", shape, self.dim)));
        }
        let y = self.bank.forward(g, p, x)?;
        let y = g.maxpool1d(y)?;
        let y = self.proj1.forward(g, p, y)?;
        let mut y = self.proj2.forward(g, p, y)?;
        if self.inner_residual {
            y = g.add(y, x)?;
        }
        for hw in &self.highways {
            y = hw.forward(g, p, y)?;
        }
        self.bigru.forward(g, p, y)
    }
}
