use rand::Rng;

use super::params::{glorot, Bound, ParamId, ParamStore};
use crate::autodiff::{Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// GRU cell with fused gate weights.
///
/// `z = σ(x Wz + h Uz + bz)`, `r = σ(x Wr + h Ur + br)`,
/// `ĥ = tanh(x Wh + (r ⊙ h) Uh + bh)`, `h' = (1 - z) ⊙ h + z ⊙ ĥ`.
/// Columns of `w_x` and `bias` are ordered `[z | r | ĥ]`, `u_zr` is `[Uz | Ur]`.
#[derive(Clone, Debug)]
pub struct GruCell {
    pub w_x: ParamId,
    pub u_zr: ParamId,
    pub u_h: ParamId,
    pub bias: ParamId,
    pub input: usize,
    pub hidden: usize,
}

impl GruCell {
    pub fn new<T: Scalar, R: Rng>(
        store: &mut ParamStore<T>,
        rng: &mut R,
        name: &str,
        input: usize,
        hidden: usize,
    ) -> Result<Self> {
        if input == 0 || hidden == 0 {
            return Err(Error::Config(format!("{name}: gru dims must be positive")));
        }
        let h3 = 3 * hidden;
        let w_x = store.add(format!("{name}.w_x"), glorot(&[input, h3], input, hidden, rng))?;
        let u_zr = store.add(format!("{name}.u_zr"), glorot(&[hidden, 2 * hidden], hidden, hidden, rng))?;
        let u_h = store.add(format!("{name}.u_h"), glorot(&[hidden, hidden], hidden, hidden, rng))?;
        let bias = store.add(format!("{name}.bias"), Tensor::zeros(&[h3]))?;
        Ok(GruCell { w_x, u_zr, u_h, bias, input, hidden })
    }

    pub fn zero_state<T: Scalar>(&self, g: &mut Graph<T>, batch: usize) -> Var {
        g.constant(Tensor::zeros(&[batch, self.hidden]))
    }

    /// Input half of the gates for every row of `x` at once: `x W + b`, `[rows, 3h]`.
    pub fn input_gates<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.input {
            return Err(Error::dim("gru", format!("input {:?}, cell expects [_, {}]", shape, self.input)));
        }
        let gx = g.matmul(x, p.var(self.w_x))?;
        g.add(gx, p.var(self.bias))
    }

    pub fn step<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, h: Var) -> Result<Var> {
        let gx = self.input_gates(g, p, x)?;
        self.step_gates(g, p, gx, h)
    }

    /// One step given precomputed input gates `gx: [batch, 3h]`.
    pub fn step_gates<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, gx: Var, h: Var) -> Result<Var> {
        let n = self.hidden;
        let (hs, gs) = (g.shape(h), g.shape(gx));
        if hs.len() != 2 || hs[1] != n || gs[0] != hs[0] || gs[1] != 3 * n {
            return Err(Error::dim("gru", format!("hidden {:?} with gates {:?}, hidden size {n}", hs, gs)));
        }
        let hu = g.matmul(h, p.var(self.u_zr))?;
        let gx_zr = g.slice(gx, 0, 2 * n)?;
        let pre = g.add(gx_zr, hu)?;
        let zr = g.sigmoid(pre)?;
        let z = g.slice(zr, 0, n)?;
        let r = g.slice(zr, n, n)?;
        let rh = g.mul(r, h)?;
        let rhu = g.matmul(rh, p.var(self.u_h))?;
        let gx_h = g.slice(gx, 2 * n, n)?;
        let cand_pre = g.add(gx_h, rhu)?;
        let cand = g.tanh(cand_pre)?;
        let delta = g.sub(cand, h)?;
        let upd = g.mul(z, delta)?;
        g.add(h, upd)
    }

    /// Run over the rows of `x: [time, input]` from a zero state, in reverse
    /// order when `reverse`; returns hidden states in time order, `[time, hidden]`.
    pub fn scan<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var, reverse: bool) -> Result<Var> {
        let time = g.shape(x)[0];
        let gx = self.input_gates(g, p, x)?;
        let mut h = self.zero_state(g, 1);
        let mut outs = vec![h; time];
        let order: Box<dyn Iterator<Item = usize>> =
            if reverse { Box::new((0..time).rev()) } else { Box::new(0..time) };
        for t in order {
            let gt = g.row(gx, t)?;
            h = self.step_gates(g, p, gt, h)?;
            outs[t] = h;
        }
        g.stack_rows(&outs)
    }
}

/// `y_t = x_t + [fwd_t | bwd_t]`: a bidirectional GRU with `d/2` units per
/// direction whose output is added back onto its input.
#[derive(Clone, Debug)]
pub struct BiGruResidual {
    pub forward: GruCell,
    pub backward: GruCell,
    pub dim: usize,
}

impl BiGruResidual {
    pub fn new<T: Scalar, R: Rng>(store: &mut ParamStore<T>, rng: &mut R, name: &str, dim: usize) -> Result<Self> {
        if dim == 0 || dim % 2 != 0 {
            return Err(Error::Config(format!("{name}: residual bi-GRU needs an even feature dimension, got {dim}")));
        }
        let forward = GruCell::new(store, rng, &format!("{name}.fwd"), dim, dim / 2)?;
        let backward = GruCell::new(store, rng, &format!("{name}.bwd"), dim, dim / 2)?;
        Ok(BiGruResidual { forward, backward, dim })
    }

    pub fn forward<T: Scalar>(&self, g: &mut Graph<T>, p: &Bound, x: Var) -> Result<Var> {
        let shape = g.shape(x);
        if shape.len() != 2 || shape[1] != self.dim {
            return Err(Error::dim("bigru_residual", format!("input {:?}, expected [_, {}]", shape, self.dim)));
        }
        let f = self.forward.scan(g, p, x, false)?;
        let b = self.backward.scan(g, p, x, true)?;
        let both = g.concat(&[f, b])?;
        g.add(x, both)
    }
}
