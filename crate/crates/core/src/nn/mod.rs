//! Layers built on the autodiff graph. Activations are row vectors: a batch of
//! inputs is `[batch, features]`, a sequence is `[time, features]`.

mod cbhg;
mod gru;
mod layers;
mod params;

pub use cbhg::{Cbhg, CbhgConfig};
pub use gru::{BiGruResidual, GruCell};
pub use layers::{Activation, Conv1d, ConvBank, Dense, Highway, PreNet, HIGHWAY_GATE_BIAS};
pub use params::{glorot, grad_check_store, Bound, ParamId, ParamStore};
