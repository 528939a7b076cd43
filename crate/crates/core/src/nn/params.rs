use std::collections::HashMap;

use rand::Rng;

use crate::autodiff::{grad_check_many, GradCheckReport, Graph, Tensor, Var};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// Handle to one tensor in a [`ParamStore`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Named parameter tensors in registration order.
#[derive(Clone, Debug, Default)]
pub struct ParamStore<T> {
    names: Vec<String>,
    values: Vec<Tensor<T>>,
    lookup: HashMap<String, usize>,
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { names: Vec::new(), values: Vec::new(), lookup: HashMap::new() }
    }

    pub fn add(&mut self, name: impl Into<String>, value: Tensor<T>) -> Result<ParamId> {
        let name = name.into();
        if self.lookup.contains_key(&name) {
            return Err(Error::Config(format!("parameter {name:?} registered twice")));
        }
        self.lookup.insert(name.clone(), self.values.len());
        self.names.push(name);
        self.values.push(value);
        Ok(ParamId(self.values.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor<T> {
        &self.values[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut Tensor<T> {
        &mut self.values[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.lookup.get(name).map(|&i| ParamId(i))
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.values.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.names.iter().map(String::as_str).zip(&self.values)
    }

    pub fn numel(&self) -> usize {
        self.values.iter().map(Tensor::numel).sum()
    }

    /// Record every parameter as a trainable leaf of `g`.
    pub fn bind(&self, g: &mut Graph<T>) -> Bound {
        Bound(self.values.iter().map(|v| g.param(v.clone())).collect())
    }

    /// Record every parameter as a constant; nothing downstream tracks gradients.
    pub fn bind_frozen(&self, g: &mut Graph<T>) -> Bound {
        Bound(self.values.iter().map(|v| g.constant(v.clone())).collect())
    }

    /// Sum of all entries, widened to f64; cheap fingerprint for tests and logs.
    pub fn checksum(&self) -> f64 {
        self.values.iter().flat_map(|t| t.data()).map(|v| v.to_f64_lossy()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            names: self.names.clone(),
            values: self.values.iter().map(Tensor::cast).collect(),
            lookup: self.lookup.clone(),
        }
    }
}

/// Graph handles for a store's parameters, indexed by [`ParamId`].
#[derive(Clone, Debug)]
pub struct Bound(Vec<Var>);

impl Bound {
    pub fn from_vars(vars: Vec<Var>) -> Self {
        Bound(vars)
    }

    pub fn var(&self, id: ParamId) -> Var {
        self.0[id.0]
    }

    pub fn vars(&self) -> &[Var] {
        &self.0
    }
}

/// Glorot-uniform tensor with the given fans.
pub fn glorot<T: Scalar, R: Rng>(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut R) -> Tensor<T> {
    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
    Tensor::uniform(shape, bound, rng)
}

/// Gradient check of a scalar function of every parameter in `store` plus
/// `inputs`. `f` receives the bound parameters and one var per input.
pub fn grad_check_store<F>(
    store: &ParamStore<f64>,
    inputs: &[Tensor<f64>],
    epsilon: f64,
    f: F,
) -> Result<GradCheckReport>
where
    F: Fn(&mut Graph<f64>, &Bound, &[Var]) -> Result<Var>,
{
    let n = store.len();
    let mut points: Vec<Tensor<f64>> = store.values.clone();
    points.extend_from_slice(inputs);
    grad_check_many(
        |g, vars| {
            let bound = Bound(vars[..n].to_vec());
            f(g, &bound, &vars[n..])
        },
        &points,
        epsilon,
    )
}
