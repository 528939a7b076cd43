//! The computation record: a Wengert list of primitive applications that is
//! replayed in reverse by [`Graph::backward`].

use std::str::FromStr;

use super::kernels::{matmul_acc, matmul_at_acc, matmul_bt_acc, sigmoid};
use super::tensor::Tensor;
use crate::error::{Error, Result};
use crate::rng::counter_uniform;
use crate::scalar::Scalar;

/// Handle to a node of a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Primitive identifiers accepted by [`Graph::apply`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Primitive {
    MatMul,
    Add,
    Sub,
    Mul,
    Scale,
    AddScalar,
    Tanh,
    Sigmoid,
    Relu,
    Abs,
    Softmax,
    Concat,
    Slice,
    Rows,
    StackRows,
    Reshape,
    Sum,
    Mean,
    Dropout,
    Conv1d,
    MaxPool1d,
    Embedding,
    MonotonicAlign,
}

impl Primitive {
    pub fn name(self) -> &'static str {
        match self {
            Primitive::MatMul => "matmul",
            Primitive::Add => "add",
            Primitive::Sub => "sub",
            Primitive::Mul => "mul",
            Primitive::Scale => "scale",
            Primitive::AddScalar => "add_scalar",
            Primitive::Tanh => "tanh",
            Primitive::Sigmoid => "sigmoid",
            Primitive::Relu => "relu",
            Primitive::Abs => "abs",
            Primitive::Softmax => "softmax",
            Primitive::Concat => "concat",
            Primitive::Slice => "slice",
            Primitive::Rows => "rows",
            Primitive::StackRows => "stack_rows",
            Primitive::Reshape => "reshape",
            Primitive::Sum => "sum",
            Primitive::Mean => "mean",
            Primitive::Dropout => "dropout",
            Primitive::Conv1d => "conv1d",
            Primitive::MaxPool1d => "maxpool1d",
            Primitive::Embedding => "embedding",
            Primitive::MonotonicAlign => "monotonic_align",
        }
    }

    const ALL: [Primitive; 23] = [
        Primitive::MatMul,
        Primitive::Add,
        Primitive::Sub,
        Primitive::Mul,
        Primitive::Scale,
        Primitive::AddScalar,
        Primitive::Tanh,
        Primitive::Sigmoid,
        Primitive::Relu,
        Primitive::Abs,
        Primitive::Softmax,
        Primitive::Concat,
        Primitive::Slice,
        Primitive::Rows,
        Primitive::StackRows,
        Primitive::Reshape,
        Primitive::Sum,
        Primitive::Mean,
        Primitive::Dropout,
        Primitive::Conv1d,
        Primitive::MaxPool1d,
        Primitive::Embedding,
        Primitive::MonotonicAlign,
    ];
}

impl FromStr for Primitive {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Primitive::ALL
            .iter()
            .copied()
            .find(|p| p.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown primitive {s:?}")))
    }
}

/// Attributes for the primitives that take any.
#[derive(Clone, Debug, Default)]
pub struct PrimitiveAttrs {
    pub p: f64,
    pub seed: u64,
    pub scalar: f64,
    pub start: usize,
    pub len: usize,
    pub ids: Vec<usize>,
    pub shape: Vec<usize>,
}

#[derive(Debug)]
enum Op<T> {
    Leaf,
    MatMul(Var, Var),
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, T),
    AddScalar(Var),
    Tanh(Var),
    Sigmoid(Var),
    Relu(Var),
    Abs(Var),
    Softmax(Var),
    Concat(Vec<Var>),
    Slice { src: Var, start: usize },
    Rows { src: Var, start: usize },
    StackRows(Vec<Var>),
    Reshape(Var),
    Sum(Var),
    Mean(Var),
    Dropout { src: Var, mask: Vec<T> },
    Conv1d { x: Var, w: Var },
    MaxPool1d { src: Var, argmax: Vec<usize> },
    Embedding { table: Var, ids: Vec<usize> },
    MonotonicAlign { p: Var, prev: Var, q: Vec<T> },
}

#[derive(Debug)]
struct Node<T> {
    value: Tensor<T>,
    op: Op<T>,
    requires_grad: bool,
    grad: Option<Tensor<T>>,
}

/// A computation record confined to one forward/backward pass.
#[derive(Debug, Default)]
pub struct Graph<T> {
    nodes: Vec<Node<T>>,
    debug_numerics: bool,
}

impl<T: Scalar> Graph<T> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new(), debug_numerics: false }
    }

    /// Enable NaN/Inf checks after every primitive.
    pub fn with_debug_numerics(mut self, on: bool) -> Self {
        self.debug_numerics = on;
        self
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Number of recorded primitive applications (non-leaf entries).
    pub fn recorded_ops(&self) -> usize {
        self.nodes.iter().filter(|n| !matches!(n.op, Op::Leaf)).count()
    }

    pub fn leaf(&mut self, value: Tensor<T>, requires_grad: bool) -> Var {
        self.push(value, Op::Leaf, requires_grad)
    }

    pub fn param(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor<T>) -> Var {
        self.leaf(value, false)
    }

    pub fn value(&self, v: Var) -> &Tensor<T> {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Gradient of the last backward pass, if `v` received one.
    pub fn grad(&self, v: Var) -> Option<&Tensor<T>> {
        self.nodes[v.0].grad.as_ref()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Tensor<T>> {
        self.nodes[v.0].grad.take()
    }

    /// A stop-gradient copy of `v`.
    pub fn detach(&mut self, v: Var) -> Var {
        let t = self.value(v).clone();
        self.constant(t)
    }

    fn push(&mut self, value: Tensor<T>, op: Op<T>, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad, grad: None });
        Var(self.nodes.len() - 1)
    }

    /// Append a primitive's result. Results that no gradient can reach are stored as constants.
    fn record(&mut self, name: &'static str, value: Tensor<T>, op: Op<T>, inputs: &[Var]) -> Result<Var> {
        if self.debug_numerics && !value.all_finite() {
            return Err(Error::Numeric(format!("non-finite output from primitive {name}")));
        }
        let rg = inputs.iter().any(|&v| self.nodes[v.0].requires_grad);
        Ok(if rg { self.push(value, op, true) } else { self.push(value, Op::Leaf, false) })
    }

    /// Dynamic dispatch by primitive name.
    pub fn apply(&mut self, name: &str, inputs: &[Var], attrs: &PrimitiveAttrs) -> Result<Var> {
        let prim: Primitive = name.parse()?;
        let need = |n: usize| -> Result<()> {
            if inputs.len() == n {
                Ok(())
            } else {
                Err(Error::dim(prim.name(), format!("expected {n} inputs, got {}", inputs.len())))
            }
        };
        match prim {
            Primitive::MatMul => need(2).and_then(|_| self.matmul(inputs[0], inputs[1])),
            Primitive::Add => need(2).and_then(|_| self.add(inputs[0], inputs[1])),
            Primitive::Sub => need(2).and_then(|_| self.sub(inputs[0], inputs[1])),
            Primitive::Mul => need(2).and_then(|_| self.mul(inputs[0], inputs[1])),
            Primitive::Scale => need(1).and_then(|_| self.scale(inputs[0], T::of(attrs.scalar))),
            Primitive::AddScalar => need(1).and_then(|_| self.add_scalar(inputs[0], T::of(attrs.scalar))),
            Primitive::Tanh => need(1).and_then(|_| self.tanh(inputs[0])),
            Primitive::Sigmoid => need(1).and_then(|_| self.sigmoid(inputs[0])),
            Primitive::Relu => need(1).and_then(|_| self.relu(inputs[0])),
            Primitive::Abs => need(1).and_then(|_| self.abs(inputs[0])),
            Primitive::Softmax => need(1).and_then(|_| self.softmax(inputs[0])),
            Primitive::Concat => self.concat(inputs),
            Primitive::Slice => need(1).and_then(|_| self.slice(inputs[0], attrs.start, attrs.len)),
            Primitive::Rows => need(1).and_then(|_| self.rows(inputs[0], attrs.start, attrs.len)),
            Primitive::StackRows => self.stack_rows(inputs),
            Primitive::Reshape => need(1).and_then(|_| self.reshape(inputs[0], &attrs.shape)),
            Primitive::Sum => need(1).and_then(|_| self.sum(inputs[0])),
            Primitive::Mean => need(1).and_then(|_| self.mean(inputs[0])),
            Primitive::Dropout => need(1).and_then(|_| self.dropout(inputs[0], attrs.p, attrs.seed)),
            Primitive::Conv1d => need(2).and_then(|_| self.conv1d(inputs[0], inputs[1])),
            Primitive::MaxPool1d => need(1).and_then(|_| self.maxpool1d(inputs[0])),
            Primitive::Embedding => need(1).and_then(|_| self.embedding(inputs[0], &attrs.ids)),
            Primitive::MonotonicAlign => need(2).and_then(|_| self.monotonic_align(inputs[0], inputs[1])),
        }
    }

    // ---- primitives --------------------------------------------------------

    /// `[m,k] x [k,n] -> [m,n]`
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape().len() != 2 || bv.shape().len() != 2 || av.cols() != bv.shape()[0] {
            return Err(Error::dim("matmul", format!("{:?} x {:?}", av.shape(), bv.shape())));
        }
        let (m, k, n) = (av.shape()[0], av.cols(), bv.cols());
        let mut out = vec![T::zero(); m * n];
        matmul_acc(av.data(), bv.data(), &mut out, m, k, n);
        let t = Tensor::new(vec![m, n], out)?;
        self.record("matmul", t, Op::MatMul(a, b), &[a, b])
    }

    /// Elementwise sum; `b` may instead match the last axis of `a` and is then
    /// broadcast over the leading axes.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (av, bv) = (self.value(a), self.value(b));
        let t = if av.shape() == bv.shape() {
            let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| x + y).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else if bv.numel() == av.cols() && bv.cols() == av.cols() {
            let c = av.cols();
            let data = av.data().iter().enumerate().map(|(i, &x)| x + bv.data()[i % c]).collect();
            Tensor::new(av.shape().to_vec(), data)?
        } else {
            return Err(Error::dim("add", format!("{:?} + {:?}", av.shape(), bv.shape())));
        };
        self.record("add", t, Op::Add(a, b), &[a, b])
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("sub", a, b, |x, y| x - y)?;
        self.record("sub", t, Op::Sub(a, b), &[a, b])
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let t = self.zip_same("mul", a, b, |x, y| x * y)?;
        self.record("mul", t, Op::Mul(a, b), &[a, b])
    }

    fn zip_same(&self, op: &'static str, a: Var, b: Var, f: impl Fn(T, T) -> T) -> Result<Tensor<T>> {
        let (av, bv) = (self.value(a), self.value(b));
        if av.shape() != bv.shape() {
            return Err(Error::dim(op, format!("{:?} vs {:?}", av.shape(), bv.shape())));
        }
        let data = av.data().iter().zip(bv.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(av.shape().to_vec(), data)
    }

    pub fn scale(&mut self, a: Var, s: T) -> Result<Var> {
        let t = self.value(a).map(|x| x * s);
        self.record("scale", t, Op::Scale(a, s), &[a])
    }

    pub fn add_scalar(&mut self, a: Var, s: T) -> Result<Var> {
        let t = self.value(a).map(|x| x + s);
        self.record("add_scalar", t, Op::AddScalar(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.tanh());
        self.record("tanh", t, Op::Tanh(a), &[a])
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(sigmoid);
        self.record("sigmoid", t, Op::Sigmoid(a), &[a])
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.max(T::zero()));
        self.record("relu", t, Op::Relu(a), &[a])
    }

    pub fn abs(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a).map(|x| x.abs());
        self.record("abs", t, Op::Abs(a), &[a])
    }

    /// Softmax over the last axis, max-shifted.
    pub fn softmax(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        let c = av.cols();
        let mut out = av.data().to_vec();
        for row in out.chunks_mut(c) {
            let m = row.iter().copied().fold(T::neg_infinity(), T::max);
            let mut s = T::zero();
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                s += *v;
            }
            for v in row.iter_mut() {
                *v /= s;
            }
        }
        let t = Tensor::new(av.shape().to_vec(), out)?;
        self.record("softmax", t, Op::Softmax(a), &[a])
    }

    /// Concatenate along the last axis; all inputs share the leading row count.
    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("concat", "no inputs"));
        }
        let rows = self.value(parts[0]).rows();
        let mut total = 0;
        for &p in parts {
            let v = self.value(p);
            if v.rows() != rows {
                return Err(Error::dim(
                    "concat",
                    format!("row mismatch {:?} vs {:?}", self.shape(parts[0]), v.shape()),
                ));
            }
            total += v.cols();
        }
        let mut out = Vec::with_capacity(rows * total);
        for r in 0..rows {
            for &p in parts {
                out.extend_from_slice(self.value(p).row_slice(r));
            }
        }
        let mut shape = self.shape(parts[0]).to_vec();
        *shape.last_mut().unwrap() = total;
        let t = Tensor::new(shape, out)?;
        self.record("concat", t, Op::Concat(parts.to_vec()), parts)
    }

    /// Columns `start..start+len` of the last axis.
    pub fn slice(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if len == 0 || start + len > av.cols() {
            return Err(Error::dim("slice", format!("[{start}, {}) of {:?}", start + len, av.shape())));
        }
        let mut out = Vec::with_capacity(av.rows() * len);
        for r in 0..av.rows() {
            out.extend_from_slice(&av.row_slice(r)[start..start + len]);
        }
        let mut shape = av.shape().to_vec();
        *shape.last_mut().unwrap() = len;
        let t = Tensor::new(shape, out)?;
        self.record("slice", t, Op::Slice { src: a, start }, &[a])
    }

    /// Rows `start..start+len` of a matrix.
    pub fn rows(&mut self, a: Var, start: usize, len: usize) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 || len == 0 || start + len > av.shape()[0] {
            return Err(Error::dim("rows", format!("[{start}, {}) of {:?}", start + len, av.shape())));
        }
        let c = av.cols();
        let t = Tensor::new(vec![len, c], av.data()[start * c..(start + len) * c].to_vec())?;
        self.record("rows", t, Op::Rows { src: a, start }, &[a])
    }

    pub fn row(&mut self, a: Var, r: usize) -> Result<Var> {
        self.rows(a, r, 1)
    }

    /// Concatenate matrices along the first axis.
    pub fn stack_rows(&mut self, parts: &[Var]) -> Result<Var> {
        if parts.is_empty() {
            return Err(Error::dim("stack_rows", "no inputs"));
        }
        let c = self.value(parts[0]).cols();
        let mut out = Vec::new();
        let mut rows = 0;
        for &p in parts {
            let v = self.value(p);
            if v.cols() != c {
                return Err(Error::dim("stack_rows", format!("column mismatch {c} vs {}", v.cols())));
            }
            rows += v.rows();
            out.extend_from_slice(v.data());
        }
        let t = Tensor::new(vec![rows, c], out)?;
        self.record("stack_rows", t, Op::StackRows(parts.to_vec()), parts)
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a).clone().reshaped(shape)?;
        self.record("reshape", t, Op::Reshape(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let t = Tensor::scalar(self.value(a).sum());
        self.record("sum", t, Op::Sum(a), &[a])
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        let v = self.value(a);
        let t = Tensor::scalar(v.sum() / T::of(v.numel() as f64));
        self.record("mean", t, Op::Mean(a), &[a])
    }

    /// Inverted dropout: kept entries are scaled by `1/(1-p)`. The mask is a pure
    /// function of `(seed, element index)`.
    pub fn dropout(&mut self, a: Var, p: f64, seed: u64) -> Result<Var> {
        if !(0.0..1.0).contains(&p) {
            return Err(Error::Config(format!("dropout probability {p} outside [0, 1)")));
        }
        if p == 0.0 {
            let t = self.value(a).clone();
            return self.record("dropout", t, Op::Scale(a, T::one()), &[a]);
        }
        let keep = T::of(1.0 / (1.0 - p));
        let av = self.value(a);
        let mask: Vec<T> =
            (0..av.numel() as u64).map(|i| if counter_uniform(seed, i) >= p { keep } else { T::zero() }).collect();
        let data = av.data().iter().zip(&mask).map(|(&x, &m)| x * m).collect();
        let t = Tensor::new(av.shape().to_vec(), data)?;
        self.record("dropout", t, Op::Dropout { src: a, mask }, &[a])
    }

    /// Stride-1 "same" convolution over time. `x: [time, c_in]`,
    /// `w: [width, c_in, c_out]`; left padding `(width-1)/2`, the rest on the right.
    pub fn conv1d(&mut self, x: Var, w: Var) -> Result<Var> {
        let (xv, wv) = (self.value(x), self.value(w));
        if xv.shape().len() != 2 || wv.shape().len() != 3 || wv.shape()[1] != xv.cols() {
            return Err(Error::dim("conv1d", format!("input {:?} with filter {:?}", xv.shape(), wv.shape())));
        }
        let (time, cin) = (xv.shape()[0], xv.cols());
        let (width, cout) = (wv.shape()[0], wv.shape()[2]);
        let left = (width - 1) / 2;
        let mut out = vec![T::zero(); time * cout];
        for i in 0..width {
            let tap = &wv.data()[i * cin * cout..(i + 1) * cin * cout];
            let (t0, t1) = conv_range(time, i, left);
            if t0 >= t1 {
                continue;
            }
            let src = &xv.data()[(t0 + i - left) * cin..(t1 + i - left) * cin];
            matmul_acc(src, tap, &mut out[t0 * cout..t1 * cout], t1 - t0, cin, cout);
        }
        let t = Tensor::new(vec![time, cout], out)?;
        self.record("conv1d", t, Op::Conv1d { x, w }, &[x, w])
    }

    /// Width-2, stride-1 max pooling over time; the last step sees only itself.
    pub fn maxpool1d(&mut self, a: Var) -> Result<Var> {
        let av = self.value(a);
        if av.shape().len() != 2 {
            return Err(Error::dim("maxpool1d", format!("expected [time, channels], got {:?}", av.shape())));
        }
        let (time, c) = (av.shape()[0], av.cols());
        let d = av.data();
        let mut out = Vec::with_capacity(time * c);
        let mut argmax = Vec::with_capacity(time * c);
        for t in 0..time {
            for ch in 0..c {
                let here = t * c + ch;
                let idx = if t + 1 < time && d[here + c] > d[here] { here + c } else { here };
                out.push(d[idx]);
                argmax.push(idx);
            }
        }
        let tns = Tensor::new(vec![time, c], out)?;
        self.record("maxpool1d", tns, Op::MaxPool1d { src: a, argmax }, &[a])
    }

    /// Gather rows of `table: [vocab, dim]`.
    pub fn embedding(&mut self, table: Var, ids: &[usize]) -> Result<Var> {
        let tv = self.value(table);
        if tv.shape().len() != 2 || ids.is_empty() {
            return Err(Error::dim("embedding", format!("table {:?} with {} ids", tv.shape(), ids.len())));
        }
        let (vocab, dim) = (tv.shape()[0], tv.cols());
        let mut out = Vec::with_capacity(ids.len() * dim);
        for &id in ids {
            if id >= vocab {
                return Err(Error::dim("embedding", format!("id {id} out of range for vocab {vocab}")));
            }
            out.extend_from_slice(tv.row_slice(id));
        }
        let t = Tensor::new(vec![ids.len(), dim], out)?;
        self.record("embedding", t, Op::Embedding { table, ids: ids.to_vec() }, &[table])
    }

    /// Expected monotonic alignment for one decoder step, division-free form:
    /// `q_0 = prev_0`, `q_j = (1 - p_{j-1}) q_{j-1} + prev_j`, `alpha_j = p_j q_j`.
    pub fn monotonic_align(&mut self, p: Var, prev: Var) -> Result<Var> {
        let (pv, av) = (self.value(p), self.value(prev));
        if pv.shape() != av.shape() || pv.rows() != 1 {
            return Err(Error::dim("monotonic_align", format!("{:?} vs {:?}", pv.shape(), av.shape())));
        }
        let (alpha, q) = monotonic_forward(pv.data(), av.data());
        let t = Tensor::new(pv.shape().to_vec(), alpha)?;
        self.record("monotonic_align", t, Op::MonotonicAlign { p, prev, q }, &[p, prev])
    }

    // ---- backward ----------------------------------------------------------

    /// Reverse sweep from a scalar `loss`; every leaf that requires grad receives
    /// `d loss / d leaf`. Gradients accumulate across fan-out.
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        let lv = self.value(loss);
        if lv.numel() != 1 {
            return Err(Error::Contract(format!("backward needs a scalar loss, got shape {:?}", lv.shape())));
        }
        let loss_shape = lv.shape().to_vec();
        if !self.nodes[loss.0].requires_grad {
            return Err(Error::Contract("loss is not reachable from any gradient-requiring leaf".into()));
        }
        for n in &mut self.nodes {
            n.grad = None;
        }
        let one = Tensor::new(loss_shape, vec![T::one()])?;
        self.nodes[loss.0].grad = Some(one);

        for k in (0..=loss.0).rev() {
            if !self.nodes[k].requires_grad || matches!(self.nodes[k].op, Op::Leaf) {
                continue;
            }
            let Some(g) = self.nodes[k].grad.take() else { continue };
            self.backprop_node(k, &g);
            self.nodes[k].grad = Some(g);
        }
        Ok(())
    }

    fn accum(&mut self, v: Var, f: impl FnOnce(&mut [T], &Self)) {
        if !self.nodes[v.0].requires_grad {
            return;
        }
        let mut buf = match self.nodes[v.0].grad.take() {
            Some(t) => t,
            None => Tensor::zeros(self.nodes[v.0].value.shape()),
        };
        f(buf.data_mut(), self);
        self.nodes[v.0].grad = Some(buf);
    }

    fn backprop_node(&mut self, k: usize, g: &Tensor<T>) {
        // The op is moved out temporarily so saved intermediates can be borrowed
        // while input gradients are written.
        let op = std::mem::replace(&mut self.nodes[k].op, Op::Leaf);
        let gd = g.data();
        match &op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                let (m, kk) = (self.value(*a).shape()[0], self.value(*a).cols());
                let n = self.value(*b).cols();
                self.accum(*a, |buf, s| matmul_bt_acc(gd, s.value(*b).data(), buf, m, kk, n));
                self.accum(*b, |buf, s| matmul_at_acc(s.value(*a).data(), gd, buf, m, kk, n));
            }
            Op::Add(a, b) => {
                self.accum(*a, |buf, _| add_into(buf, gd));
                self.accum(*b, |buf, _| {
                    let c = buf.len();
                    for (i, &gv) in gd.iter().enumerate() {
                        buf[i % c] += gv;
                    }
                });
            }
            Op::Sub(a, b) => {
                self.accum(*a, |buf, _| add_into(buf, gd));
                self.accum(*b, |buf, _| {
                    for (o, &gv) in buf.iter_mut().zip(gd) {
                        *o -= gv;
                    }
                });
            }
            Op::Mul(a, b) => {
                self.accum(*a, |buf, s| {
                    for ((o, &gv), &bv) in buf.iter_mut().zip(gd).zip(s.value(*b).data()) {
                        *o += gv * bv;
                    }
                });
                self.accum(*b, |buf, s| {
                    for ((o, &gv), &av) in buf.iter_mut().zip(gd).zip(s.value(*a).data()) {
                        *o += gv * av;
                    }
                });
            }
            Op::Scale(a, sc) => {
                let sc = *sc;
                self.accum(*a, |buf, _| {
                    for (o, &gv) in buf.iter_mut().zip(gd) {
                        *o += gv * sc;
                    }
                });
            }
            Op::AddScalar(a) | Op::Reshape(a) => self.accum(*a, |buf, _| add_into(buf, gd)),
            Op::Tanh(a) => {
                let y = self.nodes[k].value.data().to_vec();
                self.accum(*a, |buf, _| {
                    for ((o, &gv), &yv) in buf.iter_mut().zip(gd).zip(&y) {
                        *o += gv * (T::one() - yv * yv);
                    }
                });
            }
            Op::Sigmoid(a) => {
                let y = self.nodes[k].value.data().to_vec();
                self.accum(*a, |buf, _| {
                    for ((o, &gv), &yv) in buf.iter_mut().zip(gd).zip(&y) {
                        *o += gv * yv * (T::one() - yv);
                    }
                });
            }
            Op::Relu(a) => {
                self.accum(*a, |buf, s| {
                    for ((o, &gv), &xv) in buf.iter_mut().zip(gd).zip(s.value(*a).data()) {
                        if xv > T::zero() {
                            *o += gv;
                        }
                    }
                });
            }
            Op::Abs(a) => {
                self.accum(*a, |buf, s| {
                    for ((o, &gv), &xv) in buf.iter_mut().zip(gd).zip(s.value(*a).data()) {
                        if xv > T::zero() {
                            *o += gv;
                        } else if xv < T::zero() {
                            *o -= gv;
                        }
                    }
                });
            }
            Op::Softmax(a) => {
                let y = self.nodes[k].value.clone();
                let c = y.cols();
                self.accum(*a, |buf, _| {
                    for r in 0..y.rows() {
                        let yr = y.row_slice(r);
                        let gr = &gd[r * c..(r + 1) * c];
                        let dot: T = yr.iter().zip(gr).map(|(&yv, &gv)| yv * gv).sum();
                        for j in 0..c {
                            buf[r * c + j] += yr[j] * (gr[j] - dot);
                        }
                    }
                });
            }
            Op::Concat(parts) => {
                let total = g.cols();
                let rows = g.rows();
                let mut offset = 0;
                for &p in parts {
                    let w = self.value(p).cols();
                    self.accum(p, |buf, _| {
                        for r in 0..rows {
                            add_into(&mut buf[r * w..(r + 1) * w], &gd[r * total + offset..r * total + offset + w]);
                        }
                    });
                    offset += w;
                }
            }
            Op::Slice { src, start } => {
                let (len, start) = (g.cols(), *start);
                let full = self.value(*src).cols();
                self.accum(*src, |buf, _| {
                    for r in 0..g.rows() {
                        add_into(&mut buf[r * full + start..r * full + start + len], &gd[r * len..(r + 1) * len]);
                    }
                });
            }
            Op::Rows { src, start } => {
                let c = g.cols();
                let off = start * c;
                self.accum(*src, |buf, _| add_into(&mut buf[off..off + gd.len()], gd));
            }
            Op::StackRows(parts) => {
                let mut off = 0;
                for &p in parts {
                    let n = self.value(p).numel();
                    self.accum(p, |buf, _| add_into(buf, &gd[off..off + n]));
                    off += n;
                }
            }
            Op::Sum(a) => {
                let gv = gd[0];
                self.accum(*a, |buf, _| buf.iter_mut().for_each(|o| *o += gv));
            }
            Op::Mean(a) => {
                let n = T::of(self.value(*a).numel() as f64);
                let gv = gd[0] / n;
                self.accum(*a, |buf, _| buf.iter_mut().for_each(|o| *o += gv));
            }
            Op::Dropout { src, mask } => {
                self.accum(*src, |buf, _| {
                    for ((o, &gv), &m) in buf.iter_mut().zip(gd).zip(mask) {
                        *o += gv * m;
                    }
                });
            }
            Op::Conv1d { x, w } => {
                let (time, cin) = (self.value(*x).shape()[0], self.value(*x).cols());
                let (width, cout) = (self.value(*w).shape()[0], self.value(*w).shape()[2]);
                let left = (width - 1) / 2;
                self.accum(*x, |buf, s| {
                    let wd = s.value(*w).data();
                    for i in 0..width {
                        let (t0, t1) = conv_range(time, i, left);
                        if t0 >= t1 {
                            continue;
                        }
                        let tap = &wd[i * cin * cout..(i + 1) * cin * cout];
                        let dst = &mut buf[(t0 + i - left) * cin..(t1 + i - left) * cin];
                        matmul_bt_acc(&gd[t0 * cout..t1 * cout], tap, dst, t1 - t0, cin, cout);
                    }
                });
                self.accum(*w, |buf, s| {
                    let xd = s.value(*x).data();
                    for i in 0..width {
                        let (t0, t1) = conv_range(time, i, left);
                        if t0 >= t1 {
                            continue;
                        }
                        let src = &xd[(t0 + i - left) * cin..(t1 + i - left) * cin];
                        let dst = &mut buf[i * cin * cout..(i + 1) * cin * cout];
                        matmul_at_acc(src, &gd[t0 * cout..t1 * cout], dst, t1 - t0, cin, cout);
                    }
                });
            }
            Op::MaxPool1d { src, argmax } => {
                self.accum(*src, |buf, _| {
                    for (&idx, &gv) in argmax.iter().zip(gd) {
                        buf[idx] += gv;
                    }
                });
            }
            Op::Embedding { table, ids } => {
                let dim = g.cols();
                self.accum(*table, |buf, _| {
                    for (r, &id) in ids.iter().enumerate() {
                        add_into(&mut buf[id * dim..(id + 1) * dim], &gd[r * dim..(r + 1) * dim]);
                    }
                });
            }
            Op::MonotonicAlign { p, prev, q } => {
                let pd = self.value(*p).data().to_vec();
                let (gp, gprev) = monotonic_backward(&pd, q, gd);
                self.accum(*p, |buf, _| add_into(buf, &gp));
                self.accum(*prev, |buf, _| add_into(buf, &gprev));
            }
        }
        self.nodes[k].op = op;
    }
}

fn add_into<T: Scalar>(dst: &mut [T], src: &[T]) {
    for (o, &v) in dst.iter_mut().zip(src) {
        *o += v;
    }
}

/// Output steps `[t0, t1)` whose tap `i` reads inside the input.
fn conv_range(time: usize, tap: usize, left: usize) -> (usize, usize) {
    let t0 = left.saturating_sub(tap);
    let t1 = (time + left).saturating_sub(tap).min(time);
    (t0, t1)
}

/// Forward pass of [`Graph::monotonic_align`] on plain slices; returns `(alpha, q)`.
pub fn monotonic_forward<T: Scalar>(p: &[T], prev: &[T]) -> (Vec<T>, Vec<T>) {
    let n = p.len();
    let mut q = vec![T::zero(); n];
    let mut alpha = vec![T::zero(); n];
    for j in 0..n {
        q[j] = if j == 0 { prev[0] } else { (T::one() - p[j - 1]) * q[j - 1] + prev[j] };
        alpha[j] = p[j] * q[j];
    }
    (alpha, q)
}

fn monotonic_backward<T: Scalar>(p: &[T], q: &[T], g_alpha: &[T]) -> (Vec<T>, Vec<T>) {
    let n = p.len();
    let mut gp = vec![T::zero(); n];
    let mut gq = vec![T::zero(); n];
    // q_{j+1} depends on q_j and p_j with weight (1 - p_j)
    for j in (0..n).rev() {
        let carry = if j + 1 < n { gq[j + 1] } else { T::zero() };
        gq[j] = g_alpha[j] * p[j] + carry * (T::one() - p[j]);
        gp[j] = g_alpha[j] * q[j] - carry * q[j];
    }
    (gp, gq)
}
