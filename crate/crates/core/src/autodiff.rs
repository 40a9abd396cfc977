//! Define-by-run reverse-mode automatic differentiation.
//!
//! A [`Tape`] records every primitive applied to [`Var`] handles in
//! execution order. [`Tape::backward`] consumes the tape, walks the record in
//! reverse and returns the gradients of a scalar loss with respect to every
//! parameter leaf. A fresh tape is built for every training step.

use std::cell::{Ref, RefCell};

use crate::error::{Error, Result};
use crate::special;
use crate::tensor::{gemm, MatRef, Tensor};

pub type NodeId = usize;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Unary {
    Neg,
    Exp,
    Log,
    Sigmoid,
    Tanh,
    Relu,
    Lgamma,
}

impl Unary {
    fn name(self) -> &'static str {
        match self {
            Unary::Neg => "neg",
            Unary::Exp => "exp",
            Unary::Log => "log",
            Unary::Sigmoid => "sigmoid",
            Unary::Tanh => "tanh",
            Unary::Relu => "relu",
            Unary::Lgamma => "lgamma",
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Reduce {
    Sum,
    Mean,
    Max,
}

#[derive(Debug)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    /// Elementwise binary op; a one-element operand is broadcast.
    Binary(Binary, NodeId, NodeId),
    /// Matrix plus a row vector broadcast over rows.
    AddRow(NodeId, NodeId),
    Unary(Unary, NodeId),
    Scale(NodeId, f64),
    Shift(NodeId),
    Reduce {
        kind: Reduce,
        input: NodeId,
        axis: Option<usize>,
        /// Flat index of the selected element per output entry (max only).
        argmax: Vec<usize>,
    },
    Softmax(NodeId),
    LogSoftmax(NodeId),
    Reshape(NodeId),
    /// `mean + scale * noise` with a constant `noise`.
    Affine {
        mean: NodeId,
        scale: NodeId,
        noise: Tensor,
    },
    /// Softplus; holds `sigmoid(x)` for the backward pass.
    Softplus(NodeId, Tensor),
    /// Scalar Gaussian KL; holds its gradients with respect to `mu` and `sigma`.
    GaussianKl {
        mu: NodeId,
        sigma: NodeId,
        dmu: Tensor,
        dsigma: Tensor,
    },
}

struct Node {
    value: Tensor,
    op: Op,
    /// Some parameter leaf is reachable through this node.
    needs_grad: bool,
    is_param: bool,
}

/// Recording of a computation for reverse-mode differentiation.
///
/// A tape is confined to one thread. Handles into it are [`Var`]s.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct Var<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for Var<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Var")
            .field("id", &self.id)
            .field("shape", &self.value().shape())
            .finish()
    }
}

/// Gradients of a scalar loss with respect to the parameter leaves of a tape.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a parameter leaf. `None` for non-parameter nodes or
    /// parameters the loss does not depend on.
    pub fn get(&self, id: NodeId) -> Option<&Tensor> {
        self.grads.get(id).and_then(Option::as_ref)
    }

    /// Removes and returns the gradient of a parameter leaf, or zeros of the
    /// given shape when the loss did not reach it.
    pub fn take_or_zeros(&mut self, id: NodeId, shape: &[usize]) -> Tensor {
        self.grads
            .get_mut(id)
            .and_then(Option::take)
            .unwrap_or_else(|| Tensor::zeros(shape.to_vec()))
    }
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Records a trainable leaf whose gradient is returned by `backward`.
    pub fn param(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, true, true)
    }

    /// Records a constant leaf that never receives a gradient.
    pub fn constant(&self, value: Tensor) -> Var<'_> {
        self.push(value, Op::Leaf, false, false)
    }

    pub fn scalar(&self, value: f64) -> Var<'_> {
        self.constant(Tensor::scalar(value))
    }

    fn push(&self, value: Tensor, op: Op, needs_grad: bool, is_param: bool) -> Var<'_> {
        let mut nodes = self.nodes.borrow_mut();
        nodes.push(Node {
            value,
            op,
            needs_grad,
            is_param,
        });
        Var {
            tape: self,
            id: nodes.len() - 1,
        }
    }

    fn needs(&self, id: NodeId) -> bool {
        self.nodes.borrow()[id].needs_grad
    }

    fn value(&self, id: NodeId) -> Ref<'_, Tensor> {
        Ref::map(self.nodes.borrow(), |n| &n[id].value)
    }

    /// Reverse pass from a scalar `loss`.
    ///
    /// The tape is consumed: gradients are returned for parameter leaves only.
    pub fn backward(self, loss: NodeId) -> Result<Gradients> {
        let nodes = self.nodes.into_inner();
        let Some(loss_node) = nodes.get(loss) else {
            return Err(Error::Contract(format!("node {loss} is not on this tape")));
        };
        if loss_node.value.len() != 1 {
            return Err(Error::Contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                loss_node.value.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..nodes.len()).map(|_| None).collect();
        grads[loss] = Some(Tensor::full(loss_node.value.shape().to_vec(), 1.0));

        for id in (0..=loss).rev() {
            let node = &nodes[id];
            if !node.needs_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[id].take() else { continue };
            propagate(&nodes, id, &g, &mut grads)?;
        }

        for (grad, node) in grads.iter_mut().zip(&nodes) {
            if !node.is_param {
                *grad = None;
            }
        }
        Ok(Gradients { grads })
    }
}

fn accumulate(grads: &mut [Option<Tensor>], id: NodeId, contribution: Tensor) {
    match &mut grads[id] {
        Some(existing) => existing.add_assign_scaled(&contribution, 1.0),
        slot @ None => *slot = Some(contribution),
    }
}

/// Sums `g` down to the shape of a broadcast operand.
fn unbroadcast(g: Tensor, target: &Tensor) -> Tensor {
    if g.shape() == target.shape() {
        g
    } else {
        Tensor::full(target.shape().to_vec(), g.sum())
    }
}

fn propagate(nodes: &[Node], id: NodeId, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
    let node = &nodes[id];
    let out = &node.value;
    let needs = |p: NodeId| nodes[p].needs_grad;
    match &node.op {
        Op::Leaf => {}
        Op::MatMul(a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let (m, k) = av.as_matrix_dims("matmul")?;
            let n = bv.shape()[1];
            if needs(*a) {
                // dA = dC · Bᵀ
                let mut da = vec![0.0; m * k];
                gemm(
                    m,
                    n,
                    k,
                    MatRef::row_major(g.data(), n),
                    MatRef::transposed(bv.data(), n),
                    &mut da,
                    0.0,
                );
                accumulate(grads, *a, Tensor::new(vec![m, k], da)?);
            }
            if needs(*b) {
                // dB = Aᵀ · dC
                let mut db = vec![0.0; k * n];
                gemm(
                    k,
                    m,
                    n,
                    MatRef::transposed(av.data(), k),
                    MatRef::row_major(g.data(), n),
                    &mut db,
                    0.0,
                );
                accumulate(grads, *b, Tensor::new(vec![k, n], db)?);
            }
        }
        Op::Binary(kind, a, b) if nodes[*a].value.shape() == nodes[*b].value.shape() => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            if needs(*a) {
                let d = match kind {
                    Binary::Add | Binary::Sub => g.clone(),
                    Binary::Mul => g.zip_map(bv, |gi, y| gi * y)?,
                    Binary::Div => g.zip_map(bv, |gi, y| gi / y)?,
                };
                accumulate(grads, *a, d);
            }
            if needs(*b) {
                let d = match kind {
                    Binary::Add => g.clone(),
                    Binary::Sub => g.map(|gi| -gi),
                    Binary::Mul => g.zip_map(av, |gi, x| gi * x)?,
                    Binary::Div => {
                        let q = g.zip_map(av, |gi, x| gi * x)?;
                        q.zip_map(bv, |v, y| -v / (y * y))?
                    }
                };
                accumulate(grads, *b, d);
            }
        }
        Op::Binary(kind, a, b) => {
            let (av, bv) = (&nodes[*a].value, &nodes[*b].value);
            let at = |t: &Tensor, i: usize| {
                if t.len() == 1 {
                    t.data()[0]
                } else {
                    t.data()[i]
                }
            };
            let n = out.len();
            if needs(*a) {
                let full: Vec<f64> = (0..n)
                    .map(|i| {
                        let gi = g.data()[i];
                        match kind {
                            Binary::Add | Binary::Sub => gi,
                            Binary::Mul => gi * at(bv, i),
                            Binary::Div => gi / at(bv, i),
                        }
                    })
                    .collect();
                let full = Tensor::new(out.shape().to_vec(), full)?;
                accumulate(grads, *a, unbroadcast(full, av));
            }
            if needs(*b) {
                let full: Vec<f64> = (0..n)
                    .map(|i| {
                        let gi = g.data()[i];
                        match kind {
                            Binary::Add => gi,
                            Binary::Sub => -gi,
                            Binary::Mul => gi * at(av, i),
                            Binary::Div => {
                                let bi = at(bv, i);
                                -gi * at(av, i) / (bi * bi)
                            }
                        }
                    })
                    .collect();
                let full = Tensor::new(out.shape().to_vec(), full)?;
                accumulate(grads, *b, unbroadcast(full, bv));
            }
        }
        Op::AddRow(a, row) => {
            if needs(*a) {
                accumulate(grads, *a, g.clone());
            }
            if needs(*row) {
                let cols = nodes[*row].value.len();
                let mut acc = vec![0.0; cols];
                for r in g.data().chunks(cols) {
                    for (s, v) in acc.iter_mut().zip(r) {
                        *s += v;
                    }
                }
                accumulate(
                    grads,
                    *row,
                    Tensor::new(nodes[*row].value.shape().to_vec(), acc)?,
                );
            }
        }
        Op::Unary(kind, a) => {
            let x = &nodes[*a].value;
            let d: Vec<f64> = g
                .data()
                .iter()
                .zip(x.data())
                .zip(out.data())
                .map(|((&gi, &xi), &yi)| {
                    gi * match kind {
                        Unary::Neg => -1.0,
                        Unary::Exp => yi,
                        Unary::Log => 1.0 / xi,
                        Unary::Sigmoid => yi * (1.0 - yi),
                        Unary::Tanh => 1.0 - yi * yi,
                        Unary::Relu => {
                            if xi > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Lgamma => special::digamma(xi),
                    }
                })
                .collect();
            accumulate(grads, *a, Tensor::new(x.shape().to_vec(), d)?);
        }
        Op::Scale(a, c) => accumulate(grads, *a, g.map(|v| v * c)),
        Op::Shift(a) => accumulate(grads, *a, g.clone()),
        Op::Reduce {
            kind,
            input,
            axis,
            argmax,
        } => {
            let x = &nodes[*input].value;
            let mut d = vec![0.0; x.len()];
            match kind {
                Reduce::Max => {
                    for (gi, &src) in g.data().iter().zip(argmax) {
                        d[src] += gi;
                    }
                }
                Reduce::Sum | Reduce::Mean => {
                    let (outer, len, inner) = axis_split(x.shape(), *axis);
                    let scale = if *kind == Reduce::Mean {
                        1.0 / len as f64
                    } else {
                        1.0
                    };
                    for o in 0..outer {
                        for l in 0..len {
                            for i in 0..inner {
                                d[(o * len + l) * inner + i] = g.data()[o * inner + i] * scale;
                            }
                        }
                    }
                }
            }
            accumulate(grads, *input, Tensor::new(x.shape().to_vec(), d)?);
        }
        Op::Softmax(a) => {
            let cols = out.cols();
            let mut d = vec![0.0; out.len()];
            for ((drow, srow), grow) in d
                .chunks_mut(cols)
                .zip(out.data().chunks(cols))
                .zip(g.data().chunks(cols))
            {
                let dot: f64 = srow.iter().zip(grow).map(|(s, g)| s * g).sum();
                for ((dv, s), gv) in drow.iter_mut().zip(srow).zip(grow) {
                    *dv = s * (gv - dot);
                }
            }
            accumulate(grads, *a, Tensor::new(out.shape().to_vec(), d)?);
        }
        Op::LogSoftmax(a) => {
            let cols = out.cols();
            let mut d = vec![0.0; out.len()];
            for ((drow, lrow), grow) in d
                .chunks_mut(cols)
                .zip(out.data().chunks(cols))
                .zip(g.data().chunks(cols))
            {
                let total: f64 = grow.iter().sum();
                for ((dv, l), gv) in drow.iter_mut().zip(lrow).zip(grow) {
                    *dv = gv - l.exp() * total;
                }
            }
            accumulate(grads, *a, Tensor::new(out.shape().to_vec(), d)?);
        }
        Op::Reshape(a) => {
            let shape = nodes[*a].value.shape().to_vec();
            accumulate(grads, *a, Tensor::new(shape, g.data().to_vec())?);
        }
        Op::Affine { mean, scale, noise } => {
            if needs(*scale) {
                accumulate(grads, *scale, g.zip_map(noise, |gi, e| gi * e)?);
            }
            if needs(*mean) {
                accumulate(grads, *mean, g.clone());
            }
        }
        Op::Softplus(a, sig) => {
            accumulate(grads, *a, g.zip_map(sig, |gi, s| gi * s)?);
        }
        Op::GaussianKl {
            mu,
            sigma,
            dmu,
            dsigma,
        } => {
            let gi = g.data()[0];
            if needs(*mu) {
                accumulate(grads, *mu, dmu.map(|v| v * gi));
            }
            if needs(*sigma) {
                accumulate(grads, *sigma, dsigma.map(|v| v * gi));
            }
        }
    }
    Ok(())
}

/// Splits a shape around `axis` into (outer, axis length, inner) extents.
/// `None` reduces over everything.
fn axis_split(shape: &[usize], axis: Option<usize>) -> (usize, usize, usize) {
    match axis {
        None => (1, shape.iter().product(), 1),
        Some(ax) => (
            shape[..ax].iter().product(),
            shape[ax],
            shape[ax + 1..].iter().product(),
        ),
    }
}

fn row_softmax(x: &Tensor, log: bool) -> Result<Tensor> {
    if x.rank() == 0 || x.is_empty() {
        return Err(Error::Empty("softmax"));
    }
    let cols = *x.shape().last().unwrap_or(&1);
    let mut out = vec![0.0; x.len()];
    for (orow, row) in out.chunks_mut(cols).zip(x.data().chunks(cols)) {
        let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if !max.is_finite() {
            return Err(Error::Domain {
                op: "softmax",
                index: 0,
                value: max,
            });
        }
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = sum.ln();
        for (o, v) in orow.iter_mut().zip(row) {
            *o = if log {
                v - max - log_sum
            } else {
                (v - max).exp() / sum
            };
        }
    }
    Tensor::new(x.shape().to_vec(), out)
}

impl<'t> Var<'t> {
    pub fn id(self) -> NodeId {
        self.id
    }

    pub fn tape(self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Ref<'t, Tensor> {
        self.tape.value(self.id)
    }

    pub fn shape(&self) -> Vec<usize> {
        self.value().shape().to_vec()
    }

    /// Value of a one-element variable.
    pub fn item(&self) -> Result<f64> {
        self.value().item()
    }

    fn check_same_tape(self, other: Var<'t>, op: &'static str) -> Result<()> {
        if std::ptr::eq(self.tape, other.tape) {
            Ok(())
        } else {
            Err(Error::Contract(format!(
                "{op}: operands live on different tapes"
            )))
        }
    }

    fn record(self, value: Tensor, op: Op, parents: &[NodeId]) -> Var<'t> {
        let needs = parents.iter().any(|&p| self.tape.needs(p));
        self.tape.push(value, op, needs, false)
    }

    pub fn matmul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(other, "matmul")?;
        let value = self.value().matmul(&other.value())?;
        Ok(self.record(value, Op::MatMul(self.id, other.id), &[self.id, other.id]))
    }

    fn binary(self, kind: Binary, other: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(other, "elementwise")?;
        let value = {
            let (a, b) = (self.value(), other.value());
            let name = match kind {
                Binary::Add => "add",
                Binary::Sub => "sub",
                Binary::Mul => "mul",
                Binary::Div => "div",
            };
            let (shape, n) = if a.shape() == b.shape() {
                (a.shape().to_vec(), a.len())
            } else if b.len() == 1 {
                (a.shape().to_vec(), a.len())
            } else if a.len() == 1 {
                (b.shape().to_vec(), b.len())
            } else {
                return Err(Error::dim(
                    name,
                    format!("{:?} vs {:?}", a.shape(), b.shape()),
                ));
            };
            if a.shape() == b.shape() && kind != Binary::Div {
                let f = match kind {
                    Binary::Add => |x: f64, y: f64| x + y,
                    Binary::Sub => |x: f64, y: f64| x - y,
                    _ => |x: f64, y: f64| x * y,
                };
                let data: Vec<f64> = a
                    .data()
                    .iter()
                    .zip(b.data())
                    .map(|(&x, &y)| f(x, y))
                    .collect();
                Tensor::new(shape, data)?
            } else {
                let at = |t: &Tensor, i: usize| {
                    if t.len() == 1 {
                        t.data()[0]
                    } else {
                        t.data()[i]
                    }
                };
                let mut data = Vec::with_capacity(n);
                for i in 0..n {
                    let (x, y) = (at(&a, i), at(&b, i));
                    data.push(match kind {
                        Binary::Add => x + y,
                        Binary::Sub => x - y,
                        Binary::Mul => x * y,
                        Binary::Div => {
                            if y == 0.0 {
                                return Err(Error::Domain {
                                    op: "div",
                                    index: if b.len() == 1 { 0 } else { i },
                                    value: y,
                                });
                            }
                            x / y
                        }
                    });
                }
                Tensor::new(shape, data)?
            }
        };
        Ok(self.record(
            value,
            Op::Binary(kind, self.id, other.id),
            &[self.id, other.id],
        ))
    }

    pub fn add(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Binary::Add, other)
    }

    pub fn sub(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Binary::Sub, other)
    }

    pub fn mul(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Binary::Mul, other)
    }

    pub fn div(self, other: Var<'t>) -> Result<Var<'t>> {
        self.binary(Binary::Div, other)
    }

    /// Adds a vector of length `cols` to every row of a `rows × cols` matrix.
    pub fn add_row(self, row: Var<'t>) -> Result<Var<'t>> {
        self.check_same_tape(row, "add_row")?;
        let value = {
            let (a, r) = (self.value(), row.value());
            let (_, cols) = a.as_matrix_dims("add_row")?;
            if r.len() != cols {
                return Err(Error::dim(
                    "add_row",
                    format!("{:?} + row {:?}", a.shape(), r.shape()),
                ));
            }
            let mut data = a.data().to_vec();
            for chunk in data.chunks_mut(cols) {
                for (v, b) in chunk.iter_mut().zip(r.data()) {
                    *v += b;
                }
            }
            Tensor::new(a.shape().to_vec(), data)?
        };
        Ok(self.record(value, Op::AddRow(self.id, row.id), &[self.id, row.id]))
    }

    fn unary(self, kind: Unary) -> Result<Var<'t>> {
        let value = {
            let x = self.value();
            let mut data = Vec::with_capacity(x.len());
            for (i, &v) in x.data().iter().enumerate() {
                let y = match kind {
                    Unary::Neg => -v,
                    Unary::Exp => v.exp(),
                    Unary::Log => {
                        if v <= 0.0 || v.is_nan() {
                            return Err(Error::Domain {
                                op: kind.name(),
                                index: i,
                                value: v,
                            });
                        }
                        v.ln()
                    }
                    Unary::Sigmoid => special::sigmoid(v),
                    Unary::Tanh => v.tanh(),
                    Unary::Relu => v.max(0.0),
                    Unary::Lgamma => {
                        if v <= 0.0 || v.is_nan() {
                            return Err(Error::Domain {
                                op: kind.name(),
                                index: i,
                                value: v,
                            });
                        }
                        special::ln_gamma(v)
                    }
                };
                data.push(y);
            }
            Tensor::new(x.shape().to_vec(), data)?
        };
        Ok(self.record(value, Op::Unary(kind, self.id), &[self.id]))
    }

    pub fn neg(self) -> Result<Var<'t>> {
        self.unary(Unary::Neg)
    }

    pub fn exp(self) -> Result<Var<'t>> {
        self.unary(Unary::Exp)
    }

    pub fn log(self) -> Result<Var<'t>> {
        self.unary(Unary::Log)
    }

    pub fn sigmoid(self) -> Result<Var<'t>> {
        self.unary(Unary::Sigmoid)
    }

    pub fn tanh(self) -> Result<Var<'t>> {
        self.unary(Unary::Tanh)
    }

    pub fn relu(self) -> Result<Var<'t>> {
        self.unary(Unary::Relu)
    }

    pub fn softplus(self) -> Result<Var<'t>> {
        let (value, sig) = {
            let x = self.value();
            let (sp, sg): (Vec<f64>, Vec<f64>) = x
                .data()
                .iter()
                .map(|&v| special::softplus_sigmoid(v))
                .unzip();
            (
                Tensor::new(x.shape().to_vec(), sp)?,
                Tensor::new(x.shape().to_vec(), sg)?,
            )
        };
        Ok(self.record(value, Op::Softplus(self.id, sig), &[self.id]))
    }

    /// `ln Γ(x)` elementwise; the backward rule is the digamma function.
    pub fn lgamma(self) -> Result<Var<'t>> {
        self.unary(Unary::Lgamma)
    }

    /// `self + scale * noise` for a constant `noise`: one reparameterized
    /// Gaussian draw with mean `self`.
    pub fn affine_noise(self, scale: Var<'t>, noise: &Tensor) -> Result<Var<'t>> {
        self.check_same_tape(scale, "affine_noise")?;
        let value = {
            let (m, s) = (self.value(), scale.value());
            if m.shape() != s.shape() || m.shape() != noise.shape() {
                return Err(Error::dim(
                    "affine_noise",
                    format!(
                        "mean {:?}, scale {:?}, noise {:?}",
                        m.shape(),
                        s.shape(),
                        noise.shape()
                    ),
                ));
            }
            let data = m
                .data()
                .iter()
                .zip(s.data())
                .zip(noise.data())
                .map(|((&m, &s), &e)| s * e + m)
                .collect();
            Tensor::new(m.shape().to_vec(), data)?
        };
        let op = Op::Affine {
            mean: self.id,
            scale: scale.id,
            noise: noise.clone(),
        };
        Ok(self.record(value, op, &[self.id, scale.id]))
    }

    /// `KL(N(self, sigma²) ‖ N(0, prior_std²))` summed over elements, with
    /// `self` as the mean.
    pub fn gaussian_kl(self, sigma: Var<'t>, prior_std: f64) -> Result<Var<'t>> {
        self.check_same_tape(sigma, "gaussian_kl")?;
        if !(prior_std > 0.0 && prior_std.is_finite()) {
            return Err(Error::InvalidArgument(format!(
                "prior std must be positive, got {prior_std}"
            )));
        }
        let var0 = prior_std * prior_std;
        let (value, dmu, dsigma) = {
            let (mu, sg) = (self.value(), sigma.value());
            if mu.shape() != sg.shape() {
                return Err(Error::dim(
                    "gaussian_kl",
                    format!("mu {:?} vs sigma {:?}", mu.shape(), sg.shape()),
                ));
            }
            let n = mu.len();
            let mut ds = Vec::with_capacity(n);
            let mut quad = 0.0;
            let mut log_sigma = 0.0;
            for (i, &s) in sg.data().iter().enumerate() {
                if !(s > 0.0) {
                    return Err(Error::Domain {
                        op: "gaussian_kl",
                        index: i,
                        value: s,
                    });
                }
                quad += s * s;
                log_sigma += s.ln();
                ds.push(s / var0 - 1.0 / s);
            }
            quad += mu.data().iter().map(|m| m * m).sum::<f64>();
            let kl = quad / (2.0 * var0) - log_sigma + n as f64 * (prior_std.ln() - 0.5);
            (
                Tensor::scalar(kl),
                mu.map(|m| m / var0),
                Tensor::new(sg.shape().to_vec(), ds)?,
            )
        };
        let op = Op::GaussianKl {
            mu: self.id,
            sigma: sigma.id,
            dmu,
            dsigma,
        };
        Ok(self.record(value, op, &[self.id, sigma.id]))
    }

    pub fn scale(self, c: f64) -> Var<'t> {
        let value = self.value().map(|v| v * c);
        self.record(value, Op::Scale(self.id, c), &[self.id])
    }

    pub fn shift(self, c: f64) -> Var<'t> {
        let value = self.value().map(|v| v + c);
        self.record(value, Op::Shift(self.id), &[self.id])
    }

    pub fn square(self) -> Result<Var<'t>> {
        self.mul(self)
    }

    fn reduce(self, kind: Reduce, axis: Option<usize>) -> Result<Var<'t>> {
        let name = match kind {
            Reduce::Sum => "sum",
            Reduce::Mean => "mean",
            Reduce::Max => "max",
        };
        let (value, argmax) = {
            let x = self.value();
            if let Some(ax) = axis {
                if ax >= x.rank() {
                    return Err(Error::dim(
                        name,
                        format!("axis {ax} out of range for shape {:?}", x.shape()),
                    ));
                }
            }
            let (outer, len, inner) = axis_split(x.shape(), axis);
            if len == 0 {
                return Err(Error::Empty(name));
            }
            let mut data = vec![0.0; outer * inner];
            let mut argmax = Vec::new();
            if kind == Reduce::Max {
                argmax = vec![0; outer * inner];
            }
            for o in 0..outer {
                for i in 0..inner {
                    let at = |l: usize| (o * len + l) * inner + i;
                    let slot = o * inner + i;
                    match kind {
                        Reduce::Sum | Reduce::Mean => {
                            let s: f64 = (0..len).map(|l| x.data()[at(l)]).sum();
                            data[slot] = if kind == Reduce::Mean {
                                s / len as f64
                            } else {
                                s
                            };
                        }
                        Reduce::Max => {
                            // Strict comparison keeps the lowest index on ties.
                            let mut best = at(0);
                            for l in 1..len {
                                if x.data()[at(l)] > x.data()[best] {
                                    best = at(l);
                                }
                            }
                            data[slot] = x.data()[best];
                            argmax[slot] = best;
                        }
                    }
                }
            }
            let shape: Vec<usize> = match axis {
                None => Vec::new(),
                Some(ax) => x
                    .shape()
                    .iter()
                    .enumerate()
                    .filter(|&(d, _)| d != ax)
                    .map(|(_, &e)| e)
                    .collect(),
            };
            (Tensor::new(shape, data)?, argmax)
        };
        Ok(self.record(
            value,
            Op::Reduce {
                kind,
                input: self.id,
                axis,
                argmax,
            },
            &[self.id],
        ))
    }

    pub fn sum(self) -> Result<Var<'t>> {
        self.reduce(Reduce::Sum, None)
    }

    pub fn mean(self) -> Result<Var<'t>> {
        self.reduce(Reduce::Mean, None)
    }

    pub fn max(self) -> Result<Var<'t>> {
        self.reduce(Reduce::Max, None)
    }

    pub fn sum_axis(self, axis: usize) -> Result<Var<'t>> {
        self.reduce(Reduce::Sum, Some(axis))
    }

    pub fn mean_axis(self, axis: usize) -> Result<Var<'t>> {
        self.reduce(Reduce::Mean, Some(axis))
    }

    /// Maximum along `axis`; gradient goes to the lowest index among ties.
    pub fn max_axis(self, axis: usize) -> Result<Var<'t>> {
        self.reduce(Reduce::Max, Some(axis))
    }

    /// Softmax over the last axis, computed with max subtraction.
    pub fn softmax(self) -> Result<Var<'t>> {
        let value = row_softmax(&self.value(), false)?;
        Ok(self.record(value, Op::Softmax(self.id), &[self.id]))
    }

    /// Log-softmax over the last axis, without exponentiating first.
    pub fn log_softmax(self) -> Result<Var<'t>> {
        let value = row_softmax(&self.value(), true)?;
        Ok(self.record(value, Op::LogSoftmax(self.id), &[self.id]))
    }

    pub fn reshape(self, shape: impl Into<Vec<usize>>) -> Result<Var<'t>> {
        let value = self.value().reshape(shape)?;
        Ok(self.record(value, Op::Reshape(self.id), &[self.id]))
    }
}
