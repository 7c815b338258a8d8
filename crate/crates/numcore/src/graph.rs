//! Reverse-mode automatic differentiation over a recording tape.
//!
//! A [`Graph`] is a define-by-run tape: every operation appends one node
//! holding its forward value and a record of where its inputs live. Nodes are
//! referenced by [`TensorId`]; since an op can only consume ids that already
//! exist, the recorded graph is acyclic by construction and reverse insertion
//! order is a valid reverse-topological order for backpropagation.
//!
//! A typical training step builds a fresh graph: insert parameter leaves with
//! `trainable = true`, record the forward pass, call [`Graph::backward`] on a
//! scalar loss, then read parameter gradients back with [`Graph::grad`].

use crate::error::{NumError, Result};
use crate::ops::{self, Padding};
use crate::tensor::{Real, Tensor};

/// Numerical floor used when clamping probabilities inside the binary
/// cross-entropy loss, guarding `ln` against 0 and 1.
pub const BCE_EPSILON: f64 = 1e-7;

/// Handle to a node on a [`Graph`] tape.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct TensorId(usize);

/// Pointwise nonlinearity selector.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Activation {
    Relu,
    /// Leaky ReLU with the given negative-side slope (0.2 in this pipeline).
    LeakyRelu(f64),
    Sigmoid,
    Tanh,
}

impl Activation {
    pub fn apply<E: Real>(&self, x: E) -> E {
        match *self {
            Activation::Relu => {
                if x > E::zero() {
                    x
                } else {
                    E::zero()
                }
            }
            Activation::LeakyRelu(a) => {
                if x > E::zero() {
                    x
                } else {
                    E::from_f64(a) * x
                }
            }
            Activation::Sigmoid => {
                // Branch on sign for numerical stability.
                if x >= E::zero() {
                    E::one() / (E::one() + (-x).exp())
                } else {
                    let e = x.exp();
                    e / (E::one() + e)
                }
            }
            Activation::Tanh => x.tanh(),
        }
    }

    /// d(apply)/dx expressed in terms of the saved input `x` and
    /// output `y`. At the ReLU kink (x == 0) the subgradient 0 is used.
    fn derivative<E: Real>(&self, x: E, y: E) -> E {
        match *self {
            Activation::Relu => {
                if x > E::zero() {
                    E::one()
                } else {
                    E::zero()
                }
            }
            Activation::LeakyRelu(a) => {
                if x > E::zero() {
                    E::one()
                } else {
                    E::from_f64(a)
                }
            }
            Activation::Sigmoid => y * (E::one() - y),
            Activation::Tanh => E::one() - y * y,
        }
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Conv2d {
        input: TensorId,
        filters: TensorId,
        stride: (usize, usize),
        padding: Padding,
    },
    Conv2dTranspose {
        input: TensorId,
        filters: TensorId,
        stride: (usize, usize),
        padding: Padding,
    },
    MaxPool2d {
        input: TensorId,
        argmax: Vec<usize>,
    },
    Dense {
        input: TensorId,
        weights: TensorId,
        bias: TensorId,
    },
    BiasAdd {
        input: TensorId,
        bias: TensorId,
    },
    Activation {
        input: TensorId,
        kind: Activation,
    },
    Reshape {
        input: TensorId,
    },
    Add {
        lhs: TensorId,
        rhs: TensorId,
    },
    /// Mean binary cross-entropy of `pred` against the constant `target`.
    /// Gradient flows to `pred` only.
    BceLoss {
        pred: TensorId,
        target: TensorId,
    },
}

struct Node<E: Real> {
    value: Tensor<E>,
    grad: Option<Tensor<E>>,
    needs_grad: bool,
    op: Op,
}

/// Recording tape; see the module docs.
pub struct Graph<E: Real> {
    nodes: Vec<Node<E>>,
}

impl<E: Real> Default for Graph<E> {
    fn default() -> Self {
        Self::new()
    }
}

impl<E: Real> Graph<E> {
    pub fn new() -> Self {
        Graph { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor<E>, needs_grad: bool, op: Op) -> TensorId {
        self.nodes.push(Node {
            value,
            grad: None,
            needs_grad,
            op,
        });
        TensorId(self.nodes.len() - 1)
    }

    fn needs(&self, id: TensorId) -> bool {
        self.nodes[id.0].needs_grad
    }

    /// Insert a leaf value. `trainable` leaves accumulate gradients during
    /// [`Graph::backward`]; constants do not.
    pub fn leaf(&mut self, value: Tensor<E>, trainable: bool) -> TensorId {
        self.push(value, trainable, Op::Leaf)
    }

    pub fn constant(&mut self, value: Tensor<E>) -> TensorId {
        self.leaf(value, false)
    }

    pub fn value(&self, id: TensorId) -> &Tensor<E> {
        &self.nodes[id.0].value
    }

    /// Gradient accumulated at `id` by the most recent backward pass.
    pub fn grad(&self, id: TensorId) -> Option<&Tensor<E>> {
        self.nodes[id.0].grad.as_ref()
    }

    pub fn conv2d(
        &mut self,
        input: TensorId,
        filters: TensorId,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<TensorId> {
        let value = ops::conv2d_forward(self.value(input), self.value(filters), stride, padding)?;
        let needs = self.needs(input) || self.needs(filters);
        Ok(self.push(
            value,
            needs,
            Op::Conv2d {
                input,
                filters,
                stride,
                padding,
            },
        ))
    }

    pub fn conv2d_transpose(
        &mut self,
        input: TensorId,
        filters: TensorId,
        stride: (usize, usize),
        padding: Padding,
    ) -> Result<TensorId> {
        let value =
            ops::conv2d_transpose_forward(self.value(input), self.value(filters), stride, padding)?;
        let needs = self.needs(input) || self.needs(filters);
        Ok(self.push(
            value,
            needs,
            Op::Conv2dTranspose {
                input,
                filters,
                stride,
                padding,
            },
        ))
    }

    pub fn maxpool2d(
        &mut self,
        input: TensorId,
        window: (usize, usize),
        stride: (usize, usize),
    ) -> Result<TensorId> {
        let (value, argmax) = ops::maxpool2d_forward(self.value(input), window, stride)?;
        let needs = self.needs(input);
        Ok(self.push(value, needs, Op::MaxPool2d { input, argmax }))
    }

    pub fn dense(&mut self, input: TensorId, weights: TensorId, bias: TensorId) -> Result<TensorId> {
        let value = ops::dense_forward(self.value(input), self.value(weights), self.value(bias))?;
        let needs = self.needs(input) || self.needs(weights) || self.needs(bias);
        Ok(self.push(
            value,
            needs,
            Op::Dense {
                input,
                weights,
                bias,
            },
        ))
    }

    pub fn bias_add(&mut self, input: TensorId, bias: TensorId) -> Result<TensorId> {
        let value = ops::bias_add(self.value(input), self.value(bias))?;
        let needs = self.needs(input) || self.needs(bias);
        Ok(self.push(value, needs, Op::BiasAdd { input, bias }))
    }

    pub fn activation(&mut self, input: TensorId, kind: Activation) -> TensorId {
        let value = self.value(input).map(|x| kind.apply(x));
        let needs = self.needs(input);
        self.push(value, needs, Op::Activation { input, kind })
    }

    pub fn reshape(&mut self, input: TensorId, shape: &[usize]) -> Result<TensorId> {
        let value = self.value(input).reshaped(shape)?;
        let needs = self.needs(input);
        Ok(self.push(value, needs, Op::Reshape { input }))
    }

    /// Collapse `[H,W,C]` to `[H*W*C]` or `[N,H,W,C]` to `[N, H*W*C]`.
    pub fn flatten(&mut self, input: TensorId) -> Result<TensorId> {
        let shape = self.value(input).shape().to_vec();
        let flat = match shape.len() {
            0 | 1 => shape.clone(),
            2 => shape.clone(),
            _ => vec![shape[0], shape[1..].iter().product()],
        };
        // Rank 3 is an unbatched image: flatten fully.
        let flat = if shape.len() == 3 {
            vec![shape.iter().product()]
        } else {
            flat
        };
        self.reshape(input, &flat)
    }

    pub fn add(&mut self, lhs: TensorId, rhs: TensorId) -> Result<TensorId> {
        let value = self.value(lhs).add(self.value(rhs))?;
        let needs = self.needs(lhs) || self.needs(rhs);
        Ok(self.push(value, needs, Op::Add { lhs, rhs }))
    }

    /// Mean binary cross-entropy over every element of `pred` against the
    /// same-shaped constant `target`; predictions are clamped to
    /// `[BCE_EPSILON, 1 - BCE_EPSILON]` before the logs. Returns a rank-0
    /// scalar node. Gradient propagates to `pred` only (targets are labels).
    pub fn bce_loss(&mut self, pred: TensorId, target: TensorId) -> Result<TensorId> {
        let value = bce_value(self.value(pred), self.value(target))?;
        let needs = self.needs(pred);
        Ok(self.push(value, needs, Op::BceLoss { pred, target }))
    }

    /// Backpropagate from the scalar node `loss`, accumulating gradients into
    /// every node on a path from a trainable leaf to the loss.
    pub fn backward(&mut self, loss: TensorId) -> Result<()> {
        if self.nodes[loss.0].value.len() != 1 {
            return Err(NumError::NonScalarLoss {
                shape: self.nodes[loss.0].value.shape().to_vec(),
            });
        }
        for node in &mut self.nodes {
            node.grad = None;
        }
        let seed = Tensor::filled(self.nodes[loss.0].value.shape(), E::one());
        self.nodes[loss.0].grad = Some(seed);

        for id in (0..=loss.0).rev() {
            if self.nodes[id].grad.is_none() || !self.nodes[id].needs_grad {
                continue;
            }
            let grad = self.nodes[id].grad.clone().expect("checked above");
            let op = self.nodes[id].op.clone();
            match op {
                Op::Leaf => {}
                Op::Conv2d {
                    input,
                    filters,
                    stride,
                    padding,
                } => {
                    if self.needs(input) {
                        let shape = self.value(input).shape();
                        let hw = (shape[shape.len() - 3], shape[shape.len() - 2]);
                        let g = ops::conv2d_input_vjp(
                            &grad,
                            self.value(filters),
                            stride,
                            padding,
                            hw,
                        )?;
                        self.accumulate(input, g)?;
                    }
                    if self.needs(filters) {
                        let fs = self.value(filters).shape();
                        let g = ops::conv2d_filter_vjp(
                            self.value(input),
                            &grad,
                            stride,
                            padding,
                            (fs[0], fs[1]),
                        )?;
                        self.accumulate(filters, g)?;
                    }
                }
                Op::Conv2dTranspose {
                    input,
                    filters,
                    stride,
                    padding,
                } => {
                    // Adjoint of the adjoint: input grad is a plain forward
                    // convolution of the cotangent.
                    if self.needs(input) {
                        let g = ops::conv2d_forward(&grad, self.value(filters), stride, padding)?;
                        self.accumulate(input, g)?;
                    }
                    if self.needs(filters) {
                        let fs = self.value(filters).shape();
                        let g = ops::conv2d_filter_vjp(
                            &grad,
                            self.value(input),
                            stride,
                            padding,
                            (fs[0], fs[1]),
                        )?;
                        self.accumulate(filters, g)?;
                    }
                }
                Op::MaxPool2d { input, argmax } => {
                    let g = ops::maxpool2d_backward(&grad, &argmax, self.value(input).shape())?;
                    self.accumulate(input, g)?;
                }
                Op::Dense {
                    input,
                    weights,
                    bias,
                } => {
                    self.dense_backward(&grad, input, weights, bias)?;
                }
                Op::BiasAdd { input, bias } => {
                    if self.needs(input) {
                        self.accumulate(input, grad.clone())?;
                    }
                    if self.needs(bias) {
                        let c = *grad.shape().last().expect("bias_add output rank");
                        let mut bg = vec![E::zero(); c];
                        for (i, &g) in grad.data().iter().enumerate() {
                            bg[i % c] = bg[i % c] + g;
                        }
                        self.accumulate(bias, Tensor::from_vec(&[c], bg)?)?;
                    }
                }
                Op::Activation { input, kind } => {
                    let x = self.value(input);
                    let y = &self.nodes[id].value;
                    let data = grad
                        .data()
                        .iter()
                        .zip(x.data().iter().zip(y.data()))
                        .map(|(&g, (&xv, &yv))| g * kind.derivative(xv, yv))
                        .collect();
                    let g = Tensor::from_vec(x.shape(), data)?;
                    self.accumulate(input, g)?;
                }
                Op::Reshape { input } => {
                    let g = grad.reshaped(self.value(input).shape())?;
                    self.accumulate(input, g)?;
                }
                Op::Add { lhs, rhs } => {
                    if self.needs(lhs) {
                        self.accumulate(lhs, grad.clone())?;
                    }
                    if self.needs(rhs) {
                        self.accumulate(rhs, grad.clone())?;
                    }
                }
                Op::BceLoss { pred, target } => {
                    if self.needs(pred) {
                        let g = bce_pred_grad(self.value(pred), self.value(target), grad.item())?;
                        self.accumulate(pred, g)?;
                    }
                }
            }
        }
        Ok(())
    }

    fn accumulate(&mut self, id: TensorId, g: Tensor<E>) -> Result<()> {
        match &mut self.nodes[id.0].grad {
            Some(existing) => existing.add_assign(&g),
            slot @ None => {
                *slot = Some(g);
                Ok(())
            }
        }
    }

    fn dense_backward(
        &mut self,
        grad: &Tensor<E>,
        input: TensorId,
        weights: TensorId,
        bias: TensorId,
    ) -> Result<()> {
        let x = self.value(input).clone();
        let w = self.value(weights).clone();
        let (batch, din) = match *x.shape() {
            [d] => (1, d),
            [b, d] => (b, d),
            _ => unreachable!("dense input rank validated at forward"),
        };
        let dout = w.shape()[1];
        let g = grad.data();

        if self.needs(input) {
            // x_grad = g . W^T
            let mut xg = vec![E::zero(); batch * din];
            for b in 0..batch {
                let grow = &g[b * dout..(b + 1) * dout];
                let xrow = &mut xg[b * din..(b + 1) * din];
                for (i, xgi) in xrow.iter_mut().enumerate() {
                    let wrow = &w.data()[i * dout..(i + 1) * dout];
                    let mut s = E::zero();
                    for (&gv, &wv) in grow.iter().zip(wrow) {
                        s = s + gv * wv;
                    }
                    *xgi = s;
                }
            }
            self.accumulate(input, Tensor::from_vec(x.shape(), xg)?)?;
        }
        if self.needs(weights) {
            // w_grad = x^T . g
            let mut wg = vec![E::zero(); din * dout];
            for b in 0..batch {
                let xrow = &x.data()[b * din..(b + 1) * din];
                let grow = &g[b * dout..(b + 1) * dout];
                for (i, &xv) in xrow.iter().enumerate() {
                    let wrow = &mut wg[i * dout..(i + 1) * dout];
                    for (wgi, &gv) in wrow.iter_mut().zip(grow) {
                        *wgi = *wgi + xv * gv;
                    }
                }
            }
            self.accumulate(weights, Tensor::from_vec(w.shape(), wg)?)?;
        }
        if self.needs(bias) {
            let mut bg = vec![E::zero(); dout];
            for b in 0..batch {
                let grow = &g[b * dout..(b + 1) * dout];
                for (bgi, &gv) in bg.iter_mut().zip(grow) {
                    *bgi = *bgi + gv;
                }
            }
            self.accumulate(bias, Tensor::from_vec(&[dout], bg)?)?;
        }
        Ok(())
    }
}

/// Mean binary cross-entropy as a plain value (shared by the graph op and by
/// loss reporting): `-(1/n) sum[t ln p + (1-t) ln(1-p)]` with `p` clamped to
/// `[BCE_EPSILON, 1-BCE_EPSILON]`.
pub fn bce_value<E: Real>(pred: &Tensor<E>, target: &Tensor<E>) -> Result<Tensor<E>> {
    if pred.shape() != target.shape() {
        return Err(NumError::ShapeMismatch {
            context: "bce_loss",
            expected: pred.shape().to_vec(),
            got: target.shape().to_vec(),
        });
    }
    if pred.is_empty() {
        return Err(NumError::NonPositive {
            context: "bce_loss",
            what: "element count",
        });
    }
    let lo = E::from_f64(BCE_EPSILON);
    let hi = E::one() - lo;
    let mut acc = 0.0f64;
    for (&p, &t) in pred.data().iter().zip(target.data()) {
        let p = p.max(lo).min(hi).to64();
        let t = t.to64();
        acc -= t * p.ln() + (1.0 - t) * (1.0 - p).ln();
    }
    Ok(Tensor::scalar(E::from_f64(acc / pred.len() as f64)))
}

fn bce_pred_grad<E: Real>(pred: &Tensor<E>, target: &Tensor<E>, upstream: E) -> Result<Tensor<E>> {
    let lo = E::from_f64(BCE_EPSILON);
    let hi = E::one() - lo;
    let n = E::from_f64(pred.len() as f64);
    let data = pred
        .data()
        .iter()
        .zip(target.data())
        .map(|(&p, &t)| {
            if p < lo || p > hi {
                // Clamp active: d(clamp)/dp = 0.
                E::zero()
            } else {
                upstream * (-t / p + (E::one() - t) / (E::one() - p)) / n
            }
        })
        .collect();
    Tensor::from_vec(pred.shape(), data)
}
