//! Reverse-mode differentiation over a graph of dense tensors.
//!
//! A [`Graph`] records nodes in creation order, which is always a valid
//! topological order, so [`Graph::backward`] is a single reverse sweep.
//! Leaves are either parameters (gradient tracked) or constants. Gradients
//! accumulate additively into every node until [`Graph::zero_grad`] is called.
//!
//! Elementwise binary operations accept equal shapes or a one-element operand
//! broadcast against an array; nothing else is broadcast. Model-specific
//! kernels (spline bases, grouped rationals, convolutions) plug in through the
//! [`Function`] trait.
//!
//! ```
//! use grkan_core::autodiff::Graph;
//! use grkan_core::Tensor;
//!
//! let mut g = Graph::new();
//! let x = g.param(Tensor::scalar(3.0));
//! let y = g.mul(x, x).unwrap();
//! g.backward(y).unwrap();
//! assert_eq!(g.grad(x).data(), &[6.0]);
//! ```

mod check;

#[allow(unused_imports)]
use num_traits::Float;
use alloc::boxed::Box;
use alloc::vec;
use alloc::vec::Vec;

pub use check::{check_graph_gradients, finite_diff_check};

use crate::{Error, Result, Tensor};

/// Handle to a node of a [`Graph`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// A differentiable kernel with a hand-written vector-Jacobian product.
pub trait Function {
    fn name(&self) -> &'static str;

    fn forward(&self, inputs: &[&Tensor]) -> Result<Tensor>;

    /// Returns `∂L/∂input` for each input given `grad = ∂L/∂output`.
    /// Entries whose `needs_grad` flag is false may be `None`.
    fn backward(
        &self,
        inputs: &[&Tensor],
        output: &Tensor,
        grad: &[f64],
        needs_grad: &[bool],
    ) -> Vec<Option<Vec<f64>>>;
}

#[derive(Debug, Clone, Copy)]
enum BinaryOp {
    Add,
    Sub,
    Mul,
    Div,
}

#[derive(Debug, Clone, Copy)]
enum UnaryOp {
    Neg,
    PowI(i32),
    PowF(f64),
    Exp,
    Tanh,
    Abs,
    MaxConst(f64),
    Scale(f64),
    AddConst(f64),
}

enum Op {
    Leaf,
    Binary(BinaryOp, NodeId, NodeId),
    Unary(UnaryOp, NodeId),
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    AddBias(NodeId, NodeId),
    Sum(NodeId),
    Mean(NodeId),
    Reshape(NodeId),
    Custom(Box<dyn Function>, Vec<NodeId>),
}

struct Node {
    value: Tensor,
    grad: Tensor,
    op: Op,
    requires_grad: bool,
}

/// A computation graph. Confined to one thread; build a fresh graph per step.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

impl Graph {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        let grad = Tensor::zeros(value.shape());
        self.nodes.push(Node {
            value,
            grad,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    /// A leaf whose gradient is tracked.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn grad(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].grad
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.rg(id)
    }

    pub fn is_leaf(&self, id: NodeId) -> bool {
        matches!(self.nodes[id.0].op, Op::Leaf)
    }

    pub fn zero_grad(&mut self) {
        for n in &mut self.nodes {
            n.grad.data_mut().fill(0.0);
        }
    }

    fn binary(&mut self, op: BinaryOp, name: &'static str, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let f = |x: f64, y: f64| match op {
            BinaryOp::Add => x + y,
            BinaryOp::Sub => x - y,
            BinaryOp::Mul => x * y,
            BinaryOp::Div => x / y,
        };
        let value = if va.shape() == vb.shape() {
            let data = va.data().iter().zip(vb.data()).map(|(&x, &y)| f(x, y)).collect();
            Tensor::new(va.shape().to_vec(), data)?
        } else if vb.is_scalar() {
            let y = vb.data()[0];
            va.map(|x| f(x, y))
        } else if va.is_scalar() {
            let x = va.data()[0];
            vb.map(|y| f(x, y))
        } else {
            return Err(Error::ShapeMismatch {
                op: name,
                lhs: va.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        };
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::Binary(op, a, b), rg))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Add, "add", a, b)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Sub, "sub", a, b)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Mul, "mul", a, b)
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(BinaryOp::Div, "div", a, b)
    }

    fn unary(&mut self, op: UnaryOp, a: NodeId) -> NodeId {
        let value = self.value(a).map(|x| match op {
            UnaryOp::Neg => -x,
            UnaryOp::PowI(n) => x.powi(n),
            UnaryOp::PowF(p) => x.powf(p),
            UnaryOp::Exp => x.exp(),
            UnaryOp::Tanh => x.tanh(),
            UnaryOp::Abs => x.abs(),
            UnaryOp::MaxConst(c) => x.max(c),
            UnaryOp::Scale(s) => x * s,
            UnaryOp::AddConst(c) => x + c,
        });
        let rg = self.rg(a);
        self.push(value, Op::Unary(op, a), rg)
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Neg, a)
    }

    pub fn powi(&mut self, a: NodeId, n: i32) -> NodeId {
        self.unary(UnaryOp::PowI(n), a)
    }

    pub fn powf(&mut self, a: NodeId, p: f64) -> NodeId {
        self.unary(UnaryOp::PowF(p), a)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Exp, a)
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Tanh, a)
    }

    /// Absolute value; the subgradient at zero is zero.
    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(UnaryOp::Abs, a)
    }

    /// `max(x, c)`; the gradient is passed only where `x > c`.
    pub fn max_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(UnaryOp::MaxConst(c), a)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        self.unary(UnaryOp::Scale(s), a)
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(UnaryOp::AddConst(c), a)
    }

    /// Matrix product `[n, k] × [k, m]` or matrix-vector `[n, k] × [k]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (va, vb) = (self.value(a), self.value(b));
        let mismatch = || Error::ShapeMismatch {
            op: "matmul",
            lhs: va.shape().to_vec(),
            rhs: vb.shape().to_vec(),
        };
        let &[n, k] = va.shape() else {
            return Err(mismatch());
        };
        let (k2, m, out_shape) = match *vb.shape() {
            [k2, m] => (k2, m, vec![n, m]),
            [k2] => (k2, 1, vec![n]),
            _ => return Err(mismatch()),
        };
        if k != k2 {
            return Err(mismatch());
        }
        let mut out = vec![0.0; n * m];
        matmul_into(va.data(), vb.data(), &mut out, n, k, m);
        let value = Tensor::new(out_shape, out)?;
        let rg = self.rg(a) || self.rg(b);
        Ok(self.push(value, Op::MatMul(a, b), rg))
    }

    pub fn transpose(&mut self, a: NodeId) -> Result<NodeId> {
        let va = self.value(a);
        let &[r, c] = va.shape() else {
            return Err(Error::ShapeMismatch {
                op: "transpose",
                lhs: va.shape().to_vec(),
                rhs: Vec::new(),
            });
        };
        let value = Tensor::new(vec![c, r], transpose_data(va.data(), r, c))?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Transpose(a), rg))
    }

    /// Adds a bias vector along the last axis.
    pub fn add_bias(&mut self, x: NodeId, bias: NodeId) -> Result<NodeId> {
        let (vx, vb) = (self.value(x), self.value(bias));
        let last = vx.shape().last().copied().unwrap_or(0);
        if vb.shape() != [last] {
            return Err(Error::ShapeMismatch {
                op: "add_bias",
                lhs: vx.shape().to_vec(),
                rhs: vb.shape().to_vec(),
            });
        }
        let mut value = vx.clone();
        for row in value.data_mut().chunks_mut(last) {
            for (v, b) in row.iter_mut().zip(vb.data()) {
                *v += *b;
            }
        }
        let rg = self.rg(x) || self.rg(bias);
        Ok(self.push(value, Op::AddBias(x, bias), rg))
    }

    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let s = self.value(a).data().iter().sum();
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Sum(a), rg)
    }

    pub fn mean(&mut self, a: NodeId) -> NodeId {
        let v = self.value(a);
        let s = v.data().iter().sum::<f64>() / v.numel() as f64;
        let rg = self.rg(a);
        self.push(Tensor::scalar(s), Op::Mean(a), rg)
    }

    pub fn reshape(&mut self, a: NodeId, shape: &[usize]) -> Result<NodeId> {
        let value = self.value(a).clone().reshape(shape)?;
        let rg = self.rg(a);
        Ok(self.push(value, Op::Reshape(a), rg))
    }

    /// Applies a custom kernel.
    pub fn apply<F: Function + 'static>(&mut self, f: F, inputs: &[NodeId]) -> Result<NodeId> {
        let vals: Vec<&Tensor> = inputs.iter().map(|&i| self.value(i)).collect();
        let value = f.forward(&vals)?;
        let rg = inputs.iter().any(|&i| self.rg(i));
        Ok(self.push(value, Op::Custom(Box::new(f), inputs.to_vec()), rg))
    }

    /// Accumulates `∂root/∂node` into every node reachable from `root`.
    pub fn backward(&mut self, root: NodeId) -> Result<()> {
        let rv = self.value(root);
        if !rv.is_scalar() {
            return Err(Error::NonScalarRoot(rv.shape().to_vec()));
        }
        let mut adj: Vec<Option<Vec<f64>>> = (0..=root.0).map(|_| None).collect();
        adj[root.0] = Some(vec![1.0]);
        for i in (0..=root.0).rev() {
            let Some(g) = adj[i].take() else { continue };
            if !self.nodes[i].requires_grad {
                continue;
            }
            self.propagate(i, &g, &mut adj);
            self.nodes[i].grad.add_assign_slice(&g);
        }
        Ok(())
    }

    fn propagate(&self, i: usize, g: &[f64], adj: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[i];
        match &node.op {
            Op::Leaf => {}
            &Op::Binary(op, a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let n = g.len();
                let at = |t: &Tensor, j: usize| if t.numel() == n { t.data()[j] } else { t.data()[0] };
                let (mut ga, mut gb) = (vec![0.0; n], vec![0.0; n]);
                for j in 0..n {
                    let (x, y) = (at(va, j), at(vb, j));
                    let (dx, dy) = match op {
                        BinaryOp::Add => (1.0, 1.0),
                        BinaryOp::Sub => (1.0, -1.0),
                        BinaryOp::Mul => (y, x),
                        BinaryOp::Div => (1.0 / y, -x / (y * y)),
                    };
                    ga[j] = g[j] * dx;
                    gb[j] = g[j] * dy;
                }
                if self.rg(a) {
                    accumulate(adj, a, reduce_broadcast(ga, va.numel()));
                }
                if self.rg(b) {
                    accumulate(adj, b, reduce_broadcast(gb, vb.numel()));
                }
            }
            &Op::Unary(op, a) => {
                let x = self.value(a).data();
                let y = node.value.data();
                let ga = (0..g.len())
                    .map(|j| {
                        let d = match op {
                            UnaryOp::Neg => -1.0,
                            UnaryOp::PowI(0) => 0.0,
                            UnaryOp::PowI(n) => n as f64 * x[j].powi(n - 1),
                            UnaryOp::PowF(p) => p * x[j].powf(p - 1.0),
                            UnaryOp::Exp => y[j],
                            UnaryOp::Tanh => 1.0 - y[j] * y[j],
                            UnaryOp::Abs => sign(x[j]),
                            UnaryOp::MaxConst(c) => {
                                if x[j] > c {
                                    1.0
                                } else {
                                    0.0
                                }
                            }
                            UnaryOp::Scale(s) => s,
                            UnaryOp::AddConst(_) => 1.0,
                        };
                        g[j] * d
                    })
                    .collect();
                accumulate(adj, a, ga);
            }
            &Op::MatMul(a, b) => {
                let (va, vb) = (self.value(a), self.value(b));
                let (n, k) = (va.shape()[0], va.shape()[1]);
                let m = vb.numel() / k;
                if self.rg(a) {
                    // dA = G · Bᵀ
                    let bt = transpose_data(vb.data(), k, m);
                    let mut ga = vec![0.0; n * k];
                    matmul_into(g, &bt, &mut ga, n, m, k);
                    accumulate(adj, a, ga);
                }
                if self.rg(b) {
                    // dB = Aᵀ · G
                    let at = transpose_data(va.data(), n, k);
                    let mut gb = vec![0.0; k * m];
                    matmul_into(&at, g, &mut gb, k, n, m);
                    accumulate(adj, b, gb);
                }
            }
            &Op::Transpose(a) => {
                let s = node.value.shape();
                accumulate(adj, a, transpose_data(g, s[0], s[1]));
            }
            &Op::AddBias(x, bias) => {
                if self.rg(x) {
                    accumulate(adj, x, g.to_vec());
                }
                if self.rg(bias) {
                    let m = self.value(bias).numel();
                    let mut gb = vec![0.0; m];
                    for row in g.chunks(m) {
                        for (acc, v) in gb.iter_mut().zip(row) {
                            *acc += *v;
                        }
                    }
                    accumulate(adj, bias, gb);
                }
            }
            &Op::Sum(a) => {
                accumulate(adj, a, vec![g[0]; self.value(a).numel()]);
            }
            &Op::Mean(a) => {
                let n = self.value(a).numel();
                accumulate(adj, a, vec![g[0] / n as f64; n]);
            }
            &Op::Reshape(a) => accumulate(adj, a, g.to_vec()),
            Op::Custom(f, inputs) => {
                let vals: Vec<&Tensor> = inputs.iter().map(|&j| self.value(j)).collect();
                let needs: Vec<bool> = inputs.iter().map(|&j| self.rg(j)).collect();
                let grads = f.backward(&vals, &node.value, g, &needs);
                for ((&id, need), gi) in inputs.iter().zip(needs).zip(grads) {
                    if let (true, Some(gi)) = (need, gi) {
                        accumulate(adj, id, gi);
                    }
                }
            }
        }
    }
}

fn accumulate(adj: &mut [Option<Vec<f64>>], id: NodeId, g: Vec<f64>) {
    match &mut adj[id.0] {
        Some(existing) => {
            for (a, b) in existing.iter_mut().zip(&g) {
                *a += *b;
            }
        }
        slot @ None => *slot = Some(g),
    }
}

fn reduce_broadcast(g: Vec<f64>, numel: usize) -> Vec<f64> {
    if numel == g.len() {
        g
    } else {
        vec![g.iter().sum()]
    }
}

/// Sign with `sign(0) = 0`.
pub(crate) fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

/// `out[n×m] = a[n×k] · b[k×m]`, overwriting `out`.
pub(crate) fn matmul_into(a: &[f64], b: &[f64], out: &mut [f64], n: usize, k: usize, m: usize) {
    out.fill(0.0);
    for i in 0..n {
        let row = &mut out[i * m..(i + 1) * m];
        for p in 0..k {
            let aip = a[i * k + p];
            for (o, &bv) in row.iter_mut().zip(&b[p * m..(p + 1) * m]) {
                *o += aip * bv;
            }
        }
    }
}

pub(crate) fn transpose_data(data: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for r in 0..rows {
        for c in 0..cols {
            out[c * rows + r] = data[r * cols + c];
        }
    }
    out
}
