//! Tape-based reverse-mode differentiation over rank-2 tensors.
//!
//! Nodes are appended to a [`Graph`] in evaluation order, so a reverse
//! sweep over the node list is a valid topological order. The op set is
//! exactly what the training losses need: matmul, transpose, elementwise
//! arithmetic, row/column broadcasts, `exp`, `log`, ReLU, clamping, row-wise
//! log-sum-exp, reductions and reshape.
//!
//! Graph builders panic on shape mismatches; callers validate shapes at
//! their own API boundary.
//!
//! ```
//! use plsp_core::autodiff::Graph;
//! use plsp_core::tensor::Tensor;
//!
//! let mut g = Graph::new();
//! let w = g.param(Tensor::from_vec(1, 2, vec![1.0, 2.0]));
//! let sq = g.mul(w, w);
//! let loss = g.sum(sq);
//! let grads = g.backward(loss).unwrap();
//! assert_eq!(grads.get(w).unwrap().data(), &[2.0, 4.0]);
//! ```

use alloc::vec;
use alloc::vec::Vec;

use crate::error::{Error, Result};
use crate::tensor::{matmul_nt, matmul_raw, matmul_tn, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    AddRow(NodeId, NodeId),
    SubCol(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Relu(NodeId),
    ClampMin(NodeId, f64),
    RowLogSumExp(NodeId),
    SumRows(NodeId),
    Sum(NodeId),
    Reshape(NodeId),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

#[derive(Debug, Default, Clone)]
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

    /// Drops every node; previously issued ids become invalid.
    pub fn reset(&mut self) {
        self.nodes.clear();
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> NodeId {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        NodeId(self.nodes.len() - 1)
    }

    fn rg(&self, id: NodeId) -> bool {
        self.nodes[id.0].requires_grad
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn requires_grad(&self, id: NodeId) -> bool {
        self.rg(id)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, true)
    }

    /// A leaf that never receives gradients.
    pub fn constant(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf, false)
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.cols(), vb.rows(), "matmul shape mismatch");
        let out = matmul_raw(va, vb);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::MatMul(a, b), rg)
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).transpose();
        let rg = self.rg(a);
        self.push(out, Op::Transpose(a), rg)
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.binary(a, b, |x, y| x + y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Add(a, b), rg)
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.binary(a, b, |x, y| x - y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Sub(a, b), rg)
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> NodeId {
        let out = self.binary(a, b, |x, y| x * y);
        let rg = self.rg(a) || self.rg(b);
        self.push(out, Op::Mul(a, b), rg)
    }

    fn binary(&self, a: NodeId, b: NodeId, f: impl Fn(f64, f64) -> f64) -> Tensor {
        let (va, vb) = (self.value(a), self.value(b));
        assert_eq!(va.shape(), vb.shape(), "elementwise shape mismatch");
        va.zip_map(vb, f)
    }

    /// `a (r×c) + row (1×c)` broadcast over rows.
    pub fn add_row(&mut self, a: NodeId, row: NodeId) -> NodeId {
        let (va, vr) = (self.value(a), self.value(row));
        assert_eq!(vr.shape(), [1, va.cols()], "row broadcast shape mismatch");
        let mut out = va.clone();
        for r in 0..out.rows() {
            for (o, b) in out.row_mut(r).iter_mut().zip(vr.data()) {
                *o += b;
            }
        }
        let rg = self.rg(a) || self.rg(row);
        self.push(out, Op::AddRow(a, row), rg)
    }

    /// `a (r×c) − col (r×1)` broadcast over columns.
    pub fn sub_col(&mut self, a: NodeId, col: NodeId) -> NodeId {
        let (va, vc) = (self.value(a), self.value(col));
        assert_eq!(vc.shape(), [va.rows(), 1], "column broadcast shape mismatch");
        let mut out = va.clone();
        for r in 0..out.rows() {
            let c = vc.data()[r];
            for o in out.row_mut(r) {
                *o -= c;
            }
        }
        let rg = self.rg(a) || self.rg(col);
        self.push(out, Op::SubCol(a, col), rg)
    }

    pub fn scale(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = self.value(a).map(|x| x * s);
        let rg = self.rg(a);
        self.push(out, Op::Scale(a, s), rg)
    }

    pub fn add_scalar(&mut self, a: NodeId, s: f64) -> NodeId {
        let out = self.value(a).map(|x| x + s);
        let rg = self.rg(a);
        self.push(out, Op::AddScalar(a), rg)
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(libm::exp);
        let rg = self.rg(a);
        self.push(out, Op::Exp(a), rg)
    }

    pub fn log(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(libm::log);
        let rg = self.rg(a);
        self.push(out, Op::Log(a), rg)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        let out = self.value(a).map(|x| x.max(0.0));
        let rg = self.rg(a);
        self.push(out, Op::Relu(a), rg)
    }

    /// `max(a, floor)` elementwise; clamped entries pass no gradient.
    pub fn clamp_min(&mut self, a: NodeId, floor: f64) -> NodeId {
        let out = self.value(a).map(|x| x.max(floor));
        let rg = self.rg(a);
        self.push(out, Op::ClampMin(a, floor), rg)
    }

    /// Row-wise max-shifted log-sum-exp: `r×c → r×1`.
    pub fn row_logsumexp(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data: Vec<f64> = (0..va.rows())
            .map(|r| crate::math::logsumexp_unchecked(va.row(r)))
            .collect();
        let out = Tensor::from_vec(va.rows(), 1, data);
        let rg = self.rg(a);
        self.push(out, Op::RowLogSumExp(a), rg)
    }

    /// Row sums: `r×c → r×1`.
    pub fn sum_rows(&mut self, a: NodeId) -> NodeId {
        let va = self.value(a);
        let data: Vec<f64> = (0..va.rows()).map(|r| va.row(r).iter().sum()).collect();
        let out = Tensor::from_vec(va.rows(), 1, data);
        let rg = self.rg(a);
        self.push(out, Op::SumRows(a), rg)
    }

    /// Sum of all entries as a `1×1` node.
    pub fn sum(&mut self, a: NodeId) -> NodeId {
        let out = Tensor::scalar(self.value(a).sum());
        let rg = self.rg(a);
        self.push(out, Op::Sum(a), rg)
    }

    pub fn reshape(&mut self, a: NodeId, rows: usize, cols: usize) -> NodeId {
        let out = self.value(a).clone().reshaped(rows, cols);
        let rg = self.rg(a);
        self.push(out, Op::Reshape(a), rg)
    }

    /// `log_softmax` over each row, composed from the primitive ops.
    pub fn log_softmax_rows(&mut self, logits: NodeId) -> NodeId {
        let lse = self.row_logsumexp(logits);
        self.sub_col(logits, lse)
    }

    /// Propagates gradients from a scalar `root` back through the graph.
    pub fn backward(&self, root: NodeId) -> Result<Gradients> {
        let shape = self.value(root).shape();
        if shape != [1, 1] {
            return Err(Error::NonScalarRoot { shape });
        }
        let mut grads: Vec<Option<Tensor>> = vec![None; self.nodes.len()];
        grads[root.0] = Some(Tensor::scalar(1.0));

        for idx in (0..=root.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            if !node.requires_grad {
                continue;
            }
            self.propagate(&node.op, &node.value, &g, &mut grads);
            grads[idx] = Some(g);
        }

        for (i, node) in self.nodes.iter().enumerate() {
            if node.requires_grad && grads[i].is_none() {
                let [r, c] = node.value.shape();
                grads[i] = Some(Tensor::zeros(r, c));
            }
            if !node.requires_grad {
                grads[i] = None;
            }
        }
        Ok(Gradients { grads })
    }

    fn propagate(&self, op: &Op, out: &Tensor, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let mut acc = |id: NodeId, contribution: Tensor| {
            if !self.rg(id) {
                return;
            }
            match &mut grads[id.0] {
                Some(existing) => existing.add_assign(&contribution),
                slot @ None => *slot = Some(contribution),
            }
        };
        match *op {
            Op::Leaf => {}
            Op::MatMul(a, b) => {
                if self.rg(a) {
                    acc(a, matmul_nt(g, self.value(b)));
                }
                if self.rg(b) {
                    acc(b, matmul_tn(self.value(a), g));
                }
            }
            Op::Transpose(a) => acc(a, g.transpose()),
            Op::Add(a, b) => {
                acc(a, g.clone());
                acc(b, g.clone());
            }
            Op::Sub(a, b) => {
                acc(a, g.clone());
                acc(b, g.map(|v| -v));
            }
            Op::Mul(a, b) => {
                if self.rg(a) {
                    acc(a, g.zip_map(self.value(b), |x, y| x * y));
                }
                if self.rg(b) {
                    acc(b, g.zip_map(self.value(a), |x, y| x * y));
                }
            }
            Op::AddRow(a, row) => {
                acc(a, g.clone());
                if self.rg(row) {
                    let mut col_sums = Tensor::zeros(1, g.cols());
                    for r in 0..g.rows() {
                        for (s, v) in col_sums.data_mut().iter_mut().zip(g.row(r)) {
                            *s += v;
                        }
                    }
                    acc(row, col_sums);
                }
            }
            Op::SubCol(a, col) => {
                acc(a, g.clone());
                if self.rg(col) {
                    let data = (0..g.rows()).map(|r| -g.row(r).iter().sum::<f64>());
                    acc(col, Tensor::from_vec(g.rows(), 1, data.collect()));
                }
            }
            Op::Scale(a, s) => acc(a, g.map(|v| v * s)),
            Op::AddScalar(a) => acc(a, g.clone()),
            Op::Exp(a) => acc(a, g.zip_map(out, |x, y| x * y)),
            Op::Log(a) => acc(a, g.zip_map(self.value(a), |x, y| x / y)),
            Op::Relu(a) => acc(
                a,
                g.zip_map(self.value(a), |x, y| if y > 0.0 { x } else { 0.0 }),
            ),
            Op::ClampMin(a, floor) => acc(
                a,
                g.zip_map(self.value(a), |x, y| if y >= floor { x } else { 0.0 }),
            ),
            Op::RowLogSumExp(a) => {
                let va = self.value(a);
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let (lse, gr) = (out.data()[r], g.data()[r]);
                    for (o, &v) in ga.row_mut(r).iter_mut().zip(va.row(r)) {
                        *o = gr * libm::exp(v - lse);
                    }
                }
                acc(a, ga);
            }
            Op::SumRows(a) => {
                let va = self.value(a);
                let mut ga = Tensor::zeros(va.rows(), va.cols());
                for r in 0..va.rows() {
                    let gr = g.data()[r];
                    ga.row_mut(r).iter_mut().for_each(|o| *o = gr);
                }
                acc(a, ga);
            }
            Op::Sum(a) => {
                let [r, c] = self.value(a).shape();
                acc(a, Tensor::full(r, c, g.item()));
            }
            Op::Reshape(a) => {
                let [r, c] = self.value(a).shape();
                acc(a, g.clone().reshaped(r, c));
            }
        }
    }
}

/// Gradients produced by [`Graph::backward`].
#[derive(Debug, Clone)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient of the root with respect to `id`; exactly zero when the root
    /// does not depend on it.
    pub fn get(&self, id: NodeId) -> Result<&Tensor> {
        self.grads
            .get(id.0)
            .and_then(Option::as_ref)
            .ok_or(Error::NoGradient { node: id.0 })
    }
}
