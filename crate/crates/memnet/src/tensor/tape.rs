//! Define-by-run reverse-mode autodiff.
//!
//! A `Tape` records every forward op in topological order (an op can only
//! consume ids that already exist), so the backward sweep is a single
//! reverse pass. Gradients accumulate additively across fan-out.

use super::{matmul_raw, Tensor};
use crate::error::{Error, Result};

/// Index of a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct NodeId(usize);

/// Reduction extent: everything, or collapse the row axis per column.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReduceAxis {
    All,
    Rows,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Matmul { a: NodeId, b: NodeId },
    Add { a: NodeId, b: NodeId, bias: bool },
    Sub { a: NodeId, b: NodeId, bias: bool },
    Mul { a: NodeId, b: NodeId, bias: bool },
    Relu { a: NodeId },
    Sigmoid { a: NodeId },
    Tanh { a: NodeId },
    Exp { a: NodeId },
    Log { a: NodeId },
    Softplus { a: NodeId },
    Scale { a: NodeId, c: f64 },
    AddScalar { a: NodeId },
    Clamp { a: NodeId, lo: f64, hi: f64 },
    ConcatCols { a: NodeId, b: NodeId, cols_a: usize },
    Sum { a: NodeId, axis: ReduceAxis },
    Mean { a: NodeId, axis: ReduceAxis },
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Gradients for every node of a tape, indexed by [`NodeId`].
pub struct Gradients {
    grads: Vec<Tensor>,
}

impl Gradients {
    pub fn get(&self, id: NodeId) -> &Tensor {
        &self.grads[id.0]
    }
}

/// The recorded computation graph.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

impl Tape {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    /// Registers an input tensor. Leaves receive gradients in `backward`.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        self.nodes.push(Node { value, op });
        NodeId(self.nodes.len() - 1)
    }

    /// `[m, k] x [k, n] -> [m, n]`.
    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::dimension("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let data = matmul_raw(self.value(a).data(), self.value(b).data(), m, k, n);
        let value = Tensor::new(vec![m, n], data)?;
        Ok(self.push(value, Op::Matmul { a, b }))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(
            "add",
            a,
            b,
            |x, y| x + y,
            |a, b, bias| Op::Add { a, b, bias },
        )
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(
            "sub",
            a,
            b,
            |x, y| x - y,
            |a, b, bias| Op::Sub { a, b, bias },
        )
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.binary(
            "mul",
            a,
            b,
            |x, y| x * y,
            |a, b, bias| Op::Mul { a, b, bias },
        )
    }

    /// Elementwise binary op; `b` may also be a vector broadcast across the
    /// rows of matrix `a` (the bias-add pattern). No other broadcasting.
    fn binary(
        &mut self,
        name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: impl Fn(NodeId, NodeId, bool) -> Op,
    ) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        let bias = sa != sb;
        if bias && !(sa.len() == 2 && sb.len() == 1 && sa[1] == sb[0]) {
            return Err(Error::dimension(name, sa, sb));
        }
        let (da, db) = (self.value(a).data(), self.value(b).data());
        let data: Vec<f64> = if bias {
            let n = sb[0];
            da.iter()
                .enumerate()
                .map(|(i, &x)| f(x, db[i % n]))
                .collect()
        } else {
            da.iter().zip(db).map(|(&x, &y)| f(x, y)).collect()
        };
        let value = Tensor::new(sa.to_vec(), data)?;
        Ok(self.push(value, op(a, b, bias)))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let value = Tensor::new(
            self.value(a).shape().to_vec(),
            self.value(a).data().iter().map(|&x| f(x)).collect(),
        )
        .expect("same shape");
        self.push(value, op)
    }

    pub fn relu(&mut self, a: NodeId) -> NodeId {
        self.unary(a, |x| x.max(0.0), Op::Relu { a })
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid { a })
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::tanh, Op::Tanh { a })
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::exp, Op::Exp { a })
    }

    /// Natural log; the whole input must be strictly positive.
    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if let Some(&bad) = self.value(a).data().iter().find(|v| **v <= 0.0) {
            return Err(Error::Domain {
                op: "log",
                msg: format!("input {bad} is not strictly positive"),
            });
        }
        Ok(self.unary(a, f64::ln, Op::Log { a }))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, softplus, Op::Softplus { a })
    }

    /// Multiply by a constant.
    pub fn scale(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| x * c, Op::Scale { a, c })
    }

    /// Add a constant.
    pub fn add_scalar(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| x + c, Op::AddScalar { a })
    }

    /// Clamp to `[lo, hi]`; the subgradient is zero outside the open interval.
    pub fn clamp(&mut self, a: NodeId, lo: f64, hi: f64) -> NodeId {
        self.unary(a, |x| x.clamp(lo, hi), Op::Clamp { a, lo, hi })
    }

    /// `[m, p] ++ [m, q] -> [m, p + q]` along columns.
    pub fn concat_cols(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.value(a).shape(), self.value(b).shape());
        if sa.len() != 2 || sb.len() != 2 || sa[0] != sb[0] {
            return Err(Error::dimension("concat_cols", sa, sb));
        }
        let (m, p, q) = (sa[0], sa[1], sb[1]);
        let mut data = Vec::with_capacity(m * (p + q));
        for i in 0..m {
            data.extend_from_slice(self.value(a).row(i));
            data.extend_from_slice(self.value(b).row(i));
        }
        let value = Tensor::new(vec![m, p + q], data)?;
        Ok(self.push(value, Op::ConcatCols { a, b, cols_a: p }))
    }

    pub fn sum(&mut self, a: NodeId, axis: ReduceAxis) -> Result<NodeId> {
        let value = self.reduce_value("sum", a, axis, false)?;
        Ok(self.push(value, Op::Sum { a, axis }))
    }

    pub fn mean(&mut self, a: NodeId, axis: ReduceAxis) -> Result<NodeId> {
        let value = self.reduce_value("mean", a, axis, true)?;
        Ok(self.push(value, Op::Mean { a, axis }))
    }

    fn reduce_value(
        &self,
        name: &'static str,
        a: NodeId,
        axis: ReduceAxis,
        mean: bool,
    ) -> Result<Tensor> {
        let t = self.value(a);
        match axis {
            ReduceAxis::All => {
                let mut s: f64 = t.data().iter().sum();
                if mean {
                    s /= t.numel() as f64;
                }
                Ok(Tensor::scalar(s))
            }
            ReduceAxis::Rows => {
                if t.shape().len() != 2 {
                    return Err(Error::Contract {
                        op: name,
                        msg: format!("row reduction needs rank 2, shape is {:?}", t.shape()),
                    });
                }
                let (m, n) = (t.shape()[0], t.shape()[1]);
                let mut out = vec![0.0; n];
                for i in 0..m {
                    for (j, v) in t.row(i).iter().enumerate() {
                        out[j] += v;
                    }
                }
                if mean {
                    for v in &mut out {
                        *v /= m as f64;
                    }
                }
                Ok(Tensor::vector(out))
            }
        }
    }

    /// Reverse sweep from a scalar root. Every node gets a gradient of its
    /// own shape; leaves are read out through [`Gradients::get`].
    pub fn backward(&mut self, root: NodeId) -> Result<Gradients> {
        if self.value(root).numel() != 1 {
            return Err(Error::Contract {
                op: "backward",
                msg: format!(
                    "root must be scalar, shape is {:?}",
                    self.value(root).shape()
                ),
            });
        }
        let mut grads: Vec<Tensor> = self
            .nodes
            .iter()
            .map(|n| Tensor::zeros(n.value.shape().to_vec()))
            .collect();
        grads[root.0].data_mut()[0] = 1.0;

        for i in (0..self.nodes.len()).rev() {
            let g = grads[i].clone();
            match self.nodes[i].op.clone() {
                Op::Leaf => {}
                Op::Matmul { a, b } => {
                    let (m, k) = {
                        let s = self.value(a).shape();
                        (s[0], s[1])
                    };
                    let n = self.value(b).shape()[1];
                    // dA = dC * B^T
                    let bt = transpose(self.value(b).data(), k, n);
                    let da = matmul_raw(g.data(), &bt, m, n, k);
                    // dB = A^T * dC
                    let at = transpose(self.value(a).data(), m, k);
                    let db = matmul_raw(&at, g.data(), k, m, n);
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::Add { a, b, bias } => {
                    accumulate(&mut grads[a.0], g.data());
                    self.accumulate_rhs(&mut grads, b, bias, g.data(), |gv, _| gv);
                }
                Op::Sub { a, b, bias } => {
                    accumulate(&mut grads[a.0], g.data());
                    self.accumulate_rhs(&mut grads, b, bias, g.data(), |gv, _| -gv);
                }
                Op::Mul { a, b, bias } => {
                    let (av, bv) = (self.value(a).data(), self.value(b).data());
                    let n = self.value(b).numel();
                    let da: Vec<f64> = g
                        .data()
                        .iter()
                        .enumerate()
                        .map(|(idx, gv)| gv * if bias { bv[idx % n] } else { bv[idx] })
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                    self.accumulate_rhs(&mut grads, b, bias, g.data(), |gv, idx| gv * av[idx]);
                }
                Op::Relu { a } => {
                    let da: Vec<f64> = self
                        .value(a)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, gv)| if x > 0.0 { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Sigmoid { a } => {
                    let da: Vec<f64> = self.nodes[i]
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&s, gv)| gv * s * (1.0 - s))
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Tanh { a } => {
                    let da: Vec<f64> = self.nodes[i]
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&t, gv)| gv * (1.0 - t * t))
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Exp { a } => {
                    let da: Vec<f64> = self.nodes[i]
                        .value
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&e, gv)| gv * e)
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Log { a } => {
                    let da: Vec<f64> = self
                        .value(a)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, gv)| gv / x)
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Softplus { a } => {
                    let da: Vec<f64> = self
                        .value(a)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, gv)| gv * sigmoid(x))
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::Scale { a, c } => {
                    let da: Vec<f64> = g.data().iter().map(|gv| gv * c).collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::AddScalar { a } => {
                    accumulate(&mut grads[a.0], g.data());
                }
                Op::Clamp { a, lo, hi } => {
                    let da: Vec<f64> = self
                        .value(a)
                        .data()
                        .iter()
                        .zip(g.data())
                        .map(|(&x, gv)| if x > lo && x < hi { *gv } else { 0.0 })
                        .collect();
                    accumulate(&mut grads[a.0], &da);
                }
                Op::ConcatCols { a, b, cols_a } => {
                    let m = self.value(a).shape()[0];
                    let cols_b = self.value(b).shape()[1];
                    let total = cols_a + cols_b;
                    let mut da = vec![0.0; m * cols_a];
                    let mut db = vec![0.0; m * cols_b];
                    for r in 0..m {
                        let grow = &g.data()[r * total..(r + 1) * total];
                        da[r * cols_a..(r + 1) * cols_a].copy_from_slice(&grow[..cols_a]);
                        db[r * cols_b..(r + 1) * cols_b].copy_from_slice(&grow[cols_a..]);
                    }
                    accumulate(&mut grads[a.0], &da);
                    accumulate(&mut grads[b.0], &db);
                }
                Op::Sum { a, axis } => self.reduce_backward(&mut grads, a, axis, g.data(), 1.0),
                Op::Mean { a, axis } => {
                    let denom = match axis {
                        ReduceAxis::All => self.value(a).numel() as f64,
                        ReduceAxis::Rows => self.value(a).shape()[0] as f64,
                    };
                    self.reduce_backward(&mut grads, a, axis, g.data(), 1.0 / denom)
                }
            }
        }
        Ok(Gradients { grads })
    }

    /// Accumulates the gradient of the right operand of a binary op. `term`
    /// maps (incoming gradient element, flat index) to the contribution; for
    /// a bias operand contributions are column-summed over rows.
    fn accumulate_rhs(
        &self,
        grads: &mut [Tensor],
        b: NodeId,
        bias: bool,
        g: &[f64],
        term: impl Fn(f64, usize) -> f64,
    ) {
        let gb = grads[b.0].data_mut();
        if bias {
            let n = gb.len();
            for (idx, gv) in g.iter().enumerate() {
                gb[idx % n] += term(*gv, idx);
            }
        } else {
            for (idx, gv) in g.iter().enumerate() {
                gb[idx] += term(*gv, idx);
            }
        }
    }

    fn reduce_backward(
        &self,
        grads: &mut [Tensor],
        a: NodeId,
        axis: ReduceAxis,
        g: &[f64],
        scale: f64,
    ) {
        let ga = grads[a.0].data_mut();
        match axis {
            ReduceAxis::All => {
                let gv = g[0] * scale;
                for v in ga.iter_mut() {
                    *v += gv;
                }
            }
            ReduceAxis::Rows => {
                let n = g.len();
                for (idx, v) in ga.iter_mut().enumerate() {
                    *v += g[idx % n] * scale;
                }
            }
        }
    }
}

fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

/// ln(1 + e^x), computed from the non-positive side to avoid overflow.
fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn transpose(a: &[f64], rows: usize, cols: usize) -> Vec<f64> {
    let mut out = vec![0.0; rows * cols];
    for i in 0..rows {
        for j in 0..cols {
            out[j * rows + i] = a[i * cols + j];
        }
    }
    out
}

fn accumulate(grad: &mut Tensor, delta: &[f64]) {
    for (g, d) in grad.data_mut().iter_mut().zip(delta) {
        *g += d;
    }
}
