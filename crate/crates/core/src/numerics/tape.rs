//! Reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation of a forward pass as a node holding its
//! output value. [`Tape::backward`] walks the record in reverse, propagating
//! adjoints with hand-derived rules, and accumulates them into the
//! [`ParamTensor`]s that were bound as leaves. A tape can be walked backward
//! once; a second call fails with [`Error::StaleGraph`].

use serde::{Deserialize, Serialize};

use super::Matrix;
use crate::error::{Error, Result};

/// A learnable matrix and its accumulated gradient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ParamTensor {
    pub name: String,
    pub value: Matrix,
    #[serde(skip, default = "empty")]
    pub gradient: Matrix,
    /// Weights take part in the L2 penalty; biases do not.
    pub decay: bool,
}

fn empty() -> Matrix {
    Matrix::zeros(0, 0)
}

impl ParamTensor {
    pub fn new(name: impl Into<String>, value: Matrix, decay: bool) -> Self {
        let gradient = Matrix::zeros(value.rows(), value.cols());
        Self {
            name: name.into(),
            value,
            gradient,
            decay,
        }
    }

    pub fn zero_grad(&mut self) {
        self.gradient = Matrix::zeros(self.value.rows(), self.value.cols());
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct ParamId(pub usize);

/// Ordered collection of the tensors of one model.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    tensors: Vec<ParamTensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&mut self, tensor: ParamTensor) -> ParamId {
        self.tensors.push(tensor);
        ParamId(self.tensors.len() - 1)
    }

    pub fn get(&self, id: ParamId) -> &ParamTensor {
        &self.tensors[id.0]
    }

    pub fn get_mut(&mut self, id: ParamId) -> &mut ParamTensor {
        &mut self.tensors[id.0]
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &ParamTensor> {
        self.tensors.iter()
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = &mut ParamTensor> {
        self.tensors.iter_mut()
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.tensors.iter().position(|t| t.name == name).map(ParamId)
    }

    pub fn zero_grad(&mut self) {
        self.tensors.iter_mut().for_each(ParamTensor::zero_grad);
    }

    /// Restores gradient buffers after deserialization.
    pub fn reset_gradients(&mut self) {
        self.zero_grad();
    }

    pub fn all_finite(&self) -> bool {
        self.tensors.iter().all(|t| t.value.is_finite())
    }

    /// Σ‖W‖² over decaying tensors.
    pub fn l2_norm_sq(&self) -> f64 {
        self.tensors
            .iter()
            .filter(|t| t.decay)
            .map(|t| t.value.sum_squares())
            .sum()
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Var(usize);

#[derive(Debug)]
enum Op {
    Constant,
    Param(ParamId),
    MatMul(Var, Var),
    /// Second operand may be a single row broadcast over the first.
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    Relu(Var),
    Tanh(Var),
    /// Softmax over every entry of the operand.
    Softmax(Var),
    Sum(Var),
    Mean(Var),
    Square(Var),
    Transpose(Var),
}

#[derive(Debug)]
struct Node {
    value: Matrix,
    op: Op,
}

/// Computation record for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
    spent: bool,
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, value: Matrix, op: Op) -> Var {
        self.nodes.push(Node { value, op });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Matrix {
        &self.nodes[v.0].value
    }

    pub fn constant(&mut self, value: Matrix) -> Var {
        self.push(value, Op::Constant)
    }

    /// Records a parameter leaf holding a copy of its current value.
    pub fn param(&mut self, params: &ParamSet, id: ParamId) -> Var {
        self.push(params.get(id).value.clone(), Op::Param(id))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).matmul(self.value(b))?;
        Ok(self.push(value, Op::MatMul(a, b)))
    }

    /// Elementwise sum; `b` may also be a 1×cols row added to every row of `a`.
    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast(self.value(a), self.value(b), "add", |x, y| x + y)?;
        Ok(self.push(value, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = broadcast(self.value(a), self.value(b), "sub", |x, y| x - y)?;
        Ok(self.push(value, Op::Sub(a, b)))
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let value = self.value(a).hadamard(self.value(b))?;
        Ok(self.push(value, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Var {
        let value = self.value(a).scale(factor);
        self.push(value, Op::Scale(a, factor))
    }

    pub fn relu(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v.max(0.0));
        self.push(value, Op::Relu(a))
    }

    pub fn tanh(&mut self, a: Var) -> Var {
        let value = self.value(a).map(f64::tanh);
        self.push(value, Op::Tanh(a))
    }

    pub fn softmax(&mut self, a: Var) -> Var {
        let value = softmax(self.value(a));
        self.push(value, Op::Softmax(a))
    }

    pub fn sum(&mut self, a: Var) -> Var {
        let value = Matrix::scalar(self.value(a).sum());
        self.push(value, Op::Sum(a))
    }

    pub fn mean(&mut self, a: Var) -> Var {
        let m = self.value(a);
        let value = Matrix::scalar(m.sum() / m.len() as f64);
        self.push(value, Op::Mean(a))
    }

    pub fn square(&mut self, a: Var) -> Var {
        let value = self.value(a).map(|v| v * v);
        self.push(value, Op::Square(a))
    }

    pub fn transpose(&mut self, a: Var) -> Var {
        let value = self.value(a).transpose();
        self.push(value, Op::Transpose(a))
    }

    /// Propagates d`loss` back through the record and accumulates into the
    /// gradients of every parameter leaf the loss depends on.
    pub fn backward(&mut self, loss: Var, params: &mut ParamSet) -> Result<()> {
        if self.spent {
            return Err(Error::StaleGraph);
        }
        let loss_value = self.value(loss);
        if loss_value.shape() != (1, 1) {
            return Err(Error::Dimension {
                op: "backward",
                left: loss_value.shape(),
                right: (1, 1),
            });
        }
        if !loss_value.is_finite() {
            return Err(Error::NonFinite("loss".into()));
        }
        self.spent = true;

        let mut adjoints: Vec<Option<Matrix>> = vec![None; loss.0 + 1];
        adjoints[loss.0] = Some(Matrix::scalar(1.0));

        for idx in (0..=loss.0).rev() {
            let Some(g) = adjoints[idx].take() else {
                continue;
            };
            let node = &self.nodes[idx];
            match node.op {
                Op::Constant => {}
                Op::Param(id) => {
                    params.get_mut(id).gradient.add_assign(&g)?;
                }
                Op::MatMul(a, b) => {
                    let da = g.matmul(&self.value(b).transpose())?;
                    let db = self.value(a).transpose().matmul(&g)?;
                    accumulate(&mut adjoints, a, da)?;
                    accumulate(&mut adjoints, b, db)?;
                }
                Op::Add(a, b) => {
                    let db = reduce_broadcast(&g, self.value(b));
                    accumulate(&mut adjoints, a, g)?;
                    accumulate(&mut adjoints, b, db)?;
                }
                Op::Sub(a, b) => {
                    let db = reduce_broadcast(&g, self.value(b)).scale(-1.0);
                    accumulate(&mut adjoints, a, g)?;
                    accumulate(&mut adjoints, b, db)?;
                }
                Op::Mul(a, b) => {
                    let da = g.hadamard(self.value(b))?;
                    let db = g.hadamard(self.value(a))?;
                    accumulate(&mut adjoints, a, da)?;
                    accumulate(&mut adjoints, b, db)?;
                }
                Op::Scale(a, factor) => {
                    accumulate(&mut adjoints, a, g.scale(factor))?;
                }
                Op::Relu(a) => {
                    let da = g.zip_with(self.value(a), "relu", |gv, x| {
                        if x > 0.0 {
                            gv
                        } else {
                            0.0
                        }
                    })?;
                    accumulate(&mut adjoints, a, da)?;
                }
                Op::Tanh(a) => {
                    let da = g.zip_with(&node.value, "tanh", |gv, y| gv * (1.0 - y * y))?;
                    accumulate(&mut adjoints, a, da)?;
                }
                Op::Softmax(a) => {
                    let y = &node.value;
                    let dot: f64 = g.data().iter().zip(y.data()).map(|(p, q)| p * q).sum();
                    let da = g.zip_with(y, "softmax", |gv, yv| yv * (gv - dot))?;
                    accumulate(&mut adjoints, a, da)?;
                }
                Op::Sum(a) => {
                    let (r, c) = self.value(a).shape();
                    accumulate(&mut adjoints, a, Matrix::filled(r, c, g.item()))?;
                }
                Op::Mean(a) => {
                    let (r, c) = self.value(a).shape();
                    let n = (r * c) as f64;
                    accumulate(&mut adjoints, a, Matrix::filled(r, c, g.item() / n))?;
                }
                Op::Square(a) => {
                    let da = g.zip_with(self.value(a), "square", |gv, x| 2.0 * x * gv)?;
                    accumulate(&mut adjoints, a, da)?;
                }
                Op::Transpose(a) => {
                    accumulate(&mut adjoints, a, g.transpose())?;
                }
            }
        }
        Ok(())
    }
}

fn accumulate(adjoints: &mut [Option<Matrix>], v: Var, g: Matrix) -> Result<()> {
    match &mut adjoints[v.0] {
        Some(existing) => existing.add_assign(&g),
        slot @ None => {
            *slot = Some(g);
            Ok(())
        }
    }
}

fn broadcast(a: &Matrix, b: &Matrix, op: &'static str, f: impl Fn(f64, f64) -> f64) -> Result<Matrix> {
    if a.shape() == b.shape() {
        return a.zip_with(b, op, f);
    }
    if b.rows() == 1 && b.cols() == a.cols() {
        let mut out = a.clone();
        let cols = a.cols();
        for (i, v) in out.data_mut().iter_mut().enumerate() {
            *v = f(*v, b.data()[i % cols]);
        }
        return Ok(out);
    }
    Err(Error::Dimension {
        op,
        left: a.shape(),
        right: b.shape(),
    })
}

fn reduce_broadcast(g: &Matrix, target: &Matrix) -> Matrix {
    if g.shape() == target.shape() {
        g.clone()
    } else {
        g.column_sums()
    }
}

/// Max-shifted softmax over every entry of `m`.
pub fn softmax(m: &Matrix) -> Matrix {
    let max = m.data().iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps = m.map(|v| (v - max).exp());
    let total = exps.sum();
    exps.scale(1.0 / total)
}
