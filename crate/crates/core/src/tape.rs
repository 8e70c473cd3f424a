//! Reverse-mode autodiff on a flat tape.
//!
//! Ops evaluate eagerly when recorded; parents always have smaller indices
//! than children, so a single reverse sweep over the node list implements the
//! chain rule in a fixed topological order. A tape is built per optimization
//! step and dropped afterwards; nothing is reused across steps, which keeps
//! gradients bit-reproducible.
//!
//! Supported shapes are scalars, vectors and matrices. The only broadcast is
//! the bias-add family: a row vector combined with every row of a matrix
//! (`add_row`, `mul_row`).
//!
//! In debug builds every op checks its output for NaN/Inf and fails with
//! [`Error::Numeric`]; release builds skip the check.

use crate::error::{Error, Result};
use crate::scalar::Real;
use crate::tensor::Tensor;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct VarId(usize);

#[derive(Clone, Debug)]
enum Op<S> {
    Leaf,
    StopGrad(usize),
    Add(usize, usize),
    AddRow(usize, usize),
    Sub(usize, usize),
    Mul(usize, usize),
    MulRow(usize, usize),
    Div(usize, usize),
    Min(usize, usize),
    MatMul(usize, usize),
    Neg(usize),
    Tanh(usize),
    Relu(usize),
    Square(usize),
    Exp(usize),
    Scale(usize, S),
    Offset(usize, S),
    Clamp(usize, S, S),
    /// Forward: `x` if `|x| >= floor`, else `floor * sign(x)` (`sign(0) = +1`).
    /// Gradient passes only through the unfloored region.
    SignedFloor(usize, S),
    SumAll(usize),
    MeanAll(usize),
    SumRows(usize),
    Concat(usize, usize),
    Slice(usize, usize, usize),
}

struct Node<S> {
    op: Op<S>,
    value: Tensor<S>,
    grad: Option<Tensor<S>>,
    stop_grad: bool,
}

pub struct Tape<S> {
    nodes: Vec<Node<S>>,
}

impl<S: Real> Default for Tape<S> {
    fn default() -> Self {
        Self::new()
    }
}

impl<S: Real> Tape<S> {
    pub fn new() -> Self {
        Tape { nodes: Vec::new() }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Records a differentiable input.
    pub fn leaf(&mut self, value: Tensor<S>) -> VarId {
        self.push_unchecked(Op::Leaf, value, false)
    }

    /// Records an input that never receives a gradient (data, targets, ...).
    pub fn constant(&mut self, value: Tensor<S>) -> VarId {
        self.push_unchecked(Op::Leaf, value, true)
    }

    pub fn scalar(&mut self, v: S) -> VarId {
        self.constant(Tensor::scalar(v))
    }

    /// Rebinds a leaf value (used by the finite-difference oracle together
    /// with [`Tape::forward`]). Shape must match the original.
    pub fn set_leaf(&mut self, id: VarId, value: Tensor<S>) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::contract("set_leaf on a non-leaf node"));
        }
        if node.value.shape() != value.shape() {
            return Err(Error::shape(format!(
                "set_leaf shape {:?} != {:?}",
                value.shape(),
                node.value.shape()
            )));
        }
        node.value = value;
        Ok(())
    }

    /// Overwrites a single element of a leaf (cheap FD perturbations).
    pub fn poke_leaf(&mut self, id: VarId, index: usize, v: S) -> Result<()> {
        let node = &mut self.nodes[id.0];
        if !matches!(node.op, Op::Leaf) {
            return Err(Error::contract("poke_leaf on a non-leaf node"));
        }
        node.value.data_mut()[index] = v;
        Ok(())
    }

    pub fn value(&self, id: VarId) -> &Tensor<S> {
        &self.nodes[id.0].value
    }

    /// Gradient of the last [`Tape::backward`] root w.r.t. this node.
    pub fn grad(&self, id: VarId) -> Option<&Tensor<S>> {
        self.nodes[id.0].grad.as_ref()
    }

    // ── op constructors ─────────────────────────────────────────────────

    pub fn stopgrad(&mut self, a: VarId) -> VarId {
        let value = self.nodes[a.0].value.clone();
        self.push_unchecked(Op::StopGrad(a.0), value, true)
    }

    pub fn add(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::Add(a.0, b.0))
    }

    /// `matrix + row`: adds a `[c]` vector to every row of an `[r, c]` matrix.
    pub fn add_row(&mut self, m: VarId, v: VarId) -> Result<VarId> {
        self.push(Op::AddRow(m.0, v.0))
    }

    pub fn sub(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::Sub(a.0, b.0))
    }

    pub fn mul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::Mul(a.0, b.0))
    }

    /// `matrix * row`: scales column `j` of an `[r, c]` matrix by `v[j]`.
    pub fn mul_row(&mut self, m: VarId, v: VarId) -> Result<VarId> {
        self.push(Op::MulRow(m.0, v.0))
    }

    pub fn div(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::Div(a.0, b.0))
    }

    /// Elementwise minimum; on ties the gradient goes to the first operand.
    pub fn min(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::Min(a.0, b.0))
    }

    pub fn matmul(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::MatMul(a.0, b.0))
    }

    pub fn neg(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::Neg(a.0))
    }

    pub fn tanh(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::Tanh(a.0))
    }

    pub fn relu(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::Relu(a.0))
    }

    pub fn square(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::Square(a.0))
    }

    pub fn exp(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::Exp(a.0))
    }

    pub fn scale(&mut self, a: VarId, c: S) -> Result<VarId> {
        self.push(Op::Scale(a.0, c))
    }

    pub fn offset(&mut self, a: VarId, c: S) -> Result<VarId> {
        self.push(Op::Offset(a.0, c))
    }

    /// Elementwise clamp to `[lo, hi]`; gradient passes where `lo <= x <= hi`.
    pub fn clamp(&mut self, a: VarId, lo: S, hi: S) -> Result<VarId> {
        self.push(Op::Clamp(a.0, lo, hi))
    }

    /// Pushes values inside `(-floor, floor)` out to `floor * sign(x)`.
    pub fn signed_floor(&mut self, a: VarId, floor: S) -> Result<VarId> {
        self.push(Op::SignedFloor(a.0, floor))
    }

    pub fn sum(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::SumAll(a.0))
    }

    pub fn mean(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::MeanAll(a.0))
    }

    /// Row sums of an `[r, c]` matrix, producing an `[r]` vector.
    pub fn sum_rows(&mut self, a: VarId) -> Result<VarId> {
        self.push(Op::SumRows(a.0))
    }

    /// Concatenation along the last axis (vectors end to end, matrices side
    /// by side).
    pub fn concat(&mut self, a: VarId, b: VarId) -> Result<VarId> {
        self.push(Op::Concat(a.0, b.0))
    }

    /// Range `start..end` along the last axis.
    pub fn slice(&mut self, a: VarId, start: usize, end: usize) -> Result<VarId> {
        self.push(Op::Slice(a.0, start, end))
    }

    // ── evaluation ──────────────────────────────────────────────────────

    fn push(&mut self, op: Op<S>) -> Result<VarId> {
        let value = self.eval(&op)?;
        #[cfg(debug_assertions)]
        value.check_finite("op output")?;
        Ok(self.push_unchecked(op, value, false))
    }

    fn push_unchecked(&mut self, op: Op<S>, value: Tensor<S>, stop_grad: bool) -> VarId {
        self.nodes.push(Node { op, value, grad: None, stop_grad });
        VarId(self.nodes.len() - 1)
    }

    fn val(&self, i: usize) -> &Tensor<S> {
        &self.nodes[i].value
    }

    fn eval(&self, op: &Op<S>) -> Result<Tensor<S>> {
        match *op {
            Op::Leaf => unreachable!("leaves are bound, not evaluated"),
            Op::StopGrad(a) => Ok(self.val(a).clone()),
            Op::Add(a, b) => self.zip(a, b, "add", |x, y| x + y),
            Op::Sub(a, b) => self.zip(a, b, "sub", |x, y| x - y),
            Op::Mul(a, b) => self.zip(a, b, "mul", |x, y| x * y),
            Op::Div(a, b) => self.zip(a, b, "div", |x, y| x / y),
            Op::Min(a, b) => self.zip(a, b, "min", |x, y| if y < x { y } else { x }),
            Op::AddRow(m, v) => self.zip_row(m, v, "add_row", |x, y| x + y),
            Op::MulRow(m, v) => self.zip_row(m, v, "mul_row", |x, y| x * y),
            Op::MatMul(a, b) => self.eval_matmul(a, b),
            Op::Neg(a) => Ok(self.val(a).map(|x| -x)),
            Op::Tanh(a) => Ok(self.val(a).map(|x| x.tanh())),
            Op::Relu(a) => Ok(self.val(a).map(|x| if x > S::zero() { x } else { S::zero() })),
            Op::Square(a) => Ok(self.val(a).map(|x| x * x)),
            Op::Exp(a) => Ok(self.val(a).map(|x| x.exp())),
            Op::Scale(a, c) => Ok(self.val(a).map(|x| x * c)),
            Op::Offset(a, c) => Ok(self.val(a).map(|x| x + c)),
            Op::Clamp(a, lo, hi) => {
                Ok(self.val(a).map(|x| if x < lo { lo } else if x > hi { hi } else { x }))
            }
            Op::SignedFloor(a, floor) => Ok(self.val(a).map(|x| {
                if x.abs() >= floor {
                    x
                } else if x < S::zero() {
                    -floor
                } else {
                    floor
                }
            })),
            Op::SumAll(a) => {
                let mut acc = S::zero();
                for &x in self.val(a).data() {
                    acc += x;
                }
                Ok(Tensor::scalar(acc))
            }
            Op::MeanAll(a) => {
                let t = self.val(a);
                let mut acc = S::zero();
                for &x in t.data() {
                    acc += x;
                }
                let n = S::from_f64_lit(t.numel() as f64);
                Ok(Tensor::scalar(acc / n))
            }
            Op::SumRows(a) => {
                let t = self.val(a);
                if t.shape().len() != 2 {
                    return Err(Error::shape(format!("sum_rows needs a matrix, got {:?}", t.shape())));
                }
                let (r, c) = (t.shape()[0], t.shape()[1]);
                let mut out = vec![S::zero(); r];
                for i in 0..r {
                    let mut acc = S::zero();
                    for &x in t.row(i) {
                        acc += x;
                    }
                    out[i] = acc;
                }
                let _ = c;
                Ok(Tensor::vector(out))
            }
            Op::Concat(a, b) => self.eval_concat(a, b),
            Op::Slice(a, start, end) => self.eval_slice(a, start, end),
        }
    }

    fn zip(&self, a: usize, b: usize, name: &str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape() != tb.shape() {
            return Err(Error::shape(format!(
                "{name}: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        Tensor::new(ta.shape().to_vec(), data)
    }

    fn zip_row(&self, m: usize, v: usize, name: &str, f: impl Fn(S, S) -> S) -> Result<Tensor<S>> {
        let (tm, tv) = (self.val(m), self.val(v));
        if tm.shape().len() != 2 || tv.shape().len() != 1 || tm.shape()[1] != tv.shape()[0] {
            return Err(Error::shape(format!(
                "{name}: matrix {:?} vs row {:?}",
                tm.shape(),
                tv.shape()
            )));
        }
        let (r, c) = (tm.shape()[0], tm.shape()[1]);
        let mut data = Vec::with_capacity(r * c);
        let vd = tv.data();
        for i in 0..r {
            for (j, &x) in tm.row(i).iter().enumerate() {
                data.push(f(x, vd[j]));
            }
        }
        Tensor::matrix(r, c, data)
    }

    fn eval_matmul(&self, a: usize, b: usize) -> Result<Tensor<S>> {
        let (ta, tb) = (self.val(a), self.val(b));
        if ta.shape().len() != 2 || tb.shape().len() != 2 || ta.shape()[1] != tb.shape()[0] {
            return Err(Error::shape(format!(
                "matmul: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            )));
        }
        let (r, k, c) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
        let out = crate::tensor::matmul_data(ta.data(), tb.data(), r, k, c);
        Tensor::matrix(r, c, out)
    }

    fn eval_concat(&self, a: usize, b: usize) -> Result<Tensor<S>> {
        let (ta, tb) = (self.val(a), self.val(b));
        match (ta.shape().len(), tb.shape().len()) {
            (1, 1) => {
                let mut data = ta.data().to_vec();
                data.extend_from_slice(tb.data());
                Ok(Tensor::vector(data))
            }
            (2, 2) if ta.shape()[0] == tb.shape()[0] => {
                let r = ta.shape()[0];
                let (c1, c2) = (ta.shape()[1], tb.shape()[1]);
                let mut data = Vec::with_capacity(r * (c1 + c2));
                for i in 0..r {
                    data.extend_from_slice(ta.row(i));
                    data.extend_from_slice(tb.row(i));
                }
                Tensor::matrix(r, c1 + c2, data)
            }
            _ => Err(Error::shape(format!(
                "concat: {:?} vs {:?}",
                ta.shape(),
                tb.shape()
            ))),
        }
    }

    fn eval_slice(&self, a: usize, start: usize, end: usize) -> Result<Tensor<S>> {
        let t = self.val(a);
        let width = t.cols();
        if start > end || end > width {
            return Err(Error::shape(format!(
                "slice {start}..{end} out of range for width {width}"
            )));
        }
        match t.shape().len() {
            1 => Ok(Tensor::vector(t.data()[start..end].to_vec())),
            2 => {
                let r = t.shape()[0];
                let mut data = Vec::with_capacity(r * (end - start));
                for i in 0..r {
                    data.extend_from_slice(&t.row(i)[start..end]);
                }
                Tensor::matrix(r, end - start, data)
            }
            _ => Err(Error::shape("slice needs a vector or matrix")),
        }
    }

    /// Re-evaluates every non-leaf node in creation order from the currently
    /// bound leaf values.
    pub fn forward(&mut self) -> Result<()> {
        for i in 0..self.nodes.len() {
            if matches!(self.nodes[i].op, Op::Leaf) {
                continue;
            }
            let op = self.nodes[i].op.clone();
            let value = self.eval(&op)?;
            #[cfg(debug_assertions)]
            value.check_finite("op output")?;
            self.nodes[i].value = value;
        }
        Ok(())
    }

    /// Reverse sweep accumulating `d(root)/d(node)` into every node at or
    /// below `root`. The root must be scalar.
    pub fn backward(&mut self, root: VarId) -> Result<()> {
        if !self.nodes[root.0].value.is_scalar() {
            return Err(Error::contract(format!(
                "backward root must be scalar, got shape {:?}",
                self.nodes[root.0].value.shape()
            )));
        }
        let n = root.0 + 1;
        let mut grads: Vec<Vec<S>> = (0..n).map(|i| vec![S::zero(); self.nodes[i].value.numel()]).collect();
        grads[root.0][0] = S::one();

        for i in (0..n).rev() {
            if self.nodes[i].stop_grad {
                continue;
            }
            // Split off this node's gradient so parents stay borrowable.
            let g = std::mem::take(&mut grads[i]);
            self.accumulate_parents(i, &g, &mut grads);
            grads[i] = g;
        }

        for (i, g) in grads.into_iter().enumerate() {
            let shape = self.nodes[i].value.shape().to_vec();
            self.nodes[i].grad = Some(Tensor::new(shape, g)?);
        }
        Ok(())
    }

    fn accumulate_parents(&self, i: usize, g: &[S], grads: &mut [Vec<S>]) {
        match self.nodes[i].op {
            Op::Leaf => {}
            Op::StopGrad(_) => unreachable!("stop_grad nodes are skipped"),
            Op::Add(a, b) => {
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv;
                }
                for (k, &gv) in g.iter().enumerate() {
                    grads[b][k] += gv;
                }
            }
            Op::Sub(a, b) => {
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv;
                }
                for (k, &gv) in g.iter().enumerate() {
                    grads[b][k] -= gv;
                }
            }
            Op::Mul(a, b) => {
                let (va, vb) = (self.val(a).data(), self.val(b).data());
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv * vb[k];
                }
                for (k, &gv) in g.iter().enumerate() {
                    grads[b][k] += gv * va[k];
                }
            }
            Op::Div(a, b) => {
                let (va, vb) = (self.val(a).data(), self.val(b).data());
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv / vb[k];
                }
                for (k, &gv) in g.iter().enumerate() {
                    grads[b][k] -= gv * va[k] / (vb[k] * vb[k]);
                }
            }
            Op::Min(a, b) => {
                let (va, vb) = (self.val(a).data(), self.val(b).data());
                for (k, &gv) in g.iter().enumerate() {
                    if va[k] <= vb[k] {
                        grads[a][k] += gv;
                    } else {
                        grads[b][k] += gv;
                    }
                }
            }
            Op::AddRow(m, v) => {
                let c = self.val(v).numel();
                for (k, &gv) in g.iter().enumerate() {
                    grads[m][k] += gv;
                }
                for (k, &gv) in g.iter().enumerate() {
                    grads[v][k % c] += gv;
                }
            }
            Op::MulRow(m, v) => {
                let (vm, vv) = (self.val(m).data(), self.val(v).data());
                let c = vv.len();
                for (k, &gv) in g.iter().enumerate() {
                    grads[m][k] += gv * vv[k % c];
                }
                for (k, &gv) in g.iter().enumerate() {
                    grads[v][k % c] += gv * vm[k];
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.val(a), self.val(b));
                let (r, kk, c) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                // dA = G @ B^T
                for i2 in 0..r {
                    for p in 0..kk {
                        let mut acc = S::zero();
                        let grow = &g[i2 * c..(i2 + 1) * c];
                        let brow = tb.row(p);
                        for j in 0..c {
                            acc += grow[j] * brow[j];
                        }
                        grads[a][i2 * kk + p] += acc;
                    }
                }
                // dB = A^T @ G
                for p in 0..kk {
                    for j in 0..c {
                        let mut acc = S::zero();
                        for i2 in 0..r {
                            acc += ta.at(i2, p) * g[i2 * c + j];
                        }
                        grads[b][p * c + j] += acc;
                    }
                }
            }
            Op::Neg(a) => {
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] -= gv;
                }
            }
            Op::Tanh(a) => {
                let y = self.nodes[i].value.data();
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv * (S::one() - y[k] * y[k]);
                }
            }
            Op::Relu(a) => {
                let x = self.val(a).data();
                for (k, &gv) in g.iter().enumerate() {
                    if x[k] > S::zero() {
                        grads[a][k] += gv;
                    }
                }
            }
            Op::Square(a) => {
                let x = self.val(a).data();
                let two = S::from_f64_lit(2.0);
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv * two * x[k];
                }
            }
            Op::Exp(a) => {
                let y = self.nodes[i].value.data();
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv * y[k];
                }
            }
            Op::Scale(a, cst) => {
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv * cst;
                }
            }
            Op::Offset(a, _) => {
                for (k, &gv) in g.iter().enumerate() {
                    grads[a][k] += gv;
                }
            }
            Op::Clamp(a, lo, hi) => {
                let x = self.val(a).data();
                for (k, &gv) in g.iter().enumerate() {
                    if x[k] >= lo && x[k] <= hi {
                        grads[a][k] += gv;
                    }
                }
            }
            Op::SignedFloor(a, floor) => {
                let x = self.val(a).data();
                for (k, &gv) in g.iter().enumerate() {
                    if x[k].abs() >= floor {
                        grads[a][k] += gv;
                    }
                }
            }
            Op::SumAll(a) => {
                let gv = g[0];
                for slot in grads[a].iter_mut() {
                    *slot += gv;
                }
            }
            Op::MeanAll(a) => {
                let n = S::from_f64_lit(self.val(a).numel() as f64);
                let gv = g[0] / n;
                for slot in grads[a].iter_mut() {
                    *slot += gv;
                }
            }
            Op::SumRows(a) => {
                let c = self.val(a).shape()[1];
                for (idx, slot) in grads[a].iter_mut().enumerate() {
                    *slot += g[idx / c];
                }
            }
            Op::Concat(a, b) => {
                let (ta, tb) = (self.val(a), self.val(b));
                if ta.shape().len() == 1 {
                    let n1 = ta.numel();
                    for k in 0..n1 {
                        grads[a][k] += g[k];
                    }
                    for k in 0..tb.numel() {
                        grads[b][k] += g[n1 + k];
                    }
                } else {
                    let (r, c1, c2) = (ta.shape()[0], ta.shape()[1], tb.shape()[1]);
                    let c = c1 + c2;
                    for i2 in 0..r {
                        for j in 0..c1 {
                            grads[a][i2 * c1 + j] += g[i2 * c + j];
                        }
                        for j in 0..c2 {
                            grads[b][i2 * c2 + j] += g[i2 * c + c1 + j];
                        }
                    }
                }
            }
            Op::Slice(a, start, end) => {
                let t = self.val(a);
                if t.shape().len() == 1 {
                    for (k, &gv) in g.iter().enumerate() {
                        grads[a][start + k] += gv;
                    }
                } else {
                    let c = t.shape()[1];
                    let w = end - start;
                    for (k, &gv) in g.iter().enumerate() {
                        let (i2, j) = (k / w, k % w);
                        grads[a][i2 * c + start + j] += gv;
                    }
                }
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    type T = Tape<f64>;

    fn scalar_of(t: &T, v: VarId) -> f64 {
        t.value(v).item().unwrap()
    }

    #[test]
    fn matmul_identity() {
        let mut t = T::new();
        let a = t.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let eye = t.constant(Tensor::matrix(2, 2, vec![1.0, 0.0, 0.0, 1.0]).unwrap());
        let y = t.matmul(a, eye).unwrap();
        assert_eq!(t.value(y).data(), &[1.0, 2.0, 3.0, 4.0]);
    }

    #[test]
    fn tanh_at_origin() {
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![0.0, 0.0, 0.0]));
        let y = t.tanh(x).unwrap();
        assert_eq!(t.value(y).data(), &[0.0, 0.0, 0.0]);
    }

    #[test]
    fn mean_of_square() {
        // (9 + 16) / 2 = 12.5
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![3.0, 4.0]));
        let sq = t.square(x).unwrap();
        let m = t.mean(sq).unwrap();
        assert_eq!(scalar_of(&t, m), 12.5);
    }

    #[test]
    fn sum_gradient_is_ones() {
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![5.0, -1.0, 2.0]));
        let s = t.sum(x).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[1.0, 1.0, 1.0]);
    }

    #[test]
    fn stopgrad_blocks_gradient() {
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![1.0, -2.0, 3.0]));
        let frozen = t.stopgrad(x);
        let sq = t.square(frozen).unwrap();
        let s = t.sum(sq).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(x).unwrap().data(), &[0.0, 0.0, 0.0]);
        // Forward value still passes through unchanged.
        assert_eq!(t.value(frozen).data(), &[1.0, -2.0, 3.0]);
    }

    #[test]
    fn tanh_gradient_matches_closed_form() {
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![0.5]));
        let y = t.tanh(x).unwrap();
        let s = t.sum(y).unwrap();
        t.backward(s).unwrap();
        let expected = 1.0 - 0.5f64.tanh().powi(2);
        assert!((t.grad(x).unwrap().data()[0] - expected).abs() < 1e-12);
        assert!((expected - 0.7864).abs() < 1e-4);
    }

    #[test]
    fn backward_requires_scalar_root() {
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let y = t.square(x).unwrap();
        assert!(matches!(t.backward(y), Err(crate::error::Error::Contract(_))));
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let mut t = T::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let b = t.leaf(Tensor::vector(vec![1.0, 2.0, 3.0]));
        assert!(matches!(t.add(a, b), Err(crate::error::Error::Shape(_))));
    }

    #[test]
    fn backward_is_bit_deterministic() {
        let build = || {
            let mut t = T::new();
            let w = t.leaf(Tensor::matrix(3, 2, vec![0.3, -0.1, 0.7, 0.2, -0.5, 0.11]).unwrap());
            let x = t.constant(Tensor::matrix(2, 4, vec![1.0, 0.5, -2.0, 0.25, 3.0, -1.0, 0.0, 2.0]).unwrap());
            let h = t.matmul(w, x).unwrap();
            let a = t.tanh(h).unwrap();
            let sq = t.square(a).unwrap();
            let m = t.mean(sq).unwrap();
            t.backward(m).unwrap();
            t.grad(w).unwrap().data().iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        };
        assert_eq!(build(), build());
    }

    #[test]
    fn concat_and_slice_round_trip() {
        let mut t = T::new();
        let a = t.leaf(Tensor::matrix(2, 2, vec![1.0, 2.0, 3.0, 4.0]).unwrap());
        let b = t.leaf(Tensor::matrix(2, 1, vec![9.0, 8.0]).unwrap());
        let cat = t.concat(a, b).unwrap();
        assert_eq!(t.value(cat).shape(), &[2, 3]);
        let back = t.slice(cat, 2, 3).unwrap();
        assert_eq!(t.value(back).data(), &[9.0, 8.0]);
        let s = t.sum(back).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(b).unwrap().data(), &[1.0, 1.0]);
        assert_eq!(t.grad(a).unwrap().data(), &[0.0; 4]);
    }

    #[test]
    fn signed_floor_forward() {
        let mut t = T::new();
        let x = t.leaf(Tensor::vector(vec![0.4, -0.4, 1.0e-4, -1.0e-4, 0.0]));
        let y = t.signed_floor(x, 5.0e-4).unwrap();
        assert_eq!(t.value(y).data(), &[0.4, -0.4, 5.0e-4, -5.0e-4, 5.0e-4]);
    }

    #[test]
    fn min_tie_goes_to_first() {
        let mut t = T::new();
        let a = t.leaf(Tensor::vector(vec![1.0, 5.0]));
        let b = t.leaf(Tensor::vector(vec![1.0, 2.0]));
        let m = t.min(a, b).unwrap();
        let s = t.sum(m).unwrap();
        t.backward(s).unwrap();
        assert_eq!(t.grad(a).unwrap().data(), &[1.0, 0.0]);
        assert_eq!(t.grad(b).unwrap().data(), &[0.0, 1.0]);
    }
}
