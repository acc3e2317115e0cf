//! Dynamic reverse-mode tape.
//!
//! Every operation evaluates eagerly and appends a node; node ids are assigned
//! in creation order, so the node list is always topologically sorted and
//! `backward` is a single reverse sweep.

use super::tensor::{gemm, gemm_strided, Tensor};
use crate::error::{Error, Result};

/// Rows whose norm is at or below this are rejected by `l2_normalize`.
pub const NORM_EPS: f64 = 1e-12;

/// Handle to a node on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn id(self) -> usize {
        self.0
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Mul(Var, Var),
    Scale(Var, f64),
    AddScalar(Var),
    AddRow(Var, Var),
    MatMul(Var, Var),
    Transpose(Var),
    Relu(Var),
    Tanh(Var),
    Exp(Var),
    Ln(Var),
    Recip(Var),
    Square(Var),
    L2Normalize { input: Var, norms: Vec<f64> },
    LogSumExpRows(Var),
    Sum(Var),
    Mean(Var),
    RowSum(Var),
    ConcatCols(Var, Var),
    SliceCols { input: Var, start: usize },
    Reshape(Var),
    SortCols { input: Var, order: Vec<usize> },
    SqDists(Var, Var),
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Recorded computation trace for one forward pass.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients produced by [`Tape::backward`], keyed by node.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
    shapes: Vec<Vec<usize>>,
}

impl Gradients {
    /// Gradient with respect to `var`; zeros when the loss does not depend on it.
    pub fn wrt(&self, var: Var) -> Tensor {
        match &self.grads[var.0] {
            Some(g) => g.clone(),
            None => {
                let shape = &self.shapes[var.0];
                let n = shape.iter().product();
                Tensor::new(shape.clone(), vec![0.0; n]).expect("recorded shape is valid")
            }
        }
    }

    /// True when a gradient buffer was written for `var`.
    pub fn touched(&self, var: Var) -> bool {
        self.grads[var.0].is_some()
    }
}

fn same_shape(a: &Tensor, b: &Tensor, what: &str) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::shape(format!(
            "{what}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn matrix_dims(t: &Tensor, what: &str) -> Result<(usize, usize)> {
    if t.rank() != 2 {
        return Err(Error::shape(format!(
            "{what}: expected a matrix, got shape {:?}",
            t.shape()
        )));
    }
    Ok((t.shape()[0], t.shape()[1]))
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

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node {
            value,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn unary(&mut self, x: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[x.0].requires_grad;
        self.push(value, op, rg)
    }

    fn binary(&mut self, a: Var, b: Var, value: Tensor, op: Op) -> Var {
        let rg = self.nodes[a.0].requires_grad || self.nodes[b.0].requires_grad;
        self.push(value, op, rg)
    }

    /// Differentiable input.
    pub fn leaf(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, true)
    }

    /// Input that never receives a gradient.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    /// Every differentiable leaf, in creation order.
    pub fn trainable_leaves(&self) -> Vec<Var> {
        self.nodes
            .iter()
            .enumerate()
            .filter(|(_, n)| n.requires_grad && matches!(n.op, Op::Leaf))
            .map(|(i, _)| Var(i))
            .collect()
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "add")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x + y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.binary(a, b, out, Op::Add(a, b)))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "sub")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x - y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.binary(a, b, out, Op::Sub(a, b)))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(ta, tb, "mul")?;
        let data = ta.data().iter().zip(tb.data()).map(|(x, y)| x * y).collect();
        let out = Tensor::new(ta.shape().to_vec(), data)?;
        Ok(self.binary(a, b, out, Op::Mul(a, b)))
    }

    pub fn scale(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v * c);
        self.unary(x, out, Op::Scale(x, c))
    }

    pub fn add_scalar(&mut self, x: Var, c: f64) -> Var {
        let out = self.value(x).map(|v| v + c);
        self.unary(x, out, Op::AddScalar(x))
    }

    /// Adds a length-`n` row (shape `[n]` or `[1×n]`) to every row of `x[B×n]`.
    pub fn add_row(&mut self, x: Var, row: Var) -> Result<Var> {
        let (tx, tr) = (self.value(x), self.value(row));
        let (_, n) = matrix_dims(tx, "add_row")?;
        if tr.len() != n || tr.rank() > 2 || (tr.rank() == 2 && tr.shape()[0] != 1) {
            return Err(Error::shape(format!(
                "add_row: row shape {:?} does not fit matrix {:?}",
                tr.shape(),
                tx.shape()
            )));
        }
        let r = tr.data();
        let mut data = tx.data().to_vec();
        for chunk in data.chunks_exact_mut(n) {
            chunk.iter_mut().zip(r).for_each(|(v, b)| *v += b);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.binary(x, row, out, Op::AddRow(x, row)))
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = matrix_dims(ta, "matmul lhs")?;
        let (k2, n) = matrix_dims(tb, "matmul rhs")?;
        if k != k2 {
            return Err(Error::shape(format!(
                "matmul: inner dimensions {k} and {k2} differ"
            )));
        }
        let out = Tensor::matrix(m, n, gemm(m, k, n, ta.data(), tb.data()))?;
        Ok(self.binary(a, b, out, Op::MatMul(a, b)))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var> {
        let out = self.value(x).transpose()?;
        Ok(self.unary(x, out, Op::Transpose(x)))
    }

    pub fn relu(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v.max(0.0));
        self.unary(x, out, Op::Relu(x))
    }

    pub fn tanh(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::tanh);
        self.unary(x, out, Op::Tanh(x))
    }

    pub fn exp(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::exp);
        self.unary(x, out, Op::Exp(x))
    }

    pub fn ln(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::ln);
        self.unary(x, out, Op::Ln(x))
    }

    pub fn recip(&mut self, x: Var) -> Var {
        let out = self.value(x).map(f64::recip);
        self.unary(x, out, Op::Recip(x))
    }

    pub fn square(&mut self, x: Var) -> Var {
        let out = self.value(x).map(|v| v * v);
        self.unary(x, out, Op::Square(x))
    }

    /// Scales every row (last axis) to unit Euclidean norm.
    pub fn l2_normalize(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        if tx.rank() == 0 {
            return Err(Error::shape("l2_normalize needs at least one axis"));
        }
        let d = tx.cols();
        let mut data = tx.data().to_vec();
        let mut norms = Vec::with_capacity(data.len() / d);
        for (i, row) in data.chunks_exact_mut(d).enumerate() {
            let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if norm.is_nan() || norm <= NORM_EPS {
                return Err(Error::Degenerate(format!(
                    "row {i} has norm {norm:e}, cannot normalize"
                )));
            }
            row.iter_mut().for_each(|v| *v /= norm);
            norms.push(norm);
        }
        let out = Tensor::new(tx.shape().to_vec(), data)?;
        Ok(self.unary(x, out, Op::L2Normalize { input: x, norms }))
    }

    /// Row-wise `log Σ_j exp(x_ij)` with max-shift; `[B×C] → [B]`.
    pub fn logsumexp_rows(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (b, c) = matrix_dims(tx, "logsumexp_rows")?;
        let mut out = Vec::with_capacity(b);
        for row in tx.data().chunks_exact(c) {
            out.push(logsumexp(row));
        }
        let out = Tensor::vector(out)?;
        Ok(self.unary(x, out, Op::LogSumExpRows(x)))
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).data().iter().sum();
        self.unary(x, Tensor::scalar(s), Op::Sum(x))
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let s = t.data().iter().sum::<f64>() / t.len() as f64;
        self.unary(x, Tensor::scalar(s), Op::Mean(x))
    }

    /// Sum along the last axis of a matrix; `[B×C] → [B]`.
    pub fn row_sum(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (_, c) = matrix_dims(tx, "row_sum")?;
        let out: Vec<f64> = tx.data().chunks_exact(c).map(|r| r.iter().sum()).collect();
        let out = Tensor::vector(out)?;
        Ok(self.unary(x, out, Op::RowSum(x)))
    }

    pub fn concat_cols(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (ra, ca) = matrix_dims(ta, "concat_cols lhs")?;
        let (rb, cb) = matrix_dims(tb, "concat_cols rhs")?;
        if ra != rb {
            return Err(Error::shape(format!(
                "concat_cols: row counts {ra} and {rb} differ"
            )));
        }
        let mut data = Vec::with_capacity(ra * (ca + cb));
        for i in 0..ra {
            data.extend_from_slice(ta.row(i));
            data.extend_from_slice(tb.row(i));
        }
        let out = Tensor::matrix(ra, ca + cb, data)?;
        Ok(self.binary(a, b, out, Op::ConcatCols(a, b)))
    }

    /// Columns `start..end` of a matrix.
    pub fn slice_cols(&mut self, x: Var, start: usize, end: usize) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = matrix_dims(tx, "slice_cols")?;
        if start >= end || end > c {
            return Err(Error::shape(format!(
                "slice_cols: range {start}..{end} invalid for {c} columns"
            )));
        }
        let mut data = Vec::with_capacity(r * (end - start));
        for i in 0..r {
            data.extend_from_slice(&tx.row(i)[start..end]);
        }
        let out = Tensor::matrix(r, end - start, data)?;
        Ok(self.unary(x, out, Op::SliceCols { input: x, start }))
    }

    pub fn reshape(&mut self, x: Var, shape: Vec<usize>) -> Result<Var> {
        let out = self.value(x).reshaped(shape)?;
        Ok(self.unary(x, out, Op::Reshape(x)))
    }

    /// Sorts each column ascending; the gradient follows the sorting permutation.
    pub fn sort_cols(&mut self, x: Var) -> Result<Var> {
        let tx = self.value(x);
        let (r, c) = matrix_dims(tx, "sort_cols")?;
        let data = tx.data();
        // order[j * r + i] = source row of output (i, j)
        let mut order = Vec::with_capacity(r * c);
        let mut out = vec![0.0; r * c];
        let mut idx: Vec<usize> = Vec::with_capacity(r);
        for j in 0..c {
            idx.clear();
            idx.extend(0..r);
            idx.sort_by(|&p, &q| data[p * c + j].total_cmp(&data[q * c + j]));
            for (i, &src) in idx.iter().enumerate() {
                out[i * c + j] = data[src * c + j];
            }
            order.extend_from_slice(&idx);
        }
        let out = Tensor::matrix(r, c, out)?;
        Ok(self.unary(x, out, Op::SortCols { input: x, order }))
    }

    /// Pairwise squared Euclidean distances; `[A×d], [C×d] → [A×C]`.
    pub fn sq_dists(&mut self, x: Var, y: Var) -> Result<Var> {
        let (tx, ty) = (self.value(x), self.value(y));
        let (a, d) = matrix_dims(tx, "sq_dists lhs")?;
        let (c, d2) = matrix_dims(ty, "sq_dists rhs")?;
        if d != d2 {
            return Err(Error::shape(format!(
                "sq_dists: feature dimensions {d} and {d2} differ"
            )));
        }
        let mut out = Vec::with_capacity(a * c);
        for i in 0..a {
            let xi = tx.row(i);
            for j in 0..c {
                let yj = ty.row(j);
                out.push(xi.iter().zip(yj).map(|(p, q)| (p - q) * (p - q)).sum());
            }
        }
        let out = Tensor::matrix(a, c, out)?;
        Ok(self.binary(x, y, out, Op::SqDists(x, y)))
    }

    /// Gradients of the scalar `loss` with respect to every node.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        let lt = self.value(loss);
        if lt.len() != 1 {
            return Err(Error::contract(format!(
                "backward needs a scalar loss, got shape {:?}",
                lt.shape()
            )));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::new(lt.shape().to_vec(), vec![1.0])?);

        for id in (0..=loss.0).rev() {
            let node = &self.nodes[id];
            if !node.requires_grad {
                continue;
            }
            let Some(g) = grads[id].take() else {
                continue;
            };
            self.propagate(id, &g, &mut grads)?;
            grads[id] = Some(g);
        }

        Ok(Gradients {
            grads,
            shapes: self.nodes.iter().map(|n| n.value.shape().to_vec()).collect(),
        })
    }

    fn accumulate(&self, grads: &mut [Option<Tensor>], v: Var, data: Vec<f64>) -> Result<()> {
        if !self.nodes[v.0].requires_grad {
            return Ok(());
        }
        match &mut grads[v.0] {
            Some(existing) => {
                existing
                    .data_mut()
                    .iter_mut()
                    .zip(&data)
                    .for_each(|(e, d)| *e += d);
            }
            slot @ None => {
                *slot = Some(Tensor::new(self.nodes[v.0].value.shape().to_vec(), data)?);
            }
        }
        Ok(())
    }

    fn propagate(&self, id: usize, g: &Tensor, grads: &mut [Option<Tensor>]) -> Result<()> {
        let node = &self.nodes[id];
        let gd = g.data();
        let y = node.value.data();
        match &node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                self.accumulate(grads, *a, gd.to_vec())?;
                self.accumulate(grads, *b, gd.to_vec())?;
            }
            Op::Sub(a, b) => {
                self.accumulate(grads, *a, gd.to_vec())?;
                self.accumulate(grads, *b, gd.iter().map(|v| -v).collect())?;
            }
            Op::Mul(a, b) => {
                let (ta, tb) = (self.value(*a).data(), self.value(*b).data());
                if self.requires_grad(*a) {
                    self.accumulate(grads, *a, gd.iter().zip(tb).map(|(g, v)| g * v).collect())?;
                }
                if self.requires_grad(*b) {
                    self.accumulate(grads, *b, gd.iter().zip(ta).map(|(g, v)| g * v).collect())?;
                }
            }
            Op::Scale(x, c) => {
                self.accumulate(grads, *x, gd.iter().map(|v| v * c).collect())?;
            }
            Op::AddScalar(x) => {
                self.accumulate(grads, *x, gd.to_vec())?;
            }
            Op::AddRow(x, row) => {
                self.accumulate(grads, *x, gd.to_vec())?;
                if self.requires_grad(*row) {
                    let n = self.value(*row).len();
                    let mut acc = vec![0.0; n];
                    for chunk in gd.chunks_exact(n) {
                        acc.iter_mut().zip(chunk).for_each(|(a, v)| *a += v);
                    }
                    self.accumulate(grads, *row, acc)?;
                }
            }
            Op::MatMul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if self.requires_grad(*a) {
                    // dA = G · Bᵀ
                    let mut da = vec![0.0; m * k];
                    gemm_strided(
                        m,
                        n,
                        k,
                        gd,
                        (n as isize, 1),
                        tb.data(),
                        (1, n as isize),
                        &mut da,
                        0.0,
                    );
                    self.accumulate(grads, *a, da)?;
                }
                if self.requires_grad(*b) {
                    // dB = Aᵀ · G
                    let mut db = vec![0.0; k * n];
                    gemm_strided(
                        k,
                        m,
                        n,
                        ta.data(),
                        (1, k as isize),
                        gd,
                        (n as isize, 1),
                        &mut db,
                        0.0,
                    );
                    self.accumulate(grads, *b, db)?;
                }
            }
            Op::Transpose(x) => {
                let back = g.transpose()?;
                self.accumulate(grads, *x, back.into_data())?;
            }
            Op::Relu(x) => {
                let tx = self.value(*x).data();
                let d = gd
                    .iter()
                    .zip(tx)
                    .map(|(g, v)| if *v > 0.0 { *g } else { 0.0 })
                    .collect();
                self.accumulate(grads, *x, d)?;
            }
            Op::Tanh(x) => {
                let d = gd.iter().zip(y).map(|(g, t)| g * (1.0 - t * t)).collect();
                self.accumulate(grads, *x, d)?;
            }
            Op::Exp(x) => {
                let d = gd.iter().zip(y).map(|(g, e)| g * e).collect();
                self.accumulate(grads, *x, d)?;
            }
            Op::Ln(x) => {
                let tx = self.value(*x).data();
                let d = gd.iter().zip(tx).map(|(g, v)| g / v).collect();
                self.accumulate(grads, *x, d)?;
            }
            Op::Recip(x) => {
                let d = gd.iter().zip(y).map(|(g, r)| -g * r * r).collect();
                self.accumulate(grads, *x, d)?;
            }
            Op::Square(x) => {
                let tx = self.value(*x).data();
                let d = gd.iter().zip(tx).map(|(g, v)| 2.0 * g * v).collect();
                self.accumulate(grads, *x, d)?;
            }
            Op::L2Normalize { input, norms } => {
                let d = node.value.cols();
                let mut out = vec![0.0; gd.len()];
                for (r, norm) in norms.iter().enumerate() {
                    let span = r * d..(r + 1) * d;
                    let (gr, yr) = (&gd[span.clone()], &y[span.clone()]);
                    let dot: f64 = gr.iter().zip(yr).map(|(a, b)| a * b).sum();
                    for ((o, gv), yv) in out[span].iter_mut().zip(gr).zip(yr) {
                        *o = (gv - yv * dot) / norm;
                    }
                }
                self.accumulate(grads, *input, out)?;
            }
            Op::LogSumExpRows(x) => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut out = Vec::with_capacity(tx.len());
                for ((row, lse), gi) in tx.data().chunks_exact(c).zip(y).zip(gd) {
                    out.extend(row.iter().map(|v| gi * (v - lse).exp()));
                }
                self.accumulate(grads, *x, out)?;
            }
            Op::Sum(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gd[0]; n])?;
            }
            Op::Mean(x) => {
                let n = self.value(*x).len();
                self.accumulate(grads, *x, vec![gd[0] / n as f64; n])?;
            }
            Op::RowSum(x) => {
                let tx = self.value(*x);
                let c = tx.cols();
                let mut out = Vec::with_capacity(tx.len());
                for gi in gd {
                    out.extend(std::iter::repeat_n(*gi, c));
                }
                self.accumulate(grads, *x, out)?;
            }
            Op::ConcatCols(a, b) => {
                let ca = self.value(*a).cols();
                let cb = self.value(*b).cols();
                let rows = gd.len() / (ca + cb);
                let mut ga = Vec::with_capacity(rows * ca);
                let mut gb = Vec::with_capacity(rows * cb);
                for row in gd.chunks_exact(ca + cb) {
                    ga.extend_from_slice(&row[..ca]);
                    gb.extend_from_slice(&row[ca..]);
                }
                self.accumulate(grads, *a, ga)?;
                self.accumulate(grads, *b, gb)?;
            }
            Op::SliceCols { input, start } => {
                let c = self.value(*input).cols();
                let w = node.value.cols();
                let mut out = vec![0.0; self.value(*input).len()];
                for (i, grow) in gd.chunks_exact(w).enumerate() {
                    out[i * c + start..i * c + start + w].copy_from_slice(grow);
                }
                self.accumulate(grads, *input, out)?;
            }
            Op::Reshape(x) => {
                self.accumulate(grads, *x, gd.to_vec())?;
            }
            Op::SortCols { input, order } => {
                let (r, c) = (node.value.shape()[0], node.value.shape()[1]);
                let mut out = vec![0.0; r * c];
                for j in 0..c {
                    for i in 0..r {
                        let src = order[j * r + i];
                        out[src * c + j] += gd[i * c + j];
                    }
                }
                self.accumulate(grads, *input, out)?;
            }
            Op::SqDists(x, yv) => {
                let (tx, ty) = (self.value(*x), self.value(*yv));
                let (a, d) = (tx.shape()[0], tx.shape()[1]);
                let c = ty.shape()[0];
                let want_x = self.requires_grad(*x);
                let want_y = self.requires_grad(*yv);
                let mut dx = vec![0.0; if want_x { a * d } else { 0 }];
                let mut dy = vec![0.0; if want_y { c * d } else { 0 }];
                for i in 0..a {
                    let xi = tx.row(i);
                    for j in 0..c {
                        let w = 2.0 * gd[i * c + j];
                        if w == 0.0 {
                            continue;
                        }
                        let yj = ty.row(j);
                        for k in 0..d {
                            let diff = w * (xi[k] - yj[k]);
                            if want_x {
                                dx[i * d + k] += diff;
                            }
                            if want_y {
                                dy[j * d + k] -= diff;
                            }
                        }
                    }
                }
                if want_x {
                    self.accumulate(grads, *x, dx)?;
                }
                if want_y {
                    self.accumulate(grads, *yv, dy)?;
                }
            }
        }
        Ok(())
    }
}

/// Max-shifted `log Σ exp(v)`.
pub fn logsumexp(row: &[f64]) -> f64 {
    let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !max.is_finite() {
        return max;
    }
    max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln()
}
