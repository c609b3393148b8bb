//! Eager reverse-mode differentiation over dense matrices.
//!
//! A [`Tape`] records every operation as it runs. Nodes are appended in
//! evaluation order, so walking the record backwards is a reverse
//! topological traversal and each node is visited exactly once.

use std::cell::RefCell;
use std::rc::Rc;

use super::csr::spmm_values;
use super::matrix::sigmoid;
use super::{CsrMatrix, Matrix};
use crate::error::{Error, Result};

/// Index of a node inside its tape.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct NodeId(usize);

impl NodeId {
    pub fn index(self) -> usize {
        self.0
    }
}

enum Op {
    Leaf,
    MatMul(NodeId, NodeId),
    Transpose(NodeId),
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Hadamard(NodeId, NodeId),
    Scale(NodeId, f64),
    AddScalar(NodeId),
    Sigmoid(NodeId),
    Relu(NodeId),
    LeakyRelu(NodeId, f64),
    Exp(NodeId),
    RowSum(NodeId),
    ColSum(NodeId),
    BroadcastRow(NodeId),
    BroadcastCol(NodeId),
    ConcatCols(Vec<NodeId>),
    SliceCols(NodeId, usize),
    Divide(NodeId, NodeId),
    GatherRows(NodeId, Rc<[usize]>),
    Spmm {
        pattern: Rc<CsrMatrix>,
        weights: Option<NodeId>,
        v: NodeId,
    },
    SegmentSoftmax(NodeId, Rc<[usize]>),
    LayerNorm {
        x: NodeId,
        gain: NodeId,
        shift: NodeId,
        xhat: Matrix,
        inv_std: Vec<f64>,
    },
    LogSoftmaxRows(NodeId),
    PickEntries(NodeId, Rc<[(usize, usize)]>),
}

struct Node {
    value: Rc<Matrix>,
    op: Op,
}

/// Computation record for one forward/backward pass.
#[derive(Default)]
pub struct Tape {
    nodes: RefCell<Vec<Node>>,
}

/// Handle to a matrix recorded on a [`Tape`].
#[derive(Clone, Copy)]
pub struct DiffValue<'t> {
    tape: &'t Tape,
    id: NodeId,
}

impl std::fmt::Debug for DiffValue<'_> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "DiffValue({:?}, {:?})", self.id, self.shape())
    }
}

impl Tape {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.borrow().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Registers an input (parameter or constant).
    pub fn leaf(&self, value: Matrix) -> DiffValue<'_> {
        self.push(value, Op::Leaf)
    }

    fn push(&self, value: Matrix, op: Op) -> DiffValue<'_> {
        let mut nodes = self.nodes.borrow_mut();
        let id = NodeId(nodes.len());
        nodes.push(Node {
            value: Rc::new(value),
            op,
        });
        DiffValue { tape: self, id }
    }

    fn value_of(&self, id: NodeId) -> Rc<Matrix> {
        Rc::clone(&self.nodes.borrow()[id.0].value)
    }

    /// Sparse-dense product `A · V` with a constant sparse matrix.
    pub fn spmm<'t>(&'t self, a: &Rc<CsrMatrix>, v: DiffValue<'t>) -> Result<DiffValue<'t>> {
        self.check(v);
        let out = a.matmul_dense(&v.value())?;
        Ok(self.push(
            out,
            Op::Spmm {
                pattern: Rc::clone(a),
                weights: None,
                v: v.id,
            },
        ))
    }

    /// Sparse-dense product where the stored entries of `pattern` are replaced
    /// by the differentiable column vector `weights` (one entry per nonzero).
    pub fn spmm_weighted<'t>(
        &'t self,
        pattern: &Rc<CsrMatrix>,
        weights: DiffValue<'t>,
        v: DiffValue<'t>,
    ) -> Result<DiffValue<'t>> {
        self.check(weights);
        self.check(v);
        let w = weights.value();
        if w.shape() != (pattern.nnz(), 1) {
            return Err(Error::Shape {
                op: "spmm_weighted",
                left: (pattern.nnz(), 1),
                right: w.shape(),
            });
        }
        let out = spmm_values(pattern, w.data(), &v.value())?;
        Ok(self.push(
            out,
            Op::Spmm {
                pattern: Rc::clone(pattern),
                weights: Some(weights.id),
                v: v.id,
            },
        ))
    }

    fn check(&self, v: DiffValue<'_>) {
        assert!(std::ptr::eq(self, v.tape), "DiffValue used with a foreign tape");
    }

    /// Reverse pass from a 1×1 loss. Every node of the record receives a
    /// gradient slot; nodes the loss does not depend on read as zero.
    pub fn backward(&self, loss: DiffValue<'_>) -> Result<Gradients> {
        self.check(loss);
        let nodes = self.nodes.borrow();
        let shape = nodes[loss.id.0].value.shape();
        if shape != (1, 1) {
            return Err(Error::NotScalar(shape));
        }
        let mut grads: Vec<Option<Matrix>> = vec![None; loss.id.0 + 1];
        grads[loss.id.0] = Some(Matrix::filled(1, 1, 1.0));

        for idx in (0..=loss.id.0).rev() {
            let Some(g) = grads[idx].take() else {
                continue;
            };
            let node = &nodes[idx];
            let val = |id: NodeId| -> &Matrix { &nodes[id.0].value };
            match &node.op {
                Op::Leaf => {}
                Op::MatMul(a, b) => {
                    let ga = g.matmul_t(val(*b))?;
                    let gb = val(*a).t_matmul(&g)?;
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Transpose(a) => accumulate(&mut grads, *a, g.transpose()),
                Op::Add(a, b) => {
                    accumulate(&mut grads, *b, g.clone());
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Sub(a, b) => {
                    accumulate(&mut grads, *b, g.map(|x| -x));
                    accumulate(&mut grads, *a, g.clone());
                }
                Op::Hadamard(a, b) => {
                    let ga = g.zip_map(val(*b), |x, y| x * y);
                    let gb = g.zip_map(val(*a), |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::Scale(a, c) => {
                    let c = *c;
                    accumulate(&mut grads, *a, g.map(|x| x * c));
                }
                Op::AddScalar(a) => accumulate(&mut grads, *a, g.clone()),
                Op::Sigmoid(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y * (1.0 - y));
                    accumulate(&mut grads, *a, ga);
                }
                Op::Relu(a) => {
                    let ga = g.zip_map(val(*a), |x, z| if z > 0.0 { x } else { 0.0 });
                    accumulate(&mut grads, *a, ga);
                }
                Op::LeakyRelu(a, slope) => {
                    let s = *slope;
                    let ga = g.zip_map(val(*a), |x, z| if z > 0.0 { x } else { s * x });
                    accumulate(&mut grads, *a, ga);
                }
                Op::Exp(a) => {
                    let ga = g.zip_map(&node.value, |x, y| x * y);
                    accumulate(&mut grads, *a, ga);
                }
                Op::RowSum(a) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        ga.row_mut(i).fill(g[(i, 0)]);
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::ColSum(a) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for i in 0..r {
                        ga.row_mut(i).copy_from_slice(g.row(0));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::BroadcastRow(a) => accumulate(&mut grads, *a, col_sum(&g)),
                Op::BroadcastCol(a) => accumulate(&mut grads, *a, row_sum(&g)),
                Op::ConcatCols(parts) => {
                    let mut start = 0;
                    for p in parts {
                        let w = val(*p).cols();
                        accumulate(&mut grads, *p, slice_cols(&g, start, start + w));
                        start += w;
                    }
                }
                Op::SliceCols(a, start) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    let w = g.cols();
                    for i in 0..r {
                        ga.row_mut(i)[*start..*start + w].copy_from_slice(g.row(i));
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Divide(a, b) => {
                    let (av, bv) = (val(*a), val(*b));
                    let ga = g.zip_map(bv, |x, d| x / d);
                    let mut gb = Matrix::zeros(bv.rows(), bv.cols());
                    for ((o, &x), (&n, &d)) in gb
                        .data_mut()
                        .iter_mut()
                        .zip(g.data())
                        .zip(av.data().iter().zip(bv.data()))
                    {
                        *o = -x * n / (d * d);
                    }
                    accumulate(&mut grads, *a, ga);
                    accumulate(&mut grads, *b, gb);
                }
                Op::GatherRows(a, idx) => {
                    let (r, c) = val(*a).shape();
                    let mut ga = Matrix::zeros(r, c);
                    for (k, &i) in idx.iter().enumerate() {
                        for (o, &x) in ga.row_mut(i).iter_mut().zip(g.row(k)) {
                            *o += x;
                        }
                    }
                    accumulate(&mut grads, *a, ga);
                }
                Op::Spmm { pattern, weights, v } => {
                    let vv = val(*v);
                    let wv: &[f64] = match weights {
                        Some(w) => val(*w).data(),
                        None => pattern.values(),
                    };
                    let mut gv = Matrix::zeros(vv.rows(), vv.cols());
                    let mut gw = weights.map(|_| Matrix::zeros(pattern.nnz(), 1));
                    for i in 0..pattern.rows() {
                        let gi = g.row(i);
                        for e in pattern.offsets()[i]..pattern.offsets()[i + 1] {
                            let j = pattern.indices()[e];
                            let a = wv[e];
                            for (o, &x) in gv.row_mut(j).iter_mut().zip(gi) {
                                *o += a * x;
                            }
                            if let Some(gw) = gw.as_mut() {
                                gw[(e, 0)] = super::matrix::dot(gi, vv.row(j));
                            }
                        }
                    }
                    accumulate(&mut grads, *v, gv);
                    if let (Some(w), Some(gw)) = (weights, gw) {
                        accumulate(&mut grads, *w, gw);
                    }
                }
                Op::SegmentSoftmax(s, offsets) => {
                    let y = &node.value;
                    let mut gs = Matrix::zeros(y.rows(), 1);
                    for seg in offsets.windows(2) {
                        let span = seg[0]..seg[1];
                        let inner: f64 = span.clone().map(|k| y[(k, 0)] * g[(k, 0)]).sum();
                        for k in span {
                            gs[(k, 0)] = y[(k, 0)] * (g[(k, 0)] - inner);
                        }
                    }
                    accumulate(&mut grads, *s, gs);
                }
                Op::LayerNorm {
                    x,
                    gain,
                    shift,
                    xhat,
                    inv_std,
                } => {
                    let gv = val(*gain);
                    let (r, c) = xhat.shape();
                    let mut gx = Matrix::zeros(r, c);
                    let mut ggain = Matrix::zeros(1, c);
                    let mut gshift = Matrix::zeros(1, c);
                    let mut dxhat = vec![0.0; c];
                    for i in 0..r {
                        let gi = g.row(i);
                        let xh = xhat.row(i);
                        for j in 0..c {
                            ggain[(0, j)] += gi[j] * xh[j];
                            gshift[(0, j)] += gi[j];
                            dxhat[j] = gi[j] * gv[(0, j)];
                        }
                        let mean_d = dxhat.iter().sum::<f64>() / c as f64;
                        let mean_dx = dxhat.iter().zip(xh).map(|(a, b)| a * b).sum::<f64>() / c as f64;
                        let s = inv_std[i];
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o = s * (dxhat[j] - mean_d - xh[j] * mean_dx);
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                    accumulate(&mut grads, *gain, ggain);
                    accumulate(&mut grads, *shift, gshift);
                }
                Op::LogSoftmaxRows(x) => {
                    let y = &node.value;
                    let mut gx = Matrix::zeros(y.rows(), y.cols());
                    for i in 0..y.rows() {
                        let total: f64 = g.row(i).iter().sum();
                        for (j, o) in gx.row_mut(i).iter_mut().enumerate() {
                            *o = g[(i, j)] - y[(i, j)].exp() * total;
                        }
                    }
                    accumulate(&mut grads, *x, gx);
                }
                Op::PickEntries(x, coords) => {
                    let (r, c) = val(*x).shape();
                    let mut gx = Matrix::zeros(r, c);
                    for (k, &(i, j)) in coords.iter().enumerate() {
                        gx[(i, j)] += g[(k, 0)];
                    }
                    accumulate(&mut grads, *x, gx);
                }
            }
            grads[idx] = Some(g);
        }

        let shapes = nodes.iter().map(|n| n.value.shape()).collect();
        Ok(Gradients { grads, shapes })
    }
}

fn accumulate(grads: &mut [Option<Matrix>], id: NodeId, g: Matrix) {
    match &mut grads[id.0] {
        Some(acc) => acc.add_assign(&g),
        slot @ None => *slot = Some(g),
    }
}

fn row_sum(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), 1);
    for i in 0..m.rows() {
        out[(i, 0)] = m.row(i).iter().sum();
    }
    out
}

fn col_sum(m: &Matrix) -> Matrix {
    let mut out = Matrix::zeros(1, m.cols());
    for i in 0..m.rows() {
        for (o, &x) in out.data_mut().iter_mut().zip(m.row(i)) {
            *o += x;
        }
    }
    out
}

fn slice_cols(m: &Matrix, start: usize, end: usize) -> Matrix {
    let mut out = Matrix::zeros(m.rows(), end - start);
    for i in 0..m.rows() {
        out.row_mut(i).copy_from_slice(&m.row(i)[start..end]);
    }
    out
}

/// Gradients produced by [`Tape::backward`].
pub struct Gradients {
    grads: Vec<Option<Matrix>>,
    shapes: Vec<(usize, usize)>,
}

impl Gradients {
    /// Gradient with respect to `v`; zeros when the loss does not reach it.
    pub fn wrt(&self, v: DiffValue<'_>) -> Matrix {
        self.by_id(v.id)
    }

    pub fn by_id(&self, id: NodeId) -> Matrix {
        match self.grads.get(id.0) {
            Some(Some(g)) => g.clone(),
            _ => {
                let (r, c) = self.shapes[id.0];
                Matrix::zeros(r, c)
            }
        }
    }
}

fn shape_err(op: &'static str, a: &Matrix, b: &Matrix) -> Error {
    Error::Shape {
        op,
        left: a.shape(),
        right: b.shape(),
    }
}

impl<'t> DiffValue<'t> {
    pub fn id(&self) -> NodeId {
        self.id
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn value(&self) -> Rc<Matrix> {
        self.tape.value_of(self.id)
    }

    pub fn shape(&self) -> (usize, usize) {
        self.value().shape()
    }

    fn same_tape(&self, other: &DiffValue<'t>) {
        assert!(
            std::ptr::eq(self.tape, other.tape),
            "DiffValues from different tapes"
        );
    }

    fn unary(&self, value: Matrix, op: Op) -> DiffValue<'t> {
        self.tape.push(value, op)
    }

    /// `(r×k) · (k×c) → r×c`.
    pub fn matmul(&self, other: DiffValue<'t>) -> Result<DiffValue<'t>> {
        self.same_tape(&other);
        let out = self.value().matmul(&other.value())?;
        Ok(self.unary(out, Op::MatMul(self.id, other.id)))
    }

    pub fn transpose(&self) -> DiffValue<'t> {
        let out = self.value().transpose();
        self.unary(out, Op::Transpose(self.id))
    }

    fn binary_same_shape(
        &self,
        other: DiffValue<'t>,
        name: &'static str,
        f: impl Fn(f64, f64) -> f64,
    ) -> Result<Matrix> {
        self.same_tape(&other);
        let (a, b) = (self.value(), other.value());
        if a.shape() != b.shape() {
            return Err(shape_err(name, &a, &b));
        }
        Ok(a.zip_map(&b, f))
    }

    /// Elementwise sum; shapes must be equal.
    pub fn add(&self, other: DiffValue<'t>) -> Result<DiffValue<'t>> {
        let out = self.binary_same_shape(other, "add", |a, b| a + b)?;
        Ok(self.unary(out, Op::Add(self.id, other.id)))
    }

    /// Elementwise difference; shapes must be equal.
    pub fn sub(&self, other: DiffValue<'t>) -> Result<DiffValue<'t>> {
        let out = self.binary_same_shape(other, "subtract", |a, b| a - b)?;
        Ok(self.unary(out, Op::Sub(self.id, other.id)))
    }

    /// Elementwise product; shapes must be equal.
    pub fn hadamard(&self, other: DiffValue<'t>) -> Result<DiffValue<'t>> {
        let out = self.binary_same_shape(other, "hadamard", |a, b| a * b)?;
        Ok(self.unary(out, Op::Hadamard(self.id, other.id)))
    }

    /// Elementwise quotient; shapes must be equal and the denominator nonzero.
    pub fn divide(&self, other: DiffValue<'t>) -> Result<DiffValue<'t>> {
        let den = other.value();
        if let Some(k) = den.data().iter().position(|&d| d == 0.0) {
            return Err(Error::DivideByZero {
                row: k / den.cols(),
                col: k % den.cols(),
            });
        }
        let out = self.binary_same_shape(other, "divide", |a, b| a / b)?;
        Ok(self.unary(out, Op::Divide(self.id, other.id)))
    }

    pub fn scale(&self, c: f64) -> DiffValue<'t> {
        let out = self.value().map(|x| x * c);
        self.unary(out, Op::Scale(self.id, c))
    }

    pub fn add_scalar(&self, c: f64) -> DiffValue<'t> {
        let out = self.value().map(|x| x + c);
        self.unary(out, Op::AddScalar(self.id))
    }

    /// `1 − x`, elementwise.
    pub fn one_minus(&self) -> DiffValue<'t> {
        self.scale(-1.0).add_scalar(1.0)
    }

    pub fn sigmoid(&self) -> DiffValue<'t> {
        let out = self.value().map(sigmoid);
        self.unary(out, Op::Sigmoid(self.id))
    }

    pub fn relu(&self) -> DiffValue<'t> {
        let out = self.value().map(|x| x.max(0.0));
        self.unary(out, Op::Relu(self.id))
    }

    pub fn leaky_relu(&self, slope: f64) -> DiffValue<'t> {
        let out = self.value().map(|x| if x > 0.0 { x } else { slope * x });
        self.unary(out, Op::LeakyRelu(self.id, slope))
    }

    pub fn exp(&self) -> DiffValue<'t> {
        let out = self.value().map(f64::exp);
        self.unary(out, Op::Exp(self.id))
    }

    /// `r×c → r×1`.
    pub fn row_sum(&self) -> DiffValue<'t> {
        let out = row_sum(&self.value());
        self.unary(out, Op::RowSum(self.id))
    }

    /// `r×c → 1×c`.
    pub fn col_sum(&self) -> DiffValue<'t> {
        let out = col_sum(&self.value());
        self.unary(out, Op::ColSum(self.id))
    }

    /// Sum of all entries as a 1×1 value.
    pub fn sum(&self) -> DiffValue<'t> {
        self.row_sum().col_sum()
    }

    /// Repeats a `1×c` row vector `rows` times.
    pub fn broadcast_row(&self, rows: usize) -> Result<DiffValue<'t>> {
        let v = self.value();
        if v.rows() != 1 {
            return Err(shape_err("broadcast_row", &v, &Matrix::zeros(1, v.cols())));
        }
        let mut out = Matrix::zeros(rows, v.cols());
        for i in 0..rows {
            out.row_mut(i).copy_from_slice(v.row(0));
        }
        Ok(self.unary(out, Op::BroadcastRow(self.id)))
    }

    /// Repeats an `r×1` column vector `cols` times.
    pub fn broadcast_col(&self, cols: usize) -> Result<DiffValue<'t>> {
        let v = self.value();
        if v.cols() != 1 {
            return Err(shape_err("broadcast_col", &v, &Matrix::zeros(v.rows(), 1)));
        }
        let mut out = Matrix::zeros(v.rows(), cols);
        for i in 0..v.rows() {
            out.row_mut(i).fill(v[(i, 0)]);
        }
        Ok(self.unary(out, Op::BroadcastCol(self.id)))
    }

    /// Horizontal concatenation; all parts need the same row count.
    pub fn concat_cols(parts: &[DiffValue<'t>]) -> Result<DiffValue<'t>> {
        let first = parts
            .first()
            .ok_or_else(|| crate::error::invalid("concat_cols: no inputs"))?;
        let values: Vec<Rc<Matrix>> = parts.iter().map(DiffValue::value).collect();
        let rows = values[0].rows();
        for v in &values[1..] {
            if v.rows() != rows {
                return Err(shape_err("concat_cols", &values[0], v));
            }
        }
        let total: usize = values.iter().map(|v| v.cols()).sum();
        let mut out = Matrix::zeros(rows, total);
        for i in 0..rows {
            let row = out.row_mut(i);
            let mut start = 0;
            for v in &values {
                row[start..start + v.cols()].copy_from_slice(v.row(i));
                start += v.cols();
            }
        }
        for p in &parts[1..] {
            first.same_tape(p);
        }
        Ok(first.unary(out, Op::ConcatCols(parts.iter().map(|p| p.id).collect())))
    }

    /// Columns `start..end`.
    pub fn slice_cols(&self, start: usize, end: usize) -> Result<DiffValue<'t>> {
        let v = self.value();
        if start > end || end > v.cols() {
            return Err(shape_err("slice_cols", &v, &Matrix::zeros(v.rows(), end)));
        }
        let out = slice_cols(&v, start, end);
        Ok(self.unary(out, Op::SliceCols(self.id, start)))
    }

    /// Rows picked by `idx` (repeats allowed); backward scatter-adds.
    pub fn gather_rows(&self, idx: Rc<[usize]>) -> Result<DiffValue<'t>> {
        let v = self.value();
        if let Some(&bad) = idx.iter().find(|&&i| i >= v.rows()) {
            return Err(Error::Shape {
                op: "gather_rows",
                left: v.shape(),
                right: (bad, 0),
            });
        }
        let out = v.gather_rows(&idx);
        Ok(self.unary(out, Op::GatherRows(self.id, idx)))
    }

    /// Softmax over contiguous segments of a column vector.
    ///
    /// `offsets` has one more entry than there are segments; segment `s`
    /// spans `offsets[s]..offsets[s + 1]`.
    pub fn segment_softmax(&self, offsets: Rc<[usize]>) -> Result<DiffValue<'t>> {
        let s = self.value();
        if s.cols() != 1 || offsets.last().copied() != Some(s.rows()) || offsets[0] != 0 {
            return Err(shape_err("segment_softmax", &s, &Matrix::zeros(*offsets.last().unwrap_or(&0), 1)));
        }
        let mut out = Matrix::zeros(s.rows(), 1);
        for (seg, w) in offsets.windows(2).enumerate() {
            if w[0] >= w[1] {
                return Err(Error::EmptySegment(seg));
            }
            let span = w[0]..w[1];
            let max = span.clone().map(|k| s[(k, 0)]).fold(f64::NEG_INFINITY, f64::max);
            let mut total = 0.0;
            for k in span.clone() {
                let e = (s[(k, 0)] - max).exp();
                out[(k, 0)] = e;
                total += e;
            }
            for k in span {
                out[(k, 0)] /= total;
            }
        }
        Ok(self.unary(out, Op::SegmentSoftmax(self.id, offsets)))
    }

    /// Row-wise standardisation followed by `gain`/`shift` (both `1×cols`).
    ///
    /// The variance is the biased one and `eps` sits under the square root.
    /// Rows whose variance plus `eps` is exactly zero normalise to zero.
    pub fn layer_norm_rows(&self, gain: DiffValue<'t>, shift: DiffValue<'t>, eps: f64) -> Result<DiffValue<'t>> {
        self.same_tape(&gain);
        self.same_tape(&shift);
        let (x, gv, sv) = (self.value(), gain.value(), shift.value());
        let c = x.cols();
        if gv.shape() != (1, c) {
            return Err(shape_err("layer_norm_rows", &x, &gv));
        }
        if sv.shape() != (1, c) {
            return Err(shape_err("layer_norm_rows", &x, &sv));
        }
        let mut xhat = Matrix::zeros(x.rows(), c);
        let mut inv_std = vec![0.0; x.rows()];
        let mut out = Matrix::zeros(x.rows(), c);
        for i in 0..x.rows() {
            let row = x.row(i);
            let mean = row.iter().sum::<f64>() / c as f64;
            let var = row.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / c as f64;
            let denom = var + eps;
            let s = if denom > 0.0 { 1.0 / denom.sqrt() } else { 0.0 };
            inv_std[i] = s;
            for j in 0..c {
                let h = (row[j] - mean) * s;
                xhat[(i, j)] = h;
                out[(i, j)] = h * gv[(0, j)] + sv[(0, j)];
            }
        }
        Ok(self.unary(
            out,
            Op::LayerNorm {
                x: self.id,
                gain: gain.id,
                shift: shift.id,
                xhat,
                inv_std,
            },
        ))
    }

    /// Max-subtracted row-wise log-softmax.
    pub fn log_softmax_rows(&self) -> DiffValue<'t> {
        let x = self.value();
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for i in 0..x.rows() {
            let row = x.row(i);
            let max = row.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
            for (o, v) in out.row_mut(i).iter_mut().zip(row) {
                *o = v - lse;
            }
        }
        self.unary(out, Op::LogSoftmaxRows(self.id))
    }

    /// Picks individual entries into a `k×1` column.
    pub fn pick_entries(&self, coords: Rc<[(usize, usize)]>) -> Result<DiffValue<'t>> {
        let v = self.value();
        let mut out = Matrix::zeros(coords.len(), 1);
        for (k, &(i, j)) in coords.iter().enumerate() {
            if i >= v.rows() || j >= v.cols() {
                return Err(Error::Shape {
                    op: "pick_entries",
                    left: v.shape(),
                    right: (i, j),
                });
            }
            out[(k, 0)] = v[(i, j)];
        }
        Ok(self.unary(out, Op::PickEntries(self.id, coords)))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn m(rows: &[Vec<f64>]) -> Matrix {
        Matrix::from_rows(rows)
    }

    #[test]
    fn sigmoid_at_zero() {
        let t = Tape::new();
        let x = t.leaf(Matrix::zeros(1, 1));
        assert_eq!(x.sigmoid().value()[(0, 0)], 0.5);
    }

    #[test]
    fn hadamard_small() {
        let t = Tape::new();
        let a = t.leaf(m(&[vec![1.0, 2.0]]));
        let b = t.leaf(m(&[vec![3.0, 4.0]]));
        assert_eq!(a.hadamard(b).unwrap().value().data(), &[3.0, 8.0]);
    }

    #[test]
    fn matmul_by_identity() {
        let t = Tape::new();
        let i3 = t.leaf(Matrix::identity(3));
        let x = m(&[vec![1.0, -2.0], vec![0.5, 3.0], vec![7.0, 0.0]]);
        let y = i3.matmul(t.leaf(x.clone())).unwrap();
        assert_eq!(*y.value(), x);
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 3));
        let b = t.leaf(Matrix::zeros(3, 2));
        let err = a.add(b).unwrap_err().to_string();
        assert!(err.contains("(2, 3)") && err.contains("(3, 2)"), "{err}");
    }

    #[test]
    fn divide_by_zero_names_entry() {
        let t = Tape::new();
        let a = t.leaf(Matrix::filled(2, 2, 1.0));
        let b = t.leaf(m(&[vec![1.0, 1.0], vec![0.0, 1.0]]));
        match a.divide(b) {
            Err(Error::DivideByZero { row: 1, col: 0 }) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn spmm_swap_and_identity() {
        let t = Tape::new();
        let v = t.leaf(Matrix::column(&[1.0, 2.0]));
        let swap = Rc::new(CsrMatrix::from_triplets(2, 2, &[(0, 1, 1.0), (1, 0, 1.0)]).unwrap());
        assert_eq!(t.spmm(&swap, v).unwrap().value().data(), &[2.0, 1.0]);
        let id = Rc::new(CsrMatrix::identity(2));
        assert_eq!(t.spmm(&id, v).unwrap().value().data(), &[1.0, 2.0]);
    }

    #[test]
    fn spmm_path_with_self_loops() {
        let t = Tape::new();
        let a = Rc::new(
            CsrMatrix::from_triplets(2, 2, &[(0, 0, 0.5), (0, 1, 0.5), (1, 0, 0.5), (1, 1, 0.5)]).unwrap(),
        );
        let v = t.leaf(Matrix::column(&[2.0, 4.0]));
        assert_eq!(t.spmm(&a, v).unwrap().value().data(), &[3.0, 3.0]);
    }

    #[test]
    fn spmm_shape_mismatch() {
        let t = Tape::new();
        let a = Rc::new(CsrMatrix::identity(3));
        let v = t.leaf(Matrix::zeros(2, 1));
        assert!(t.spmm(&a, v).is_err());
    }

    #[test]
    fn segment_softmax_examples() {
        let t = Tape::new();
        let s = t.leaf(Matrix::column(&[0.0, 0.0, 7.5, 2f64.ln(), 0.0]));
        let y = s.segment_softmax(Rc::from(vec![0, 2, 3, 5])).unwrap().value();
        assert_eq!(y.data()[..3], [0.5, 0.5, 1.0]);
        assert!((y[(3, 0)] - 2.0 / 3.0).abs() < 1e-15);
        assert!((y[(4, 0)] - 1.0 / 3.0).abs() < 1e-15);
    }

    #[test]
    fn segment_softmax_rejects_empty_segment() {
        let t = Tape::new();
        let s = t.leaf(Matrix::column(&[0.0, 1.0]));
        match s.segment_softmax(Rc::from(vec![0, 2, 2])) {
            Err(Error::EmptySegment(1)) => {}
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn layer_norm_examples() {
        let t = Tape::new();
        let gain = t.leaf(Matrix::filled(1, 2, 1.0));
        let shift = t.leaf(Matrix::zeros(1, 2));
        let x = t.leaf(m(&[vec![1.0, -1.0], vec![3.0, 3.0], vec![0.0, 2.0]]));
        let y = x.layer_norm_rows(gain, shift, 0.0).unwrap().value();
        assert_eq!(y.row(0), &[1.0, -1.0]);
        assert_eq!(y.row(1), &[0.0, 0.0]);
        assert_eq!(y.row(2), &[-1.0, 1.0]);
        let y = x.layer_norm_rows(gain, shift, 1e-12).unwrap().value();
        assert!((y[(0, 0)] - 1.0).abs() < 1e-9);
    }

    #[test]
    fn layer_norm_constant_row_maps_to_shift() {
        let t = Tape::new();
        let gain = t.leaf(m(&[vec![2.0, 3.0, 4.0]]));
        let shift = t.leaf(m(&[vec![0.1, 0.2, 0.3]]));
        let x = t.leaf(m(&[vec![0.7, 0.7, 0.7]]));
        let y = x.layer_norm_rows(gain, shift, 1e-5).unwrap().value();
        for (a, b) in y.row(0).iter().zip([0.1, 0.2, 0.3]) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn log_softmax_examples() {
        let t = Tape::new();
        let x = t.leaf(m(&[vec![0.0, 0.0], vec![1000.0, 0.0], vec![1.5, -0.5]]));
        let y = x.log_softmax_rows().value();
        assert!((y[(0, 0)] + 2f64.ln()).abs() < 1e-15);
        assert!(y.is_finite());
        let shifted = t.leaf(m(&[vec![0.0, 0.0], vec![1000.0, 0.0], vec![11.5, 9.5]]));
        let y2 = shifted.log_softmax_rows().value();
        assert!(y.max_abs_diff(&y2) < 1e-12);
        for i in 0..3 {
            let s: f64 = y.row(i).iter().map(|v| v.exp()).sum();
            assert!((s - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn backward_sigmoid_and_hadamard() {
        let t = Tape::new();
        let x = t.leaf(Matrix::zeros(1, 1));
        let loss = x.sigmoid().sum();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(x)[(0, 0)], 0.25);

        let t = Tape::new();
        let a = t.leaf(m(&[vec![1.0, 2.0], vec![3.0, 4.0]]));
        let b = t.leaf(m(&[vec![-1.0, 0.5], vec![2.0, 0.25]]));
        let unused = t.leaf(Matrix::filled(3, 1, 9.0));
        let loss = a.hadamard(b).unwrap().sum();
        let g = t.backward(loss).unwrap();
        assert_eq!(g.wrt(a), *b.value());
        assert_eq!(g.wrt(unused), Matrix::zeros(3, 1));
    }

    #[test]
    fn backward_rejects_non_scalar() {
        let t = Tape::new();
        let a = t.leaf(Matrix::zeros(2, 1));
        assert!(matches!(t.backward(a), Err(Error::NotScalar((2, 1)))));
    }
}
