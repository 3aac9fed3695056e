//! Reverse-mode automatic differentiation over dense 1-D/2-D arrays.
//!
//! The engine is deliberately small: an eager [`Tape`] records every
//! operation as it is evaluated, and [`Tape::backward`] replays the
//! records in reverse to accumulate gradients. Tensors are row-major
//! `f64` matrices; vectors are `1 x n` or `n x 1`. Elementwise binary
//! ops support the broadcasts the networks need (scalar, per-row column
//! and per-column row operands); nothing more.
//!
//! A tape and its nodes belong to one thread of execution. Distinct
//! tapes are independent and may run in parallel.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::error::Error;
use crate::Result;

/// Numerically stable logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + libm::exp(-x))
    } else {
        let e = libm::exp(x);
        e / (1.0 + e)
    }
}

/// Numerically stable `ln(1 + e^x)`.
pub fn softplus(x: f64) -> f64 {
    if x > 0.0 {
        x + libm::log1p(libm::exp(-x))
    } else {
        libm::log1p(libm::exp(x))
    }
}

/// Dense row-major matrix of finite `f64` values.
#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Tensor {
    /// Builds a tensor, validating the element count and finiteness.
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::validation("tensor shape", "zero-sized dimension"));
        }
        if data.len() != rows * cols {
            return Err(Error::validation(
                "tensor data",
                format!("expected {} values, got {}", rows * cols, data.len()),
            ));
        }
        if !data.iter().all(|v| v.is_finite()) {
            return Err(Error::validation("tensor data", "non-finite value"));
        }
        Ok(Tensor { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Tensor {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn scalar(v: f64) -> Self {
        Tensor {
            rows: 1,
            cols: 1,
            data: vec![v],
        }
    }

    /// 1 x n row vector.
    pub fn row(values: &[f64]) -> Result<Self> {
        Tensor::new(1, values.len(), values.to_vec())
    }

    /// n x 1 column vector.
    pub fn column(values: &[f64]) -> Result<Self> {
        Tensor::new(values.len(), 1, values.to_vec())
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn shape(&self) -> (usize, usize) {
        (self.rows, self.cols)
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn get(&self, r: usize, c: usize) -> f64 {
        self.data[r * self.cols + c]
    }

    pub fn set(&mut self, r: usize, c: usize, v: f64) {
        self.data[r * self.cols + c] = v;
    }

    pub fn row_slice(&self, r: usize) -> &[f64] {
        &self.data[r * self.cols..(r + 1) * self.cols]
    }

    fn is_scalar(&self) -> bool {
        self.rows == 1 && self.cols == 1
    }
}

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct NodeId(usize);

/// Reduction / broadcast axis selector for `sum` and `mean`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Axis {
    /// Reduce everything to a scalar.
    All,
    /// Reduce over rows, producing a `1 x cols` result.
    Rows,
    /// Reduce over columns, producing a `rows x 1` result.
    Cols,
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(NodeId, NodeId),
    Sub(NodeId, NodeId),
    Mul(NodeId, NodeId),
    Div(NodeId, NodeId),
    Matmul(NodeId, NodeId),
    Dot(NodeId, NodeId),
    Conv1d {
        input: NodeId,
        weight: NodeId,
        conv: ConvSpec,
    },
    ConvTranspose1d {
        input: NodeId,
        weight: NodeId,
        conv: ConvSpec,
    },
    LeakyRelu(NodeId),
    Tanh(NodeId),
    Sigmoid(NodeId),
    Softplus(NodeId),
    Exp(NodeId),
    Log(NodeId),
    Abs(NodeId),
    Pow(NodeId, f64),
    Sum(NodeId, Axis),
    Mean(NodeId, Axis),
    Concat(Vec<NodeId>, Axis),
    Slice {
        input: NodeId,
        r0: usize,
        c0: usize,
    },
    Transpose(NodeId),
    Scale(NodeId, f64),
    AddConst(NodeId),
}

/// Geometry of a 1-D convolution.
#[derive(Debug, Clone, Copy)]
pub struct ConvSpec {
    pub in_channels: usize,
    pub out_channels: usize,
    pub kernel: usize,
    pub stride: usize,
    pub pad: usize,
}

impl ConvSpec {
    fn validate(&self) -> Result<()> {
        if self.in_channels == 0 || self.out_channels == 0 || self.kernel == 0 || self.stride == 0 {
            return Err(Error::validation("conv spec", "zero-valued field"));
        }
        Ok(())
    }

    /// Output length of a forward convolution over `len` samples.
    pub fn conv_out_len(&self, len: usize) -> Result<usize> {
        let padded = len + 2 * self.pad;
        if padded < self.kernel {
            return Err(Error::validation(
                "conv input",
                format!("input length {len} shorter than kernel {}", self.kernel),
            ));
        }
        Ok((padded - self.kernel) / self.stride + 1)
    }

    /// Output length of a transposed convolution over `len` samples.
    pub fn conv_transpose_out_len(&self, len: usize) -> Result<usize> {
        let grown = (len - 1) * self.stride + self.kernel;
        if grown <= 2 * self.pad {
            return Err(Error::validation(
                "conv input",
                "transposed conv output would be empty",
            ));
        }
        Ok(grown - 2 * self.pad)
    }
}

struct Node {
    value: Tensor,
    op: Op,
}

/// Slope of the leaky ReLU used by every network in this crate.
pub const LEAKY_SLOPE: f64 = 0.2;

/// Eager computation tape.
#[derive(Default)]
pub struct Tape {
    nodes: Vec<Node>,
    grads: Vec<Vec<f64>>,
}

/// How one operand of an elementwise op maps onto the output shape.
#[derive(Clone, Copy)]
enum BroadcastKind {
    Full,
    Scalar,
    Column,
    Row,
}

impl BroadcastKind {
    #[inline]
    fn index(self, r: usize, c: usize, cols: usize) -> usize {
        match self {
            BroadcastKind::Full => r * cols + c,
            BroadcastKind::Scalar => 0,
            BroadcastKind::Column => r,
            BroadcastKind::Row => c,
        }
    }
}

fn broadcast_kind(operand: (usize, usize), out: (usize, usize)) -> Option<BroadcastKind> {
    if operand == out {
        Some(BroadcastKind::Full)
    } else if operand == (1, 1) {
        Some(BroadcastKind::Scalar)
    } else if operand.1 == 1 && operand.0 == out.0 {
        Some(BroadcastKind::Column)
    } else if operand.0 == 1 && operand.1 == out.1 {
        Some(BroadcastKind::Row)
    } else {
        None
    }
}

/// Resolves the output shape of an elementwise binary op, requiring at
/// least one operand to carry the full shape.
fn binary_shape(
    op: &'static str,
    a: (usize, usize),
    b: (usize, usize),
) -> Result<((usize, usize), BroadcastKind, BroadcastKind)> {
    let mismatch = || Error::ShapeMismatch {
        op,
        lhs_rows: a.0,
        lhs_cols: a.1,
        rhs_rows: b.0,
        rhs_cols: b.1,
    };
    let out = if a.0 * a.1 >= b.0 * b.1 { a } else { b };
    let ka = broadcast_kind(a, out).ok_or_else(mismatch)?;
    let kb = broadcast_kind(b, out).ok_or_else(mismatch)?;
    if !matches!(ka, BroadcastKind::Full) && !matches!(kb, BroadcastKind::Full) {
        return Err(mismatch());
    }
    Ok((out, ka, kb))
}

impl Tape {
    pub fn new() -> Self {
        Tape::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Adds an input node. The tensor constructor guarantees finite data.
    pub fn leaf(&mut self, value: Tensor) -> NodeId {
        self.push(value, Op::Leaf)
    }

    /// Convenience: scalar leaf.
    pub fn constant(&mut self, v: f64) -> NodeId {
        self.leaf(Tensor::scalar(v))
    }

    pub fn value(&self, id: NodeId) -> &Tensor {
        &self.nodes[id.0].value
    }

    /// Accumulated gradient of `id`, flat row-major.
    pub fn grad(&self, id: NodeId) -> &[f64] {
        &self.grads[id.0]
    }

    pub fn zero_grads(&mut self) {
        for g in &mut self.grads {
            g.iter_mut().for_each(|v| *v = 0.0);
        }
    }

    fn push(&mut self, value: Tensor, op: Op) -> NodeId {
        let id = NodeId(self.nodes.len());
        self.grads.push(vec![0.0; value.len()]);
        self.nodes.push(Node { value, op });
        id
    }

    fn elementwise_binary(
        &mut self,
        op_name: &'static str,
        a: NodeId,
        b: NodeId,
        f: impl Fn(f64, f64) -> f64,
        op: Op,
    ) -> Result<NodeId> {
        let (shape, ka, kb) = binary_shape(
            op_name,
            self.nodes[a.0].value.shape(),
            self.nodes[b.0].value.shape(),
        )?;
        let (rows, cols) = shape;
        let va = &self.nodes[a.0].value;
        let vb = &self.nodes[b.0].value;
        let mut out = Vec::with_capacity(rows * cols);
        for r in 0..rows {
            for c in 0..cols {
                out.push(f(
                    va.data[ka.index(r, c, cols)],
                    vb.data[kb.index(r, c, cols)],
                ));
            }
        }
        Ok(self.push(
            Tensor {
                rows,
                cols,
                data: out,
            },
            op,
        ))
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        self.elementwise_binary("mul", a, b, |x, y| x * y, Op::Mul(a, b))
    }

    pub fn div(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.nodes[b.0].value.data.iter().any(|&v| v == 0.0) {
            return Err(Error::domain("div", "zero divisor entry"));
        }
        self.elementwise_binary("div", a, b, |x, y| x / y, Op::Div(a, b))
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (m, ka) = self.nodes[a.0].value.shape();
        let (kb, n) = self.nodes[b.0].value.shape();
        if ka != kb {
            return Err(Error::ShapeMismatch {
                op: "matmul",
                lhs_rows: m,
                lhs_cols: ka,
                rhs_rows: kb,
                rhs_cols: n,
            });
        }
        let va = &self.nodes[a.0].value.data;
        let vb = &self.nodes[b.0].value.data;
        let mut out = vec![0.0; m * n];
        for i in 0..m {
            for k in 0..ka {
                let aik = va[i * ka + k];
                if aik == 0.0 {
                    continue;
                }
                let brow = &vb[k * n..(k + 1) * n];
                let orow = &mut out[i * n..(i + 1) * n];
                for (o, &b) in orow.iter_mut().zip(brow) {
                    *o += aik * b;
                }
            }
        }
        Ok(self.push(
            Tensor {
                rows: m,
                cols: n,
                data: out,
            },
            Op::Matmul(a, b),
        ))
    }

    /// Inner product of two equal-length vectors (any orientation).
    pub fn dot(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let sa = self.nodes[a.0].value.shape();
        let sb = self.nodes[b.0].value.shape();
        let la = self.nodes[a.0].value.len();
        let lb = self.nodes[b.0].value.len();
        let vecs = (sa.0 == 1 || sa.1 == 1) && (sb.0 == 1 || sb.1 == 1);
        if !vecs || la != lb {
            return Err(Error::ShapeMismatch {
                op: "dot",
                lhs_rows: sa.0,
                lhs_cols: sa.1,
                rhs_rows: sb.0,
                rhs_cols: sb.1,
            });
        }
        let v = self.nodes[a.0]
            .value
            .data
            .iter()
            .zip(&self.nodes[b.0].value.data)
            .map(|(x, y)| x * y)
            .sum();
        Ok(self.push(Tensor::scalar(v), Op::Dot(a, b)))
    }

    /// 1-D convolution. Input is `(in_channels, len)`, weight is
    /// `(out_channels, in_channels * kernel)`; zero padding.
    pub fn conv1d(&mut self, input: NodeId, weight: NodeId, spec: ConvSpec) -> Result<NodeId> {
        spec.validate()?;
        let (cin, len) = self.nodes[input.0].value.shape();
        let (wr, wc) = self.nodes[weight.0].value.shape();
        if cin != spec.in_channels || wr != spec.out_channels || wc != spec.in_channels * spec.kernel
        {
            return Err(Error::ShapeMismatch {
                op: "conv1d",
                lhs_rows: cin,
                lhs_cols: len,
                rhs_rows: wr,
                rhs_cols: wc,
            });
        }
        let lout = spec.conv_out_len(len)?;
        let x = &self.nodes[input.0].value.data;
        let w = &self.nodes[weight.0].value.data;
        let mut out = vec![0.0; spec.out_channels * lout];
        conv1d_forward(x, w, &spec, len, lout, &mut out);
        Ok(self.push(
            Tensor {
                rows: spec.out_channels,
                cols: lout,
                data: out,
            },
            Op::Conv1d {
                input,
                weight,
                conv: spec,
            },
        ))
    }

    /// Transposed 1-D convolution. Input is `(in_channels, len)`, weight
    /// is `(in_channels, out_channels * kernel)`.
    pub fn conv_transpose1d(
        &mut self,
        input: NodeId,
        weight: NodeId,
        spec: ConvSpec,
    ) -> Result<NodeId> {
        spec.validate()?;
        let (cin, len) = self.nodes[input.0].value.shape();
        let (wr, wc) = self.nodes[weight.0].value.shape();
        if cin != spec.in_channels || wr != spec.in_channels || wc != spec.out_channels * spec.kernel
        {
            return Err(Error::ShapeMismatch {
                op: "conv_transpose1d",
                lhs_rows: cin,
                lhs_cols: len,
                rhs_rows: wr,
                rhs_cols: wc,
            });
        }
        let lout = spec.conv_transpose_out_len(len)?;
        let x = &self.nodes[input.0].value.data;
        let w = &self.nodes[weight.0].value.data;
        let mut out = vec![0.0; spec.out_channels * lout];
        conv_transpose1d_forward(x, w, &spec, len, lout, &mut out);
        Ok(self.push(
            Tensor {
                rows: spec.out_channels,
                cols: lout,
                data: out,
            },
            Op::ConvTranspose1d {
                input,
                weight,
                conv: spec,
            },
        ))
    }

    fn unary(&mut self, a: NodeId, f: impl Fn(f64) -> f64, op: Op) -> NodeId {
        let v = &self.nodes[a.0].value;
        let out = Tensor {
            rows: v.rows,
            cols: v.cols,
            data: v.data.iter().map(|&x| f(x)).collect(),
        };
        self.push(out, op)
    }

    pub fn leaky_relu(&mut self, a: NodeId) -> NodeId {
        self.unary(
            a,
            |x| if x > 0.0 { x } else { LEAKY_SLOPE * x },
            Op::LeakyRelu(a),
        )
    }

    pub fn tanh(&mut self, a: NodeId) -> NodeId {
        self.unary(a, libm::tanh, Op::Tanh(a))
    }

    pub fn sigmoid(&mut self, a: NodeId) -> NodeId {
        self.unary(a, sigmoid, Op::Sigmoid(a))
    }

    pub fn softplus(&mut self, a: NodeId) -> NodeId {
        self.unary(a, softplus, Op::Softplus(a))
    }

    pub fn exp(&mut self, a: NodeId) -> NodeId {
        self.unary(a, libm::exp, Op::Exp(a))
    }

    pub fn log(&mut self, a: NodeId) -> Result<NodeId> {
        if self.nodes[a.0].value.data.iter().any(|&v| v <= 0.0) {
            return Err(Error::domain("log", "non-positive entry"));
        }
        Ok(self.unary(a, libm::log, Op::Log(a)))
    }

    pub fn abs(&mut self, a: NodeId) -> NodeId {
        self.unary(a, f64::abs, Op::Abs(a))
    }

    /// Elementwise power with a constant exponent.
    pub fn pow(&mut self, a: NodeId, exponent: f64) -> NodeId {
        self.unary(a, |x| libm::pow(x, exponent), Op::Pow(a, exponent))
    }

    pub fn scale(&mut self, a: NodeId, factor: f64) -> NodeId {
        self.unary(a, |x| factor * x, Op::Scale(a, factor))
    }

    pub fn add_const(&mut self, a: NodeId, c: f64) -> NodeId {
        self.unary(a, |x| x + c, Op::AddConst(a))
    }

    pub fn neg(&mut self, a: NodeId) -> NodeId {
        self.scale(a, -1.0)
    }

    fn reduce(&mut self, a: NodeId, axis: Axis, mean: bool) -> NodeId {
        let v = &self.nodes[a.0].value;
        let (rows, cols) = v.shape();
        let out = match axis {
            Axis::All => {
                let mut s = 0.0;
                for &x in &v.data {
                    s += x;
                }
                if mean {
                    s /= (rows * cols) as f64;
                }
                Tensor::scalar(s)
            }
            Axis::Rows => {
                let mut out = vec![0.0; cols];
                for r in 0..rows {
                    for c in 0..cols {
                        out[c] += v.data[r * cols + c];
                    }
                }
                if mean {
                    out.iter_mut().for_each(|x| *x /= rows as f64);
                }
                Tensor {
                    rows: 1,
                    cols,
                    data: out,
                }
            }
            Axis::Cols => {
                let mut out = vec![0.0; rows];
                for r in 0..rows {
                    let mut s = 0.0;
                    for c in 0..cols {
                        s += v.data[r * cols + c];
                    }
                    out[r] = s;
                }
                if mean {
                    out.iter_mut().for_each(|x| *x /= cols as f64);
                }
                Tensor {
                    rows,
                    cols: 1,
                    data: out,
                }
            }
        };
        let op = if mean { Op::Mean(a, axis) } else { Op::Sum(a, axis) };
        self.push(out, op)
    }

    pub fn sum(&mut self, a: NodeId, axis: Axis) -> NodeId {
        self.reduce(a, axis, false)
    }

    pub fn mean(&mut self, a: NodeId, axis: Axis) -> NodeId {
        self.reduce(a, axis, true)
    }

    /// Concatenates along `axis` (`Rows` stacks vertically, `Cols`
    /// side by side).
    pub fn concat(&mut self, parts: &[NodeId], axis: Axis) -> Result<NodeId> {
        if parts.is_empty() {
            return Err(Error::validation("concat", "no inputs"));
        }
        let first = self.nodes[parts[0].0].value.shape();
        let out = match axis {
            Axis::Rows => {
                let cols = first.1;
                let mut data = Vec::new();
                let mut rows = 0;
                for &p in parts {
                    let v = &self.nodes[p.0].value;
                    if v.cols != cols {
                        return Err(Error::ShapeMismatch {
                            op: "concat",
                            lhs_rows: first.0,
                            lhs_cols: cols,
                            rhs_rows: v.rows,
                            rhs_cols: v.cols,
                        });
                    }
                    rows += v.rows;
                    data.extend_from_slice(&v.data);
                }
                Tensor { rows, cols, data }
            }
            Axis::Cols => {
                let rows = first.0;
                let mut cols = 0;
                for &p in parts {
                    let v = &self.nodes[p.0].value;
                    if v.rows != rows {
                        return Err(Error::ShapeMismatch {
                            op: "concat",
                            lhs_rows: rows,
                            lhs_cols: first.1,
                            rhs_rows: v.rows,
                            rhs_cols: v.cols,
                        });
                    }
                    cols += v.cols;
                }
                let mut data = vec![0.0; rows * cols];
                let mut offset = 0;
                for &p in parts {
                    let v = &self.nodes[p.0].value;
                    for r in 0..rows {
                        data[r * cols + offset..r * cols + offset + v.cols]
                            .copy_from_slice(v.row_slice(r));
                    }
                    offset += v.cols;
                }
                Tensor { rows, cols, data }
            }
            Axis::All => return Err(Error::validation("concat", "axis must be Rows or Cols")),
        };
        Ok(self.push(out, Op::Concat(parts.to_vec(), axis)))
    }

    /// Rectangular slice `[r0, r1) x [c0, c1)`.
    pub fn slice(&mut self, a: NodeId, r0: usize, r1: usize, c0: usize, c1: usize) -> Result<NodeId> {
        let v = &self.nodes[a.0].value;
        if r0 >= r1 || c0 >= c1 || r1 > v.rows || c1 > v.cols {
            return Err(Error::validation(
                "slice",
                format!(
                    "range [{r0},{r1})x[{c0},{c1}) out of bounds for {}x{}",
                    v.rows, v.cols
                ),
            ));
        }
        let rows = r1 - r0;
        let cols = c1 - c0;
        let mut data = Vec::with_capacity(rows * cols);
        for r in r0..r1 {
            data.extend_from_slice(&v.data[r * v.cols + c0..r * v.cols + c1]);
        }
        Ok(self.push(
            Tensor { rows, cols, data },
            Op::Slice { input: a, r0, c0 },
        ))
    }

    pub fn transpose(&mut self, a: NodeId) -> NodeId {
        let v = &self.nodes[a.0].value;
        let (rows, cols) = v.shape();
        let mut data = vec![0.0; rows * cols];
        for r in 0..rows {
            for c in 0..cols {
                data[c * rows + r] = v.data[r * cols + c];
            }
        }
        self.push(
            Tensor {
                rows: cols,
                cols: rows,
                data,
            },
            Op::Transpose(a),
        )
    }

    /// Backpropagates from a scalar `loss` node, adding this call's
    /// gradient contribution into every node reached. Gradients
    /// accumulate across calls until [`Tape::zero_grads`].
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if !self.nodes[loss.0].value.is_scalar() {
            let (r, c) = self.nodes[loss.0].value.shape();
            return Err(Error::validation(
                "backward",
                format!("loss must be scalar, got {r}x{c}"),
            ));
        }
        let mut scratch: Vec<Option<Vec<f64>>> = vec![None; self.nodes.len()];
        scratch[loss.0] = Some(vec![1.0]);
        for i in (0..=loss.0).rev() {
            let Some(g) = scratch[i].take() else {
                continue;
            };
            self.propagate(i, &g, &mut scratch);
            let acc = &mut self.grads[i];
            for (a, b) in acc.iter_mut().zip(&g) {
                *a += b;
            }
        }
        Ok(())
    }

    fn scratch_for<'s>(
        nodes: &[Node],
        scratch: &'s mut [Option<Vec<f64>>],
        id: NodeId,
    ) -> &'s mut [f64] {
        scratch[id.0].get_or_insert_with(|| vec![0.0; nodes[id.0].value.len()])
    }

    fn propagate(&self, i: usize, g: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        let nodes = &self.nodes;
        let out = &nodes[i].value;
        let (rows, cols) = out.shape();
        match &nodes[i].op {
            Op::Leaf => {}
            Op::Add(a, b) | Op::Sub(a, b) => {
                let sign = if matches!(nodes[i].op, Op::Sub(..)) {
                    -1.0
                } else {
                    1.0
                };
                let ka = broadcast_kind(nodes[a.0].value.shape(), (rows, cols)).unwrap();
                let kb = broadcast_kind(nodes[b.0].value.shape(), (rows, cols)).unwrap();
                {
                    let da = Self::scratch_for(nodes, scratch, *a);
                    for r in 0..rows {
                        for c in 0..cols {
                            da[ka.index(r, c, cols)] += g[r * cols + c];
                        }
                    }
                }
                let db = Self::scratch_for(nodes, scratch, *b);
                for r in 0..rows {
                    for c in 0..cols {
                        db[kb.index(r, c, cols)] += sign * g[r * cols + c];
                    }
                }
            }
            Op::Mul(a, b) => {
                let ka = broadcast_kind(nodes[a.0].value.shape(), (rows, cols)).unwrap();
                let kb = broadcast_kind(nodes[b.0].value.shape(), (rows, cols)).unwrap();
                {
                    let vb = &nodes[b.0].value.data;
                    let da = Self::scratch_for(nodes, scratch, *a);
                    for r in 0..rows {
                        for c in 0..cols {
                            da[ka.index(r, c, cols)] += g[r * cols + c] * vb[kb.index(r, c, cols)];
                        }
                    }
                }
                let va = &nodes[a.0].value.data;
                let db = Self::scratch_for(nodes, scratch, *b);
                for r in 0..rows {
                    for c in 0..cols {
                        db[kb.index(r, c, cols)] += g[r * cols + c] * va[ka.index(r, c, cols)];
                    }
                }
            }
            Op::Div(a, b) => {
                let ka = broadcast_kind(nodes[a.0].value.shape(), (rows, cols)).unwrap();
                let kb = broadcast_kind(nodes[b.0].value.shape(), (rows, cols)).unwrap();
                {
                    let vb = &nodes[b.0].value.data;
                    let da = Self::scratch_for(nodes, scratch, *a);
                    for r in 0..rows {
                        for c in 0..cols {
                            da[ka.index(r, c, cols)] += g[r * cols + c] / vb[kb.index(r, c, cols)];
                        }
                    }
                }
                let va = &nodes[a.0].value.data;
                let vb = &nodes[b.0].value.data;
                let db = Self::scratch_for(nodes, scratch, *b);
                for r in 0..rows {
                    for c in 0..cols {
                        let ia = ka.index(r, c, cols);
                        let ib = kb.index(r, c, cols);
                        db[ib] -= g[r * cols + c] * va[ia] / (vb[ib] * vb[ib]);
                    }
                }
            }
            Op::Matmul(a, b) => {
                let (m, k) = nodes[a.0].value.shape();
                let n = nodes[b.0].value.cols;
                {
                    let vb = &nodes[b.0].value.data;
                    let da = Self::scratch_for(nodes, scratch, *a);
                    // dA = g . B^T
                    for i2 in 0..m {
                        for k2 in 0..k {
                            let mut s = 0.0;
                            let grow = &g[i2 * n..(i2 + 1) * n];
                            let brow = &vb[k2 * n..(k2 + 1) * n];
                            for (gv, bv) in grow.iter().zip(brow) {
                                s += gv * bv;
                            }
                            da[i2 * k + k2] += s;
                        }
                    }
                }
                let va = &nodes[a.0].value.data;
                let db = Self::scratch_for(nodes, scratch, *b);
                // dB = A^T . g
                for k2 in 0..k {
                    for i2 in 0..m {
                        let aik = va[i2 * k + k2];
                        if aik == 0.0 {
                            continue;
                        }
                        let grow = &g[i2 * n..(i2 + 1) * n];
                        let drow = &mut db[k2 * n..(k2 + 1) * n];
                        for (d, gv) in drow.iter_mut().zip(grow) {
                            *d += aik * gv;
                        }
                    }
                }
            }
            Op::Dot(a, b) => {
                let gs = g[0];
                {
                    let vb = &nodes[b.0].value.data;
                    let da = Self::scratch_for(nodes, scratch, *a);
                    for (d, bv) in da.iter_mut().zip(vb) {
                        *d += gs * bv;
                    }
                }
                let va = &nodes[a.0].value.data;
                let db = Self::scratch_for(nodes, scratch, *b);
                for (d, av) in db.iter_mut().zip(va) {
                    *d += gs * av;
                }
            }
            Op::Conv1d {
                input,
                weight,
                conv,
            } => {
                let len = nodes[input.0].value.cols;
                let lout = cols;
                {
                    let w = &nodes[weight.0].value.data;
                    let dx = Self::scratch_for(nodes, scratch, *input);
                    conv1d_backward_input(g, w, conv, len, lout, dx);
                }
                let x = &nodes[input.0].value.data;
                let dw = Self::scratch_for(nodes, scratch, *weight);
                conv1d_backward_weight(g, x, conv, len, lout, dw);
            }
            Op::ConvTranspose1d {
                input,
                weight,
                conv,
            } => {
                let len = nodes[input.0].value.cols;
                let lout = cols;
                {
                    let w = &nodes[weight.0].value.data;
                    let dx = Self::scratch_for(nodes, scratch, *input);
                    conv_transpose1d_backward_input(g, w, conv, len, lout, dx);
                }
                let x = &nodes[input.0].value.data;
                let dw = Self::scratch_for(nodes, scratch, *weight);
                conv_transpose1d_backward_weight(g, x, conv, len, lout, dw);
            }
            Op::LeakyRelu(a) => {
                let va = &nodes[a.0].value.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), x) in da.iter_mut().zip(g).zip(va) {
                    *d += gv * if *x > 0.0 { 1.0 } else { LEAKY_SLOPE };
                }
            }
            Op::Tanh(a) => {
                let y = &out.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), yv) in da.iter_mut().zip(g).zip(y) {
                    *d += gv * (1.0 - yv * yv);
                }
            }
            Op::Sigmoid(a) => {
                let y = &out.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), yv) in da.iter_mut().zip(g).zip(y) {
                    *d += gv * yv * (1.0 - yv);
                }
            }
            Op::Softplus(a) => {
                let va = &nodes[a.0].value.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), x) in da.iter_mut().zip(g).zip(va) {
                    *d += gv * sigmoid(*x);
                }
            }
            Op::Exp(a) => {
                let y = &out.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), yv) in da.iter_mut().zip(g).zip(y) {
                    *d += gv * yv;
                }
            }
            Op::Log(a) => {
                let va = &nodes[a.0].value.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), x) in da.iter_mut().zip(g).zip(va) {
                    *d += gv / x;
                }
            }
            Op::Abs(a) => {
                let va = &nodes[a.0].value.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), x) in da.iter_mut().zip(g).zip(va) {
                    let s = if *x > 0.0 {
                        1.0
                    } else if *x < 0.0 {
                        -1.0
                    } else {
                        0.0
                    };
                    *d += gv * s;
                }
            }
            Op::Pow(a, p) => {
                let va = &nodes[a.0].value.data;
                let da = Self::scratch_for(nodes, scratch, *a);
                for ((d, gv), x) in da.iter_mut().zip(g).zip(va) {
                    let dp = p * libm::pow(*x, p - 1.0);
                    if dp.is_finite() {
                        *d += gv * dp;
                    }
                }
            }
            Op::Sum(a, axis) | Op::Mean(a, axis) => {
                let (ar, ac) = nodes[a.0].value.shape();
                let scale = if matches!(nodes[i].op, Op::Mean(..)) {
                    match axis {
                        Axis::All => 1.0 / (ar * ac) as f64,
                        Axis::Rows => 1.0 / ar as f64,
                        Axis::Cols => 1.0 / ac as f64,
                    }
                } else {
                    1.0
                };
                let da = Self::scratch_for(nodes, scratch, *a);
                match axis {
                    Axis::All => {
                        let gv = g[0] * scale;
                        da.iter_mut().for_each(|d| *d += gv);
                    }
                    Axis::Rows => {
                        for r in 0..ar {
                            for c in 0..ac {
                                da[r * ac + c] += g[c] * scale;
                            }
                        }
                    }
                    Axis::Cols => {
                        for r in 0..ar {
                            let gv = g[r] * scale;
                            for c in 0..ac {
                                da[r * ac + c] += gv;
                            }
                        }
                    }
                }
            }
            Op::Concat(parts, axis) => match axis {
                Axis::Rows => {
                    let mut row = 0;
                    for &p in parts {
                        let (pr, pc) = nodes[p.0].value.shape();
                        let dp = Self::scratch_for(nodes, scratch, p);
                        for (d, gv) in dp.iter_mut().zip(&g[row * pc..(row + pr) * pc]) {
                            *d += gv;
                        }
                        row += pr;
                    }
                }
                Axis::Cols => {
                    let mut col = 0;
                    for &p in parts {
                        let (pr, pc) = nodes[p.0].value.shape();
                        let dp = Self::scratch_for(nodes, scratch, p);
                        for r in 0..pr {
                            for c in 0..pc {
                                dp[r * pc + c] += g[r * cols + col + c];
                            }
                        }
                        col += pc;
                    }
                }
                Axis::All => unreachable!(),
            },
            Op::Slice { input, r0, c0 } => {
                let ac = nodes[input.0].value.cols;
                let da = Self::scratch_for(nodes, scratch, *input);
                for r in 0..rows {
                    for c in 0..cols {
                        da[(r0 + r) * ac + (c0 + c)] += g[r * cols + c];
                    }
                }
            }
            Op::Transpose(a) => {
                let da = Self::scratch_for(nodes, scratch, *a);
                // out is (rows, cols) = (a.cols, a.rows)
                for r in 0..rows {
                    for c in 0..cols {
                        da[c * rows + r] += g[r * cols + c];
                    }
                }
            }
            Op::Scale(a, s) => {
                let da = Self::scratch_for(nodes, scratch, *a);
                for (d, gv) in da.iter_mut().zip(g) {
                    *d += s * gv;
                }
            }
            Op::AddConst(a) => {
                let da = Self::scratch_for(nodes, scratch, *a);
                for (d, gv) in da.iter_mut().zip(g) {
                    *d += gv;
                }
            }
        }
    }
}

fn conv1d_forward(x: &[f64], w: &[f64], s: &ConvSpec, len: usize, lout: usize, out: &mut [f64]) {
    let k = s.kernel;
    for oc in 0..s.out_channels {
        let wbase = oc * s.in_channels * k;
        let obase = oc * lout;
        for ol in 0..lout {
            let start = (ol * s.stride) as isize - s.pad as isize;
            let k_lo = if start < 0 { (-start) as usize } else { 0 };
            let k_hi = core::cmp::min(k as isize, len as isize - start).max(0) as usize;
            let mut acc = 0.0;
            for ic in 0..s.in_channels {
                let xrow = &x[ic * len..(ic + 1) * len];
                let wseg = &w[wbase + ic * k..wbase + ic * k + k];
                for kk in k_lo..k_hi {
                    acc += wseg[kk] * xrow[(start + kk as isize) as usize];
                }
            }
            out[obase + ol] = acc;
        }
    }
}

fn conv1d_backward_input(
    g: &[f64],
    w: &[f64],
    s: &ConvSpec,
    len: usize,
    lout: usize,
    dx: &mut [f64],
) {
    let k = s.kernel;
    for oc in 0..s.out_channels {
        let wbase = oc * s.in_channels * k;
        let grow = &g[oc * lout..(oc + 1) * lout];
        for (ol, &gv) in grow.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            let start = (ol * s.stride) as isize - s.pad as isize;
            let k_lo = if start < 0 { (-start) as usize } else { 0 };
            let k_hi = core::cmp::min(k as isize, len as isize - start).max(0) as usize;
            for ic in 0..s.in_channels {
                let wseg = &w[wbase + ic * k..wbase + ic * k + k];
                let dxrow = &mut dx[ic * len..(ic + 1) * len];
                for kk in k_lo..k_hi {
                    dxrow[(start + kk as isize) as usize] += gv * wseg[kk];
                }
            }
        }
    }
}

fn conv1d_backward_weight(
    g: &[f64],
    x: &[f64],
    s: &ConvSpec,
    len: usize,
    lout: usize,
    dw: &mut [f64],
) {
    let k = s.kernel;
    for oc in 0..s.out_channels {
        let wbase = oc * s.in_channels * k;
        let grow = &g[oc * lout..(oc + 1) * lout];
        for (ol, &gv) in grow.iter().enumerate() {
            if gv == 0.0 {
                continue;
            }
            let start = (ol * s.stride) as isize - s.pad as isize;
            let k_lo = if start < 0 { (-start) as usize } else { 0 };
            let k_hi = core::cmp::min(k as isize, len as isize - start).max(0) as usize;
            for ic in 0..s.in_channels {
                let xrow = &x[ic * len..(ic + 1) * len];
                let dwseg = &mut dw[wbase + ic * k..wbase + ic * k + k];
                for kk in k_lo..k_hi {
                    dwseg[kk] += gv * xrow[(start + kk as isize) as usize];
                }
            }
        }
    }
}

fn conv_transpose1d_forward(
    x: &[f64],
    w: &[f64],
    s: &ConvSpec,
    len: usize,
    lout: usize,
    out: &mut [f64],
) {
    let k = s.kernel;
    for ic in 0..s.in_channels {
        let xrow = &x[ic * len..(ic + 1) * len];
        let wbase = ic * s.out_channels * k;
        for (il, &v) in xrow.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let base = (il * s.stride) as isize - s.pad as isize;
            let k_lo = if base < 0 { (-base) as usize } else { 0 };
            let k_hi = core::cmp::min(k as isize, lout as isize - base).max(0) as usize;
            for oc in 0..s.out_channels {
                let wseg = &w[wbase + oc * k..wbase + oc * k + k];
                let orow = &mut out[oc * lout..(oc + 1) * lout];
                for kk in k_lo..k_hi {
                    orow[(base + kk as isize) as usize] += v * wseg[kk];
                }
            }
        }
    }
}

fn conv_transpose1d_backward_input(
    g: &[f64],
    w: &[f64],
    s: &ConvSpec,
    len: usize,
    lout: usize,
    dx: &mut [f64],
) {
    let k = s.kernel;
    for ic in 0..s.in_channels {
        let wbase = ic * s.out_channels * k;
        let dxrow = &mut dx[ic * len..(ic + 1) * len];
        for il in 0..len {
            let base = (il * s.stride) as isize - s.pad as isize;
            let k_lo = if base < 0 { (-base) as usize } else { 0 };
            let k_hi = core::cmp::min(k as isize, lout as isize - base).max(0) as usize;
            let mut acc = 0.0;
            for oc in 0..s.out_channels {
                let wseg = &w[wbase + oc * k..wbase + oc * k + k];
                let grow = &g[oc * lout..(oc + 1) * lout];
                for kk in k_lo..k_hi {
                    acc += grow[(base + kk as isize) as usize] * wseg[kk];
                }
            }
            dxrow[il] += acc;
        }
    }
}

fn conv_transpose1d_backward_weight(
    g: &[f64],
    x: &[f64],
    s: &ConvSpec,
    len: usize,
    lout: usize,
    dw: &mut [f64],
) {
    let k = s.kernel;
    for ic in 0..s.in_channels {
        let xrow = &x[ic * len..(ic + 1) * len];
        let wbase = ic * s.out_channels * k;
        for (il, &v) in xrow.iter().enumerate() {
            if v == 0.0 {
                continue;
            }
            let base = (il * s.stride) as isize - s.pad as isize;
            let k_lo = if base < 0 { (-base) as usize } else { 0 };
            let k_hi = core::cmp::min(k as isize, lout as isize - base).max(0) as usize;
            for oc in 0..s.out_channels {
                let dwseg = &mut dw[wbase + oc * k..wbase + oc * k + k];
                let grow = &g[oc * lout..(oc + 1) * lout];
                for kk in k_lo..k_hi {
                    dwseg[kk] += v * grow[(base + kk as isize) as usize];
                }
            }
        }
    }
}

/// Compares the analytic gradient of a scalar graph against central
/// finite differences.
///
/// `build` is invoked with fresh leaves for `point` on every evaluation
/// and must return a scalar node. Returns the maximum over all input
/// coordinates of `|analytic - numeric| / (|analytic| + 1e-8)`.
pub fn grad_check<F>(build: F, point: &[Tensor], h: f64) -> Result<f64>
where
    F: Fn(&mut Tape, &[NodeId]) -> Result<NodeId>,
{
    if !(h > 0.0 && h <= 1e-3) {
        return Err(Error::validation("grad_check step", "h must be in (0, 1e-3]"));
    }
    let eval = |tensors: &[Tensor]| -> Result<f64> {
        let mut tape = Tape::new();
        let leaves: Vec<NodeId> = tensors.iter().map(|t| tape.leaf(t.clone())).collect();
        let loss = build(&mut tape, &leaves)?;
        if !tape.value(loss).is_scalar() {
            return Err(Error::validation("grad_check", "builder must return a scalar"));
        }
        Ok(tape.value(loss).data()[0])
    };

    // Analytic pass.
    let mut tape = Tape::new();
    let leaves: Vec<NodeId> = point.iter().map(|t| tape.leaf(t.clone())).collect();
    let loss = build(&mut tape, &leaves)?;
    if !tape.value(loss).is_scalar() {
        return Err(Error::validation("grad_check", "builder must return a scalar"));
    }
    tape.backward(loss)?;
    let analytic: Vec<Vec<f64>> = leaves.iter().map(|&id| tape.grad(id).to_vec()).collect();

    let mut worst = 0.0_f64;
    let mut perturbed: Vec<Tensor> = point.to_vec();
    for (ti, t) in point.iter().enumerate() {
        for j in 0..t.len() {
            let orig = t.data()[j];
            perturbed[ti].data_mut()[j] = orig + h;
            let up = eval(&perturbed)?;
            perturbed[ti].data_mut()[j] = orig - h;
            let down = eval(&perturbed)?;
            perturbed[ti].data_mut()[j] = orig;
            let numeric = (up - down) / (2.0 * h);
            let a = analytic[ti][j];
            let err = libm::fabs(a - numeric) / (libm::fabs(a) + 1e-8);
            if err > worst {
                worst = err;
            }
        }
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rng::SeedRng;

    const GRAD_TOL: f64 = 1e-4;
    const H: f64 = 1e-5;

    fn rand_tensor(rng: &mut SeedRng, rows: usize, cols: usize, lo: f64, hi: f64) -> Tensor {
        let data = (0..rows * cols).map(|_| rng.uniform_in(lo, hi)).collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    /// Values in `[0.2, 1.5]` with random sign, keeping clear of the
    /// kinks in leaky_relu/abs so finite differences stay valid.
    fn rand_signed(rng: &mut SeedRng, rows: usize, cols: usize) -> Tensor {
        let data = (0..rows * cols)
            .map(|_| {
                let v = rng.uniform_in(0.2, 1.5);
                if rng.uniform() < 0.5 {
                    -v
                } else {
                    v
                }
            })
            .collect();
        Tensor::new(rows, cols, data).unwrap()
    }

    fn check_n<F>(n: usize, build: F, make_point: impl Fn(&mut SeedRng) -> Vec<Tensor>)
    where
        F: Fn(&mut Tape, &[NodeId]) -> crate::Result<NodeId> + Copy,
    {
        let mut rng = SeedRng::new(0x5eed);
        for trial in 0..n {
            let point = make_point(&mut rng);
            let err = grad_check(build, &point, H).unwrap();
            assert!(err < GRAD_TOL, "trial {trial}: grad error {err}");
        }
    }

    #[test]
    fn sigmoid_at_zero() {
        let mut t = Tape::new();
        let x = t.constant(0.0);
        let y = t.sigmoid(x);
        assert_eq!(t.value(y).data()[0], 0.5);
    }

    #[test]
    fn conv_output_length() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1., 2., 3., 4., 5., 6., 7., 8.]).unwrap());
        let w = t.leaf(Tensor::row(&[1., 0., -1.]).unwrap());
        let spec = ConvSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 3,
            stride: 1,
            pad: 0,
        };
        let y = t.conv1d(x, w, spec).unwrap();
        assert_eq!(t.value(y).shape(), (1, 6));
        // cross-correlation: x[i] - x[i+2]
        assert_eq!(t.value(y).data(), &[-2., -2., -2., -2., -2., -2.]);
    }

    #[test]
    fn dot_product() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(&[1., 2.]).unwrap());
        let b = t.leaf(Tensor::row(&[3., 4.]).unwrap());
        let y = t.dot(a, b).unwrap();
        assert_eq!(t.value(y).data()[0], 11.0);
    }

    #[test]
    fn backward_sum_of_squares() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1., 2., 3.]).unwrap());
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq, Axis::All);
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[2., 4., 6.]);
    }

    #[test]
    fn sigmoid_grad_at_zero() {
        let mut t = Tape::new();
        let x = t.constant(0.0);
        let y = t.sigmoid(x);
        t.backward(y).unwrap();
        assert_eq!(t.grad(x)[0], 0.25);
    }

    #[test]
    fn backward_requires_scalar() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1., 2.]).unwrap());
        assert!(matches!(
            t.backward(x),
            Err(Error::Validation { .. })
        ));
    }

    #[test]
    fn repeated_backward_accumulates() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1., 2., 3.]).unwrap());
        let sq = t.mul(x, x).unwrap();
        let loss = t.sum(sq, Axis::All);
        t.backward(loss).unwrap();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[4., 8., 12.]);
        t.zero_grads();
        t.backward(loss).unwrap();
        assert_eq!(t.grad(x), &[2., 4., 6.]);
    }

    #[test]
    fn shape_mismatch_is_structured() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(&[1., 2.]).unwrap());
        let b = t.leaf(Tensor::row(&[1., 2., 3.]).unwrap());
        match t.add(a, b) {
            Err(Error::ShapeMismatch { op, .. }) => assert_eq!(op, "add"),
            other => panic!("expected shape mismatch, got {other:?}"),
        }
    }

    #[test]
    fn log_domain_error() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(&[1.0, -0.5]).unwrap());
        assert!(matches!(t.log(a), Err(Error::Domain { op: "log", .. })));
    }

    #[test]
    fn div_by_zero_rejected() {
        let mut t = Tape::new();
        let a = t.leaf(Tensor::row(&[1.0]).unwrap());
        let b = t.leaf(Tensor::row(&[0.0]).unwrap());
        assert!(matches!(t.div(a, b), Err(Error::Domain { op: "div", .. })));
    }

    #[test]
    fn forward_deterministic() {
        let run = || {
            let mut t = Tape::new();
            let x = t.leaf(Tensor::row(&[0.3, -0.7, 1.1]).unwrap());
            let a = t.tanh(x);
            let b = t.sigmoid(a);
            let c = t.mul(b, x).unwrap();
            let l = t.mean(c, Axis::All);
            t.value(l).data()[0].to_bits()
        };
        assert_eq!(run(), run());
    }

    #[test]
    fn backward_is_linear() {
        let mut rng = SeedRng::new(11);
        let x = rand_signed(&mut rng, 2, 3);
        let (a, b) = (1.7, -2.3);

        let grads = |combine: bool| -> Vec<f64> {
            let mut t = Tape::new();
            let leaf = t.leaf(x.clone());
            let f = {
                let sq = t.mul(leaf, leaf).unwrap();
                t.sum(sq, Axis::All)
            };
            let g = {
                let th = t.tanh(leaf);
                t.mean(th, Axis::All)
            };
            if combine {
                let fa = t.scale(f, a);
                let gb = t.scale(g, b);
                let l = t.add(fa, gb).unwrap();
                t.backward(l).unwrap();
            } else {
                t.backward(f).unwrap();
            }
            t.grad(leaf).to_vec()
        };

        let combined = grads(true);
        // separate passes
        let mut t = Tape::new();
        let leaf = t.leaf(x.clone());
        let sq = t.mul(leaf, leaf).unwrap();
        let f = t.sum(sq, Axis::All);
        let th = t.tanh(leaf);
        let g = t.mean(th, Axis::All);
        t.backward(f).unwrap();
        let gf = t.grad(leaf).to_vec();
        t.zero_grads();
        t.backward(g).unwrap();
        let gg = t.grad(leaf).to_vec();
        for i in 0..combined.len() {
            assert!((combined[i] - (a * gf[i] + b * gg[i])).abs() < 1e-10);
        }
    }

    #[test]
    fn grad_check_sum_of_squares_tight() {
        let mut rng = SeedRng::new(3);
        let x = rand_signed(&mut rng, 1, 5);
        let err = grad_check(
            |t, leaves| {
                let sq = t.mul(leaves[0], leaves[0])?;
                Ok(t.sum(sq, Axis::All))
            },
            &[x],
            H,
        )
        .unwrap();
        assert!(err < 1e-6, "err {err}");
    }

    #[test]
    fn grad_elementwise_binary() {
        // full-shape operands
        check_n(
            10,
            |t, l| {
                let s = t.add(l[0], l[1])?;
                let d = t.sub(s, l[2])?;
                let m = t.mul(d, l[0])?;
                let q = t.div(m, l[3])?;
                Ok(t.sum(q, Axis::All))
            },
            |rng| {
                vec![
                    rand_signed(rng, 2, 3),
                    rand_signed(rng, 2, 3),
                    rand_signed(rng, 2, 3),
                    rand_tensor(rng, 2, 3, 0.5, 2.0),
                ]
            },
        );
    }

    #[test]
    fn grad_broadcasts() {
        // scalar, column, row operands through add and mul
        check_n(
            10,
            |t, l| {
                let a = t.add(l[0], l[1])?; // (2,3) + (2,1)
                let b = t.mul(a, l[2])?; // (2,3) * (1,3)
                let c = t.add(b, l[3])?; // (2,3) + (1,1)
                let d = t.div(c, l[1])?; // (2,3) / (2,1)
                Ok(t.mean(d, Axis::All))
            },
            |rng| {
                vec![
                    rand_signed(rng, 2, 3),
                    rand_tensor(rng, 2, 1, 0.5, 2.0),
                    rand_signed(rng, 1, 3),
                    rand_signed(rng, 1, 1),
                ]
            },
        );
    }

    #[test]
    fn grad_matmul_dot_transpose() {
        check_n(
            10,
            |t, l| {
                let m = t.matmul(l[0], l[1])?;
                let mt = t.transpose(m);
                let flat_a = t.slice(mt, 0, 2, 0, 1)?;
                let flat_b = t.slice(mt, 0, 2, 1, 2)?;
                let d = t.dot(flat_a, flat_b)?;
                let s = t.sum(m, Axis::All);
                t.add(d, s)
            },
            |rng| vec![rand_signed(rng, 2, 3), rand_signed(rng, 3, 2)],
        );
    }

    #[test]
    fn grad_conv1d() {
        let spec = ConvSpec {
            in_channels: 2,
            out_channels: 3,
            kernel: 3,
            stride: 2,
            pad: 1,
        };
        check_n(
            10,
            move |t, l| {
                let y = t.conv1d(l[0], l[1], spec)?;
                let y2 = t.mul(y, y)?;
                Ok(t.sum(y2, Axis::All))
            },
            |rng| vec![rand_signed(rng, 2, 7), rand_signed(rng, 3, 6)],
        );
    }

    #[test]
    fn grad_conv_transpose1d() {
        let spec = ConvSpec {
            in_channels: 2,
            out_channels: 3,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        check_n(
            10,
            move |t, l| {
                let y = t.conv_transpose1d(l[0], l[1], spec)?;
                let y2 = t.mul(y, y)?;
                Ok(t.sum(y2, Axis::All))
            },
            |rng| vec![rand_signed(rng, 2, 5), rand_signed(rng, 2, 12)],
        );
    }

    #[test]
    fn conv_transpose_doubles_length() {
        let spec = ConvSpec {
            in_channels: 1,
            out_channels: 1,
            kernel: 4,
            stride: 2,
            pad: 1,
        };
        let mut t = Tape::new();
        let x = t.leaf(Tensor::row(&[1., 2., 3., 4., 5.]).unwrap());
        let w = t.leaf(Tensor::row(&[0.1, 0.2, 0.3, 0.4]).unwrap());
        let y = t.conv_transpose1d(x, w, spec).unwrap();
        assert_eq!(t.value(y).shape(), (1, 10));
    }

    #[test]
    fn grad_unary_smooth() {
        check_n(
            10,
            |t, l| {
                let a = t.tanh(l[0]);
                let b = t.sigmoid(a);
                let c = t.softplus(b);
                let d = t.exp(c);
                let e = t.log(d)?;
                let f = t.scale(e, 0.7);
                let g = t.add_const(f, 0.3);
                let h2 = t.neg(g);
                Ok(t.mean(h2, Axis::All))
            },
            |rng| vec![rand_signed(rng, 2, 4)],
        );
    }

    #[test]
    fn grad_leaky_abs_pow() {
        check_n(
            10,
            |t, l| {
                let a = t.leaky_relu(l[0]);
                let b = t.abs(a);
                let c = t.pow(b, 1.7);
                Ok(t.sum(c, Axis::All))
            },
            |rng| vec![rand_signed(rng, 2, 4)],
        );
    }

    #[test]
    fn grad_reductions() {
        check_n(
            10,
            |t, l| {
                let sr = t.sum(l[0], Axis::Rows);
                let mc = t.mean(l[0], Axis::Cols);
                let mct = t.transpose(mc);
                let a = t.dot(sr, mct)?;
                let m = t.mean(l[0], Axis::All);
                t.add(a, m)
            },
            |rng| vec![rand_signed(rng, 3, 3)],
        );
    }

    #[test]
    fn grad_concat_slice() {
        check_n(
            10,
            |t, l| {
                let cat = t.concat(&[l[0], l[1]], Axis::Rows)?;
                let cat2 = t.concat(&[cat, cat], Axis::Cols)?;
                let sl = t.slice(cat2, 1, 3, 1, 5)?;
                let sq = t.mul(sl, sl)?;
                Ok(t.sum(sq, Axis::All))
            },
            |rng| vec![rand_signed(rng, 2, 3), rand_signed(rng, 2, 3)],
        );
    }

    #[test]
    fn slice_out_of_bounds() {
        let mut t = Tape::new();
        let x = t.leaf(Tensor::zeros(2, 2));
        assert!(t.slice(x, 0, 3, 0, 1).is_err());
        assert!(t.slice(x, 1, 1, 0, 1).is_err());
    }

    #[test]
    fn tensor_rejects_non_finite() {
        assert!(Tensor::new(1, 2, vec![1.0, f64::NAN]).is_err());
        assert!(Tensor::new(1, 2, vec![1.0]).is_err());
        assert!(Tensor::new(0, 2, vec![]).is_err());
    }

    #[test]
    fn stable_sigmoid_softplus_extremes() {
        assert!(sigmoid(800.0) <= 1.0 && sigmoid(800.0) > 0.999);
        assert!(sigmoid(-800.0) >= 0.0 && sigmoid(-800.0) < 1e-300);
        assert!(softplus(800.0).is_finite());
        assert_eq!(softplus(800.0), 800.0);
        assert!(softplus(-800.0) >= 0.0);
        assert!((softplus(0.0) - core::f64::consts::LN_2).abs() < 1e-15);
    }
}
