//! Tape-based reverse-mode automatic differentiation.
//!
//! Values live in a [`Tape`]; operations append nodes and return lightweight
//! [`Var`] handles. Calling [`Tape::backward`] on a scalar walks the tape in
//! exact reverse order and accumulates gradients into every node that
//! requires them.
//!
//! ```
//! use poselab::autodiff::{Tape, Tensor};
//!
//! let mut tape = Tape::new();
//! let x = tape.param(Tensor::scalar(3.0));
//! let y = tape.mul(x, x).unwrap();
//! tape.backward(y).unwrap();
//! assert_eq!(tape.grad(x).unwrap(), &[6.0]);
//! ```
//!
//! Broadcasting is limited to scalar-with-tensor in the binary elementwise
//! operations. Bias addition for dense and convolutional layers is explicit
//! through [`Tape::linear`] and the optional bias of [`Tape::conv2d`].

mod gradcheck;
pub(crate) mod kernels;

pub use gradcheck::grad_check;

use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};
use kernels::ConvGeom;

/// Stabilizer inside the square root of the [`Reduce::L2Norm`] gradient.
pub const L2_EPS: f64 = 1e-12;

/// A dense n-dimensional array of `f64` values in row-major order.
#[derive(Clone, Debug, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::invalid("tensor", format!("zero-sized dimension in {shape:?}")));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::invalid(
                "tensor",
                format!("shape {shape:?} needs {numel} values, got {}", data.len()),
            ));
        }
        Ok(Self { shape, data })
    }

    pub fn scalar(value: f64) -> Self {
        Self {
            shape: Vec::new(),
            data: vec![value],
        }
    }

    /// A rank-1 tensor holding `values`.
    pub fn vector(values: Vec<f64>) -> Self {
        assert!(!values.is_empty(), "empty vector tensor");
        Self {
            shape: vec![values.len()],
            data: values,
        }
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::filled(shape, 0.0)
    }

    pub fn filled(shape: &[usize], value: f64) -> Self {
        let numel = shape.iter().product();
        assert!(shape.iter().all(|&d| d > 0), "zero-sized dimension");
        Self {
            shape: shape.to_vec(),
            data: vec![value; numel],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    pub fn len(&self) -> usize {
        self.data.len()
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn is_scalar(&self) -> bool {
        self.data.len() == 1
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> Option<f64> {
        self.is_scalar().then(|| self.data[0])
    }
}

/// Handle to a value recorded on a [`Tape`].
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Var {
    tape: u64,
    index: usize,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Elementwise {
    Add,
    Sub,
    Mul,
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Scale(f64),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Reduce {
    Sum,
    Mean,
    /// `sqrt(Σ aᵢ²)`. The gradient is `a / sqrt(Σ aᵢ² + ε)` with
    /// ε = [`L2_EPS`], so it stays finite (zero) at the origin.
    L2Norm,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Binary {
    Add,
    Sub,
    Mul,
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum Unary {
    Relu,
    Sigmoid,
    Tanh,
    Exp,
    Scale(f64),
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary {
        kind: Binary,
        a: usize,
        b: usize,
    },
    Unary {
        kind: Unary,
        a: usize,
    },
    MatMul {
        a: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Linear {
        x: usize,
        w: usize,
        b: usize,
        m: usize,
        k: usize,
        n: usize,
    },
    Conv2d {
        input: usize,
        kernel: usize,
        bias: Option<usize>,
        geom: ConvGeom,
        out_channels: usize,
        cols: Vec<f64>,
    },
    Reduce {
        kind: Reduce,
        a: usize,
    },
    Concat {
        inputs: Vec<usize>,
        outer: usize,
        inner: usize,
        sizes: Vec<usize>,
    },
    Slice {
        a: usize,
        outer: usize,
        inner: usize,
        axis_len: usize,
        start: usize,
        len: usize,
    },
    Reshape {
        a: usize,
    },
    MaxPool {
        a: usize,
        argmax: Vec<usize>,
    },
    AvgPool {
        a: usize,
        channels: usize,
        height: usize,
        width: usize,
        window: usize,
        stride: usize,
        out_h: usize,
        out_w: usize,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    requires_grad: bool,
    grad: Option<Vec<f64>>,
    op: Op,
}

static NEXT_TAPE_ID: AtomicU64 = AtomicU64::new(1);

fn fresh_id() -> u64 {
    NEXT_TAPE_ID.fetch_add(1, Ordering::Relaxed)
}

/// Ordered record of executed operations.
///
/// Gradients accumulate across repeated [`Tape::backward`] calls until
/// [`Tape::zero_grads`] or [`Tape::clear`]. Clearing also invalidates every
/// outstanding [`Var`].
#[derive(Debug)]
pub struct Tape {
    id: u64,
    nodes: Vec<Node>,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    pub fn new() -> Self {
        Self {
            id: fresh_id(),
            nodes: Vec::new(),
        }
    }

    /// Drops every node. Handles issued before the call are rejected afterwards.
    pub fn clear(&mut self) {
        self.nodes.clear();
        self.id = fresh_id();
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn leaf(&mut self, value: Tensor, requires_grad: bool) -> Var {
        self.push(value, requires_grad, Op::Leaf)
    }

    /// A trainable leaf.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.leaf(value, true)
    }

    pub fn constant(&mut self, value: Tensor) -> Var {
        self.leaf(value, false)
    }

    /// Value of `v`.
    ///
    /// Panics if `v` was issued by a different tape or before a [`Tape::clear`].
    pub fn value(&self, v: Var) -> &Tensor {
        let i = self.check(v).expect("var from another tape");
        &self.nodes[i].value
    }

    pub fn requires_grad(&self, v: Var) -> bool {
        self.check(v).map(|i| self.nodes[i].requires_grad).unwrap_or(false)
    }

    /// Accumulated gradient of `v`, absent for constants and unreached nodes.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        let i = self.check(v).ok()?;
        self.nodes[i].grad.as_deref()
    }

    pub fn zero_grads(&mut self) {
        for node in &mut self.nodes {
            node.grad = None;
        }
    }

    fn check(&self, v: Var) -> Result<usize> {
        if v.tape != self.id || v.index >= self.nodes.len() {
            return Err(Error::ForeignVar);
        }
        Ok(v.index)
    }

    fn push(&mut self, value: Tensor, requires_grad: bool, op: Op) -> Var {
        let index = self.nodes.len();
        self.nodes.push(Node {
            value,
            requires_grad,
            grad: None,
            op,
        });
        Var { tape: self.id, index }
    }

    fn node(&self, v: Var) -> Result<(usize, &Node)> {
        let i = self.check(v)?;
        Ok((i, &self.nodes[i]))
    }

    // ----- elementwise -----------------------------------------------------

    pub fn elementwise(&mut self, kind: Elementwise, a: Var, b: Option<Var>) -> Result<Var> {
        let binary = match kind {
            Elementwise::Add => Some(Binary::Add),
            Elementwise::Sub => Some(Binary::Sub),
            Elementwise::Mul => Some(Binary::Mul),
            _ => None,
        };
        match (binary, b) {
            (Some(op), Some(b)) => self.binary(op, a, b),
            (Some(_), None) => Err(Error::invalid("elementwise", format!("{kind:?} needs two operands"))),
            (None, Some(_)) => Err(Error::invalid("elementwise", format!("{kind:?} takes one operand"))),
            (None, None) => {
                let unary = match kind {
                    Elementwise::Relu => Unary::Relu,
                    Elementwise::Sigmoid => Unary::Sigmoid,
                    Elementwise::Tanh => Unary::Tanh,
                    Elementwise::Exp => Unary::Exp,
                    Elementwise::Scale(s) => Unary::Scale(s),
                    _ => unreachable!(),
                };
                self.unary(unary, a)
            }
        }
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary(Binary::Mul, a, b)
    }

    pub fn relu(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Relu, a)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Sigmoid, a)
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Tanh, a)
    }

    pub fn exp(&mut self, a: Var) -> Result<Var> {
        self.unary(Unary::Exp, a)
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        self.unary(Unary::Scale(factor), a)
    }

    fn binary(&mut self, kind: Binary, a: Var, b: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        let (va, vb) = (&na.value, &nb.value);
        let shape = if va.shape == vb.shape || vb.is_scalar() {
            va.shape.clone()
        } else if va.is_scalar() {
            vb.shape.clone()
        } else {
            return Err(Error::shape("elementwise", &va.shape, &vb.shape));
        };
        let f = |x: f64, y: f64| match kind {
            Binary::Add => x + y,
            Binary::Sub => x - y,
            Binary::Mul => x * y,
        };
        let data: Vec<f64> = if va.len() == vb.len() {
            va.data.iter().zip(&vb.data).map(|(&x, &y)| f(x, y)).collect()
        } else if vb.is_scalar() {
            let y = vb.data[0];
            va.data.iter().map(|&x| f(x, y)).collect()
        } else {
            let x = va.data[0];
            vb.data.iter().map(|&y| f(x, y)).collect()
        };
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(Tensor { shape, data }, rg, Op::Binary { kind, a: ia, b: ib }))
    }

    fn unary(&mut self, kind: Unary, a: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let f: fn(f64, f64) -> f64 = match kind {
            Unary::Relu => |x, _| if x > 0.0 { x } else { 0.0 },
            Unary::Sigmoid => |x, _| 1.0 / (1.0 + (-x).exp()),
            Unary::Tanh => |x, _| x.tanh(),
            Unary::Exp => |x, _| x.exp(),
            Unary::Scale(_) => |x, s| x * s,
        };
        let s = if let Unary::Scale(s) = kind { s } else { 0.0 };
        let data = na.value.data.iter().map(|&x| f(x, s)).collect();
        let value = Tensor {
            shape: na.value.shape.clone(),
            data,
        };
        let rg = na.requires_grad;
        Ok(self.push(value, rg, Op::Unary { kind, a: ia }))
    }

    // ----- dense -----------------------------------------------------------

    /// Matrix product of `a[M×K]` and `b[K×N]`.
    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (ib, nb) = self.node(b)?;
        let (sa, sb) = (&na.value.shape, &nb.value.shape);
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::shape("matmul", sa, sb));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = vec![0.0; m * n];
        kernels::matmul_nn(&na.value.data, &nb.value.data, &mut out, m, k, n);
        let rg = na.requires_grad || nb.requires_grad;
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            rg,
            Op::MatMul { a: ia, b: ib, m, k, n },
        ))
    }

    /// Affine map `w[M×K] · x[K×N] + b[M]`, the bias repeated over the N columns.
    pub fn linear(&mut self, x: Var, w: Var, b: Var) -> Result<Var> {
        let (ix, nx) = self.node(x)?;
        let (iw, nw) = self.node(w)?;
        let (ib, nb) = self.node(b)?;
        let (sx, sw) = (&nx.value.shape, &nw.value.shape);
        if sx.len() != 2 || sw.len() != 2 || sw[1] != sx[0] {
            return Err(Error::shape("linear", sw, sx));
        }
        let (m, k, n) = (sw[0], sw[1], sx[1]);
        if nb.value.len() != m || nb.value.shape.len() != 1 {
            return Err(Error::shape("linear bias", &nb.value.shape, &[m]));
        }
        let mut out = vec![0.0; m * n];
        for (row, &bias) in out.chunks_mut(n).zip(&nb.value.data) {
            row.fill(bias);
        }
        kernels::matmul_nn(&nw.value.data, &nx.value.data, &mut out, m, k, n);
        let rg = nx.requires_grad || nw.requires_grad || nb.requires_grad;
        Ok(self.push(
            Tensor {
                shape: vec![m, n],
                data: out,
            },
            rg,
            Op::Linear {
                x: ix,
                w: iw,
                b: ib,
                m,
                k,
                n,
            },
        ))
    }

    /// Cross-correlation of `input[C×H×W]` with `kernel[C_out×C×k×k]`.
    pub fn conv2d(
        &mut self,
        input: Var,
        kernel: Var,
        bias: Option<Var>,
        stride: usize,
        padding: usize,
    ) -> Result<Var> {
        let (ii, ni) = self.node(input)?;
        let (ik, nk) = self.node(kernel)?;
        let (si, sk) = (&ni.value.shape, &nk.value.shape);
        if si.len() != 3 || sk.len() != 4 || sk[1] != si[0] || sk[2] != sk[3] {
            return Err(Error::shape("conv2d", si, sk));
        }
        if stride == 0 {
            return Err(Error::invalid("conv2d", "stride must be positive"));
        }
        let (c, h, w) = (si[0], si[1], si[2]);
        let (out_channels, k) = (sk[0], sk[2]);
        if k > h + 2 * padding || k > w + 2 * padding {
            return Err(Error::invalid(
                "conv2d",
                format!("kernel {k}×{k} larger than padded input {}×{}", h + 2 * padding, w + 2 * padding),
            ));
        }
        let geom = ConvGeom {
            channels: c,
            height: h,
            width: w,
            kernel: k,
            stride,
            padding,
            out_h: (h + 2 * padding - k) / stride + 1,
            out_w: (w + 2 * padding - k) / stride + 1,
        };
        let mut rg = ni.requires_grad || nk.requires_grad;
        let bias_index = match bias {
            Some(b) => {
                let (ib, nb) = self.node(b)?;
                if nb.value.shape != [out_channels] {
                    return Err(Error::shape("conv2d bias", &nb.value.shape, &[out_channels]));
                }
                rg |= nb.requires_grad;
                Some(ib)
            }
            None => None,
        };
        let cols = kernels::im2col(&ni.value.data, &geom);
        let p = geom.col_cols();
        let mut out = vec![0.0; out_channels * p];
        if let Some(ib) = bias_index {
            for (plane, &b) in out.chunks_mut(p).zip(&self.nodes[ib].value.data) {
                plane.fill(b);
            }
        }
        kernels::matmul_nn(&nk.value.data, &cols, &mut out, out_channels, geom.col_rows(), p);
        let value = Tensor {
            shape: vec![out_channels, geom.out_h, geom.out_w],
            data: out,
        };
        Ok(self.push(
            value,
            rg,
            Op::Conv2d {
                input: ii,
                kernel: ik,
                bias: bias_index,
                geom,
                out_channels,
                cols,
            },
        ))
    }

    // ----- reductions ------------------------------------------------------

    pub fn reduce(&mut self, kind: Reduce, a: Var) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let d = &na.value.data;
        if d.is_empty() {
            return Err(Error::invalid("reduce", "empty tensor"));
        }
        let v = match kind {
            Reduce::Sum => d.iter().sum(),
            Reduce::Mean => d.iter().sum::<f64>() / d.len() as f64,
            Reduce::L2Norm => d.iter().map(|x| x * x).sum::<f64>().sqrt(),
        };
        let rg = na.requires_grad;
        Ok(self.push(Tensor::scalar(v), rg, Op::Reduce { kind, a: ia }))
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::Sum, a)
    }

    pub fn mean(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::Mean, a)
    }

    pub fn l2norm(&mut self, a: Var) -> Result<Var> {
        self.reduce(Reduce::L2Norm, a)
    }

    // ----- structural ------------------------------------------------------

    /// Joins tensors of equal rank along `axis`; all other dimensions must agree.
    pub fn concat(&mut self, inputs: &[Var], axis: usize) -> Result<Var> {
        let first = *inputs
            .first()
            .ok_or_else(|| Error::invalid("concat", "no inputs"))?;
        let base = self.node(first)?.1.value.shape.clone();
        if axis >= base.len() {
            return Err(Error::invalid("concat", format!("axis {axis} out of range for {base:?}")));
        }
        let outer: usize = base[..axis].iter().product();
        let inner: usize = base[axis + 1..].iter().product();
        let mut indices = Vec::with_capacity(inputs.len());
        let mut sizes = Vec::with_capacity(inputs.len());
        let mut rg = false;
        for &v in inputs {
            let (i, n) = self.node(v)?;
            let s = &n.value.shape;
            let consistent = s.len() == base.len()
                && s.iter().zip(&base).enumerate().all(|(d, (x, y))| d == axis || x == y);
            if !consistent {
                return Err(Error::shape("concat", &base, s));
            }
            indices.push(i);
            sizes.push(s[axis]);
            rg |= n.requires_grad;
        }
        let total: usize = sizes.iter().sum();
        let mut data = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (&i, &size) in indices.iter().zip(&sizes) {
                let src = &self.nodes[i].value.data;
                data.extend_from_slice(&src[o * size * inner..(o + 1) * size * inner]);
            }
        }
        let mut shape = base;
        shape[axis] = total;
        Ok(self.push(
            Tensor { shape, data },
            rg,
            Op::Concat {
                inputs: indices,
                outer,
                inner,
                sizes,
            },
        ))
    }

    /// Elements `start..start+len` along `axis`.
    pub fn slice(&mut self, a: Var, axis: usize, start: usize, len: usize) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let s = &na.value.shape;
        if axis >= s.len() || len == 0 || start + len > s[axis] {
            return Err(Error::invalid(
                "slice",
                format!("range {start}..{} on axis {axis} of {s:?}", start + len),
            ));
        }
        let outer: usize = s[..axis].iter().product();
        let inner: usize = s[axis + 1..].iter().product();
        let axis_len = s[axis];
        let mut data = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = (o * axis_len + start) * inner;
            data.extend_from_slice(&na.value.data[base..base + len * inner]);
        }
        let mut shape = s.clone();
        shape[axis] = len;
        let rg = na.requires_grad;
        Ok(self.push(
            Tensor { shape, data },
            rg,
            Op::Slice {
                a: ia,
                outer,
                inner,
                axis_len,
                start,
                len,
            },
        ))
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let numel: usize = shape.iter().product();
        if numel != na.value.len() || shape.contains(&0) {
            return Err(Error::shape("reshape", &na.value.shape, shape));
        }
        let value = Tensor {
            shape: shape.to_vec(),
            data: na.value.data.clone(),
        };
        let rg = na.requires_grad;
        Ok(self.push(value, rg, Op::Reshape { a: ia }))
    }

    /// Per-channel max pooling of `a[C×H×W]`; padded taps never win.
    pub fn max_pool2d(&mut self, a: Var, window: usize, stride: usize, padding: usize) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (c, h, w) = chw(&na.value.shape, "max_pool2d")?;
        if window == 0 || stride == 0 || padding >= window || window > h + 2 * padding || window > w + 2 * padding {
            return Err(Error::invalid(
                "max_pool2d",
                format!("window {window} stride {stride} padding {padding} on {h}×{w}"),
            ));
        }
        let out_h = (h + 2 * padding - window) / stride + 1;
        let out_w = (w + 2 * padding - window) / stride + 1;
        let src = &na.value.data;
        let mut data = Vec::with_capacity(c * out_h * out_w);
        let mut argmax = Vec::with_capacity(c * out_h * out_w);
        for ch in 0..c {
            let plane = ch * h * w;
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut best = f64::NEG_INFINITY;
                    let mut best_at = usize::MAX;
                    for wy in 0..window {
                        let iy = (oy * stride + wy) as isize - padding as isize;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for wx in 0..window {
                            let ix = (ox * stride + wx) as isize - padding as isize;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            let at = plane + iy as usize * w + ix as usize;
                            // strict comparison keeps the first row-major maximum
                            if src[at] > best || best_at == usize::MAX {
                                best = src[at];
                                best_at = at;
                            }
                        }
                    }
                    data.push(best);
                    argmax.push(best_at);
                }
            }
        }
        let rg = na.requires_grad;
        Ok(self.push(
            Tensor {
                shape: vec![c, out_h, out_w],
                data,
            },
            rg,
            Op::MaxPool { a: ia, argmax },
        ))
    }

    /// Per-channel average pooling of `a[C×H×W]` without padding.
    pub fn avg_pool2d(&mut self, a: Var, window: usize, stride: usize) -> Result<Var> {
        let (ia, na) = self.node(a)?;
        let (c, h, w) = chw(&na.value.shape, "avg_pool2d")?;
        if window == 0 || stride == 0 || window > h || window > w {
            return Err(Error::invalid(
                "avg_pool2d",
                format!("window {window} stride {stride} on {h}×{w}"),
            ));
        }
        let out_h = (h - window) / stride + 1;
        let out_w = (w - window) / stride + 1;
        let src = &na.value.data;
        let norm = 1.0 / (window * window) as f64;
        let mut data = Vec::with_capacity(c * out_h * out_w);
        for ch in 0..c {
            let plane = &src[ch * h * w..(ch + 1) * h * w];
            for oy in 0..out_h {
                for ox in 0..out_w {
                    let mut acc = 0.0;
                    for wy in 0..window {
                        let row = (oy * stride + wy) * w + ox * stride;
                        acc += plane[row..row + window].iter().sum::<f64>();
                    }
                    data.push(acc * norm);
                }
            }
        }
        let rg = na.requires_grad;
        Ok(self.push(
            Tensor {
                shape: vec![c, out_h, out_w],
                data,
            },
            rg,
            Op::AvgPool {
                a: ia,
                channels: c,
                height: h,
                width: w,
                window,
                stride,
                out_h,
                out_w,
            },
        ))
    }

    // ----- backward --------------------------------------------------------

    /// Back-propagates from a scalar `output` through every recorded ancestor.
    pub fn backward(&mut self, output: Var) -> Result<()> {
        let out = self.check(output)?;
        if !self.nodes[out].value.is_scalar() {
            return Err(Error::invalid(
                "backward",
                format!("output must be scalar, got shape {:?}", self.nodes[out].value.shape),
            ));
        }
        if !self.nodes[out].requires_grad {
            return Ok(());
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; out + 1];
        grads[out] = Some(vec![1.0]);
        for i in (0..=out).rev() {
            let Some(g) = grads[i].take() else { continue };
            propagate(&self.nodes, i, &g, &mut grads);
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(acc) => acc.iter_mut().zip(&g).for_each(|(a, d)| *a += d),
                None => node.grad = Some(g),
            }
        }
        Ok(())
    }
}

fn chw(shape: &[usize], op: &'static str) -> Result<(usize, usize, usize)> {
    match shape {
        &[c, h, w] => Ok((c, h, w)),
        _ => Err(Error::invalid(op, format!("expected C×H×W input, got {shape:?}"))),
    }
}

/// Zero-initialized gradient slot of node `i`, or `None` when it needs no gradient.
fn slot<'a>(nodes: &[Node], grads: &'a mut [Option<Vec<f64>>], i: usize) -> Option<&'a mut [f64]> {
    if !nodes[i].requires_grad {
        return None;
    }
    Some(grads[i].get_or_insert_with(|| vec![0.0; nodes[i].value.len()]))
}

fn propagate(nodes: &[Node], i: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
    let node = &nodes[i];
    match &node.op {
        Op::Leaf => {}
        Op::Binary { kind, a, b } => {
            let (va, vb) = (&nodes[*a].value.data, &nodes[*b].value.data);
            let n = g.len();
            let at = |v: &Vec<f64>, j: usize| if v.len() == n { v[j] } else { v[0] };
            // d(out)/d(a), d(out)/d(b) at position j
            let da = |j: usize| match kind {
                Binary::Add | Binary::Sub => 1.0,
                Binary::Mul => at(vb, j),
            };
            let db = |j: usize| match kind {
                Binary::Add => 1.0,
                Binary::Sub => -1.0,
                Binary::Mul => at(va, j),
            };
            if let Some(ga) = slot(nodes, grads, *a) {
                if ga.len() == n {
                    for j in 0..n {
                        ga[j] += g[j] * da(j);
                    }
                } else {
                    ga[0] += (0..n).map(|j| g[j] * da(j)).sum::<f64>();
                }
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                if gb.len() == n {
                    for j in 0..n {
                        gb[j] += g[j] * db(j);
                    }
                } else {
                    gb[0] += (0..n).map(|j| g[j] * db(j)).sum::<f64>();
                }
            }
        }
        Op::Unary { kind, a } => {
            let x = &nodes[*a].value.data;
            let y = &node.value.data;
            if let Some(ga) = slot(nodes, grads, *a) {
                for j in 0..g.len() {
                    let d = match kind {
                        Unary::Relu => {
                            if x[j] > 0.0 {
                                1.0
                            } else {
                                0.0
                            }
                        }
                        Unary::Sigmoid => y[j] * (1.0 - y[j]),
                        Unary::Tanh => 1.0 - y[j] * y[j],
                        Unary::Exp => y[j],
                        Unary::Scale(s) => *s,
                    };
                    ga[j] += g[j] * d;
                }
            }
        }
        Op::MatMul { a, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            let bv = &nodes[*b].value.data;
            if let Some(ga) = slot(nodes, grads, *a) {
                kernels::matmul_nt(g, bv, ga, m, n, k);
            }
            let av = &nodes[*a].value.data;
            if let Some(gb) = slot(nodes, grads, *b) {
                kernels::matmul_tn(av, g, gb, m, k, n);
            }
        }
        Op::Linear { x, w, b, m, k, n } => {
            let (m, k, n) = (*m, *k, *n);
            let xv = &nodes[*x].value.data;
            if let Some(gw) = slot(nodes, grads, *w) {
                kernels::matmul_nt(g, xv, gw, m, n, k);
            }
            let wv = &nodes[*w].value.data;
            if let Some(gx) = slot(nodes, grads, *x) {
                kernels::matmul_tn(wv, g, gx, m, k, n);
            }
            if let Some(gb) = slot(nodes, grads, *b) {
                for (gbi, row) in gb.iter_mut().zip(g.chunks(n)) {
                    *gbi += row.iter().sum::<f64>();
                }
            }
        }
        Op::Conv2d {
            input,
            kernel,
            bias,
            geom,
            out_channels,
            cols,
        } => {
            let p = geom.col_cols();
            let rows = geom.col_rows();
            if let Some(gk) = slot(nodes, grads, *kernel) {
                kernels::matmul_nt(g, cols, gk, *out_channels, p, rows);
            }
            if let Some(b) = bias {
                if let Some(gb) = slot(nodes, grads, *b) {
                    for (gbi, plane) in gb.iter_mut().zip(g.chunks(p)) {
                        *gbi += plane.iter().sum::<f64>();
                    }
                }
            }
            if nodes[*input].requires_grad {
                let kv = &nodes[*kernel].value.data;
                let mut gcols = vec![0.0; rows * p];
                kernels::matmul_tn(kv, g, &mut gcols, *out_channels, rows, p);
                if let Some(gi) = slot(nodes, grads, *input) {
                    kernels::col2im(&gcols, geom, gi);
                }
            }
        }
        Op::Reduce { kind, a } => {
            let x = &nodes[*a].value.data;
            let g0 = g[0];
            if let Some(ga) = slot(nodes, grads, *a) {
                match kind {
                    Reduce::Sum => ga.iter_mut().for_each(|v| *v += g0),
                    Reduce::Mean => {
                        let s = g0 / x.len() as f64;
                        ga.iter_mut().for_each(|v| *v += s);
                    }
                    Reduce::L2Norm => {
                        let norm = (node.value.data[0].powi(2) + L2_EPS).sqrt();
                        for (v, &xi) in ga.iter_mut().zip(x) {
                            *v += g0 * xi / norm;
                        }
                    }
                }
            }
        }
        Op::Concat {
            inputs,
            outer,
            inner,
            sizes,
        } => {
            let total: usize = sizes.iter().sum();
            let mut offset = 0;
            for (&src, &size) in inputs.iter().zip(sizes) {
                if let Some(gs) = slot(nodes, grads, src) {
                    for o in 0..*outer {
                        let from = (o * total + offset) * inner;
                        let dst = &mut gs[o * size * inner..(o + 1) * size * inner];
                        for (d, s) in dst.iter_mut().zip(&g[from..from + size * inner]) {
                            *d += s;
                        }
                    }
                }
                offset += size;
            }
        }
        Op::Slice {
            a,
            outer,
            inner,
            axis_len,
            start,
            len,
        } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for o in 0..*outer {
                    let base = (o * axis_len + start) * inner;
                    let src = &g[o * len * inner..(o + 1) * len * inner];
                    for (d, s) in ga[base..base + len * inner].iter_mut().zip(src) {
                        *d += s;
                    }
                }
            }
        }
        Op::Reshape { a } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                ga.iter_mut().zip(g).for_each(|(d, s)| *d += s);
            }
        }
        Op::MaxPool { a, argmax } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                for (&at, &gj) in argmax.iter().zip(g) {
                    ga[at] += gj;
                }
            }
        }
        Op::AvgPool {
            a,
            channels,
            height,
            width,
            window,
            stride,
            out_h,
            out_w,
        } => {
            if let Some(ga) = slot(nodes, grads, *a) {
                let norm = 1.0 / (window * window) as f64;
                for ch in 0..*channels {
                    for oy in 0..*out_h {
                        for ox in 0..*out_w {
                            let gj = g[(ch * out_h + oy) * out_w + ox] * norm;
                            for wy in 0..*window {
                                let row = ch * height * width + (oy * stride + wy) * width + ox * stride;
                                ga[row..row + window].iter_mut().for_each(|v| *v += gj);
                            }
                        }
                    }
                }
            }
        }
    }
}
