use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::{Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    #[default]
    Relu,
    Tanh,
    Linear,
}

impl Activation {
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Linear => x,
        }
    }

    /// Derivative expressed through the input `x` and output `y`.
    fn derivative(self, x: f64, y: f64) -> f64 {
        match self {
            Activation::Relu => {
                if x > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - y * y,
            Activation::Linear => 1.0,
        }
    }
}

impl FromStr for Activation {
    type Err = TensorError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "linear" => Ok(Activation::Linear),
            other => Err(TensorError::UnknownActivation(other.to_string())),
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Linear => "linear",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Padding {
    #[default]
    Same,
    Valid,
}

impl Padding {
    /// Left padding and output width for a kernel of width `kw` over `w`.
    fn geometry(self, w: usize, kw: usize) -> Option<(usize, usize)> {
        match self {
            Padding::Same => Some(((kw - 1) / 2, w)),
            Padding::Valid => (kw <= w).then(|| (0, w - kw + 1)),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ElementwiseOp {
    Add,
    Sub,
    Mul,
}

#[derive(Debug)]
enum Op {
    Leaf,
    Binary(ElementwiseOp, Var, Var),
    AddScalar(Var),
    MulScalar(Var, f64),
    Matmul(Var, Var),
    Conv1d {
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        left: usize,
    },
    DepthwiseConv1d {
        x: Var,
        kernel: Var,
        left: usize,
    },
    MaxPool1d {
        x: Var,
        argmax: Vec<usize>,
    },
    Act(Var, Activation),
    Sum(Var),
    Mean(Var),
    Reshape(Var),
    ConcatRows(Vec<Var>),
    SelectRows {
        x: Var,
        rows: Vec<usize>,
    },
    Gather {
        x: Var,
        index: Vec<usize>,
    },
    Transpose(Var),
    SumRows(Var),
    SoftmaxRows(Var),
    ScaleRows {
        x: Var,
        scale: Var,
    },
    AddBias {
        x: Var,
        bias: Var,
    },
}

#[derive(Debug)]
struct Node {
    value: Tensor,
    op: Op,
    trainable: bool,
    requires_grad: bool,
}

/// Records primitive applications in evaluation order; `backward` replays
/// them in reverse. Every operand index is smaller than its consumer's.
#[derive(Debug, Default)]
pub struct Tape {
    nodes: Vec<Node>,
}

/// Gradients of a scalar loss with respect to each trainable leaf.
#[derive(Debug)]
pub struct Gradients {
    grads: Vec<Option<Tensor>>,
}

impl Gradients {
    /// Gradient for a trainable leaf; `None` for anything else.
    pub fn get(&self, v: Var) -> Option<&Tensor> {
        self.grads.get(v.0).and_then(Option::as_ref)
    }

    pub fn take(&mut self, v: Var) -> Option<Tensor> {
        self.grads.get_mut(v.0).and_then(Option::take)
    }
}

fn mismatch(op: &'static str, a: &Tensor, b: &Tensor) -> TensorError {
    TensorError::ShapeMismatch {
        op,
        left: a.shape().to_vec(),
        right: b.shape().to_vec(),
    }
}

fn invalid(op: &'static str, msg: impl Into<String>) -> TensorError {
    TensorError::InvalidArgument {
        op,
        msg: msg.into(),
    }
}

fn dims2(op: &'static str, t: &Tensor) -> Result<(usize, usize), TensorError> {
    match t.shape() {
        [r, c] => Ok((*r, *c)),
        s => Err(invalid(op, format!("expected a 2-D tensor, got shape {s:?}"))),
    }
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

    fn push(&mut self, value: Tensor, op: Op, parents: &[Var]) -> Var {
        let requires_grad = parents.iter().any(|p| self.nodes[p.0].requires_grad);
        self.nodes.push(Node {
            value,
            op,
            trainable: false,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    /// Trainable leaf: receives a gradient from `backward`.
    pub fn param(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            trainable: true,
            requires_grad: true,
        });
        Var(self.nodes.len() - 1)
    }

    /// Non-trainable leaf.
    pub fn constant(&mut self, value: Tensor) -> Var {
        self.nodes.push(Node {
            value,
            op: Op::Leaf,
            trainable: false,
            requires_grad: false,
        });
        Var(self.nodes.len() - 1)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn is_trainable(&self, v: Var) -> bool {
        self.nodes[v.0].trainable
    }

    pub fn elementwise(&mut self, kind: ElementwiseOp, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let name = match kind {
            ElementwiseOp::Add => "add",
            ElementwiseOp::Sub => "sub",
            ElementwiseOp::Mul => "mul",
        };
        if ta.shape() != tb.shape() {
            return Err(mismatch(name, ta, tb));
        }
        let f = match kind {
            ElementwiseOp::Add => |x: f64, y: f64| x + y,
            ElementwiseOp::Sub => |x: f64, y: f64| x - y,
            ElementwiseOp::Mul => |x: f64, y: f64| x * y,
        };
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let out = Tensor::from_parts(ta.shape().to_vec(), data);
        Ok(self.push(out, Op::Binary(kind, a, b), &[a, b]))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseOp::Add, a, b)
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseOp::Sub, a, b)
    }

    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        self.elementwise(ElementwiseOp::Mul, a, b)
    }

    pub fn add_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v + c);
        self.push(out, Op::AddScalar(a), &[a])
    }

    pub fn mul_scalar(&mut self, a: Var, c: f64) -> Var {
        let out = self.value(a).map(|v| v * c);
        self.push(out, Op::MulScalar(a, c), &[a])
    }

    pub fn matmul(&mut self, a: Var, b: Var) -> Result<Var, TensorError> {
        let (ta, tb) = (self.value(a), self.value(b));
        let (m, k) = dims2("matmul", ta)?;
        let (k2, n) = dims2("matmul", tb)?;
        if k != k2 {
            return Err(mismatch("matmul", ta, tb));
        }
        let out = matmul_raw(ta.data(), tb.data(), m, k, n);
        Ok(self.push(Tensor::from_parts(vec![m, n], out), Op::Matmul(a, b), &[a, b]))
    }

    /// Cross-correlation of `x` [Cin×W] with `kernel` [Cout×Cin×kw], stride 1.
    pub fn conv1d(
        &mut self,
        x: Var,
        kernel: Var,
        bias: Option<Var>,
        padding: Padding,
    ) -> Result<Var, TensorError> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        let (cin, w) = dims2("conv1d", tx)?;
        let (cout, kcin, kw) = match tk.shape() {
            [a, b, c] => (*a, *b, *c),
            s => return Err(invalid("conv1d", format!("kernel must be 3-D, got {s:?}"))),
        };
        if kcin != cin {
            return Err(mismatch("conv1d", tx, tk));
        }
        let (left, wout) = padding
            .geometry(w, kw)
            .ok_or_else(|| invalid("conv1d", format!("kernel width {kw} exceeds input width {w}")))?;
        let mut out = vec![0.0; cout * wout];
        if let Some(b) = bias {
            let tb = self.value(b);
            if tb.shape() != [cout] {
                return Err(mismatch("conv1d bias", tb, tk));
            }
            for (o, row) in out.chunks_mut(wout).enumerate() {
                row.fill(tb.data()[o]);
            }
        }
        let (xd, kd) = (tx.data(), tk.data());
        for o in 0..cout {
            let orow = &mut out[o * wout..(o + 1) * wout];
            for c in 0..cin {
                let xrow = &xd[c * w..(c + 1) * w];
                for j in 0..kw {
                    let kv = kd[(o * cin + c) * kw + j];
                    let (t0, t1, shift) = tap_range(j, left, w, wout);
                    for t in t0..t1 {
                        orow[t] += kv * xrow[(t as isize + shift) as usize];
                    }
                }
            }
        }
        let parents: Vec<Var> = std::iter::once(x).chain(Some(kernel)).chain(bias).collect();
        Ok(self.push(
            Tensor::from_parts(vec![cout, wout], out),
            Op::Conv1d {
                x,
                kernel,
                bias,
                left,
            },
            &parents,
        ))
    }

    /// Channel-wise convolution of `x` [C×W] with one kernel [kw] shared by
    /// every channel; no bias.
    pub fn depthwise_conv1d(&mut self, x: Var, kernel: Var, padding: Padding) -> Result<Var, TensorError> {
        let (tx, tk) = (self.value(x), self.value(kernel));
        let (c, w) = dims2("depthwise_conv1d", tx)?;
        let kw = match tk.shape() {
            [kw] => *kw,
            s => return Err(invalid("depthwise_conv1d", format!("kernel must be 1-D, got {s:?}"))),
        };
        let (left, wout) = padding
            .geometry(w, kw)
            .ok_or_else(|| invalid("depthwise_conv1d", format!("kernel width {kw} exceeds input width {w}")))?;
        let mut out = vec![0.0; c * wout];
        for ch in 0..c {
            let xrow = &tx.data()[ch * w..(ch + 1) * w];
            let orow = &mut out[ch * wout..(ch + 1) * wout];
            for (j, &kv) in tk.data().iter().enumerate() {
                let (t0, t1, shift) = tap_range(j, left, w, wout);
                for t in t0..t1 {
                    orow[t] += kv * xrow[(t as isize + shift) as usize];
                }
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![c, wout], out),
            Op::DepthwiseConv1d { x, kernel, left },
            &[x, kernel],
        ))
    }

    /// Per-channel windowed maximum; gradient goes to the first maximal element.
    pub fn maxpool1d(&mut self, x: Var, window: usize, stride: usize) -> Result<Var, TensorError> {
        if window == 0 || stride == 0 {
            return Err(invalid("maxpool1d", "window and stride must be positive"));
        }
        let tx = self.value(x);
        let (c, w) = dims2("maxpool1d", tx)?;
        if window > w {
            return Err(invalid("maxpool1d", format!("window {window} exceeds width {w}")));
        }
        let wout = (w - window) / stride + 1;
        let mut out = Vec::with_capacity(c * wout);
        let mut argmax = Vec::with_capacity(c * wout);
        for ch in 0..c {
            for t in 0..wout {
                let start = ch * w + t * stride;
                let mut best = start;
                for i in start + 1..start + window {
                    if tx.data()[i] > tx.data()[best] {
                        best = i;
                    }
                }
                argmax.push(best);
                out.push(tx.data()[best]);
            }
        }
        Ok(self.push(
            Tensor::from_parts(vec![c, wout], out),
            Op::MaxPool1d { x, argmax },
            &[x],
        ))
    }

    pub fn activation(&mut self, x: Var, kind: Activation) -> Var {
        if kind == Activation::Linear {
            // identity: record nothing
            return x;
        }
        let out = self.value(x).map(|v| kind.apply(v));
        self.push(out, Op::Act(x, kind), &[x])
    }

    pub fn sum(&mut self, x: Var) -> Var {
        let s = self.value(x).sum();
        self.push(Tensor::scalar(s), Op::Sum(x), &[x])
    }

    pub fn mean(&mut self, x: Var) -> Var {
        let t = self.value(x);
        let m = t.sum() / t.numel() as f64;
        self.push(Tensor::scalar(m), Op::Mean(x), &[x])
    }

    pub fn reshape(&mut self, x: Var, shape: &[usize]) -> Result<Var, TensorError> {
        let out = self.value(x).reshape(shape)?;
        Ok(self.push(out, Op::Reshape(x), &[x]))
    }

    /// Concatenates along the leading axis; trailing dimensions must agree.
    pub fn concat_rows(&mut self, parts: &[Var]) -> Result<Var, TensorError> {
        let first = parts
            .first()
            .ok_or_else(|| invalid("concat_rows", "no inputs"))?;
        let tail = self.value(*first).shape()[1..].to_vec();
        let mut rows = 0;
        let mut data = Vec::new();
        for &p in parts {
            let t = self.value(p);
            if t.shape()[1..] != tail[..] {
                return Err(mismatch("concat_rows", self.value(*first), t));
            }
            rows += t.shape()[0];
            data.extend_from_slice(t.data());
        }
        let mut shape = vec![rows];
        shape.extend(tail);
        Ok(self.push(Tensor::from_parts(shape, data), Op::ConcatRows(parts.to_vec()), parts))
    }

    /// Picks leading-axis slices (rows) in the given order.
    pub fn select_rows(&mut self, x: Var, rows: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        let r = t.shape()[0];
        if rows.is_empty() {
            return Err(invalid("select_rows", "empty row list"));
        }
        if let Some(bad) = rows.iter().find(|&&i| i >= r) {
            return Err(invalid("select_rows", format!("row {bad} out of range {r}")));
        }
        let stride = t.numel() / r;
        let mut data = Vec::with_capacity(rows.len() * stride);
        for &i in rows {
            data.extend_from_slice(&t.data()[i * stride..(i + 1) * stride]);
        }
        let mut shape = t.shape().to_vec();
        shape[0] = rows.len();
        Ok(self.push(
            Tensor::from_parts(shape, data),
            Op::SelectRows {
                x,
                rows: rows.to_vec(),
            },
            &[x],
        ))
    }

    /// Flat-index gather into a 1-D tensor.
    pub fn gather(&mut self, x: Var, index: &[usize]) -> Result<Var, TensorError> {
        let t = self.value(x);
        if index.is_empty() {
            return Err(invalid("gather", "empty index"));
        }
        if let Some(bad) = index.iter().find(|&&i| i >= t.numel()) {
            return Err(invalid("gather", format!("index {bad} out of range {}", t.numel())));
        }
        let data = index.iter().map(|&i| t.data()[i]).collect();
        Ok(self.push(
            Tensor::from_parts(vec![index.len()], data),
            Op::Gather {
                x,
                index: index.to_vec(),
            },
            &[x],
        ))
    }

    pub fn transpose(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (r, c) = dims2("transpose", t)?;
        let out = transpose_raw(t.data(), r, c);
        Ok(self.push(Tensor::from_parts(vec![c, r], out), Op::Transpose(x), &[x]))
    }

    /// Sums each row of a 2-D tensor: [R×C] → [R].
    pub fn sum_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (r, c) = dims2("sum_rows", t)?;
        let out = t.data().chunks(c).map(|row| row.iter().sum()).collect();
        Ok(self.push(Tensor::from_parts(vec![r], out), Op::SumRows(x), &[x]))
    }

    pub fn softmax_rows(&mut self, x: Var) -> Result<Var, TensorError> {
        let t = self.value(x);
        let (r, c) = dims2("softmax_rows", t)?;
        let mut out = Vec::with_capacity(r * c);
        for row in t.data().chunks(c) {
            out.extend(softmax(row));
        }
        Ok(self.push(Tensor::from_parts(vec![r, c], out), Op::SoftmaxRows(x), &[x]))
    }

    /// Multiplies row `r` of `x` [R×C] by `scale[r]`.
    pub fn scale_rows(&mut self, x: Var, scale: Var) -> Result<Var, TensorError> {
        let (tx, ts) = (self.value(x), self.value(scale));
        let (r, c) = dims2("scale_rows", tx)?;
        if ts.shape() != [r] {
            return Err(mismatch("scale_rows", tx, ts));
        }
        let mut out = tx.data().to_vec();
        for (row, &s) in out.chunks_mut(c).zip(ts.data()) {
            for v in row {
                *v *= s;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![r, c], out), Op::ScaleRows { x, scale }, &[x, scale]))
    }

    /// Adds a per-row bias ([R]) or one shared bias ([1]) to `x` [R×C].
    pub fn add_bias(&mut self, x: Var, bias: Var) -> Result<Var, TensorError> {
        let (tx, tb) = (self.value(x), self.value(bias));
        let (r, c) = dims2("add_bias", tx)?;
        let shared = match tb.shape() {
            [n] if *n == r => false,
            [1] => true,
            _ => return Err(mismatch("add_bias", tx, tb)),
        };
        let mut out = tx.data().to_vec();
        for (i, row) in out.chunks_mut(c).enumerate() {
            let b = tb.data()[if shared { 0 } else { i }];
            for v in row {
                *v += b;
            }
        }
        Ok(self.push(Tensor::from_parts(vec![r, c], out), Op::AddBias { x, bias }, &[x, bias]))
    }

    /// Reverse pass from a scalar loss. Every trainable leaf receives a
    /// gradient; leaves the loss does not depend on get zeros.
    pub fn backward(&self, loss: Var) -> Result<Gradients, TensorError> {
        let lt = self.value(loss);
        if lt.numel() != 1 {
            return Err(TensorError::NonScalarLoss(lt.shape().to_vec()));
        }
        let mut grads: Vec<Option<Tensor>> = (0..self.nodes.len()).map(|_| None).collect();
        grads[loss.0] = Some(Tensor::ones(lt.shape()));

        for idx in (0..=loss.0).rev() {
            let node = &self.nodes[idx];
            if !node.requires_grad || matches!(node.op, Op::Leaf) {
                continue;
            }
            let Some(g) = grads[idx].take() else {
                continue;
            };
            self.propagate(idx, &g, &mut grads);
        }

        let grads = self
            .nodes
            .iter()
            .zip(grads)
            .map(|(node, g)| {
                node.trainable
                    .then(|| g.unwrap_or_else(|| Tensor::zeros(node.value.shape())))
            })
            .collect();
        Ok(Gradients { grads })
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &Tensor, grads: &mut [Option<Tensor>]) {
        let node = &self.nodes[idx];
        let mut send = |v: Var, t: Tensor| {
            if !self.wants(v) {
                return;
            }
            match &mut grads[v.0] {
                Some(acc) => acc.add_assign(&t),
                slot @ None => *slot = Some(t),
            }
        };
        match &node.op {
            Op::Leaf => {}
            Op::Binary(kind, a, b) => match kind {
                ElementwiseOp::Add => {
                    send(*a, g.clone());
                    send(*b, g.clone());
                }
                ElementwiseOp::Sub => {
                    send(*a, g.clone());
                    send(*b, g.map(|v| -v));
                }
                ElementwiseOp::Mul => {
                    let (ta, tb) = (self.value(*a), self.value(*b));
                    if self.wants(*a) {
                        send(*a, zip_map(g, tb, |x, y| x * y));
                    }
                    if self.wants(*b) {
                        send(*b, zip_map(g, ta, |x, y| x * y));
                    }
                }
            },
            Op::AddScalar(a) => send(*a, g.clone()),
            Op::MulScalar(a, c) => send(*a, g.map(|v| v * c)),
            Op::Matmul(a, b) => {
                let (ta, tb) = (self.value(*a), self.value(*b));
                let (m, k) = (ta.shape()[0], ta.shape()[1]);
                let n = tb.shape()[1];
                if self.wants(*a) {
                    let bt = transpose_raw(tb.data(), k, n);
                    send(*a, Tensor::from_parts(vec![m, k], matmul_raw(g.data(), &bt, m, n, k)));
                }
                if self.wants(*b) {
                    let at = transpose_raw(ta.data(), m, k);
                    send(*b, Tensor::from_parts(vec![k, n], matmul_raw(&at, g.data(), k, m, n)));
                }
            }
            Op::Conv1d {
                x,
                kernel,
                bias,
                left,
            } => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let (cin, w) = (tx.shape()[0], tx.shape()[1]);
                let (cout, kw) = (tk.shape()[0], tk.shape()[2]);
                let wout = g.shape()[1];
                let gd = g.data();
                if let Some(b) = bias {
                    if self.wants(*b) {
                        let db = gd.chunks(wout).map(|r| r.iter().sum()).collect();
                        send(*b, Tensor::from_parts(vec![cout], db));
                    }
                }
                let want_x = self.wants(*x);
                let want_k = self.wants(*kernel);
                let mut dx = vec![0.0; if want_x { cin * w } else { 0 }];
                let mut dk = vec![0.0; if want_k { tk.numel() } else { 0 }];
                for o in 0..cout {
                    let grow = &gd[o * wout..(o + 1) * wout];
                    for c in 0..cin {
                        let xrow = &tx.data()[c * w..(c + 1) * w];
                        for j in 0..kw {
                            let ki = (o * cin + c) * kw + j;
                            let (t0, t1, shift) = tap_range(j, *left, w, wout);
                            if want_k {
                                let mut acc = 0.0;
                                for t in t0..t1 {
                                    acc += grow[t] * xrow[(t as isize + shift) as usize];
                                }
                                dk[ki] += acc;
                            }
                            if want_x {
                                let kv = tk.data()[ki];
                                let dxrow = &mut dx[c * w..(c + 1) * w];
                                for t in t0..t1 {
                                    dxrow[(t as isize + shift) as usize] += grow[t] * kv;
                                }
                            }
                        }
                    }
                }
                if want_k {
                    send(*kernel, Tensor::from_parts(tk.shape().to_vec(), dk));
                }
                if want_x {
                    send(*x, Tensor::from_parts(vec![cin, w], dx));
                }
            }
            Op::DepthwiseConv1d { x, kernel, left } => {
                let (tx, tk) = (self.value(*x), self.value(*kernel));
                let (c, w) = (tx.shape()[0], tx.shape()[1]);
                let wout = g.shape()[1];
                let want_x = self.wants(*x);
                let mut dx = vec![0.0; if want_x { c * w } else { 0 }];
                let mut dk = vec![0.0; tk.numel()];
                for ch in 0..c {
                    let grow = &g.data()[ch * wout..(ch + 1) * wout];
                    let xrow = &tx.data()[ch * w..(ch + 1) * w];
                    for (j, &kv) in tk.data().iter().enumerate() {
                        let (t0, t1, shift) = tap_range(j, *left, w, wout);
                        let mut acc = 0.0;
                        for t in t0..t1 {
                            let xi = (t as isize + shift) as usize;
                            acc += grow[t] * xrow[xi];
                            if want_x {
                                dx[ch * w + xi] += grow[t] * kv;
                            }
                        }
                        dk[j] += acc;
                    }
                }
                send(*kernel, Tensor::from_parts(tk.shape().to_vec(), dk));
                if want_x {
                    send(*x, Tensor::from_parts(vec![c, w], dx));
                }
            }
            Op::MaxPool1d { x, argmax } => {
                let tx = self.value(*x);
                let mut dx = vec![0.0; tx.numel()];
                for (&i, &gv) in argmax.iter().zip(g.data()) {
                    dx[i] += gv;
                }
                send(*x, Tensor::from_parts(tx.shape().to_vec(), dx));
            }
            Op::Act(x, kind) => {
                let tx = self.value(*x);
                let data = g
                    .data()
                    .iter()
                    .zip(tx.data().iter().zip(node.value.data()))
                    .map(|(&gv, (&xv, &yv))| gv * kind.derivative(xv, yv))
                    .collect();
                send(*x, Tensor::from_parts(tx.shape().to_vec(), data));
            }
            Op::Sum(x) => {
                let gv = g.data()[0];
                send(*x, Tensor::full(self.value(*x).shape(), gv));
            }
            Op::Mean(x) => {
                let t = self.value(*x);
                send(*x, Tensor::full(t.shape(), g.data()[0] / t.numel() as f64));
            }
            Op::Reshape(x) => {
                send(*x, Tensor::from_parts(self.value(*x).shape().to_vec(), g.data().to_vec()));
            }
            Op::ConcatRows(parts) => {
                let mut offset = 0;
                for &p in parts {
                    let t = self.value(p);
                    let n = t.numel();
                    send(p, Tensor::from_parts(t.shape().to_vec(), g.data()[offset..offset + n].to_vec()));
                    offset += n;
                }
            }
            Op::SelectRows { x, rows } => {
                let t = self.value(*x);
                let stride = t.numel() / t.shape()[0];
                let mut dx = vec![0.0; t.numel()];
                for (k, &i) in rows.iter().enumerate() {
                    let src = &g.data()[k * stride..(k + 1) * stride];
                    for (d, s) in dx[i * stride..(i + 1) * stride].iter_mut().zip(src) {
                        *d += s;
                    }
                }
                send(*x, Tensor::from_parts(t.shape().to_vec(), dx));
            }
            Op::Gather { x, index } => {
                let t = self.value(*x);
                let mut dx = vec![0.0; t.numel()];
                for (&i, &gv) in index.iter().zip(g.data()) {
                    dx[i] += gv;
                }
                send(*x, Tensor::from_parts(t.shape().to_vec(), dx));
            }
            Op::Transpose(x) => {
                let (r, c) = (g.shape()[0], g.shape()[1]);
                send(*x, Tensor::from_parts(vec![c, r], transpose_raw(g.data(), r, c)));
            }
            Op::SumRows(x) => {
                let t = self.value(*x);
                let c = t.shape()[1];
                let data = g.data().iter().flat_map(|&gv| std::iter::repeat_n(gv, c)).collect();
                send(*x, Tensor::from_parts(t.shape().to_vec(), data));
            }
            Op::SoftmaxRows(x) => {
                let y = &node.value;
                let c = y.shape()[1];
                let mut dx = Vec::with_capacity(y.numel());
                for (yr, gr) in y.data().chunks(c).zip(g.data().chunks(c)) {
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    dx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
                }
                send(*x, Tensor::from_parts(y.shape().to_vec(), dx));
            }
            Op::ScaleRows { x, scale } => {
                let (tx, ts) = (self.value(*x), self.value(*scale));
                let c = tx.shape()[1];
                if self.wants(*x) {
                    let mut dx = g.data().to_vec();
                    for (row, &s) in dx.chunks_mut(c).zip(ts.data()) {
                        for v in row {
                            *v *= s;
                        }
                    }
                    send(*x, Tensor::from_parts(tx.shape().to_vec(), dx));
                }
                if self.wants(*scale) {
                    let ds = g
                        .data()
                        .chunks(c)
                        .zip(tx.data().chunks(c))
                        .map(|(gr, xr)| gr.iter().zip(xr).map(|(a, b)| a * b).sum())
                        .collect();
                    send(*scale, Tensor::from_parts(ts.shape().to_vec(), ds));
                }
            }
            Op::AddBias { x, bias } => {
                send(*x, g.clone());
                let tb = self.value(*bias);
                let c = g.shape()[1];
                let row_sums: Vec<f64> = g.data().chunks(c).map(|r| r.iter().sum()).collect();
                let db = if tb.numel() == 1 {
                    vec![row_sums.iter().sum()]
                } else {
                    row_sums
                };
                send(*bias, Tensor::from_parts(tb.shape().to_vec(), db));
            }
        }
    }
}

/// Valid output positions `t0..t1` for kernel tap `j` and the input offset
/// `shift` such that input index = t + shift.
fn tap_range(j: usize, left: usize, w: usize, wout: usize) -> (usize, usize, isize) {
    let shift = j as isize - left as isize;
    let t0 = (-shift).max(0) as usize;
    let t1 = ((w as isize - shift).max(0) as usize).min(wout);
    (t0.min(t1), t1, shift)
}

fn zip_map(a: &Tensor, b: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    let data = a.data().iter().zip(b.data()).map(|(&x, &y)| f(x, y)).collect();
    Tensor::from_parts(a.shape().to_vec(), data)
}

fn matmul_raw(a: &[f64], b: &[f64], m: usize, k: usize, n: usize) -> Vec<f64> {
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        let orow = &mut out[i * n..(i + 1) * n];
        for p in 0..k {
            let av = a[i * k + p];
            for (o, &bv) in orow.iter_mut().zip(&b[p * n..(p + 1) * n]) {
                *o += av * bv;
            }
        }
    }
    out
}

fn transpose_raw(a: &[f64], r: usize, c: usize) -> Vec<f64> {
    let mut out = vec![0.0; r * c];
    for i in 0..r {
        for j in 0..c {
            out[j * r + i] = a[i * c + j];
        }
    }
    out
}

pub(crate) fn softmax(row: &[f64]) -> Vec<f64> {
    let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = row.iter().map(|v| (v - max).exp()).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}
