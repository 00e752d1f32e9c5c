use super::{Result, Tensor, TensorError};

/// Handle to a value recorded on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

impl Var {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Debug, Clone)]
enum Op {
    Leaf,
    Add(Var, Var),
    Sub(Var, Var),
    Hadamard(Var, Var),
    Scale(Var, f64),
    Affine { w: Var, x: Var, b: Option<Var> },
    Conv2d { input: Var, kernel: Var, bias: Option<Var> },
    Sigmoid(Var),
    Tanh(Var),
    Sum(Var),
    SumSquares(Var),
    Repeat(Var),
    Reshape(Var),
}

#[derive(Debug, Clone)]
struct Node {
    value: Tensor,
    op: Op,
    requires_grad: bool,
}

/// Linear record of primitive operations.
///
/// Nodes are appended in evaluation order, so reverse insertion order is a
/// valid reverse topological order for the backward sweep.
#[derive(Debug, Default, Clone)]
pub struct Tape {
    nodes: Vec<Node>,
}

#[inline]
fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn same_shape(op: &'static str, a: &Tensor, b: &Tensor) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(TensorError::ShapeMismatch { op, left: a.shape().to_vec(), right: b.shape().to_vec() });
    }
    Ok(())
}

fn accumulate(slot: &mut Option<Vec<f64>>, len: usize) -> &mut Vec<f64> {
    slot.get_or_insert_with(|| vec![0.0; len])
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

    /// Registers a differentiable input (a parameter).
    pub fn leaf(&mut self, mut value: Tensor) -> Var {
        value.clear_grad();
        self.push(value, Op::Leaf, true)
    }

    /// Registers an input that never receives a gradient.
    pub fn constant(&mut self, mut value: Tensor) -> Var {
        value.clear_grad();
        self.push(value, Op::Leaf, false)
    }

    pub fn value(&self, v: Var) -> &Tensor {
        &self.nodes[v.0].value
    }

    pub fn shape(&self, v: Var) -> &[usize] {
        self.nodes[v.0].value.shape()
    }

    /// Gradient attached by the last [`Tape::backward`] call.
    pub fn grad(&self, v: Var) -> Option<&[f64]> {
        self.nodes[v.0].value.grad()
    }

    pub fn take_grad(&mut self, v: Var) -> Option<Vec<f64>> {
        let t = &mut self.nodes[v.0].value;
        let g = t.grad().map(<[f64]>::to_vec);
        t.clear_grad();
        g
    }

    fn push(&mut self, value: Tensor, op: Op, requires_grad: bool) -> Var {
        self.nodes.push(Node { value, op, requires_grad });
        Var(self.nodes.len() - 1)
    }

    fn record(&mut self, op_name: &'static str, shape: Vec<usize>, data: Vec<f64>, op: Op, inputs: &[Var]) -> Result<Var> {
        if !data.iter().all(|v| v.is_finite()) {
            return Err(TensorError::NonFinite { op: op_name });
        }
        let requires_grad = inputs.iter().any(|v| self.nodes[v.0].requires_grad);
        let value = Tensor::new(shape, data)?;
        Ok(self.push(value, op, requires_grad))
    }

    fn binary(&mut self, name: &'static str, a: Var, b: Var, f: impl Fn(f64, f64) -> f64, op: Op) -> Result<Var> {
        let (ta, tb) = (self.value(a), self.value(b));
        same_shape(name, ta, tb)?;
        let data = ta.data().iter().zip(tb.data()).map(|(&x, &y)| f(x, y)).collect();
        let shape = ta.shape().to_vec();
        self.record(name, shape, data, op, &[a, b])
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("add", a, b, |x, y| x + y, Op::Add(a, b))
    }

    pub fn sub(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("sub", a, b, |x, y| x - y, Op::Sub(a, b))
    }

    /// Element-wise product of two equally shaped tensors.
    pub fn hadamard(&mut self, a: Var, b: Var) -> Result<Var> {
        self.binary("hadamard", a, b, |x, y| x * y, Op::Hadamard(a, b))
    }

    pub fn scale(&mut self, a: Var, factor: f64) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x * factor).collect();
        let shape = t.shape().to_vec();
        self.record("scale", shape, data, Op::Scale(a, factor), &[a])
    }

    /// `W·x + b` for an `m×n` matrix, length-`n` vector and length-`m` bias.
    pub fn affine(&mut self, w: Var, x: Var, b: Var) -> Result<Var> {
        self.affine_impl(w, x, Some(b))
    }

    /// `W·x` without an intercept.
    pub fn matvec(&mut self, w: Var, x: Var) -> Result<Var> {
        self.affine_impl(w, x, None)
    }

    fn affine_impl(&mut self, w: Var, x: Var, b: Option<Var>) -> Result<Var> {
        let (tw, tx) = (self.value(w), self.value(x));
        if tw.shape().len() != 2 || tx.shape().len() != 1 || tw.shape()[1] != tx.len() {
            return Err(TensorError::ShapeMismatch { op: "affine", left: tw.shape().to_vec(), right: tx.shape().to_vec() });
        }
        let (m, n) = (tw.shape()[0], tw.shape()[1]);
        let mut out = match b {
            Some(b) => {
                let tb = self.value(b);
                if tb.shape() != [m] {
                    return Err(TensorError::ShapeMismatch { op: "affine", left: vec![m], right: tb.shape().to_vec() });
                }
                tb.data().to_vec()
            }
            None => vec![0.0; m],
        };
        let (wd, xd) = (tw.data(), tx.data());
        for (i, o) in out.iter_mut().enumerate() {
            let row = &wd[i * n..(i + 1) * n];
            for (wij, xj) in row.iter().zip(xd) {
                *o += wij * xj;
            }
        }
        let mut inputs = vec![w, x];
        inputs.extend(b);
        self.record("affine", vec![m], out, Op::Affine { w, x, b }, &inputs)
    }

    /// Same-size, stride-1 convolution of an `[M,N,L]` input with a
    /// `[kh,kw,L,L']` kernel, zero padded by `(kh-1)/2, (kw-1)/2`.
    pub fn conv2d(&mut self, input: Var, kernel: Var, bias: Option<Var>) -> Result<Var> {
        let (ti, tk) = (self.value(input), self.value(kernel));
        if ti.shape().len() != 3 || tk.shape().len() != 4 {
            return Err(TensorError::ShapeMismatch { op: "conv2d", left: ti.shape().to_vec(), right: tk.shape().to_vec() });
        }
        let [m, n, cin] = [ti.shape()[0], ti.shape()[1], ti.shape()[2]];
        let [kh, kw, kin, cout] = [tk.shape()[0], tk.shape()[1], tk.shape()[2], tk.shape()[3]];
        if kh % 2 == 0 || kw % 2 == 0 {
            return Err(TensorError::EvenKernel { kh, kw });
        }
        if kin != cin {
            return Err(TensorError::ChannelMismatch { input: cin, kernel: kin });
        }
        let mut out = vec![0.0; m * n * cout];
        if let Some(b) = bias {
            let tb = self.value(b);
            if tb.shape() != [cout] {
                return Err(TensorError::ShapeMismatch { op: "conv2d bias", left: vec![cout], right: tb.shape().to_vec() });
            }
            for px in out.chunks_exact_mut(cout) {
                px.copy_from_slice(tb.data());
            }
        }
        let geom = ConvGeom { m, n, cin, cout, kh, kw };
        geom.for_each_tap(|out_base, in_base, k_base| {
            for c in 0..cin {
                let x = ti.data()[in_base + c];
                let krow = &tk.data()[k_base + c * cout..k_base + (c + 1) * cout];
                for (o, k) in out[out_base..out_base + cout].iter_mut().zip(krow) {
                    *o += x * k;
                }
            }
        });
        let mut inputs = vec![input, kernel];
        inputs.extend(bias);
        self.record("conv2d", vec![m, n, cout], out, Op::Conv2d { input, kernel, bias }, &inputs)
    }

    pub fn sigmoid(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|&x| sigmoid_scalar(x)).collect();
        let shape = t.shape().to_vec();
        self.record("sigmoid", shape, data, Op::Sigmoid(a), &[a])
    }

    pub fn tanh(&mut self, a: Var) -> Result<Var> {
        let t = self.value(a);
        let data = t.data().iter().map(|x| x.tanh()).collect();
        let shape = t.shape().to_vec();
        self.record("tanh", shape, data, Op::Tanh(a), &[a])
    }

    pub fn sum(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).data().iter().sum();
        self.record("sum", vec![1], vec![s], Op::Sum(a), &[a])
    }

    pub fn sum_squares(&mut self, a: Var) -> Result<Var> {
        let s = self.value(a).sum_squares();
        self.record("sum_squares", vec![1], vec![s], Op::SumSquares(a), &[a])
    }

    /// Broadcasts a one-element tensor to an `[rows, cols, 1]` tensor.
    pub fn repeat_scalar(&mut self, a: Var, rows: usize, cols: usize) -> Result<Var> {
        let t = self.value(a);
        if t.len() != 1 {
            return Err(TensorError::ShapeMismatch { op: "repeat_scalar", left: vec![1], right: t.shape().to_vec() });
        }
        if rows == 0 || cols == 0 {
            return Err(TensorError::InvalidArgument(format!("repeat target {rows}x{cols}")));
        }
        let data = vec![t.data()[0]; rows * cols];
        self.record("repeat_scalar", vec![rows, cols, 1], data, Op::Repeat(a), &[a])
    }

    pub fn reshape(&mut self, a: Var, shape: &[usize]) -> Result<Var> {
        let t = self.value(a);
        if shape.iter().product::<usize>() != t.len() {
            return Err(TensorError::ShapeMismatch { op: "reshape", left: t.shape().to_vec(), right: shape.to_vec() });
        }
        let data = t.data().to_vec();
        self.record("reshape", shape.to_vec(), data, Op::Reshape(a), &[a])
    }

    /// `[M,N]` → `[M,N,1]`.
    pub fn expand_dim(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 2 {
            return Err(TensorError::InvalidArgument(format!("expand_dim expects a matrix, got {s:?}")));
        }
        self.reshape(a, &[s[0], s[1], 1])
    }

    /// `[M,N,1]` → `[M,N]`.
    pub fn squeeze(&mut self, a: Var) -> Result<Var> {
        let s = self.shape(a).to_vec();
        if s.len() != 3 || s[2] != 1 {
            return Err(TensorError::InvalidArgument(format!("squeeze expects [M,N,1], got {s:?}")));
        }
        self.reshape(a, &[s[0], s[1]])
    }

    /// Reverse sweep from a scalar `loss`; attaches `∂loss/∂v` to every
    /// node that depends on a leaf registered with [`Tape::leaf`].
    pub fn backward(&mut self, loss: Var) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(TensorError::EmptyTape);
        }
        if self.value(loss).len() != 1 {
            return Err(TensorError::NotScalar(self.shape(loss).to_vec()));
        }
        for node in &mut self.nodes {
            node.value.clear_grad();
        }
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            if !self.nodes[idx].requires_grad {
                continue;
            }
            self.propagate(idx, &g, &mut grads);
            self.nodes[idx].value.set_grad(g)?;
        }
        Ok(())
    }

    fn wants(&self, v: Var) -> bool {
        self.nodes[v.0].requires_grad
    }

    fn propagate(&self, idx: usize, g: &[f64], grads: &mut [Option<Vec<f64>>]) {
        let node = &self.nodes[idx];
        match node.op {
            Op::Leaf => {}
            Op::Add(a, b) => {
                for (v, sign) in [(a, 1.0), (b, 1.0)] {
                    if self.wants(v) {
                        let acc = accumulate(&mut grads[v.0], g.len());
                        acc.iter_mut().zip(g).for_each(|(s, gi)| *s += sign * gi);
                    }
                }
            }
            Op::Sub(a, b) => {
                for (v, sign) in [(a, 1.0), (b, -1.0)] {
                    if self.wants(v) {
                        let acc = accumulate(&mut grads[v.0], g.len());
                        acc.iter_mut().zip(g).for_each(|(s, gi)| *s += sign * gi);
                    }
                }
            }
            Op::Hadamard(a, b) => {
                let (da, db) = (self.value(a).data(), self.value(b).data());
                if self.wants(a) {
                    let acc = accumulate(&mut grads[a.0], g.len());
                    for k in 0..g.len() {
                        acc[k] += g[k] * db[k];
                    }
                }
                if self.wants(b) {
                    let acc = accumulate(&mut grads[b.0], g.len());
                    for k in 0..g.len() {
                        acc[k] += g[k] * da[k];
                    }
                }
            }
            Op::Scale(a, f) => {
                if self.wants(a) {
                    let acc = accumulate(&mut grads[a.0], g.len());
                    acc.iter_mut().zip(g).for_each(|(s, gi)| *s += f * gi);
                }
            }
            Op::Affine { w, x, b } => {
                let (tw, tx) = (self.value(w), self.value(x));
                let n = tw.shape()[1];
                if self.wants(w) {
                    let acc = accumulate(&mut grads[w.0], tw.len());
                    for (i, gi) in g.iter().enumerate() {
                        let row = &mut acc[i * n..(i + 1) * n];
                        row.iter_mut().zip(tx.data()).for_each(|(s, xj)| *s += gi * xj);
                    }
                }
                if self.wants(x) {
                    let acc = accumulate(&mut grads[x.0], n);
                    for (i, gi) in g.iter().enumerate() {
                        let row = &tw.data()[i * n..(i + 1) * n];
                        acc.iter_mut().zip(row).for_each(|(s, wij)| *s += gi * wij);
                    }
                }
                if let Some(b) = b {
                    if self.wants(b) {
                        let acc = accumulate(&mut grads[b.0], g.len());
                        acc.iter_mut().zip(g).for_each(|(s, gi)| *s += gi);
                    }
                }
            }
            Op::Conv2d { input, kernel, bias } => {
                let (ti, tk) = (self.value(input), self.value(kernel));
                let [m, n, cin] = [ti.shape()[0], ti.shape()[1], ti.shape()[2]];
                let [kh, kw, _, cout] = [tk.shape()[0], tk.shape()[1], tk.shape()[2], tk.shape()[3]];
                let geom = ConvGeom { m, n, cin, cout, kh, kw };
                if let Some(b) = bias {
                    if self.wants(b) {
                        let acc = accumulate(&mut grads[b.0], cout);
                        for px in g.chunks_exact(cout) {
                            acc.iter_mut().zip(px).for_each(|(s, gi)| *s += gi);
                        }
                    }
                }
                if self.wants(kernel) {
                    let acc = accumulate(&mut grads[kernel.0], tk.len());
                    geom.for_each_tap(|out_base, in_base, k_base| {
                        let gpx = &g[out_base..out_base + cout];
                        for c in 0..cin {
                            let x = ti.data()[in_base + c];
                            let krow = &mut acc[k_base + c * cout..k_base + (c + 1) * cout];
                            krow.iter_mut().zip(gpx).for_each(|(s, go)| *s += x * go);
                        }
                    });
                }
                if self.wants(input) {
                    let acc = accumulate(&mut grads[input.0], ti.len());
                    geom.for_each_tap(|out_base, in_base, k_base| {
                        let gpx = &g[out_base..out_base + cout];
                        for c in 0..cin {
                            let krow = &tk.data()[k_base + c * cout..k_base + (c + 1) * cout];
                            let dot: f64 = krow.iter().zip(gpx).map(|(k, go)| k * go).sum();
                            acc[in_base + c] += dot;
                        }
                    });
                }
            }
            Op::Sigmoid(a) => {
                if self.wants(a) {
                    let y = node.value.data();
                    let acc = accumulate(&mut grads[a.0], g.len());
                    for k in 0..g.len() {
                        acc[k] += g[k] * y[k] * (1.0 - y[k]);
                    }
                }
            }
            Op::Tanh(a) => {
                if self.wants(a) {
                    let y = node.value.data();
                    let acc = accumulate(&mut grads[a.0], g.len());
                    for k in 0..g.len() {
                        acc[k] += g[k] * (1.0 - y[k] * y[k]);
                    }
                }
            }
            Op::Sum(a) => {
                if self.wants(a) {
                    let len = self.value(a).len();
                    let acc = accumulate(&mut grads[a.0], len);
                    acc.iter_mut().for_each(|s| *s += g[0]);
                }
            }
            Op::SumSquares(a) => {
                if self.wants(a) {
                    let x = self.value(a).data();
                    let acc = accumulate(&mut grads[a.0], x.len());
                    acc.iter_mut().zip(x).for_each(|(s, xi)| *s += 2.0 * xi * g[0]);
                }
            }
            Op::Repeat(a) => {
                if self.wants(a) {
                    let acc = accumulate(&mut grads[a.0], 1);
                    acc[0] += g.iter().sum::<f64>();
                }
            }
            Op::Reshape(a) => {
                if self.wants(a) {
                    let acc = accumulate(&mut grads[a.0], g.len());
                    acc.iter_mut().zip(g).for_each(|(s, gi)| *s += gi);
                }
            }
        }
    }
}

#[derive(Clone, Copy)]
struct ConvGeom {
    m: usize,
    n: usize,
    cin: usize,
    cout: usize,
    kh: usize,
    kw: usize,
}

impl ConvGeom {
    /// Visits every (output pixel, in-bounds kernel tap) pair with the flat
    /// offsets of the output pixel, the input pixel and the kernel tap.
    #[inline]
    fn for_each_tap(&self, mut f: impl FnMut(usize, usize, usize)) {
        let (ph, pw) = ((self.kh / 2) as isize, (self.kw / 2) as isize);
        for r in 0..self.m {
            for c in 0..self.n {
                let out_base = (r * self.n + c) * self.cout;
                for di in 0..self.kh {
                    let ir = r as isize + di as isize - ph;
                    if ir < 0 || ir >= self.m as isize {
                        continue;
                    }
                    for dj in 0..self.kw {
                        let ic = c as isize + dj as isize - pw;
                        if ic < 0 || ic >= self.n as isize {
                            continue;
                        }
                        let in_base = (ir as usize * self.n + ic as usize) * self.cin;
                        let k_base = (di * self.kw + dj) * self.cin * self.cout;
                        f(out_base, in_base, k_base);
                    }
                }
            }
        }
    }
}
